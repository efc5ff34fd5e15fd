//! Coalescing Brownian motions on a time grid.
//!
//! Paths are grouped into clusters of consecutive indices that have already
//! met. Over a step of length `Δ` each free cluster receives an independent
//! `N(0, Δ)` increment. Between grid points the engine uses Brownian-bridge
//! corrections: two adjacent clusters with gaps `d0, d1 > 0` at the ends of
//! the step met in between with probability `exp(-d0·d1/Δ)`, and a single
//! cluster at distances `d0, d1` from a point on the same side touched it
//! with probability `exp(-2·d0·d1/Δ)`.
//!
//! On a merge the cluster with the lower path index leads and the follower
//! takes its position, so the leader's marginal stays exactly Brownian.

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::branching::BranchingParams;
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Barrier behaviour of the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowBoundary {
    Free,
    /// Paths freeze at the first point they touch.
    Absorbing(Vec<f64>),
    /// Paths are kept on their side of every point by folding.
    Reflecting(Vec<f64>),
}

impl FlowBoundary {
    fn checked_points(points: &[f64]) -> Result<Vec<f64>> {
        if points.iter().any(|p| !p.is_finite()) {
            return domain("flow boundary points must be finite");
        }
        let mut pts = points.to_vec();
        pts.sort_by(f64::total_cmp);
        if pts.windows(2).any(|w| w[0] == w[1]) {
            return domain("flow boundary points must be distinct");
        }
        Ok(pts)
    }

    pub fn absorbing(points: &[f64]) -> Result<Self> {
        Ok(Self::Absorbing(Self::checked_points(points)?))
    }

    pub fn reflecting(points: &[f64]) -> Result<Self> {
        Ok(Self::Reflecting(Self::checked_points(points)?))
    }

    pub fn points(&self) -> &[f64] {
        match self {
            Self::Free => &[],
            Self::Absorbing(p) | Self::Reflecting(p) => p,
        }
    }
}

/// A block of coalesced paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    label: usize,
    len: usize,
    pos: f64,
    /// Unfolded coordinate for reflecting boundaries.
    free: f64,
    /// Number of reflecting points below the cluster.
    domain: usize,
    frozen: bool,
}

impl Cluster {
    /// Lowest path index in the cluster.
    pub fn label(&self) -> usize {
        self.label
    }

    /// Number of paths in the cluster.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn position(&self) -> f64 {
        self.pos
    }

    /// True once the cluster sits on an absorbing point.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

/// What happened during one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// `(leader, follower)` labels, in the order the merges were applied.
    pub merges: Vec<(usize, usize)>,
    /// Labels of clusters (as they were at the start of the step) that
    /// touched the watch window.
    pub visits: Vec<usize>,
}

fn fold(points: &[f64], domain: usize, u: f64) -> f64 {
    if domain == 0 {
        let p = points[0];
        p - (u - p).abs()
    } else if domain == points.len() {
        let p = points[domain - 1];
        p + (u - p).abs()
    } else {
        let (p, q) = (points[domain - 1], points[domain]);
        let width = q - p;
        let v = (u - p).rem_euclid(2.0 * width);
        if v <= width {
            p + v
        } else {
            p + 2.0 * width - v
        }
    }
}

/// Probability that a Brownian bridge of variance `dt` between two points at
/// distances `d0, d1` on the same side of a level touches it.
fn touch_probability(d0: f64, d1: f64, dt: f64) -> f64 {
    (-2.0 * d0 * d1 / dt).exp()
}

/// Incrementally stepped coalescing flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    boundary: FlowBoundary,
    clusters: Vec<Cluster>,
    paths: usize,
    time: f64,
}

impl FlowState {
    /// Starts must be nondecreasing; equal starts begin merged.
    pub fn new(starts: &[f64], boundary: FlowBoundary) -> Result<Self> {
        if starts.iter().any(|s| !s.is_finite()) {
            return domain("flow starts must be finite");
        }
        if starts.windows(2).any(|w| w[1] < w[0]) {
            return domain("flow starts must be nondecreasing");
        }
        let points = boundary.points();
        if matches!(boundary, FlowBoundary::Reflecting(_)) && starts.iter().any(|s| points.contains(s)) {
            return domain("reflecting flow: start on a barrier has no side");
        }
        let mut clusters: Vec<Cluster> = Vec::new();
        for (i, &s) in starts.iter().enumerate() {
            if let Some(last) = clusters.last_mut() {
                if last.pos == s {
                    last.len += 1;
                    continue;
                }
            }
            clusters.push(Cluster {
                label: i,
                len: 1,
                pos: s,
                free: s,
                domain: points.iter().filter(|&&p| p < s).count(),
                frozen: matches!(boundary, FlowBoundary::Absorbing(_)) && points.contains(&s),
            });
        }
        Ok(Self {
            boundary,
            clusters,
            paths: starts.len(),
            time: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn boundary(&self) -> &FlowBoundary {
        &self.boundary
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Number of paths the flow was started with.
    pub fn paths(&self) -> usize {
        self.paths
    }

    /// Positions of every remaining path, in index order.
    pub fn positions(&self) -> Vec<f64> {
        self.clusters
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.pos, c.len))
            .collect()
    }

    /// Drops the cluster with the given label; the others are unaffected.
    pub fn remove(&mut self, label: usize) -> bool {
        match self.clusters.iter().position(|c| c.label == label) {
            Some(k) => {
                self.clusters.remove(k);
                true
            }
            None => false,
        }
    }

    /// Advances by `dt`. With `watch = Some((lo, hi))` the report lists the
    /// clusters that touched `[lo, hi]` during the step.
    pub fn step<R: RngCore + ?Sized>(&mut self, dt: f64, watch: Option<(f64, f64)>, rng: &mut R) -> Result<StepReport> {
        if !(dt > 0.0) || !dt.is_finite() {
            return domain(format!("flow step must be > 0, got {dt}"));
        }
        if let Some((lo, hi)) = watch {
            if !(lo <= hi) {
                return domain("watch window needs lo <= hi");
            }
        }
        let sd = dt.sqrt();
        let start: Vec<f64> = self.clusters.iter().map(|c| c.pos).collect();
        let was_frozen: Vec<bool> = self.clusters.iter().map(|c| c.frozen).collect();
        let points = self.boundary.points().to_vec();

        for c in self.clusters.iter_mut().filter(|c| !c.frozen) {
            let z: f64 = StandardNormal.sample(rng);
            let inc = sd * z;
            match self.boundary {
                FlowBoundary::Free => c.pos += inc,
                FlowBoundary::Reflecting(_) => {
                    c.free += inc;
                    c.pos = fold(&points, c.domain, c.free);
                }
                FlowBoundary::Absorbing(_) => {
                    let (x0, x1) = (c.pos, c.pos + inc);
                    let crossed = if x1 > x0 {
                        points.iter().copied().find(|&p| p > x0 && p <= x1)
                    } else {
                        points.iter().rev().copied().find(|&p| p < x0 && p >= x1)
                    };
                    let touched = crossed.or_else(|| {
                        let below = points.iter().rev().copied().find(|&p| p < x0);
                        let above = points.iter().copied().find(|&p| p > x0);
                        [below, above].into_iter().flatten().find(|&p| {
                            let u: f64 = rng.random();
                            u < touch_probability((x0 - p).abs(), (x1 - p).abs(), dt)
                        })
                    });
                    match touched {
                        Some(p) => {
                            c.pos = p;
                            c.frozen = true;
                        }
                        None => c.pos = x1,
                    }
                }
            }
        }

        let mut report = StepReport::default();
        if let Some((lo, hi)) = watch {
            for (c, &x0) in self.clusters.iter().zip(&start) {
                let x1 = c.pos;
                let inside = |x: f64| lo <= x && x <= hi;
                let hit = if inside(x0) || inside(x1) || (x0 < lo) != (x1 < lo) {
                    true
                } else if c.frozen && x0 == x1 {
                    false
                } else {
                    let edge = if x0 < lo { lo } else { hi };
                    let u: f64 = rng.random();
                    u < touch_probability((x0 - edge).abs(), (x1 - edge).abs(), dt)
                };
                if hit {
                    report.visits.push(c.label);
                }
            }
        }

        // bridge merges between adjacent clusters that moved freely all step
        let n = self.clusters.len();
        let mut join = vec![false; n.saturating_sub(1)];
        for k in 0..join.len() {
            let (a, b) = (&self.clusters[k], &self.clusters[k + 1]);
            if was_frozen[k] || was_frozen[k + 1] || a.frozen || b.frozen || a.domain != b.domain {
                continue;
            }
            let d0 = start[k + 1] - start[k];
            let d1 = b.pos - a.pos;
            join[k] = d1 <= 0.0 || {
                let u: f64 = rng.random();
                u < (-d0 * d1 / dt).exp()
            };
        }
        self.merge_runs(&join, &mut report);

        // clusters frozen on the same point, or left out of order
        loop {
            let join: Vec<bool> = self
                .clusters
                .windows(2)
                .map(|w| w[0].domain == w[1].domain && w[1].pos <= w[0].pos)
                .collect();
            if !join.iter().any(|&j| j) {
                break;
            }
            self.merge_runs(&join, &mut report);
        }
        self.time += dt;
        Ok(report)
    }

    /// Collapses each run `k, k+1, ...` with `join[k]` set into its leader.
    fn merge_runs(&mut self, join: &[bool], report: &mut StepReport) {
        if !join.iter().any(|&j| j) {
            return;
        }
        let mut out: Vec<Cluster> = Vec::with_capacity(self.clusters.len());
        for (k, c) in self.clusters.drain(..).enumerate() {
            if k > 0 && join[k - 1] {
                let leader = out.last_mut().expect("run has a leader");
                leader.len += c.len;
                leader.frozen |= c.frozen;
                report.merges.push((leader.label, c.label));
            } else {
                out.push(c);
            }
        }
        self.clusters = out;
    }
}

/// Paths of a coalescing flow observed on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    starts: Vec<f64>,
    grid: Vec<f64>,
    /// `values[i][k]` is path `i` at `grid[k]`.
    values: Vec<Vec<f64>>,
    /// First grid index at which paths `i` and `i+1` share a cluster.
    adjacent_merge: Vec<Option<usize>>,
}

impl PathBundle {
    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Positions of every path at grid index `k`.
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }

    /// First grid index at which paths `i < j` are merged.
    pub fn merge_index(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if i == j {
            return Some(0);
        }
        self.adjacent_merge[i..j]
            .iter()
            .try_fold(0usize, |acc, m| m.map(|m| acc.max(m)))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] < 0.0 || !grid.iter().all(|g| g.is_finite()) {
        return domain("grid must be nonempty, finite and start at a time >= 0");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return domain("grid must be strictly increasing");
    }
    Ok(())
}

/// Coalescing Brownian motions from `starts` observed on `grid` (which must
/// begin at 0).
pub fn sample_coalescing_paths<R: RngCore + ?Sized>(
    starts: &[f64],
    grid: &[f64],
    boundary: FlowBoundary,
    rng: &mut R,
) -> Result<PathBundle> {
    check_grid(grid)?;
    if grid[0] != 0.0 {
        return domain("sample_coalescing_paths: grid must start at 0");
    }
    let mut state = FlowState::new(starts, boundary)?;
    let m = starts.len();
    let mut values: Vec<Vec<f64>> = (0..m).map(|_| Vec::with_capacity(grid.len())).collect();
    let mut adjacent_merge = vec![None; m.saturating_sub(1)];
    let mut record = |state: &FlowState, k: usize, values: &mut Vec<Vec<f64>>| {
        let mut i = 0;
        for c in state.clusters() {
            for j in 0..c.len() {
                values[i + j].push(c.position());
                if j > 0 && adjacent_merge[i + j - 1].is_none() {
                    adjacent_merge[i + j - 1] = Some(k);
                }
            }
            i += c.len();
        }
    };
    record(&state, 0, &mut values);
    for (k, w) in grid.windows(2).enumerate() {
        state.step(w[1] - w[0], None, rng)?;
        record(&state, k + 1, &mut values);
    }
    Ok(PathBundle {
        starts: starts.to_vec(),
        grid: grid.to_vec(),
        values,
        adjacent_merge,
    })
}

/// Which side of the anchor a one-sided reflected path lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// `anchor ∓ |W(t)|` on `grid`, exact at every grid time.
pub fn sample_one_sided_reflected<R: RngCore + ?Sized>(
    anchor: f64,
    side: Side,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let sign = match side {
        Side::Below => -1.0,
        Side::Above => 1.0,
    };
    let mut w = 0.0;
    let mut prev = 0.0;
    Ok(grid
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(rng);
            w += (t - prev).sqrt() * z;
            prev = t;
            anchor + sign * w.abs()
        })
        .collect())
}

/// `h(x) = Σ_j a_j 1{lo_j < x ≤ hi_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction<T> {
    pairs: Vec<(T, T)>,
    coefficients: Vec<T>,
}

impl<T: Scalar> StepFunction<T> {
    pub fn new(pairs: Vec<(T, T)>, coefficients: Vec<T>) -> Result<Self> {
        if pairs.len() != coefficients.len() {
            return domain("step function: one coefficient per pair");
        }
        if coefficients.iter().any(|a| !(*a >= T::zero()) || !a.is_finite()) {
            return domain("step function: coefficients must be finite and >= 0");
        }
        if pairs
            .iter()
            .any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return domain("step function: each pair needs finite lo <= hi");
        }
        Ok(Self { pairs, coefficients })
    }

    /// Pairs `(values[2j], values[2j+1])` taken from a sorted position list.
    pub fn from_positions(positions: &[T], coefficients: Vec<T>) -> Result<Self> {
        if positions.len() != 2 * coefficients.len() {
            return domain("step function: need two positions per coefficient");
        }
        let pairs = positions.chunks(2).map(|p| (p[0], p[1])).collect();
        Self::new(pairs, coefficients)
    }

    pub fn pairs(&self) -> &[(T, T)] {
        &self.pairs
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn eval(&self, x: T) -> T {
        self.pairs
            .iter()
            .zip(&self.coefficients)
            .filter(|((lo, hi), _)| *lo < x && x <= *hi)
            .fold(T::zero(), |acc, (_, &a)| acc + a)
    }
}

/// `∫ ψ_t(h(x)) dx` over a finite union of intervals, exactly.
pub fn step_integral_lebesgue<T: Scalar>(
    params: &BranchingParams<T>,
    t: T,
    sf: &StepFunction<T>,
    domain_intervals: &[(T, T)],
) -> Result<T> {
    let mut cuts: Vec<T> = sf.pairs.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));
    let mut total = T::zero();
    for &(a, b) in domain_intervals {
        if !(a <= b) {
            return domain("step_integral_lebesgue: domain intervals need a <= b");
        }
        let mut left = a;
        for c in cuts
            .iter()
            .copied()
            .filter(|&c| c > a && c < b)
            .chain(std::iter::once(b))
        {
            if c > left {
                let level = sf.eval((left + c) / T::lit(2.0));
                if level > T::zero() {
                    total = total + params.psi(t, level)? * (c - left);
                }
                left = c;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{coalesce_state, simulate_walk_observed, BoundarySpec, Site};
    use crate::stats::{mean_stderr, normal_cdf};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> crate::Rng {
        crate::Rng::seed_from_u64(seed)
    }

    fn uniform_grid(t: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|k| t * k as f64 / steps as f64).collect()
    }

    #[test]
    fn trivial_grid_returns_starts() {
        let b = sample_coalescing_paths(&[-1.0, 0.5, 2.0], &[0.0], FlowBoundary::Free, &mut rng(1)).unwrap();
        assert_eq!(b.at(0), vec![-1.0, 0.5, 2.0]);
    }

    #[test]
    fn bad_inputs() {
        assert!(sample_coalescing_paths(&[1.0, 0.0], &[0.0, 1.0], FlowBoundary::Free, &mut rng(1)).is_err());
        assert!(sample_coalescing_paths(&[0.0], &[0.0, 0.0], FlowBoundary::Free, &mut rng(1)).is_err());
        let refl = FlowBoundary::reflecting(&[0.0, 4.0]).unwrap();
        assert!(sample_coalescing_paths(&[0.0, 1.0], &[0.0, 1.0], refl, &mut rng(1)).is_err());
        assert!(FlowBoundary::absorbing(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn merge_probability_matches_hitting_law() {
        let (d, t) = (1.0, 1.0);
        let grid = uniform_grid(t, 50);
        let n = 100_000;
        let mut r = rng(2);
        let merged = (0..n)
            .filter(|_| {
                let b = sample_coalescing_paths(&[0.0, d], &grid, FlowBoundary::Free, &mut r).unwrap();
                b.merge_index(0, 1).is_some()
            })
            .count();
        let p = 2.0 * (1.0 - normal_cdf(d / (2.0 * t).sqrt()));
        let freq = merged as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "{freq} vs {p}");
    }

    #[test]
    fn absorbed_paths_stay_on_the_barrier() {
        let grid = uniform_grid(4.0, 200);
        let mut r = rng(3);
        for _ in 0..200 {
            let b = sample_coalescing_paths(
                &[-0.5, 0.3, 1.5],
                &grid,
                FlowBoundary::absorbing(&[0.0, 1.0]).unwrap(),
                &mut r,
            )
            .unwrap();
            for i in 0..b.len() {
                let p = b.path(i);
                if let Some(k) = p.iter().position(|&x| x == 0.0 || x == 1.0) {
                    assert!(p[k..].iter().all(|&x| x == p[k]));
                }
            }
        }
    }

    #[test]
    fn absorbed_hitting_probability() {
        // P(BM from 0 touches 1 by time 1) = 2(1 - Φ(1))
        let grid = uniform_grid(1.0, 20);
        let n = 50_000;
        let mut r = rng(4);
        let hits = (0..n)
            .filter(|_| {
                let b =
                    sample_coalescing_paths(&[0.0], &grid, FlowBoundary::absorbing(&[1.0]).unwrap(), &mut r).unwrap();
                *b.path(0).last().unwrap() == 1.0
            })
            .count();
        let p = 2.0 * (1.0 - normal_cdf(1.0));
        let freq = hits as f64 / n as f64;
        assert!(
            (freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "{freq} vs {p}"
        );
    }

    #[test]
    fn reflected_paths_keep_their_side() {
        let grid = uniform_grid(2.0, 100);
        let mut r = rng(5);
        let bnd = FlowBoundary::reflecting(&[0.0, 2.0]).unwrap();
        for _ in 0..500 {
            let b = sample_coalescing_paths(&[-0.5, 0.5, 1.0, 3.0], &grid, bnd.clone(), &mut r).unwrap();
            assert!(b.path(0).iter().all(|&x| x <= 0.0));
            assert!(b.path(1).iter().chain(b.path(2)).all(|&x| (0.0..=2.0).contains(&x)));
            assert!(b.path(3).iter().all(|&x| x >= 2.0));
            assert_eq!(b.merge_index(0, 1), None);
            assert_eq!(b.merge_index(2, 3), None);
        }
    }

    #[test]
    fn reflected_single_path_marginal() {
        // one particle reflected into [0, 1]: stationary uniform for large t
        let grid = uniform_grid(4.0, 40);
        let mut r = rng(6);
        let bnd = FlowBoundary::reflecting(&[0.0, 1.0]).unwrap();
        let ends: Vec<f64> = (0..20_000)
            .map(|_| {
                *sample_coalescing_paths(&[0.25], &grid, bnd.clone(), &mut r)
                    .unwrap()
                    .path(0)
                    .last()
                    .unwrap()
            })
            .collect();
        let ks = crate::stats::ks_one_sample(&ends, |x| x.clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn one_sided_reflected_law() {
        let grid = [0.0, 0.5, 1.0];
        let mut r = rng(7);
        let n = 100_000;
        let mut dev = Vec::with_capacity(n);
        for _ in 0..n {
            let p = sample_one_sided_reflected(2.0, Side::Below, &grid, &mut r).unwrap();
            assert_eq!(p[0], 2.0);
            assert!(p.iter().all(|&y| y <= 2.0));
            dev.push(2.0 - p[2]);
        }
        let (m, se) = mean_stderr(&dev);
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m - expect).abs() < 3.0 * se, "{m} vs {expect}");
        let p = sample_one_sided_reflected(-1.0, Side::Above, &grid, &mut r).unwrap();
        assert!(p.iter().all(|&y| y >= -1.0));
    }

    #[test]
    fn leader_keeps_brownian_marginal() {
        let grid = uniform_grid(1.0, 20);
        let mut r = rng(8);
        let ends: Vec<f64> = (0..20_000)
            .map(|_| {
                sample_coalescing_paths(&[0.0, 0.3], &grid, FlowBoundary::Free, &mut r)
                    .unwrap()
                    .path(0)[20]
            })
            .collect();
        let ks = crate::stats::ks_one_sample(&ends, normal_cdf);
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn watch_window_visits() {
        // P(BM from -1 touches [0, 1] by time 1) = 2(1 - Φ(1))
        let mut r = rng(9);
        let n = 50_000;
        let visits = (0..n)
            .filter(|_| {
                let mut s = FlowState::new(&[-1.0], FlowBoundary::Free).unwrap();
                (0..10).any(|_| !s.step(0.1, Some((0.0, 1.0)), &mut r).unwrap().visits.is_empty())
            })
            .count();
        let p = 2.0 * (1.0 - normal_cdf(1.0));
        let freq = visits as f64 / n as f64;
        assert!(
            (freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "{freq} vs {p}"
        );
    }

    #[test]
    fn remove_leaves_others() {
        let mut s = FlowState::new(&[0.0, 5.0, 10.0], FlowBoundary::Free).unwrap();
        assert!(s.remove(1));
        assert!(!s.remove(1));
        assert_eq!(s.positions(), vec![0.0, 10.0]);
    }

    #[test]
    fn lattice_scaling_merge_times() {
        // gap 1 in continuum units; lattice rescaled by space/√k, time k
        let k = 400.0f64;
        let gap = k.sqrt() as i64;
        let horizon = 4.0;
        let mut r = rng(10);
        let n = 10_000;
        let mut times = Vec::new();
        for _ in 0..n {
            let start = coalesce_state(&[Site::int(0), Site::int(gap)]).unwrap();
            let mut hit = None;
            simulate_walk_observed(&BoundarySpec::free(), &start, k * horizon, &mut r, |time, reps| {
                if hit.is_none() && reps.len() == 1 {
                    hit = Some(time / k);
                }
            })
            .unwrap();
            if let Some(t) = hit {
                times.push(t);
            }
        }
        times.sort_by(f64::total_cmp);
        let cdf = |t: f64| 2.0 * (1.0 - normal_cdf(1.0 / (2.0 * t).sqrt()));
        let nf = n as f64;
        let mut dist: f64 = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let f = cdf(t);
            dist = dist.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
        }
        dist = dist.max((cdf(horizon) - times.len() as f64 / nf).abs());
        assert!(dist < 0.05, "KS distance {dist}");
    }

    #[test]
    fn step_integral_examples() {
        let p: BranchingParams<f64> = BranchingParams::new(2.0, 1.0).unwrap();
        let zero = StepFunction::new(vec![(-1.0, 1.0)], vec![0.0]).unwrap();
        assert_eq!(step_integral_lebesgue(&p, 1.0, &zero, &[(-5.0, 5.0)]).unwrap(), 0.0);
        let one = StepFunction::new(vec![(-1.0, 2.0)], vec![1.5]).unwrap();
        let v = step_integral_lebesgue(&p, 1.0, &one, &[(-5.0, 5.0)]).unwrap();
        assert!((v - p.psi(1.0, 1.5).unwrap() * 3.0).abs() < 1e-14);
        let merged = StepFunction::new(vec![(0.5, 0.5)], vec![3.0]).unwrap();
        assert_eq!(step_integral_lebesgue(&p, 1.0, &merged, &[(-5.0, 5.0)]).unwrap(), 0.0);
        // overlapping pairs stack, domain clips
        let two = StepFunction::new(vec![(-1.0, 1.0), (0.0, 3.0)], vec![1.0, 2.0]).unwrap();
        let v = step_integral_lebesgue(&p, 1.0, &two, &[(-2.0, 2.0)]).unwrap();
        let psi = |z: f64| p.psi(1.0, z).unwrap();
        assert!((v - (psi(1.0) + psi(3.0) + psi(2.0))).abs() < 1e-14);
        let p32: BranchingParams<f32> = BranchingParams::new(2.0, 1.0).unwrap();
        let s32 = StepFunction::new(vec![(-1.0f32, 1.0)], vec![1.0]).unwrap();
        assert!((step_integral_lebesgue(&p32, 1.0, &s32, &[(-2.0, 2.0)]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn step_eval_is_right_closed() {
        let s = StepFunction::new(vec![(0.0, 1.0)], vec![2.0]).unwrap();
        assert_eq!(s.eval(0.0), 0.0);
        assert_eq!(s.eval(1.0), 2.0);
        assert!(StepFunction::new(vec![(1.0, 0.0)], vec![1.0]).is_err());
        assert!(StepFunction::new(vec![(0.0, 1.0)], vec![-1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn paths_never_cross_and_merges_are_permanent(
            mut starts in proptest::collection::vec(-5.0f64..5.0, 1..8),
            seed in 0u64..1000,
            absorbing in any::<bool>(),
        ) {
            starts.sort_by(f64::total_cmp);
            let grid = uniform_grid(2.0, 40);
            let bnd = if absorbing { FlowBoundary::absorbing(&[-1.0, 1.5]).unwrap() } else { FlowBoundary::Free };
            let b = sample_coalescing_paths(&starts, &grid, bnd, &mut rng(seed)).unwrap();
            for k in 0..grid.len() {
                let col = b.at(k);
                prop_assert!(col.windows(2).all(|w| w[0] <= w[1]));
            }
            for i in 0..b.len() {
                for j in i + 1..b.len() {
                    if let Some(k) = b.merge_index(i, j) {
                        prop_assert!((k..grid.len()).all(|q| b.path(i)[q] == b.path(j)[q]));
                    }
                }
            }
        }
    }
}
