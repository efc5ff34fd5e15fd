//! SCBM sample paths from branching excursions carried by a coalescing flow.
//!
//! Only excursions alive at the first observation time `t0` matter after
//! `t0`. Their number is Poisson with mean `μ(ℝ)·ψ_{t0}(∞)` and their masses
//! at `t0` are i.i.d. entrance-law draws. Their positions at `t0` are those
//! of coalescing Brownian motions run from the birth locations over
//! `[0, t0]`, so the flow is simulated from time 0 and atoms that meet before
//! `t0` already carry summed masses at `t0`. From `t0` on each cluster's mass
//! is a CSBP; merged clusters add their masses.

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Poisson};

use crate::branching::{CsbpSampler, MassValue};
use crate::error::{domain, Result};
use crate::flow::{FlowBoundary, FlowState, StepFunction};
use crate::scalar::Scalar;

/// Initial measure: Lebesgue mass on disjoint intervals plus point masses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasureSpec {
    intervals: Vec<(f64, f64)>,
    atoms: Vec<(f64, f64)>,
}

impl MeasureSpec {
    pub fn new(mut intervals: Vec<(f64, f64)>, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if intervals
            .iter()
            .any(|&(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return domain("measure: intervals need finite a <= b");
        }
        if atoms
            .iter()
            .any(|&(x, m)| !x.is_finite() || !(m > 0.0) || !m.is_finite())
        {
            return domain("measure: atoms need finite location and positive mass");
        }
        intervals.retain(|&(a, b)| b > a);
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        if intervals.windows(2).any(|w| w[1].0 < w[0].1) {
            return domain("measure: intervals must be disjoint");
        }
        Ok(Self { intervals, atoms })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Lebesgue measure on `[a, b]`.
    pub fn lebesgue(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)], Vec::new())
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn lebesgue_mass(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.lebesgue_mass() + self.atoms.iter().map(|(_, m)| m).sum::<f64>()
    }

    /// `μ([u, v])`.
    pub fn mass_in(&self, u: f64, v: f64) -> f64 {
        let leb: f64 = self
            .intervals
            .iter()
            .map(|&(a, b)| (b.min(v) - a.max(u)).max(0.0))
            .sum();
        leb + self
            .atoms
            .iter()
            .filter(|(x, _)| u <= *x && *x <= v)
            .map(|(_, m)| m)
            .sum::<f64>()
    }

    /// A point drawn from the normalised Lebesgue part.
    fn sample_lebesgue<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u = rng.random::<f64>() * self.lebesgue_mass();
        for &(a, b) in &self.intervals {
            if u < b - a {
                return a + u;
            }
            u -= b - a;
        }
        self.intervals.last().map_or(0.0, |&(_, b)| b)
    }
}

/// One excursion alive at `t0`, or a deterministic atom for `γ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionAtom {
    pub birth_location: f64,
    /// Mass at `t0` and, once evolved alone, at later grid times.
    pub mass_path: Vec<MassValue<f64>>,
    pub alive: bool,
}

impl ExcursionAtom {
    pub fn initial_mass(&self) -> f64 {
        self.mass_path.first().map_or(0.0, |m| m.get())
    }
}

/// Excursions of the Poisson representation alive at `t0`.
pub fn init_atoms<R: RngCore + ?Sized>(
    mu: &MeasureSpec,
    t0: f64,
    sampler: &CsbpSampler,
    rng: &mut R,
) -> Result<Vec<ExcursionAtom>> {
    if !(t0 > 0.0) {
        return domain(format!("init_atoms: t0 must be > 0, got {t0}"));
    }
    let theta = sampler.params().psi_inf(t0)?;
    let draw_count = |mass: f64, rng: &mut R| -> u64 {
        if mass * theta > 0.0 {
            Poisson::new(mass * theta).expect("positive mean").sample(rng) as u64
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let n = draw_count(mu.lebesgue_mass(), rng);
    for _ in 0..n {
        let x = mu.sample_lebesgue(rng);
        out.push((x, sampler.entrance_mass(t0, rng)?));
    }
    for &(x, m) in mu.atoms() {
        for _ in 0..draw_count(m, rng) {
            out.push((x, sampler.entrance_mass(t0, rng)?));
        }
    }
    out.into_iter()
        .map(|(x, m)| {
            Ok(ExcursionAtom {
                birth_location: x,
                mass_path: vec![MassValue::new(m)?],
                alive: m > 0.0,
            })
        })
        .collect()
}

/// Deterministic atoms for `γ = 0`: each interval of length `ℓ` becomes
/// `k + 1` equally spaced atoms (endpoints included) of mass `ℓ / (k + 1)`,
/// with spacing at most `resolution`.
pub fn discretize_measure(mu: &MeasureSpec, resolution: f64) -> Result<Vec<ExcursionAtom>> {
    if !(resolution > 0.0) {
        return domain("discretize_measure: resolution must be > 0");
    }
    let mut out = Vec::new();
    let mut push = |x: f64, m: f64| -> Result<()> {
        out.push(ExcursionAtom {
            birth_location: x,
            mass_path: vec![MassValue::new(m)?],
            alive: true,
        });
        Ok(())
    };
    for &(a, b) in mu.intervals() {
        let k = ((b - a) / resolution).ceil().max(1.0) as usize;
        let m = (b - a) / (k + 1) as f64;
        for i in 0..=k {
            push(a + (b - a) * i as f64 / k as f64, m)?;
        }
    }
    for &(x, m) in mu.atoms() {
        push(x, m)?;
    }
    Ok(out)
}

/// Finitely many atoms with positive masses, sorted by location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    /// Zero-mass atoms are dropped.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.retain(|&(_, m)| m > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { atoms }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    /// `⟨X, h⟩` for a step function.
    pub fn integrate(&self, h: &StepFunction<f64>) -> f64 {
        self.atoms.iter().map(|&(x, m)| m * h.eval(x)).sum()
    }
}

/// `X([u, v])`, closed at both ends.
pub fn window_mass(measure: &AtomicMeasure, u: f64, v: f64) -> Result<MassValue<f64>> {
    if !(u <= v) {
        return domain(format!("window_mass: need u <= v, got [{u}, {v}]"));
    }
    MassValue::new(
        measure
            .atoms
            .iter()
            .filter(|(x, _)| u <= *x && *x <= v)
            .map(|(_, m)| m)
            .sum(),
    )
}

/// Tuning of [`evolve_scbm`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Largest flow/branching step; grid intervals are subdivided to fit.
    pub max_step: f64,
    /// Window whose visits by living clusters are recorded.
    pub watch: Option<(f64, f64)>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            max_step: 0.01,
            watch: None,
        }
    }
}

/// Snapshots of an SCBM on its observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScbmPath {
    pub grid: Vec<f64>,
    pub measures: Vec<AtomicMeasure>,
    /// `visits[k]`: a living cluster touched the watch window during
    /// `(grid[k], grid[k+1]]`.
    pub visits: Vec<bool>,
    /// A cluster touched the watch window before `grid[0]`.
    pub early_visit: bool,
}

impl ScbmPath {
    /// True if the watch window was touched during `(0, t]`.
    pub fn visited_by(&self, t: f64) -> bool {
        self.early_visit || self.grid.windows(2).zip(&self.visits).any(|(w, &v)| v && w[0] < t)
    }
}

fn substeps(dt: f64, max_step: f64) -> (usize, f64) {
    let k = (dt / max_step).ceil().max(1.0) as usize;
    (k, dt / k as f64)
}

/// Evolves atoms on `grid` (whose first point is `t0`) under the flow with
/// the given boundary. Positions start at the birth locations at time 0.
pub fn evolve_scbm<R: RngCore + ?Sized>(
    atoms: &[ExcursionAtom],
    grid: &[f64],
    boundary: FlowBoundary,
    sampler: &CsbpSampler,
    options: &EvolveOptions,
    rng: &mut R,
) -> Result<ScbmPath> {
    if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("evolve_scbm: grid must be nonempty, start at t0 >= 0 and increase");
    }
    if !(options.max_step > 0.0) {
        return domain("evolve_scbm: max_step must be > 0");
    }
    if matches!(boundary, FlowBoundary::Reflecting(_)) {
        return domain("evolve_scbm: SCBM motion is free or absorbing");
    }
    let mut live: Vec<&ExcursionAtom> = atoms.iter().filter(|a| a.alive && a.initial_mass() > 0.0).collect();
    live.sort_by(|a, b| a.birth_location.total_cmp(&b.birth_location));
    let starts: Vec<f64> = live.iter().map(|a| a.birth_location).collect();
    let mut flow = FlowState::new(&starts, boundary)?;
    let mut mass: Vec<f64> = live.iter().map(|a| a.initial_mass()).collect();
    // clusters that start merged pool their masses in the leader
    for c in flow.clusters() {
        let total: f64 = mass[c.label()..c.label() + c.len()].iter().sum();
        mass[c.label()] = total;
    }
    let watch = options.watch;

    let apply = |mass: &mut Vec<f64>, merges: &[(usize, usize)]| {
        for &(leader, follower) in merges {
            let m = mass[follower];
            mass[follower] = 0.0;
            mass[leader] += m;
        }
    };

    let mut early_visit = false;
    if grid[0] > 0.0 {
        let (k, h) = substeps(grid[0], options.max_step);
        for _ in 0..k {
            let report = flow.step(h, watch, rng)?;
            early_visit |= !report.visits.is_empty();
            apply(&mut mass, &report.merges);
        }
    }
    let snapshot = |flow: &FlowState, mass: &[f64]| {
        AtomicMeasure::new(
            flow.clusters()
                .iter()
                .map(|c| (c.position(), mass[c.label()]))
                .collect(),
        )
    };

    let mut measures = Vec::with_capacity(grid.len());
    let mut visits = Vec::with_capacity(grid.len().saturating_sub(1));
    measures.push(snapshot(&flow, &mass));
    for w in grid.windows(2) {
        let (k, h) = substeps(w[1] - w[0], options.max_step);
        let mut visited = false;
        for _ in 0..k {
            if flow.clusters().is_empty() {
                break;
            }
            let report = flow.step(h, watch, rng)?;
            visited |= !report.visits.is_empty();
            apply(&mut mass, &report.merges);
            let labels: Vec<usize> = flow.clusters().iter().map(|c| c.label()).collect();
            for label in labels {
                mass[label] = sampler.transition(h, mass[label], rng)?;
                if mass[label] == 0.0 {
                    flow.remove(label);
                }
            }
        }
        visits.push(visited);
        measures.push(snapshot(&flow, &mass));
    }
    Ok(ScbmPath {
        grid: grid.to_vec(),
        measures,
        visits,
        early_visit,
    })
}

/// Time integral of the window mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupation {
    pub value: f64,
    /// Window mass was zero at every grid time used.
    pub never_charged: bool,
}

/// Trapezoidal `∫_{t0}^{t} X_s([u, v]) ds` on the path grid.
pub fn occupation_time(path: &ScbmPath, u: f64, v: f64, up_to: f64) -> Result<Occupation> {
    let grid = &path.grid;
    if up_to < grid[0] || up_to > *grid.last().expect("nonempty grid") {
        return domain("occupation_time: the grid must cover [t0, t]");
    }
    let masses: Vec<f64> = path
        .measures
        .iter()
        .map(|m| window_mass(m, u, v).map(|x| x.get()))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut never_charged = masses[0] == 0.0;
    for (k, w) in grid.windows(2).enumerate() {
        if w[0] >= up_to {
            break;
        }
        let (m0, m1) = (masses[k], masses[k + 1]);
        if w[1] <= up_to {
            value += 0.5 * (m0 + m1) * (w[1] - w[0]);
            never_charged &= m1 == 0.0;
        } else {
            let f = (up_to - w[0]) / (w[1] - w[0]);
            let mt = m0 + f * (m1 - m0);
            value += 0.5 * (m0 + mt) * (up_to - w[0]);
        }
    }
    Ok(Occupation { value, never_charged })
}

/// Last grid time with positive mass in `[-g(t), g(t)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionTime {
    pub time: f64,
    /// Mass was still present at the final grid time.
    pub censored: bool,
}

pub fn extinction_time(path: &ScbmPath, g: &GrowthFunction<f64>) -> Result<ExtinctionTime> {
    let mut time = 0.0;
    let mut censored = false;
    for (k, (&t, m)) in path.grid.iter().zip(&path.measures).enumerate() {
        let r = g.eval(t);
        if window_mass(m, -r, r)?.get() > 0.0 {
            time = t;
            censored = k + 1 == path.grid.len();
        }
    }
    Ok(ExtinctionTime { time, censored })
}

/// Nonnegative, nondecreasing, right-continuous `g` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthFunction<T> {
    Constant(T),
    /// `scale · t^exponent`.
    Power {
        scale: T,
        exponent: T,
    },
    /// `base^t`.
    Exponential {
        base: T,
    },
    /// `values[i]` on `[times[i], times[i+1])`, with `times[0] = 0`.
    Step {
        times: Vec<T>,
        values: Vec<T>,
    },
    Min(Box<GrowthFunction<T>>, Box<GrowthFunction<T>>),
    Max(Box<GrowthFunction<T>>, Box<GrowthFunction<T>>),
}

impl<T: Scalar> GrowthFunction<T> {
    pub fn constant(c: T) -> Result<Self> {
        if !(c >= T::zero()) || !c.is_finite() {
            return domain("growth: constant must be finite and >= 0");
        }
        Ok(Self::Constant(c))
    }

    pub fn power(scale: T, exponent: T) -> Result<Self> {
        if !(scale >= T::zero()) || !(exponent >= T::zero()) || !scale.is_finite() || !exponent.is_finite() {
            return domain("growth: power needs finite scale >= 0 and exponent >= 0");
        }
        Ok(Self::Power { scale, exponent })
    }

    pub fn exponential(base: T) -> Result<Self> {
        if !(base >= T::one()) || !base.is_finite() {
            return domain("growth: exponential base must be finite and >= 1");
        }
        Ok(Self::Exponential { base })
    }

    pub fn step(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times[0] != T::zero() {
            return domain("growth: step needs matching times/values with times[0] = 0");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return domain("growth: step times must be finite and increasing");
        }
        if values.windows(2).any(|w| w[1] < w[0]) || values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return domain("growth: step values must be finite, >= 0 and nondecreasing");
        }
        Ok(Self::Step { times, values })
    }

    pub fn min(self, other: Self) -> Self {
        Self::Min(Box::new(self), Box::new(other))
    }

    pub fn max(self, other: Self) -> Self {
        Self::Max(Box::new(self), Box::new(other))
    }

    pub fn eval(&self, t: T) -> T {
        let t = t.max(T::zero());
        match self {
            Self::Constant(c) => *c,
            Self::Power { scale, exponent } => *scale * t.powf(*exponent),
            Self::Exponential { base } => base.powf(t),
            Self::Step { times, values } => values[times.iter().rposition(|&s| s <= t).unwrap_or(0)],
            Self::Min(a, b) => a.eval(t).min(b.eval(t)),
            Self::Max(a, b) => a.eval(t).max(b.eval(t)),
        }
    }

    /// `g(t-)`; equal to `g(t)` away from jumps.
    pub fn left_limit(&self, t: T) -> T {
        match self {
            Self::Step { times, values } => values[times.iter().rposition(|&s| s < t).unwrap_or(0)],
            Self::Min(a, b) => a.left_limit(t).min(b.left_limit(t)),
            Self::Max(a, b) => a.left_limit(t).max(b.left_limit(t)),
            _ => self.eval(t),
        }
    }

    /// Jump locations inside `(lo, hi)`.
    pub fn breakpoints(&self, lo: T, hi: T) -> Vec<T> {
        let mut out = match self {
            Self::Step { times, .. } => times.iter().copied().filter(|&s| s > lo && s < hi).collect(),
            Self::Min(a, b) | Self::Max(a, b) => {
                let mut v = a.breakpoints(lo, hi);
                v.extend(b.breakpoints(lo, hi));
                v
            }
            _ => Vec::new(),
        };
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        out.dedup();
        out
    }

    /// Checks `g(s) ≤ g(t)` along consecutive points of `grid`.
    pub fn is_monotone_on(&self, grid: &[T]) -> bool {
        grid.windows(2).all(|w| self.eval(w[0]) <= self.eval(w[1]))
    }
}

/// Atoms alive at `t0` for every `γ`: excursions when `γ > 0`, otherwise
/// the deterministic discretisation at `resolution`.
pub fn initial_atoms<R: RngCore + ?Sized>(
    mu: &MeasureSpec,
    t0: f64,
    sampler: &CsbpSampler,
    resolution: f64,
    rng: &mut R,
) -> Result<Vec<ExcursionAtom>> {
    if sampler.params().branches() {
        init_atoms(mu, t0, sampler, rng)
    } else {
        discretize_measure(mu, resolution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean_stderr};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> crate::Rng {
        crate::Rng::seed_from_u64(seed)
    }

    fn sampler(gamma: f64) -> CsbpSampler {
        CsbpSampler::new(crate::branching::BranchingParams::new(gamma, 1.0).unwrap()).unwrap()
    }

    fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
    }

    #[test]
    fn measure_validation() {
        assert!(MeasureSpec::new(vec![(0.0, 2.0), (1.0, 3.0)], vec![]).is_err());
        assert!(MeasureSpec::new(vec![], vec![(0.0, 0.0)]).is_err());
        let m = MeasureSpec::new(vec![(2.0, 3.0), (-1.0, 1.0)], vec![(5.0, 0.5)]).unwrap();
        assert_eq!(m.total_mass(), 3.5);
        assert_eq!(m.mass_in(0.0, 2.5), 1.5);
    }

    #[test]
    fn init_atoms_examples() {
        let s = sampler(2.0);
        assert!(init_atoms(&MeasureSpec::empty(), 1.0, &s, &mut rng(1))
            .unwrap()
            .is_empty());
        assert!(init_atoms(&MeasureSpec::empty(), 0.0, &s, &mut rng(1)).is_err());
        let mu = MeasureSpec::lebesgue(-1.0, 1.0).unwrap();
        let mut r = rng(2);
        let counts: Vec<f64> = (0..20_000)
            .map(|_| {
                let atoms = init_atoms(&mu, 1.0, &s, &mut r).unwrap();
                assert!(atoms
                    .iter()
                    .all(|a| a.initial_mass() > 0.0 && a.birth_location.abs() <= 1.0));
                atoms.len() as f64
            })
            .collect();
        let (m, se) = mean_stderr(&counts);
        assert!((m - 2.0).abs() < 3.0 * se, "{m}");
    }

    #[test]
    fn discretisation_keeps_mass() {
        let mu = MeasureSpec::new(vec![(-3.0, -1.0), (1.0, 3.0)], vec![(0.0, 0.25)]).unwrap();
        let atoms = discretize_measure(&mu, 0.1).unwrap();
        let total: f64 = atoms.iter().map(|a| a.initial_mass()).sum();
        assert!((total - mu.total_mass()).abs() < 1e-12);
        assert!(atoms.iter().any(|a| a.birth_location == -1.0));
    }

    #[test]
    fn window_mass_examples() {
        assert_eq!(window_mass(&AtomicMeasure::default(), -1.0, 1.0).unwrap().get(), 0.0);
        let m = AtomicMeasure::new(vec![(0.0, 2.0)]);
        assert_eq!(window_mass(&m, -1.0, 1.0).unwrap().get(), 2.0);
        let m = AtomicMeasure::new(vec![(1.0, 0.5), (3.0, 0.0)]);
        assert_eq!(m.len(), 1);
        assert_eq!(window_mass(&m, -1.0, 1.0).unwrap().get(), 0.5);
        assert!(window_mass(&m, 1.0, -1.0).is_err());
    }

    #[test]
    fn single_atom_mass_matches_csbp_path() {
        let s = sampler(2.0);
        let g = [0.5, 1.0, 1.5];
        let mut r = rng(3);
        let atom = ExcursionAtom {
            birth_location: 0.0,
            mass_path: vec![MassValue::new(1.0).unwrap()],
            alive: true,
        };
        let opts = EvolveOptions {
            max_step: 0.05,
            watch: None,
        };
        let engine: Vec<f64> = (0..10_000)
            .map(|_| {
                let p = evolve_scbm(std::slice::from_ref(&atom), &g, FlowBoundary::Free, &s, &opts, &mut r).unwrap();
                p.measures[2].total_mass()
            })
            .collect();
        let direct: Vec<f64> = (0..10_000).map(|_| s.path(1.0, &[1.0], &mut r).unwrap()[0]).collect();
        let ks = ks_two_sample(&engine, &direct);
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn total_mass_laplace_transform() {
        // total mass at t is a CSBP from μ(ℝ) = 2 regardless of coalescence
        let s = sampler(2.0);
        let mu = MeasureSpec::lebesgue(-1.0, 1.0).unwrap();
        let (t0, t, z) = (0.5, 1.5, 1.0);
        let opts = EvolveOptions {
            max_step: 0.05,
            watch: None,
        };
        let mut r = rng(4);
        let vals: Vec<f64> = (0..10_000)
            .map(|_| {
                let atoms = init_atoms(&mu, t0, &s, &mut r).unwrap();
                let p = evolve_scbm(&atoms, &[t0, t], FlowBoundary::Free, &s, &opts, &mut r).unwrap();
                let counts: Vec<usize> = p.measures.iter().map(|m| m.len()).collect();
                assert!(counts.windows(2).all(|w| w[1] <= w[0]));
                (-z * p.measures[1].total_mass()).exp()
            })
            .collect();
        let (m, se) = mean_stderr(&vals);
        let exact = (-2.0 * s.params().psi(t, z).unwrap()).exp();
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact}");
    }

    #[test]
    fn absorbed_atoms_keep_branching() {
        let s = sampler(2.0);
        let atom = ExcursionAtom {
            birth_location: 0.0,
            mass_path: vec![MassValue::new(5.0).unwrap()],
            alive: true,
        };
        let mut r = rng(5);
        let b = FlowBoundary::absorbing(&[0.0]).unwrap();
        let p = evolve_scbm(&[atom], &grid(0.0, 0.5, 5), b, &s, &EvolveOptions::default(), &mut r).unwrap();
        let masses: Vec<f64> = p.measures.iter().map(|m| m.total_mass()).collect();
        assert!(p.measures.iter().all(|m| m.atoms().iter().all(|a| a.0 == 0.0)));
        assert!(masses.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn occupation_examples() {
        let s = sampler(0.0);
        let far = discretize_measure(&MeasureSpec::new(vec![], vec![(50.0, 1.0)]).unwrap(), 1.0).unwrap();
        let mut r = rng(6);
        let p = evolve_scbm(
            &far,
            &grid(0.0, 1.0, 10),
            FlowBoundary::Free,
            &s,
            &EvolveOptions::default(),
            &mut r,
        )
        .unwrap();
        let o = occupation_time(&p, -1.0, 1.0, 1.0).unwrap();
        assert_eq!(
            o,
            Occupation {
                value: 0.0,
                never_charged: true
            }
        );
        // an immortal unit atom held on an absorbing point inside the window
        let held = discretize_measure(&MeasureSpec::new(vec![], vec![(0.0, 1.0)]).unwrap(), 1.0).unwrap();
        let b = FlowBoundary::absorbing(&[0.0]).unwrap();
        let g = grid(0.5, 2.0, 30);
        let p = evolve_scbm(&held, &g, b, &s, &EvolveOptions::default(), &mut r).unwrap();
        let o = occupation_time(&p, -1.0, 1.0, 2.0).unwrap();
        assert!((o.value - 1.5).abs() < 1e-12 && !o.never_charged);
        let mut last = 0.0;
        for &t in &g {
            let v = occupation_time(&p, -1.0, 1.0, t).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn extinction_time_examples() {
        let g1 = GrowthFunction::constant(1.0).unwrap();
        let empty = ScbmPath {
            grid: vec![1.0, 2.0],
            measures: vec![AtomicMeasure::default(), AtomicMeasure::default()],
            visits: vec![false],
            early_visit: false,
        };
        assert_eq!(
            extinction_time(&empty, &g1).unwrap(),
            ExtinctionTime {
                time: 0.0,
                censored: false
            }
        );
        let alive = ScbmPath {
            measures: vec![
                AtomicMeasure::new(vec![(0.5, 1.0)]),
                AtomicMeasure::new(vec![(1.5, 1.0)]),
            ],
            ..empty.clone()
        };
        assert_eq!(
            extinction_time(&alive, &g1).unwrap(),
            ExtinctionTime {
                time: 1.0,
                censored: false
            }
        );
        let gt = GrowthFunction::power(1.0, 1.0).unwrap();
        assert_eq!(
            extinction_time(&alive, &gt).unwrap(),
            ExtinctionTime {
                time: 2.0,
                censored: true
            }
        );
    }

    #[test]
    fn growth_functions() {
        let s: GrowthFunction<f64> = GrowthFunction::step(vec![0.0, 1.0, 3.0], vec![1.0, 2.0, 5.0]).unwrap();
        assert_eq!(s.eval(1.0), 2.0);
        assert_eq!(s.left_limit(1.0), 1.0);
        assert_eq!(s.left_limit(2.0), 2.0);
        assert_eq!(s.breakpoints(0.5, 10.0), vec![1.0, 3.0]);
        assert!(GrowthFunction::step(vec![0.0, 1.0], vec![2.0, 1.0]).is_err());
        let capped = GrowthFunction::exponential(3.0)
            .unwrap()
            .min(GrowthFunction::constant(100.0).unwrap());
        assert_eq!(capped.eval(2.0), 9.0);
        assert_eq!(capped.eval(10.0), 100.0);
        let p32: GrowthFunction<f32> = GrowthFunction::power(2.0, 0.5).unwrap();
        assert!((p32.eval(4.0) - 4.0).abs() < 1e-6);
        assert!(GrowthFunction::power(-1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn growth_functions_are_monotone(scale in 0.0f64..5.0, p in 0.0f64..2.0, c in 0.0f64..3.0) {
            let g = GrowthFunction::power(scale, p).unwrap().max(GrowthFunction::constant(c).unwrap());
            let grid: Vec<f64> = (0..200).map(|k| k as f64 * 0.37).collect();
            prop_assert!(g.is_monotone_on(&grid));
        }

        #[test]
        fn merges_conserve_mass(seed in 0u64..500) {
            // γ = 0: masses are constant, so total mass is constant through merges
            let s = sampler(0.0);
            let mu = MeasureSpec::lebesgue(-1.0, 1.0).unwrap();
            let atoms = discretize_measure(&mu, 0.25).unwrap();
            let p = evolve_scbm(&atoms, &grid(0.0, 1.0, 20), FlowBoundary::Free, &s, &EvolveOptions::default(), &mut rng(seed)).unwrap();
            for m in &p.measures {
                prop_assert!((m.total_mass() - 2.0).abs() < 1e-12);
            }
            prop_assert!(p.measures.windows(2).all(|w| w[1].len() <= w[0].len()));
        }

        #[test]
        fn larger_window_never_dies_earlier(seed in 0u64..200) {
            let s = sampler(2.0);
            let mu = MeasureSpec::lebesgue(-5.0, 5.0).unwrap();
            let mut r = rng(seed);
            let atoms = init_atoms(&mu, 1.0, &s, &mut r).unwrap();
            let opts = EvolveOptions { max_step: 0.1, watch: None };
            let p = evolve_scbm(&atoms, &grid(1.0, 5.0, 20), FlowBoundary::Free, &s, &opts, &mut r).unwrap();
            let small = extinction_time(&p, &GrowthFunction::constant(0.5).unwrap()).unwrap();
            let big = extinction_time(&p, &GrowthFunction::power(1.0, 1.0).unwrap()).unwrap();
            prop_assert!(big.time >= small.time);
        }
    }
}
