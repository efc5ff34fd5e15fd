//! The integral test for local extinction made operational: partial
//! integrals, Borel–Cantelli series, the `t_n, l_n, r_n` sequences, block
//! survival probabilities and survival ensembles.

pub mod commands;
pub mod config;
pub mod output;

use crate::branching::{BranchingParams, CsbpSampler};
use crate::error::{domain, Result};
use crate::flow::FlowBoundary;
use crate::harness::{mc_estimate, MCEstimate};
use crate::quadrature::integrate;
use crate::scalar::Scalar;
use crate::scbm::{evolve_scbm, extinction_time, init_atoms, window_mass, EvolveOptions, GrowthFunction, MeasureSpec};

/// Whether `∫_1^∞ g(y) y^{−1−1/β} dy` looks finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Convergent,
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralPartial<T> {
    /// `∫_1^T`.
    pub value: T,
    pub error: T,
    /// Partials at `T`, `2T`, `4T`.
    pub growth: [T; 3],
    pub classification: Classification,
    /// `∫_1^∞` extrapolated from the increments over `[T, 2T]` and `[2T, 4T]`
    /// as a geometric tail; exact for power laws. `None` when divergent.
    pub limit: Option<T>,
}

/// `∫_1^T g(y) y^{−1−1/β} dy` to relative tolerance `1e−8`. The integral is
/// called convergent when the increment over `[2T, 4T]` is at most 0.9 times
/// the increment over `[T, 2T]`.
pub fn integral_partial<T: Scalar>(g: &GrowthFunction<T>, beta: T, horizon: T) -> Result<IntegralPartial<T>> {
    if !(horizon > T::one()) || !horizon.is_finite() {
        return domain("integral_partial: need finite T > 1");
    }
    if !(beta > T::zero() && beta <= T::one()) {
        return domain("integral_partial: need 0 < beta <= 1");
    }
    let power = -(T::one() + T::one() / beta);
    let f = |y: T| g.eval(y) * y.powf(power);
    let rel = T::lit(1e-8);
    let abs = T::lit(1e-15);
    let one = T::one();
    let two = T::lit(2.0);
    let partial = |a: T, b: T| {
        // log-spaced cuts help the adaptive rule on long ranges
        let mut cuts = g.breakpoints(a, b);
        let mut c = a * two;
        while c < b {
            cuts.push(c);
            c = c * two;
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite cuts"));
        integrate(f, a, b, &cuts, rel, abs)
    };
    let head = partial(one, horizon)?;
    let next = partial(horizon, two * horizon)?;
    let far = partial(two * horizon, two * two * horizon)?;
    let classification = if far.value <= T::lit(0.9) * next.value {
        Classification::Convergent
    } else {
        Classification::Divergent
    };
    let limit = match classification {
        Classification::Convergent if next.value > T::zero() => {
            Some(head.value + next.value / (one - far.value / next.value))
        }
        Classification::Convergent => Some(head.value),
        Classification::Divergent => None,
    };
    Ok(IntegralPartial {
        limit,
        value: head.value,
        error: head.error,
        growth: [head.value, head.value + next.value, head.value + next.value + far.value],
        classification,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport<T> {
    /// `4 g(t_{n+1}) ψ_{t_n}(∞)` with `t_n = e^n`, `n = 0..N`.
    pub terms: Vec<T>,
    pub partial_sums: Vec<T>,
    /// Gaussian tail bounds `2 exp(−t_{n+1}^{2δ−1}/2)`.
    pub tail_terms: Vec<T>,
    pub tail_partial_sums: Vec<T>,
    /// `(S_N − S_{N/2}) / S_N < 0.01`.
    pub bounded: bool,
}

fn cumulative<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter()
        .scan(T::zero(), |acc, &x| {
            *acc = *acc + x;
            Some(*acc)
        })
        .collect()
}

pub fn series_eval<T: Scalar>(
    g: &GrowthFunction<T>,
    params: &BranchingParams<T>,
    n_terms: usize,
    delta: T,
) -> Result<SeriesReport<T>> {
    if n_terms == 0 {
        return domain("series_eval: need N >= 1");
    }
    if !(delta > T::lit(0.5) && delta < T::one()) {
        return domain("series_eval: need 1/2 < delta < 1");
    }
    let t = |n: usize| T::from_usize(n).expect("index fits").exp();
    let four = T::lit(4.0);
    let terms: Vec<T> = (0..n_terms)
        .map(|n| Ok(four * g.eval(t(n + 1)) * params.psi_inf(t(n))?))
        .collect::<Result<_>>()?;
    let tail_terms: Vec<T> = (0..n_terms)
        .map(|n| T::lit(2.0) * (-(t(n + 1).powf(T::lit(2.0) * delta - T::one())) / T::lit(2.0)).exp())
        .collect();
    let partial_sums = cumulative(&terms);
    let tail_partial_sums = cumulative(&tail_terms);
    let last = partial_sums[n_terms - 1];
    let half = if n_terms >= 2 {
        partial_sums[n_terms / 2 - 1]
    } else {
        T::zero()
    };
    let bounded = last == T::zero() || (last - half) / last < T::lit(0.01);
    Ok(SeriesReport {
        terms,
        partial_sums,
        tail_terms,
        tail_partial_sums,
        bounded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceFlag {
    Valid,
    /// `l_n ≥ r_n`.
    EmptyWindow,
    /// `g` never reaches `3 g(t_n)`, so `t_{n+1} = ∞`.
    Terminated,
}

/// `t_0 = 1`, `t_{n+1} = inf{t ≥ t_n : g(t) ≥ 3 g(t_n)}`, `r_n = 0.9 g(t_n)`,
/// `l_n = (31/30) g(t_{n−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTriple<T> {
    pub t: Vec<T>,
    /// `l_0` is undefined.
    pub l: Vec<Option<T>>,
    pub r: Vec<T>,
    pub flags: Vec<SequenceFlag>,
    /// `g(t_n) ≤ g(t_{n+1}−) ≤ 3 g(t_n)`, for each `n` with `t_{n+1}` known.
    pub eqng: Vec<bool>,
    /// `r_n − l_n ≥ (g(t_{n+1}−) − g(t_n−)) / 10`, for `n ≥ 1` with `t_{n+1}`
    /// known.
    pub intervaldiff: Vec<Option<bool>>,
}

impl<T: Scalar> SequenceTriple<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.flags.last() == Some(&SequenceFlag::Terminated)
    }
}

const SEQUENCE_REL_TOL: f64 = 1e-10;
const INVARIANT_REL_TOL: f64 = 1e-9;

/// Smallest `t ≥ from` with `g(t) ≥ target`, or `None` if there is none
/// below the doubling cap.
fn first_reach<T: Scalar>(g: &GrowthFunction<T>, from: T, target: T) -> Option<T> {
    if g.eval(from) >= target {
        return Some(from);
    }
    let cap = T::max_value().sqrt();
    let two = T::lit(2.0);
    let mut lo = from;
    let mut hi = from * two;
    while g.eval(hi) < target {
        lo = hi;
        hi = hi * two;
        if hi > cap {
            return None;
        }
    }
    while hi - lo > T::lit(SEQUENCE_REL_TOL) * hi {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if g.eval(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // a jump inside the final bracket is the exact infimum
    let widened = hi + T::lit(SEQUENCE_REL_TOL) * hi;
    g.breakpoints(lo, widened)
        .into_iter()
        .find(|&b| b <= widened && g.eval(b) >= target)
        .or(Some(hi))
}

/// Builds up to `n` indices; stops early when `t_{n+1} = ∞`.
pub fn build_sequences<T: Scalar>(g: &GrowthFunction<T>, n: usize) -> Result<SequenceTriple<T>> {
    if n == 0 {
        return domain("build_sequences: need N >= 1");
    }
    let one = T::one();
    if !(g.eval(one) > T::zero()) {
        return domain("build_sequences: need g(1) > 0");
    }
    let three = T::lit(3.0);
    let mut t = vec![one];
    let mut flags = Vec::new();
    while t.len() < n {
        let tn = *t.last().expect("nonempty");
        match first_reach(g, tn, three * g.eval(tn)) {
            Some(next) => {
                t.push(next);
                flags.push(SequenceFlag::Valid);
            }
            None => break,
        }
    }
    let terminated = t.len() < n;
    flags.push(if terminated {
        SequenceFlag::Terminated
    } else {
        SequenceFlag::Valid
    });
    let r: Vec<T> = t.iter().map(|&s| T::lit(0.9) * g.eval(s)).collect();
    let l: Vec<Option<T>> = (0..t.len())
        .map(|i| (i > 0).then(|| T::lit(31.0 / 30.0) * g.eval(t[i - 1])))
        .collect();
    for i in 0..t.len() {
        if let Some(li) = l[i] {
            if li >= r[i] && flags[i] == SequenceFlag::Valid {
                flags[i] = SequenceFlag::EmptyWindow;
            }
        }
    }
    let tol = T::lit(INVARIANT_REL_TOL);
    let le = |a: T, b: T| a <= b + tol * b.abs().max(a.abs());
    let eqng: Vec<bool> = t
        .windows(2)
        .map(|w| {
            let (gn, gl) = (g.eval(w[0]), g.left_limit(w[1]));
            le(gn, gl) && le(gl, three * gn)
        })
        .collect();
    let intervaldiff: Vec<Option<bool>> = (0..t.len())
        .map(|i| {
            let li = l[i]?;
            let next = t.get(i + 1)?;
            let rhs = (g.left_limit(*next) - g.left_limit(t[i])) / T::lit(10.0);
            Some(le(rhs, r[i] - li))
        })
        .collect();
    Ok(SequenceTriple {
        t,
        l,
        r,
        flags,
        eqng,
        intervaldiff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSurvival<T> {
    pub probability: T,
    pub empty_window: bool,
}

/// `1 − exp(−2 width ψ_t(∞))`: survival at `t` of a CSBP started from the
/// Lebesgue mass `2·width` of `I_n`.
pub fn block_survival_probability<T: Scalar>(params: &BranchingParams<T>, t: T, width: T) -> Result<T> {
    if !(width >= T::zero()) {
        return Ok(T::zero());
    }
    Ok(T::one() - (-(T::lit(2.0) * width * params.psi_inf(t)?)).exp())
}

pub fn block_survival_closed_form<T: Scalar>(
    params: &BranchingParams<T>,
    index: usize,
    triple: &SequenceTriple<T>,
) -> Result<BlockSurvival<T>> {
    let Some(Some(l)) = triple.l.get(index) else {
        return domain(format!("block_survival_closed_form: index {index} has no l_n"));
    };
    let r = triple.r[index];
    if *l >= r {
        return Ok(BlockSurvival {
            probability: T::zero(),
            empty_window: true,
        });
    }
    Ok(BlockSurvival {
        probability: block_survival_probability(params, triple.t[index], r - *l)?,
        empty_window: false,
    })
}

/// Branching-only estimate of the block survival probability.
pub fn block_survival_mc(params: BranchingParams<f64>, t: f64, width: f64, n: usize, seed: u64) -> Result<MCEstimate> {
    let sampler = CsbpSampler::new(params)?;
    mc_estimate(
        |rng, _| Ok(f64::from(sampler.transition(t, 2.0 * width, rng)? > 0.0)),
        n,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalConfig {
    pub params: BranchingParams<f64>,
    pub truncation: f64,
    pub horizons: Vec<f64>,
    pub growths: Vec<(String, GrowthFunction<f64>)>,
    pub n: usize,
    pub seed: u64,
    pub max_step: f64,
    /// Spacing of the grid on which the extinction time is read off.
    pub grid_step: f64,
    /// First observation time; defaults to the first horizon.
    pub t0: Option<f64>,
}

impl SurvivalConfig {
    pub fn standard(n: usize, seed: u64) -> Self {
        Self {
            params: BranchingParams::new(2.0, 1.0).expect("valid"),
            truncation: 50.0,
            horizons: vec![4.0, 16.0, 64.0],
            growths: vec![
                ("const1".to_owned(), GrowthFunction::constant(1.0).expect("valid")),
                ("linear".to_owned(), GrowthFunction::power(1.0, 1.0).expect("valid")),
            ],
            n,
            seed,
            max_step: 0.05,
            grid_step: 0.5,
            t0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRow {
    pub growth: String,
    pub horizon: f64,
    /// Fraction with `X_T([−g(T), g(T)]) > 0`.
    pub alive: MCEstimate,
    /// Fraction with `τ ≥ T` on the grid.
    pub tau_reached: MCEstimate,
    /// Replicas still charging the window at the final grid time.
    pub censored: usize,
}

fn binomial(count: usize, n: usize, seed: u64) -> MCEstimate {
    let p = count as f64 / n as f64;
    MCEstimate {
        mean: p,
        stderr: (p * (1.0 - p) / (n as f64 - 1.0)).sqrt(),
        n,
        seed,
    }
}

/// Survival fractions of SCBM from Lebesgue measure on `[−L, L]`. All
/// growth functions are read off the same paths.
pub fn survival_experiment(config: &SurvivalConfig) -> Result<Vec<SurvivalRow>> {
    use rayon::prelude::*;

    if config.n < 2 {
        return domain("survival: need n >= 2");
    }
    if config.horizons.is_empty() || config.horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("survival: horizons must be nonempty and increasing");
    }
    if !(config.grid_step > 0.0) || !(config.truncation >= 0.0) {
        return domain("survival: need grid_step > 0 and truncation >= 0");
    }
    let t0 = config.t0.unwrap_or(config.horizons[0]);
    if !(t0 > 0.0 && t0 <= config.horizons[0]) {
        return domain("survival: need 0 < t0 <= first horizon");
    }
    let sampler = CsbpSampler::new(config.params)?;
    let mu = MeasureSpec::lebesgue(-config.truncation, config.truncation)?;
    let last = *config.horizons.last().expect("nonempty");
    let mut grid: Vec<f64> = std::iter::successors(Some(t0), |t| Some(t + config.grid_step))
        .take_while(|&t| t < last)
        .chain(config.horizons.iter().copied())
        .filter(|&t| t >= t0)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let horizon_index: Vec<usize> = config
        .horizons
        .iter()
        .map(|h| grid.iter().position(|t| t == h).expect("horizon on grid"))
        .collect();
    let opts = EvolveOptions {
        max_step: config.max_step,
        watch: None,
    };
    // per replica: for each growth, (alive at each horizon, τ, censored)
    type Outcome = Vec<(Vec<bool>, f64, bool)>;
    let outcomes: Vec<Outcome> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::harness::replica_rng(config.seed, i as u64);
            let atoms = init_atoms(&mu, t0, &sampler, &mut rng)?;
            let path = evolve_scbm(&atoms, &grid, FlowBoundary::Free, &sampler, &opts, &mut rng)?;
            config
                .growths
                .iter()
                .map(|(_, g)| {
                    let alive = horizon_index
                        .iter()
                        .map(|&k| {
                            let r = g.eval(grid[k]);
                            window_mass(&path.measures[k], -r, r).map(|m| m.get() > 0.0)
                        })
                        .collect::<Result<Vec<bool>>>()?;
                    let tau = extinction_time(&path, g)?;
                    Ok((alive, tau.time, tau.censored))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (gi, (name, _)) in config.growths.iter().enumerate() {
        let censored = outcomes.iter().filter(|o| o[gi].2).count();
        for (hi, &h) in config.horizons.iter().enumerate() {
            let alive = outcomes.iter().filter(|o| o[gi].0[hi]).count();
            let reached = outcomes.iter().filter(|o| o[gi].1 >= h || o[gi].2).count();
            rows.push(SurvivalRow {
                growth: name.clone(),
                horizon: h,
                alive: binomial(alive, config.n, config.seed),
                tau_reached: binomial(reached, config.n, config.seed),
                censored,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(gamma: f64) -> BranchingParams<f64> {
        BranchingParams::new(gamma, 1.0).unwrap()
    }

    #[test]
    fn integral_examples() {
        let g = GrowthFunction::<f64>::power(1.0, 0.3).unwrap();
        let r = integral_partial(&g, 1.0, 1e4).unwrap();
        let partial = (1.0 - 1e4f64.powf(-0.7)) / 0.7;
        assert!((r.value - partial).abs() < 1e-8);
        assert!((r.limit.unwrap() - 1.0 / 0.7).abs() < 1e-8);
        assert_eq!(r.classification, Classification::Convergent);
        let lin = GrowthFunction::power(1.0, 1.0).unwrap();
        let r = integral_partial(&lin, 1.0, 1e4).unwrap();
        assert!((r.value - 1e4f64.ln()).abs() < 1e-8 * 1e4f64.ln());
        assert_eq!(r.classification, Classification::Divergent);
        let zero = GrowthFunction::constant(0.0).unwrap();
        assert_eq!(integral_partial(&zero, 1.0, 10.0).unwrap().value, 0.0);
        assert!(integral_partial(&zero, 1.0, 1.0).is_err());
    }

    #[test]
    fn integral_with_jumps() {
        let g = GrowthFunction::<f64>::step(vec![0.0, 2.0, 5.0], vec![1.0, 2.0, 4.0]).unwrap();
        let r = integral_partial(&g, 1.0, 10.0).unwrap();
        // ∫ y^{-2}: 1·(1 − 1/2) + 2·(1/2 − 1/5) + 4·(1/5 − 1/10)
        assert!((r.value - (0.5 + 0.6 + 0.4)).abs() < 1e-10);
    }

    #[test]
    fn series_examples() {
        let lin = GrowthFunction::power(1.0, 1.0).unwrap();
        let s = series_eval(&lin, &p(2.0), 20, 0.75).unwrap();
        let four_e = 4.0 * std::f64::consts::E;
        assert!(s.terms.iter().all(|t| (t - four_e).abs() < 1e-12 * four_e));
        assert!(!s.bounded);
        let slow = GrowthFunction::power(1.0, 0.3).unwrap();
        let s = series_eval(&slow, &p(2.0), 40, 0.75).unwrap();
        assert!(s.bounded);
        let ratio = s.terms[5] / s.terms[4];
        assert!((ratio - (0.3f64 - 1.0).exp()).abs() < 1e-12);
        let zero = GrowthFunction::constant(0.0).unwrap();
        let s = series_eval(&zero, &p(2.0), 10, 0.75).unwrap();
        assert!(s.terms.iter().all(|&t| t == 0.0) && s.bounded);
        assert!(s.tail_partial_sums.last().unwrap() < &2.0);
    }

    #[test]
    fn series_and_integral_agree() {
        for (pw, finite) in [(0.3, true), (0.6, true), (1.0, false), (1.5, false)] {
            let g = GrowthFunction::power(1.0, pw).unwrap();
            let s = series_eval(&g, &p(2.0), 60, 0.75).unwrap();
            let i = integral_partial(&g, 1.0, 1e6).unwrap();
            assert_eq!(s.bounded, finite, "p = {pw}");
            assert_eq!(i.classification == Classification::Convergent, finite, "p = {pw}");
        }
    }

    #[test]
    fn linear_sequences() {
        let g = GrowthFunction::power(1.0, 1.0).unwrap();
        let s = build_sequences(&g, 15).unwrap();
        assert_eq!(s.len(), 15);
        for (n, &t) in s.t.iter().enumerate() {
            let exact = 3f64.powi(n as i32);
            assert!((t - exact).abs() <= 1e-8 * exact, "t_{n} = {t}");
            assert!((s.r[n] - 0.9 * t).abs() <= 1e-12 * t);
            if n > 0 {
                assert!(s.l[n].unwrap() < s.r[n]);
            }
        }
        assert!(s.eqng.iter().all(|&b| b));
        assert!(s.intervaldiff.iter().flatten().all(|&b| b));
        assert!(s.flags.iter().all(|&f| f == SequenceFlag::Valid));
    }

    #[test]
    fn sequence_invariants_for_families() {
        let families: Vec<GrowthFunction<f64>> = vec![
            GrowthFunction::power(1.0, 2.0).unwrap(),
            GrowthFunction::exponential(3.0)
                .unwrap()
                .min(GrowthFunction::constant(1e6).unwrap()),
            GrowthFunction::step(vec![0.0, 1.5, 4.0, 9.0, 30.0], vec![1.0, 2.5, 7.0, 30.0, 500.0]).unwrap(),
            GrowthFunction::step(vec![0.0, 2.0, 3.0], vec![1.0, 3.0, 9.0]).unwrap(),
        ];
        for g in &families {
            let s = build_sequences(g, 12).unwrap();
            assert!(s.eqng.iter().all(|&b| b), "{g:?}: {s:?}");
            assert!(s.intervaldiff.iter().flatten().all(|&b| b), "{g:?}: {s:?}");
            assert!(s.t.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn staircase_hits_jumps_exactly() {
        let g = GrowthFunction::step(vec![0.0, 2.0, 3.0], vec![1.0, 3.0, 9.0]).unwrap();
        let s = build_sequences(&g, 5).unwrap();
        assert_eq!(s.t, vec![1.0, 2.0, 3.0]);
        assert!(s.terminated());
    }

    #[test]
    fn constant_growth_terminates() {
        let g = GrowthFunction::constant(1.0).unwrap();
        let s = build_sequences(&g, 10).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.terminated());
        assert!(build_sequences(&GrowthFunction::power(0.0, 1.0).unwrap(), 3).is_err());
    }

    #[test]
    fn block_survival_examples() {
        let v = block_survival_probability(&p(2.0), 3.0, 0.75).unwrap();
        assert!((v - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert_eq!(block_survival_probability(&p(2.0), 3.0, 0.0).unwrap(), 0.0);
        let g = GrowthFunction::power(1.0, 1.0).unwrap();
        let s = build_sequences(&g, 6).unwrap();
        for i in 1..s.len() {
            let b = block_survival_closed_form(&p(2.0), i, &s).unwrap();
            assert!((0.0..=1.0).contains(&b.probability) && !b.empty_window);
        }
        assert!(block_survival_closed_form(&p(2.0), 0, &s).is_err());
        let mut flat = s.clone();
        flat.r[2] = flat.l[2].unwrap();
        let b = block_survival_closed_form(&p(2.0), 2, &flat).unwrap();
        assert_eq!((b.probability, b.empty_window), (0.0, true));
    }

    #[test]
    fn survival_smoke() {
        let mut cfg = SurvivalConfig::standard(40, 1);
        cfg.truncation = 10.0;
        cfg.horizons = vec![1.0, 2.0];
        let rows = survival_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for (c, l) in rows[..2].iter().zip(&rows[2..]) {
            assert!(l.alive.mean >= c.alive.mean);
        }
        cfg.truncation = 0.0;
        let rows = survival_experiment(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.alive.mean == 0.0 && r.tau_reached.mean == 0.0));
    }
}
