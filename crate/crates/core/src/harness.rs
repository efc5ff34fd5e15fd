//! Monte Carlo estimates and pass/fail comparisons for the duality identities.
//!
//! Replica `i` of an estimate seeded with `s` draws from the ChaCha8 stream
//! `(s, i)`, so estimates do not depend on thread scheduling.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::branching::{BranchingParams, CsbpSampler};
use crate::error::{domain, Result};
use crate::flow::{sample_coalescing_paths, step_integral_lebesgue, FlowBoundary, StepFunction};
use crate::scbm::{evolve_scbm, init_atoms, initial_atoms, window_mass, EvolveOptions, MeasureSpec};
use crate::stats::{mean_stderr, normal_cdf};
use crate::Rng;

/// RNG for replica `index` of an estimate seeded with `seed`.
pub fn replica_rng(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Offset separating the streams of the two sides of a comparison.
const RHS_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

/// Mean of `functional(rng, index)` over `n` independent replicas.
pub fn mc_estimate<F>(functional: F, n: usize, seed: u64) -> Result<MCEstimate>
where
    F: Fn(&mut Rng, usize) -> Result<f64> + Sync,
{
    if n < 2 {
        return domain(format!("mc_estimate: need n >= 2, got {n}"));
    }
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| functional(&mut replica_rng(seed, i as u64), i))
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&values);
    Ok(MCEstimate { mean, stderr, n, seed })
}

/// Right-hand side of a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rhs {
    Estimate(MCEstimate),
    Exact(f64),
}

impl Rhs {
    pub fn value(&self) -> f64 {
        match self {
            Self::Estimate(e) => e.mean,
            Self::Exact(v) => *v,
        }
    }

    pub fn stderr(&self) -> f64 {
        match self {
            Self::Estimate(e) => e.stderr,
            Self::Exact(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Equality check with `|z| ≤ 3`.
    Consistent,
    /// Equality check with `|z| > 3`, or a violated inequality.
    Inconsistent,
    /// `LHS ≥ RHS − 3·pooled stderr`.
    OneSidedOk,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Self::Inconsistent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub name: String,
    pub lhs: MCEstimate,
    pub rhs: Rhs,
    /// `(lhs − rhs) / pooled stderr`.
    pub z_score: f64,
    pub verdict: Verdict,
    /// Some sampler or engine in the check is not exact.
    pub approximate: bool,
}

impl ComparisonReport {
    pub fn pooled_stderr(&self) -> f64 {
        self.lhs.stderr.hypot(self.rhs.stderr())
    }
}

fn z_score(lhs: &MCEstimate, rhs: &Rhs) -> f64 {
    let diff = lhs.mean - rhs.value();
    let pooled = lhs.stderr.hypot(rhs.stderr());
    if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Equality verdict.
pub fn compare_equal(name: &str, lhs: MCEstimate, rhs: Rhs, approximate: bool) -> ComparisonReport {
    let z = z_score(&lhs, &rhs);
    ComparisonReport {
        name: name.to_owned(),
        lhs,
        rhs,
        z_score: z,
        verdict: if z.abs() <= 3.0 {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        },
        approximate,
    }
}

/// Inequality verdict for `LHS ≥ RHS`.
pub fn compare_at_least(name: &str, lhs: MCEstimate, rhs: Rhs, approximate: bool) -> ComparisonReport {
    let z = z_score(&lhs, &rhs);
    ComparisonReport {
        name: name.to_owned(),
        lhs,
        rhs,
        z_score: z,
        verdict: if z >= -3.0 {
            Verdict::OneSidedOk
        } else {
            Verdict::Inconsistent
        },
        approximate,
    }
}

fn uniform_grid(t: f64, max_step: f64) -> Vec<f64> {
    let k = (t / max_step).ceil().max(1.0) as usize;
    (0..=k).map(|i| t * i as f64 / k as f64).collect()
}

fn folded_gap_probability(c: f64, t: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return domain(format!("gap half-width must be >= 0, got {c}"));
    }
    if !(t > 0.0) {
        return domain(format!("time must be > 0, got {t}"));
    }
    Ok((2.0 * normal_cdf(c / t.sqrt()) - 1.0).powi(2))
}

fn sampler_for(params: BranchingParams<f64>, allow_approximate: bool) -> Result<CsbpSampler> {
    let s = CsbpSampler::new(params)?;
    if s.is_approximate() && !allow_approximate {
        return domain("check needs exact samplers (β = 1) unless approximate runs are allowed");
    }
    Ok(s)
}

/// Lebesgue measure on `[-l, l]` with the gap `(lo, hi)` removed.
fn gapped_lebesgue(lo: f64, hi: f64, l: f64) -> Result<MeasureSpec> {
    if !(l > hi.abs().max(lo.abs())) {
        return domain(format!("truncation L = {l} must exceed the gap [{lo}, {hi}]"));
    }
    MeasureSpec::new(vec![(-l, lo), (hi, l)], Vec::new())
}

/// Laplace-functional duality for SCBM started from Lebesgue measure on an
/// interval: `E exp(−⟨X_t, h_0⟩) = E exp(−∫ ψ_t(h_t(x)) dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceConfig {
    pub params: BranchingParams<f64>,
    pub t: f64,
    pub domain: (f64, f64),
    /// Sorted `y_1 ≤ … ≤ y_{2n}` taken in consecutive pairs.
    pub points: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub max_step: f64,
    /// Multiplies `γ` on the dual side only; `1.0` for the real check.
    pub rhs_gamma_factor: f64,
    pub allow_approximate: bool,
}

impl LaplaceConfig {
    pub fn standard(n: usize, seed: u64) -> Self {
        Self {
            params: BranchingParams::new(2.0, 1.0).expect("valid"),
            t: 1.0,
            domain: (-2.0, 2.0),
            points: vec![-1.0, 1.0],
            coefficients: vec![1.0],
            n,
            seed,
            max_step: 0.01,
            rhs_gamma_factor: 1.0,
            allow_approximate: false,
        }
    }
}

pub fn laplace_duality_check(config: &LaplaceConfig) -> Result<ComparisonReport> {
    let sampler = sampler_for(config.params, config.allow_approximate)?;
    let h0 = StepFunction::from_positions(&config.points, config.coefficients.clone())?;
    if config.points.windows(2).any(|w| w[1] < w[0]) {
        return domain("laplace check: points must be sorted");
    }
    let (a, b) = config.domain;
    let mu = MeasureSpec::lebesgue(a, b)?;
    let opts = EvolveOptions {
        max_step: config.max_step,
        watch: None,
    };
    let lhs = mc_estimate(
        |rng, _| {
            let atoms = init_atoms(&mu, config.t, &sampler, rng)?;
            let path = evolve_scbm(&atoms, &[config.t], FlowBoundary::Free, &sampler, &opts, rng)?;
            Ok((-path.measures[0].integrate(&h0)).exp())
        },
        config.n,
        config.seed,
    )?;
    let dual = config
        .params
        .with_gamma(config.params.gamma() * config.rhs_gamma_factor)?;
    let grid = uniform_grid(config.t, config.max_step);
    let rhs = mc_estimate(
        |rng, _| {
            let bundle = sample_coalescing_paths(&config.points, &grid, FlowBoundary::Free, rng)?;
            let ht = StepFunction::from_positions(&bundle.at(grid.len() - 1), config.coefficients.clone())?;
            Ok((-step_integral_lebesgue(&dual, config.t, &ht, &[(a, b)])?).exp())
        },
        config.n,
        config.seed.wrapping_add(RHS_SEED_OFFSET),
    )?;
    Ok(compare_equal(
        "laplace_duality",
        lhs,
        Rhs::Estimate(rhs),
        sampler.is_approximate(),
    ))
}

/// Extinction in `[a, b]` of an SCBM absorbed at `a` and `b`, started from
/// Lebesgue measure outside `[a − c, b + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingConfig {
    pub params: BranchingParams<f64>,
    pub barriers: (f64, f64),
    pub c: f64,
    pub t: f64,
    pub truncation: f64,
    pub n: usize,
    pub seed: u64,
    pub max_step: f64,
    /// Atom spacing of the `γ = 0` discretisation.
    pub resolution: f64,
}

impl AbsorbingConfig {
    pub fn standard(n: usize, seed: u64) -> Self {
        Self {
            params: BranchingParams::new(0.0, 1.0).expect("valid"),
            barriers: (-1.0, 1.0),
            c: 1.0,
            t: 1.0,
            truncation: 8.0,
            n,
            seed,
            max_step: 0.01,
            resolution: 0.1,
        }
    }
}

/// `P{Z_t([a,b]) = 0}` against the exact `(2Φ(c/√t) − 1)²`: the reflected
/// duals `a − |W_1(t)|`, `b + |W_2(t)|` miss the initial mass iff both stay
/// within `c`.
pub fn absorbing_extinction_check(config: &AbsorbingConfig) -> Result<ComparisonReport> {
    let (a, b) = config.barriers;
    if !(a < b) {
        return domain("absorbing check: need a < b");
    }
    let exact = folded_gap_probability(config.c, config.t)?;
    let sampler = sampler_for(config.params, false)?;
    let mu = gapped_lebesgue(a - config.c, b + config.c, config.truncation)?;
    let boundary = FlowBoundary::absorbing(&[a, b])?;
    let opts = EvolveOptions {
        max_step: config.max_step,
        watch: None,
    };
    let lhs = mc_estimate(
        |rng, _| {
            let atoms = initial_atoms(&mu, config.t, &sampler, config.resolution, rng)?;
            let path = evolve_scbm(&atoms, &[config.t], boundary.clone(), &sampler, &opts, rng)?;
            Ok(f64::from(window_mass(&path.measures[0], a, b)?.get() == 0.0))
        },
        config.n,
        config.seed,
    )?;
    let name = "absorbing_extinction";
    Ok(if config.params.branches() {
        compare_at_least(name, lhs, Rhs::Exact(exact), false)
    } else {
        compare_equal(name, lhs, Rhs::Exact(exact), false)
    })
}

/// No-occupation probability of `[y1, y2]` for SCBM started from Lebesgue
/// measure outside `[y1 − c, y2 + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationConfig {
    pub params: BranchingParams<f64>,
    pub window: (f64, f64),
    pub c: f64,
    pub t: f64,
    pub truncation: f64,
    pub n: usize,
    pub seed: u64,
    pub max_step: f64,
    pub resolution: f64,
    /// First observation time for `γ > 0`; excursions dying earlier are not
    /// simulated.
    pub t0: Option<f64>,
}

impl OccupationConfig {
    pub fn standard(gamma: f64, n: usize, seed: u64) -> Self {
        Self {
            params: BranchingParams::new(gamma, 1.0).expect("valid"),
            window: (-1.0, 1.0),
            c: 1.0,
            t: 1.0,
            truncation: 8.0,
            n,
            seed,
            max_step: 0.01,
            resolution: 0.1,
            t0: None,
        }
    }
}

/// Equality when `γ = 0`, `LHS ≥ RHS` otherwise. The visit indicator uses
/// bridge corrections between steps, and the reflected duals give the same
/// closed form as [`absorbing_extinction_check`].
pub fn occupation_duality_check(config: &OccupationConfig) -> Result<ComparisonReport> {
    let (y1, y2) = config.window;
    if !(y1 < y2) {
        return domain("occupation check: need y1 < y2");
    }
    let exact = folded_gap_probability(config.c, config.t)?;
    let sampler = sampler_for(config.params, false)?;
    let mu = gapped_lebesgue(y1 - config.c, y2 + config.c, config.truncation)?;
    let opts = EvolveOptions {
        max_step: config.max_step,
        watch: Some((y1, y2)),
    };
    let t0 = if sampler.params().branches() {
        config.t0.unwrap_or((config.t / 10.0).min(0.01))
    } else {
        0.0
    };
    if !(t0 < config.t) {
        return domain("occupation check: t0 must precede t");
    }
    let lhs = mc_estimate(
        |rng, _| {
            let atoms = initial_atoms(&mu, t0, &sampler, config.resolution, rng)?;
            let path = evolve_scbm(&atoms, &[t0, config.t], FlowBoundary::Free, &sampler, &opts, rng)?;
            Ok(f64::from(!path.visited_by(config.t)))
        },
        config.n,
        config.seed,
    )?;
    let name = "occupation_duality";
    Ok(if sampler.params().branches() {
        compare_at_least(name, lhs, Rhs::Exact(exact), false)
    } else {
        compare_equal(name, lhs, Rhs::Exact(exact), false)
    })
}

/// Lower bound on no-charge of `[−a, a]` over `(s1, s2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryConfig {
    pub params: BranchingParams<f64>,
    pub a: f64,
    pub s1: f64,
    pub s2: f64,
    pub mu: MeasureSpec,
    pub n: usize,
    pub seed: u64,
    pub max_step: f64,
    /// Spacing of the grid on which `Z_t([−a, a]) = 0` is checked.
    pub grid_step: f64,
}

impl CorollaryConfig {
    pub fn standard(n: usize, seed: u64) -> Self {
        Self {
            params: BranchingParams::new(2.0, 1.0).expect("valid"),
            a: 1.0,
            s1: 1.0,
            s2: 2.0,
            mu: MeasureSpec::lebesgue(-4.0, 4.0).expect("valid"),
            n,
            seed,
            max_step: 0.01,
            grid_step: 0.01,
        }
    }
}

/// LHS: no mass in `[−a, a]` at any grid time in `(s1, s2]`. RHS:
/// `E exp(−ψ_{s1}(∞)·μ([Y_1(s1), Y_2(s1)]))` for a coalescing pair started at
/// `(−a − |W_1|, a + |W_2|)` with `W_i ~ N(0, s2 − s1)`.
pub fn corollary_bound_check(config: &CorollaryConfig) -> Result<ComparisonReport> {
    let (s1, s2, a) = (config.s1, config.s2, config.a);
    if !(0.0 < s1 && s1 < s2) {
        return domain("corollary check: need 0 < s1 < s2");
    }
    if !(a > 0.0) {
        return domain("corollary check: need a > 0");
    }
    let sampler = sampler_for(config.params, false)?;
    let k = ((s2 - s1) / config.grid_step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=k).map(|i| s1 + (s2 - s1) * i as f64 / k as f64).collect();
    let opts = EvolveOptions {
        max_step: config.max_step,
        watch: None,
    };
    let lhs = mc_estimate(
        |rng, _| {
            let atoms = init_atoms(&config.mu, s1, &sampler, rng)?;
            let path = evolve_scbm(&atoms, &grid, FlowBoundary::Free, &sampler, &opts, rng)?;
            for m in &path.measures[1..] {
                if window_mass(m, -a, a)?.get() > 0.0 {
                    return Ok(0.0);
                }
            }
            Ok(1.0)
        },
        config.n,
        config.seed,
    )?;
    let theta = config.params.psi_inf(s1)?;
    let flow_grid = uniform_grid(s1, config.max_step);
    let sd = (s2 - s1).sqrt();
    let rhs = mc_estimate(
        |rng, _| {
            let x = sd * f64::abs(StandardNormal.sample(rng));
            let y = sd * f64::abs(StandardNormal.sample(rng));
            let bundle = sample_coalescing_paths(&[-x - a, a + y], &flow_grid, FlowBoundary::Free, rng)?;
            let end = bundle.at(flow_grid.len() - 1);
            Ok((-theta * config.mu.mass_in(end[0], end[1])).exp())
        },
        config.n,
        config.seed.wrapping_add(RHS_SEED_OFFSET),
    )?;
    Ok(compare_at_least("corollary_bound", lhs, Rhs::Estimate(rhs), false))
}

/// Laplace duality for SCBM absorbed at `a < b` against reflected coalescing
/// duals. The reflected system is the grid fold-map approximation, so the
/// report is always flagged approximate.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbedLaplaceConfig {
    pub laplace: LaplaceConfig,
    pub barriers: (f64, f64),
}

pub fn absorbed_laplace_check(config: &AbsorbedLaplaceConfig) -> Result<ComparisonReport> {
    let lc = &config.laplace;
    let (ba, bb) = config.barriers;
    if lc.points.iter().any(|&y| y == ba || y == bb) {
        return domain("absorbed laplace check: dual starts must avoid the barriers");
    }
    let sampler = sampler_for(lc.params, lc.allow_approximate)?;
    let h0 = StepFunction::from_positions(&lc.points, lc.coefficients.clone())?;
    let (a, b) = lc.domain;
    let mu = MeasureSpec::lebesgue(a, b)?;
    let absorbing = FlowBoundary::absorbing(&[ba, bb])?;
    let reflecting = FlowBoundary::reflecting(&[ba, bb])?;
    let opts = EvolveOptions {
        max_step: lc.max_step,
        watch: None,
    };
    let lhs = mc_estimate(
        |rng, _| {
            let atoms = init_atoms(&mu, lc.t, &sampler, rng)?;
            let path = evolve_scbm(&atoms, &[lc.t], absorbing.clone(), &sampler, &opts, rng)?;
            Ok((-path.measures[0].integrate(&h0)).exp())
        },
        lc.n,
        lc.seed,
    )?;
    let grid = uniform_grid(lc.t, lc.max_step);
    let rhs = mc_estimate(
        |rng, _| {
            let bundle = sample_coalescing_paths(&lc.points, &grid, reflecting.clone(), rng)?;
            let ht = StepFunction::from_positions(&bundle.at(grid.len() - 1), lc.coefficients.clone())?;
            Ok((-step_integral_lebesgue(&lc.params, lc.t, &ht, &[(a, b)])?).exp())
        },
        lc.n,
        lc.seed.wrapping_add(RHS_SEED_OFFSET),
    )?;
    Ok(compare_equal("absorbed_laplace", lhs, Rhs::Estimate(rhs), true))
}

/// Upper bound on the expected number of excursions alive at `t0` born
/// outside `[−l, l]` whose motion reaches `[−w, w]` by time `t`.
pub fn truncation_bound(params: &BranchingParams<f64>, t0: f64, l: f64, w: f64, t: f64) -> Result<f64> {
    let theta = params.psi_inf(t0)?;
    let d = l - w;
    if d <= 0.0 {
        return Ok(f64::INFINITY);
    }
    // ∫_d^∞ 2(1 − Φ(u/√t)) du on each side
    let s = t.sqrt();
    let delta = d / s;
    let phi = (-0.5 * delta * delta).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(2.0 * theta * 2.0 * s * (phi - delta * (1.0 - normal_cdf(delta))))
}
