//! Critical `(1+β)`-stable branching: the cumulant semigroup `ψ_t`, its
//! `z → ∞` limit, and samplers for transitions and entrance-law masses.
//!
//! The transition kernel `Q_t(x, ·)` has Laplace transform
//! `exp(-x ψ_t(z))` with
//!
//! ```text
//! ψ_t(z) = z ((1+β) / (1+β+γβ t z^β))^{1/β},   ψ_t(∞) = ((1+β)/(γβ t))^{1/β}.
//! ```
//!
//! Because `ψ_t(∞)` is finite, `Q_t(x, ·)` is a compound Poisson law: the
//! number of surviving excursions is `Poisson(x ψ_t(∞))` and each carries an
//! independent mass drawn from the normalised entrance law `κ_t / ψ_t(∞)`.
//! For `β = 1` the entrance law is exponential with rate `ψ_t(∞)`, so the
//! transition is the Poisson–Gamma mixture and sampling is exact. For
//! `β < 1` the entrance law is tabulated by inverting its Laplace transform
//! numerically, and samples are flagged approximate.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng as _;
use rand::RngCore;
use rand_distr::{Distribution, Exp, Gamma, Poisson};

use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Branching rate `γ` and stability index `β` of the mechanism
/// `φ(λ) = γ λ^{1+β} / (1+β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchingParams<T> {
    gamma: T,
    beta: T,
}

impl<T: Scalar> BranchingParams<T> {
    /// `γ ≥ 0` and `0 < β ≤ 1`. `γ = 0` (pure motion, no branching) is
    /// accepted here; the operations that need a finite `ψ_t(∞)` reject it.
    pub fn new(gamma: T, beta: T) -> Result<Self> {
        if !(gamma >= T::zero()) || !gamma.is_finite() {
            return domain(format!("gamma must be finite and >= 0, got {gamma}"));
        }
        if !(beta > T::zero() && beta <= T::one()) {
            return domain(format!("beta must lie in (0, 1], got {beta}"));
        }
        Ok(Self { gamma, beta })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// True when `γ > 0`.
    pub fn branches(&self) -> bool {
        self.gamma > T::zero()
    }

    /// Same `β` with a different branching rate.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::new(gamma, self.beta)
    }

    /// `ψ_t(z)`. Accepts `z = +∞` and returns `ψ_t(∞)` for `t > 0`.
    pub fn psi(&self, t: T, z: T) -> Result<T> {
        if !(t >= T::zero()) {
            return domain(format!("psi: time must be >= 0, got {t}"));
        }
        if !(z >= T::zero()) {
            return domain(format!("psi: argument must be >= 0, got {z}"));
        }
        if z.is_infinite() {
            return if t > T::zero() && self.branches() {
                self.psi_inf(t)
            } else {
                Ok(z)
            };
        }
        if z == T::zero() || t == T::zero() || !self.branches() {
            return Ok(z);
        }
        let one = T::one();
        let b = self.beta;
        let denom = one + b + self.gamma * b * t * z.powf(b);
        Ok(z * ((one + b) / denom).powf(one / b))
    }

    /// `ψ_t(∞) = ((1+β)/(γβt))^{1/β}`; needs `t > 0` and `γ > 0`.
    pub fn psi_inf(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return domain(format!("psi_inf: time must be > 0, got {t}"));
        }
        if !self.branches() {
            return domain("psi_inf: gamma = 0 gives an infinite limit");
        }
        let one = T::one();
        let b = self.beta;
        Ok(((one + b) / (self.gamma * b * t)).powf(one / b))
    }

    /// `Q_t(x, {0}) = exp(-x ψ_t(∞))`.
    pub fn extinction_prob(&self, t: T, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return domain(format!("extinction_prob: mass must be >= 0, got {x}"));
        }
        let theta = self.psi_inf(t)?;
        if x == T::zero() {
            return Ok(T::one());
        }
        Ok((-x * theta).exp())
    }

    /// `c(γ, β) = (1/β) ((1+β)/(γβ))^{1/β}`, the constant relating the series
    /// `Σ g(t_{n+1}) ψ_{t_n}(∞)` to the integral `∫ g(y) y^{-1-1/β} dy`.
    pub fn series_constant(&self) -> Result<T> {
        if !self.branches() {
            return domain("series_constant: gamma must be > 0");
        }
        let one = T::one();
        let b = self.beta;
        Ok(((one + b) / (self.gamma * b)).powf(one / b) / b)
    }
}

/// A nonnegative mass; `0` is absorbing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct MassValue<T>(T);

impl<T: Scalar> MassValue<T> {
    pub fn new(value: T) -> Result<Self> {
        if !(value >= T::zero()) || !value.is_finite() {
            return domain(format!("mass must be finite and >= 0, got {value}"));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> T {
        self.0
    }

    pub fn is_extinct(self) -> bool {
        self.0 == T::zero()
    }
}

/// Tuning for the general-`β` sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Number of chained sub-steps per transition.
    pub substeps: usize,
    /// Target accuracy of the tabulated entrance-law CDF.
    pub table_tolerance: f64,
    /// Number of log-spaced abscissae in the table.
    pub table_points: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            substeps: 1,
            table_tolerance: 1e-6,
            table_points: 20_000,
        }
    }
}

/// CDF of the unit-scale entrance mass `V` whose Laplace transform is
/// `1 - (1 + s^{-β})^{-1/β}`. The entrance mass at age `r` is
/// `V / ψ_r(∞)`.
#[derive(Debug, Clone)]
pub struct EntranceTable {
    beta: f64,
    log_y: Vec<f64>,
    cdf: Vec<f64>,
    tail_exponent: f64,
    estimated_error: f64,
    tolerance: f64,
}

const TALBOT_NODES: usize = 24;

/// Fixed-Talbot inversion of a Laplace transform at `t > 0`.
fn talbot<F>(transform: F, t: f64, nodes: usize) -> f64
where
    F: Fn(Complex64) -> Complex64,
{
    let m = nodes as f64;
    let r = 2.0 * m / (5.0 * t);
    let mut acc = 0.5 * (transform(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..nodes {
        let theta = k as f64 * std::f64::consts::PI / m;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let term = (s * t).exp() * transform(s) * Complex64::new(1.0, sigma);
        acc += term.re;
    }
    acc * r / m
}

fn unit_entrance_cdf(beta: f64, y: f64, nodes: usize) -> f64 {
    let transform = |s: Complex64| {
        let inner = Complex64::new(1.0, 0.0) + s.powf(-beta);
        (Complex64::new(1.0, 0.0) - inner.powf(-1.0 / beta)) / s
    };
    talbot(transform, y, nodes)
}

impl EntranceTable {
    pub fn new(beta: f64, config: &SamplerConfig) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return domain(format!("entrance table: beta must lie in (0, 1], got {beta}"));
        }
        let points = config.table_points.max(64);
        let (lo, hi) = ((1e-10f64).ln(), (1e8f64).ln());
        let step = (hi - lo) / (points - 1) as f64;
        let mut log_y = Vec::with_capacity(points);
        let mut cdf = Vec::with_capacity(points);
        let mut running: f64 = 0.0;
        for i in 0..points {
            let ly = lo + step * i as f64;
            let value = unit_entrance_cdf(beta, ly.exp(), TALBOT_NODES).clamp(0.0, 1.0);
            running = running.max(value);
            log_y.push(ly);
            cdf.push(running);
        }
        // Self-consistency: compare against a finer contour on a subset.
        let mut estimated_error: f64 = 0.0;
        for i in (0..points).step_by(points / 50) {
            let y = log_y[i].exp();
            let fine = unit_entrance_cdf(beta, y, TALBOT_NODES + 8).clamp(0.0, 1.0);
            estimated_error = estimated_error.max((fine - cdf[i]).abs());
        }
        let n = points - 1;
        let s1 = (1.0 - cdf[n - 200]).max(f64::MIN_POSITIVE);
        let s2 = (1.0 - cdf[n]).max(f64::MIN_POSITIVE);
        let tail_exponent = ((s1 / s2).ln() / (log_y[n] - log_y[n - 200])).max(beta);
        Ok(Self {
            beta,
            log_y,
            cdf,
            tail_exponent,
            estimated_error,
            tolerance: config.table_tolerance,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Largest discrepancy observed between two contour resolutions.
    pub fn estimated_error(&self) -> f64 {
        self.estimated_error
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Tabulated CDF of the unit-scale mass at `y`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let ly = y.ln();
        let last = self.log_y.len() - 1;
        if ly <= self.log_y[0] {
            return self.cdf[0] * y / self.log_y[0].exp();
        }
        if ly >= self.log_y[last] {
            let s = 1.0 - self.cdf[last];
            return 1.0 - s * (-(ly - self.log_y[last]) * self.tail_exponent).exp();
        }
        let pos = (ly - self.log_y[0]) / (self.log_y[1] - self.log_y[0]);
        let i = (pos.floor() as usize).min(last - 1);
        let w = pos - i as f64;
        self.cdf[i] * (1.0 - w) + self.cdf[i + 1] * w
    }

    /// Inverse-transform a uniform variate into a unit-scale mass.
    pub fn quantile(&self, u: f64) -> f64 {
        let last = self.cdf.len() - 1;
        if u <= self.cdf[0] {
            return self.log_y[0].exp() * (u / self.cdf[0].max(f64::MIN_POSITIVE));
        }
        if u >= self.cdf[last] {
            let s_last = 1.0 - self.cdf[last];
            let s = (1.0 - u).max(f64::MIN_POSITIVE);
            return (self.log_y[last] + (s_last / s).ln() / self.tail_exponent).exp();
        }
        let j = self.cdf.partition_point(|&c| c < u).clamp(1, last);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.log_y[j - 1] * (1.0 - w) + self.log_y[j] * w).exp()
    }
}

/// Samples CSBP transitions and entrance masses for fixed parameters.
///
/// Exact for `β = 1`; for `β < 1` the entrance law comes from an
/// [`EntranceTable`] and [`CsbpSampler::is_approximate`] reports `true`.
#[derive(Debug, Clone)]
pub struct CsbpSampler {
    params: BranchingParams<f64>,
    config: SamplerConfig,
    table: Option<Arc<EntranceTable>>,
}

impl CsbpSampler {
    pub fn new(params: BranchingParams<f64>) -> Result<Self> {
        Self::with_config(params, SamplerConfig::default())
    }

    pub fn with_config(params: BranchingParams<f64>, config: SamplerConfig) -> Result<Self> {
        if config.substeps == 0 {
            return domain("sampler: substeps must be >= 1");
        }
        let table = if params.beta() < 1.0 && params.branches() {
            Some(Arc::new(EntranceTable::new(params.beta(), &config)?))
        } else {
            None
        };
        Ok(Self { params, config, table })
    }

    pub fn params(&self) -> &BranchingParams<f64> {
        &self.params
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn table(&self) -> Option<&EntranceTable> {
        self.table.as_deref()
    }

    /// Samples from general-`β` configurations rely on a numerical table.
    pub fn is_approximate(&self) -> bool {
        self.table.is_some()
    }

    /// A draw from the normalised entrance law `κ_r / ψ_r(∞)`.
    pub fn entrance_mass<R: RngCore + ?Sized>(&self, r: f64, rng: &mut R) -> Result<f64> {
        let theta = self.params.psi_inf(r)?;
        Ok(self.entrance_unchecked(theta, rng))
    }

    fn entrance_unchecked<R: RngCore + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match &self.table {
            None => Exp::new(theta).expect("positive rate").sample(rng),
            Some(table) => {
                // open interval (0, 1)
                let u: f64 = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                table.quantile(u) / theta
            }
        }
    }

    /// A draw from `Q_t(x, ·)`. With `γ = 0` the mass is constant.
    pub fn transition<R: RngCore + ?Sized>(&self, t: f64, x: f64, rng: &mut R) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("transition: time must be > 0, got {t}"));
        }
        if !(x >= 0.0) || !x.is_finite() {
            return domain(format!("transition: mass must be finite and >= 0, got {x}"));
        }
        if x == 0.0 || !self.params.branches() {
            return Ok(x);
        }
        let h = t / self.config.substeps as f64;
        let theta = self.params.psi_inf(h)?;
        let mut mass = x;
        for _ in 0..self.config.substeps {
            if mass == 0.0 {
                break;
            }
            mass = self.compound_poisson(mass * theta, theta, rng);
        }
        Ok(mass)
    }

    fn compound_poisson<R: RngCore + ?Sized>(&self, lambda: f64, theta: f64, rng: &mut R) -> f64 {
        let count = Poisson::new(lambda).expect("positive intensity").sample(rng);
        if count == 0.0 {
            return 0.0;
        }
        match &self.table {
            None => Gamma::new(count, 1.0 / theta).expect("valid gamma").sample(rng),
            Some(_) => (0..count as u64).map(|_| self.entrance_unchecked(theta, rng)).sum(),
        }
    }

    /// Chains transitions along `grid`, starting from `x0` at time 0. A
    /// leading grid point at time 0 carries `x0` itself.
    pub fn path<R: RngCore + ?Sized>(&self, x0: f64, grid: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if !(x0 >= 0.0) {
            return domain(format!("path: initial mass must be >= 0, got {x0}"));
        }
        if grid.first().is_some_and(|&t| t < 0.0) {
            return domain("path: grid must start at a nonnegative time");
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("path: grid must be strictly increasing");
        }
        let mut out = Vec::with_capacity(grid.len());
        let (mut now, mut mass) = (0.0, x0);
        for &t in grid {
            if t > now {
                mass = self.transition(t - now, mass, rng)?;
                now = t;
            }
            out.push(mass);
        }
        Ok(out)
    }
}

/// Convenience wrapper for one transition draw.
pub fn sample_transition<R: RngCore + ?Sized>(
    params: BranchingParams<f64>,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<f64> {
    CsbpSampler::new(params)?.transition(t, x, rng)
}

/// Convenience wrapper for one entrance-mass draw.
pub fn sample_entrance_mass<R: RngCore + ?Sized>(params: BranchingParams<f64>, r: f64, rng: &mut R) -> Result<f64> {
    CsbpSampler::new(params)?.entrance_mass(r, rng)
}
