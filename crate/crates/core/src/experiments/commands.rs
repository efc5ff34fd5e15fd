//! The subcommands behind the `scbm` binary.

use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{parse_growth, ConfigFile};
use super::output::{svg_line_chart, write_csv, CsvRow, Series};
use super::{
    block_survival_closed_form, block_survival_mc, block_survival_probability, build_sequences, integral_partial,
    series_eval, survival_experiment, Classification, SequenceFlag, SurvivalConfig,
};
use crate::branching::{BranchingParams, CsbpSampler};
use crate::error::{Error, Result};
use crate::harness::{
    absorbing_extinction_check, corollary_bound_check, laplace_duality_check, occupation_duality_check, replica_rng,
    AbsorbingConfig, ComparisonReport, CorollaryConfig, LaplaceConfig, OccupationConfig, Rhs, Verdict,
};
use crate::lattice::Site;
use crate::oracle::{array_law_exact, check_generator_duality, ArrayLawConfig, DualGenerator};
use crate::scbm::MeasureSpec;
use crate::stats::{ks_one_sample, mean_stderr};

/// Residual bound for the exhaustive generator identity.
pub const GENERATOR_TOLERANCE: f64 = 1e-9;
/// Smallest residual the negative control must produce.
pub const NEGATIVE_CONTROL_MIN: f64 = 0.1;
/// Bound on both the array-law distance and its error budget.
pub const ARRAY_LAW_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    VerifyDuality,
    CsbpCheck,
    ScbmDuality,
    IntegralTest,
    Survival,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyDuality => "verify-duality",
            Self::CsbpCheck => "csbp-check",
            Self::ScbmDuality => "scbm-duality",
            Self::IntegralTest => "integral-test",
            Self::Survival => "survival",
        }
    }
}

/// Seed, output directory and SVG switch after CLI overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub out: PathBuf,
    pub svg: bool,
}

impl RunSettings {
    pub fn resolve(config: &ConfigFile, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        Ok(Self {
            seed: match seed {
                Some(s) => s,
                None => config.u64_or("run", "seed", 1)?,
            },
            out: out.unwrap_or_else(|| PathBuf::from(config.raw("run", "out").unwrap_or("out"))),
            svg: config.bool_or("run", "svg", false)?,
        })
    }
}

/// A named pass/fail line.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub rows: Vec<CsvRow>,
    pub checks: Vec<CheckLine>,
    pub csv_path: PathBuf,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Everything read from the configuration before any computation starts.
enum Plan {
    VerifyDuality(DualityPlan),
    CsbpCheck(CsbpPlan),
    ScbmDuality(ScbmPlan),
    IntegralTest(IntegralPlan),
    Survival(SurvivalPlan),
}

fn plan(command: Command, config: &ConfigFile) -> Result<Plan> {
    Ok(match command {
        Command::VerifyDuality => Plan::VerifyDuality(DualityPlan::read(config)?),
        Command::CsbpCheck => Plan::CsbpCheck(CsbpPlan::read(config)?),
        Command::ScbmDuality => Plan::ScbmDuality(ScbmPlan::read(config)?),
        Command::IntegralTest => Plan::IntegralTest(IntegralPlan::read(config)?),
        Command::Survival => Plan::Survival(SurvivalPlan::read(config)?),
    })
}

/// Validates the configuration, runs the subcommand and writes its CSV (and
/// SVG when enabled) into `settings.out`.
pub fn execute(command: Command, config: &ConfigFile, settings: &RunSettings) -> Result<Outcome> {
    let plan = plan(command, config)?;
    std::fs::create_dir_all(&settings.out)?;
    let seed = settings.seed;
    let (rows, checks, svg) = match plan {
        Plan::VerifyDuality(p) => p.run(seed)?,
        Plan::CsbpCheck(p) => p.run(seed)?,
        Plan::ScbmDuality(p) => p.run(seed)?,
        Plan::IntegralTest(p) => p.run(seed)?,
        Plan::Survival(p) => p.run(seed)?,
    };
    let csv_path = settings.out.join(format!("{}.csv", command.name()));
    write_csv(&csv_path, &rows)?;
    if settings.svg {
        if let Some(svg) = svg {
            std::fs::write(settings.out.join(format!("{}.svg", command.name())), svg)?;
        }
    }
    Ok(Outcome { rows, checks, csv_path })
}

type RunResult = Result<(Vec<CsvRow>, Vec<CheckLine>, Option<String>)>;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(format!("{name} must be > 0, got {v}")))
    }
}

fn at_least_two(name: &str, n: usize) -> Result<usize> {
    if n >= 2 {
        Ok(n)
    } else {
        Err(config_err(format!("{name} must be >= 2, got {n}")))
    }
}

struct DualityPlan {
    systems: Vec<(usize, usize)>,
    barriers: (i64, i64),
    radius: i64,
    law: ArrayLawConfig,
    times: Vec<f64>,
    law_tolerance: f64,
}

impl DualityPlan {
    fn read(c: &ConfigFile) -> Result<Self> {
        let systems = c
            .list_or("duality", "systems", &["1x2", "2x2", "2x3", "3x2"])
            .iter()
            .map(|s| {
                let (m, n) = s
                    .split_once('x')
                    .ok_or_else(|| config_err(format!("[duality] systems: `{s}` is not MxN")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| config_err(format!("[duality] systems: `{s}` is not MxN")))
                };
                let (m, n) = (parse(m)?, parse(n)?);
                if m == 0 || n < 2 || m * (n - 1) > 20 {
                    return Err(config_err(format!("[duality] systems: `{s}` needs m >= 1, n >= 2")));
                }
                Ok((m, n))
            })
            .collect::<Result<Vec<_>>>()?;
        let b = c.i64_list_or("duality", "barriers", &[0, 4])?;
        if b.len() != 2 || b[1] - b[0] < 2 {
            return Err(config_err(
                "[duality] barriers must be two integers a, b with b - a >= 2",
            ));
        }
        let radius = c.i64_or("duality", "radius", 8)?;
        if radius < 1 {
            return Err(config_err("[duality] radius must be >= 1"));
        }
        let x = c.i64_list_or("duality", "law_x", &[1, 3])?;
        let y: Vec<Site> = c
            .f64_list_or("duality", "law_y", &[-0.5, 2.5])?
            .iter()
            .map(|&v| {
                let d = 2.0 * v;
                if d.fract() != 0.0 || (d as i64) % 2 == 0 {
                    Err(config_err(format!("[duality] law_y: {v} is not a half-integer")))
                } else {
                    Ok(Site::from_doubled(d as i64))
                }
            })
            .collect::<Result<_>>()?;
        let times = c.f64_list_or("duality", "times", &[0.25, 0.5, 1.0])?;
        if times.iter().any(|&t| !(t >= 0.0)) {
            return Err(config_err("[duality] times must be >= 0"));
        }
        let law_tolerance = positive("[duality] law_tolerance", c.f64_or("duality", "law_tolerance", 1e-6)?)?;
        Ok(Self {
            systems,
            barriers: (b[0], b[1]),
            radius,
            law: ArrayLawConfig {
                x,
                y,
                barriers: (b[0], b[1]),
                t: 0.0,
                radius: None,
            },
            times,
            law_tolerance,
        })
    }

    fn run(self, seed: u64) -> RunResult {
        let mut rows = Vec::new();
        let mut checks = Vec::new();
        for (i, &(m, n)) in self.systems.iter().enumerate() {
            let label = format!("{m}x{n}");
            let ok = check_generator_duality(m, n, self.barriers, self.radius, DualGenerator::Reflected)?;
            let neg = check_generator_duality(m, n, self.barriers, self.radius, DualGenerator::Absorbed)?;
            let pass = ok.max_residual <= GENERATOR_TOLERANCE;
            let neg_pass = neg.max_residual > NEGATIVE_CONTROL_MIN;
            rows.push(
                CsvRow::new("generator_duality", seed, i)
                    .param("system", &label)
                    .at(self.radius)
                    .value(ok.max_residual, None)
                    .flag(if pass { "pass" } else { "fail" }),
            );
            rows.push(
                CsvRow::new("generator_negative_control", seed, i)
                    .param("system", &label)
                    .at(self.radius)
                    .value(neg.max_residual, None)
                    .flag(if neg_pass { "pass" } else { "fail" }),
            );
            checks.push(check(
                format!("generator duality {label}"),
                pass,
                format!("residual {:e}", ok.max_residual),
            ));
            checks.push(check(
                format!("negative control {label}"),
                neg_pass,
                format!("residual {}", neg.max_residual),
            ));
        }
        for (i, &t) in self.times.iter().enumerate() {
            let cfg = ArrayLawConfig { t, ..self.law.clone() };
            let r = array_law_exact(&cfg, self.law_tolerance)?;
            let pass = r.total_variation <= ARRAY_LAW_TOLERANCE && r.error_budget <= ARRAY_LAW_TOLERANCE;
            rows.push(
                CsvRow::new("array_law_tv", seed, i)
                    .param("t", t)
                    .at(r.forward_states + r.backward_states)
                    .value(r.total_variation, Some(r.error_budget))
                    .flag(if pass { "pass" } else { "fail" }),
            );
            checks.push(check(
                format!("array law t={t}"),
                pass,
                format!("tv {:e}, budget {:e}", r.total_variation, r.error_budget),
            ));
        }
        Ok((rows, checks, None))
    }
}

struct CsbpPlan {
    params: BranchingParams<f64>,
    t: f64,
    x: f64,
    replicas: usize,
    z: Vec<f64>,
    entrance_r: f64,
    entrance_replicas: usize,
}

impl CsbpPlan {
    fn read(c: &ConfigFile) -> Result<Self> {
        let params = c.branching()?;
        if !params.branches() {
            return Err(config_err("csbp-check needs gamma > 0"));
        }
        Ok(Self {
            params,
            t: positive("[csbp] t", c.f64_or("csbp", "t", 1.0)?)?,
            x: positive("[csbp] x", c.f64_or("csbp", "x", 1.0)?)?,
            replicas: at_least_two("[csbp] replicas", c.usize_or("csbp", "replicas", 100_000)?)?,
            z: c.f64_list_or("csbp", "z", &[0.5, 1.0, 2.0])?,
            entrance_r: positive("[csbp] entrance_r", c.f64_or("csbp", "entrance_r", 1.0)?)?,
            entrance_replicas: at_least_two(
                "[csbp] entrance_replicas",
                c.usize_or("csbp", "entrance_replicas", 10_000)?,
            )?,
        })
    }

    fn run(self, seed: u64) -> RunResult {
        let sampler = CsbpSampler::new(self.params)?;
        let smoke = sampler.is_approximate();
        let samples: Vec<f64> = (0..self.replicas)
            .into_par_iter()
            .map(|i| sampler.transition(self.t, self.x, &mut replica_rng(seed, i as u64)))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        let mut checks = Vec::new();
        let mut compare = |name: &str, param: String, values: Vec<f64>, exact: f64, rows: &mut Vec<CsvRow>| {
            let (m, se) = mean_stderr(&values);
            let pass = (m - exact).abs() <= 3.0 * se || (se == 0.0 && m == exact);
            let idx = rows.len();
            rows.push(
                CsvRow::new(name, seed, idx)
                    .param(&param, "")
                    .at(self.replicas)
                    .value(m, Some(se))
                    .flag(format!("exact={exact}")),
            );
            checks.push(check(
                format!("{name} {param}"),
                pass || smoke,
                format!("{m} ± {se} vs {exact}"),
            ));
        };
        let extinct: Vec<f64> = samples.iter().map(|&s| f64::from(s == 0.0)).collect();
        compare(
            "csbp_extinction",
            "x".into(),
            extinct,
            self.params.extinction_prob(self.t, self.x)?,
            &mut rows,
        );
        compare("csbp_mean", "x".into(), samples.clone(), self.x, &mut rows);
        for &z in &self.z {
            let lt: Vec<f64> = samples.iter().map(|&s| (-z * s).exp()).collect();
            let exact = (-self.x * self.params.psi(self.t, z)?).exp();
            compare("csbp_laplace", format!("z={z}"), lt, exact, &mut rows);
        }
        let entrance: Vec<f64> = (0..self.entrance_replicas)
            .into_par_iter()
            .map(|i| sampler.entrance_mass(self.entrance_r, &mut replica_rng(seed.wrapping_add(1), i as u64)))
            .collect::<Result<_>>()?;
        let theta = self.params.psi_inf(self.entrance_r)?;
        let ks = match sampler.table() {
            None => ks_one_sample(&entrance, |y| 1.0 - (-theta * y).exp()),
            Some(table) => ks_one_sample(&entrance, |y| table.cdf(theta * y)),
        };
        let pass = ks.p_value > 0.01;
        rows.push(
            CsvRow::new("entrance_ks", seed, rows.len())
                .param("r", self.entrance_r)
                .at(self.entrance_replicas)
                .value(ks.statistic, None)
                .flag(format!("p={}", ks.p_value)),
        );
        checks.push(check("entrance law KS", pass || smoke, format!("p = {}", ks.p_value)));
        if smoke {
            for r in &mut rows {
                r.flag = format!("{};smoke", r.flag);
            }
        }
        Ok((rows, checks, None))
    }
}

const SCBM_CHECKS: [&str; 6] = [
    "laplace",
    "negative_control",
    "absorbing",
    "occupation_gamma0",
    "occupation",
    "corollary",
];

struct ScbmPlan {
    params: BranchingParams<f64>,
    replicas: usize,
    negative_replicas: usize,
    max_step: f64,
    truncation: f64,
    resolution: f64,
    checks: Vec<String>,
}

impl ScbmPlan {
    fn read(c: &ConfigFile) -> Result<Self> {
        let checks = c.list_or("scbm", "checks", &SCBM_CHECKS);
        if let Some(bad) = checks.iter().find(|k| !SCBM_CHECKS.contains(&k.as_str())) {
            return Err(config_err(format!("[scbm] checks: unknown check `{bad}`")));
        }
        Ok(Self {
            params: c.branching()?,
            replicas: at_least_two("[scbm] replicas", c.usize_or("scbm", "replicas", 10_000)?)?,
            negative_replicas: at_least_two(
                "[scbm] negative_replicas",
                c.usize_or("scbm", "negative_replicas", 100_000)?,
            )?,
            max_step: positive("[scbm] max_step", c.f64_or("scbm", "max_step", 0.01)?)?,
            truncation: positive("[scbm] truncation", c.f64_or("scbm", "truncation", 8.0)?)?,
            resolution: positive("[scbm] resolution", c.f64_or("scbm", "resolution", 0.1)?)?,
            checks,
        })
    }

    fn run(self, seed: u64) -> RunResult {
        let mut rows = Vec::new();
        let mut checks = Vec::new();
        let approximate = self.params.beta() < 1.0;
        let zero = self.params.with_gamma(0.0)?;
        for (i, name) in self.checks.iter().enumerate() {
            let s = seed.wrapping_add(i as u64);
            let report = match name.as_str() {
                "laplace" | "negative_control" => {
                    let negative = name == "negative_control";
                    let n = if negative {
                        self.negative_replicas
                    } else {
                        self.replicas
                    };
                    let mut cfg = LaplaceConfig::standard(n, s);
                    cfg.params = self.params;
                    cfg.max_step = self.max_step;
                    cfg.allow_approximate = true;
                    if negative {
                        cfg.rhs_gamma_factor = 1.2;
                    }
                    laplace_duality_check(&cfg)?
                }
                "absorbing" => {
                    let mut cfg = AbsorbingConfig::standard(self.replicas, s);
                    cfg.params = zero;
                    cfg.max_step = self.max_step;
                    cfg.truncation = self.truncation;
                    cfg.resolution = self.resolution;
                    absorbing_extinction_check(&cfg)?
                }
                "occupation_gamma0" | "occupation" => {
                    let p = if name == "occupation" { self.params } else { zero };
                    if approximate && p.branches() {
                        rows.push(
                            CsvRow::new(name, s, i)
                                .value(f64::NAN, None)
                                .flag("skipped_approximate"),
                        );
                        continue;
                    }
                    let mut cfg = OccupationConfig::standard(0.0, self.replicas, s);
                    cfg.params = p;
                    cfg.max_step = self.max_step;
                    cfg.truncation = self.truncation;
                    cfg.resolution = self.resolution;
                    occupation_duality_check(&cfg)?
                }
                "corollary" => {
                    if approximate || !self.params.branches() {
                        rows.push(CsvRow::new(name, s, i).value(f64::NAN, None).flag("skipped"));
                        continue;
                    }
                    let mut cfg = CorollaryConfig::standard(self.replicas, s);
                    cfg.params = self.params;
                    cfg.max_step = self.max_step;
                    cfg.mu = MeasureSpec::lebesgue(-4.0, 4.0)?;
                    corollary_bound_check(&cfg)?
                }
                _ => unreachable!("validated check name"),
            };
            let expected_fail = name == "negative_control";
            let passed = report.verdict.passed() != expected_fail;
            push_report(&mut rows, name, s, &report);
            checks.push(check(
                name.clone(),
                passed || report.approximate,
                format!(
                    "lhs {} ± {}, rhs {} ± {}, z {}{}",
                    report.lhs.mean,
                    report.lhs.stderr,
                    report.rhs.value(),
                    report.rhs.stderr(),
                    report.z_score,
                    if report.approximate { " (smoke)" } else { "" }
                ),
            ));
        }
        Ok((rows, checks, None))
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Consistent => "consistent",
        Verdict::Inconsistent => "inconsistent",
        Verdict::OneSidedOk => "one_sided_ok",
    }
}

fn push_report(rows: &mut Vec<CsvRow>, name: &str, seed: u64, r: &ComparisonReport) {
    let gamma = "gamma";
    let tag = if r.approximate { ";smoke" } else { "" };
    rows.push(
        CsvRow::new(name, seed, 0)
            .param(gamma, &r.name)
            .at(r.lhs.n)
            .value(r.lhs.mean, Some(r.lhs.stderr))
            .flag(format!("lhs{tag}")),
    );
    let (flag, n) = match r.rhs {
        Rhs::Exact(_) => ("rhs_exact", r.lhs.n),
        Rhs::Estimate(e) => ("rhs", e.n),
    };
    rows.push(
        CsvRow::new(name, seed, 1)
            .param(gamma, &r.name)
            .at(n)
            .value(r.rhs.value(), Some(r.rhs.stderr()))
            .flag(format!("{flag}{tag}")),
    );
    rows.push(
        CsvRow::new(name, seed, 2)
            .param(gamma, &r.name)
            .at(r.lhs.n)
            .value(r.z_score, None)
            .flag(format!("{}{tag}", verdict_name(r.verdict))),
    );
}

struct IntegralPlan {
    params: BranchingParams<f64>,
    horizon: f64,
    terms: usize,
    delta: f64,
    sequence_length: usize,
    growth_spec: String,
    exponents: Vec<f64>,
    block_replicas: usize,
}

impl IntegralPlan {
    fn read(c: &ConfigFile) -> Result<Self> {
        let params = c.branching()?;
        if !params.branches() {
            return Err(config_err("integral-test needs gamma > 0"));
        }
        let horizon = c.f64_or("integral", "horizon", 1e4)?;
        if !(horizon > 1.0) {
            return Err(config_err("[integral] horizon must be > 1"));
        }
        let delta = c.f64_or("integral", "delta", 0.75)?;
        if !(delta > 0.5 && delta < 1.0) {
            return Err(config_err("[integral] delta must lie in (1/2, 1)"));
        }
        let growth_spec = c.raw("integral", "growth").unwrap_or("power:1:1").to_owned();
        parse_growth(&growth_spec)?;
        Ok(Self {
            params,
            horizon,
            terms: c.usize_or("integral", "terms", 60)?.max(1),
            delta,
            sequence_length: c.usize_or("integral", "sequence_length", 15)?.max(1),
            growth_spec,
            exponents: c.f64_list_or("integral", "exponents", &[0.3, 0.6, 1.0, 1.5])?,
            block_replicas: at_least_two(
                "[integral] block_replicas",
                c.usize_or("integral", "block_replicas", 100_000)?,
            )?,
        })
    }

    fn run(self, seed: u64) -> RunResult {
        let beta = self.params.beta();
        let mut rows = Vec::new();
        let mut checks = Vec::new();
        let mut series_plot = Vec::new();
        for (i, &p) in self.exponents.iter().enumerate() {
            let g = parse_growth(&format!("power:1:{p}"))?;
            let ip = integral_partial(&g, beta, self.horizon)?;
            let class = match ip.classification {
                Classification::Convergent => "convergent",
                Classification::Divergent => "divergent",
            };
            for (k, (v, mult)) in ip.growth.iter().zip([1.0, 2.0, 4.0]).enumerate() {
                rows.push(
                    CsvRow::new("integral_partial", seed, 3 * i + k)
                        .param("exponent", p)
                        .at(mult * self.horizon)
                        .value(*v, (k == 0).then_some(ip.error))
                        .flag(class),
                );
            }
            if let Some(limit) = ip.limit {
                rows.push(
                    CsvRow::new("integral_limit", seed, i)
                        .param("exponent", p)
                        .at("inf")
                        .value(limit, None)
                        .flag("extrapolated"),
                );
            }
            let s = series_eval(&g, &self.params, self.terms, self.delta)?;
            for (n, (term, sum)) in s.terms.iter().zip(&s.partial_sums).enumerate() {
                rows.push(
                    CsvRow::new("series_term", seed, n)
                        .param("exponent", p)
                        .at(n)
                        .value(*term, None)
                        .flag(format!("partial_sum={sum}")),
                );
            }
            let tail = s.tail_partial_sums.last().copied().unwrap_or(0.0);
            rows.push(
                CsvRow::new("series_tail", seed, i)
                    .param("exponent", p)
                    .at(self.terms)
                    .value(tail, None)
                    .flag(format!("delta={}", self.delta)),
            );
            let agree = s.bounded == (ip.classification == Classification::Convergent);
            checks.push(check(
                format!("series vs integral p={p}"),
                agree,
                format!("bounded={} integral={class}", s.bounded),
            ));
            series_plot.push(Series {
                name: format!("p={p}"),
                points: s.partial_sums.iter().enumerate().map(|(n, v)| (n as f64, *v)).collect(),
            });
        }

        let g = parse_growth(&self.growth_spec)?;
        let seq = build_sequences(&g, self.sequence_length)?;
        for n in 0..seq.len() {
            let flag = match seq.flags[n] {
                SequenceFlag::Valid => "valid",
                SequenceFlag::EmptyWindow => "empty_window",
                SequenceFlag::Terminated => "terminated",
            };
            let mut entries = vec![("t", seq.t[n]), ("r", seq.r[n])];
            if let Some(l) = seq.l[n] {
                entries.push(("l", l));
            }
            for (name, v) in entries {
                rows.push(
                    CsvRow::new("sequence", seed, n)
                        .param(name, &self.growth_spec)
                        .at(n)
                        .value(v, None)
                        .flag(flag),
                );
            }
            if n >= 1 {
                let b = block_survival_closed_form(&self.params, n, &seq)?;
                rows.push(
                    CsvRow::new("block_survival", seed, n)
                        .param("growth", &self.growth_spec)
                        .at(n)
                        .value(b.probability, None)
                        .flag(if b.empty_window { "empty_window" } else { "closed_form" }),
                );
            }
        }
        let eqng = seq.eqng.iter().all(|&b| b);
        let diff = seq.intervaldiff.iter().flatten().all(|&b| b);
        checks.push(check("sequence eqng", eqng, format!("{} indices", seq.eqng.len())));
        checks.push(check(
            "sequence intervaldiff",
            diff,
            format!("{} indices", seq.intervaldiff.len()),
        ));

        let (t_anchor, width) = (3.0, 0.75);
        let exact = block_survival_probability(&self.params, t_anchor, width)?;
        let mc = block_survival_mc(self.params, t_anchor, width, self.block_replicas, seed)?;
        let pass = (mc.mean - exact).abs() <= 3.0 * mc.stderr;
        rows.push(
            CsvRow::new("block_survival_mc", seed, 0)
                .param("width", width)
                .at(t_anchor)
                .value(mc.mean, Some(mc.stderr))
                .flag(format!("exact={exact}")),
        );
        checks.push(check(
            "block survival anchor",
            pass,
            format!("{} ± {} vs {exact}", mc.mean, mc.stderr),
        ));
        let svg = svg_line_chart("Series partial sums", "n", "partial sum", &series_plot);
        Ok((rows, checks, Some(svg)))
    }
}

struct SurvivalPlan {
    config: SurvivalConfig,
    specs: Vec<String>,
}

impl SurvivalPlan {
    fn read(c: &ConfigFile) -> Result<Self> {
        let specs = c.list_or("survival", "growths", &["constant:1", "power:1:1"]);
        if specs.is_empty() {
            return Err(config_err("[survival] growths must not be empty"));
        }
        let growths = specs
            .iter()
            .map(|s| Ok((s.clone(), parse_growth(s)?)))
            .collect::<Result<Vec<_>>>()?;
        let horizons = c.f64_list_or("survival", "horizons", &[4.0, 16.0, 64.0])?;
        if horizons.is_empty() || horizons[0] <= 0.0 || horizons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("[survival] horizons must be positive and increasing"));
        }
        let truncation = c.f64_or("survival", "truncation", 50.0)?;
        if !(truncation >= 0.0) {
            return Err(config_err("[survival] truncation must be >= 0"));
        }
        let params = c.branching()?;
        if !params.branches() {
            return Err(config_err("survival needs gamma > 0"));
        }
        let t0 = c.optional_f64("survival", "t0")?;
        if let Some(t0) = t0 {
            if !(t0 > 0.0 && t0 <= horizons[0]) {
                return Err(config_err("[survival] t0 must lie in (0, first horizon]"));
            }
        }
        Ok(Self {
            config: SurvivalConfig {
                params,
                truncation,
                horizons,
                growths,
                n: at_least_two("[survival] replicas", c.usize_or("survival", "replicas", 2000)?)?,
                seed: 0,
                max_step: positive("[survival] max_step", c.f64_or("survival", "max_step", 0.05)?)?,
                grid_step: positive("[survival] grid_step", c.f64_or("survival", "grid_step", 0.5)?)?,
                t0,
            },
            specs,
        })
    }

    fn run(self, seed: u64) -> RunResult {
        let config = SurvivalConfig { seed, ..self.config };
        let table = survival_experiment(&config)?;
        let mut rows = Vec::new();
        let mut plot = Vec::new();
        let h = config.horizons.len();
        for (i, r) in table.iter().enumerate() {
            rows.push(
                CsvRow::new("survival_alive", seed, i)
                    .param("growth", &r.growth)
                    .at(r.horizon)
                    .value(r.alive.mean, Some(r.alive.stderr))
                    .flag(format!("censored={}", r.censored)),
            );
            rows.push(
                CsvRow::new("survival_tau", seed, i)
                    .param("growth", &r.growth)
                    .at(r.horizon)
                    .value(r.tau_reached.mean, Some(r.tau_reached.stderr))
                    .flag(format!("censored={}", r.censored)),
            );
        }
        for (gi, spec) in self.specs.iter().enumerate() {
            plot.push(Series {
                name: spec.clone(),
                points: table[gi * h..(gi + 1) * h]
                    .iter()
                    .map(|r| (r.horizon, r.alive.mean))
                    .collect(),
            });
        }
        let first = &table[..h];
        let decreasing = first.windows(2).all(|w| w[1].alive.mean < w[0].alive.mean);
        let mut checks = vec![check(
            format!("{} strictly decreasing", self.specs[0]),
            decreasing,
            first
                .iter()
                .map(|r| r.alive.mean.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        )];
        for gi in 1..self.specs.len() {
            let other = &table[gi * h..(gi + 1) * h];
            let dominates = other.iter().zip(first).all(|(o, f)| o.alive.mean >= f.alive.mean);
            checks.push(check(
                format!("{} dominates {}", self.specs[gi], self.specs[0]),
                dominates,
                other
                    .iter()
                    .map(|r| r.alive.mean.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            ));
        }
        let svg = svg_line_chart("Window survival", "horizon", "fraction alive", &plot);
        Ok((rows, checks, Some(svg)))
    }
}
