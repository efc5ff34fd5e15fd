//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command as Process;
use std::time::Instant;

use rayon::prelude::*;
use scbm::branching::{BranchingParams, CsbpSampler};
use scbm::experiments::{
    block_survival_closed_form, block_survival_mc, block_survival_probability, build_sequences, integral_partial,
    series_eval, survival_experiment, SurvivalConfig,
};
use scbm::harness::{
    absorbing_extinction_check, corollary_bound_check, laplace_duality_check, occupation_duality_check, replica_rng,
    AbsorbingConfig, CorollaryConfig, LaplaceConfig, OccupationConfig, Verdict,
};
use scbm::lattice::Site;
use scbm::oracle::{array_law_exact, check_generator_duality, ArrayLawConfig, DualGenerator};
use scbm::stats::{ks_one_sample, mean_stderr};
use scbm::Growth;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn params(gamma: f64, beta: f64) -> BranchingParams<f64> {
    BranchingParams::new(gamma, beta).unwrap()
}

fn within(mean: f64, se: f64, exact: f64) -> bool {
    (mean - exact).abs() <= 3.0 * se
}

fn generator_duality() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut weakest_control = f64::INFINITY;
    for (m, n) in [(1, 2), (2, 2), (2, 3), (3, 2)] {
        worst = worst.max(
            check_generator_duality(m, n, (0, 4), 8, DualGenerator::Reflected)
                .unwrap()
                .max_residual,
        );
        weakest_control = weakest_control.min(
            check_generator_duality(m, n, (0, 4), 8, DualGenerator::Absorbed)
                .unwrap()
                .max_residual,
        );
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && weakest_control > 0.1 && secs < 60.0,
        format!("max residual {worst:e}, smallest negative-control residual {weakest_control}, {secs:.1}s"),
    )
}

fn array_laws() -> Outcome {
    let start = Instant::now();
    let mut worst_tv = 0.0f64;
    let mut worst_budget = 0.0f64;
    for t in [0.25, 0.5, 1.0] {
        let cfg = ArrayLawConfig {
            x: vec![1, 3],
            y: vec![Site::half(-1), Site::half(2)],
            barriers: (0, 4),
            t,
            radius: None,
        };
        let r = array_law_exact(&cfg, 1e-6).unwrap();
        worst_tv = worst_tv.max(r.total_variation);
        worst_budget = worst_budget.max(r.error_budget);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_tv <= 1e-3 && worst_budget <= 1e-3 && secs < 120.0,
        format!("max TV {worst_tv:e}, max budget {worst_budget:e}, {secs:.1}s"),
    )
}

fn psi_flow() -> Outcome {
    let pts: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let mut worst = 0.0f64;
    for gamma in [0.5, 1.0, 2.0] {
        for beta in [0.25, 0.5, 1.0] {
            let p = params(gamma, beta);
            for &s in &pts {
                for &t in &pts {
                    for &z in &pts {
                        let lhs = p.psi(s, p.psi(t, z).unwrap()).unwrap();
                        let rhs = p.psi(s + t, z).unwrap();
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
        }
    }
    let p = params(2.0, 1.0);
    let anchor = p.psi(1.0, p.psi(1.0, 1.0).unwrap()).unwrap();
    let anchor_err = (anchor - 1.0 / 3.0).abs();
    outcome(
        worst <= 1e-12 && anchor_err <= 1e-15,
        format!("max flow error {worst:e} over [0,4]^3 step 0.5, anchor error {anchor_err:e}"),
    )
}

fn csbp_sampler() -> Outcome {
    let start = Instant::now();
    let p = params(2.0, 1.0);
    let sampler = CsbpSampler::new(p).unwrap();
    let samples: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|i| sampler.transition(1.0, 1.0, &mut replica_rng(404, i)).unwrap())
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut test = |name: &str, values: Vec<f64>, exact: f64| {
        let (m, se) = mean_stderr(&values);
        ok &= within(m, se, exact);
        detail.push(format!("{name} {m:.5}±{se:.5} vs {exact:.5}"));
    };
    test(
        "extinct",
        samples.iter().map(|&s| f64::from(s == 0.0)).collect(),
        (-1.0f64).exp(),
    );
    test("mean", samples.clone(), 1.0);
    for z in [0.5, 1.0, 2.0] {
        let exact = (-p.psi(1.0, z).unwrap()).exp();
        test(
            &format!("L({z})"),
            samples.iter().map(|&s| (-z * s).exp()).collect(),
            exact,
        );
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(ok && secs < 30.0, format!("{}, {secs:.1}s", detail.join("; ")))
}

fn entrance_law() -> Outcome {
    let sampler = CsbpSampler::new(params(2.0, 1.0)).unwrap();
    let draws: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|i| sampler.entrance_mass(1.0, &mut replica_rng(505, i)).unwrap())
        .collect();
    let ks = ks_one_sample(&draws, |y| 1.0 - (-y).exp());
    outcome(
        ks.p_value > 0.01,
        format!("KS D = {:.4}, p = {:.3}", ks.statistic, ks.p_value),
    )
}

fn extinction_duality() -> Outcome {
    let start = Instant::now();
    let r = absorbing_extinction_check(&AbsorbingConfig::standard(10_000, 606)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let anchor = (r.rhs.value() - 0.46607).abs() < 1e-5;
    outcome(
        r.verdict == Verdict::Consistent && anchor && secs < 600.0,
        format!(
            "LHS {:.4}±{:.4}, RHS {:.5}, z {:.2}, {secs:.1}s",
            r.lhs.mean,
            r.lhs.stderr,
            r.rhs.value(),
            r.z_score
        ),
    )
}

fn laplace_duality() -> Outcome {
    let r = laplace_duality_check(&LaplaceConfig::standard(10_000, 707)).unwrap();
    let mut neg = LaplaceConfig::standard(100_000, 708);
    neg.rhs_gamma_factor = 1.2;
    let n = laplace_duality_check(&neg).unwrap();
    outcome(
        r.z_score.abs() <= 3.0 && !r.approximate && n.z_score.abs() > 3.0,
        format!("z {:.2}; perturbed-gamma control z {:.2}", r.z_score, n.z_score),
    )
}

fn occupation_duality() -> Outcome {
    let eq = occupation_duality_check(&OccupationConfig::standard(0.0, 10_000, 808)).unwrap();
    let one = occupation_duality_check(&OccupationConfig::standard(2.0, 10_000, 809)).unwrap();
    let cor = corollary_bound_check(&CorollaryConfig::standard(10_000, 810)).unwrap();
    outcome(
        eq.z_score.abs() <= 3.0 && one.verdict == Verdict::OneSidedOk && cor.verdict == Verdict::OneSidedOk,
        format!(
            "gamma=0 z {:.2}; gamma=2 LHS {:.4} vs RHS {:.4}; corollary LHS {:.4} vs RHS {:.4}",
            eq.z_score,
            one.lhs.mean,
            one.rhs.value(),
            cor.lhs.mean,
            cor.rhs.value()
        ),
    )
}

fn integral_machinery() -> Outcome {
    let p = params(2.0, 1.0);
    let mut ok = true;
    let mut detail = Vec::new();

    let g03 = Growth::power(1.0, 0.3).unwrap();
    let r = integral_partial(&g03, 1.0, 1e4).unwrap();
    let limit = r.limit.unwrap_or(f64::NAN);
    ok &= (limit - 1.0 / 0.7).abs() <= 1e-3;
    ok &= (r.value - (1.0 - 1e4f64.powf(-0.7)) / 0.7).abs() <= 1e-8;
    detail.push(format!("t^0.3 partial {:.6}, limit {limit:.6}", r.value));

    let lin = Growth::power(1.0, 1.0).unwrap();
    let r = integral_partial(&lin, 1.0, 1e4).unwrap();
    let ln_err = (r.value - 1e4f64.ln()).abs();
    ok &= ln_err <= 1e-8 * 1e4f64.ln();
    detail.push(format!("ln T error {ln_err:e}"));

    let s = series_eval(&lin, &p, 20, 0.75).unwrap();
    let term_err = s
        .terms
        .iter()
        .map(|t| (t - 4.0 * std::f64::consts::E).abs())
        .fold(0.0, f64::max);
    ok &= term_err <= 1e-12;
    detail.push(format!("series term error {term_err:e}"));

    let seq = build_sequences(&lin, 15).unwrap();
    let t_err = seq
        .t
        .iter()
        .enumerate()
        .map(|(n, t)| (t / 3f64.powi(n as i32) - 1.0).abs())
        .fold(0.0, f64::max);
    let invariants =
        seq.eqng.iter().all(|&b| b) && seq.intervaldiff.iter().all(|b| b.unwrap_or(true)) && seq.len() == 15;
    ok &= t_err <= 1e-8 && invariants;
    detail.push(format!("t_n rel error {t_err:e}, invariants {invariants}"));

    let p3 = build_sequences(&lin, 3).unwrap();
    let closed = block_survival_closed_form(&p, 1, &p3).unwrap();
    let anchor = 1.0 - (-0.5f64).exp();
    let mc = block_survival_mc(p, 3.0, 0.75, 100_000, 909).unwrap();
    let closed_ok = (closed.probability - (1.0 - (-2.0f64 * (p3.r[1] - p3.l[1].unwrap()) / 3.0).exp())).abs() < 1e-12;
    let direct = block_survival_probability(&p, 3.0, 0.75).unwrap();
    ok &= within(mc.mean, mc.stderr, anchor) && closed_ok && (direct - anchor).abs() < 1e-12;
    detail.push(format!("block MC {:.4}±{:.4} vs {anchor:.5}", mc.mean, mc.stderr));
    outcome(ok, detail.join("; "))
}

fn survival_trends() -> Outcome {
    let start = Instant::now();
    let cfg = SurvivalConfig::standard(2000, 1010);
    let rows = survival_experiment(&cfg).unwrap();
    let h = cfg.horizons.len();
    let (c, l) = (&rows[..h], &rows[h..2 * h]);
    let decreasing = c.windows(2).all(|w| w[1].alive.mean < w[0].alive.mean);
    let dominates = l.iter().zip(c).all(|(a, b)| a.alive.mean >= b.alive.mean);
    let fmt = |r: &[scbm::experiments::SurvivalRow]| {
        r.iter()
            .map(|x| format!("{:.4}", x.alive.mean))
            .collect::<Vec<_>>()
            .join("/")
    };
    let secs = start.elapsed().as_secs_f64();
    outcome(
        decreasing && dominates && secs < 1800.0,
        format!("g=1: {}; g=t: {}; {secs:.1}s", fmt(c), fmt(l)),
    )
}

const SMALL_CONFIG: &str = "\
[run]
seed = 17
svg = true
[duality]
systems = 1x2, 2x2
radius = 4
times = 0.25
[csbp]
replicas = 2000
entrance_replicas = 500
[scbm]
replicas = 200
negative_replicas = 200
max_step = 0.05
[integral]
block_replicas = 2000
[survival]
replicas = 40
truncation = 10
horizons = 1, 2
";

fn run_cli(config: &Path, out: &Path, subcommand: &str) -> Vec<u8> {
    let status = Process::new(env!("CARGO_BIN_EXE_scbm"))
        .arg(subcommand)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    let code = status.status.code().unwrap_or(-1);
    assert!(code == 0 || code == 3, "{subcommand} exited with {code}");
    std::fs::read(out.join(format!("{subcommand}.csv"))).expect("csv written")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.ini");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let mut differing = Vec::new();
    for sub in [
        "verify-duality",
        "csbp-check",
        "scbm-duality",
        "integral-test",
        "survival",
    ] {
        let a = run_cli(&config, &dir.path().join("a"), sub);
        let b = run_cli(&config, &dir.path().join("b"), sub);
        if a != b || a.is_empty() {
            differing.push(sub);
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "5 subcommands byte-identical across reruns".to_owned()
        } else {
            format!("differing output: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("generator duality", generator_duality),
        ("array-law duality", array_laws),
        ("psi flow property", psi_flow),
        ("CSBP exact sampler", csbp_sampler),
        ("entrance law", entrance_law),
        ("extinction duality", extinction_duality),
        ("Laplace-functional duality", laplace_duality),
        ("occupation duality", occupation_duality),
        ("integral test machinery", integral_machinery),
        ("survival trends", survival_trends),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!(
            "criterion {:>2} {:<28} {}  {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
