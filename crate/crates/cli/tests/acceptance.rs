//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the lines are always printed; exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhpert_cli::verify::propagation_deviation;
use rhpert_cli::{main_with_args, RunConfig};
use rhpert_core::dynamics::{
    covariances, effective_x_s, entropy_production_limit, relative_entropy, relative_entropy_prefactor,
    window_entropy, window_limit_entropy, window_norm, window_state,
};
use rhpert_core::experiments::{
    convergence_study, short_time_limit_run, ChainStateSpec, LimitSchedule, OracleRun, Quantity,
    LIMIT_THRESHOLD_FACTOR,
};
use rhpert_core::kernel::{matrix_exponential_check, step_matrix, step_scalars};
use rhpert_core::{InverseTemperature, ModelParams, C64};

const SEED: u64 = 0x5eed_2024;

const KERNEL_TOL: f64 = 1e-12;
const PROPAGATION_TOL: f64 = 1e-10;
const EXPONENTIAL_TOL: f64 = 1e-10;
const ORACLE_CHAR_TOL: f64 = 1e-5;
const ORACLE_REL_TOL: f64 = 1e-4;
const ORACLE_ENTROPY_TOL: f64 = 1e-5;
const AFFINE_TOL: f64 = 1e-12;
const RATIO_TOL: f64 = 0.02;
const WINDOW_TOL: f64 = 1e-12;
const LIMIT_EXACT_TOL: f64 = 1e-12;
/// Relative slack on the entropy-production and window bounds.
const BOUND_SLACK: f64 = 1e-12;

const KERNEL_BUDGET: Duration = Duration::from_secs(1);
const PROPAGATION_BUDGET: Duration = Duration::from_secs(5);
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
const LIMIT_BUDGET: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn beta(b: f64) -> InverseTemperature {
    InverseTemperature::new(b).unwrap()
}

fn reference() -> ModelParams {
    ModelParams::new(2.0, 1.0, 0.5, 1.0, 2, beta(3f64.ln()), beta(2f64.ln())).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, max_chain: usize) -> ModelParams {
    let e = rng.random_range(0.1..5.0);
    let eps = rng.random_range(0.1..5.0);
    let eta = rng.random_range(0.0..=1.0) * f64::sqrt(e * eps);
    let tau = rng.random_range(0.01..3.0);
    let n = rng.random_range(1..=max_chain);
    ModelParams::new(e, eps, eta, tau, n, beta(rng.random_range(0.1..5.0)), beta(rng.random_range(0.1..5.0))).unwrap()
}

/// Random contracting point with β₀ ≠ β.
fn contracting_params(rng: &mut ChaCha8Rng, chain: usize) -> ModelParams {
    loop {
        let p = random_params(rng, 1).with_chain_len(chain).unwrap();
        let z = step_scalars(&p).z.norm();
        if z < 1.0 && z > 0.3 && (p.beta0().value() - p.beta().value()).abs() > 0.05 {
            return p;
        }
    }
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
    (0..len).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn kernel_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut dev = [0.0f64; 4];
    for _ in 0..1000 {
        let p = random_params(&mut rng, 8);
        let s = step_scalars(&p);
        dev[0] = dev[0].max((s.g.norm() - 1.0).abs());
        dev[1] = dev[1].max((s.z.norm_sqr() + s.w.norm_sqr() - 1.0).abs());
        dev[2] = dev[2].max((s.w + s.w.conj()).norm());
        for slot in 1..=p.chain_len() {
            dev[3] = dev[3].max(step_matrix(&p, slot).unwrap().unitarity_deviation());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        dev.iter().all(|&d| d < KERNEL_TOL) && elapsed < KERNEL_BUDGET,
        format!("max |g|-1 {:.1e}, |z|^2+|w|^2-1 {:.1e}, w+w* {:.1e}, V*V-I {:.1e}; {elapsed:.2?}", dev[0], dev[1], dev[2], dev[3]),
    )
}

fn propagation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let p = reference().with_chain_len(50).unwrap();
    let zetas: Vec<Vec<C64>> = (0..100).map(|_| random_vector(&mut rng, 51)).collect();
    let dev = propagation_deviation(&p, &[1, 25, 50], &zetas).unwrap();
    let elapsed = start.elapsed();
    outcome(dev < PROPAGATION_TOL && elapsed < PROPAGATION_BUDGET, format!("max diff {dev:.2e}; {elapsed:.2?}"))
}

fn exponential() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut points = vec![reference()];
    points.extend((0..20).map(|_| random_params(&mut rng, 1)));
    let mut dev: f64 = 0.0;
    for base in &points {
        for n in 1..=10 {
            let p = base.with_chain_len(n).unwrap();
            for slot in 1..=n {
                dev = dev.max(matrix_exponential_check(&p, slot).unwrap().deviation);
            }
        }
    }
    outcome(dev < EXPONENTIAL_TOL, format!("max |exp(i tau Y_n) - U_n| {dev:.2e} over {} parameter sets", points.len()))
}

fn oracle_zetas(rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    (0..50)
        .map(|_| {
            let v = random_vector(rng, 3);
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let r = 0.5 * rng.random::<f64>();
            v.into_iter().map(|c| c * (r / norm)).collect()
        })
        .collect()
}

fn oracle_checks() -> (Outcome, Outcome, Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let p = reference();
    let run = OracleRun::new(&p, 25, 2).unwrap();
    let char_dev = run.char_fn_deviation(2, &oracle_zetas(&mut rng)).unwrap();
    let elapsed = start.elapsed();
    let char_fn = outcome(
        char_dev < ORACLE_CHAR_TOL && elapsed < ORACLE_BUDGET,
        format!("max |analytic - oracle| {char_dev:.2e} at D=25; {elapsed:.2?}"),
    );
    let ent: Vec<f64> = (0..=2).map(|m| run.entropy_deviation(m).unwrap()).collect();
    let worst = ent.iter().copied().fold(0.0, f64::max);
    let entropy =
        outcome(worst < ORACLE_ENTROPY_TOL, format!("|S(rho(m tau)) - N s(beta) - s(beta0)| = [{}] for m = 0,1,2", sci(&ent)));
    let fine = OracleRun::new(&p, 30, 2).unwrap();
    let rel_dev = fine.relative_entropy_deviation(2).unwrap();
    let rel = outcome(rel_dev < ORACLE_REL_TOL, format!("|closed form - oracle| {rel_dev:.2e} at D=30"));
    (char_fn, rel, entropy)
}

fn entropy_production() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = contracting_params(&mut rng, 1);
        let pref = relative_entropy_prefactor(&p).unwrap();
        let lim = entropy_production_limit(&p).unwrap();
        let z2 = step_scalars(&p).z.norm_sqr();
        for n in 0..=200 {
            let gap = (relative_entropy(&p, n).unwrap() - lim).abs();
            worst = worst.max((gap - pref * z2.powi(n as i32)) / pref);
        }
    }
    outcome(worst <= BOUND_SLACK, format!("max (|gap| - prefactor |z|^2N)/prefactor = {worst:.2e} over 20 points"))
}

fn effective_temperatures() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut points = vec![reference()];
    points.extend((0..5).map(|_| contracting_params(&mut rng, 1)));
    let mut affine: f64 = 0.0;
    let mut ratio_err: f64 = 0.0;
    for p in &points {
        let (x0, x) = covariances(p);
        let z2 = step_scalars(p).z.norm_sqr();
        for m in 0..=100 {
            let q = z2.powi(m);
            let mixed = q * x0.value() + (1.0 - q) * x.value();
            affine = affine.max((effective_x_s(p, m as usize).value() - mixed).abs() / mixed);
        }
        let ratio = convergence_study(p, Quantity::BetaStar, 100).unwrap().fitted_ratio.unwrap_or(f64::INFINITY);
        ratio_err = ratio_err.max((ratio - z2).abs() / z2);
    }
    outcome(
        affine < AFFINE_TOL && ratio_err < RATIO_TOL,
        format!("affine deviation {affine:.2e}; max relative error of fitted ratio {ratio_err:.2e} over {} points", points.len()),
    )
}

fn window() -> Outcome {
    let base = reference();
    let p = base.with_chain_len(16).unwrap();
    let mut norm_dev: f64 = 0.0;
    for n in 0..=4 {
        for k in n..=12 {
            let embedded: f64 = window_state(&p, n, k).unwrap().xi().iter().map(|c| c.norm_sqr()).sum();
            norm_dev = norm_dev.max((embedded - window_norm(&p, n, k).unwrap()).abs());
        }
    }
    // σ' = β/2 between the two covariances bounds the entropy gap by ν
    let long = base.with_chain_len(200).unwrap();
    let (x0, x) = covariances(&long);
    let delta = (x0.value() - x.value()).abs();
    let (b0, b) = (long.beta0().value(), long.beta().value());
    let (lo, hi) = (0.5 * b0.min(b) * delta, 0.5 * b0.max(b) * delta);
    let mut proportional = true;
    let mut last_gap = f64::NAN;
    for n in 0..=4 {
        let limit = window_limit_entropy(&long, n);
        for k in n.max(1)..=200 {
            let nu = window_norm(&long, n, k).unwrap();
            let gap = (window_entropy(&long, n, k).unwrap() - limit).abs();
            let slack = BOUND_SLACK * limit + 1e-300;
            proportional &= gap <= hi * nu + slack && gap + slack >= lo * nu;
            last_gap = gap;
        }
    }
    outcome(
        norm_dev < WINDOW_TOL && proportional && last_gap < 1e-12,
        format!("norm deviation {norm_dev:.2e}; gap within [{lo:.3}, {hi:.3}]·<xi,xi>: {proportional}; gap at k=200 {last_gap:.1e}"),
    )
}

fn short_time_limit() -> Outcome {
    let start = Instant::now();
    let template = reference();
    let schedule = LimitSchedule::default();
    let thetas = [C64::new(1.0, 0.0)];
    let gibbs = short_time_limit_run(&template, &schedule, &ChainStateSpec::Gibbs { beta: template.beta() }, &thetas, 60)
        .unwrap();
    let exact = gibbs.points.iter().map(|p| (p.error - p.exact_error.unwrap()).abs()).fold(0.0, f64::max);
    let decreasing = gibbs.points.windows(2).all(|w| w[1].error < w[0].error);
    let number = short_time_limit_run(&template, &schedule, &ChainStateSpec::NumberState { n: 1 }, &thetas, 16).unwrap();
    let limit_ok = number.points.iter().all(|p| (p.limit - (-0.75f64).exp()).abs() < LIMIT_EXACT_TOL);
    let fit = &number.fits[0];
    let elapsed = start.elapsed();
    let errors: Vec<f64> = number.points.iter().map(|p| p.error).collect();
    outcome(
        exact < LIMIT_EXACT_TOL
            && decreasing
            && limit_ok
            && fit.final_error < LIMIT_THRESHOLD_FACTOR * fit.final_bound
            && fit.monotone
            && elapsed < LIMIT_BUDGET,
        format!(
            "Gibbs |error - exact| {exact:.1e}, decreasing {decreasing}; |1>: errors [{}], final {:.2e} vs 10x bound {:.2e}, monotone {}; {elapsed:.2?}",
            sci(&errors),
            fit.final_error,
            LIMIT_THRESHOLD_FACTOR * fit.final_bound,
            fit.monotone
        ),
    )
}

fn run_cli(dir: &Path, tag: &str, args: &[&str]) -> (bool, Vec<u8>) {
    let out = dir.join(format!("{tag}.out"));
    let mut full = vec!["rhpert".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    full.push("--output".into());
    full.push(out.to_string_lossy().into_owned());
    let code = main_with_args(full);
    (code == ExitCode::SUCCESS, fs::read(&out).unwrap_or_default())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.sweep = Some(
        serde_json::from_str(
            r#"{"E": [2.0], "eps": [1.0], "eta": [0.5, 2.0], "tau": [0.1, 0.5, 1.0], "beta0": [1.0986122886681098],
                "beta": [0.6931471805599453], "N": [2], "oracle_cutoff": 10}"#,
        )
        .unwrap(),
    );
    let config = dir.path().join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let config = config.to_string_lossy().into_owned();
    let commands = ["verify", "kernel", "simulate", "subsystem", "limit", "sweep"];
    let mut mismatched = Vec::new();
    for cmd in commands {
        let mut args = vec![cmd, "--config", config.as_str()];
        if cmd == "simulate" {
            args.extend(["--oracle", "--cutoff", "12"]);
        }
        let (ok_a, a) = run_cli(dir.path(), &format!("{cmd}-a"), &args);
        let (ok_b, b) = run_cli(dir.path(), &format!("{cmd}-b"), &args);
        if !ok_a || !ok_b || a.is_empty() || a != b {
            mismatched.push(cmd);
        }
    }
    outcome(mismatched.is_empty(), format!("byte-identical reruns of {commands:?}; mismatched or failed: {mismatched:?}"))
}

fn main() -> ExitCode {
    let (c4, c5, c6) = oracle_checks();
    let results = [
        ("kernel identities", kernel_identities()),
        ("closed-form propagation vs matrix product", propagation()),
        ("matrix exponential vs closed-form propagator", exponential()),
        ("oracle characteristic functions", c4),
        ("oracle relative entropy", c5),
        ("entropy constancy", c6),
        ("entropy-production limit", entropy_production()),
        ("effective temperatures", effective_temperatures()),
        ("window subsystem", window()),
        ("short-time limit", short_time_limit()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
