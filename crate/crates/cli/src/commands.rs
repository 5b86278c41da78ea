//! Record-producing subcommands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhpert_core::dynamics::{
    effective_beta_S, effective_beta_Sm, reduced_char_fn, relative_entropy, total_entropy, SubsystemSelector,
};
use rhpert_core::experiments::{probe_arguments, short_time_limit_run, sweep, OracleRun};
use rhpert_core::kernel::{matrix_exponential_check, normal_modes, step_scalars};
use rhpert_core::{ModelParams, RunRecord, C64};

use crate::config::RunConfig;
use crate::CliError;

/// Options that the command line may override in the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub oracle: bool,
    pub cutoff: Option<usize>,
    pub tolerance: Option<f64>,
}

impl Overrides {
    pub fn oracle_cutoff(&self, cfg: &RunConfig) -> Option<usize> {
        (self.oracle || cfg.oracle.enabled).then(|| self.cutoff.unwrap_or(cfg.oracle.cutoff))
    }
}

pub(crate) fn echo(rec: RunRecord, p: &ModelParams) -> RunRecord {
    rec.with("E", p.energy())
        .with("eps", p.eps())
        .with("eta", p.eta())
        .with("tau", p.tau())
        .with("N", p.chain_len())
        .with("beta0", p.beta0())
        .with("beta", p.beta())
}

pub fn cmd_kernel(cfg: &RunConfig) -> Result<Vec<RunRecord>, CliError> {
    let report = cfg.hypotheses();
    let p = cfg.params()?;
    let s = step_scalars(&p);
    let (e0, e1) = normal_modes(&p);
    let mut exp_dev: f64 = 0.0;
    let mut xsq_dev: f64 = 0.0;
    let mut jx_dev: f64 = 0.0;
    for slot in 1..=p.chain_len() {
        let c = matrix_exponential_check(&p, slot)?;
        exp_dev = exp_dev.max(c.deviation);
        xsq_dev = xsq_dev.max(c.x_square_deviation);
        jx_dev = jx_dev.max(c.jx_deviation);
    }
    let rec = echo(RunRecord::new("kernel"), &p)
        .with("g", s.g)
        .with("w", s.w)
        .with("z", s.z)
        .with("z_abs2", s.z.norm_sqr())
        .with("eps0", e0)
        .with("eps1", e1)
        .with("stable", report.stable)
        .with("short_interaction", report.short_interaction)
        .with("contracting", report.contracting)
        .with("exp_deviation", exp_dev)
        .with("x_square_deviation", xsq_dev)
        .with("jx_deviation", jx_dev)
        .with("notes", report.notes.join("; "));
    Ok(vec![rec])
}

pub fn cmd_simulate(cfg: &RunConfig, opts: &Overrides) -> Result<Vec<RunRecord>, CliError> {
    let p = cfg.params()?;
    let n = p.chain_len();
    let oracle = match opts.oracle_cutoff(cfg) {
        Some(d) => Some(OracleRun::new(&p, d, n)?),
        None => None,
    };
    let finite = !p.beta0().is_vacuum() && !p.beta().is_vacuum();
    let thetas: Vec<C64> = cfg.simulate.thetas.iter().map(|&t| t.into()).collect();
    let mut out = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut rec = echo(RunRecord::new(format!("step-{m}")), &p)
            .with("m", m)
            .with("beta_star", effective_beta_S(&p, m))
            .with("total_entropy", total_entropy(&p, m)?);
        if m >= 1 {
            rec.set("beta_star_star", effective_beta_Sm(&p, m)?);
        }
        if finite {
            rec.set("relative_entropy", relative_entropy(&p, m)?);
        }
        for (j, &theta) in thetas.iter().enumerate() {
            rec.set(format!("theta{j}"), theta);
            rec.set(format!("char_S{j}"), reduced_char_fn(&p, &SubsystemSelector::System { step: m }, &[theta])?);
        }
        if let Some(run) = &oracle {
            rec.set("oracle_cutoff", run.cutoff);
            rec.set("delta_char_fn", run.char_fn_deviation(m, &probe_arguments(n + 1))?);
            rec.set("delta_entropy", run.entropy_deviation(m)?);
            if finite {
                rec.set("delta_relative_entropy", run.relative_entropy_deviation(m)?);
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn sample_alphas(rng: &mut ChaCha8Rng, arity: usize) -> Vec<C64> {
    (0..arity)
        .map(|_| {
            let r = 0.5 * rng.random::<f64>() / (arity as f64).sqrt();
            C64::from_polar(r, std::f64::consts::TAU * rng.random::<f64>())
        })
        .collect()
}

fn selector_label(sel: &SubsystemSelector) -> String {
    let text = serde_json::to_value(sel).expect("selectors serialise");
    text["kind"].as_str().unwrap_or_default().to_string()
}

pub fn cmd_subsystem(cfg: &RunConfig, opts: &Overrides) -> Result<Vec<RunRecord>, CliError> {
    let p = cfg.params()?;
    let n = p.chain_len();
    let (selectors, explicit, samples) = match &cfg.subsystem {
        Some(s) => (s.selectors.clone(), s.alphas.clone(), s.samples),
        None => (vec![SubsystemSelector::System { step: n }, SubsystemSelector::SystemAndChain { site: n }], None, 4),
    };
    if let Some(a) = &explicit {
        if a.len() != selectors.len() {
            return Err(CliError::Config(format!("{} argument vectors for {} selectors", a.len(), selectors.len())));
        }
    }
    for sel in &selectors {
        sel.validate(n)?;
    }
    let oracle = match opts.oracle_cutoff(cfg) {
        Some(d) => Some(OracleRun::new(&p, d, selectors.iter().map(|s| s.step()).max().unwrap_or(0))?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (i, sel) in selectors.iter().enumerate() {
        let args: Vec<Vec<C64>> = match &explicit {
            Some(a) => vec![a[i].iter().map(|&c| c.into()).collect()],
            None => (0..samples).map(|_| sample_alphas(&mut rng, sel.arity())).collect(),
        };
        for (j, alpha) in args.iter().enumerate() {
            let modes: Vec<String> = sel.modes().iter().map(usize::to_string).collect();
            let mut rec = echo(RunRecord::new(format!("subsystem-{i}-{j}")), &p)
                .with("seed", cfg.seed)
                .with("selector", selector_label(sel))
                .with("step", sel.step())
                .with("modes", modes.join(" "));
            for (k, a) in alpha.iter().enumerate() {
                rec.set(format!("alpha{k}"), *a);
            }
            rec.set("value", reduced_char_fn(&p, sel, alpha)?);
            match *sel {
                SubsystemSelector::System { step } => {
                    rec.set("effective_beta", effective_beta_S(&p, step));
                }
                SubsystemSelector::Chain { site, step } if site <= step => {
                    rec.set("effective_beta", effective_beta_Sm(&p, site)?);
                }
                SubsystemSelector::First { step } if step >= 1 => {
                    rec.set("effective_beta", effective_beta_Sm(&p, 1)?);
                }
                _ => {}
            }
            if let Some(run) = &oracle {
                rec.set("delta_value", run.reduced_deviation(sel, std::slice::from_ref(alpha))?);
            }
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn cmd_limit(cfg: &RunConfig) -> Result<Vec<RunRecord>, CliError> {
    let schedule = cfg.schedule();
    schedule.validate()?;
    let p = cfg.params()?;
    let thetas: Vec<C64> = cfg.limit.thetas.iter().map(|&t| t.into()).collect();
    let run = short_time_limit_run(&p, &schedule, &cfg.limit.chain_state, &thetas, cfg.limit.cutoff)?;
    Ok(run
        .to_records()
        .into_iter()
        .map(|r| {
            r.with("E", p.energy())
                .with("eps", p.eps())
                .with("eta", p.eta())
                .with("beta0", p.beta0())
                .with("exponent", schedule.exponent)
                .with("multiplier", schedule.multiplier)
                .with("cutoff", cfg.limit.cutoff)
        })
        .collect())
}

pub fn cmd_sweep(cfg: &RunConfig, opts: &Overrides) -> Result<Vec<RunRecord>, CliError> {
    let mut grid = cfg.sweep.clone().ok_or_else(|| CliError::Config("sweep section missing".into()))?;
    if let Some(d) = opts.oracle_cutoff(cfg) {
        grid.oracle_cutoff = Some(d);
    }
    Ok(sweep(&grid)?)
}
