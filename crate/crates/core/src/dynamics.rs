//! Closed-form evolution of the two-temperature product state.
//!
//! The system starts thermal at β₀ and every chain mode thermal at β. After
//! `m` steps the state is still in the rank-one quasi-free family with
//! `x = x(β)`, `x₀ = x(β₀) − x(β)` and a unit vector ξ_m that records how the
//! original system excitation has spread along the chain. All subsystem
//! reductions, entropies and effective temperatures follow from ξ_m.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cpow, norm_sqr_pow, step_scalars, InverseTemperature, ModelParams};
use crate::quasifree::{char_fn, Covariance, RankOneQuasiFreeState};

/// Covariances of the system and chain Gibbs states, `(x(β₀), x(β))`.
pub fn covariances(params: &ModelParams) -> (Covariance, Covariance) {
    (Covariance::gibbs(params.beta0()), Covariance::gibbs(params.beta()))
}

/// `x(β₀) − x(β)`.
pub fn covariance_gap(params: &ModelParams) -> f64 {
    let (x0, x) = covariances(params);
    x0.excess() - x.excess()
}

fn check_steps(params: &ModelParams, steps: usize) -> Result<()> {
    if steps > params.chain_len() {
        Err(Error::StepsOutOfRange { steps, min: 0, max: params.chain_len() })
    } else {
        Ok(())
    }
}

fn step_phase(params: &ModelParams, steps: usize) -> C64 {
    C64::from_polar(1.0, steps as f64 * params.tau() * params.eps())
}

/// The product of Gibbs states on `N + 1` modes.
pub fn initial_state(params: &ModelParams) -> RankOneQuasiFreeState {
    evolve_state(params, 0).expect("zero steps is always in range").state
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolvedState {
    pub steps: usize,
    pub state: RankOneQuasiFreeState,
}

impl EvolvedState {
    pub fn char_fn(&self, zeta: &[C64]) -> Result<f64> {
        char_fn(&self.state, zeta)
    }
}

/// The state after `steps` interaction steps, `0 ≤ steps ≤ N`.
pub fn evolve_state(params: &ModelParams, steps: usize) -> Result<EvolvedState> {
    check_steps(params, steps)?;
    let s = step_scalars(params);
    let gz = s.gz();
    let gw = s.g * s.w;
    let phase = step_phase(params, steps);
    let mut xi = vec![C64::new(0.0, 0.0); params.chain_len() + 1];
    xi[0] = (phase * cpow(gz, steps)).conj();
    for (j, c) in xi.iter_mut().enumerate().take(steps + 1).skip(1) {
        *c = (phase * gw * cpow(gz, j - 1)).conj();
    }
    let (x0, x) = covariances(params);
    let state = RankOneQuasiFreeState::new(x, x0.excess() - x.excess(), xi)?;
    Ok(EvolvedState { steps, state })
}

/// Which part of the system-plus-chain is observed, and when.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SubsystemSelector {
    /// S after `step` steps.
    #[serde(rename = "S")]
    System { step: usize },
    /// S₁ after `step` steps.
    #[serde(rename = "S1")]
    First { step: usize },
    /// S_site after `step` steps.
    #[serde(rename = "Sm")]
    Chain { site: usize, step: usize },
    /// S + S_site right after the site-th step.
    #[serde(rename = "S_plus_Sm")]
    SystemAndChain { site: usize },
    /// S_{site−lag} + S_site right after the site-th step.
    #[serde(rename = "Smn_plus_Sm")]
    ChainPair { site: usize, lag: usize },
    /// S plus the `size` most recently coupled chain modes after `step` steps.
    #[serde(rename = "window")]
    Window { size: usize, step: usize },
}

impl SubsystemSelector {
    /// Number of complex arguments the reduced characteristic function takes.
    pub fn arity(&self) -> usize {
        match self {
            Self::System { .. } | Self::First { .. } | Self::Chain { .. } => 1,
            Self::SystemAndChain { .. } | Self::ChainPair { .. } => 2,
            Self::Window { size, .. } => size + 1,
        }
    }

    /// Completed steps at the observation time.
    pub fn step(&self) -> usize {
        match *self {
            Self::System { step } | Self::First { step } | Self::Chain { step, .. } | Self::Window { step, .. } => step,
            Self::SystemAndChain { site } | Self::ChainPair { site, .. } => site,
        }
    }

    /// Global mode indices (0 = S) observed, in argument order.
    pub fn modes(&self) -> Vec<usize> {
        match *self {
            Self::System { .. } => vec![0],
            Self::First { .. } => vec![1],
            Self::Chain { site, .. } => vec![site],
            Self::SystemAndChain { site } => vec![0, site],
            Self::ChainPair { site, lag } => vec![site - lag, site],
            Self::Window { size, step } => std::iter::once(0).chain(step - size + 1..=step).collect(),
        }
    }

    pub fn validate(&self, chain_len: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSelector(msg));
        match *self {
            Self::System { step } | Self::First { step } if step > chain_len => {
                bad(format!("step {step} exceeds chain length {chain_len}"))
            }
            Self::Chain { site, step } if site == 0 || site > chain_len || step > chain_len => {
                bad(format!("site {site} / step {step} outside chain of length {chain_len}"))
            }
            Self::SystemAndChain { site } if site == 0 || site > chain_len => {
                bad(format!("site {site} outside 1..={chain_len}"))
            }
            Self::ChainPair { site, lag } if lag == 0 || lag >= site || site > chain_len => {
                bad(format!("need 1 <= site - lag < site <= {chain_len}, got site {site}, lag {lag}"))
            }
            Self::Window { size, step } if size > step || step > chain_len => {
                bad(format!("need size <= step <= {chain_len}, got size {size}, step {step}"))
            }
            _ => Ok(()),
        }
    }
}

fn gibbs_factor(x: f64, a2: f64) -> f64 {
    (-0.25 * x * a2).exp()
}

/// Closed-form characteristic function of the selected one- or two-mode
/// reduced state.
pub fn reduced_char_fn(params: &ModelParams, selector: &SubsystemSelector, alphas: &[C64]) -> Result<f64> {
    selector.validate(params.chain_len())?;
    if alphas.len() != selector.arity() {
        return Err(Error::InvalidSelector(format!(
            "{selector:?} takes {} argument(s), got {}",
            selector.arity(),
            alphas.len()
        )));
    }
    let s = step_scalars(params);
    let (xs, xc) = covariances(params);
    let (xs, xc) = (xs.value(), xc.value());
    let gap = covariance_gap(params);
    let z2 = s.z.norm_sqr();
    let w2 = s.w.norm_sqr();
    let value = match *selector {
        SubsystemSelector::System { step } => {
            gibbs_factor(effective_x_s(params, step).value(), alphas[0].norm_sqr())
        }
        SubsystemSelector::First { step } => chain_mode(params, 1, step, alphas[0]),
        SubsystemSelector::Chain { site, step } => chain_mode(params, site, step, alphas[0]),
        SubsystemSelector::SystemAndChain { site } => {
            let (a0, a1) = (alphas[0], alphas[1]);
            let out = (s.z * a0 + s.w * a1).norm_sqr();
            let stay = (s.w * a0 + s.z.conj() * a1).norm_sqr();
            let memory = norm_sqr_pow(s.z, site - 1);
            gibbs_factor(xs, memory * out) * gibbs_factor(xc, (1.0 - memory) * out) * gibbs_factor(xc, stay)
        }
        SubsystemSelector::ChainPair { site, lag } => {
            let (a1, a2) = (alphas[0], alphas[1]);
            let weight = w2 * z2.powi((site - lag - 1) as i32);
            let mixed = (a1 + cpow(s.gz(), lag) * a2).norm_sqr();
            gibbs_factor(weight * gap, mixed) * gibbs_factor(xc, a1.norm_sqr() + a2.norm_sqr())
        }
        SubsystemSelector::Window { size, step } => {
            return char_fn(&window_state(params, size, step)?, alphas);
        }
    };
    Ok(value)
}

fn chain_mode(params: &ModelParams, site: usize, step: usize, alpha: C64) -> f64 {
    let x = if step < site {
        Covariance::gibbs(params.beta())
    } else {
        effective_x_chain(params, site)
    };
    gibbs_factor(x.value(), alpha.norm_sqr())
}

/// `x(β*(mτ)) = |z|^{2m}x(β₀) + (1−|z|^{2m})x(β)`.
pub fn effective_x_s(params: &ModelParams, steps: usize) -> Covariance {
    let (xs, xc) = covariances(params);
    Covariance::mix(norm_sqr_pow(step_scalars(params).z, steps), xs, xc)
}

/// Inverse temperature of S after `steps` steps.
#[allow(non_snake_case)]
pub fn effective_beta_S(params: &ModelParams, steps: usize) -> InverseTemperature {
    effective_x_s(params, steps).beta()
}

/// `x(β**(mτ))`, the covariance of S_m once it has interacted.
pub fn effective_x_chain(params: &ModelParams, site: usize) -> Covariance {
    let s = step_scalars(params);
    let (xs, xc) = covariances(params);
    let weight = s.w.norm_sqr() * norm_sqr_pow(s.z, site.saturating_sub(1));
    Covariance::mix(weight, xs, xc)
}

/// Inverse temperature of S_m after its interaction, `m ≥ 1`.
#[allow(non_snake_case)]
pub fn effective_beta_Sm(params: &ModelParams, site: usize) -> Result<InverseTemperature> {
    if site == 0 {
        return Err(Error::StepsOutOfRange { steps: 0, min: 1, max: usize::MAX });
    }
    Ok(effective_x_chain(params, site).beta())
}

/// `N·s(β) + s(β₀)`; the same for every `0 ≤ steps ≤ N`.
pub fn total_entropy(params: &ModelParams, steps: usize) -> Result<f64> {
    check_steps(params, steps)?;
    let (xs, xc) = covariances(params);
    Ok(params.chain_len() as f64 * xc.entropy() + xs.entropy())
}

fn finite_betas(params: &ModelParams, what: &'static str) -> Result<(f64, f64)> {
    if params.beta0().is_vacuum() || params.beta().is_vacuum() {
        return Err(Error::InfiniteTemperature(what));
    }
    Ok((params.beta0().value(), params.beta().value()))
}

/// `(β − β₀)(n_{β₀} − n_β)`, the coefficient of `(1 − |z|^{2N})`.
pub fn relative_entropy_prefactor(params: &ModelParams) -> Result<f64> {
    let (b0, b) = finite_betas(params, "relative entropy")?;
    let (xs, xc) = covariances(params);
    Ok((b - b0) * (xs.occupation() - xc.occupation()))
}

/// Relative entropy of the state after `steps` steps with respect to the
/// initial product state.
pub fn relative_entropy(params: &ModelParams, steps: usize) -> Result<f64> {
    let pre = relative_entropy_prefactor(params)?;
    let z2 = step_scalars(params).z.norm_sqr();
    let lost = if steps == 0 { 0.0 } else { -(steps as f64 * z2.ln()).exp_m1() };
    Ok(pre * lost)
}

/// Large-N limit of [`relative_entropy`]; needs `|z| < 1`.
pub fn entropy_production_limit(params: &ModelParams) -> Result<f64> {
    let pre = relative_entropy_prefactor(params)?;
    let z = step_scalars(params).z.norm();
    if z >= 1.0 {
        return Err(Error::NoConvergence(z));
    }
    Ok(pre)
}

fn check_window(params: &ModelParams, size: usize, step: usize) -> Result<()> {
    SubsystemSelector::Window { size, step }.validate(params.chain_len())
}

/// Reduced state of S and the `size` chain modes S_{step−size+1}, …, S_step
/// after `step` steps, in local coordinates: mode 0 is S and local mode `i`
/// is S_{step−size+i}.
pub fn window_state(params: &ModelParams, size: usize, step: usize) -> Result<RankOneQuasiFreeState> {
    check_window(params, size, step)?;
    let s = step_scalars(params);
    let gz = s.gz();
    let gw = s.g * s.w;
    let phase = step_phase(params, step);
    let mut xi = Vec::with_capacity(size + 1);
    xi.push((phase * cpow(gz, step)).conj());
    for i in 1..=size {
        xi.push((phase * gw * cpow(gz, step - size + i - 1)).conj());
    }
    let (x0, x) = covariances(params);
    RankOneQuasiFreeState::new(x, x0.excess() - x.excess(), xi)
}

/// `⟨ξ,ξ⟩` of the window state:
/// `|z|^{2k} + |w|²|z|^{2(k−n)}(1−|z|^{2n})/(1−|z|²)`.
pub fn window_norm(params: &ModelParams, size: usize, step: usize) -> Result<f64> {
    check_window(params, size, step)?;
    let s = step_scalars(params);
    let r = s.z.norm_sqr();
    let geometric = if size == 0 {
        0.0
    } else if r == 1.0 {
        size as f64
    } else {
        (1.0 - norm_sqr_pow(s.z, size)) / (1.0 - r)
    };
    Ok(norm_sqr_pow(s.z, step) + s.w.norm_sqr() * norm_sqr_pow(s.z, step - size) * geometric)
}

/// `n·σ(x(β)) + σ(x(β) + ⟨ξ,ξ⟩(x(β₀) − x(β)))`.
pub fn window_entropy(params: &ModelParams, size: usize, step: usize) -> Result<f64> {
    let weight = window_norm(params, size, step)?;
    let (xs, xc) = covariances(params);
    Ok(size as f64 * xc.entropy() + Covariance::mix(weight, xs, xc).entropy())
}

/// `(n+1)σ(x(β))`, the entropy the window relaxes to.
pub fn window_limit_entropy(params: &ModelParams, size: usize) -> f64 {
    (size + 1) as f64 * Covariance::gibbs(params.beta()).entropy()
}
