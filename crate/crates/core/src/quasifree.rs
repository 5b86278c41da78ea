//! Gauge-invariant quasi-free states with a single rank-one correction.
//!
//! A thermal mode is parameterised by its covariance scalar
//! `x = (1+e^{−β})/(1−e^{−β}) = 2n_β + 1`. The family here has characteristic
//! function `exp[−¼(x⟨ζ,ζ⟩ + x₀|⟨ξ,ζ⟩|²)]`: every mode at covariance `x`
//! except the direction ξ, which sits at `x + x₀⟨ξ,ξ⟩`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::InverseTemperature;

/// Slack below `x = 1` tolerated as rounding before a state is rejected.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// A covariance scalar `x ≥ 1`.
///
/// Stored through its excess `x − 1 = 2n`, so that very cold modes (x − 1
/// far below machine epsilon) keep their inverse temperature.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct Covariance {
    excess: f64,
}

impl Covariance {
    pub const VACUUM: Self = Covariance { excess: 0.0 };

    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() || x < 1.0 || x.is_infinite() {
            return Err(Error::InadmissibleCovariance(x));
        }
        Ok(Covariance { excess: x - 1.0 })
    }

    /// From `x − 1`; must be finite and `≥ 0`.
    pub fn from_excess(excess: f64) -> Result<Self> {
        if !(excess.is_finite() && excess >= 0.0) {
            return Err(Error::InadmissibleCovariance(1.0 + excess));
        }
        Ok(Covariance { excess })
    }

    pub fn gibbs(beta: InverseTemperature) -> Self {
        if beta.is_vacuum() {
            Self::VACUUM
        } else {
            Covariance { excess: 2.0 / beta.value().exp_m1() }
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        1.0 + self.excess
    }

    #[inline]
    pub fn excess(self) -> f64 {
        self.excess
    }

    /// Mean occupation `(x − 1)/2`.
    #[inline]
    pub fn occupation(self) -> f64 {
        0.5 * self.excess
    }

    /// `ln((x+1)/(x−1))`, `+inf` at `x = 1`.
    pub fn beta(self) -> InverseTemperature {
        if self.excess == 0.0 {
            InverseTemperature::VACUUM
        } else {
            // ln(1 + 2/(x−1)) is positive for every finite excess
            InverseTemperature::new((2.0 / self.excess).ln_1p()).unwrap_or(InverseTemperature::VACUUM)
        }
    }

    /// `σ(x)`, the entropy of one mode at this covariance.
    pub fn entropy(self) -> f64 {
        let n = self.occupation();
        if n == 0.0 {
            0.0
        } else {
            // (1+n)ln(1+n) − n ln n, rearranged to stay accurate for large n
            n.ln_1p() + n * (1.0 / n).ln_1p()
        }
    }

    /// Affine combination `weight·a + (1 − weight)·b` in x-space.
    pub fn mix(weight: f64, a: Self, b: Self) -> Self {
        let e = weight * a.excess + (1.0 - weight) * b.excess;
        Covariance { excess: e.max(0.0) }
    }
}

fn check_beta(beta: f64) -> Result<InverseTemperature> {
    InverseTemperature::new(beta)
}

/// `(1+e^{−β})/(1−e^{−β})`; 1 at `β = +inf`.
pub fn gibbs_x(beta: f64) -> Result<f64> {
    Ok(Covariance::gibbs(check_beta(beta)?).value())
}

/// Inverse of [`gibbs_x`]: `ln((x+1)/(x−1))`, with `x = 1 ↦ +inf`.
pub fn beta_from_x(x: f64) -> Result<f64> {
    Ok(Covariance::new(x)?.beta().value())
}

/// `σ(x) = (x+1)/2·ln((x+1)/2) − (x−1)/2·ln((x−1)/2)`.
pub fn sigma(x: f64) -> Result<f64> {
    Ok(Covariance::new(x)?.entropy())
}

/// `β/(e^β−1) − ln(1−e^{−β})`, the entropy of a one-mode Gibbs state.
pub fn mode_entropy(beta: f64) -> Result<f64> {
    let b = check_beta(beta)?;
    if b.is_vacuum() {
        return Ok(0.0);
    }
    Ok(beta / beta.exp_m1() - (-(-beta).exp()).ln_1p())
}

/// `1/(e^β − 1)`.
pub fn occupation(beta: f64) -> Result<f64> {
    Ok(Covariance::gibbs(check_beta(beta)?).occupation())
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

/// Quasi-free state given by `(x, x₀, ξ)` on `ξ.len()` modes.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneQuasiFreeState {
    x: Covariance,
    x0: f64,
    xi: Vec<C64>,
}

impl RankOneQuasiFreeState {
    pub fn new(x: Covariance, x0: f64, xi: Vec<C64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::InvalidParameter { name: "xi", reason: "at least one mode required".into() });
        }
        if !x0.is_finite() || xi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidParameter { name: "x0", reason: "non-finite state parameter".into() });
        }
        let corrected = x.excess + x0 * norm_sqr(&xi);
        if corrected < -ADMISSIBILITY_SLACK {
            return Err(Error::InadmissibleCovariance(1.0 + corrected));
        }
        Ok(RankOneQuasiFreeState { x, x0, xi })
    }

    /// Every mode thermal at covariance `x`.
    pub fn gibbs(modes: usize, x: Covariance) -> Result<Self> {
        Self::new(x, 0.0, vec![C64::new(0.0, 0.0); modes])
    }

    /// The state `e^{−β Σ n_k − δ dΓ(|ξ⟩⟨ξ|)}/Z` written in `(x, x₀, ξ)` form.
    pub fn from_gibbs_perturbation(beta: f64, delta: f64, xi: Vec<C64>) -> Result<Self> {
        let b = check_beta(beta)?;
        if b.is_vacuum() {
            return Err(Error::InfiniteTemperature("a perturbed Gibbs state"));
        }
        let x = Covariance::gibbs(b);
        let nrm = norm_sqr(&xi);
        let shifted = beta + delta * nrm;
        if !(shifted > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("beta + delta<xi,xi> = {shifted} must be > 0"),
            });
        }
        let x0 = if nrm == 0.0 {
            0.0
        } else {
            (Covariance::gibbs(InverseTemperature::new(shifted)?).excess - x.excess) / nrm
        };
        Self::new(x, x0, xi)
    }

    pub fn modes(&self) -> usize {
        self.xi.len()
    }

    pub fn background(&self) -> Covariance {
        self.x
    }

    pub fn correction_weight(&self) -> f64 {
        self.x0
    }

    pub fn xi(&self) -> &[C64] {
        &self.xi
    }

    /// Covariance of the corrected direction, `x + x₀⟨ξ,ξ⟩`.
    pub fn corrected(&self) -> Covariance {
        let e = self.x.excess + self.x0 * norm_sqr(&self.xi);
        Covariance { excess: e.max(0.0) }
    }
}

/// `ω(W(ζ)) = exp[−¼(x⟨ζ,ζ⟩ + x₀|⟨ξ,ζ⟩|²)]`.
pub fn char_fn(state: &RankOneQuasiFreeState, zeta: &[C64]) -> Result<f64> {
    if zeta.len() != state.modes() {
        return Err(Error::DimensionMismatch { expected: state.modes(), found: zeta.len() });
    }
    let quad = state.x.value() * norm_sqr(zeta) + state.x0 * inner(&state.xi, zeta).norm_sqr();
    Ok((-0.25 * quad).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub total: f64,
    pub per_mode_background: f64,
    pub corrected_mode: f64,
}

pub fn state_entropy(state: &RankOneQuasiFreeState) -> EntropyReport {
    let background = state.x.entropy();
    let corrected = state.corrected().entropy();
    EntropyReport {
        total: (state.modes() - 1) as f64 * background + corrected,
        per_mode_background: background,
        corrected_mode: corrected,
    }
}

/// `(1−e^{−β})^{−N}(1−e^{−(β+δ⟨ξ,ξ⟩)})^{−1}` on `N + 1 = ξ.len()` modes.
pub fn partition_function(beta: f64, delta: f64, xi: &[C64]) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter { name: "beta", reason: format!("need finite beta > 0, got {beta}") });
    }
    if xi.is_empty() {
        return Err(Error::InvalidParameter { name: "xi", reason: "at least one mode required".into() });
    }
    let shifted = beta + delta * norm_sqr(xi);
    if !(shifted > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("beta + delta<xi,xi> = {shifted} must be > 0"),
        });
    }
    let background = (xi.len() - 1) as f64;
    let log_z = -background * (-(-beta).exp_m1()).ln() - (-(-shifted).exp_m1()).ln();
    Ok(log_z.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gibbs_x_values() {
        assert_eq!(gibbs_x(f64::INFINITY).unwrap(), 1.0);
        assert!((gibbs_x(3f64.ln()).unwrap() - 2.0).abs() < 1e-15);
        assert!(gibbs_x(0.0).is_err());
        assert!(gibbs_x(-2.0).is_err());
    }

    #[test]
    fn beta_from_x_values() {
        assert!((beta_from_x(2.0).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert_eq!(beta_from_x(1.0).unwrap(), f64::INFINITY);
        assert!((beta_from_x(1.5).unwrap() - 5f64.ln()).abs() < 1e-15);
        assert!((gibbs_x(5f64.ln()).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(beta_from_x(0.99), Err(Error::InadmissibleCovariance(_))));
    }

    #[test]
    fn covariance_roundtrip_to_fifty() {
        let mut beta = 0.01;
        while beta <= 50.0 {
            let back = Covariance::gibbs(InverseTemperature::new(beta).unwrap()).beta().value();
            assert!((back - beta).abs() < 1e-12 * beta.max(1.0), "{beta} -> {back}");
            beta *= 1.07;
        }
    }

    #[test]
    fn sigma_values() {
        assert_eq!(sigma(1.0).unwrap(), 0.0);
        assert!((sigma(2.0).unwrap() - 0.954_771_252_442_219_227_7).abs() < 1e-15);
        assert!(sigma(0.5).is_err());
    }

    #[test]
    fn mode_entropy_matches_sigma() {
        assert_eq!(mode_entropy(f64::INFINITY).unwrap(), 0.0);
        assert!((mode_entropy(3f64.ln()).unwrap() - sigma(2.0).unwrap()).abs() < 1e-15);
        for i in 0..200 {
            let beta = 0.05 + 0.25 * i as f64;
            let a = mode_entropy(beta).unwrap();
            let b = sigma(gibbs_x(beta).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-12, "{beta}");
        }
    }

    #[test]
    fn occupation_values() {
        assert_eq!(occupation(f64::INFINITY).unwrap(), 0.0);
        assert!((occupation(2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        let beta = 0.7;
        assert!((gibbs_x(beta).unwrap() - 2.0 * occupation(beta).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn char_fn_single_mode_gibbs() {
        let beta: f64 = 0.8;
        let state = RankOneQuasiFreeState::gibbs(1, Covariance::gibbs(InverseTemperature::new(beta).unwrap())).unwrap();
        let alpha = c(0.4, -0.3);
        let a2 = alpha.norm_sqr();
        let expected = (-0.25 * a2 - 0.5 * a2 / beta.exp_m1()).exp();
        assert!((char_fn(&state, &[alpha]).unwrap() - expected).abs() < 1e-15);
        assert_eq!(char_fn(&state, &[c(0.0, 0.0)]).unwrap(), 1.0);
        assert!(char_fn(&state, &[alpha, alpha]).is_err());
    }

    #[test]
    fn entropy_of_product_state() {
        let (b0, b): (f64, f64) = (0.6, 1.9);
        let x = gibbs_x(b).unwrap();
        let x0 = gibbs_x(b0).unwrap() - x;
        let n = 4;
        let mut xi = vec![c(0.0, 0.0); n + 1];
        xi[0] = c(1.0, 0.0);
        let state = RankOneQuasiFreeState::new(Covariance::new(x).unwrap(), x0, xi).unwrap();
        let r = state_entropy(&state);
        let expected = n as f64 * mode_entropy(b).unwrap() + mode_entropy(b0).unwrap();
        assert!((r.total - expected).abs() < 1e-12);
        assert!((r.total - (n as f64 * r.per_mode_background + r.corrected_mode)).abs() < 1e-12);

        let vac = RankOneQuasiFreeState::gibbs(3, Covariance::VACUUM).unwrap();
        assert_eq!(state_entropy(&vac).total, 0.0);
    }

    #[test]
    fn perturbed_gibbs_entropy() {
        let xi = vec![c(0.3, 0.1), c(-0.2, 0.5), c(0.0, 0.4)];
        let (beta, delta) = (1.2, 0.7);
        let state = RankOneQuasiFreeState::from_gibbs_perturbation(beta, delta, xi.clone()).unwrap();
        let nrm = norm_sqr(&xi);
        let expected = 2.0 * mode_entropy(beta).unwrap() + mode_entropy(beta + delta * nrm).unwrap();
        assert!((state_entropy(&state).total - expected).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_state_rejected() {
        let x = Covariance::new(1.5).unwrap();
        assert!(RankOneQuasiFreeState::new(x, -0.6, vec![c(1.0, 0.0)]).is_err());
        assert!(RankOneQuasiFreeState::new(x, -0.5, vec![c(1.0, 0.0)]).is_ok());
    }

    #[test]
    fn partition_function_cases() {
        let beta: f64 = 0.9;
        let xi = vec![c(0.0, 0.0); 3];
        let z = partition_function(beta, 0.0, &xi).unwrap();
        assert!((z - (1.0 - (-beta).exp()).powi(-3)).abs() < 1e-12 * z);

        let b0: f64 = 0.4;
        let mut e = vec![c(0.0, 0.0); 3];
        e[0] = c(1.0, 0.0);
        let z = partition_function(beta, b0 - beta, &e).unwrap();
        let single = |b: f64| 1.0 / (1.0 - (-b).exp());
        assert!((z - single(b0) * single(beta).powi(2)).abs() < 1e-12 * z);
        assert!(partition_function(beta, -2.0, &e).is_err());
    }
}
