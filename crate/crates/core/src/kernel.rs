//! Single-step and multi-step propagator algebra.
//!
//! During the n-th interaction interval only chain slot `n` couples to the
//! system mode, so one step acts on the mode vector ζ ∈ ℂ^{N+1} through a
//! unitary that differs from the identity only on rows/columns {0, n}. The
//! entries are built from three scalars `g`, `w`, `z` evaluated at the
//! interaction time τ. Everything here is closed form; the dense matrices are
//! kept for cross-checks.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Inverse temperature in `(0, +inf]`; `+inf` is the vacuum.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    pub const VACUUM: Self = InverseTemperature(f64::INFINITY);

    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("inverse temperature must lie in (0, inf], got {beta}"),
            });
        }
        Ok(InverseTemperature(beta))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_vacuum(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for InverseTemperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_vacuum() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for InverseTemperature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_vacuum() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for InverseTemperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let beta = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(t) => match t.trim() {
                "inf" | "+inf" | "infinity" | "Infinity" => f64::INFINITY,
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "expected a number or \"inf\", got \"{other}\""
                    )))
                }
            },
        };
        InverseTemperature::new(beta).map_err(serde::de::Error::custom)
    }
}

/// Unvalidated model description, as read from a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "E")]
    pub energy: f64,
    pub eps: f64,
    pub eta: f64,
    pub tau: f64,
    #[serde(rename = "N")]
    pub chain_len: usize,
    pub beta0: InverseTemperature,
    pub beta: InverseTemperature,
}

/// Validated physical and run parameters.
///
/// Construction enforces η² ≤ Eε. Whether |w(τ)|, |z(τ)| < 1 is recorded but
/// not enforced: the propagator algebra holds for every τ, only the
/// large-time limits need it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    energy: f64,
    eps: f64,
    eta: f64,
    tau: f64,
    chain_len: usize,
    beta0: InverseTemperature,
    beta: InverseTemperature,
    contracting: bool,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite and > 0, got {v}") })
    }
}

/// η² ≤ Eε, with a few ulps of slack so that η = sqrt(Eε) is admitted.
fn stable(energy: f64, eps: f64, eta: f64) -> bool {
    eta * eta <= energy * eps * (1.0 + 4.0 * f64::EPSILON)
}

impl ModelParams {
    pub fn new(
        energy: f64,
        eps: f64,
        eta: f64,
        tau: f64,
        chain_len: usize,
        beta0: InverseTemperature,
        beta: InverseTemperature,
    ) -> Result<Self> {
        positive("E", energy)?;
        positive("eps", eps)?;
        positive("tau", tau)?;
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("coupling must be finite and >= 0, got {eta}"),
            });
        }
        if chain_len == 0 {
            return Err(Error::InvalidParameter { name: "N", reason: "chain length must be >= 1".into() });
        }
        if !stable(energy, eps, eta) {
            return Err(Error::Unstable { eta_sq: eta * eta, bound: energy * eps });
        }
        let mut p = ModelParams { energy, eps, eta, tau, chain_len, beta0, beta, contracting: false };
        let s = step_scalars(&p);
        p.contracting = s.w.norm() < 1.0 && s.z.norm() < 1.0;
        Ok(p)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn chain_len(&self) -> usize {
        self.chain_len
    }
    pub fn beta0(&self) -> InverseTemperature {
        self.beta0
    }
    pub fn beta(&self) -> InverseTemperature {
        self.beta
    }

    /// |w(τ)| < 1 and |z(τ)| < 1.
    pub fn is_contracting(&self) -> bool {
        self.contracting
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.energy, self.eps, self.eta, tau, self.chain_len, self.beta0, self.beta)
    }

    pub fn with_chain_len(&self, chain_len: usize) -> Result<Self> {
        Self::new(self.energy, self.eps, self.eta, self.tau, chain_len, self.beta0, self.beta)
    }

    pub fn with_temperatures(&self, beta0: InverseTemperature, beta: InverseTemperature) -> Result<Self> {
        Self::new(self.energy, self.eps, self.eta, self.tau, self.chain_len, beta0, beta)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            energy: self.energy,
            eps: self.eps,
            eta: self.eta,
            tau: self.tau,
            chain_len: self.chain_len,
            beta0: self.beta0,
            beta: self.beta,
        }
    }

    /// sqrt((E−ε)²/4 + η²), the two-mode Rabi frequency.
    pub fn rabi_frequency(&self) -> f64 {
        rabi(self.energy, self.eps, self.eta)
    }
}

impl TryFrom<ModelSpec> for ModelParams {
    type Error = Error;

    fn try_from(s: ModelSpec) -> Result<Self> {
        ModelParams::new(s.energy, s.eps, s.eta, s.tau, s.chain_len, s.beta0, s.beta)
    }
}

fn rabi(energy: f64, eps: f64, eta: f64) -> f64 {
    (0.25 * (energy - eps).powi(2) + eta * eta).sqrt()
}

/// The step scalars (g, w, z).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepScalars {
    pub g: C64,
    pub w: C64,
    pub z: C64,
}

impl StepScalars {
    /// Largest violation among |g| = 1, |z|² + |w|² = 1 and w = −w̄.
    pub fn identity_deviation(&self) -> f64 {
        let unimodular = (self.g.norm() - 1.0).abs();
        let norm = (self.z.norm_sqr() + self.w.norm_sqr() - 1.0).abs();
        let imaginary = (self.w + self.w.conj()).norm();
        unimodular.max(norm).max(imaginary)
    }

    /// g·z, the per-step amplitude retained by the system mode.
    pub fn gz(&self) -> C64 {
        self.g * self.z
    }
}

pub fn step_scalars(params: &ModelParams) -> StepScalars {
    step_scalars_at(params, params.tau)
}

/// (g, w, z) at an arbitrary time `t`; the model uses `t = τ`.
pub fn step_scalars_at(params: &ModelParams, t: f64) -> StepScalars {
    let detuning = params.energy - params.eps;
    let g = C64::from_polar(1.0, 0.5 * t * detuning);
    let omega = params.rabi_frequency();
    if omega == 0.0 {
        // E = ε and η = 0: no mixing at all
        return StepScalars { g, w: C64::new(0.0, 0.0), z: C64::new(1.0, 0.0) };
    }
    let (sin, cos) = (t * omega).sin_cos();
    // 2η/sqrt((E−ε)² + 4η²) = η/Ω; vanishes identically at η = 0
    let w = C64::new(0.0, params.eta / omega * sin);
    let z = C64::new(cos, 0.5 * detuning / omega * sin);
    StepScalars { g, w, z }
}

/// c^p computed in polar form, so large powers do not accumulate rounding.
pub(crate) fn cpow(c: C64, p: usize) -> C64 {
    if p == 0 {
        return C64::new(1.0, 0.0);
    }
    let (r, theta) = c.to_polar();
    C64::from_polar(r.powf(p as f64), theta * p as f64)
}

/// |c|^{2p}, with 0^0 = 1.
pub(crate) fn norm_sqr_pow(c: C64, p: usize) -> f64 {
    if p == 0 {
        1.0
    } else {
        c.norm_sqr().powf(p as f64)
    }
}

/// The (N+1)×(N+1) step matrix V_n(t) for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMatrix {
    pub slot: usize,
    pub entries: DMatrix<C64>,
}

impl StepMatrix {
    /// max |V*V − I|.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.entries.nrows();
        let prod = self.entries.adjoint() * &self.entries;
        max_abs_diff(&prod, &DMatrix::identity(n, n))
    }

    /// U_n = e^{itε} V_n.
    pub fn propagator(&self, params: &ModelParams, t: f64) -> DMatrix<C64> {
        &self.entries * C64::from_polar(1.0, t * params.eps)
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn check_slot(params: &ModelParams, slot: usize) -> Result<()> {
    if slot == 0 || slot > params.chain_len {
        Err(Error::SlotOutOfRange { slot, chain_len: params.chain_len })
    } else {
        Ok(())
    }
}

pub fn step_matrix(params: &ModelParams, slot: usize) -> Result<StepMatrix> {
    step_matrix_at(params, slot, params.tau)
}

pub fn step_matrix_at(params: &ModelParams, slot: usize, t: f64) -> Result<StepMatrix> {
    check_slot(params, slot)?;
    let StepScalars { g, w, z } = step_scalars_at(params, t);
    let dim = params.chain_len + 1;
    let mut v = DMatrix::<C64>::identity(dim, dim);
    v[(0, 0)] = g * z;
    v[(0, slot)] = g * w;
    v[(slot, 0)] = g * w;
    v[(slot, slot)] = g * z.conj();
    Ok(StepMatrix { slot, entries: v })
}

/// Result of exponentiating the one-particle generator Y_n numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialCheck {
    /// max |e^{iτY_n} − U_n(τ)| with the exponential taken by eigendecomposition.
    pub deviation: f64,
    /// max |X_n² − ((E−ε)²/4 + η²) J_n|.
    pub x_square_deviation: f64,
    /// max |J_n X_n − X_n|.
    pub jx_deviation: f64,
}

/// Builds Y_n = εI + ((E−ε)/2) J_n + X_n and compares its exponential with
/// the closed-form propagator.
pub fn matrix_exponential_check(params: &ModelParams, slot: usize) -> Result<ExponentialCheck> {
    check_slot(params, slot)?;
    let dim = params.chain_len + 1;
    let half = 0.5 * (params.energy - params.eps);

    let mut j = DMatrix::<f64>::zeros(dim, dim);
    j[(0, 0)] = 1.0;
    j[(slot, slot)] = 1.0;
    let mut x = DMatrix::<f64>::zeros(dim, dim);
    x[(0, 0)] = half;
    x[(slot, slot)] = -half;
    x[(0, slot)] = params.eta;
    x[(slot, 0)] = params.eta;
    let y = DMatrix::<f64>::identity(dim, dim) * params.eps + &j * half + &x;

    let omega_sq = half * half + params.eta * params.eta;
    let xsq = (&x * &x - &j * omega_sq).abs().max();
    let jx = (&j * &x - &x).abs().max();

    let eig = SymmetricEigen::new(y);
    let vecs = eig.eigenvectors.map(|v| C64::new(v, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, params.tau * l)));
    let expo = &vecs * phases * vecs.adjoint();

    let u = step_matrix(params, slot)?.propagator(params, params.tau);
    Ok(ExponentialCheck { deviation: max_abs_diff(&expo, &u), x_square_deviation: xsq, jx_deviation: jx })
}

/// The two non-trivial one-particle energies (ε₀, ε₁), ε₀ ≥ ε₁.
pub fn normal_modes(params: &ModelParams) -> (f64, f64) {
    let sum = params.energy + params.eps;
    let split = ((params.energy - params.eps).powi(2) + 4.0 * params.eta * params.eta).sqrt();
    let upper = 0.5 * (sum + split);
    // product of the two roots; exact zero on the stability boundary
    let lower = (params.energy * params.eps - params.eta * params.eta) / upper;
    (upper, lower)
}

/// U₁…U_m ζ after `steps` completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatedVector {
    pub steps: usize,
    pub components: Vec<C64>,
}

impl PropagatedVector {
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Applies the first `steps` step propagators to ζ in O(N) with the closed
/// piecewise formula.
pub fn propagate_vector(params: &ModelParams, steps: usize, zeta: &[C64]) -> Result<PropagatedVector> {
    let n = params.chain_len;
    if zeta.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, found: zeta.len() });
    }
    if steps == 0 || steps > n {
        return Err(Error::StepsOutOfRange { steps, min: 1, max: n });
    }
    let m = steps;
    let s = step_scalars(params);
    let gz = s.gz();
    let gw = s.g * s.w;
    let gzbar = s.g * s.z.conj();
    let phase = C64::from_polar(1.0, m as f64 * params.tau * params.eps);

    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    // tail[k] = Σ_{j=k+1}^{m} (gz)^{j−k−1} ζ_j, accumulated backwards
    let mut tail = C64::new(0.0, 0.0);
    out[m] = gw * zeta[0] + gzbar * zeta[m];
    for k in (1..m).rev() {
        tail = zeta[k + 1] + gz * tail;
        out[k] = gw * cpow(gz, m - k) * zeta[0] + gzbar * zeta[k] + gw * gw * tail;
    }
    let head = zeta[1] + gz * tail;
    out[0] = cpow(gz, m) * zeta[0] + gw * head;
    out[m + 1..].copy_from_slice(&zeta[m + 1..]);
    for c in out.iter_mut() {
        *c *= phase;
    }
    Ok(PropagatedVector { steps: m, components: out })
}

/// Pass/fail summary of the stability and contraction hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// η² ≤ Eε.
    pub stable: bool,
    pub stability_margin: f64,
    /// τ·sqrt((E−ε)²/4 + η²) < π/2, the sufficient small-τ condition.
    pub short_interaction: bool,
    pub w_modulus: f64,
    pub z_modulus: f64,
    /// |w| < 1 and |z| < 1; the large-time limits are void without it.
    pub contracting: bool,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.stable && self.contracting
    }
}

pub fn validate_hypotheses(spec: &ModelSpec) -> HypothesisReport {
    let mut notes = Vec::new();
    let stable = stable(spec.energy, spec.eps, spec.eta);
    let margin = spec.energy * spec.eps - spec.eta * spec.eta;
    if !stable {
        notes.push("eta^2 > E*eps: Hamiltonian unbounded below".to_string());
    }
    if spec.eta == 0.0 {
        notes.push("eta = 0: decoupled dynamics".to_string());
    }
    let omega = rabi(spec.energy, spec.eps, spec.eta);
    let phase = spec.tau * omega;
    let short_interaction = phase < FRAC_PI_2;
    let (w_modulus, z_modulus) = if omega == 0.0 {
        (0.0, 1.0)
    } else {
        let (sin, cos) = phase.sin_cos();
        let w = (spec.eta / omega * sin).abs();
        let z = C64::new(cos, 0.5 * (spec.energy - spec.eps) / omega * sin).norm();
        (w, z)
    };
    let contracting = w_modulus < 1.0 && z_modulus < 1.0;
    if !contracting {
        notes.push("|w| or |z| not below 1: convergence statements do not apply".to_string());
    }
    HypothesisReport { stable, stability_margin: margin, short_interaction, w_modulus, z_modulus, contracting, notes }
}
