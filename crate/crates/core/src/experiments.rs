//! Experiment drivers: the short-time limit, moment checks on chain states,
//! convergence studies, oracle cross-checks and parameter sweeps.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    covariances, effective_beta_S, effective_beta_Sm, effective_x_chain, effective_x_s, entropy_production_limit,
    evolve_state, reduced_char_fn, relative_entropy, total_entropy, window_entropy, window_limit_entropy,
    SubsystemSelector,
};
use crate::error::{Error, Result};
use crate::fock_oracle::{
    build_ladder, evolve_density, gibbs_density, partial_trace, product_state, relative_entropy_oracle,
    von_neumann_entropy, weyl_expectation, FockDensityMatrix, OneModeCharacteristic,
};
use crate::kernel::{matrix_exponential_check, normal_modes, step_scalars, InverseTemperature, ModelParams};
use crate::quasifree::Covariance;
use crate::records::{ComplexRepr, RunRecord};

/// `τ(N) = c·N^{−a}` along increasing checkpoints, `1/3 < a < 1/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSchedule {
    pub exponent: f64,
    pub multiplier: f64,
    pub checkpoints: Vec<usize>,
}

impl Default for LimitSchedule {
    fn default() -> Self {
        LimitSchedule { exponent: 0.4, multiplier: 2.0, checkpoints: vec![100, 1_000, 10_000, 100_000, 1_000_000] }
    }
}

impl LimitSchedule {
    pub fn new(exponent: f64, multiplier: f64, checkpoints: Vec<usize>) -> Result<Self> {
        let s = LimitSchedule { exponent, multiplier, checkpoints };
        s.validate()?;
        Ok(s)
    }

    pub fn tau(&self, n: usize) -> f64 {
        self.multiplier * (n as f64).powf(-self.exponent)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if !(self.exponent > 1.0 / 3.0 && self.exponent < 0.5) {
            return bad(format!("exponent {} outside (1/3, 1/2)", self.exponent));
        }
        if !(self.multiplier.is_finite() && self.multiplier > 0.0) {
            return bad(format!("multiplier {} must be > 0", self.multiplier));
        }
        if self.checkpoints.is_empty() || self.checkpoints[0] == 0 {
            return bad("checkpoints must be nonempty and positive".into());
        }
        for w in self.checkpoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                return bad(format!("checkpoints not increasing at {a}, {b}"));
            }
            let t2 = |n: usize| self.tau(n).powi(2) * n as f64;
            let t3 = |n: usize| self.tau(n).powi(3) * n as f64;
            if !(t2(b) > t2(a)) || !(t3(b) < t3(a)) {
                return bad(format!("tau^2 N must increase and tau^3 N decrease between {a} and {b}"));
            }
        }
        Ok(())
    }
}

/// The common one-mode state of every chain element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainStateSpec {
    Gibbs { beta: InverseTemperature },
    NumberState { n: usize },
    /// Density matrix in the Fock basis, padded with zeros up to the cutoff.
    Custom { rho: Vec<Vec<ComplexRepr>> },
}

impl ChainStateSpec {
    pub fn density(&self, cutoff: usize) -> Result<DMatrix<C64>> {
        let m = match self {
            Self::Gibbs { beta } => gibbs_density(*beta, cutoff)?.0.to_dense(),
            Self::NumberState { n } => {
                if *n >= cutoff {
                    return Err(Error::DimensionMismatch { expected: n + 1, found: cutoff });
                }
                let mut m = DMatrix::from_element(cutoff, cutoff, C64::new(0.0, 0.0));
                m[(*n, *n)] = C64::new(1.0, 0.0);
                m
            }
            Self::Custom { rho } => {
                let d = rho.len();
                if rho.iter().any(|row| row.len() != d) {
                    return Err(Error::InvalidDensity("custom density matrix must be square".into()));
                }
                if d > cutoff {
                    return Err(Error::DimensionMismatch { expected: d, found: cutoff });
                }
                let mut m = DMatrix::from_element(cutoff, cutoff, C64::new(0.0, 0.0));
                for (i, row) in rho.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        m[(i, j)] = (*v).into();
                    }
                }
                m
            }
        };
        check_density(&m)?;
        Ok(m)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gibbs { beta } => format!("gibbs({beta})"),
            Self::NumberState { n } => format!("number({n})"),
            Self::Custom { rho } => format!("custom({})", rho.len()),
        }
    }
}

fn check_density(m: &DMatrix<C64>) -> Result<()> {
    let herm = (m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if herm > 1e-12 {
        return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:e})")));
    }
    let tr = m.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
    }
    let low = m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if low < -1e-12 {
        return Err(Error::InvalidDensity(format!("negative eigenvalue {low:e}")));
    }
    Ok(())
}

/// Measured `Tr[ρ|Φ(y)|^p] / |y|^p` against an a priori bound built from
/// the second and fourth moments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub order: u32,
    pub fitted_constant: f64,
    pub a_priori: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub cutoff: usize,
    pub mean_a: C64,
    pub mean_a2: C64,
    pub number: f64,
    /// `Tr[ρ(a*a)²]`.
    pub number_sq: f64,
    /// `Tr[ρ(a*a + aa*)]`, the exponent of the short-time limit.
    pub symmetric_second: f64,
    pub h2: bool,
    pub h3: bool,
    pub bounds: Vec<BoundCheck>,
    /// `ω^T(Φ(θ))`, `ω^T(Φ²(θ))` at `θ = 1`.
    pub truncated_first: f64,
    pub truncated_second: f64,
    /// Weight of the top Fock level at the requested cutoff.
    pub top_weight: f64,
}

impl MomentReport {
    pub fn passes(&self) -> bool {
        self.h2 && self.h3 && self.bounds.iter().all(|b| b.pass)
    }
}

/// Levels added above the cutoff so that moments up to order four are exact.
const MOMENT_PADDING: usize = 4;
const H2_TOLERANCE: f64 = 1e-12;

fn padded(rho: &DMatrix<C64>, extra: usize) -> DMatrix<C64> {
    let d = rho.nrows();
    DMatrix::from_fn(d + extra, d + extra, |i, j| if i < d && j < d { rho[(i, j)] } else { C64::new(0.0, 0.0) })
}

fn expect(rho: &DMatrix<C64>, op: &DMatrix<C64>) -> C64 {
    (rho * op).trace()
}

pub fn moment_hypothesis_check(spec: &ChainStateSpec, cutoff: usize) -> Result<MomentReport> {
    let base = spec.density(cutoff)?;
    let top_weight = base[(cutoff - 1, cutoff - 1)].re;
    let rho = padded(&base, MOMENT_PADDING);
    let d = rho.nrows();
    let a = build_ladder(d)?.map(|v| C64::new(v, 0.0));
    let ad = a.adjoint();
    let num = &ad * &a;
    let mean_a = expect(&rho, &a);
    let mean_a2 = expect(&rho, &(&a * &a));
    let number = expect(&rho, &num).re;
    let number_sq = expect(&rho, &(&num * &num)).re;
    let sym = &num + &a * &ad;
    let symmetric_second = expect(&rho, &sym).re;
    let h2 = mean_a.norm() <= H2_TOLERANCE && mean_a2.norm() <= H2_TOLERANCE;
    let h3 = number_sq.is_finite();

    let field = |y: C64| &ad * y + &a * y.conj();
    let second_bound = 2.0 * symmetric_second;
    let quartic = &sym * &sym + &a * &a * &ad * &ad + &ad * &ad * &a * &a;
    let fourth_bound = 4.0 * expect(&rho, &quartic).re;
    let mut fitted = [0.0f64; 3];
    let mut pass_third = true;
    let samples: Vec<C64> = (0..12)
        .map(|k| C64::from_polar(0.25 + 0.125 * (k % 4) as f64, std::f64::consts::TAU * k as f64 / 12.0))
        .collect();
    for &y in &samples {
        let eig = SymmetricEigen::new(field(y));
        let v = &eig.eigenvectors;
        let weights: Vec<f64> = (0..d).map(|j| (v.column(j).adjoint() * &rho * v.column(j))[(0, 0)].re).collect();
        let moment = |p: i32| -> f64 { eig.eigenvalues.iter().zip(&weights).map(|(l, w)| w * l.abs().powi(p)).sum() };
        let (m2, m3, m4) = (moment(2), moment(3), moment(4));
        let r = y.norm();
        fitted[0] = fitted[0].max(m2 / r.powi(2));
        fitted[1] = fitted[1].max(m3 / r.powi(3));
        fitted[2] = fitted[2].max(m4 / r.powi(4));
        // Cauchy-Schwarz between the second and fourth moments
        pass_third &= m3 <= (m2 * m4).sqrt() * (1.0 + 1e-10) + 1e-14;
    }
    let slack = |b: f64| b * (1.0 + 1e-10) + 1e-14;
    let third_bound = (second_bound * fourth_bound).sqrt();
    let bounds = vec![
        BoundCheck { order: 2, fitted_constant: fitted[0], a_priori: second_bound, pass: fitted[0] <= slack(second_bound) },
        BoundCheck {
            order: 3,
            fitted_constant: fitted[1],
            a_priori: third_bound,
            pass: pass_third && fitted[1] <= slack(third_bound),
        },
        BoundCheck { order: 4, fitted_constant: fitted[2], a_priori: fourth_bound, pass: fitted[2] <= slack(fourth_bound) },
    ];

    let phi = field(C64::new(1.0, 0.0));
    let first = expect(&rho, &phi).re;
    let truncated_second = expect(&rho, &(&phi * &phi)).re - first * first;
    Ok(MomentReport {
        cutoff,
        mean_a,
        mean_a2,
        number,
        number_sq,
        symmetric_second,
        h2,
        h3,
        bounds,
        truncated_first: first,
        truncated_second,
        top_weight,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitPoint {
    pub chain_len: usize,
    pub tau: f64,
    pub tau2_n: f64,
    pub tau3_n: f64,
    pub theta: C64,
    pub value: C64,
    pub limit: f64,
    pub error: f64,
    /// For Gibbs chains: the discrepancy computed from the closed-form
    /// reduced state of S.
    pub exact_error: Option<f64>,
}

/// Nonnegative least-squares fit `error ≈ c1·e^{−η²τ²N/2} + c2·τ³N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundFit {
    pub theta: C64,
    pub c1: f64,
    pub c2: f64,
    pub final_error: f64,
    pub final_bound: f64,
    /// final error below [`LIMIT_THRESHOLD_FACTOR`] times the fitted bound.
    pub within_threshold: bool,
    /// Nonincreasing from the first checkpoint with `τ²N ≥ 1` (5% slack per step).
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitRun {
    pub spec: String,
    pub points: Vec<LimitPoint>,
    pub fits: Vec<BoundFit>,
}

pub const LIMIT_THRESHOLD_FACTOR: f64 = 10.0;
pub const MONOTONE_SLACK: f64 = 0.05;

impl LimitRun {
    pub fn passes(&self) -> bool {
        self.fits.iter().all(|f| f.within_threshold && f.monotone)
    }

    pub fn to_records(&self) -> Vec<RunRecord> {
        let mut out: Vec<RunRecord> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut r = RunRecord::new(format!("limit-{i}"))
                    .with("spec", self.spec.as_str())
                    .with("N", p.chain_len)
                    .with("tau", p.tau)
                    .with("tau2N", p.tau2_n)
                    .with("tau3N", p.tau3_n)
                    .with("theta", p.theta)
                    .with("value", p.value)
                    .with("limit", p.limit)
                    .with("error", p.error);
                if let Some(e) = p.exact_error {
                    r.set("exact_error", e);
                }
                r
            })
            .collect();
        for (i, f) in self.fits.iter().enumerate() {
            out.push(
                RunRecord::new(format!("limit-fit-{i}"))
                    .with("spec", self.spec.as_str())
                    .with("theta", f.theta)
                    .with("C1", f.c1)
                    .with("C2", f.c2)
                    .with("final_error", f.final_error)
                    .with("final_bound", f.final_bound)
                    .with("within_threshold", f.within_threshold)
                    .with("monotone", f.monotone),
            );
        }
        out
    }
}

fn nonnegative_fit(y: &[f64], f: &[f64], g: &[f64]) -> (f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (ff, gg, fg, fy, gy) = (dot(f, f), dot(g, g), dot(f, g), dot(f, y), dot(g, y));
    let det = ff * gg - fg * fg;
    if det > 0.0 {
        let c1 = (gg * fy - fg * gy) / det;
        let c2 = (ff * gy - fg * fy) / det;
        if c1 >= 0.0 && c2 >= 0.0 {
            return (c1, c2);
        }
    }
    let residual = |c1: f64, c2: f64| y.iter().zip(f.iter().zip(g)).map(|(y, (f, g))| (y - c1 * f - c2 * g).powi(2)).sum::<f64>();
    let only_f = if ff > 0.0 { (fy / ff).max(0.0) } else { 0.0 };
    let only_g = if gg > 0.0 { (gy / gg).max(0.0) } else { 0.0 };
    if residual(only_f, 0.0) <= residual(0.0, only_g) {
        (only_f, 0.0)
    } else {
        (0.0, only_g)
    }
}

/// System characteristic function after `N` steps of the schedule, for
/// every checkpoint and argument θ, compared with
/// `exp(−¼|θ|² Tr[ρ₁(a*a + aa*)])`.
///
/// The system starts in the Gibbs state at `template.beta0()`; the template
/// supplies `E`, ε and η, while τ and N come from the schedule.
pub fn short_time_limit_run(
    template: &ModelParams,
    schedule: &LimitSchedule,
    spec: &ChainStateSpec,
    thetas: &[C64],
    cutoff: usize,
) -> Result<LimitRun> {
    schedule.validate()?;
    let moments = moment_hypothesis_check(spec, cutoff)?;
    if !moments.passes() {
        return Err(Error::MomentHypothesis(format!(
            "{}: |Tr[rho a]| = {:e}, |Tr[rho a^2]| = {:e}",
            spec.label(),
            moments.mean_a.norm(),
            moments.mean_a2.norm()
        )));
    }
    let chain = match spec {
        ChainStateSpec::Gibbs { .. } => None,
        _ => Some(OneModeCharacteristic::new(&spec.density(cutoff)?)?),
    };
    let x_system = Covariance::gibbs(template.beta0()).value();
    let mut points = Vec::new();
    for &n in &schedule.checkpoints {
        let tau = schedule.tau(n);
        let p = ModelParams::new(template.energy(), template.eps(), template.eta(), tau, n, template.beta0(), match spec {
            ChainStateSpec::Gibbs { beta } => *beta,
            _ => template.beta(),
        })?;
        let s = step_scalars(&p);
        let gz = s.gz();
        let phase = C64::from_polar(1.0, p.eps() * tau * n as f64);
        let (r_gz, arg_gz) = gz.to_polar();
        for &theta in thetas {
            let head = phase * C64::from_polar(r_gz.powf(n as f64), arg_gz * n as f64) * theta;
            let c0 = (-0.25 * x_system * head.norm_sqr()).exp();
            let value = match (&chain, spec) {
                (None, ChainStateSpec::Gibbs { beta }) => {
                    let tail = theta.norm_sqr() * -(n as f64 * s.z.norm_sqr().ln()).exp_m1();
                    C64::new(c0 * (-0.25 * Covariance::gibbs(*beta).value() * tail).exp(), 0.0)
                }
                (Some(oracle), _) => {
                    // divide out Tr ρ so rounding in the trace does not compound over N factors
                    let trace = oracle.eval(C64::new(0.0, 0.0));
                    let base = phase * s.g * s.w * theta;
                    // θ_k = base·(gz)^{N−k}; run k from N down so the power grows
                    let mut prod = C64::new(c0, 0.0);
                    let mut power = C64::new(1.0, 0.0);
                    for j in 0..n {
                        if j % 4096 == 0 {
                            power = C64::from_polar(r_gz.powf(j as f64), arg_gz * j as f64);
                        }
                        prod *= oracle.eval(base * power) / trace;
                        power *= gz;
                    }
                    prod
                }
                _ => unreachable!("chain oracle exists for every non-Gibbs state"),
            };
            let limit = (-0.25 * theta.norm_sqr() * moments.symmetric_second).exp();
            let exact_error = match spec {
                ChainStateSpec::Gibbs { .. } => {
                    let r = reduced_char_fn(&p, &SubsystemSelector::System { step: n }, &[theta])?;
                    Some((r - limit).abs())
                }
                _ => None,
            };
            points.push(LimitPoint {
                chain_len: n,
                tau,
                tau2_n: tau * tau * n as f64,
                tau3_n: tau.powi(3) * n as f64,
                theta,
                value,
                limit,
                error: (value - C64::new(limit, 0.0)).norm(),
                exact_error,
            });
        }
    }

    let eta2 = template.eta().powi(2);
    let fits = thetas
        .iter()
        .enumerate()
        .map(|(t, &theta)| {
            let series: Vec<&LimitPoint> = points.iter().skip(t).step_by(thetas.len()).collect();
            let y: Vec<f64> = series.iter().map(|p| p.error).collect();
            let f: Vec<f64> = series.iter().map(|p| (-0.5 * eta2 * p.tau2_n).exp()).collect();
            let g: Vec<f64> = series.iter().map(|p| p.tau3_n).collect();
            let (c1, c2) = nonnegative_fit(&y, &f, &g);
            let last = series.len() - 1;
            let final_bound = c1 * f[last] + c2 * g[last];
            let start = series.iter().position(|p| p.tau2_n >= 1.0).unwrap_or(series.len());
            let monotone = series
                .windows(2)
                .skip(start)
                .all(|w| w[1].error <= w[0].error * (1.0 + MONOTONE_SLACK) + 1e-15);
            BoundFit {
                theta,
                c1,
                c2,
                final_error: y[last],
                final_bound,
                within_threshold: y[last] <= LIMIT_THRESHOLD_FACTOR * final_bound || y[last] == 0.0,
                monotone,
            }
        })
        .collect();
    Ok(LimitRun { spec: spec.label(), points, fits })
}

/// Sequences available to [`convergence_study`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    /// `x(β*(mτ)) − x(β)` over steps.
    BetaStar,
    /// `x(β**(mτ)) − x(β)` over sites.
    BetaStarStar,
    /// Relative entropy after N steps, against the production limit.
    RelativeEntropy,
    TotalEntropy,
    /// Window entropy of the given size over steps.
    WindowEntropy { size: usize },
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BetaStar => f.write_str("beta_star"),
            Self::BetaStarStar => f.write_str("beta_star_star"),
            Self::RelativeEntropy => f.write_str("relative_entropy"),
            Self::TotalEntropy => f.write_str("total_entropy"),
            Self::WindowEntropy { size } => write!(f, "window_entropy:{size}"),
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta_star" => Ok(Self::BetaStar),
            "beta_star_star" => Ok(Self::BetaStarStar),
            "relative_entropy" => Ok(Self::RelativeEntropy),
            "total_entropy" => Ok(Self::TotalEntropy),
            "window_entropy" => Ok(Self::WindowEntropy { size: 1 }),
            other => match other.strip_prefix("window_entropy:").map(str::parse::<usize>) {
                Some(Ok(size)) => Ok(Self::WindowEntropy { size }),
                _ => Err(Error::UnknownQuantity(other.to_string())),
            },
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub quantity: Quantity,
    pub limit: f64,
    /// `(index, value)` pairs.
    pub sequence: Vec<(usize, f64)>,
    /// Geometric rate of `|value − limit|` from a log-linear least-squares
    /// fit; `None` when the sequence is already at its limit.
    pub fitted_ratio: Option<f64>,
}

impl ConvergenceStudy {
    pub fn to_records(&self) -> Vec<RunRecord> {
        let mut out: Vec<RunRecord> = self
            .sequence
            .iter()
            .map(|&(i, v)| {
                RunRecord::new(format!("{}-{i}", self.quantity))
                    .with("quantity", self.quantity.to_string())
                    .with("index", i)
                    .with("value", v)
                    .with("limit", self.limit)
                    .with("distance", (v - self.limit).abs())
            })
            .collect();
        out.push(
            RunRecord::new(format!("{}-rate", self.quantity))
                .with("quantity", self.quantity.to_string())
                .with("fitted_ratio", self.fitted_ratio.unwrap_or(f64::NAN)),
        );
        out
    }
}

/// Ratio `exp(slope)` of the least-squares line through `ln d_i`.
pub fn geometric_ratio(points: &[(usize, f64)]) -> Option<f64> {
    let data: Vec<(f64, f64)> =
        points.iter().filter(|(_, d)| *d > 1e-300 && d.is_finite()).map(|&(i, d)| (i as f64, d.ln())).collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|p| p.0).sum::<f64>() / n;
    let my = data.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

const NOISE_FLOOR: f64 = 64.0 * f64::EPSILON;

pub fn convergence_study(params: &ModelParams, quantity: Quantity, horizon: usize) -> Result<ConvergenceStudy> {
    let p = params.with_chain_len(params.chain_len().max(horizon).max(1))?;
    let (_, xc) = covariances(&p);
    let (limit, sequence): (f64, Vec<(usize, f64)>) = match quantity {
        Quantity::BetaStar => (xc.value(), (0..=horizon).map(|m| (m, effective_x_s(&p, m).value())).collect()),
        Quantity::BetaStarStar => (xc.value(), (1..=horizon).map(|m| (m, effective_x_chain(&p, m).value())).collect()),
        Quantity::RelativeEntropy => (
            entropy_production_limit(&p)?,
            (0..=horizon).map(|n| relative_entropy(&p, n).map(|v| (n, v))).collect::<Result<_>>()?,
        ),
        Quantity::TotalEntropy => {
            let v = total_entropy(&p, 0)?;
            (v, (0..=horizon).map(|m| total_entropy(&p, m).map(|t| (m, t))).collect::<Result<_>>()?)
        }
        Quantity::WindowEntropy { size } => {
            if size > horizon {
                return Err(Error::InvalidSelector(format!("window size {size} exceeds horizon {horizon}")));
            }
            (
                window_limit_entropy(&p, size),
                (size..=horizon).map(|k| window_entropy(&p, size, k).map(|v| (k, v))).collect::<Result<_>>()?,
            )
        }
    };
    // distances this close to the limit are rounding noise, not signal
    let floor = NOISE_FLOOR * limit.abs().max(1.0);
    let distances: Vec<(usize, f64)> =
        sequence.iter().map(|&(i, v)| (i, (v - limit).abs())).filter(|d| d.1 > floor).collect();
    let fitted_ratio = geometric_ratio(&distances);
    Ok(ConvergenceStudy { quantity, limit, sequence, fitted_ratio })
}

/// Initial product state and its step-by-step evolution on the truncated
/// Fock space of `N + 1` modes.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub params: ModelParams,
    pub cutoff: usize,
    /// `states[m]` is the state after `m` steps.
    pub states: Vec<FockDensityMatrix>,
}

impl OracleRun {
    pub fn new(params: &ModelParams, cutoff: usize, steps: usize) -> Result<Self> {
        if steps > params.chain_len() {
            return Err(Error::StepsOutOfRange { steps, min: 0, max: params.chain_len() });
        }
        let mut factors = vec![gibbs_density(params.beta0(), cutoff)?.0];
        let chain = gibbs_density(params.beta(), cutoff)?.0;
        factors.extend(std::iter::repeat_n(chain, params.chain_len()));
        let mut states = vec![product_state(&factors)?];
        for slot in 1..=steps {
            let next = evolve_density(states.last().unwrap(), params, &[slot])?;
            states.push(next);
        }
        Ok(OracleRun { params: params.clone(), cutoff, states })
    }

    pub fn state(&self, steps: usize) -> Result<&FockDensityMatrix> {
        self.states.get(steps).ok_or(Error::StepsOutOfRange { steps, min: 0, max: self.states.len() - 1 })
    }

    /// max over ζ of |analytic − oracle| characteristic function.
    pub fn char_fn_deviation(&self, steps: usize, zetas: &[Vec<C64>]) -> Result<f64> {
        let analytic = evolve_state(&self.params, steps)?;
        let rho = self.state(steps)?;
        let mut worst: f64 = 0.0;
        for z in zetas {
            let a = analytic.char_fn(z)?;
            let o = weyl_expectation(rho, z)?;
            worst = worst.max((o - C64::new(a, 0.0)).norm());
        }
        Ok(worst)
    }

    pub fn entropy_deviation(&self, steps: usize) -> Result<f64> {
        Ok((von_neumann_entropy(self.state(steps)?) - total_entropy(&self.params, steps)?).abs())
    }

    pub fn relative_entropy_deviation(&self, steps: usize) -> Result<f64> {
        let o = relative_entropy_oracle(self.state(steps)?, self.state(0)?)?;
        Ok((o - relative_entropy(&self.params, steps)?).abs())
    }

    /// max over α of |closed-form reduced − oracle partial-trace| values.
    pub fn reduced_deviation(&self, selector: &SubsystemSelector, alphas: &[Vec<C64>]) -> Result<f64> {
        let keep = {
            let mut m = selector.modes();
            m.sort_unstable();
            m
        };
        let rho = partial_trace(self.state(selector.step())?, &keep)?;
        let order: Vec<usize> = selector.modes().iter().map(|m| keep.iter().position(|k| k == m).unwrap()).collect();
        let mut worst: f64 = 0.0;
        for a in alphas {
            let mut local = vec![C64::new(0.0, 0.0); keep.len()];
            for (arg, &pos) in a.iter().zip(&order) {
                local[pos] = *arg;
            }
            let o = weyl_expectation(&rho, &local)?;
            let c = reduced_char_fn(&self.params, selector, a)?;
            worst = worst.max((o - C64::new(c, 0.0)).norm());
        }
        Ok(worst)
    }
}

/// Cartesian parameter grid; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(rename = "E")]
    pub energy: Vec<f64>,
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub beta0: Vec<InverseTemperature>,
    pub beta: Vec<InverseTemperature>,
    #[serde(rename = "N")]
    pub chain_len: Vec<usize>,
    /// Run the Fock-space oracle at this cutoff for points with `N ≤ 2`.
    #[serde(default)]
    pub oracle_cutoff: Option<usize>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.energy.len() * self.eps.len() * self.eta.len() * self.tau.len() * self.beta0.len() * self.beta.len() * self.chain_len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[allow(clippy::type_complexity)]
    fn point(&self, mut i: usize) -> (f64, f64, f64, f64, InverseTemperature, InverseTemperature, usize) {
        let mut take = |len: usize| {
            let r = i % len;
            i /= len;
            r
        };
        let n = self.chain_len[take(self.chain_len.len())];
        let b = self.beta[take(self.beta.len())];
        let b0 = self.beta0[take(self.beta0.len())];
        let t = self.tau[take(self.tau.len())];
        let h = self.eta[take(self.eta.len())];
        let e2 = self.eps[take(self.eps.len())];
        let e = self.energy[take(self.energy.len())];
        (e, e2, h, t, b0, b, n)
    }
}

/// Fixed arguments used for oracle comparisons in sweeps and the CLI.
pub fn probe_arguments(modes: usize) -> Vec<Vec<C64>> {
    (0..4)
        .map(|j| {
            (0..modes)
                .map(|k| C64::from_polar(0.15 + 0.05 * ((j + k) % 3) as f64, 0.7 * (j * modes + k) as f64))
                .collect()
        })
        .collect()
}

/// Analytic summary of one parameter point.
pub fn analytic_record(run_id: impl Into<String>, params: &ModelParams) -> Result<RunRecord> {
    let s = step_scalars(params);
    let (e0, e1) = normal_modes(params);
    let n = params.chain_len();
    let mut r = RunRecord::new(run_id)
        .with("E", params.energy())
        .with("eps", params.eps())
        .with("eta", params.eta())
        .with("tau", params.tau())
        .with("N", n)
        .with("beta0", params.beta0())
        .with("beta", params.beta())
        .with("g", s.g)
        .with("w", s.w)
        .with("z", s.z)
        .with("z_abs2", s.z.norm_sqr())
        .with("eps0", e0)
        .with("eps1", e1)
        .with("contracting", params.is_contracting())
        .with("exp_deviation", matrix_exponential_check(params, 1)?.deviation)
        .with("beta_star", effective_beta_S(params, n))
        .with("beta_star_star", effective_beta_Sm(params, n)?)
        .with("total_entropy", total_entropy(params, n)?);
    if let Ok(v) = relative_entropy(params, n) {
        r.set("relative_entropy", v);
    }
    if let Ok(v) = entropy_production_limit(params) {
        r.set("entropy_production", v);
    }
    Ok(r)
}

/// Evaluates every grid point in parallel; records come back in grid order.
/// Points rejected by parameter validation yield an error record.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<RunRecord>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid has an empty axis".into()));
    }
    let records = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (e, eps, eta, tau, b0, b, n) = grid.point(i);
            let id = format!("sweep-{i}");
            let fail = |err: Error| {
                RunRecord::new(id.clone())
                    .with("E", e)
                    .with("eps", eps)
                    .with("eta", eta)
                    .with("tau", tau)
                    .with("N", n)
                    .with("beta0", b0)
                    .with("beta", b)
                    .with("ok", false)
                    .with("error", err.to_string())
            };
            let params = match ModelParams::new(e, eps, eta, tau, n, b0, b) {
                Ok(p) => p,
                Err(err) => return fail(err),
            };
            let mut rec = match analytic_record(id.clone(), &params) {
                Ok(r) => r.with("ok", true),
                Err(err) => return fail(err),
            };
            if let Some(d) = grid.oracle_cutoff.filter(|_| n <= 2) {
                match oracle_columns(&params, d) {
                    Ok(cols) => {
                        for (name, v) in cols {
                            rec.set(name, v);
                        }
                    }
                    Err(err) => {
                        rec.set("oracle_error", err.to_string());
                    }
                }
            }
            rec
        })
        .collect();
    Ok(records)
}

/// Oracle deltas after N steps: characteristic function, entropy and, for
/// finite temperatures, relative entropy.
pub fn oracle_columns(params: &ModelParams, cutoff: usize) -> Result<Vec<(&'static str, f64)>> {
    let n = params.chain_len();
    let run = OracleRun::new(params, cutoff, n)?;
    let mut cols = vec![
        ("oracle_cutoff", cutoff as f64),
        ("delta_char_fn", run.char_fn_deviation(n, &probe_arguments(n + 1))?),
        ("delta_entropy", run.entropy_deviation(n)?),
    ];
    if let Ok(d) = run.relative_entropy_deviation(n) {
        cols.push(("delta_relative_entropy", d));
    }
    Ok(cols)
}
