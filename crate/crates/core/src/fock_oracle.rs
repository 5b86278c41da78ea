//! Brute-force truncated Fock-space simulation.
//!
//! Each mode is cut off at `D` levels and the multimode space is the mixed
//! radix product with mode 0 as the most significant digit. Every operator of
//! interest (the step Hamiltonians, thermal states and everything evolved
//! from them) commutes with the total number operator, so density matrices
//! are stored as one dense block per total-excitation sector. Only the
//! Hamiltonian parameters are taken from [`ModelParams`]; no closed form from
//! the analytic modules is used here.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{InverseTemperature, ModelParams};

/// Largest number-sector block the oracle will diagonalise.
pub const DIMENSION_GUARD: usize = 20_000;
/// Hard cap on the full product dimension `D^M`.
pub const TOTAL_DIMENSION_CAP: usize = 2_000_000;
/// Cap on the summed squared sector sizes, i.e. complex entries in one density.
pub const BLOCK_ENTRY_CAP: usize = 1 << 24;
/// Eigenvalues below this are treated as zero before taking logarithms.
pub const EIGEN_FLOOR: f64 = 1e-300;
/// Negative eigenvalues down to `−NEGATIVE_CLAMP` are rounding and clamped to 0.
pub const NEGATIVE_CLAMP: f64 = 1e-12;
/// Weight on the kernel of a reference state tolerated by the relative entropy.
pub const SUPPORT_TOLERANCE: f64 = 1e-10;
/// Thermal tail weight targeted by [`recommend_cutoff`].
pub const TAIL_TARGET: f64 = 1e-10;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Truncated `M`-mode Fock space with its number-sector decomposition.
#[derive(Debug, PartialEq, Eq)]
pub struct FockSpace {
    modes: usize,
    cutoff: usize,
    strides: Vec<usize>,
    sectors: Vec<Vec<usize>>,
    locate: Vec<(usize, usize)>,
}

impl FockSpace {
    pub fn new(modes: usize, cutoff: usize) -> Result<Arc<Self>> {
        if cutoff < 2 {
            return Err(Error::InvalidParameter { name: "cutoff", reason: format!("need D >= 2, got {cutoff}") });
        }
        if modes == 0 {
            return Err(Error::InvalidParameter { name: "modes", reason: "need at least one mode".into() });
        }
        let dim = (0..modes).fold(1usize, |acc, _| acc.saturating_mul(cutoff));
        if dim > TOTAL_DIMENSION_CAP {
            return Err(Error::DimensionGuard { dim, limit: TOTAL_DIMENSION_CAP });
        }
        let mut strides = vec![1; modes];
        for k in (0..modes - 1).rev() {
            strides[k] = strides[k + 1] * cutoff;
        }
        let mut sectors = vec![Vec::new(); modes * (cutoff - 1) + 1];
        let mut locate = Vec::with_capacity(dim);
        for idx in 0..dim {
            let total: usize = (0..modes).map(|k| (idx / strides[k]) % cutoff).sum();
            locate.push((total, sectors[total].len()));
            sectors[total].push(idx);
        }
        let largest = sectors.iter().map(Vec::len).max().unwrap_or(0);
        if largest > DIMENSION_GUARD {
            return Err(Error::DimensionGuard { dim: largest, limit: DIMENSION_GUARD });
        }
        let entries: usize = sectors.iter().map(|s| s.len() * s.len()).sum();
        if entries > BLOCK_ENTRY_CAP {
            return Err(Error::DimensionGuard { dim: entries, limit: BLOCK_ENTRY_CAP });
        }
        Ok(Arc::new(FockSpace { modes, cutoff, strides, sectors, locate }))
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `D^M`.
    pub fn dim(&self) -> usize {
        self.locate.len()
    }

    #[inline]
    pub fn digit(&self, idx: usize, mode: usize) -> usize {
        (idx / self.strides[mode]) % self.cutoff
    }

    pub fn occupations(&self, idx: usize) -> Vec<usize> {
        (0..self.modes).map(|k| self.digit(idx, k)).collect()
    }

    pub fn index(&self, occupations: &[usize]) -> usize {
        occupations.iter().zip(&self.strides).map(|(n, s)| n * s).sum()
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    /// Basis indices with `total` excitations, in increasing order.
    pub fn sector(&self, total: usize) -> &[usize] {
        &self.sectors[total]
    }

    pub fn largest_sector(&self) -> usize {
        self.sectors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `(sector, position within sector)` of a basis index.
    pub fn locate(&self, idx: usize) -> (usize, usize) {
        self.locate[idx]
    }
}

fn same_space(a: &FockSpace, b: &FockSpace) -> Result<()> {
    if a.modes != b.modes {
        return Err(Error::DimensionMismatch { expected: a.modes, found: b.modes });
    }
    if a.cutoff != b.cutoff {
        return Err(Error::DimensionMismatch { expected: a.cutoff, found: b.cutoff });
    }
    Ok(())
}

/// Number-conserving density matrix at cutoff `D`.
#[derive(Clone, Debug)]
pub struct FockDensityMatrix {
    space: Arc<FockSpace>,
    blocks: Vec<DMatrix<C64>>,
}

impl FockDensityMatrix {
    pub fn from_blocks(space: Arc<FockSpace>, blocks: Vec<DMatrix<C64>>) -> Result<Self> {
        if blocks.len() != space.sector_count() {
            return Err(Error::DimensionMismatch { expected: space.sector_count(), found: blocks.len() });
        }
        for (k, b) in blocks.iter().enumerate() {
            let n = space.sector(k).len();
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
            }
        }
        Ok(FockDensityMatrix { space, blocks })
    }

    /// Diagonal density matrix from basis-state weights (normalised here).
    pub fn from_diagonal(space: Arc<FockSpace>, weights: &[f64]) -> Result<Self> {
        if weights.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidDensity("weights must be nonnegative with positive sum".into()));
        }
        let blocks = (0..space.sector_count())
            .map(|k| {
                let idx = space.sector(k);
                DMatrix::from_diagonal(&DVector::from_iterator(
                    idx.len(),
                    idx.iter().map(|&i| C64::new(weights[i] / total, 0.0)),
                ))
            })
            .collect();
        Ok(FockDensityMatrix { space, blocks })
    }

    /// Splits a dense `D^M × D^M` matrix into sector blocks, rejecting
    /// matrices with weight between different sectors.
    pub fn from_dense(space: Arc<FockSpace>, matrix: &DMatrix<C64>) -> Result<Self> {
        let dim = space.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        for i in 0..dim {
            for j in 0..dim {
                if space.locate(i).0 != space.locate(j).0 && matrix[(i, j)].norm() > 1e-12 {
                    return Err(Error::InvalidDensity("does not commute with the total number operator".into()));
                }
            }
        }
        let blocks = (0..space.sector_count())
            .map(|k| {
                let idx = space.sector(k);
                DMatrix::from_fn(idx.len(), idx.len(), |a, b| matrix[(idx[a], idx[b])])
            })
            .collect();
        let rho = FockDensityMatrix { space, blocks };
        rho.validate()?;
        Ok(rho)
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }

    pub fn modes(&self) -> usize {
        self.space.modes
    }

    pub fn cutoff(&self) -> usize {
        self.space.cutoff
    }

    pub fn blocks(&self) -> &[DMatrix<C64>] {
        &self.blocks
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.space.dim();
        let mut out = DMatrix::from_element(dim, dim, ZERO);
        for (k, b) in self.blocks.iter().enumerate() {
            let idx = self.space.sector(k);
            for (a, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    out[(i, j)] = b[(a, c)];
                }
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// Matrix element `⟨i|ρ|j⟩` in the full product basis.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let (ki, a) = self.space.locate(i);
        let (kj, b) = self.space.locate(j);
        if ki == kj {
            self.blocks[ki][(a, b)]
        } else {
            ZERO
        }
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.blocks.iter().map(|b| (b - b.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)).fold(0.0, f64::max)
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.blocks.par_iter().flat_map_iter(block_eigenvalues).collect();
        all.sort_by(f64::total_cmp);
        all
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > 1e-12 {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let low = self.eigenvalues().first().copied().unwrap_or(0.0);
        if low < -NEGATIVE_CLAMP {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {low:e}")));
        }
        Ok(())
    }

    /// `Tr[ρ n_k]`.
    pub fn occupation(&self, mode: usize) -> f64 {
        let mut acc = 0.0;
        for (k, b) in self.blocks.iter().enumerate() {
            for (a, &i) in self.space.sector(k).iter().enumerate() {
                acc += self.space.digit(i, mode) as f64 * b[(a, a)].re;
            }
        }
        acc
    }
}

fn is_diagonal(m: &DMatrix<C64>) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == ZERO))
}

fn block_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    if is_diagonal(m) {
        m.diagonal().iter().map(|c| c.re).collect()
    } else {
        m.clone().symmetric_eigenvalues().iter().copied().collect()
    }
}

fn block_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    if is_diagonal(m) {
        let n = m.nrows();
        (m.diagonal().iter().map(|c| c.re).collect(), DMatrix::identity(n, n))
    } else {
        let e = SymmetricEigen::new(m.clone());
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    }
}

fn clamp_eigenvalue(l: f64) -> f64 {
    if (-NEGATIVE_CLAMP..0.0).contains(&l) {
        0.0
    } else {
        l
    }
}

/// Cutoff diagnostics for a thermal mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffReport {
    pub cutoff: usize,
    /// Weight of the top level `D − 1` after renormalisation.
    pub tail_weight: f64,
    /// Smallest cutoff with tail weight below [`TAIL_TARGET`] plus headroom for
    /// the largest displacement of interest.
    pub recommendation: usize,
}

fn thermal_tail(beta: InverseTemperature, cutoff: usize) -> f64 {
    if beta.is_vacuum() {
        return 0.0;
    }
    let b = beta.value();
    // e^{−β(D−1)}(1 − e^{−β})/(1 − e^{−βD})
    (-b * (cutoff - 1) as f64).exp() * (-b).exp_m1() / (-b * cutoff as f64).exp_m1()
}

/// Smallest `D` with thermal tail below [`TAIL_TARGET`], plus `⌈4‖ζ‖²⌉`.
pub fn recommend_cutoff(beta: InverseTemperature, displacement: f64) -> usize {
    let mut d = 2;
    while thermal_tail(beta, d) >= TAIL_TARGET && d < 100_000 {
        d += 1;
    }
    d + (4.0 * displacement * displacement).ceil() as usize
}

/// Truncated annihilation operator, `⟨n|a|n+1⟩ = √(n+1)`.
pub fn build_ladder(cutoff: usize) -> Result<DMatrix<f64>> {
    if cutoff < 2 {
        return Err(Error::InvalidParameter { name: "cutoff", reason: format!("need D >= 2, got {cutoff}") });
    }
    let mut a = DMatrix::zeros(cutoff, cutoff);
    for n in 0..cutoff - 1 {
        a[(n, n + 1)] = ((n + 1) as f64).sqrt();
    }
    Ok(a)
}

/// Step Hamiltonian `E n₀ + ε Σ_{k≥1} n_k + η(b₀*b_n + b_n*b₀)` in sector blocks.
#[derive(Clone, Debug)]
pub struct SectorHamiltonian {
    pub space: Arc<FockSpace>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl SectorHamiltonian {
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.space.dim();
        if dim > DIMENSION_GUARD {
            return Err(Error::DimensionGuard { dim, limit: DIMENSION_GUARD });
        }
        let mut out = DMatrix::zeros(dim, dim);
        for (k, b) in self.blocks.iter().enumerate() {
            let idx = self.space.sector(k);
            for (a, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    out[(i, j)] = b[(a, c)];
                }
            }
        }
        Ok(out)
    }

    /// Sorted eigenvalues of one sector block.
    pub fn sector_spectrum(&self, total: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks[total].clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn lowest_eigenvalue(&self) -> f64 {
        self.blocks
            .par_iter()
            .map(|b| b.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min))
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// Largest absolute matrix entry, a cheap scale for rounding bounds.
    pub fn scale(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }
}

fn check_slot(slot: usize, modes: usize) -> Result<()> {
    if slot == 0 || slot >= modes {
        Err(Error::SlotOutOfRange { slot, chain_len: modes.saturating_sub(1) })
    } else {
        Ok(())
    }
}

pub fn build_hamiltonian(params: &ModelParams, slot: usize, modes: usize, cutoff: usize) -> Result<SectorHamiltonian> {
    check_slot(slot, modes)?;
    let space = FockSpace::new(modes, cutoff)?;
    let a = build_ladder(cutoff)?;
    let (e, eps, eta) = (params.energy(), params.eps(), params.eta());
    let blocks = (0..space.sector_count())
        .map(|k| {
            let idx = space.sector(k);
            let mut h = DMatrix::zeros(idx.len(), idx.len());
            for (col, &i) in idx.iter().enumerate() {
                let occ = space.occupations(i);
                let free = e * occ[0] as f64 + eps * occ[1..].iter().sum::<usize>() as f64;
                h[(col, col)] = free;
                // b₀* b_n |occ⟩: raise mode 0, lower mode `slot`
                if occ[slot] > 0 && occ[0] + 1 < cutoff {
                    let amp = a[(occ[0], occ[0] + 1)] * a[(occ[slot] - 1, occ[slot])];
                    let mut target = occ.clone();
                    target[0] += 1;
                    target[slot] -= 1;
                    let row = space.locate(space.index(&target)).1;
                    h[(row, col)] += eta * amp;
                    h[(col, row)] += eta * amp;
                }
            }
            h
        })
        .collect();
    Ok(SectorHamiltonian { space, blocks })
}

/// One-mode thermal state `e^{−βn}/Z` renormalised over the cutoff.
pub fn gibbs_density(beta: InverseTemperature, cutoff: usize) -> Result<(FockDensityMatrix, CutoffReport)> {
    let space = FockSpace::new(1, cutoff)?;
    let weights: Vec<f64> = if beta.is_vacuum() {
        (0..cutoff).map(|n| if n == 0 { 1.0 } else { 0.0 }).collect()
    } else {
        (0..cutoff).map(|n| (-beta.value() * n as f64).exp()).collect()
    };
    let rho = FockDensityMatrix::from_diagonal(space, &weights)?;
    let report = CutoffReport {
        cutoff,
        tail_weight: rho.blocks[cutoff - 1][(0, 0)].re,
        recommendation: recommend_cutoff(beta, 0.0),
    };
    Ok((rho, report))
}

/// Diagonal one-mode state with the given level weights (normalised here).
pub fn diagonal_mode_state(weights: &[f64]) -> Result<FockDensityMatrix> {
    FockDensityMatrix::from_diagonal(FockSpace::new(1, weights.len())?, weights)
}

/// Tensor product of one-mode states sharing a cutoff.
pub fn product_state(factors: &[FockDensityMatrix]) -> Result<FockDensityMatrix> {
    let first = factors.first().ok_or_else(|| Error::InvalidSubset("no factors".into()))?;
    let cutoff = first.cutoff();
    for f in factors {
        if f.modes() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: f.modes() });
        }
        if f.cutoff() != cutoff {
            return Err(Error::DimensionMismatch { expected: cutoff, found: f.cutoff() });
        }
    }
    let space = FockSpace::new(factors.len(), cutoff)?;
    let dense: Vec<DMatrix<C64>> = factors.iter().map(|f| f.to_dense()).collect();
    let blocks = (0..space.sector_count())
        .into_par_iter()
        .map(|k| {
            let idx = space.sector(k);
            let occ: Vec<Vec<usize>> = idx.iter().map(|&i| space.occupations(i)).collect();
            DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
                dense.iter().enumerate().map(|(m, f)| f[(occ[a][m], occ[b][m])]).product()
            })
        })
        .collect();
    Ok(FockDensityMatrix { space, blocks })
}

/// Sparse rows (within each sector) of the one-step propagator for a slot.
struct StepPropagator {
    rows: Vec<Vec<Vec<(usize, C64)>>>,
}

impl StepPropagator {
    /// `e^{−iτH_n}` factorises into the coupled pair (0, n), which conserves
    /// `n₀ + n_n`, and free phases on the spectator modes. Each pair block is
    /// exponentiated through its eigendecomposition.
    fn new(space: &FockSpace, params: &ModelParams, slot: usize) -> Self {
        let d = space.cutoff;
        let tau = params.tau();
        let (e, eps, eta) = (params.energy(), params.eps(), params.eta());
        let pair: Vec<DMatrix<C64>> = (0..=2 * (d - 1))
            .map(|l| {
                let lo = l.saturating_sub(d - 1);
                let hi = l.min(d - 1);
                let n = hi - lo + 1;
                let mut h = DMatrix::<f64>::zeros(n, n);
                for p in 0..n {
                    let n0 = lo + p;
                    h[(p, p)] = e * n0 as f64 + eps * (l - n0) as f64;
                    if p + 1 < n {
                        let v = eta * ((n0 + 1) as f64).sqrt() * ((l - n0) as f64).sqrt();
                        h[(p + 1, p)] = v;
                        h[(p, p + 1)] = v;
                    }
                }
                let eig = SymmetricEigen::new(h);
                let vecs = eig.eigenvectors.map(|v| C64::new(v, 0.0));
                let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -tau * l)));
                &vecs * phases * vecs.transpose()
            })
            .collect();
        let (s0, sn) = (space.strides[0], space.strides[slot]);
        let rows = (0..space.sector_count())
            .map(|k| {
                space
                    .sector(k)
                    .iter()
                    .map(|&g| {
                        let d0 = space.digit(g, 0);
                        let dn = space.digit(g, slot);
                        let l = d0 + dn;
                        let lo = l.saturating_sub(d - 1);
                        let hi = l.min(d - 1);
                        let spectator = C64::from_polar(1.0, -tau * eps * (k - l) as f64);
                        let u = &pair[l];
                        (lo..=hi)
                            .map(|n0| {
                                let partner = g + n0 * s0 + (l - n0) * sn - d0 * s0 - dn * sn;
                                (space.locate(partner).1, spectator * u[(d0 - lo, n0 - lo)])
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        StepPropagator { rows }
    }

    fn apply_left(rows: &[Vec<(usize, C64)>], m: &DMatrix<C64>) -> DMatrix<C64> {
        let n = m.nrows();
        let mut out = DMatrix::from_element(n, m.ncols(), ZERO);
        for j in 0..m.ncols() {
            let col = m.column(j);
            for (i, row) in rows.iter().enumerate() {
                out[(i, j)] = row.iter().map(|&(p, u)| u * col[p]).sum();
            }
        }
        out
    }

    fn conjugate(&self, rho: &FockDensityMatrix) -> FockDensityMatrix {
        let blocks = rho
            .blocks
            .par_iter()
            .zip(self.rows.par_iter())
            .map(|(b, rows)| {
                let left = Self::apply_left(rows, b);
                Self::apply_left(rows, &left.adjoint())
            })
            .collect();
        FockDensityMatrix { space: rho.space.clone(), blocks }
    }
}

/// Applies `e^{−iτH_n} ρ e^{iτH_n}` for each slot of the schedule in order.
pub fn evolve_density(rho: &FockDensityMatrix, params: &ModelParams, schedule: &[usize]) -> Result<FockDensityMatrix> {
    for &slot in schedule {
        check_slot(slot, rho.modes())?;
    }
    let mut cache: BTreeMap<usize, StepPropagator> = BTreeMap::new();
    let mut out = rho.clone();
    for &slot in schedule {
        let step = cache.entry(slot).or_insert_with(|| StepPropagator::new(&rho.space, params, slot));
        out = step.conjugate(&out);
    }
    Ok(out)
}

/// Truncated one-mode Weyl operator `exp(i(ᾱa + αa*)/√2)`.
pub fn weyl_operator(alpha: C64, cutoff: usize) -> Result<DMatrix<C64>> {
    let a = build_ladder(cutoff)?.map(|v| C64::new(v, 0.0));
    let field = (&a * alpha.conj() + a.transpose() * alpha) * C64::new(FRAC_1_SQRT_2, 0.0);
    let eig = SymmetricEigen::new(field);
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, l)));
    Ok(&eig.eigenvectors * phases * eig.eigenvectors.adjoint())
}

/// Displacement allowed at cutoff `D`.
pub fn headroom(cutoff: usize) -> f64 {
    (cutoff as f64).sqrt() / 4.0
}

/// `Tr[ρ W(ζ)]` with `W(ζ) = ⊗_k ŵ(ζ_k)`.
pub fn weyl_expectation(rho: &FockDensityMatrix, zeta: &[C64]) -> Result<C64> {
    let space = &rho.space;
    if zeta.len() != space.modes {
        return Err(Error::DimensionMismatch { expected: space.modes, found: zeta.len() });
    }
    let norm = zeta.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let limit = headroom(space.cutoff);
    if norm > limit {
        return Err(Error::Headroom { norm, limit });
    }
    let ops = zeta.iter().map(|&z| weyl_operator(z, space.cutoff)).collect::<Result<Vec<_>>>()?;
    let total = rho
        .blocks
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let occ: Vec<Vec<usize>> = space.sector(k).iter().map(|&i| space.occupations(i)).collect();
            let mut acc = ZERO;
            for (j, oj) in occ.iter().enumerate() {
                for (i, oi) in occ.iter().enumerate() {
                    let r = b[(i, j)];
                    if r == ZERO {
                        continue;
                    }
                    let w: C64 = ops.iter().enumerate().map(|(m, op)| op[(oj[m], oi[m])]).product();
                    acc += r * w;
                }
            }
            acc
        })
        .reduce(|| ZERO, |a, b| a + b);
    Ok(total)
}

/// Reduced density matrix on the listed modes (strictly increasing).
pub fn partial_trace(rho: &FockDensityMatrix, keep: &[usize]) -> Result<FockDensityMatrix> {
    let space = &rho.space;
    if keep.is_empty() {
        return Err(Error::InvalidSubset("keep set is empty".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || *keep.last().unwrap() >= space.modes {
        return Err(Error::InvalidSubset(format!("{keep:?} is not an increasing subset of 0..{}", space.modes)));
    }
    let traced: Vec<usize> = (0..space.modes).filter(|k| !keep.contains(k)).collect();
    let reduced = FockSpace::new(keep.len(), space.cutoff)?;
    let mut blocks: Vec<DMatrix<C64>> =
        (0..reduced.sector_count()).map(|k| DMatrix::from_element(reduced.sector(k).len(), reduced.sector(k).len(), ZERO)).collect();
    for (k, b) in rho.blocks.iter().enumerate() {
        let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (a, &i) in space.sector(k).iter().enumerate() {
            let key = traced.iter().fold(0, |acc, &m| acc * space.cutoff + space.digit(i, m));
            let kept: Vec<usize> = keep.iter().map(|&m| space.digit(i, m)).collect();
            groups.entry(key).or_default().push((a, reduced.index(&kept)));
        }
        for members in groups.values() {
            let sector = reduced.locate(members[0].1).0;
            for &(a, ra) in members {
                let pa = reduced.locate(ra).1;
                for &(c, rc) in members {
                    blocks[sector][(pa, reduced.locate(rc).1)] += b[(a, c)];
                }
            }
        }
    }
    Ok(FockDensityMatrix { space: reduced, blocks })
}

fn entropy_term(l: f64) -> f64 {
    let l = clamp_eigenvalue(l);
    if l <= EIGEN_FLOOR {
        0.0
    } else {
        -l * l.ln()
    }
}

/// `−Tr ρ ln ρ`.
pub fn von_neumann_entropy(rho: &FockDensityMatrix) -> f64 {
    rho.blocks.par_iter().map(|b| block_eigenvalues(b).into_iter().map(entropy_term).sum::<f64>()).sum()
}

/// `Tr[ρ(ln ρ − ln ρ₀)]`.
pub fn relative_entropy_oracle(rho: &FockDensityMatrix, rho0: &FockDensityMatrix) -> Result<f64> {
    same_space(&rho.space, &rho0.space)?;
    let parts = rho
        .blocks
        .par_iter()
        .zip(rho0.blocks.par_iter())
        .map(|(b, b0)| {
            let neg_entropy: f64 = -block_eigenvalues(b).into_iter().map(entropy_term).sum::<f64>();
            let (vals, weights) = if is_diagonal(b0) {
                (b0.diagonal().iter().map(|c| c.re).collect::<Vec<_>>(), b.diagonal().iter().map(|c| c.re).collect())
            } else {
                let (vals, vecs) = block_eigen(b0);
                let rotated = vecs.adjoint() * b * &vecs;
                (vals, rotated.diagonal().iter().map(|c| c.re).collect::<Vec<_>>())
            };
            let mut cross = 0.0;
            let mut orphan = 0.0;
            for (&l, &weight) in vals.iter().zip(&weights) {
                let l = clamp_eigenvalue(l);
                if l <= EIGEN_FLOOR {
                    orphan += weight.max(0.0);
                    cross += weight * EIGEN_FLOOR.ln();
                } else {
                    cross += weight * l.ln();
                }
            }
            (neg_entropy - cross, orphan)
        })
        .collect::<Vec<_>>();
    let orphan: f64 = parts.iter().map(|p| p.1).sum();
    if orphan > SUPPORT_TOLERANCE {
        return Err(Error::SupportViolation { weight: orphan });
    }
    Ok(parts.iter().map(|p| p.0).sum())
}

/// `Tr exp[−β Σ n_k − δ a*(ξ)a(ξ)]` on the truncated space, by eigendecomposition.
pub fn quadratic_partition_trace(beta: f64, delta: f64, xi: &[C64], cutoff: usize) -> Result<f64> {
    let space = FockSpace::new(xi.len(), cutoff)?;
    let ladder = build_ladder(cutoff)?;
    let total = (0..space.sector_count())
        .into_par_iter()
        .map(|k| {
            let idx = space.sector(k);
            let mut h = DMatrix::from_element(idx.len(), idx.len(), ZERO);
            for (col, &i) in idx.iter().enumerate() {
                let occ = space.occupations(i);
                h[(col, col)] += C64::new(beta * k as f64, 0.0);
                // δ ξ_j conj(ξ_l) b_j* b_l
                for l in 0..xi.len() {
                    if occ[l] == 0 {
                        continue;
                    }
                    for j in 0..xi.len() {
                        let mut t = occ.clone();
                        t[l] -= 1;
                        if t[j] + 1 >= cutoff {
                            continue;
                        }
                        let amp = ladder[(t[l], t[l] + 1)] * ladder[(t[j], t[j] + 1)];
                        t[j] += 1;
                        let row = space.locate(space.index(&t)).1;
                        h[(row, col)] += xi[j] * xi[l].conj() * (delta * amp);
                    }
                }
            }
            h.symmetric_eigenvalues().iter().map(|l| (-l).exp()).sum::<f64>()
        })
        .sum();
    Ok(total)
}

/// Fast evaluation of `α ↦ Tr[ρ ŵ(α)]` for one fixed one-mode state.
///
/// With `α = r e^{iφ}`, `ŵ(α) = R exp(irX) R†` where `X = (a + a*)/√2` and
/// `R = e^{iφN}`. Diagonalising `X` once reduces each evaluation to a sum over
/// its eigenvalues and over the diagonals of ρ.
#[derive(Clone, Debug)]
pub struct OneModeCharacteristic {
    nodes: Vec<f64>,
    /// `coeffs[j][d + D − 1] = Σ_{n−m=d} v_{mj} ρ_{mn} v_{nj}`.
    coeffs: Vec<Vec<C64>>,
    offsets: Vec<i64>,
}

impl OneModeCharacteristic {
    pub fn new(rho: &DMatrix<C64>) -> Result<Self> {
        let d = rho.nrows();
        if rho.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: rho.ncols() });
        }
        let a = build_ladder(d)?;
        let x = (&a + a.transpose()) * FRAC_1_SQRT_2;
        let eig = SymmetricEigen::new(x);
        let v = &eig.eigenvectors;
        let offsets: Vec<i64> = (-(d as i64 - 1)..=(d as i64 - 1))
            .filter(|&off| (0..d).any(|m| {
                let n = m as i64 + off;
                n >= 0 && (n as usize) < d && rho[(m, n as usize)] != ZERO
            }))
            .collect();
        let coeffs = (0..d)
            .map(|j| {
                offsets
                    .iter()
                    .map(|&off| {
                        (0..d)
                            .filter_map(|m| {
                                let n = m as i64 + off;
                                (n >= 0 && (n as usize) < d).then(|| rho[(m, n as usize)] * (v[(m, j)] * v[(n as usize, j)]))
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(OneModeCharacteristic { nodes: eig.eigenvalues.iter().copied().collect(), coeffs, offsets })
    }

    pub fn from_density(rho: &FockDensityMatrix) -> Result<Self> {
        if rho.modes() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: rho.modes() });
        }
        Self::new(&rho.to_dense())
    }

    pub fn eval(&self, alpha: C64) -> C64 {
        let (r, phi) = alpha.to_polar();
        let rot: Vec<C64> = self.offsets.iter().map(|&off| C64::from_polar(1.0, phi * off as f64)).collect();
        self.nodes
            .iter()
            .zip(&self.coeffs)
            .map(|(&x, c)| {
                let p: C64 = c.iter().zip(&rot).map(|(a, b)| a * b).sum();
                C64::from_polar(1.0, r * x) * p
            })
            .sum()
    }
}
