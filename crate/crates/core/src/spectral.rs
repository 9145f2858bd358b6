//! Spectra of estimates, the exact spectra predicted by the linearization at
//! a fixed point, and eigenfunction assembly across several fixed points.

use std::sync::Arc;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::OperatorEstimate;
use crate::multiindex::graded_enumerate;
use crate::numerics::{self, EigenSystem, RMat};
use crate::rkhs::{cross_gram, ObservableBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMode {
    /// `{lambda^a : |a| <= m}` for a map with Jacobian eigenvalues `lambda`.
    Discrete,
    /// `{a' mu : |a| <= m}` for a vector field with Jacobian eigenvalues `mu`.
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumOrigin {
    Estimated,
    Theoretical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<c64>,
    pub origin: SpectrumOrigin,
}

/// Exact eigenvalues of the operator restricted to order-`m` observables at
/// a fixed point with Jacobian `j`, sorted.
pub fn theoretical_spectrum(j: MatRef<'_, f64>, m: usize, mode: SpectrumMode) -> Result<Vec<c64>> {
    let d = j.nrows();
    if j.ncols() != d {
        return Err(Error::DimensionMismatch(format!("Jacobian must be square, got {}x{}", d, j.ncols())));
    }
    let mut mu = numerics::eigenvalues_real(j)?;
    // conjugate pairs from the real solver are exact conjugates up to rounding;
    // make them bitwise so the multiset is closed under conjugation
    for i in 0..mu.len() {
        if mu[i].im > 0.0 {
            if let Some(k) = (0..mu.len()).find(|&k| k != i && (mu[k] - mu[i].conj()).norm() <= 1e-12 * mu[i].norm()) {
                mu[k] = mu[i].conj();
            }
        }
    }
    let order = graded_enumerate(d, m)?;
    let mut out: Vec<c64> = order
        .iter()
        .map(|a| match mode {
            SpectrumMode::Discrete => a
                .exponents()
                .iter()
                .zip(&mu)
                .fold(c64::new(1.0, 0.0), |acc, (&e, l)| acc * l.powi(e as i32)),
            SpectrumMode::Generator => a.exponents().iter().zip(&mu).map(|(&e, l)| l * e as f64).sum(),
        })
        .collect();
    numerics::sort_spectrum(&mut out);
    Ok(out)
}

/// Eigenvalues of the estimated matrix, sorted.
pub fn estimate_spectrum(e: &OperatorEstimate) -> Result<Spectrum> {
    Ok(Spectrum { values: numerics::eigenvalues(e.matrix.as_ref())?, origin: SpectrumOrigin::Estimated })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Relative cutoff for the pseudo-inverse of the stacked Gram matrix;
    /// 0 selects the numerics default.
    pub h_rel_tol: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { h_rel_tol: 0.0 }
    }
}

/// Shared data for evaluating eigenfunctions of one assembly.
#[derive(Debug)]
pub struct Assembly {
    pub bases: Vec<ObservableBasis>,
    /// Start of each fixed point's block in the stacked coordinates.
    pub offsets: Vec<usize>,
    /// Stacked `H` matrix.
    pub h: RMat,
    /// Condition number of the stacked cross-Gram matrix.
    pub stacked_cond: f64,
    /// Numerical rank kept by the pseudo-inverse.
    pub stacked_rank: usize,
    pub systems: Vec<EigenSystem>,
    /// `max |U* W - I|` per fixed point.
    pub biorthogonality: Vec<f64>,
}

/// One eigenpair at one fixed point with evaluable right and left
/// eigenfunctions.
#[derive(Debug, Clone)]
pub struct EigenfunctionField {
    pub eigenvalue: c64,
    pub point_index: usize,
    /// Position of the eigenvalue in the sorted spectrum at its fixed point.
    pub index: usize,
    /// Right eigenvector `w` of the estimate.
    pub right: Vec<c64>,
    /// Left eigenvector `u` (eigenvector of the adjoint for the conjugate
    /// eigenvalue).
    pub left: Vec<c64>,
    pub pair_cond: f64,
    /// `G^{-1} w`.
    right_coeffs: Vec<c64>,
    /// `H[:, block i] u`, stacked over all fixed points.
    left_coeffs: Vec<c64>,
    assembly: Arc<Assembly>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSide {
    /// Perron-Frobenius eigenvector `w(x) = v(x)* G^{-1} w`.
    Right,
    /// Extended Koopman eigenvector `u(x) = sum_j v_j(x)* H^{ji} u`.
    Left,
}

impl EigenfunctionField {
    pub fn assembly(&self) -> &Assembly {
        &self.assembly
    }

    /// Eigenvalue attached to the left (Koopman) eigenfunction.
    pub fn koopman_eigenvalue(&self) -> c64 {
        self.eigenvalue.conj()
    }

    pub fn flagged(&self) -> bool {
        !(self.pair_cond < numerics::PAIR_COND_FLAG)
    }

    pub fn eval_right(&self, x: &[f64]) -> Result<c64> {
        let v = self.assembly.bases[self.point_index].feature_vector(x)?;
        Ok(v.iter().zip(&self.right_coeffs).map(|(a, c)| c * *a).sum())
    }

    pub fn eval_left(&self, x: &[f64]) -> Result<c64> {
        let a = &self.assembly;
        let mut acc = c64::new(0.0, 0.0);
        for (b, &off) in a.bases.iter().zip(&a.offsets) {
            let v = b.feature_vector(x)?;
            acc += v.iter().zip(&self.left_coeffs[off..off + b.len()]).map(|(a, c)| c * *a).sum::<c64>();
        }
        Ok(acc)
    }

    pub fn eval(&self, side: FieldSide, x: &[f64]) -> Result<c64> {
        match side {
            FieldSide::Right => self.eval_right(x),
            FieldSide::Left => self.eval_left(x),
        }
    }
}

/// Eigenfunctions for every eigenvalue at every fixed point. Estimates must
/// share one kernel; one estimate per fixed point.
pub fn assemble_eigenfunctions(estimates: &[OperatorEstimate], opts: AssemblyOptions) -> Result<Vec<EigenfunctionField>> {
    let first = estimates.first().ok_or_else(|| Error::invalid("need at least one estimate"))?;
    let kernel = &first.config.kernel;
    if estimates.iter().any(|e| &e.config.kernel != kernel) {
        return Err(Error::invalid("all estimates must share one kernel"));
    }
    let bases: Vec<ObservableBasis> = estimates.iter().map(|e| e.config.basis(e.config.m)).collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(bases.len());
    let mut total = 0;
    for b in &bases {
        offsets.push(total);
        total += b.len();
    }
    let mut stacked = RMat::zeros(total, total);
    for (i, bi) in bases.iter().enumerate() {
        for (j, bj) in bases.iter().enumerate() {
            let g = if i == j { diag(&bi.gram()) } else { cross_gram(bi, bj)? };
            stacked.get_mut(offsets[i]..offsets[i] + bi.len(), offsets[j]..offsets[j] + bj.len()).copy_from(&g);
        }
    }
    let stacked_cond = numerics::cond(stacked.as_ref())?;
    let p = numerics::pinv(stacked.as_ref(), opts.h_rel_tol)?;
    let mut blocks = RMat::zeros(total, total);
    for (i, b) in bases.iter().enumerate() {
        for (k, g) in b.gram().iter().enumerate() {
            blocks[(offsets[i] + k, offsets[i] + k)] = *g;
        }
    }
    let h = &p.matrix * &blocks;

    let systems: Vec<EigenSystem> = estimates.iter().map(|e| numerics::eig(e.matrix.as_ref())).collect::<Result<_>>()?;
    let biorthogonality = systems
        .iter()
        .map(|s| {
            let g = s.left.adjoint() * &s.right;
            let mut worst = 0.0f64;
            for j in 0..g.ncols() {
                for i in 0..g.nrows() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g[(i, j)] - c64::new(want, 0.0)).norm());
                }
            }
            worst
        })
        .collect();
    let assembly = Arc::new(Assembly {
        bases,
        offsets,
        h,
        stacked_cond,
        stacked_rank: p.rank,
        systems,
        biorthogonality,
    });

    let mut fields = Vec::new();
    for (i, sys) in assembly.systems.iter().enumerate() {
        let b = &assembly.bases[i];
        let g = b.gram();
        let off = assembly.offsets[i];
        for (l, &val) in sys.values.iter().enumerate() {
            let right: Vec<c64> = sys.right.col(l).iter().copied().collect();
            let left: Vec<c64> = sys.left.col(l).iter().copied().collect();
            let right_coeffs = right.iter().zip(&g).map(|(w, g)| w / g).collect();
            let left_coeffs = (0..total)
                .map(|r| (0..b.len()).map(|s| left[s] * assembly.h[(r, off + s)]).sum())
                .collect();
            fields.push(EigenfunctionField {
                eigenvalue: val,
                point_index: i,
                index: l,
                right,
                left,
                pair_cond: sys.pair_cond[l],
                right_coeffs,
                left_coeffs,
                assembly: Arc::clone(&assembly),
            });
        }
    }
    Ok(fields)
}

fn diag(v: &[f64]) -> RMat {
    Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
}

/// Rectangular grid; axis `k` has `counts[k]` equispaced nodes on
/// `[lower[k], upper[k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::DimensionMismatch("grid bounds and counts must have one entry per axis".into()));
        }
        for k in 0..lower.len() {
            if counts[k] == 0 || !(lower[k] <= upper[k]) || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::invalid(format!("axis {k} of the grid is degenerate")));
            }
        }
        Ok(Self { lower, upper, counts })
    }

    /// Cube `[lo, hi]^d` with `count` nodes per axis.
    pub fn cube(d: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], vec![count; d])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(&self, k: usize, i: usize) -> f64 {
        if self.counts[k] == 1 {
            self.lower[k]
        } else {
            self.lower[k] + (self.upper[k] - self.lower[k]) * i as f64 / (self.counts[k] - 1) as f64
        }
    }

    /// Node with flat index `idx`; the last axis varies fastest (row-major).
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = self.coord(k, idx % self.counts[k]);
            idx /= self.counts[k];
        }
        out
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
}

/// Values of one side of the field at every grid node, row-major.
pub fn evaluate_field(field: &EigenfunctionField, grid: &GridSpec, side: FieldSide) -> Result<Vec<c64>> {
    (0..grid.len()).into_par_iter().map(|i| field.eval(side, &grid.node(i))).collect()
}

/// Scale so the largest modulus is 1 (no-op for an all-zero array).
pub fn normalize_max_modulus(values: &mut [c64]) {
    let m = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if m > 0.0 {
        for v in values.iter_mut() {
            *v /= m;
        }
    }
}
