//! Dense linear algebra with pinned tolerances: pseudo-inverse, two-sided
//! eigendecomposition, matrix logarithm/exponential, Hausdorff distance and
//! condition numbers. Backed by `faer`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat, MatRef, Par};

use crate::error::{Error, Result};

pub type RMat = Mat<f64>;
pub type CMat = Mat<c64>;

/// Condition number of the eigenvector matrix above which an eigenproblem is
/// reported as (near-)defective.
pub const DEFECTIVE_COND: f64 = 1e12;

/// Per-eigenvalue condition number `|u||v| / |u^* v|` above which a pair is
/// flagged.
pub const PAIR_COND_FLAG: f64 = 1e8;

/// Functional calculus refuses eigenvector matrices worse than this.
pub const LOG_MAX_COND: f64 = 1e12;

/// Result of [`pinv`].
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: RMat,
    /// Number of singular values kept.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Absolute cutoff actually applied.
    pub cutoff: f64,
}

/// Default relative pseudo-inverse tolerance: `max(rows, cols) * eps`.
pub fn default_rel_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// SVD-based Moore-Penrose pseudo-inverse. Singular values below
/// `rel_tol * sigma_max` are dropped; `rel_tol = 0` selects
/// [`default_rel_tol`].
pub fn pinv(m: MatRef<'_, f64>, rel_tol: f64) -> Result<PseudoInverse> {
    if rel_tol < 0.0 || !rel_tol.is_finite() {
        return Err(Error::invalid(format!("pinv tolerance must be >= 0, got {rel_tol}")));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(PseudoInverse {
            matrix: RMat::zeros(cols, rows),
            rank: 0,
            singular_values: vec![],
            cutoff: 0.0,
        });
    }
    let tol = if rel_tol == 0.0 { default_rel_tol(rows, cols) } else { rel_tol };
    let svd = m.thin_svd().map_err(|_| Error::SvdFailed)?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let cutoff = tol * smax;
    let rank = s.iter().take_while(|&&x| x > cutoff && x > 0.0).count();
    let u = svd.U();
    let v = svd.V();
    // V_k S_k^{-1} U_k^T
    let vs = Mat::from_fn(cols, rank, |i, j| v[(i, j)] / s[j]);
    let matrix = &vs * u.get(.., ..rank).transpose();
    Ok(PseudoInverse { matrix, rank, singular_values: s, cutoff })
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.singular_values().map_err(|_| Error::SvdFailed)
}

/// `sigma_max / sigma_min`; infinite when the smallest singular value is 0.
pub fn cond(m: MatRef<'_, f64>) -> Result<f64> {
    let s = singular_values(m)?;
    Ok(ratio(&s))
}

pub fn cond_complex(m: MatRef<'_, c64>) -> Result<f64> {
    let s = m.singular_values().map_err(|_| Error::SvdFailed)?;
    Ok(ratio(&s))
}

fn ratio(s: &[f64]) -> f64 {
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(&hi), Some(_)) if hi == 0.0 => f64::INFINITY,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Deterministic eigenvalue order: real part descending, then imaginary part
/// descending.
pub fn eigen_order(a: &c64, b: &c64) -> Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

/// Sort a list of complex values with [`eigen_order`].
pub fn sort_spectrum(values: &mut [c64]) {
    values.sort_by(eigen_order);
}

/// Complete eigensystem with paired left and right vectors.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<c64>,
    /// Columns are unit-norm right eigenvectors `A v = lambda v`.
    pub right: CMat,
    /// Columns are left eigenvectors `u^* A = lambda u^*`, scaled so that
    /// `u_i^* v_i = 1` whenever the pair is not defective.
    pub left: CMat,
    /// `||A V - V Lambda||_F / ||A||_F`.
    pub residual: f64,
    /// `||U^* A - Lambda U^*||_F / (||A||_F ||U||_F)`.
    pub left_residual: f64,
    /// Condition number of the right eigenvector matrix.
    pub vector_cond: f64,
    /// Per-eigenvalue condition numbers `|u||v| / |u^* v|`.
    pub pair_cond: Vec<f64>,
    /// True when the eigenvector matrix is numerically singular.
    pub defective: bool,
}

impl EigenSystem {
    /// Indices of eigenvalues whose pair condition exceeds [`PAIR_COND_FLAG`].
    pub fn flagged(&self) -> Vec<usize> {
        self.pair_cond
            .iter()
            .enumerate()
            .filter(|(_, &c)| !(c < PAIR_COND_FLAG))
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn to_complex(m: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub fn real_part(m: MatRef<'_, c64>) -> RMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub fn max_imag(m: MatRef<'_, c64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].im.abs());
        }
    }
    out
}

/// Two-sided eigendecomposition of a square complex matrix.
pub fn eig(a: MatRef<'_, c64>) -> Result<EigenSystem> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("eig needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if n == 0 {
        return Ok(EigenSystem {
            values: vec![],
            right: CMat::zeros(0, 0),
            left: CMat::zeros(0, 0),
            residual: 0.0,
            left_residual: 0.0,
            vector_cond: 1.0,
            pair_cond: vec![],
            defective: false,
        });
    }
    let par = Par::Seq;
    let mut s = faer::diag::Diag::<c64>::zeros(n);
    let mut ul = CMat::zeros(n, n);
    let mut ur = CMat::zeros(n, n);
    let scratch = evd::evd_scratch::<c64>(
        n,
        ComputeEigenvectors::Yes,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    );
    evd::evd_cplx(
        a,
        s.as_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|_| Error::EigenFailed)?;

    let raw: Vec<c64> = s.column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigen_order(&raw[i], &raw[j]).then(i.cmp(&j)));

    let values: Vec<c64> = order.iter().map(|&k| raw[k]).collect();
    let mut right = Mat::from_fn(n, n, |i, j| ur[(i, order[j])]);
    let mut left_raw = Mat::from_fn(n, n, |i, j| ul[(i, order[j])]);
    normalize_columns(&mut right);
    normalize_columns(&mut left_raw);

    let pair_cond: Vec<f64> = (0..n)
        .map(|j| {
            let d = dot_conj(left_raw.col(j).iter(), right.col(j).iter()).norm();
            if d > 0.0 {
                1.0 / d
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let vector_cond = cond_complex(right.as_ref())?;
    let defective = !(vector_cond < DEFECTIVE_COND);
    let left = if !defective {
        // rows of V^{-1} are the biorthonormal left vectors
        let vinv = right.partial_piv_lu().inverse();
        vinv.adjoint().to_owned()
    } else {
        let mut l = left_raw.clone();
        for j in 0..n {
            let d = dot_conj(l.col(j).iter(), right.col(j).iter());
            if d.norm() > f64::EPSILON {
                let scale = d.conj().inv();
                for i in 0..n {
                    l[(i, j)] *= scale;
                }
            }
        }
        l
    };

    let anorm = a.norm_l2().max(f64::MIN_POSITIVE);
    let av = a * &right;
    let mut r = 0.0;
    for j in 0..n {
        for i in 0..n {
            r += (av[(i, j)] - right[(i, j)] * values[j]).norm_sqr();
        }
    }
    let residual = r.sqrt() / anorm;
    let ua = left.adjoint() * a;
    let mut rl = 0.0;
    for i in 0..n {
        for j in 0..n {
            rl += (ua[(i, j)] - left[(j, i)].conj() * values[i]).norm_sqr();
        }
    }
    let left_residual = rl.sqrt() / (anorm * left.norm_l2().max(f64::MIN_POSITIVE));

    Ok(EigenSystem {
        values,
        right,
        left,
        residual,
        left_residual,
        vector_cond,
        pair_cond,
        defective,
    })
}

/// Eigenvalues only, sorted with [`eigen_order`].
pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    let mut v = a.eigenvalues().map_err(|_| Error::EigenFailed)?;
    sort_spectrum(&mut v);
    Ok(v)
}

pub fn eigenvalues_real(a: MatRef<'_, f64>) -> Result<Vec<c64>> {
    let mut v = a.eigenvalues().map_err(|_| Error::EigenFailed)?;
    sort_spectrum(&mut v);
    Ok(v)
}

fn dot_conj<'a>(u: impl Iterator<Item = &'a c64>, v: impl Iterator<Item = &'a c64>) -> c64 {
    u.zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn normalize_columns(m: &mut CMat) {
    for j in 0..m.ncols() {
        let nrm = m.col(j).norm_l2();
        if nrm > 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] /= nrm;
            }
        }
    }
}

/// Matrix logarithm by eigendecomposition functional calculus.
///
/// Without offsets this is the principal logarithm (imaginary parts of the
/// eigenvalue logarithms in `(-pi, pi]`). `branch_offsets[j] = k` shifts the
/// logarithm of the `j`-th eigenvalue (in [`eigen_order`]) by `2 pi i k`.
pub fn matrix_log(m: MatRef<'_, c64>, branch_offsets: Option<&[i64]>) -> Result<CMat> {
    let sys = eig(m)?;
    log_from_eigensystem(&sys, m.norm_l2(), branch_offsets)
}

/// Same as [`matrix_log`] but reusing an existing eigensystem.
pub fn log_from_eigensystem(
    sys: &EigenSystem,
    norm: f64,
    branch_offsets: Option<&[i64]>,
) -> Result<CMat> {
    let n = sys.values.len();
    if let Some(off) = branch_offsets {
        if off.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} branch offsets for {} eigenvalues",
                off.len(),
                n
            )));
        }
    }
    let floor = norm.max(1.0) * 1e3 * f64::EPSILON;
    for (index, lam) in sys.values.iter().enumerate() {
        if !(lam.norm() > floor) {
            return Err(Error::SingularLog { index, modulus: lam.norm() });
        }
    }
    if !(sys.vector_cond < LOG_MAX_COND) {
        return Err(Error::IllConditioned(sys.vector_cond));
    }
    let logs: Vec<c64> = sys
        .values
        .iter()
        .enumerate()
        .map(|(j, lam)| {
            let k = branch_offsets.map_or(0, |o| o[j]);
            principal_log(*lam) + c64::new(0.0, 2.0 * PI * k as f64)
        })
        .collect();
    let scaled = Mat::from_fn(n, n, |i, j| sys.right[(i, j)] * logs[j]);
    Ok(&scaled * sys.left.adjoint())
}

/// Principal logarithm with imaginary part in `(-pi, pi]`.
pub fn principal_log(z: c64) -> c64 {
    let mut l = z.ln();
    if l.im <= -PI {
        l.im += 2.0 * PI;
    }
    l
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor
/// polynomial. Independent of the eigendecomposition path.
pub fn matrix_exp(m: MatRef<'_, c64>) -> CMat {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.25 { (norm1 / 0.25).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let a = Mat::from_fn(n, n, |i, j| m[(i, j)] * scale);
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=18 {
        term = &term * &a;
        let inv_k = 1.0 / k as f64;
        for j in 0..n {
            for i in 0..n {
                term[(i, j)] *= inv_k;
            }
        }
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Symmetric Hausdorff distance under the complex modulus.
pub fn hausdorff(a: &[c64], b: &[c64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Hausdorff distance needs two nonempty sets"));
    }
    Ok(directed(a, b).max(directed(b, a)))
}

fn directed(a: &[c64], b: &[c64]) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Frobenius norm of `a - b`.
pub fn diff_norm(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    (a - b).norm_l2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn cm(rows: &[&[f64]]) -> CMat {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| c(rows[i][j], 0.0))
    }

    #[test]
    fn pinv_diagonal() {
        let m = faer::mat![[3.0, 0.0], [0.0, 0.0]];
        let p = pinv(m.as_ref(), 0.0).unwrap();
        assert_eq!(p.rank, 1);
        assert!((p.matrix[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.matrix[(1, 1)], 0.0);
    }

    #[test]
    fn pinv_identity() {
        let m = RMat::identity(4, 4);
        let p = pinv(m.as_ref(), 0.0).unwrap();
        assert!((&p.matrix - &m).norm_l2() < 1e-14);
        assert!(pinv(m.as_ref(), -1.0).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let a = cm(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]);
        let e = eig(a.as_ref()).unwrap();
        assert_eq!(e.values, vec![c(3.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(!e.defective);
        for (j, row) in [2usize, 1, 0].iter().enumerate() {
            assert!((e.right[(*row, j)].norm() - 1.0).abs() < 1e-14);
        }
        assert!(e.residual < 1e-15);
    }

    #[test]
    fn eig_jordan_block_is_flagged() {
        let a = cm(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let e = eig(a.as_ref()).unwrap();
        assert!(e.values.iter().all(|v| v.norm() < 1e-12));
        assert!(e.defective);
        assert_eq!(e.flagged().len(), 2);
    }

    #[test]
    fn eig_companion() {
        // z^2 - 3z + 2
        let a = cm(&[&[3.0, -2.0], &[1.0, 0.0]]);
        let e = eig(a.as_ref()).unwrap();
        assert!((e.values[0] - c(2.0, 0.0)).norm() < 1e-13);
        assert!((e.values[1] - c(1.0, 0.0)).norm() < 1e-13);
        // biorthonormal
        let g = e.left.adjoint() * &e.right;
        assert!((&g - CMat::identity(2, 2)).norm_l2() < 1e-12);
    }

    #[test]
    fn log_diagonal_and_identity() {
        let e1 = std::f64::consts::E;
        let a = cm(&[&[e1, 0.0], &[0.0, e1 * e1]]);
        let l = matrix_log(a.as_ref(), None).unwrap();
        assert!((l[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((l[(1, 1)] - c(2.0, 0.0)).norm() < 1e-14);
        assert!(l[(0, 1)].norm() < 1e-14);
        let id = CMat::identity(3, 3);
        assert!(matrix_log(id.as_ref(), None).unwrap().norm_l2() < 1e-15);
    }

    fn rotation(theta: f64) -> CMat {
        cm(&[&[theta.cos(), -theta.sin()], &[theta.sin(), theta.cos()]])
    }

    #[test]
    fn log_rotation_branch() {
        // rotation by 3pi/4 applied twice is rotation by 3pi/2
        let r = rotation(3.0 * PI / 4.0);
        let r2 = &r * &r;
        let l = matrix_log(r2.as_ref(), None).unwrap();
        // principal: angle -pi/2, generator [[0, pi/2], [-pi/2, 0]]
        assert!((l[(1, 0)] - c(-PI / 2.0, 0.0)).norm() < 1e-12);
        let sys = eig(r2.as_ref()).unwrap();
        // eigenvalues are e^{-i pi/2} = -i (sorted second) and +i (first);
        // shifting -i's log by +2 pi i and +i's by -2 pi i recovers 3pi/2.
        let offsets: Vec<i64> = sys
            .values
            .iter()
            .map(|v| if v.im < 0.0 { 1 } else { -1 })
            .collect();
        let l2 = matrix_log(r2.as_ref(), Some(&offsets)).unwrap();
        assert!((l2[(1, 0)] - c(3.0 * PI / 2.0, 0.0)).norm() < 1e-12);
        assert!((l2[(0, 1)] - c(-3.0 * PI / 2.0, 0.0)).norm() < 1e-12);
        let back = matrix_exp(l2.as_ref());
        assert!((&back - &r2).norm_l2() < 1e-12);
    }

    #[test]
    fn log_rejects_singular() {
        let a = cm(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(matrix_log(a.as_ref(), None), Err(Error::SingularLog { .. })));
        let j = cm(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(matrix_log(j.as_ref(), None), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn hausdorff_examples() {
        let a = [c(1.0, 1.0)];
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&[c(0.0, 0.0)], &[c(1.0, 0.0), c(2.0, 0.0)]).unwrap(), 2.0);
        let d = hausdorff(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.1, 0.0), c(0.9, 0.0)]).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        assert!(hausdorff(&[], &a).is_err());
    }

    #[test]
    fn condition_numbers() {
        assert!((cond(RMat::identity(3, 3).as_ref()).unwrap() - 1.0).abs() < 1e-15);
        let d = faer::mat![[10.0, 0.0], [0.0, 0.1]];
        assert!((cond(d.as_ref()).unwrap() - 100.0).abs() < 1e-12);
        let r = faer::mat![[1.0, 2.0], [2.0, 4.0]];
        let k = cond(r.as_ref()).unwrap();
        assert!(k > 1e15);
        let z = faer::mat![[1.0, 0.0], [0.0, 0.0]];
        assert!(cond(z.as_ref()).unwrap().is_infinite());
    }
}
