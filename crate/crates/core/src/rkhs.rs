//! Kernels, intrinsic observable bases, Gram and cross-Gram matrices and
//! projection errors.
//!
//! The basis of order `n` at `p` consists of normalized derivatives of the
//! kernel section at `p`, one per multi-index of degree at most `n`:
//!
//! * exponential kernel `k(x, y) = exp((x-b)'(y-b) / s^2)`:
//!   `v_a(x) = ((x-p)/s)^a exp((p-b)'(2x-p-b) / 2s^2)`
//! * Gaussian kernel `k(x, y) = exp(-|x-y|^2 / 2s^2)`:
//!   `v_a(x) = ((x-p)/s)^a exp(-|x-p|^2 / 2s^2)`
//!
//! Both bases are orthogonal with `<v_a, v_a> = a!`.

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::multiindex::{graded_enumerate, GradedOrder, MultiIndex};
use crate::numerics::RMat;

/// Relative stopping threshold for the projection-error series.
pub const TAIL_REL_TOL: f64 = 1e-18;
/// Maximum number of series terms before falling back to an upper bound.
pub const TAIL_MAX_TERMS: usize = 500;
/// Default Gauss-Hermite nodes per axis for the quadrature cross-check.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Exponential,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    sigma: f64,
    center: Option<Vec<f64>>,
}

impl KernelSpec {
    pub fn exponential(sigma: f64, center: Vec<f64>) -> Result<Self> {
        check_sigma(sigma)?;
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("exponential kernel center must be a finite nonempty point"));
        }
        Ok(Self { kind: KernelKind::Exponential, sigma, center: Some(center) })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { kind: KernelKind::Gaussian, sigma, center: None })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Center `b`; `None` for the Gaussian kernel.
    pub fn center(&self) -> Option<&[f64]> {
        self.center.as_deref()
    }

    /// Same kernel kind and width with a different exponential center.
    /// Gaussian kernels are returned unchanged.
    pub fn recentered(&self, center: Vec<f64>) -> Result<Self> {
        match self.kind {
            KernelKind::Exponential => Self::exponential(self.sigma, center),
            KernelKind::Gaussian => Ok(self.clone()),
        }
    }

    /// Evaluate `k(x, y)`.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("kernel arguments of length {} and {}", x.len(), y.len())));
        }
        let s2 = self.sigma * self.sigma;
        match self.kind {
            KernelKind::Exponential => {
                let b = self.center.as_deref().unwrap_or(&[]);
                check_len(b.len(), x.len(), "kernel center")?;
                let ip: f64 = (0..x.len()).map(|i| (x[i] - b[i]) * (y[i] - b[i])).sum();
                Ok((ip / s2).exp())
            }
            KernelKind::Gaussian => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((-d2 / (2.0 * s2)).exp())
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("kernel width must be positive and finite, got {sigma}")))
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what} has length {got}, expected {want}")))
    }
}

/// `k(x, y)` for the given kernel.
pub fn kernel_value(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    k.value(x, y)
}

/// Intrinsic observables of order `n` at base point `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableBasis {
    kernel: KernelSpec,
    base_point: Vec<f64>,
    order: GradedOrder,
}

impl ObservableBasis {
    pub fn new(kernel: KernelSpec, base_point: Vec<f64>, n: usize) -> Result<Self> {
        if base_point.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("base point must be finite"));
        }
        if let Some(b) = kernel.center() {
            check_len(b.len(), base_point.len(), "kernel center")?;
        }
        let order = graded_enumerate(base_point.len(), n)?;
        Ok(Self { kernel, base_point, order })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    pub fn max_order(&self) -> usize {
        self.order.max_order()
    }

    pub fn order_table(&self) -> &GradedOrder {
        &self.order
    }

    /// Number of basis functions `r_n`.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn index(&self, i: usize) -> &MultiIndex {
        self.order.get(i)
    }

    /// The order-`m` basis at the same point, a prefix of this one.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m > self.max_order() {
            return Err(Error::invalid(format!("cannot truncate order {} basis to order {m}", self.max_order())));
        }
        Ok(Self { kernel: self.kernel.clone(), base_point: self.base_point.clone(), order: self.order.truncate(m)? })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        check_len(x.len(), self.dim(), "point")
    }

    /// Scaled offsets `(x - p) / sigma`.
    fn offsets(&self, x: &[f64]) -> Vec<f64> {
        let s = self.kernel.sigma;
        x.iter().zip(&self.base_point).map(|(a, p)| (a - p) / s).collect()
    }

    /// Logarithm of the common exponential factor of every basis function.
    fn log_envelope(&self, x: &[f64]) -> f64 {
        let s2 = self.kernel.sigma * self.kernel.sigma;
        let p = &self.base_point;
        match self.kernel.kind {
            KernelKind::Exponential => {
                let b = self.kernel.center().unwrap_or(&[]);
                (0..x.len()).map(|i| (p[i] - b[i]) * (2.0 * x[i] - p[i] - b[i])).sum::<f64>() / (2.0 * s2)
            }
            KernelKind::Gaussian => -(0..x.len()).map(|i| (x[i] - p[i]).powi(2)).sum::<f64>() / (2.0 * s2),
        }
    }

    /// `d/dx_j` of the log envelope.
    fn log_envelope_grad(&self, x: &[f64], j: usize) -> f64 {
        let s2 = self.kernel.sigma * self.kernel.sigma;
        let p = &self.base_point;
        match self.kernel.kind {
            KernelKind::Exponential => {
                let b = self.kernel.center().unwrap_or(&[]);
                (p[j] - b[j]) / s2
            }
            KernelKind::Gaussian => -(x[j] - p[j]) / s2,
        }
    }

    /// Per-coordinate power tables `z_i^k`, `k = 0..=n`.
    fn powers(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let n = self.max_order();
        z.iter()
            .map(|&zi| {
                let mut row = Vec::with_capacity(n + 1);
                let mut acc = 1.0;
                for _ in 0..=n {
                    row.push(acc);
                    acc *= zi;
                }
                row
            })
            .collect()
    }

    /// Feature vector `v_n(x)`; entry `i` is the (real, so self-conjugate)
    /// value of the `i`-th basis function.
    pub fn feature_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let env = self.log_envelope(x).exp();
        let pw = self.powers(&self.offsets(x));
        Ok(self
            .order
            .iter()
            .map(|a| env * a.exponents().iter().enumerate().map(|(i, &e)| pw[i][e as usize]).product::<f64>())
            .collect())
    }

    /// Partial derivative `d/dx_j` of every basis function at `x`.
    pub fn feature_derivative(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        if j >= self.dim() {
            return Err(Error::invalid(format!("coordinate index {j} out of range for dimension {}", self.dim())));
        }
        let env = self.log_envelope(x).exp();
        let g = self.log_envelope_grad(x, j);
        let pw = self.powers(&self.offsets(x));
        let inv_s = 1.0 / self.kernel.sigma;
        Ok(self
            .order
            .iter()
            .map(|a| {
                let ex = a.exponents();
                let mono: f64 = ex.iter().enumerate().map(|(i, &e)| pw[i][e as usize]).product();
                let dmono = if ex[j] == 0 {
                    0.0
                } else {
                    let rest: f64 = ex
                        .iter()
                        .enumerate()
                        .map(|(i, &e)| if i == j { pw[i][e as usize - 1] } else { pw[i][e as usize] })
                        .product();
                    ex[j] as f64 * inv_s * rest
                };
                env * (dmono + g * mono)
            })
            .collect())
    }

    /// Derivative of the features along the vector field value `f` at `x`:
    /// `sum_j f_j d/dx_j v(x)`.
    pub fn feature_lie_derivative(&self, x: &[f64], f: &[f64]) -> Result<Vec<f64>> {
        check_len(f.len(), self.dim(), "vector field value")?;
        let mut out = vec![0.0; self.len()];
        for (j, &fj) in f.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            let dv = self.feature_derivative(j, x)?;
            for (o, d) in out.iter_mut().zip(dv) {
                *o += fj * d;
            }
        }
        Ok(out)
    }

    /// Feature matrix with one column per point (`r_n x N`).
    pub fn feature_matrix(&self, points: &[Vec<f64>]) -> Result<RMat> {
        let cols: Vec<Vec<f64>> = points.par_iter().map(|x| self.feature_vector(x)).collect::<Result<_>>()?;
        Ok(Mat::from_fn(self.len(), cols.len(), |i, j| cols[j][i]))
    }

    /// Diagonal of the Gram matrix, `a!` per basis element.
    pub fn gram(&self) -> Vec<f64> {
        self.order.iter().map(|a| a.factorial_f64()).collect()
    }

    /// `G^{-1} v(x)`: coefficients of the orthogonal projection of `k_x`.
    pub fn projection_coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = self.feature_vector(x)?;
        Ok(v.iter().zip(self.gram()).map(|(vi, g)| vi / g).collect())
    }

    /// Distance from `k_x` to the span of the basis.
    pub fn projection_error(&self, x: &[f64]) -> Result<f64> {
        Ok(self.projection_error_detailed(x)?.value)
    }

    pub fn projection_error_detailed(&self, x: &[f64]) -> Result<ProjectionError> {
        self.check_point(x)?;
        let r2: f64 = self.offsets(x).iter().map(|z| z * z).sum();
        // log of the squared prefactor multiplying the exponential series tail
        let log_pref2 = match self.kernel.kind {
            KernelKind::Exponential => 2.0 * self.log_envelope(x),
            KernelKind::Gaussian => -r2,
        };
        let tail = exp_series_tail(r2, self.max_order());
        let value = match tail.log_value {
            None => 0.0,
            Some(lt) => (0.5 * (log_pref2 + lt)).exp(),
        };
        Ok(ProjectionError { value, reduced_precision: tail.reduced_precision })
    }
}

/// Result of [`ObservableBasis::projection_error_detailed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionError {
    pub value: f64,
    /// Set when the series did not converge within [`TAIL_MAX_TERMS`] and
    /// an upper bound was returned instead.
    pub reduced_precision: bool,
}

struct SeriesTail {
    log_value: Option<f64>,
    reduced_precision: bool,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln sum_{m > n} t^m / m!`, `None` when the tail is exactly zero.
fn exp_series_tail(t: f64, n: usize) -> SeriesTail {
    if t <= 0.0 {
        return SeriesTail { log_value: None, reduced_precision: false };
    }
    let lt = t.ln();
    if t > n as f64 + 1.0 {
        // tail = e^t (1 - P[Poisson(t) <= n]); the head is the small part here
        let mut head = 0.0;
        let mut lf = 0.0;
        for m in 0..=n {
            if m > 0 {
                lf += (m as f64).ln();
            }
            head += (m as f64 * lt - lf - t).exp();
        }
        return SeriesTail { log_value: Some(t + (-head).ln_1p()), reduced_precision: false };
    }
    let first = (n + 1) as f64 * lt - ln_factorial(n + 1);
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut m = n + 1;
    let mut converged = false;
    for _ in 1..TAIL_MAX_TERMS {
        m += 1;
        term *= t / m as f64;
        sum += term;
        if term < TAIL_REL_TOL * sum {
            converged = true;
            break;
        }
    }
    if converged {
        SeriesTail { log_value: Some(first + sum.ln()), reduced_precision: false }
    } else {
        // t^{n+1}/(n+1)! e^t bounds the tail from above
        SeriesTail { log_value: Some(first + t), reduced_precision: true }
    }
}

/// Feature vector of `basis` at `x`.
pub fn feature_vector(basis: &ObservableBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.feature_vector(x)
}

pub fn feature_derivative(basis: &ObservableBasis, j: usize, x: &[f64]) -> Result<Vec<f64>> {
    basis.feature_derivative(j, x)
}

pub fn gram(basis: &ObservableBasis) -> Vec<f64> {
    basis.gram()
}

pub fn projection_error(basis: &ObservableBasis, x: &[f64]) -> Result<f64> {
    basis.projection_error(x)
}

pub fn projection_coefficients(basis: &ObservableBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.projection_coefficients(x)
}

fn check_compatible(a: &ObservableBasis, b: &ObservableBasis) -> Result<()> {
    if a.kernel != b.kernel {
        return Err(Error::invalid("cross-Gram needs both bases to share one kernel"));
    }
    check_len(b.dim(), a.dim(), "base point")
}

/// One-dimensional cross-Gram table `<v_{p,a}, v_{q,c}>` for
/// `a <= ma`, `c <= mc`, `delta = (q - p) / sigma`.
///
/// Closed form of the mixed derivatives of the kernel:
/// `e^{-delta^2/2} sum_j a! c! (-1)^{c-j} delta^{a+c-2j} / (j! (a-j)! (c-j)!)`.
fn cross_gram_1d(delta: f64, ma: usize, mc: usize) -> Vec<Vec<f64>> {
    let env = (-0.5 * delta * delta).exp();
    let mut out = vec![vec![0.0; mc + 1]; ma + 1];
    for (a, row) in out.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            // coefficient C(a,j) C(c,j) j!, updated incrementally in j
            let mut coef = 1.0;
            for j in 0..=a.min(c) {
                if j > 0 {
                    coef *= ((a - j + 1) * (c - j + 1)) as f64 / j as f64;
                }
                let sign = if (c - j) % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * coef * delta.powi((a + c - 2 * j) as i32);
            }
            *slot = env * s;
        }
    }
    out
}

/// Inner products `<v_{p_i,s}, v_{p_j,t}>` between two bases of one kernel,
/// as an `r_{m_i} x r_{m_j}` matrix.
pub fn cross_gram(bi: &ObservableBasis, bj: &ObservableBasis) -> Result<RMat> {
    check_compatible(bi, bj)?;
    let s = bi.kernel.sigma;
    let (mi, mj) = (bi.max_order(), bj.max_order());
    let tables: Vec<Vec<Vec<f64>>> = (0..bi.dim())
        .map(|k| cross_gram_1d((bj.base_point[k] - bi.base_point[k]) / s, mi, mj))
        .collect();
    Ok(Mat::from_fn(bi.len(), bj.len(), |r, c| {
        let a = bi.index(r).exponents();
        let b = bj.index(c).exponents();
        (0..a.len()).map(|k| tables[k][a[k] as usize][b[k] as usize]).product()
    }))
}

/// Gauss-Hermite nodes and weights for the weight `e^{-t^2}` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("Gauss-Hermite rule needs at least one node"));
    }
    let jac = Mat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let evd = jac.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailed)?;
    let nodes: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let mu0 = std::f64::consts::PI.sqrt();
    let weights = (0..n).map(|k| mu0 * u[(0, k)] * u[(0, k)]).collect();
    Ok((nodes, weights))
}

/// Cross-Gram by numerical integration over `C^d` with `nodes` Gauss-Hermite
/// points per real axis. For the Gaussian kernel the integral is taken in
/// the isometric exponential-kernel space centered at the origin.
pub fn cross_gram_quadrature(bi: &ObservableBasis, bj: &ObservableBasis, nodes: usize) -> Result<RMat> {
    check_compatible(bi, bj)?;
    let d = bi.dim();
    let s = bi.kernel.sigma;
    let zero = vec![0.0; d];
    let b: Vec<f64> = bi.kernel.center().map(<[f64]>::to_vec).unwrap_or(zero);
    let (t, w) = gauss_hermite(nodes)?;
    let (mi, mj) = (bi.max_order(), bj.max_order());
    // per coordinate 1-D complex integrals of the separable factors
    let tables: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|k| {
            let (p, q, bk) = (bi.base_point[k], bj.base_point[k], b[k]);
            let mut tab = vec![vec![0.0; mj + 1]; mi + 1];
            for (ia, &ta) in t.iter().enumerate() {
                for (ib, &tb) in t.iter().enumerate() {
                    let z = num_complex::Complex64::new(bk + s * ta, s * tb);
                    let ep = ((p - bk) * (2.0 * z - p - bk) / (2.0 * s * s)).exp();
                    let eq = ((q - bk) * (2.0 * z - q - bk) / (2.0 * s * s)).exp();
                    let zp = (z - p) / s;
                    let zq = (z - q) / s;
                    let wgt = w[ia] * w[ib] / std::f64::consts::PI;
                    let mut fa = ep;
                    for row in tab.iter_mut() {
                        let mut fc = eq;
                        for slot in row.iter_mut() {
                            *slot += wgt * (fa * fc.conj()).re;
                            fc *= zq;
                        }
                        fa *= zp;
                    }
                }
            }
            tab
        })
        .collect();
    Ok(Mat::from_fn(bi.len(), bj.len(), |r, c| {
        let a = bi.index(r).exponents();
        let bb = bj.index(c).exponents();
        (0..d).map(|k| tables[k][a[k] as usize][bb[k] as usize]).product()
    }))
}

/// [`cross_gram`] validated against [`cross_gram_quadrature`]; fails with
/// [`Error::QuadratureMismatch`] when the largest entrywise difference
/// relative to `max(1, |entry|)` exceeds `tol`.
pub fn cross_gram_checked(bi: &ObservableBasis, bj: &ObservableBasis, nodes: usize, tol: f64) -> Result<RMat> {
    let exact = cross_gram(bi, bj)?;
    let quad = cross_gram_quadrature(bi, bj, nodes)?;
    let mut worst = 0.0f64;
    for j in 0..exact.ncols() {
        for i in 0..exact.nrows() {
            let e = exact[(i, j)];
            worst = worst.max((e - quad[(i, j)]).abs() / e.abs().max(1.0));
        }
    }
    if worst > tol {
        return Err(Error::QuadratureMismatch(worst));
    }
    Ok(exact)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1(n: usize) -> ObservableBasis {
        ObservableBasis::new(KernelSpec::exponential(1.0, vec![0.0]).unwrap(), vec![0.0], n).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
    }

    #[test]
    fn kernel_examples() {
        let g = KernelSpec::gaussian(0.7).unwrap();
        assert_eq!(g.value(&[1.3, -2.0], &[1.3, -2.0]).unwrap(), 1.0);
        let e = KernelSpec::exponential(1.0, vec![0.0, 0.0]).unwrap();
        assert!((e.value(&[1.0, 0.0], &[2.0, 0.0]).unwrap() - 7.38905609893065).abs() < 1e-13);
        let e = KernelSpec::exponential(0.5, vec![1.0, 2.0]).unwrap();
        assert_eq!(e.value(&[1.0, 2.0], &[9.0, -4.0]).unwrap(), 1.0);
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn feature_examples() {
        let b = ObservableBasis::new(KernelSpec::exponential(0.8, vec![0.3, -1.0]).unwrap(), vec![0.3, -1.0], 3).unwrap();
        let v = b.feature_vector(&[0.3, -1.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));
        assert!(close(&exp1(2).feature_vector(&[2.0]).unwrap(), &[1.0, 2.0, 4.0], 1e-15));
        let g = ObservableBasis::new(KernelSpec::gaussian(1.0).unwrap(), vec![0.0], 1).unwrap();
        let h = (-0.5f64).exp();
        assert!(close(&g.feature_vector(&[1.0]).unwrap(), &[h, h], 1e-15));
    }

    #[test]
    fn derivative_examples() {
        assert!(close(&exp1(2).feature_derivative(0, &[3.0]).unwrap(), &[0.0, 1.0, 6.0], 1e-15));
        let g = ObservableBasis::new(KernelSpec::gaussian(1.0).unwrap(), vec![0.0], 0).unwrap();
        assert_eq!(g.feature_derivative(0, &[0.0]).unwrap(), vec![0.0]);
        assert!(exp1(2).feature_derivative(1, &[3.0]).is_err());
    }

    #[test]
    fn gram_examples() {
        let b2 = ObservableBasis::new(KernelSpec::gaussian(1.0).unwrap(), vec![0.0, 0.0], 2).unwrap();
        assert_eq!(b2.gram(), vec![1.0, 1.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(exp1(3).gram(), vec![1.0, 1.0, 2.0, 6.0]);
        let b0 = ObservableBasis::new(KernelSpec::gaussian(1.0).unwrap(), vec![0.0; 4], 0).unwrap();
        assert_eq!(b0.gram(), vec![1.0]);
    }

    #[test]
    fn cross_gram_examples() {
        let b = ObservableBasis::new(KernelSpec::exponential(1.3, vec![0.5, 0.1]).unwrap(), vec![0.2, -0.4], 4).unwrap();
        let g = cross_gram(&b, &b).unwrap();
        let diag = b.gram();
        for i in 0..b.len() {
            for j in 0..b.len() {
                let want = if i == j { diag[i] } else { 0.0 };
                assert_eq!(g[(i, j)], want);
            }
        }
        // order zero: <v_0, v_q> = k(0, q) scaled by the envelope normalisation
        let k = KernelSpec::gaussian(1.0).unwrap();
        let b0 = ObservableBasis::new(k.clone(), vec![0.0], 0).unwrap();
        let b1 = ObservableBasis::new(k, vec![1.0], 0).unwrap();
        assert!((cross_gram(&b0, &b1).unwrap()[(0, 0)] - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn cross_gram_rejects_mixed_kernels() {
        let a = ObservableBasis::new(KernelSpec::gaussian(1.0).unwrap(), vec![0.0], 1).unwrap();
        let b = ObservableBasis::new(KernelSpec::gaussian(2.0).unwrap(), vec![0.0], 1).unwrap();
        assert!(cross_gram(&a, &b).is_err());
    }

    #[test]
    fn quadrature_agrees() {
        let k = KernelSpec::exponential(0.9, vec![0.2, -0.1]).unwrap();
        let a = ObservableBasis::new(k.clone(), vec![0.1, 0.3], 3).unwrap();
        let b = ObservableBasis::new(k, vec![-0.4, 0.5], 2).unwrap();
        cross_gram_checked(&a, &b, DEFAULT_QUADRATURE_NODES, 1e-9).unwrap();
        let k = KernelSpec::gaussian(1.1).unwrap();
        let a = ObservableBasis::new(k.clone(), vec![0.1], 4).unwrap();
        let b = ObservableBasis::new(k, vec![0.9], 3).unwrap();
        cross_gram_checked(&a, &b, DEFAULT_QUADRATURE_NODES, 1e-9).unwrap();
    }

    #[test]
    fn projection_examples() {
        let b = exp1(0);
        assert_eq!(b.projection_error(&[0.0]).unwrap(), 0.0);
        assert!((b.projection_error(&[1.0]).unwrap() - (std::f64::consts::E - 1.0).sqrt()).abs() < 1e-14);
        assert!(close(&exp1(2).projection_coefficients(&[2.0]).unwrap(), &[1.0, 2.0, 2.0], 1e-15));
        let b = ObservableBasis::new(KernelSpec::exponential(1.0, vec![0.0]).unwrap(), vec![0.5], 3).unwrap();
        let c = b.projection_coefficients(&[0.5]).unwrap();
        assert!(close(&c, &[0.125f64.exp(), 0.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn series_tail_branches_agree() {
        // both evaluation branches meet at t = n + 1
        for n in [0usize, 3, 10, 40] {
            let t = n as f64 + 1.0;
            let lo = exp_series_tail(t * (1.0 - 1e-9), n).log_value.unwrap();
            let hi = exp_series_tail(t * (1.0 + 1e-9), n).log_value.unwrap();
            assert!((lo - hi).abs() < 1e-6, "n={n}: {lo} vs {hi}");
        }
        assert!(exp_series_tail(0.0, 5).log_value.is_none());
    }

    #[test]
    fn gauss_hermite_moments() {
        let (t, w) = gauss_hermite(20).unwrap();
        let m0: f64 = w.iter().sum();
        let m2: f64 = t.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let pi_sqrt = std::f64::consts::PI.sqrt();
        assert!((m0 - pi_sqrt).abs() < 1e-13);
        assert!((m2 - pi_sqrt / 2.0).abs() < 1e-13);
    }
}
