//! Multi-indices and the graded enumeration of `Z^d_{>=0}`.
//!
//! Every basis, matrix row and matrix column in the crate is laid out in the
//! order produced by [`graded_enumerate`]: by total degree first, and within a
//! degree graded-lexicographically with `x_1` carrying the highest priority.
//! For `d = 2` this gives `1, x, y, x^2, xy, y^2, ...`, so the degree-one
//! monomials always occupy positions `1..=d` right after the constant.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest `n` for which `n!` fits in a `u64`.
pub const EXACT_FACTORIAL_LIMIT: u32 = 20;

/// A multi-index `(alpha_1, ..., alpha_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::invalid("multi-index must have at least one component"));
        }
        Ok(MultiIndex(exponents))
    }

    pub fn zeros(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// The unit multi-index `e_i`.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `alpha! = prod alpha_i!`, exact. Fails on `u64` overflow.
    pub fn factorial(&self) -> Result<u64> {
        self.0.iter().try_fold(1u64, |acc, &a| {
            let f = factorial_u64(a)?;
            acc.checked_mul(f).ok_or(Error::Overflow("multi-index factorial"))
        })
    }

    /// `alpha!` in floating point; exact up to [`EXACT_FACTORIAL_LIMIT`] per
    /// component, log-gamma accurate beyond.
    pub fn factorial_f64(&self) -> f64 {
        self.0.iter().map(|&a| factorial_f64(a)).product()
    }

    /// `z^alpha` with `0^0 = 1`.
    pub fn monomial(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.0.len());
        self.0
            .iter()
            .zip(z)
            .map(|(&a, &zi)| zi.powi(a as i32))
            .product()
    }

    pub fn monomial_complex(&self, z: &[Complex64]) -> Complex64 {
        debug_assert_eq!(z.len(), self.0.len());
        self.0
            .iter()
            .zip(z)
            .map(|(&a, &zi)| zi.powu(a))
            .product()
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// `z^alpha` as a free function.
pub fn monomial_eval(alpha: &MultiIndex, z: &[f64]) -> Result<f64> {
    if z.len() != alpha.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, multi-index has {}",
            z.len(),
            alpha.dim()
        )));
    }
    Ok(alpha.monomial(z))
}

/// `alpha!` as a free function.
pub fn mi_factorial(alpha: &MultiIndex) -> Result<u64> {
    alpha.factorial()
}

fn factorial_u64(a: u32) -> Result<u64> {
    (1..=a as u64).try_fold(1u64, |acc, k| acc.checked_mul(k).ok_or(Error::Overflow("factorial")))
}

/// `a!` in floating point.
pub fn factorial_f64(a: u32) -> f64 {
    (1..=a).fold(1.0, |acc, k| acc * k as f64)
}

/// `r_n = C(n + d, d)`, the number of multi-indices of degree at most `n`.
pub fn dimension(d: usize, n: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::invalid("dimension d must be positive"));
    }
    // C(n+d, d) = prod_{k=1}^{d} (n + k) / k, exact at every step.
    let mut acc: u128 = 1;
    for k in 1..=d as u128 {
        acc = acc
            .checked_mul(n as u128 + k)
            .ok_or(Error::Overflow("binomial dimension"))?
            / k;
    }
    usize::try_from(acc).map_err(|_| Error::Overflow("binomial dimension"))
}

/// The graded enumeration `alpha^(1), ..., alpha^(r_n)` of all multi-indices
/// of degree at most `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedOrder {
    d: usize,
    n: usize,
    indices: Vec<MultiIndex>,
}

impl GradedOrder {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn max_order(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    /// Position of `alpha` in the enumeration, if its degree is at most `n`.
    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        if alpha.dim() != self.d || alpha.degree() as usize > self.n {
            return None;
        }
        let deg = alpha.degree() as usize;
        let start = if deg == 0 { 0 } else { dimension(self.d, deg - 1).ok()? };
        let end = dimension(self.d, deg).ok()?;
        self.indices[start..end]
            .iter()
            .position(|b| b == alpha)
            .map(|k| start + k)
    }

    /// Prefix of length `r_k` as a new order.
    pub fn truncate(&self, k: usize) -> Result<GradedOrder> {
        let k = k.min(self.n);
        let len = dimension(self.d, k)?;
        Ok(GradedOrder {
            d: self.d,
            n: k,
            indices: self.indices[..len].to_vec(),
        })
    }
}

/// Enumerate all `alpha` in `Z^d_{>=0}` with `|alpha| <= n`, graded, with
/// graded-lexicographic tie breaking (`x_1` highest priority).
pub fn graded_enumerate(d: usize, n: usize) -> Result<GradedOrder> {
    let total = dimension(d, n)?;
    let mut indices = Vec::with_capacity(total);
    let mut buf = vec![0u32; d];
    for deg in 0..=n {
        push_degree(&mut indices, &mut buf, 0, deg as u32);
    }
    debug_assert_eq!(indices.len(), total);
    Ok(GradedOrder { d, n, indices })
}

// Emits all compositions of `remaining` into buf[pos..] with the first slot
// taking the largest value first.
fn push_degree(out: &mut Vec<MultiIndex>, buf: &mut [u32], pos: usize, remaining: u32) {
    if pos == buf.len() - 1 {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        buf[pos] = a;
        push_degree(out, buf, pos + 1, remaining - a);
    }
    buf[pos] = 0;
}
