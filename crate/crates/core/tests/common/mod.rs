//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use astro_float::{BigFloat, Consts, RoundingMode};

/// Sparse real polynomial keyed by exponent vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub d: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Self { d, terms: BTreeMap::new() }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        let mut p = Self::zero(d);
        p.add_term(vec![0; d], c);
        p
    }

    /// `c * x_i`.
    pub fn var(d: usize, i: usize, c: f64) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        let mut p = Self::zero(d);
        p.add_term(e, c);
        p
    }

    pub fn add_term(&mut self, e: Vec<u32>, c: f64) {
        *self.terms.entry(e).or_insert(0.0) += c;
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly { d: self.d, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = Poly::zero(self.d);
        for (a, ca) in &self.terms {
            for (b, cb) in &o.terms {
                out.add_term(a.iter().zip(b).map(|(x, y)| x + y).collect(), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::constant(self.d, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative in coordinate `i`.
    pub fn diff(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.d);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                out.add_term(f, c * e[i] as f64);
            }
        }
        out
    }

    pub fn coeff(&self, e: &[u32]) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    /// Truncated power series product, keeping total degree <= `deg`.
    pub fn mul_trunc(&self, o: &Poly, deg: u32) -> Poly {
        let mut out = Poly::zero(self.d);
        for (a, ca) in &self.terms {
            for (b, cb) in &o.terms {
                let e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if e.iter().sum::<u32>() <= deg {
                    out.add_term(e, ca * cb);
                }
            }
        }
        out
    }
}

/// All exponent vectors of total degree <= n in graded order with the first
/// coordinate taking the largest value first.
pub fn graded(d: usize, n: u32) -> Vec<Vec<u32>> {
    let mut out = vec![];
    for deg in 0..=n {
        let mut level = vec![];
        fill(d, deg, &mut vec![], &mut level);
        out.extend(level);
    }
    out
}

fn fill(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if cur.len() == d - 1 {
        let mut e = cur.clone();
        e.push(left);
        out.push(e);
        return;
    }
    for v in (0..=left).rev() {
        cur.push(v);
        fill(d, left - v, cur, out);
        cur.pop();
    }
}

/// Gauss-Hermite rule by Newton iteration on the orthonormal Hermite
/// recurrence (independent of the library's eigenvalue-based rule).
pub fn gauss_hermite_newton(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-0.16667),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

pub const BIG_PREC: usize = 512;

pub struct Big {
    cc: Consts,
}

impl Big {
    pub fn new() -> Self {
        Self { cc: Consts::new().expect("constants cache") }
    }

    pub fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, BIG_PREC)
    }

    pub fn exp(&mut self, x: &BigFloat) -> BigFloat {
        x.exp(BIG_PREC, RoundingMode::ToEven, &mut self.cc)
    }

    pub fn to_f64(&self, x: &BigFloat) -> f64 {
        format!("{x}").parse().expect("decimal rendering parses")
    }
}

pub fn badd(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.add(b, BIG_PREC, RoundingMode::ToEven)
}

pub fn bsub(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.sub(b, BIG_PREC, RoundingMode::ToEven)
}

pub fn bmul(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.mul(b, BIG_PREC, RoundingMode::ToEven)
}

pub fn bdiv(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.div(b, BIG_PREC, RoundingMode::ToEven)
}

pub fn bsqrt(a: &BigFloat) -> BigFloat {
    a.sqrt(BIG_PREC, RoundingMode::ToEven)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Exp,
    Gauss,
}

/// `sqrt(k(x,x) - v(x)' G^{-1} v(x))` in 512-bit arithmetic, with the
/// kernel, basis and Gram diagonal evaluated from their definitions.
pub fn gram_projection_error(big: &mut Big, kind: Kind, sigma: f64, b: &[f64], p: &[f64], x: &[f64], n: u32) -> f64 {
    let d = x.len();
    let s = big.f(sigma);
    let s2 = bmul(&s, &s);
    let two = big.f(2.0);
    let z: Vec<BigFloat> = (0..d).map(|i| bdiv(&bsub(&big.f(x[i]), &big.f(p[i])), &s)).collect();
    let (kxx, env) = match kind {
        Kind::Exp => {
            let mut ip = big.f(0.0);
            let mut lin = big.f(0.0);
            for i in 0..d {
                let xb = bsub(&big.f(x[i]), &big.f(b[i]));
                ip = badd(&ip, &bmul(&xb, &xb));
                let pb = bsub(&big.f(p[i]), &big.f(b[i]));
                let t = bsub(&bsub(&bmul(&two, &big.f(x[i])), &big.f(p[i])), &big.f(b[i]));
                lin = badd(&lin, &bmul(&pb, &t));
            }
            let k = big.exp(&bdiv(&ip, &s2));
            let e = big.exp(&bdiv(&lin, &bmul(&two, &s2)));
            (k, e)
        }
        Kind::Gauss => {
            let mut r2 = big.f(0.0);
            for zi in &z {
                r2 = badd(&r2, &bmul(zi, zi));
            }
            (big.f(1.0), big.exp(&bdiv(&r2, &big.f(-2.0))))
        }
    };
    let mut proj = big.f(0.0);
    for e in graded(d, n) {
        let mut mono = big.f(1.0);
        let mut fact = big.f(1.0);
        for (i, &k) in e.iter().enumerate() {
            for j in 1..=k {
                mono = bmul(&mono, &z[i]);
                fact = bmul(&fact, &big.f(j as f64));
            }
        }
        let v = bmul(&mono, &env);
        proj = badd(&proj, &bdiv(&bmul(&v, &v), &fact));
    }
    let diff = bsub(&kxx, &proj);
    if diff.is_zero() {
        return 0.0;
    }
    big.to_f64(&bsqrt(&diff))
}

/// Hausdorff distance computed directly from the definition.
pub fn hausdorff(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    let dir = |s: &[num_complex::Complex64], t: &[num_complex::Complex64]| {
        s.iter().map(|x| t.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    dir(a, b).max(dir(b, a))
}
