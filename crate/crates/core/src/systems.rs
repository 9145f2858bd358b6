//! Reference dynamical systems, RK4 integration, reproducible sampling,
//! finite-difference velocities and the Ricker Bell-polynomial matrix.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::SnapshotData;
use crate::numerics::RMat;

/// Default integration step for data generation.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    DiscreteMap,
    VectorField,
}

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    Quadratic,
    Henon { a: f64, b: f64 },
    Ricker { r: f64 },
    VanDerPol { mu: f64 },
    Duffing { alpha: f64, beta: f64, delta: f64 },
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    Linear(RMat),
}

/// A closed-form map or vector field with its fixed points.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalSystem {
    name: String,
    kind: SystemKind,
    params: BTreeMap<String, f64>,
    rule: Rule,
}

pub const BUILTIN_NAMES: [&str; 6] = ["quadratic_map", "henon", "ricker", "van_der_pol", "duffing", "lorenz"];

fn take(params: &BTreeMap<String, f64>, known: &[(&str, f64)]) -> Result<BTreeMap<String, f64>> {
    for k in params.keys() {
        if !known.iter().any(|(n, _)| n == k) {
            return Err(Error::invalid(format!("unknown parameter `{k}`")));
        }
    }
    let mut out = BTreeMap::new();
    for (n, default) in known {
        let v = params.get(*n).copied().unwrap_or(*default);
        if !v.is_finite() {
            return Err(Error::invalid(format!("parameter `{n}` must be finite")));
        }
        out.insert(n.to_string(), v);
    }
    Ok(out)
}

/// Look up a builtin system; missing parameters take their defaults.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<DynamicalSystem> {
    use SystemKind::*;
    let (kind, p, rule) = match name {
        "quadratic_map" => (DiscreteMap, take(params, &[])?, Rule::Quadratic),
        "henon" => {
            let p = take(params, &[("a", 1.4), ("b", 0.3)])?;
            if p["a"] == 0.0 {
                return Err(Error::invalid("henon parameter `a` must be nonzero"));
            }
            let rule = Rule::Henon { a: p["a"], b: p["b"] };
            (DiscreteMap, p, rule)
        }
        "ricker" => {
            let p = take(params, &[("r", 2.8)])?;
            let rule = Rule::Ricker { r: p["r"] };
            (DiscreteMap, p, rule)
        }
        "van_der_pol" => {
            let p = take(params, &[("mu", 1.0)])?;
            let rule = Rule::VanDerPol { mu: p["mu"] };
            (VectorField, p, rule)
        }
        "duffing" => {
            let p = take(params, &[("alpha", -1.0), ("beta", 1.0), ("delta", 0.5)])?;
            if p["beta"] == 0.0 {
                return Err(Error::invalid("duffing parameter `beta` must be nonzero"));
            }
            let rule = Rule::Duffing { alpha: p["alpha"], beta: p["beta"], delta: p["delta"] };
            (VectorField, p, rule)
        }
        "lorenz" => {
            let p = take(params, &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)])?;
            let rule = Rule::Lorenz { sigma: p["sigma"], rho: p["rho"], beta: p["beta"] };
            (VectorField, p, rule)
        }
        other => return Err(Error::UnknownSystem(other.to_string())),
    };
    Ok(DynamicalSystem { name: name.to_string(), kind, params: p, rule })
}

impl DynamicalSystem {
    /// `x -> A x` as a map or `x' = A x` as a field.
    pub fn linear(a: RMat, kind: SystemKind) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::DimensionMismatch("linear system needs a nonempty square matrix".into()));
        }
        Ok(Self { name: "linear".into(), kind, params: BTreeMap::new(), rule: Rule::Linear(a) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        match &self.rule {
            Rule::Ricker { .. } => 1,
            Rule::Lorenz { .. } => 3,
            Rule::Linear(a) => a.nrows(),
            _ => 2,
        }
    }

    /// `f(x)` for maps, `F(x)` for fields.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.rule {
            Rule::Quadratic => {
                let (a, b) = (x[0], x[1]);
                vec![a * a - b * b + a - b, 2.0 * a * b + a + b]
            }
            Rule::Henon { a, b } => vec![x[1] + 1.0 - a * x[0] * x[0], b * x[0]],
            Rule::Ricker { r } => vec![x[0] * (r * (x[0] - 1.0)).exp()],
            Rule::VanDerPol { mu } => vec![x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]],
            Rule::Duffing { alpha, beta, delta } => vec![x[1], -delta * x[1] - alpha * x[0] - beta * x[0].powi(3)],
            Rule::Lorenz { sigma, rho, beta } => vec![
                sigma * (x[1] - x[0]),
                x[0] * (rho - x[2]) - x[1],
                x[0] * x[1] - beta * x[2],
            ],
            Rule::Linear(a) => (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect(),
        }
    }

    /// Closed-form Jacobian at `x`.
    pub fn jacobian(&self, x: &[f64]) -> RMat {
        match &self.rule {
            Rule::Quadratic => faer::mat![[2.0 * x[0] + 1.0, -2.0 * x[1] - 1.0], [2.0 * x[1] + 1.0, 2.0 * x[0] + 1.0]],
            Rule::Henon { a, b } => faer::mat![[-2.0 * a * x[0], 1.0], [*b, 0.0]],
            Rule::Ricker { r } => faer::mat![[(r * (x[0] - 1.0)).exp() * (1.0 + r * x[0])]],
            Rule::VanDerPol { mu } => faer::mat![[0.0, 1.0], [-2.0 * mu * x[0] * x[1] - 1.0, mu * (1.0 - x[0] * x[0])]],
            Rule::Duffing { alpha, beta, delta } => faer::mat![[0.0, 1.0], [-alpha - 3.0 * beta * x[0] * x[0], -delta]],
            Rule::Lorenz { sigma, rho, beta } => faer::mat![
                [-sigma, *sigma, 0.0],
                [rho - x[2], -1.0, -x[0]],
                [x[1], x[0], -beta],
            ],
            Rule::Linear(a) => a.clone(),
        }
    }

    /// Known fixed points (maps) or equilibria (fields).
    pub fn fixed_points(&self) -> Vec<Vec<f64>> {
        match &self.rule {
            Rule::Quadratic => vec![vec![0.0, 0.0], vec![0.0, -1.0]],
            Rule::Henon { a, b } => {
                let disc = (b - 1.0).powi(2) + 4.0 * a;
                if disc < 0.0 {
                    return vec![];
                }
                [-1.0, 1.0]
                    .iter()
                    .map(|s| {
                        let x = (b - 1.0 + s * disc.sqrt()) / (2.0 * a);
                        vec![x, b * x]
                    })
                    .collect()
            }
            Rule::Ricker { .. } => vec![vec![0.0], vec![1.0]],
            Rule::VanDerPol { .. } => vec![vec![0.0, 0.0]],
            Rule::Duffing { alpha, beta, .. } => {
                let mut out = vec![];
                let s = -alpha / beta;
                if s > 0.0 {
                    out.push(vec![-s.sqrt(), 0.0]);
                    out.push(vec![s.sqrt(), 0.0]);
                }
                out.push(vec![0.0, 0.0]);
                out
            }
            Rule::Lorenz { rho, beta, .. } => {
                let mut out = vec![vec![0.0; 3]];
                if *rho > 1.0 {
                    let c = (beta * (rho - 1.0)).sqrt();
                    out.push(vec![c, c, rho - 1.0]);
                    out.push(vec![-c, -c, rho - 1.0]);
                }
                out
            }
            Rule::Linear(a) => vec![vec![0.0; a.nrows()]],
        }
    }

    fn require(&self, kind: SystemKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::invalid(format!("system `{}` is not a {:?}", self.name, kind)))
        }
    }
}

/// One classical RK4 step.
pub fn rk4_step(f: &impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> { (0..d).map(|i| base[i] + s * k[i]).collect() };
    let k1 = f(x);
    let k2 = f(&shift(x, &k1, h / 2.0));
    let k3 = f(&shift(x, &k2, h / 2.0));
    let k4 = f(&shift(x, &k3, h));
    (0..d).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// Integrate `x' = f(x)` for time `t` with fixed steps `dt`; when `dt` does
/// not divide `t` a final shorter step lands exactly on `t`.
pub fn rk4_integrate(f: &impl Fn(&[f64]) -> Vec<f64>, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("step size must be positive, got {dt}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("integration time must be nonnegative, got {t}")));
    }
    let full = (t / dt + 1e-9).floor() as usize;
    let rest = t - full as f64 * dt;
    let mut y = x.to_vec();
    for step in 0..full {
        y = rk4_step(f, &y, dt);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: step + 1, time: (step + 1) as f64 * dt });
        }
    }
    if rest > 1e-12 * dt {
        y = rk4_step(f, &y, rest);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: full + 1, time: t });
        }
    }
    Ok(y)
}

/// RK4 approximation of the flow `phi^t(x)` of a vector-field system.
pub fn rk4_flow(sys: &DynamicalSystem, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    sys.require(SystemKind::VectorField)?;
    rk4_integrate(&|y: &[f64]| sys.eval(y), x, t, dt)
}

/// Named RNG streams so independent call sites never share draws.
pub mod stream {
    pub const SAMPLES: u64 = 0;
    pub const TRAJECTORIES: u64 = 1;
    pub const TEST_POINTS: u64 = 2;
    pub const TRIALS: u64 = 3;
}

/// Uniform draws in `[0, 1)` from ChaCha8 seeded by `seed_from_u64(seed)`
/// on stream `stream`: each draw is `(next_u64 >> 11) * 2^-53`.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `n` points uniform on the box, drawn point by point, axis by axis.
pub fn sample_box(seed: u64, stream: u64, lower: &[f64], upper: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    if lower.is_empty() || lower.len() != upper.len() {
        return Err(Error::DimensionMismatch("box bounds must have equal nonzero length".into()));
    }
    for (k, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("box axis {k} is degenerate: [{lo}, {hi}]")));
        }
    }
    let mut u = UniformStream::new(seed, stream);
    Ok((0..n)
        .map(|_| lower.iter().zip(upper).map(|(lo, hi)| lo + (hi - lo) * u.next_f64()).collect())
        .collect())
}

/// `phi^{T_s}(x_i)` for every input, integrated in parallel.
pub fn flow_images(sys: &DynamicalSystem, xs: &[Vec<f64>], ts: f64, dt: f64) -> Result<Vec<Vec<f64>>> {
    sys.require(SystemKind::VectorField)?;
    xs.par_iter().map(|x| rk4_flow(sys, x, ts, dt)).collect()
}

/// Flow samples `(x_i, phi^{T_s}(x_i))`.
pub fn flow_pairs(sys: &DynamicalSystem, xs: &[Vec<f64>], ts: f64, dt: f64) -> Result<SnapshotData> {
    let ys = flow_images(sys, xs, ts, dt)?;
    SnapshotData::flow(xs.to_vec(), ys, ts)
}

/// Exact map samples `(x_i, f(x_i))`.
pub fn map_pairs(sys: &DynamicalSystem, xs: &[Vec<f64>]) -> Result<SnapshotData> {
    sys.require(SystemKind::DiscreteMap)?;
    SnapshotData::discrete(xs.to_vec(), xs.iter().map(|x| sys.eval(x)).collect())
}

/// Exact velocity samples `(x_i, F(x_i))`.
pub fn velocity_pairs(sys: &DynamicalSystem, xs: &[Vec<f64>]) -> Result<SnapshotData> {
    sys.require(SystemKind::VectorField)?;
    SnapshotData::velocity(xs.to_vec(), xs.iter().map(|x| sys.eval(x)).collect())
}

/// Trajectories sampled at a uniform interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    /// `trajectories[i][j]` is the `j`-th snapshot of trajectory `i`.
    pub trajectories: Vec<Vec<Vec<f64>>>,
    pub dt: f64,
    pub seed: Option<u64>,
}

impl TrajectoryBundle {
    pub fn new(trajectories: Vec<Vec<Vec<f64>>>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("snapshot interval must be positive, got {dt}")));
        }
        let shape = trajectories.first().map(|t| (t.len(), t.first().map_or(0, Vec::len)));
        match shape {
            Some((j, d)) if j > 0 && d > 0 => {
                if trajectories.iter().any(|t| t.len() != j || t.iter().any(|x| x.len() != d)) {
                    return Err(Error::DimensionMismatch("trajectories must share one shape".into()));
                }
            }
            _ => return Err(Error::invalid("empty trajectory bundle")),
        }
        Ok(Self { trajectories, dt, seed: None })
    }

    pub fn snapshots(&self) -> usize {
        self.trajectories[0].len()
    }

    /// Consecutive-snapshot pairs as flow samples with `T_s = dt`.
    pub fn consecutive_pairs(&self) -> Result<SnapshotData> {
        let (mut x, mut y) = (vec![], vec![]);
        for t in &self.trajectories {
            for w in t.windows(2) {
                x.push(w[0].clone());
                y.push(w[1].clone());
            }
        }
        SnapshotData::flow(x, y, self.dt)
    }
}

/// `count` trajectories from uniform initial points, each with `snapshots`
/// states spaced `dt_sample` apart, integrated with RK4 at `dt`.
pub fn simulate_bundle(
    sys: &DynamicalSystem,
    seed: u64,
    lower: &[f64],
    upper: &[f64],
    count: usize,
    snapshots: usize,
    dt_sample: f64,
    dt: f64,
) -> Result<TrajectoryBundle> {
    sys.require(SystemKind::VectorField)?;
    let starts = sample_box(seed, stream::TRAJECTORIES, lower, upper, count)?;
    let trajectories = starts
        .par_iter()
        .map(|x0| {
            let mut out = vec![x0.clone()];
            for _ in 1..snapshots {
                let next = rk4_flow(sys, out.last().unwrap(), dt_sample, dt)?;
                out.push(next);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut b = TrajectoryBundle::new(trajectories, dt_sample)?;
    b.seed = Some(seed);
    Ok(b)
}

/// Weights `c_k` with `sum_k c_k g(k) = g'(at)` for polynomials of degree
/// `< nodes`, nodes at integer offsets `0..nodes`.
pub fn stencil_weights(nodes: usize, at: usize) -> Result<Vec<f64>> {
    let a = Mat::from_fn(nodes, nodes, |p, k| (k as f64 - at as f64).powi(p as i32));
    let mut rhs = RMat::zeros(nodes, 1);
    if nodes > 1 {
        rhs[(1, 0)] = 1.0;
    }
    let sol = a.partial_piv_lu().solve(&rhs);
    let w: Vec<f64> = (0..nodes).map(|k| sol[(k, 0)]).collect();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("stencil system is singular"));
    }
    Ok(w)
}

/// Velocities by order-`q` finite differences along each trajectory.
pub fn fd_velocities(bundle: &TrajectoryBundle, q: usize) -> Result<SnapshotData> {
    let j = bundle.snapshots();
    if q == 0 || j < q + 1 {
        return Err(Error::InsufficientSamples { basis: q + 1, samples: j });
    }
    let nodes = q + 1;
    let stencils: Vec<(usize, Vec<f64>)> = (0..j)
        .map(|idx| {
            let start = idx.saturating_sub(q / 2).min(j - nodes);
            stencil_weights(nodes, idx - start).map(|w| (start, w))
        })
        .collect::<Result<_>>()?;
    let (mut xs, mut ys) = (vec![], vec![]);
    for traj in &bundle.trajectories {
        let d = traj[0].len();
        for (idx, (start, w)) in stencils.iter().enumerate() {
            let v: Vec<f64> = (0..d)
                .map(|c| w.iter().enumerate().map(|(k, wk)| wk * traj[start + k][c]).sum::<f64>() / bundle.dt)
                .collect();
            xs.push(traj[idx].clone());
            ys.push(v);
        }
    }
    SnapshotData::velocity(xs, ys)
}

/// Derivatives `f^{(k)}(0) = e^{-r} k r^{k-1}`, `k = 1..=m`, of the Ricker map.
pub fn ricker_derivatives(r: f64, m: usize) -> Vec<f64> {
    (1..=m).map(|k| (-r).exp() * k as f64 * r.powi(k as i32 - 1)).collect()
}

/// Partial Bell polynomials `B_{n,k}(x_1, ..., x_{n-k+1})` for `n, k <= m`.
pub fn partial_bell(x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; m + 1]; m + 1];
    b[0][0] = 1.0;
    for n in 1..=m {
        for k in 1..=n {
            let mut s = 0.0;
            let mut binom = 1.0; // C(n-1, i-1)
            for i in 1..=(n - k + 1) {
                if i > 1 {
                    binom *= (n - i + 1) as f64 / (i - 1) as f64;
                }
                s += binom * x[i - 1] * b[n - i][k - 1];
            }
            b[n][k] = s;
        }
    }
    b
}

/// Exact `(m+1) x (m+1)` matrix of the Ricker map on monomials at 0: entry
/// `(i, j)` is the coefficient of `x^j` in `f(x)^i`,
/// `i! B_{j,i}(f'(0), f''(0), ...) / j!`.
pub fn ricker_oracle(r: f64, m: usize) -> RMat {
    let der = ricker_derivatives(r, m.max(1));
    let bell = partial_bell(&der, m);
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    Mat::from_fn(m + 1, m + 1, |i, j| if j < i { 0.0 } else { fact(i) * bell[j][i] / fact(j) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(name: &str) -> DynamicalSystem {
        builtin(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn fixed_points_are_fixed() {
        for name in BUILTIN_NAMES {
            let s = sys(name);
            assert!(!s.fixed_points().is_empty());
            for p in s.fixed_points() {
                let v = s.eval(&p);
                for (i, vi) in v.iter().enumerate() {
                    let want = if s.kind() == SystemKind::DiscreteMap { p[i] } else { 0.0 };
                    // relative to the size of the cancelling terms (Lorenz has x*y = 72)
                    let scale = p.iter().fold(1.0f64, |m, c| m.max(c * c));
                    assert!((vi - want).abs() <= 1e-14 * scale, "{name} at {p:?}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn jacobians_match_central_differences() {
        for name in BUILTIN_NAMES {
            let s = sys(name);
            for p in s.fixed_points() {
                let j = s.jacobian(&p);
                let h = 1e-6;
                for c in 0..s.dim() {
                    let mut a = p.clone();
                    let mut b = p.clone();
                    a[c] += h;
                    b[c] -= h;
                    let (fa, fb) = (s.eval(&a), s.eval(&b));
                    for r in 0..s.dim() {
                        let fd = (fa[r] - fb[r]) / (2.0 * h);
                        assert!((fd - j[(r, c)]).abs() < 1e-6 * j[(r, c)].abs().max(1.0), "{name} ({r},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn builtin_examples() {
        let h = sys("henon");
        let (a, b) = (1.4, 0.3);
        let disc: f64 = (b - 1.0) * (b - 1.0) + 4.0 * a;
        let x = (b - 1.0 + disc.sqrt()) / (2.0 * a);
        assert!(h.fixed_points().iter().any(|p| (p[0] - x).abs() < 1e-15 && (p[1] - b * x).abs() < 1e-15));
        let d = sys("duffing");
        assert_eq!(d.fixed_points(), vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]);
        let r = sys("ricker");
        assert_eq!(r.eval(&[0.0]), vec![0.0]);
        assert!((r.jacobian(&[0.0])[(0, 0)] - 0.06081006262521797).abs() < 1e-15);
        assert!(matches!(builtin("nope", &BTreeMap::new()), Err(Error::UnknownSystem(_))));
        let mut bad = BTreeMap::new();
        bad.insert("zeta".to_string(), 1.0);
        assert!(builtin("lorenz", &bad).is_err());
    }

    #[test]
    fn rk4_examples() {
        let zero = DynamicalSystem::linear(RMat::zeros(2, 2), SystemKind::VectorField).unwrap();
        assert_eq!(rk4_flow(&zero, &[1.5, -2.0], 3.0, 0.1).unwrap(), vec![1.5, -2.0]);
        let grow = DynamicalSystem::linear(RMat::identity(1, 1), SystemKind::VectorField).unwrap();
        let e = std::f64::consts::E;
        let y = rk4_flow(&grow, &[1.0], 1.0, 1e-3).unwrap();
        assert!((y[0] - e).abs() < 1e-11);
        let e1 = (rk4_flow(&grow, &[1.0], 1.0, 0.1).unwrap()[0] - e).abs();
        let e2 = (rk4_flow(&grow, &[1.0], 1.0, 0.05).unwrap()[0] - e).abs();
        assert!((e1 / e2 - 16.0).abs() < 1.0, "ratio {}", e1 / e2);
        // partial final step
        let y = rk4_flow(&grow, &[1.0], 0.25, 0.1).unwrap();
        assert!((y[0] - 0.25f64.exp()).abs() < 1e-6);
        assert!(rk4_flow(&sys("henon"), &[0.0, 0.0], 1.0, 0.1).is_err());
    }

    #[test]
    fn non_finite_state_reported() {
        let blow = |x: &[f64]| vec![x[0] * x[0]];
        match rk4_integrate(&blow, &[10.0], 10.0, 0.01) {
            Err(Error::NonFinite { step, .. }) => assert!(step > 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let a = sample_box(7, stream::SAMPLES, &[-1.0, 2.0], &[1.0, 3.0], 500).unwrap();
        let b = sample_box(7, stream::SAMPLES, &[-1.0, 2.0], &[1.0, 3.0], 500).unwrap();
        assert_eq!(a, b);
        let c = sample_box(7, stream::TRAJECTORIES, &[-1.0, 2.0], &[1.0, 3.0], 500).unwrap();
        assert_ne!(a, c);
        assert!(a.iter().all(|p| (-1.0..1.0).contains(&p[0]) && (2.0..3.0).contains(&p[1])));
        let n = 10000;
        let big = sample_box(3, stream::SAMPLES, &[0.0], &[1.0], n).unwrap();
        let mean = big.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let sd = (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd);
        assert!(sample_box(1, 0, &[1.0], &[1.0], 3).is_err());
    }

    #[test]
    fn flow_images_examples() {
        let xs = vec![vec![0.3, -0.2], vec![1.0, 0.5]];
        assert_eq!(flow_images(&sys("lorenz").clone(), &[vec![1.0, 2.0, 3.0]], 0.0, 1e-3).unwrap(), vec![vec![1.0, 2.0, 3.0]]);
        let lin = DynamicalSystem::linear(RMat::identity(2, 2), SystemKind::VectorField).unwrap();
        let data = flow_pairs(&lin, &xs, 0.5, 1e-3).unwrap();
        for (x, y) in data.x().iter().zip(data.y()) {
            for c in 0..2 {
                assert!((y[c] - 0.5f64.exp() * x[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn finite_differences() {
        let dt = 0.1;
        let traj: Vec<Vec<f64>> = (0..6).map(|j| vec![(j as f64 * dt).powi(2)]).collect();
        let b = TrajectoryBundle::new(vec![traj], dt).unwrap();
        let v = fd_velocities(&b, 2).unwrap();
        for (x, y) in v.x().iter().zip(v.y()) {
            let t = x[0].sqrt();
            assert!((y[0] - 2.0 * t).abs() < 1e-12);
        }
        let c = TrajectoryBundle::new(vec![vec![vec![4.0, -1.0]; 5]], 0.01).unwrap();
        let v = fd_velocities(&c, 3).unwrap();
        assert!(v.y().iter().flatten().all(|y| y.abs() < 1e-10));
        assert!(fd_velocities(&c, 5).is_err());
    }

    #[test]
    fn ricker_oracle_examples() {
        let b = ricker_oracle(2.8, 4);
        assert_eq!(b[(0, 0)], 1.0);
        assert!((b[(1, 1)] - 0.06081006262521797).abs() < 1e-15);
        let f1 = (-2.8f64).exp();
        for i in 0..5 {
            assert!((b[(i, i)] - f1.powi(i as i32)).abs() < 1e-15 * f1.powi(i as i32).max(1e-300) + 1e-300);
            for j in 0..i {
                assert_eq!(b[(i, j)], 0.0);
            }
        }
    }
}
