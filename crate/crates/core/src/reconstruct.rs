//! Reconstruction of a map or vector field from data, and prediction with
//! the reconstructed model.
//!
//! The degree-1 rows of an estimate (positions `1..=d` in graded order)
//! describe how the coordinate functions move, which is all that is needed
//! to recover the dynamics.

use faer::Mat;

use crate::error::{Error, Result};
use crate::estimator::{
    generator_from_flow, jet_edmd_discrete, jet_edmd_generator, BranchPolicy, EstimatorConfig, OperatorEstimate,
    SnapshotData, SnapshotKind,
};
use crate::numerics::RMat;
use crate::rkhs::{KernelKind, KernelSpec, ObservableBasis};
use crate::systems::{rk4_step, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    pub pinv_rel_tol: f64,
    pub allow_underdetermined: bool,
    pub allow_rank_deficient: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { pinv_rel_tol: 0.0, allow_underdetermined: false, allow_rank_deficient: false }
    }
}

impl ReconstructOptions {
    fn apply(&self, cfg: EstimatorConfig) -> EstimatorConfig {
        cfg.with_pinv_rel_tol(self.pinv_rel_tol)
            .with_underdetermined(self.allow_underdetermined)
            .with_rank_deficient(self.allow_rank_deficient)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    /// `out_i = sum_s rows[i, s] v_s(x)`.
    Rows(RMat),
    /// `out_i = d/dx_i v(x) . (M v(x))`.
    Quadratic(RMat),
}

/// A map or vector field evaluable anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedMap {
    pub kind: SystemKind,
    basis: ObservableBasis,
    rule: Rule,
    offset: Vec<f64>,
    /// The operator estimate the model was read from.
    pub estimate: OperatorEstimate,
    /// Largest imaginary part discarded when reading real coefficients.
    pub discarded_imag: f64,
}

impl ReconstructedMap {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn order(&self) -> usize {
        self.basis.max_order()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = self.basis.feature_vector(x)?;
        let d = self.dim();
        match &self.rule {
            Rule::Rows(r) => Ok((0..d).map(|i| (0..v.len()).map(|s| r[(i, s)] * v[s]).sum::<f64>() + self.offset[i]).collect()),
            Rule::Quadratic(m) => {
                let w: Vec<f64> = (0..v.len()).map(|a| (0..v.len()).map(|b| m[(a, b)] * v[b]).sum()).collect();
                (0..d)
                    .map(|i| {
                        let dv = self.basis.feature_derivative(i, x)?;
                        Ok(dv.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + self.offset[i])
                    })
                    .collect()
            }
        }
    }
}

fn check_point(p: &[f64], d: usize, what: &str) -> Result<()> {
    if p.len() != d {
        return Err(Error::DimensionMismatch(format!("{what} has length {}, expected {d}", p.len())));
    }
    Ok(())
}

/// Degree-1 rows of `scale * M`, real parts.
fn coordinate_rows(m: &OperatorEstimate, d: usize, scale: f64) -> (RMat, f64) {
    let r = m.size();
    let mut imag = 0.0f64;
    let rows = Mat::from_fn(d, r, |i, s| {
        let z = m.matrix[(i + 1, s)];
        imag = imag.max(z.im.abs());
        scale * z.re
    });
    (rows, imag)
}

fn need_order(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("reconstruction needs m >= 1"));
    }
    Ok(())
}

/// Discrete map from samples `y_i = f(x_i)` and one trusted pair
/// `y0 = f(x0)`.
pub fn reconstruct_discrete(
    sigma: f64,
    m: usize,
    n: usize,
    x0: &[f64],
    y0: &[f64],
    data: &SnapshotData,
    opts: &ReconstructOptions,
) -> Result<ReconstructedMap> {
    need_order(m)?;
    let d = data.dim();
    check_point(x0, d, "x0")?;
    check_point(y0, d, "y0")?;
    if data.kind() != SnapshotKind::DiscreteMap {
        return Err(Error::invalid("map reconstruction needs map samples"));
    }
    // shift so that x0 becomes a fixed point
    let shifted = data.map_outputs(|y| (0..d).map(|i| y[i] - y0[i] + x0[i]).collect())?;
    let kernel = KernelSpec::exponential(sigma, x0.to_vec())?;
    let cfg = opts.apply(EstimatorConfig::new(kernel, x0.to_vec(), m, n)?);
    let est = jet_edmd_discrete(&cfg, &shifted)?;
    let (rows, discarded_imag) = coordinate_rows(&est, d, sigma);
    Ok(ReconstructedMap {
        kind: SystemKind::DiscreteMap,
        basis: cfg.basis(m)?,
        rule: Rule::Rows(rows),
        offset: y0.to_vec(),
        estimate: est,
        discarded_imag,
    })
}

/// Vector field from velocity samples and one trusted pair `y0 = F(x0)`.
pub fn reconstruct_field(
    sigma: f64,
    kind: KernelKind,
    m: usize,
    n: usize,
    x0: &[f64],
    y0: &[f64],
    data: &SnapshotData,
    opts: &ReconstructOptions,
) -> Result<ReconstructedMap> {
    need_order(m)?;
    let d = data.dim();
    check_point(x0, d, "x0")?;
    check_point(y0, d, "y0")?;
    if data.kind() != SnapshotKind::Velocity {
        return Err(Error::invalid("field reconstruction needs velocity samples"));
    }
    let shifted = data.map_outputs(|y| (0..d).map(|i| y[i] - y0[i]).collect())?;
    let kernel = match kind {
        KernelKind::Exponential => KernelSpec::exponential(sigma, x0.to_vec())?,
        KernelKind::Gaussian => KernelSpec::gaussian(sigma)?,
    };
    let cfg = opts.apply(EstimatorConfig::new(kernel, x0.to_vec(), m, n)?);
    let est = jet_edmd_generator(&cfg, &shifted)?;
    let basis = cfg.basis(m)?;
    let (rule, discarded_imag) = match kind {
        KernelKind::Exponential => {
            let (rows, imag) = coordinate_rows(&est, d, sigma);
            (Rule::Rows(rows), imag)
        }
        KernelKind::Gaussian => {
            let g = basis.gram();
            let s2 = sigma * sigma;
            let a = &est.matrix;
            let mut imag = 0.0f64;
            let mat = Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
                imag = imag.max(a[(i, j)].im.abs());
                s2 * a[(i, j)].re / g[i]
            });
            (Rule::Quadratic(mat), imag)
        }
    };
    Ok(ReconstructedMap {
        kind: SystemKind::VectorField,
        basis,
        rule,
        offset: y0.to_vec(),
        estimate: est,
        discarded_imag,
    })
}

/// Vector field from flow samples around a known equilibrium `p`. The
/// constant term is zero unless `y0` is given.
pub fn reconstruct_field_from_flow(
    sigma: f64,
    m: usize,
    n: usize,
    p: &[f64],
    data: &SnapshotData,
    policy: &BranchPolicy,
    y0: Option<&[f64]>,
    opts: &ReconstructOptions,
) -> Result<ReconstructedMap> {
    need_order(m)?;
    let d = data.dim();
    check_point(p, d, "equilibrium")?;
    if let Some(y) = y0 {
        check_point(y, d, "y0")?;
    }
    let kernel = KernelSpec::exponential(sigma, p.to_vec())?;
    let cfg = opts.apply(EstimatorConfig::new(kernel, p.to_vec(), m, n)?);
    let est = generator_from_flow(&cfg, data, policy)?;
    let basis = cfg.basis(m)?;
    // G^{-1} on the degree-1 rows is the identity, kept for clarity
    let g = basis.gram();
    let (mut rows, discarded_imag) = coordinate_rows(&est, d, sigma);
    for i in 0..d {
        for s in 0..rows.ncols() {
            rows[(i, s)] /= g[i + 1];
        }
    }
    Ok(ReconstructedMap {
        kind: SystemKind::VectorField,
        basis,
        rule: Rule::Rows(rows),
        offset: y0.map_or_else(|| vec![0.0; d], <[f64]>::to_vec),
        estimate: est,
        discarded_imag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Steps(usize),
    Time(f64),
}

/// Iterate a map, or integrate a field with fixed-step RK4. The returned
/// sequence starts at `x0`.
pub fn predict_trajectory(model: &ReconstructedMap, x0: &[f64], horizon: Horizon, dt: f64) -> Result<Vec<Vec<f64>>> {
    check_point(x0, model.dim(), "initial point")?;
    let mut out = vec![x0.to_vec()];
    let finite = |x: &[f64], step: usize, time: f64| -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { step, time })
        }
    };
    match model.kind {
        SystemKind::DiscreteMap => {
            let steps = match horizon {
                Horizon::Steps(k) => k,
                Horizon::Time(_) => return Err(Error::invalid("maps take an integer step count")),
            };
            for k in 1..=steps {
                let next = model.eval(out.last().unwrap())?;
                finite(&next, k, k as f64)?;
                out.push(next);
            }
        }
        SystemKind::VectorField => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid(format!("step size must be positive, got {dt}")));
            }
            let (full, rest) = match horizon {
                Horizon::Steps(k) => (k, 0.0),
                Horizon::Time(t) if t >= 0.0 => {
                    let full = (t / dt + 1e-9).floor() as usize;
                    (full, t - full as f64 * dt)
                }
                Horizon::Time(t) => return Err(Error::invalid(format!("horizon must be nonnegative, got {t}"))),
            };
            // the closure cannot return errors; a failed evaluation becomes NaN
            let f = |x: &[f64]| model.eval(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
            for k in 1..=full {
                let next = rk4_step(&f, out.last().unwrap(), dt);
                finite(&next, k, k as f64 * dt)?;
                out.push(next);
            }
            if rest > 1e-12 * dt {
                let next = rk4_step(&f, out.last().unwrap(), rest);
                finite(&next, full + 1, full as f64 * dt + rest)?;
                out.push(next);
            }
        }
    }
    Ok(out)
}

/// `max_x |model(x) - truth(x)|` (Euclidean norm per point) over `points`,
/// with the maximum of `|truth(x)|` for relative reporting.
pub fn sup_error(model: &ReconstructedMap, truth: impl Fn(&[f64]) -> Vec<f64>, points: &[Vec<f64>]) -> Result<(f64, f64)> {
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for x in points {
        let a = model.eval(x)?;
        let b = truth(x);
        err = err.max(a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt());
        scale = scale.max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok((err, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{flow_pairs, DynamicalSystem};

    fn grid1(n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn identity_map_is_recovered() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![-1.0 + 0.07 * i as f64, (0.3 * i as f64).sin()]).collect();
        let data = SnapshotData::discrete(x.clone(), x).unwrap();
        let f = reconstruct_discrete(1.0, 2, 3, &[0.1, 0.2], &[0.1, 0.2], &data, &Default::default()).unwrap();
        for p in [[0.3, -0.4], [-0.8, 0.9], [0.1, 0.2]] {
            let y = f.eval(&p).unwrap();
            assert!((y[0] - p[0]).abs() < 1e-8 && (y[1] - p[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_map_1d() {
        let f = |x: f64| x / 2.0 + x * x / 4.0;
        let x = grid1(100, -1.0, 1.0);
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![f(p[0])]).collect();
        let data = SnapshotData::discrete(x.clone(), y.clone()).unwrap();
        let test = grid1(41, -0.8, 0.8);
        let model = reconstruct_discrete(1.0, 4, 8, &[0.0], &[0.0], &data, &Default::default()).unwrap();
        assert!(model.eval(&[0.0]).unwrap()[0].abs() < 1e-8);
        let (err, _) = sup_error(&model, |p| vec![f(p[0])], &test).unwrap();
        assert!(err < 1e-8, "{err}");
        for (xi, yi) in x.iter().zip(&y) {
            assert!((model.eval(xi).unwrap()[0] - yi[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_field() {
        let x = grid1(10, -1.0, 1.0);
        let data = SnapshotData::velocity(x.clone(), vec![vec![0.0]; 10]).unwrap();
        for kind in [KernelKind::Exponential, KernelKind::Gaussian] {
            let model = reconstruct_field(1.0, kind, 2, 4, &[0.0], &[0.0], &data, &Default::default()).unwrap();
            assert!(model.eval(&[0.37]).unwrap()[0].abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_field_gaussian() {
        let field = |x: f64| -x + x.powi(3) / 10.0;
        let x = grid1(40, -1.0, 1.0);
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![field(p[0])]).collect();
        let data = SnapshotData::velocity(x, y).unwrap();
        let model = reconstruct_field(5.0, KernelKind::Gaussian, 6, 10, &[0.0], &[0.0], &data, &Default::default()).unwrap();
        let (err, _) = sup_error(&model, |p| vec![field(p[0])], &grid1(33, -0.8, 0.8)).unwrap();
        assert!(err < 1e-3, "{err}");
        assert!(model.eval(&[0.0]).unwrap()[0].abs() < 1e-8);
    }

    #[test]
    fn linear_flow() {
        let sys = DynamicalSystem::linear(faer::mat![[-1.0]], SystemKind::VectorField).unwrap();
        let x = grid1(12, -1.0, 1.0);
        let data = flow_pairs(&sys, &x, 0.2, 1e-3).unwrap();
        let model =
            reconstruct_field_from_flow(1.0, 2, 5, &[0.0], &data, &BranchPolicy::Principal, None, &Default::default())
                .unwrap();
        for p in grid1(9, -1.0, 1.0) {
            assert!((model.eval(&p).unwrap()[0] + p[0]).abs() < 1e-7);
        }
    }

    #[test]
    fn prediction_examples() {
        let x = grid1(10, -1.0, 1.0);
        let data = SnapshotData::discrete(x.clone(), x.clone()).unwrap();
        let id = reconstruct_discrete(1.0, 1, 2, &[0.0], &[0.0], &data, &Default::default()).unwrap();
        let traj = predict_trajectory(&id, &[0.4], Horizon::Steps(10), 1.0).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.iter().all(|p| (p[0] - 0.4).abs() < 1e-10));

        let y: Vec<Vec<f64>> = x.clone();
        let vel = SnapshotData::velocity(x, y).unwrap();
        let grow = reconstruct_field(1.0, KernelKind::Exponential, 2, 4, &[0.0], &[0.0], &vel, &Default::default()).unwrap();
        let traj = predict_trajectory(&grow, &[1.0], Horizon::Time(1.0), 1e-3).unwrap();
        assert!((traj.last().unwrap()[0] - std::f64::consts::E).abs() < 1e-9);
    }
}
