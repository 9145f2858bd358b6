//! Operator estimators: the truncated Perron-Frobenius matrix from map
//! samples, the generator matrix from velocity samples, the generator from
//! flow samples via a matrix logarithm, the untruncated EDMD matrix and the
//! kernel-trick (KDMD) eigenvalues.
//!
//! Matrix convention: row `b` of an estimate holds the coefficients of
//! `v_b o f` (or `A_F v_b`) on the basis `v_a`, with rows and columns in
//! graded order. For `f(p) = p` the exact matrix is upper triangular.

use std::f64::consts::PI;

use faer::{c64, Mat};
use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{self, CMat, RMat};
use crate::rkhs::{KernelSpec, ObservableBasis};
use crate::spectral::{theoretical_spectrum, SpectrumMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotKind {
    /// `y_i = f(x_i)`.
    DiscreteMap,
    /// `y_i = F(x_i)`.
    Velocity,
    /// `y_i = phi^{T_s}(x_i)`.
    FlowSample { ts: f64 },
}

/// Paired samples `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    kind: SnapshotKind,
}

impl SnapshotData {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, kind: SnapshotKind) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("snapshot data needs at least one sample"));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("{} inputs but {} outputs", x.len(), y.len())));
        }
        let d = x[0].len();
        if d == 0 {
            return Err(Error::invalid("sample points must have dimension >= 1"));
        }
        for (i, (a, b)) in x.iter().zip(&y).enumerate() {
            if a.len() != d || b.len() != d {
                return Err(Error::DimensionMismatch(format!("sample {i} does not have dimension {d}")));
            }
            if a.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("sample {i} is not finite")));
            }
        }
        if let SnapshotKind::FlowSample { ts } = kind {
            if !(ts > 0.0 && ts.is_finite()) {
                return Err(Error::invalid(format!("sampling interval must be positive, got {ts}")));
            }
        }
        Ok(Self { x, y, kind })
    }

    pub fn discrete(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(x, y, SnapshotKind::DiscreteMap)
    }

    pub fn velocity(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(x, y, SnapshotKind::Velocity)
    }

    pub fn flow(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, ts: f64) -> Result<Self> {
        Self::new(x, y, SnapshotKind::FlowSample { ts })
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn kind(&self) -> SnapshotKind {
        self.kind
    }

    /// Same samples with every output mapped through `g`.
    pub fn map_outputs(&self, g: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.y.iter().map(|y| g(y)).collect(), self.kind)
    }
}

/// Inner product used when regressing onto the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMetric {
    /// Plain least squares: `C0 = V^Y pinv(V^X)`.
    #[default]
    Euclidean,
    /// Least squares in the RKHS coordinates `G^{-1/2} V`. Agrees with
    /// `Euclidean` when the feature matrix has full row rank, and matches the
    /// kernel-trick estimator when it does not.
    Rkhs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub m: usize,
    pub n: usize,
    pub base_point: Vec<f64>,
    pub kernel: KernelSpec,
    /// Relative singular value cutoff; 0 selects the numerics default.
    pub pinv_rel_tol: f64,
    /// Accept `r_n > N` (the regression is then minimum norm).
    pub allow_underdetermined: bool,
    /// Accept a numerically rank-deficient feature matrix.
    pub allow_rank_deficient: bool,
    pub feature_metric: FeatureMetric,
}

impl EstimatorConfig {
    pub fn new(kernel: KernelSpec, base_point: Vec<f64>, m: usize, n: usize) -> Result<Self> {
        let cfg = Self {
            m,
            n,
            base_point,
            kernel,
            pinv_rel_tol: 0.0,
            allow_underdetermined: false,
            allow_rank_deficient: false,
            feature_metric: FeatureMetric::Euclidean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_pinv_rel_tol(mut self, tol: f64) -> Self {
        self.pinv_rel_tol = tol;
        self
    }

    pub fn with_underdetermined(mut self, allow: bool) -> Self {
        self.allow_underdetermined = allow;
        self
    }

    pub fn with_rank_deficient(mut self, allow: bool) -> Self {
        self.allow_rank_deficient = allow;
        self
    }

    pub fn with_feature_metric(mut self, metric: FeatureMetric) -> Self {
        self.feature_metric = metric;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.n {
            return Err(Error::invalid(format!("m = {} exceeds n = {}", self.m, self.n)));
        }
        if !(self.pinv_rel_tol >= 0.0 && self.pinv_rel_tol.is_finite()) {
            return Err(Error::invalid("pinv_rel_tol must be a nonnegative number"));
        }
        ObservableBasis::new(self.kernel.clone(), self.base_point.clone(), 0).map(|_| ())
    }

    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    /// Basis of order `order` at the configured base point.
    pub fn basis(&self, order: usize) -> Result<ObservableBasis> {
        ObservableBasis::new(self.kernel.clone(), self.base_point.clone(), order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    PerronFrobenius,
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub samples: usize,
    pub data_kind: SnapshotKind,
    /// Numerical rank of the regression feature matrix.
    pub rank: usize,
    /// Ratio of extreme retained singular values of the feature matrix.
    pub feature_cond: f64,
    /// Branch offsets applied by the matrix logarithm, in eigenvalue order.
    pub branch_offsets: Option<Vec<i64>>,
    /// Eigenvalues whose principal logarithm lies within 5% of the cut.
    pub near_branch_cut: Vec<usize>,
}

/// A truncated `r_m x r_m` operator matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEstimate {
    pub matrix: CMat,
    pub kind: OperatorKind,
    pub config: EstimatorConfig,
    pub provenance: Provenance,
}

impl OperatorEstimate {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Real part of the matrix (the imaginary part is zero for map and
    /// velocity estimates).
    pub fn real_matrix(&self) -> RMat {
        numerics::real_part(self.matrix.as_ref())
    }

    /// `G_m^{-1} M G_m`, the representation in the convention where the
    /// Gram matrix weights are moved to the other side. Similar to
    /// [`Self::matrix`], hence with the same spectrum.
    pub fn gram_conjugated(&self) -> Result<CMat> {
        let g = self.config.basis(self.config.m)?.gram();
        let m = &self.matrix;
        Ok(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (g[j] / g[i])))
    }

    /// The leading `r_k x r_k` block for `k <= m`.
    pub fn leading_block(&self, k: usize) -> Result<CMat> {
        let r = crate::multiindex::dimension(self.config.dim(), k)?;
        if k > self.config.m {
            return Err(Error::invalid(format!("block order {k} exceeds m = {}", self.config.m)));
        }
        Ok(self.matrix.get(..r, ..r).to_owned())
    }
}

/// Untruncated regression output `r_m x r_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullEstimate {
    pub matrix: RMat,
    pub rank: usize,
    pub feature_cond: f64,
}

fn check_data(cfg: &EstimatorConfig, data: &SnapshotData, want: &[&str]) -> Result<()> {
    cfg.validate()?;
    if data.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data dimension {} but base point dimension {}",
            data.dim(),
            cfg.dim()
        )));
    }
    let name = match data.kind() {
        SnapshotKind::DiscreteMap => "map",
        SnapshotKind::Velocity => "velocity",
        SnapshotKind::FlowSample { .. } => "flow",
    };
    if !want.contains(&name) {
        return Err(Error::invalid(format!("estimator does not accept {name} data")));
    }
    Ok(())
}

/// `targets * pinv(V_n^X)` under the configured metric.
fn regress(cfg: &EstimatorConfig, targets: RMat, data: &SnapshotData) -> Result<FullEstimate> {
    let bn = cfg.basis(cfg.n)?;
    let rn = bn.len();
    let samples = data.len();
    if rn > samples && !cfg.allow_underdetermined {
        return Err(Error::InsufficientSamples { basis: rn, samples });
    }
    let vx = bn.feature_matrix(data.x())?;
    let (matrix, p) = match cfg.feature_metric {
        FeatureMetric::Euclidean => {
            let p = numerics::pinv(vx.as_ref(), cfg.pinv_rel_tol)?;
            (&targets * &p.matrix, p)
        }
        FeatureMetric::Rkhs => {
            let w: Vec<f64> = bn.gram().iter().map(|g| 1.0 / g.sqrt()).collect();
            let scaled = Mat::from_fn(rn, samples, |i, j| w[i] * vx[(i, j)]);
            let p = numerics::pinv(scaled.as_ref(), cfg.pinv_rel_tol)?;
            let c = &targets * &p.matrix;
            (Mat::from_fn(c.nrows(), rn, |i, j| c[(i, j)] * w[j]), p)
        }
    };
    let full = rn.min(samples);
    if p.rank < full && !cfg.allow_rank_deficient {
        return Err(Error::RankDeficient { rank: p.rank, basis: rn });
    }
    let kept = &p.singular_values[..p.rank];
    let feature_cond = match (kept.first(), kept.last()) {
        (Some(hi), Some(lo)) => hi / lo,
        _ => f64::INFINITY,
    };
    Ok(FullEstimate { matrix, rank: p.rank, feature_cond })
}

fn truncate(cfg: &EstimatorConfig, full: &FullEstimate) -> Result<CMat> {
    let rm = crate::multiindex::dimension(cfg.dim(), cfg.m)?;
    Ok(numerics::to_complex(full.matrix.get(..rm, ..rm)))
}

/// `V_m^Y pinv(V_n^X)`, of size `r_m x r_n`.
pub fn edmd_full(cfg: &EstimatorConfig, data: &SnapshotData) -> Result<FullEstimate> {
    check_data(cfg, data, &["map", "flow"])?;
    let targets = cfg.basis(cfg.m)?.feature_matrix(data.y())?;
    regress(cfg, targets, data)
}

/// Leading `r_m x r_m` block of [`edmd_full`].
pub fn jet_edmd_discrete(cfg: &EstimatorConfig, data: &SnapshotData) -> Result<OperatorEstimate> {
    let full = edmd_full(cfg, data)?;
    Ok(OperatorEstimate {
        matrix: truncate(cfg, &full)?,
        kind: OperatorKind::PerronFrobenius,
        config: cfg.clone(),
        provenance: Provenance {
            samples: data.len(),
            data_kind: data.kind(),
            rank: full.rank,
            feature_cond: full.feature_cond,
            branch_offsets: None,
            near_branch_cut: vec![],
        },
    })
}

/// `W = sum_i y_i d/dx_i v_m(x)` per sample, `r_m x N`.
pub fn generator_targets(basis: &ObservableBasis, data: &SnapshotData) -> Result<RMat> {
    let cols: Vec<Vec<f64>> = data
        .x()
        .iter()
        .zip(data.y())
        .map(|(x, y)| basis.feature_lie_derivative(x, y))
        .collect::<Result<_>>()?;
    Ok(Mat::from_fn(basis.len(), cols.len(), |i, j| cols[j][i]))
}

/// Untruncated generator regression `W pinv(V_n^X)`, `r_m x r_n`.
pub fn generator_full(cfg: &EstimatorConfig, data: &SnapshotData) -> Result<FullEstimate> {
    check_data(cfg, data, &["velocity"])?;
    let targets = generator_targets(&cfg.basis(cfg.m)?, data)?;
    regress(cfg, targets, data)
}

/// Generator matrix from velocity samples.
pub fn jet_edmd_generator(cfg: &EstimatorConfig, data: &SnapshotData) -> Result<OperatorEstimate> {
    let full = generator_full(cfg, data)?;
    Ok(OperatorEstimate {
        matrix: truncate(cfg, &full)?,
        kind: OperatorKind::Generator,
        config: cfg.clone(),
        provenance: Provenance {
            samples: data.len(),
            data_kind: data.kind(),
            rank: full.rank,
            feature_cond: full.feature_cond,
            branch_offsets: None,
            near_branch_cut: vec![],
        },
    })
}

/// How to pick the branch of each eigenvalue logarithm.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchPolicy {
    Principal,
    /// Explicit `2 pi i k` shift per eigenvalue, in sorted eigenvalue order.
    Offsets(Vec<i64>),
    /// Match every logarithm to the nearest `T_s a'mu` where `mu` are the
    /// eigenvalues of this Jacobian at the base point.
    Jacobian(RMat),
}

/// Relative closeness to `pi` that triggers the branch-cut warning.
pub const BRANCH_CUT_MARGIN: f64 = 0.05;

/// Branch offsets matching `log lambda_j + 2 pi i k` to the nearest member of
/// `T_s * targets`.
pub fn branch_hints(values: &[c64], targets: &[c64], ts: f64) -> Vec<i64> {
    values
        .iter()
        .map(|lam| {
            let l = numerics::principal_log(*lam);
            let mut best = (f64::INFINITY, 0i64);
            for t in targets {
                let goal = t * ts;
                let k = ((goal.im - l.im) / (2.0 * PI)).round() as i64;
                let dist = (l + c64::new(0.0, 2.0 * PI * k as f64) - goal).norm();
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            best.1
        })
        .collect()
}

/// `(1/T_s) log C` for a discrete estimate obtained from flow samples.
pub fn generator_from_discrete(c_hat: &OperatorEstimate, ts: f64, policy: &BranchPolicy) -> Result<OperatorEstimate> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::invalid(format!("sampling interval must be positive, got {ts}")));
    }
    let sys = numerics::eig(c_hat.matrix.as_ref())?;
    let near: Vec<usize> = sys
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| numerics::principal_log(**v).im.abs() > (1.0 - BRANCH_CUT_MARGIN) * PI)
        .map(|(i, _)| i)
        .collect();
    if !near.is_empty() {
        warn!(
            "{} eigenvalue logarithm(s) lie within {}% of the branch cut; the generator spectrum may be off by 2*pi/T_s",
            near.len(),
            BRANCH_CUT_MARGIN * 100.0
        );
    }
    let offsets = match policy {
        BranchPolicy::Principal => None,
        BranchPolicy::Offsets(o) => Some(o.clone()),
        BranchPolicy::Jacobian(j) => {
            let theory = theoretical_spectrum(j.as_ref(), c_hat.config.m, SpectrumMode::Generator)?;
            Some(branch_hints(&sys.values, &theory, ts))
        }
    };
    let log = numerics::log_from_eigensystem(&sys, c_hat.matrix.norm_l2(), offsets.as_deref())?;
    let matrix = Mat::from_fn(log.nrows(), log.ncols(), |i, j| log[(i, j)] / ts);
    let mut provenance = c_hat.provenance.clone();
    provenance.branch_offsets = offsets;
    provenance.near_branch_cut = near;
    Ok(OperatorEstimate { matrix, kind: OperatorKind::Generator, config: c_hat.config.clone(), provenance })
}

/// Generator estimate from flow samples `y_i = phi^{T_s}(x_i)`.
pub fn generator_from_flow(cfg: &EstimatorConfig, data: &SnapshotData, policy: &BranchPolicy) -> Result<OperatorEstimate> {
    let ts = match data.kind() {
        SnapshotKind::FlowSample { ts } => ts,
        _ => return Err(Error::invalid("generator_from_flow needs flow samples")),
    };
    let c_hat = jet_edmd_discrete(cfg, data)?;
    generator_from_discrete(&c_hat, ts, policy)
}

/// Eigenvalues of `pinv(K_XX) K_YX` with `(K_XX)_ij = k(x_i, x_j)` and
/// `(K_YX)_ij = k(y_i, x_j)`.
pub fn kdmd_eigenvalues(kernel: &KernelSpec, data: &SnapshotData, rel_tol: f64) -> Result<Vec<c64>> {
    let n = data.len();
    let (x, y) = (data.x(), data.y());
    let mut kxx = RMat::zeros(n, n);
    let mut kyx = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            kxx[(i, j)] = kernel.value(&x[i], &x[j])?;
            kyx[(i, j)] = kernel.value(&y[i], &x[j])?;
        }
    }
    let p = numerics::pinv(kxx.as_ref(), rel_tol)?;
    if p.rank < n {
        warn!("kernel Gram matrix has numerical rank {} < {n}; using the truncated pseudo-inverse", p.rank);
    }
    let m = &p.matrix * &kyx;
    numerics::eigenvalues_real(m.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::MatRef;

    fn exp_cfg(m: usize, n: usize) -> EstimatorConfig {
        EstimatorConfig::new(KernelSpec::exponential(1.0, vec![0.0]).unwrap(), vec![0.0], m, n).unwrap()
    }

    fn line(n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect()
    }

    fn assert_diag(m: MatRef<'_, c64>, want: &[f64], tol: f64) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let w = if i == j { want[i] } else { 0.0 };
                assert!((m[(i, j)] - c64::new(w, 0.0)).norm() < tol, "({i},{j}) = {:?}, want {w}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn linear_map_examples() {
        let x = line(5, -0.5, 0.5);
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![2.0 * p[0]]).collect();
        let data = SnapshotData::discrete(x.clone(), y.clone()).unwrap();
        let full = edmd_full(&exp_cfg(2, 2), &data).unwrap();
        assert_diag(numerics::to_complex(full.matrix.as_ref()).as_ref(), &[1.0, 2.0, 4.0], 1e-8);
        let x = line(12, -0.5, 0.5);
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![2.0 * p[0]]).collect();
        let data = SnapshotData::discrete(x, y).unwrap();
        let est = jet_edmd_discrete(&exp_cfg(2, 6), &data).unwrap();
        assert_diag(est.matrix.as_ref(), &[1.0, 2.0, 4.0], 1e-8);
    }

    #[test]
    fn identity_map() {
        let x = line(8, -1.0, 1.0);
        let data = SnapshotData::discrete(x.clone(), x).unwrap();
        let full = edmd_full(&exp_cfg(3, 5), &data).unwrap();
        assert_diag(numerics::to_complex(full.matrix.get(..4, ..4)).as_ref(), &[1.0; 4], 1e-10);
        let sq = jet_edmd_discrete(&exp_cfg(5, 5), &data).unwrap();
        let f = edmd_full(&exp_cfg(5, 5), &data).unwrap();
        assert_eq!(sq.real_matrix(), f.matrix);
    }

    #[test]
    fn generator_examples() {
        let x = line(9, -1.0, 1.0);
        let zero = SnapshotData::velocity(x.clone(), vec![vec![0.0]; 9]).unwrap();
        let est = jet_edmd_generator(&exp_cfg(2, 4), &zero).unwrap();
        assert_diag(est.matrix.as_ref(), &[0.0; 3], 1e-14);
        let a = -0.7;
        let v: Vec<Vec<f64>> = x.iter().map(|p| vec![a * p[0]]).collect();
        let data = SnapshotData::velocity(x, v).unwrap();
        let est = jet_edmd_generator(&exp_cfg(2, 4), &data).unwrap();
        assert_diag(est.matrix.as_ref(), &[0.0, a, 2.0 * a], 1e-8);
    }

    #[test]
    fn flow_example() {
        let x = line(10, -1.0, 1.0);
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![(-0.1f64).exp() * p[0]]).collect();
        let data = SnapshotData::flow(x, y, 0.1).unwrap();
        let est = generator_from_flow(&exp_cfg(2, 5), &data, &BranchPolicy::Principal).unwrap();
        assert_diag(est.matrix.as_ref(), &[0.0, -1.0, -2.0], 1e-8);
    }

    #[test]
    fn errors() {
        let x = line(3, -1.0, 1.0);
        let data = SnapshotData::discrete(x.clone(), x.clone()).unwrap();
        assert!(matches!(edmd_full(&exp_cfg(2, 4), &data), Err(Error::InsufficientSamples { basis: 5, samples: 3 })));
        let dup = SnapshotData::discrete(vec![vec![0.1]; 4], vec![vec![0.1]; 4]).unwrap();
        assert!(matches!(edmd_full(&exp_cfg(1, 2), &dup), Err(Error::RankDeficient { rank: 1, basis: 3 })));
        assert!(EstimatorConfig::new(KernelSpec::gaussian(1.0).unwrap(), vec![0.0], 3, 2).is_err());
        assert!(jet_edmd_generator(&exp_cfg(1, 1), &data).is_err());
        assert!(SnapshotData::flow(x.clone(), x, 0.0).is_err());
    }

    #[test]
    fn kdmd_small_cases() {
        let k = KernelSpec::exponential(1.0, vec![0.0]).unwrap();
        let one = SnapshotData::discrete(vec![vec![0.3]], vec![vec![0.3]]).unwrap();
        let v = kdmd_eigenvalues(&k, &one, 0.0).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0] - c64::new(1.0, 0.0)).norm() < 1e-14);
        let x = line(4, -0.3, 0.3);
        let id = SnapshotData::discrete(x.clone(), x).unwrap();
        for v in kdmd_eigenvalues(&k, &id, 0.0).unwrap() {
            assert!((v - c64::new(1.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn branch_hints_pick_nearest() {
        let ts = 1.0;
        let target = [c64::new(0.0, 4.0), c64::new(0.0, -4.0)];
        let vals: Vec<c64> = target.iter().map(|t| (t * ts).exp()).collect();
        assert_eq!(branch_hints(&vals, &target, ts), vec![1, -1]);
    }
}
