//! Experiment configuration. Every field has a default so an empty file is a
//! valid (quadratic map) experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: PathBuf,
    pub system: SystemConfig,
    pub kernel: KernelConfig,
    pub estimator: EstimatorSection,
    pub sampling: SamplingConfig,
    pub data: DataConfig,
    pub spectrum: SpectrumSection,
    pub eigenfunctions: EigenfunctionSection,
    pub reconstruct: ReconstructSection,
    pub predict: PredictSection,
    pub compare: CompareSection,
    pub ricker: RickerSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("out"),
            system: SystemConfig::default(),
            kernel: KernelConfig::default(),
            estimator: EstimatorSection::default(),
            sampling: SamplingConfig::default(),
            data: DataConfig::default(),
            spectrum: SpectrumSection::default(),
            eigenfunctions: EigenfunctionSection::default(),
            reconstruct: ReconstructSection::default(),
            predict: PredictSection::default(),
            compare: CompareSection::default(),
            ricker: RickerSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Builtin system; also used for theoretical spectra and ground truth
    /// when `data` is given.
    pub name: Option<String>,
    pub params: BTreeMap<String, f64>,
    /// External snapshot CSV with header `x1..xd,y1..yd`.
    pub data: Option<PathBuf>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { name: Some("quadratic_map".into()), params: BTreeMap::new(), data: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Exponential,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelChoice,
    pub sigma: f64,
    /// Center `b` of the exponential kernel; the origin when absent.
    pub center: Option<Vec<f64>>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { kind: KernelChoice::Exponential, sigma: 1.0, center: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Euclidean,
    Rkhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchChoice {
    Principal,
    Jacobian,
    Offsets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub m: usize,
    pub n: usize,
    /// Fixed points to expand around; the origin when absent.
    pub base_points: Option<Vec<Vec<f64>>>,
    pub pinv_rel_tol: f64,
    pub allow_underdetermined: bool,
    pub allow_rank_deficient: bool,
    pub feature_metric: MetricChoice,
    pub branch: BranchChoice,
    pub branch_offsets: Vec<i64>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            m: 5,
            n: 10,
            base_points: None,
            pinv_rel_tol: 0.0,
            allow_underdetermined: false,
            allow_rank_deficient: false,
            feature_metric: MetricChoice::Euclidean,
            branch: BranchChoice::Principal,
            branch_offsets: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub seed: u64,
    /// Sampling box; `[-1, 1]^d` when absent.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Sample a separate box `p ± local_radius` around every base point.
    pub local_radius: Option<f64>,
    pub count: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { seed: 0, lower: None, upper: None, local_radius: None, count: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    Map,
    Velocity,
    Flow,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Exact map pairs for maps and exact velocities for fields when absent.
    pub mode: Option<DataMode>,
    /// Sampling interval of flow data and snapshot spacing of trajectories.
    pub ts: f64,
    /// RK4 step.
    pub dt: f64,
    /// Simulate this many trajectories instead of independent box samples.
    pub trajectories: Option<usize>,
    pub snapshots: usize,
    /// Finite-difference order.
    pub order: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { mode: None, ts: 0.1, dt: jetedmd_core::systems::DEFAULT_DT, trajectories: None, snapshots: 10, order: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Also report the untruncated `m = n` spectrum.
    pub edmd: bool,
    pub kdmd: bool,
    pub theory: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { edmd: true, kdmd: false, theory: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideChoice {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenfunctionSection {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub counts: Option<Vec<usize>>,
    pub side: SideChoice,
    pub h_rel_tol: f64,
    /// Only export the eigenfunction closest to each `[re, im]` target, per
    /// fixed point. All eigenfunctions when empty.
    pub targets: Vec<[f64; 2]>,
    pub normalize: bool,
}

impl Default for EigenfunctionSection {
    fn default() -> Self {
        Self {
            lower: None,
            upper: None,
            counts: None,
            side: SideChoice::Left,
            h_rel_tol: 0.0,
            targets: vec![],
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    /// Trusted point; the first base point when absent.
    pub x0: Option<Vec<f64>>,
    /// Trusted image or velocity at `x0`; taken from the builtin system when
    /// absent.
    pub y0: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub counts: Option<Vec<usize>>,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { x0: None, y0: None, lower: None, upper: None, counts: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub x0: Option<Vec<f64>>,
    /// Time span for fields, number of steps for maps.
    pub horizon: f64,
    pub dt: f64,
    /// Also integrate the builtin system for comparison.
    pub truth: bool,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { x0: None, horizon: 1.0, dt: 1e-3, truth: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    /// Keep only rows with this `source` value.
    pub a_source: Option<String>,
    pub b_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RickerSection {
    pub r: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    pub orders: Vec<usize>,
    pub n_min: usize,
    pub n_max: usize,
    pub edmd_order: usize,
    pub complexity_m: usize,
    pub complexity_n: usize,
    pub sizes: Vec<usize>,
    pub trials: usize,
}

impl Default for RickerSection {
    fn default() -> Self {
        Self {
            r: 2.8,
            sigma: 1.0,
            lower: -0.5,
            upper: 0.5,
            samples: 1000,
            orders: vec![4, 6],
            n_min: 6,
            n_max: 35,
            edmd_order: 5,
            complexity_m: 6,
            complexity_n: 33,
            sizes: vec![34, 40, 50, 60, 80, 100, 125, 150, 175, 200],
            trials: 200,
        }
    }
}

impl ExperimentConfig {
    /// Parse a TOML file. Paths stay as written until [`Self::resolve_paths`].
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Make relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let cfg = self;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output);
        for p in [&mut cfg.system.data, &mut cfg.compare.a, &mut cfg.compare.b].into_iter().flatten() {
            resolve(p);
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = field_from_message(&message).unwrap_or_else(|| "<document>".into());
            CliError::config(field, message)
        })
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        let e = &self.estimator;
        if e.m > e.n {
            return Err(CliError::config("estimator.m", format!("m = {} exceeds n = {}", e.m, e.n)));
        }
        positive("kernel.sigma", self.kernel.sigma)?;
        positive("data.ts", self.data.ts)?;
        positive("data.dt", self.data.dt)?;
        positive("predict.dt", self.predict.dt)?;
        if !(e.pinv_rel_tol >= 0.0 && e.pinv_rel_tol.is_finite()) {
            return Err(CliError::config("estimator.pinv_rel_tol", "must be nonnegative"));
        }
        if self.system.name.is_none() && self.system.data.is_none() {
            return Err(CliError::config("system", "give a builtin `name` or a `data` file"));
        }
        if let Some(p) = &self.system.data {
            if !p.is_file() {
                return Err(CliError::config("system.data", format!("{} does not exist", p.display())));
            }
        }
        if let Some(name) = &self.system.name {
            if !jetedmd_core::systems::BUILTIN_NAMES.contains(&name.as_str()) {
                return Err(CliError::config("system.name", format!("unknown system `{name}`")));
            }
        }
        if e.branch == BranchChoice::Offsets && e.branch_offsets.is_empty() {
            return Err(CliError::config("estimator.branch_offsets", "required when branch = \"offsets\""));
        }
        if let Some(r) = self.sampling.local_radius {
            positive("sampling.local_radius", r)?;
        }
        if self.sampling.count == 0 {
            return Err(CliError::config("sampling.count", "must be positive"));
        }
        if self.data.mode == Some(DataMode::FiniteDifference) && self.data.snapshots < self.data.order + 1 {
            return Err(CliError::config(
                "data.snapshots",
                format!("finite differences of order {} need at least {} snapshots", self.data.order, self.data.order + 1),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be positive, got {v}")))
    }
}

/// Pull a field name out of a serde message such as "unknown field `foo`".
fn field_from_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}
