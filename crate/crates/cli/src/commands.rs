//! The pipeline behind each subcommand.

use std::path::{Path, PathBuf};

use jetedmd_core::estimator::{
    self, BranchPolicy, EstimatorConfig, FeatureMetric, OperatorEstimate, SnapshotData, SnapshotKind,
};
use jetedmd_core::numerics::{self, principal_log};
use jetedmd_core::reconstruct::{self, Horizon, ReconstructOptions, ReconstructedMap};
use jetedmd_core::rkhs::{KernelKind, KernelSpec};
use jetedmd_core::spectral::{self, AssemblyOptions, FieldSide, GridSpec, SpectrumMode};
use jetedmd_core::systems::{self, stream, DynamicalSystem, SystemKind};
use jetedmd_core::c64;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{BranchChoice, DataMode, ExperimentConfig, KernelChoice, MetricChoice, SideChoice};
use crate::error::{CliError, CliResult};
use crate::io::{self, num, Provenance, SpectrumRow, Table};

/// State shared by one invocation.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub prov: Provenance,
    pub out: PathBuf,
    outputs: Vec<String>,
    results: Map<String, Value>,
}

impl Run {
    pub fn new(cfg: ExperimentConfig, prov: Provenance, out: PathBuf) -> Self {
        Self { cfg, prov, out, outputs: vec![], results: Map::new() }
    }

    fn emit(&mut self, name: &str, table: &Table) -> CliResult<()> {
        table.write(&self.out.join(name), &self.prov)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn record(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    /// Write `<command>.json` and return its contents.
    pub fn finish(mut self, command: &str) -> CliResult<Value> {
        let name = format!("{command}.json");
        self.outputs.push(name.clone());
        let summary = json!({
            "command": command,
            "config_hash": self.prov.config_hash,
            "seed": self.prov.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "outputs": self.outputs,
            "results": self.results,
        });
        io::write_json(&self.out.join(name), &summary)?;
        Ok(summary)
    }

    // ---- inputs ----

    fn system(&self) -> CliResult<Option<DynamicalSystem>> {
        match &self.cfg.system.name {
            Some(name) => systems::builtin(name, &self.cfg.system.params)
                .map(Some)
                .map_err(|e| CliError::config("system.params", e.to_string())),
            None => Ok(None),
        }
    }

    fn need_system(&self, why: &str) -> CliResult<DynamicalSystem> {
        self.system()?.ok_or_else(|| CliError::config("system.name", format!("a builtin system is needed {why}")))
    }

    fn file_data(&self) -> CliResult<Option<SnapshotData>> {
        let Some(path) = &self.cfg.system.data else { return Ok(None) };
        let (x, y) = io::read_data(path)?;
        let data = match self.cfg.data.mode {
            None | Some(DataMode::Map) => SnapshotData::discrete(x, y),
            Some(DataMode::Velocity) => SnapshotData::velocity(x, y),
            Some(DataMode::Flow) => SnapshotData::flow(x, y, self.cfg.data.ts),
            Some(DataMode::FiniteDifference) => {
                return Err(CliError::config("data.mode", "finite differences need a builtin system"));
            }
        };
        data.map(Some).map_err(|e| CliError::parse(path, 1, e.to_string()))
    }

    fn dim(&self) -> CliResult<usize> {
        if let Some(data) = self.file_data()? {
            return Ok(data.dim());
        }
        Ok(self.need_system("to fix the state dimension")?.dim())
    }

    fn base_points(&self) -> CliResult<Vec<Vec<f64>>> {
        let d = self.dim()?;
        let pts = self.cfg.estimator.base_points.clone().unwrap_or_else(|| vec![vec![0.0; d]]);
        if pts.is_empty() || pts.iter().any(|p| p.len() != d) {
            return Err(CliError::config("estimator.base_points", format!("need one or more points of dimension {d}")));
        }
        Ok(pts)
    }

    fn sampling_box(&self, d: usize, centre: Option<&[f64]>) -> CliResult<(Vec<f64>, Vec<f64>)> {
        let s = &self.cfg.sampling;
        if let (Some(r), Some(p)) = (s.local_radius, centre) {
            return Ok((p.iter().map(|v| v - r).collect(), p.iter().map(|v| v + r).collect()));
        }
        let lower = s.lower.clone().unwrap_or_else(|| vec![-1.0; d]);
        let upper = s.upper.clone().unwrap_or_else(|| vec![1.0; d]);
        if lower.len() != d {
            return Err(CliError::config("sampling.lower", format!("expected {d} entries")));
        }
        if upper.len() != d {
            return Err(CliError::config("sampling.upper", format!("expected {d} entries")));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(CliError::config("sampling.upper", "each upper bound must exceed the lower bound"));
        }
        Ok((lower, upper))
    }

    fn mode(&self, sys: &DynamicalSystem) -> DataMode {
        self.cfg.data.mode.unwrap_or(match sys.kind() {
            SystemKind::DiscreteMap => DataMode::Map,
            SystemKind::VectorField => DataMode::Velocity,
        })
    }

    fn simulate(&self, sys: &DynamicalSystem, mode: DataMode, lower: &[f64], upper: &[f64]) -> CliResult<SnapshotData> {
        let (s, dc) = (&self.cfg.sampling, &self.cfg.data);
        let is_map = sys.kind() == SystemKind::DiscreteMap;
        if is_map != (mode == DataMode::Map) {
            return Err(CliError::config("data.mode", format!("mode {mode:?} does not fit system `{}`", sys.name())));
        }
        let points = || systems::sample_box(s.seed, stream::SAMPLES, lower, upper, s.count);
        let data = match mode {
            DataMode::Map => systems::map_pairs(sys, &points()?)?,
            DataMode::Velocity => systems::velocity_pairs(sys, &points()?)?,
            DataMode::Flow => match dc.trajectories {
                Some(k) => {
                    systems::simulate_bundle(sys, s.seed, lower, upper, k, dc.snapshots, dc.ts, dc.dt)?.consecutive_pairs()?
                }
                None => systems::flow_pairs(sys, &points()?, dc.ts, dc.dt)?,
            },
            DataMode::FiniteDifference => {
                let k = dc.trajectories.unwrap_or(s.count);
                let bundle = systems::simulate_bundle(sys, s.seed, lower, upper, k, dc.snapshots, dc.ts, dc.dt)?;
                systems::fd_velocities(&bundle, dc.order)?
            }
        };
        Ok(data)
    }

    /// One dataset per base point when sampling locally, one shared dataset
    /// otherwise.
    fn datasets(&self, mode: Option<DataMode>) -> CliResult<Vec<SnapshotData>> {
        if let Some(data) = self.file_data()? {
            return Ok(vec![data]);
        }
        let sys = self.need_system("to generate data")?;
        let mode = mode.unwrap_or_else(|| self.mode(&sys));
        let d = sys.dim();
        if self.cfg.sampling.local_radius.is_some() {
            self.base_points()?
                .iter()
                .map(|p| {
                    let (lo, hi) = self.sampling_box(d, Some(p))?;
                    self.simulate(&sys, mode, &lo, &hi)
                })
                .collect()
        } else {
            let (lo, hi) = self.sampling_box(d, None)?;
            Ok(vec![self.simulate(&sys, mode, &lo, &hi)?])
        }
    }

    fn kernel(&self, d: usize) -> CliResult<KernelSpec> {
        let k = &self.cfg.kernel;
        let spec = match k.kind {
            KernelChoice::Exponential => {
                let b = k.center.clone().unwrap_or_else(|| vec![0.0; d]);
                if b.len() != d {
                    return Err(CliError::config("kernel.center", format!("expected {d} entries")));
                }
                KernelSpec::exponential(k.sigma, b)
            }
            KernelChoice::Gaussian => KernelSpec::gaussian(k.sigma),
        };
        spec.map_err(|e| CliError::config("kernel", e.to_string()))
    }

    fn estimator_config(&self, p: &[f64], m: usize) -> CliResult<EstimatorConfig> {
        let e = &self.cfg.estimator;
        let metric = match e.feature_metric {
            MetricChoice::Euclidean => FeatureMetric::Euclidean,
            MetricChoice::Rkhs => FeatureMetric::Rkhs,
        };
        Ok(EstimatorConfig::new(self.kernel(p.len())?, p.to_vec(), m, e.n)?
            .with_pinv_rel_tol(e.pinv_rel_tol)
            .with_underdetermined(e.allow_underdetermined)
            .with_rank_deficient(e.allow_rank_deficient)
            .with_feature_metric(metric))
    }

    fn reconstruct_options(&self) -> ReconstructOptions {
        let e = &self.cfg.estimator;
        ReconstructOptions {
            pinv_rel_tol: e.pinv_rel_tol,
            allow_underdetermined: e.allow_underdetermined,
            allow_rank_deficient: e.allow_rank_deficient,
        }
    }

    fn policy(&self, p: &[f64]) -> CliResult<BranchPolicy> {
        Ok(match self.cfg.estimator.branch {
            BranchChoice::Principal => BranchPolicy::Principal,
            BranchChoice::Offsets => BranchPolicy::Offsets(self.cfg.estimator.branch_offsets.clone()),
            BranchChoice::Jacobian => BranchPolicy::Jacobian(self.need_system("for the jacobian branch policy")?.jacobian(p)),
        })
    }

    fn estimate_with(&self, cfg: &EstimatorConfig, data: &SnapshotData) -> CliResult<OperatorEstimate> {
        Ok(match data.kind() {
            SnapshotKind::DiscreteMap => estimator::jet_edmd_discrete(cfg, data)?,
            SnapshotKind::Velocity => estimator::jet_edmd_generator(cfg, data)?,
            SnapshotKind::FlowSample { .. } => estimator::generator_from_flow(cfg, data, &self.policy(&cfg.base_point)?)?,
        })
    }

    fn estimates(&self, sets: &[SnapshotData]) -> CliResult<Vec<OperatorEstimate>> {
        self.base_points()?
            .iter()
            .enumerate()
            .map(|(i, p)| self.estimate_with(&self.estimator_config(p, self.cfg.estimator.m)?, pick(sets, i)))
            .collect()
    }

    // ---- commands ----

    /// Write the snapshot pairs, generated in `mode` (configured mode when
    /// `None`).
    pub fn sample(&mut self, mode: Option<DataMode>) -> CliResult<()> {
        let sets = self.datasets(mode)?;
        let many = sets.len() > 1;
        for (i, data) in sets.iter().enumerate() {
            let name = if many { format!("data_p{i}.csv") } else { "data.csv".to_string() };
            self.emit(&name, &io::data_table(data.x(), data.y()))?;
        }
        let counts: Vec<usize> = sets.iter().map(SnapshotData::len).collect();
        let kind = sets.first().map(|d| kind_name(d.kind())).unwrap_or_default();
        self.record("samples", json!(counts));
        self.record("data_kind", json!(kind));
        Ok(())
    }

    pub fn estimate(&mut self) -> CliResult<()> {
        let sets = self.datasets(None)?;
        let ests = self.estimates(&sets)?;
        let mut info = vec![];
        for (i, e) in ests.iter().enumerate() {
            let name = format!("estimate_p{i}.csv");
            self.emit(&name, &io::matrix_table(&e.matrix))?;
            info.push(json!({
                "base_point": e.config.base_point,
                "file": name,
                "operator": format!("{:?}", e.kind),
                "size": e.size(),
                "samples": e.provenance.samples,
                "rank": e.provenance.rank,
                "feature_cond": finite(e.provenance.feature_cond),
                "branch_offsets": e.provenance.branch_offsets,
                "near_branch_cut": e.provenance.near_branch_cut,
            }));
        }
        self.record("estimates", json!(info));
        Ok(())
    }

    pub fn spectrum(&mut self) -> CliResult<()> {
        let sets = self.datasets(None)?;
        let ests = self.estimates(&sets)?;
        let sys = self.system()?;
        let sc = self.cfg.spectrum.clone();
        let (m, n) = (self.cfg.estimator.m, self.cfg.estimator.n);
        let mut rows: Vec<SpectrumRow> = vec![];
        let mut per_point = vec![];
        for (i, est) in ests.iter().enumerate() {
            let data = pick(&sets, i);
            let p = &est.config.base_point;
            let mut jet = spectral::estimate_spectrum(est)?.values;
            numerics::sort_spectrum(&mut jet);
            let mut sets_here: Vec<(&str, Vec<c64>)> = vec![("jetedmd", jet)];
            if sc.edmd {
                let square = self.estimator_config(p, n)?;
                let mut vals = match data.kind() {
                    SnapshotKind::DiscreteMap => spectral::estimate_spectrum(&estimator::jet_edmd_discrete(&square, data)?)?.values,
                    SnapshotKind::Velocity => spectral::estimate_spectrum(&estimator::jet_edmd_generator(&square, data)?)?.values,
                    SnapshotKind::FlowSample { ts } => {
                        let disc = spectral::estimate_spectrum(&estimator::jet_edmd_discrete(&square, data)?)?.values;
                        disc.iter().map(|&l| principal_log(l) / ts).collect()
                    }
                };
                numerics::sort_spectrum(&mut vals);
                sets_here.push(("edmd", vals));
            }
            if sc.kdmd && (i == 0 || sets.len() > 1) {
                match data.kind() {
                    SnapshotKind::Velocity => log::warn!("kdmd needs map or flow samples; skipped"),
                    kind => {
                        let raw = estimator::kdmd_eigenvalues(&est.config.kernel, data, self.cfg.estimator.pinv_rel_tol)?;
                        let mut vals: Vec<c64> = match kind {
                            SnapshotKind::FlowSample { ts } => raw.iter().map(|&l| principal_log(l) / ts).collect(),
                            _ => raw,
                        };
                        numerics::sort_spectrum(&mut vals);
                        sets_here.push(("kdmd", vals));
                    }
                }
            }
            if sc.theory {
                match &sys {
                    Some(s) => {
                        let mode = match data.kind() {
                            SnapshotKind::DiscreteMap => SpectrumMode::Discrete,
                            _ => SpectrumMode::Generator,
                        };
                        sets_here.push(("theory", spectral::theoretical_spectrum(s.jacobian(p).as_ref(), m, mode)?));
                    }
                    None => log::warn!("no builtin system; theoretical spectrum skipped"),
                }
            }
            let mut distances = Map::new();
            if let Some((_, theory)) = sets_here.iter().find(|(s, _)| *s == "theory") {
                for (src, vals) in sets_here.iter().filter(|(s, _)| *s != "theory") {
                    if !vals.is_empty() {
                        distances.insert(format!("{src}_vs_theory"), json!(numerics::hausdorff(vals, theory)?));
                    }
                }
            }
            let counts: Map<String, Value> = sets_here.iter().map(|(s, v)| (s.to_string(), json!(v.len()))).collect();
            per_point.push(json!({ "base_point": p, "counts": counts, "hausdorff": distances }));
            for (src, vals) in sets_here {
                rows.extend(vals.into_iter().map(|value| SpectrumRow { value, source: src.to_string() }));
            }
        }
        self.emit("spectrum.csv", &io::spectrum_table(&rows))?;
        self.record("points", json!(per_point));
        Ok(())
    }

    pub fn eigenfunctions(&mut self) -> CliResult<()> {
        let sets = self.datasets(None)?;
        let ests = self.estimates(&sets)?;
        let ec = self.cfg.eigenfunctions.clone();
        let fields = spectral::assemble_eigenfunctions(&ests, AssemblyOptions { h_rel_tol: ec.h_rel_tol })?;
        let side = match ec.side {
            SideChoice::Left => FieldSide::Left,
            SideChoice::Right => FieldSide::Right,
        };
        let shown = |f: &spectral::EigenfunctionField| match side {
            FieldSide::Left => f.koopman_eigenvalue(),
            FieldSide::Right => f.eigenvalue,
        };
        let mut chosen: Vec<usize> = if ec.targets.is_empty() {
            (0..fields.len()).collect()
        } else {
            let mut out = vec![];
            for pi in 0..ests.len() {
                for t in &ec.targets {
                    let t = c64::new(t[0], t[1]);
                    let best = (0..fields.len())
                        .filter(|&k| fields[k].point_index == pi)
                        .min_by(|&a, &b| (shown(&fields[a]) - t).norm().total_cmp(&(shown(&fields[b]) - t).norm()));
                    out.extend(best);
                }
            }
            out
        };
        chosen.dedup();
        let d = self.dim()?;
        let grid = self.grid(d, ec.lower.clone(), ec.upper.clone(), ec.counts.clone(), 21, "eigenfunctions")?;
        let nodes = grid.nodes();
        let mut listing = vec![];
        for &k in &chosen {
            let f = &fields[k];
            let mut values = spectral::evaluate_field(f, &grid, side)?;
            if ec.normalize {
                spectral::normalize_max_modulus(&mut values);
            }
            if f.flagged() {
                log::warn!("eigenpair {} at point {} is ill-conditioned (pair cond {:e})", f.index, f.point_index, f.pair_cond);
            }
            let name = format!("eigenfunction_p{}_{}.csv", f.point_index, f.index);
            self.emit(&name, &io::grid_table(&nodes, &values))?;
            let lam = shown(f);
            listing.push(json!({
                "file": name,
                "point_index": f.point_index,
                "index": f.index,
                "eigenvalue": [lam.re, lam.im],
                "pair_cond": finite(f.pair_cond),
                "flagged": f.flagged(),
            }));
        }
        let asm = fields.first().map(|f| f.assembly());
        self.record("side", json!(format!("{side:?}").to_lowercase()));
        self.record("stacked_cond", json!(asm.map(|a| finite(a.stacked_cond))));
        self.record("stacked_rank", json!(asm.map(|a| a.stacked_rank)));
        self.record("biorthogonality", json!(asm.map(|a| a.biorthogonality.clone())));
        self.record("eigenfunctions", json!(listing));
        Ok(())
    }

    fn grid(
        &self,
        d: usize,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
        counts: Option<Vec<usize>>,
        per_axis: usize,
        section: &str,
    ) -> CliResult<GridSpec> {
        let (lo, hi) = self.sampling_box(d, None)?;
        GridSpec::new(lower.unwrap_or(lo), upper.unwrap_or(hi), counts.unwrap_or_else(|| vec![per_axis; d]))
            .map_err(|e| CliError::config(section, e.to_string()))
    }

    fn model(&self) -> CliResult<(ReconstructedMap, Option<DynamicalSystem>)> {
        let sets = self.datasets(None)?;
        let data = &sets[0];
        let sys = self.system()?;
        let (e, k) = (&self.cfg.estimator, &self.cfg.kernel);
        let rc = &self.cfg.reconstruct;
        let x0 = match &rc.x0 {
            Some(x) => x.clone(),
            None => self.base_points()?.remove(0),
        };
        if x0.len() != data.dim() {
            return Err(CliError::config("reconstruct.x0", format!("expected {} entries", data.dim())));
        }
        let y0 = match (&rc.y0, &sys) {
            (Some(y), _) => Some(y.clone()),
            (None, Some(s)) => Some(s.eval(&x0)),
            (None, None) => None,
        };
        if y0.as_ref().is_some_and(|y| y.len() != data.dim()) {
            return Err(CliError::config("reconstruct.y0", format!("expected {} entries", data.dim())));
        }
        let need_y0 = || y0.clone().ok_or_else(|| CliError::config("reconstruct.y0", "required without a builtin system"));
        let opts = self.reconstruct_options();
        let model = match data.kind() {
            SnapshotKind::DiscreteMap => {
                if k.kind != KernelChoice::Exponential {
                    return Err(CliError::config("kernel.kind", "map reconstruction uses the exponential kernel"));
                }
                reconstruct::reconstruct_discrete(k.sigma, e.m, e.n, &x0, &need_y0()?, data, &opts)?
            }
            SnapshotKind::Velocity => {
                let kind = match k.kind {
                    KernelChoice::Exponential => KernelKind::Exponential,
                    KernelChoice::Gaussian => KernelKind::Gaussian,
                };
                reconstruct::reconstruct_field(k.sigma, kind, e.m, e.n, &x0, &need_y0()?, data, &opts)?
            }
            SnapshotKind::FlowSample { .. } => {
                if k.kind != KernelChoice::Exponential {
                    return Err(CliError::config("kernel.kind", "flow reconstruction uses the exponential kernel"));
                }
                let policy = self.policy(&x0)?;
                let y0 = rc.y0.clone();
                reconstruct::reconstruct_field_from_flow(k.sigma, e.m, e.n, &x0, data, &policy, y0.as_deref(), &opts)?
            }
        };
        Ok((model, sys))
    }

    pub fn reconstruct(&mut self) -> CliResult<()> {
        let (model, sys) = self.model()?;
        let d = model.dim();
        let rc = self.cfg.reconstruct.clone();
        let grid = self.grid(d, rc.lower, rc.upper, rc.counts, 11, "reconstruct")?;
        let nodes = grid.nodes();
        let values: Vec<Vec<f64>> = nodes.iter().map(|x| model.eval(x)).collect::<Result<_, _>>()?;
        self.emit("reconstruction.csv", &io::data_table(&nodes, &values))?;
        if let Some(s) = &sys {
            let (err, scale) = reconstruct::sup_error(&model, |x| s.eval(x), &nodes)?;
            self.record("sup_error", json!(err));
            self.record("sup_relative_error", json!(if scale > 0.0 { err / scale } else { err }));
        }
        self.record("discarded_imag", json!(model.discarded_imag));
        self.record("kind", json!(format!("{:?}", model.kind)));
        Ok(())
    }

    pub fn predict(&mut self) -> CliResult<()> {
        let (model, sys) = self.model()?;
        let pc = self.cfg.predict.clone();
        let x0 = pc.x0.clone().ok_or_else(|| CliError::config("predict.x0", "an initial point is required"))?;
        if x0.len() != model.dim() {
            return Err(CliError::config("predict.x0", format!("expected {} entries", model.dim())));
        }
        if !(pc.horizon >= 0.0 && pc.horizon.is_finite()) {
            return Err(CliError::config("predict.horizon", "must be a nonnegative number"));
        }
        let (horizon, step) = match model.kind {
            SystemKind::DiscreteMap => (Horizon::Steps(pc.horizon as usize), 1.0),
            SystemKind::VectorField => (Horizon::Time(pc.horizon), pc.dt),
        };
        let path = reconstruct::predict_trajectory(&model, &x0, horizon, pc.dt)?;
        let truth: Option<Vec<Vec<f64>>> = match (&sys, pc.truth) {
            (Some(s), true) => {
                let mut out = vec![x0.clone()];
                for _ in 1..path.len() {
                    let x = out.last().expect("nonempty");
                    out.push(match model.kind {
                        SystemKind::DiscreteMap => s.eval(x),
                        SystemKind::VectorField => systems::rk4_step(&|y: &[f64]| s.eval(y), x, step),
                    });
                }
                Some(out)
            }
            _ => None,
        };
        let d = model.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        if truth.is_some() {
            header.extend((1..=d).map(|i| format!("truth{i}")));
        }
        let mut table = Table::new(header);
        for (k, x) in path.iter().enumerate() {
            let mut row = vec![num(k as f64 * step)];
            row.extend(x.iter().map(|&v| num(v)));
            if let Some(t) = &truth {
                row.extend(t[k].iter().map(|&v| num(v)));
            }
            table.push(row);
        }
        self.emit("trajectory.csv", &table)?;
        if let Some(t) = &truth {
            let dev = path
                .iter()
                .zip(t)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            self.record("max_deviation", json!(finite(dev)));
        }
        self.record("steps", json!(path.len() - 1));
        Ok(())
    }

    pub fn compare(&mut self, a: Option<PathBuf>, b: Option<PathBuf>) -> CliResult<Value> {
        let cc = self.cfg.compare.clone();
        let a = a.or(cc.a).ok_or_else(|| CliError::config("compare.a", "first spectrum file is required"))?;
        let b = b.or(cc.b).ok_or_else(|| CliError::config("compare.b", "second spectrum file is required"))?;
        let load = |p: &Path, src: &Option<String>| -> CliResult<Vec<c64>> {
            let rows = io::read_spectrum(p)?;
            let vals: Vec<c64> =
                rows.into_iter().filter(|r| src.as_ref().is_none_or(|s| &r.source == s)).map(|r| r.value).collect();
            if vals.is_empty() {
                return Err(CliError::parse(p, 1, "no eigenvalues (after source filter)"));
            }
            Ok(vals)
        };
        let (va, vb) = (load(&a, &cc.a_source)?, load(&b, &cc.b_source)?);
        let h = numerics::hausdorff(&va, &vb)?;
        let pairs = greedy_matching(&va, &vb);
        let mut table = Table::new(["a_re", "a_im", "b_re", "b_im", "distance"]);
        let blank = || vec![String::new(), String::new()];
        for (ia, ib) in &pairs {
            let mut row = ia.map_or_else(blank, |i| vec![num(va[i].re), num(va[i].im)]);
            row.extend(ib.map_or_else(blank, |j| vec![num(vb[j].re), num(vb[j].im)]));
            row.push(match (ia, ib) {
                (Some(i), Some(j)) => num((va[*i] - vb[*j]).norm()),
                _ => String::new(),
            });
            table.push(row);
        }
        self.emit("matching.csv", &table)?;
        let max_matched = pairs
            .iter()
            .filter_map(|(i, j)| Some((va[(*i)?] - vb[(*j)?]).norm()))
            .fold(0.0, f64::max);
        let report = json!({
            "a": a, "b": b,
            "a_count": va.len(), "b_count": vb.len(),
            "hausdorff": h,
            "max_matched_distance": max_matched,
        });
        self.record("comparison", report.clone());
        Ok(report)
    }

    pub fn ricker_study(&mut self) -> CliResult<()> {
        let rc = self.cfg.ricker.clone();
        let seed = self.cfg.sampling.seed;
        if rc.lower >= rc.upper {
            return Err(CliError::config("ricker.upper", "must exceed ricker.lower"));
        }
        if rc.n_min > rc.n_max {
            return Err(CliError::config("ricker.n_min", "must not exceed ricker.n_max"));
        }
        if rc.complexity_m > rc.complexity_n {
            return Err(CliError::config("ricker.complexity_m", "must not exceed ricker.complexity_n"));
        }
        positive_field("ricker.sigma", rc.sigma)?;
        let params = [("r".to_string(), rc.r)].into_iter().collect();
        let sys = systems::builtin("ricker", &params).map_err(|e| CliError::config("ricker.r", e.to_string()))?;
        let sample = |s: u64, k: usize| -> CliResult<SnapshotData> {
            let xs = systems::sample_box(seed, s, &[rc.lower], &[rc.upper], k)?;
            Ok(systems::map_pairs(&sys, &xs)?)
        };
        let error = |data: &SnapshotData, m: usize, n: usize| -> CliResult<f64> {
            let kernel = KernelSpec::exponential(rc.sigma, vec![0.0])?;
            let cfg = EstimatorConfig::new(kernel, vec![0.0], m, n)?.with_rank_deficient(true).with_underdetermined(true);
            let est = estimator::jet_edmd_discrete(&cfg, data)?.real_matrix();
            // v_i o f = sum_j B_ij sigma^(j-i) v_j at the origin
            let b = systems::ricker_oracle(rc.r, m);
            let mut s = 0.0;
            for i in 0..=m {
                for j in 0..=m {
                    let want = b[(i, j)] * rc.sigma.powi(j as i32 - i as i32);
                    s += (est[(i, j)] - want).powi(2);
                }
            }
            Ok(s.sqrt())
        };

        let data = sample(stream::SAMPLES, rc.samples)?;
        let mut table = Table::new(["m", "n", "error", "log_error", "reference_log_rate"]);
        let mut slopes = Map::new();
        for &m in &rc.orders {
            let (mut ns, mut logs) = (vec![], vec![]);
            for n in rc.n_min.max(m)..=rc.n_max {
                let err = error(&data, m, n)?;
                let nf = n as f64;
                let reference = -0.5 * nf * nf.ln() + (m as f64 + 1.0) * nf.ln();
                table.push(vec![m.to_string(), n.to_string(), num(err), num(err.ln()), num(reference)]);
                ns.push(nf);
                logs.push(err.ln());
            }
            if ns.len() > 1 {
                slopes.insert(format!("m{m}"), json!(lsq_slope(&ns, &logs)));
            }
        }
        self.emit("error_vs_n.csv", &table)?;
        let edmd = error(&data, rc.edmd_order, rc.edmd_order)?;

        let (m, n) = (rc.complexity_m, rc.complexity_n);
        let mut table = Table::new(["samples", "trials", "mean_log_error", "std_log_error"]);
        let mut means = vec![];
        for &k in &rc.sizes {
            let logs: Vec<f64> = (0..rc.trials as u64)
                .into_par_iter()
                .map(|t| Ok(error(&sample(stream::TRIALS + 4 * t, k)?, m, n)?.ln()))
                .collect::<CliResult<_>>()?;
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (logs.len().max(2) - 1) as f64;
            table.push(vec![k.to_string(), rc.trials.to_string(), num(mean), num(var.sqrt())]);
            means.push(json!({ "samples": k, "mean_log_error": mean }));
        }
        self.emit("sample_complexity.csv", &table)?;
        self.record("slopes", json!(slopes));
        self.record("edmd_error", json!(edmd));
        self.record("sample_complexity", json!(means));
        Ok(())
    }
}

fn pick(sets: &[SnapshotData], i: usize) -> &SnapshotData {
    if sets.len() == 1 {
        &sets[0]
    } else {
        &sets[i]
    }
}

fn kind_name(k: SnapshotKind) -> &'static str {
    match k {
        SnapshotKind::DiscreteMap => "map",
        SnapshotKind::Velocity => "velocity",
        SnapshotKind::FlowSample { .. } => "flow",
    }
}

/// JSON has no infinity; report it as null.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn positive_field(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(field, "must be positive"))
    }
}

fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Repeatedly pair the closest unmatched elements. Leftovers of the longer
/// list appear with `None` on the other side.
pub fn greedy_matching(a: &[c64], b: &[c64]) -> Vec<(Option<usize>, Option<usize>)> {
    let mut cand: Vec<(f64, usize, usize)> =
        a.iter().enumerate().flat_map(|(i, x)| b.iter().enumerate().map(move |(j, y)| ((x - y).norm(), i, j))).collect();
    cand.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut out = vec![];
    for (_, i, j) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((Some(i), Some(j)));
        }
    }
    out.sort_by_key(|&(i, _)| i);
    out.extend((0..a.len()).filter(|&i| !used_a[i]).map(|i| (Some(i), None)));
    out.extend((0..b.len()).filter(|&j| !used_b[j]).map(|j| (None, Some(j))));
    out
}
