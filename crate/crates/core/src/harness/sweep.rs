//! Grid sweeps over (sparsity, architecture, depth, model seed, k, m,
//! method, repeat) on the synthetic benchmark.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ale::{aggregate_profiles, explain, feature_grid, AleMode, AleProfile, AleRequest, Method};
use crate::error::{Error, Result};
use crate::gnn::{evaluate, param_count, train, Arch, GnnModel, InferenceSession, TrainConfig};
use crate::graph::{negative_sample, random_link_split, Graph};
use crate::seed::derive_seed;
use crate::stats::rmse;
use crate::synthgen::{generate_synthetic, ground_truth_ale, SyntheticConfig};

/// Powers of two from 16 to 1024.
pub fn default_sizes() -> Vec<usize> {
    (4..=10).map(|e| 1usize << e).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub ms: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub archs: Vec<Arch>,
    /// Message-passing layers per model.
    pub layer_counts: Vec<usize>,
    /// Hidden width of the reference two-layer model; deeper models get
    /// widths with a similar parameter count.
    pub hidden: usize,
    /// Embedding width of every model.
    pub output_dim: usize,
    pub model_seeds: usize,
    pub repeats: usize,
    pub methods: Vec<AleMode>,
    pub num_bins: usize,
    pub num_nodes: usize,
    pub test_fraction: f64,
    pub train: TrainConfig,
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Write every profile as its own JSON document under `profiles/`.
    pub save_profiles: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ks: default_sizes(),
            ms: default_sizes(),
            sparsities: vec![0.001, 0.01, 0.1],
            archs: vec![Arch::Gcn, Arch::Gat],
            layer_counts: vec![2],
            hidden: 64,
            output_dim: 64,
            model_seeds: 5,
            repeats: 5,
            methods: vec![AleMode::Exact, AleMode::Approximate],
            num_bins: 5,
            num_nodes: 4096,
            test_fraction: 0.2,
            train: TrainConfig::default(),
            base_seed: 0,
            output_dir: None,
            save_profiles: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("ks", self.ks.is_empty()),
            ("ms", self.ms.is_empty()),
            ("sparsities", self.sparsities.is_empty()),
            ("archs", self.archs.is_empty()),
            ("layer_counts", self.layer_counts.is_empty()),
            ("methods", self.methods.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidArgument(format!("sweep grid `{name}` is empty")));
        }
        if self.model_seeds == 0 || self.repeats == 0 {
            return Err(Error::InvalidArgument("model_seeds and repeats must be positive".into()));
        }
        if self.ks.contains(&0) || self.ms.contains(&0) {
            return Err(Error::InvalidArgument("k and m must be positive".into()));
        }
        if self.layer_counts.contains(&0) {
            return Err(Error::InvalidArgument("layer counts must be positive".into()));
        }
        let need = self.ks.iter().max().unwrap() + self.ms.iter().max().unwrap();
        if need > self.num_nodes {
            return Err(Error::Infeasible {
                requested: need,
                available: self.num_nodes,
            });
        }
        for &s in &self.sparsities {
            self.synthetic(s, 0).validate()?;
        }
        Ok(())
    }

    fn synthetic(&self, sparsity: f64, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            num_nodes: self.num_nodes,
            sparsity,
            seed,
            ..Default::default()
        }
    }
}

/// Hidden width giving an `layers`-layer model roughly the parameter count
/// of the two-layer reference `[input, hidden, output]`. All hidden layers
/// share the width; the count is quadratic in it, so the positive root is
/// taken and the better of its floor and ceiling kept.
pub fn matched_width(arch: Arch, input: usize, hidden: usize, output: usize, layers: usize) -> usize {
    if layers <= 1 {
        return output;
    }
    let target = param_count(arch, &[input, hidden, output], false) as f64;
    let dims = |w: usize| {
        let mut d = vec![input];
        d.extend(std::iter::repeat_n(w, layers - 1));
        d.push(output);
        d
    };
    // count(w) = a w^2 + b w + c, recovered from three evaluations
    let f = |w: usize| param_count(arch, &dims(w), false) as f64;
    let (f0, f1, f2) = (f(1), f(2), f(3));
    let a = (f2 - 2.0 * f1 + f0) / 2.0;
    let b = f1 - f0 - 3.0 * a;
    let c = f0 - a - b;
    let root = if a.abs() < 1e-12 {
        (target - c) / b
    } else {
        (-b + (b * b - 4.0 * a * (c - target)).sqrt()) / (2.0 * a)
    };
    let lo = root.floor().max(1.0) as usize;
    let hi = lo + 1;
    if (f(lo) - target).abs() <= (f(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

pub fn model_dims(cfg: &SweepConfig, arch: Arch, input: usize, layers: usize) -> Vec<usize> {
    let w = if layers == 2 {
        cfg.hidden
    } else {
        matched_width(arch, input, cfg.hidden, cfg.output_dim, layers)
    };
    let mut d = vec![input];
    d.extend(std::iter::repeat_n(w, layers - 1));
    d.push(cfg.output_dim);
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub arch: Arch,
    pub layers: usize,
    pub sparsity: f64,
    pub k: usize,
    pub m: usize,
    pub model_seed: u64,
    pub explanation_seed: u64,
    pub rmse_to_ground_truth: f64,
    /// Filled in once every exact run of the model is done.
    pub rmse_to_aggregate: Option<f64>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub arch: Arch,
    pub layers: usize,
    pub hidden: usize,
    pub sparsity: f64,
    pub model_seed: u64,
    /// Derived seed used for initialization and batching.
    pub init_seed: u64,
    pub params: usize,
    pub status: String,
    pub auc_roc: Option<f64>,
    pub f1: Option<f64>,
    pub test_loss: Option<f64>,
    pub train_seconds: f64,
}

/// One explanation with the identifiers needed to group it afterwards.
#[derive(Debug, Clone)]
pub struct ProfileEntry {
    pub arch: Arch,
    pub layers: usize,
    pub sparsity: f64,
    pub model_seed: u64,
    pub repeat: usize,
    pub profile: AleProfile,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub records: Vec<ExperimentRecord>,
    pub models: Vec<ModelRecord>,
    pub profiles: Vec<ProfileEntry>,
}

const GRAPH_STREAM: u64 = 10;
const SPLIT_STREAM: u64 = 11;
const TEST_NEG_STREAM: u64 = 12;
const MODEL_STREAM: u64 = 13;
const EXPLAIN_STREAM: u64 = 14;

fn arch_tag(a: Arch) -> u64 {
    match a {
        Arch::Gcn => 0,
        Arch::Gat => 1,
    }
}

/// A graph with its link split, shared by all models of one sparsity.
pub struct Benchmark {
    pub config: SyntheticConfig,
    pub graph: Graph,
    pub train_graph: Graph,
    pub test_pos: crate::graph::EdgeSet,
    pub test_neg: crate::graph::EdgeSet,
}

pub fn build_benchmark(cfg: &SweepConfig, sparsity_index: usize) -> Result<Benchmark> {
    let s = cfg.sparsities[sparsity_index];
    let i = sparsity_index as u64;
    let syn = cfg.synthetic(s, derive_seed(cfg.base_seed, &[GRAPH_STREAM, i]));
    let graph = generate_synthetic(&syn)?;
    let (train_graph, test_pos) =
        random_link_split(&graph, cfg.test_fraction, derive_seed(cfg.base_seed, &[SPLIT_STREAM, i]))?;
    let test_neg = negative_sample(&graph, test_pos.len(), derive_seed(cfg.base_seed, &[TEST_NEG_STREAM, i]))?;
    Ok(Benchmark {
        config: syn,
        graph,
        train_graph,
        test_pos,
        test_neg,
    })
}

pub fn model_seed(cfg: &SweepConfig, sparsity_index: usize, arch: Arch, layers: usize, seed: u64) -> u64 {
    derive_seed(
        cfg.base_seed,
        &[MODEL_STREAM, sparsity_index as u64, arch_tag(arch), layers as u64, seed],
    )
}

/// Seed of one explanation; exact and approximate runs of the same cell
/// share it so they see the same node subsets.
pub fn explanation_seed(cfg: &SweepConfig, model_seed: u64, k: usize, m: usize, repeat: usize) -> u64 {
    derive_seed(cfg.base_seed, &[EXPLAIN_STREAM, model_seed, k as u64, m as u64, repeat as u64])
}

/// Trains one model and reports its held-out quality. Divergence is
/// returned as a record with status `diverged` and no model.
pub fn train_model(
    cfg: &SweepConfig,
    bench: &Benchmark,
    sparsity_index: usize,
    arch: Arch,
    layers: usize,
    seed: u64,
) -> Result<(Option<GnnModel>, ModelRecord)> {
    let dims = model_dims(cfg, arch, bench.graph.num_features(), layers);
    let ms = model_seed(cfg, sparsity_index, arch, layers, seed);
    let init = GnnModel::new(arch, &dims, false, ms)?;
    let tc = TrainConfig { seed: ms, ..cfg.train.clone() };
    let start = Instant::now();
    let mut record = ModelRecord {
        arch,
        layers,
        hidden: dims[1],
        sparsity: bench.config.sparsity,
        model_seed: seed,
        init_seed: ms,
        params: init.num_params(),
        status: "ok".into(),
        auc_roc: None,
        f1: None,
        test_loss: None,
        train_seconds: 0.0,
    };
    let trained = match train(&init, &bench.train_graph, &tc) {
        Ok((m, _)) => Some(m),
        Err(Error::Diverged { .. }) => {
            record.status = "diverged".into();
            None
        }
        Err(e) => return Err(e),
    };
    record.train_seconds = start.elapsed().as_secs_f64();
    if let Some(m) = &trained {
        let met = evaluate(m, &bench.train_graph, &bench.test_pos, &bench.test_neg)?;
        record.auc_roc = Some(met.auc_roc);
        record.f1 = Some(met.f1);
        record.test_loss = Some(met.loss);
    }
    Ok((trained, record))
}

struct Sinks {
    dir: PathBuf,
    cells: BufWriter<File>,
    save_profiles: bool,
}

impl Sinks {
    fn open(dir: &Path, save_profiles: bool) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join("cells.csv");
        let cells = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let mut cells = BufWriter::new(cells);
        writeln!(
            cells,
            "method,arch,layers,sparsity,k,m,model_seed,explanation_seed,rmse_to_ground_truth,wall_time_seconds"
        )?;
        cells.flush()?;
        Ok(Sinks {
            dir: dir.to_path_buf(),
            cells,
            save_profiles,
        })
    }

    fn cell(&mut self, r: &ExperimentRecord, entry: &ProfileEntry) -> Result<()> {
        writeln!(
            self.cells,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.arch,
            r.layers,
            r.sparsity,
            r.k,
            r.m,
            r.model_seed,
            r.explanation_seed,
            r.rmse_to_ground_truth,
            r.wall_time_seconds
        )?;
        self.cells.flush()?;
        if self.save_profiles {
            let dir = self.dir.join("profiles").join(format!(
                "{}-L{}-s{}-seed{}",
                r.arch, r.layers, r.sparsity, r.model_seed
            ));
            fs::create_dir_all(&dir)?;
            let name = format!("{}-k{}-m{}-r{}.json", r.method, r.k, r.m, entry.repeat);
            entry.profile.save(&dir.join(name))?;
        }
        Ok(())
    }
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

pub fn write_models(path: &Path, models: &[ModelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in models {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Explains one trained model over every (k, m, method, repeat) cell.
/// Records come back without `rmse_to_aggregate`; see [`fill_aggregate_rmse`].
pub fn explain_model(
    cfg: &SweepConfig,
    bench: &Benchmark,
    model: &GnnModel,
    model_rec: &ModelRecord,
    mut on_cell: impl FnMut(&ExperimentRecord, &ProfileEntry) -> Result<()>,
) -> Result<(Vec<ExperimentRecord>, Vec<ProfileEntry>)> {
    let feature = bench.config.signal_feature_index;
    let session = InferenceSession::new(model, &bench.graph)?;
    let probe = AleRequest {
        num_bins: cfg.num_bins,
        ..AleRequest::new(feature, 1, 1, 0, AleMode::Exact)
    };
    let truth = ground_truth_ale(&bench.config, &feature_grid(&bench.graph, &probe)?)?;

    let mut records = Vec::new();
    let mut profiles = Vec::new();
    for &k in &cfg.ks {
        for &m in &cfg.ms {
            for repeat in 0..cfg.repeats {
                let seed = explanation_seed(cfg, model_rec.init_seed, k, m, repeat);
                for &mode in &cfg.methods {
                    let req = AleRequest {
                        num_bins: cfg.num_bins,
                        ..AleRequest::new(feature, m, k, seed, mode)
                    };
                    let start = Instant::now();
                    let profile = explain(&session, &req)?;
                    let wall = start.elapsed().as_secs_f64();
                    let rec = ExperimentRecord {
                        method: mode.method(),
                        arch: model_rec.arch,
                        layers: model_rec.layers,
                        sparsity: model_rec.sparsity,
                        k,
                        m,
                        model_seed: model_rec.model_seed,
                        explanation_seed: seed,
                        rmse_to_ground_truth: rmse(&profile, &truth)?,
                        rmse_to_aggregate: None,
                        wall_time_seconds: wall,
                    };
                    let entry = ProfileEntry {
                        arch: model_rec.arch,
                        layers: model_rec.layers,
                        sparsity: model_rec.sparsity,
                        model_seed: model_rec.model_seed,
                        repeat,
                        profile,
                    };
                    on_cell(&rec, &entry)?;
                    records.push(rec);
                    profiles.push(entry);
                }
            }
        }
    }
    Ok((records, profiles))
}

/// Sets `rmse_to_aggregate` on every record of one model: the baseline is
/// the aggregate of that model's exact profiles only.
pub fn fill_aggregate_rmse(records: &mut [ExperimentRecord], profiles: &[ProfileEntry]) -> Result<()> {
    let exact: Vec<AleProfile> = profiles
        .iter()
        .filter(|e| e.profile.method == Method::Exact)
        .map(|e| e.profile.clone())
        .collect();
    if exact.is_empty() {
        return Ok(());
    }
    let baseline = aggregate_profiles(&exact)?;
    for (r, e) in records.iter_mut().zip(profiles) {
        r.rmse_to_aggregate = Some(rmse(&e.profile, &baseline)?);
    }
    Ok(())
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let mut sinks = match &cfg.output_dir {
        Some(d) => Some(Sinks::open(d, cfg.save_profiles)?),
        None => None,
    };
    let mut out = SweepOutcome::default();
    for si in 0..cfg.sparsities.len() {
        let bench = build_benchmark(cfg, si)?;
        for &arch in &cfg.archs {
            for &layers in &cfg.layer_counts {
                for seed in 0..cfg.model_seeds as u64 {
                    let (model, rec) = train_model(cfg, &bench, si, arch, layers, seed)?;
                    if let Some(model) = model {
                        let (mut records, profiles) = explain_model(cfg, &bench, &model, &rec, |r, e| {
                            sinks.as_mut().map_or(Ok(()), |s| s.cell(r, e))
                        })?;
                        fill_aggregate_rmse(&mut records, &profiles)?;
                        out.records.extend(records);
                        out.profiles.extend(profiles);
                    }
                    out.models.push(rec);
                    if let Some(dir) = &cfg.output_dir {
                        write_models(&dir.join("models.csv"), &out.models)?;
                    }
                }
            }
        }
    }
    if let Some(dir) = &cfg.output_dir {
        write_records(&dir.join("records.csv"), &out.records)?;
    }
    Ok(out)
}

/// Depth study: one (k, m) cell, several depths with matched parameter
/// counts.
pub fn depth_study(cfg: &SweepConfig) -> Result<SweepOutcome> {
    if cfg.layer_counts.iter().any(|l| !(2..=5).contains(l)) {
        return Err(Error::InvalidArgument(format!(
            "depth study supports 2 to 5 layers, got {:?}",
            cfg.layer_counts
        )));
    }
    run_sweep(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_match_parameter_budget() {
        for arch in [Arch::Gcn, Arch::Gat] {
            let reference = param_count(arch, &[6, 64, 64], false) as f64;
            for layers in 2..=5 {
                let w = matched_width(arch, 6, 64, 64, layers);
                let mut d = vec![6];
                d.extend(std::iter::repeat_n(w, layers - 1));
                d.push(64);
                let p = param_count(arch, &d, false) as f64;
                assert!((p / reference - 1.0).abs() <= 0.2, "{arch} L={layers} w={w} p={p}");
            }
            assert_eq!(matched_width(arch, 6, 64, 64, 2), 64);
        }
    }

    #[test]
    fn validation() {
        let cfg = SweepConfig::default();
        cfg.validate().unwrap();
        let bad = SweepConfig { ks: vec![4000], ..cfg.clone() };
        assert!(matches!(bad.validate(), Err(Error::Infeasible { .. })));
        let empty = SweepConfig { ms: vec![], ..cfg };
        assert!(empty.validate().is_err());
    }
}
