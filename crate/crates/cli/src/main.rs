use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use alegnn::ale::{
    aggregate_profiles, center_profile, explain, AleMode, AleProfile, AleRequest, BinStrategy,
    Normalization,
};
use alegnn::gnn::{evaluate, load_checkpoint, save_checkpoint, train, Arch, GnnModel, InferenceSession, TrainConfig};
use alegnn::graph::{negative_sample, random_link_split};
use alegnn::harness::{
    depth_study, export_dataset, load_dataset, render_plot, run_sweep, sweep::read_records,
    sweep_figures, write_figures, PlotKind, PlotStyle, Point, Series, SweepConfig, SweepOutcome,
};
use alegnn::seed::derive_seed;
use alegnn::stats::{chi2_curve_test, permutation_test, rmse_test, CurveGroup, TestMethod};
use alegnn::synthgen::{generate_synthetic, SyntheticConfig};
use alegnn::Graph;

const WORKERS_ENV: &str = "ALEGNN_WORKERS";

#[derive(Parser)]
#[command(name = "alegnn", version, about = "ALE explanations for GNN link prediction")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark graph.
    SynthGen(SynthArgs),
    /// Train a link-prediction model on a dataset.
    Train(TrainArgs),
    /// Explain one feature of a trained model.
    Explain(ExplainArgs),
    /// Combine profiles as one large run.
    Aggregate(AggregateArgs),
    /// Compare two groups of profiles.
    Compare(CompareArgs),
    /// Run the (k, m) sweep on the synthetic benchmark.
    Sweep(SweepArgs),
    /// Sweep models of several depths with matched parameter counts.
    DepthStudy(DepthArgs),
    /// Render figures from sweep records or profiles.
    Plot(PlotArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Node table: `id,<features...>`.
    #[arg(long)]
    nodes: PathBuf,
    /// Edge table: `source,target`.
    #[arg(long)]
    edges: PathBuf,
}

impl DatasetArgs {
    fn load(&self) -> Result<Graph> {
        Ok(load_dataset(&self.nodes, &self.edges)?)
    }

    fn paths(&self) -> [&Path; 2] {
        [&self.nodes, &self.edges]
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4096)]
    num_nodes: usize,
    #[arg(long, default_value_t = 0.01)]
    sparsity: f64,
    #[arg(long, default_value_t = 5)]
    noise_features: usize,
    /// Directory receiving nodes.csv and edges.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "gcn")]
    arch: Arch,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 64)]
    output_dim: usize,
    #[arg(long)]
    norm: bool,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "exact")]
    mode: AleMode,
    /// Feature index or column name.
    #[arg(long)]
    feature: String,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long, default_value_t = 256)]
    k: usize,
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, default_value = "quantile")]
    strategy: BinStrategy,
    /// Divide each bin by the total m instead of its own node count.
    #[arg(long)]
    global_normalization: bool,
    #[arg(long)]
    center: bool,
    /// Profile path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(required = true)]
    profiles: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "a", required = true, num_args = 1..)]
    group_a: Vec<PathBuf>,
    #[arg(long = "b", required = true, num_args = 1..)]
    group_b: Vec<PathBuf>,
    #[arg(long, default_value = "rmse")]
    test: TestMethod,
    #[arg(long, default_value_t = 10_000)]
    n_perm: usize,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Comma-separated m values.
    #[arg(long, value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    sparsities: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    archs: Option<Vec<Arch>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<AleMode>>,
    #[arg(long)]
    model_seeds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    num_nodes: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// Skip writing one JSON document per profile.
    #[arg(long)]
    no_profiles: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
}

#[derive(Args)]
struct DepthArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
    layers: Vec<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep records; renders the standard figure set.
    #[arg(long, conflicts_with = "profiles")]
    records: Option<PathBuf>,
    /// Profiles drawn as curves in one figure.
    #[arg(long, num_args = 1..)]
    profiles: Vec<PathBuf>,
    #[arg(long)]
    title: Option<String>,
    /// Output directory for records, file for profiles.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_workers().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<alegnn::Error>().map_or("runtime", |e| e.kind());
            let message = format!("{e:#}").replace('"', "'");
            eprintln!("error: kind={kind} message=\"{message}\"");
            ExitCode::FAILURE
        }
    }
}

fn configure_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Refuses to write over any input file.
fn check_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let target = std::path::absolute(out)?;
    for input in inputs {
        let input = std::fs::canonicalize(input).unwrap_or_else(|_| input.to_path_buf());
        if out.exists() && std::fs::canonicalize(out)? == input || target == input {
            bail!("refusing to overwrite input file {}", input.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::SynthGen(a) => synth_gen(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Explain(a) => explain_cmd(a, seed),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::Compare(a) => compare_cmd(a, seed),
        Command::Sweep(a) => {
            let mut cfg = sweep_config(&a.grid, seed)?;
            if let Some(l) = a.layers {
                cfg.layer_counts = l;
            }
            finish_sweep(run_sweep(&cfg)?, &a.grid.out_dir)
        }
        Command::DepthStudy(a) => {
            let mut cfg = sweep_config(&a.grid, seed)?;
            cfg.layer_counts = a.layers;
            if a.grid.archs.is_none() {
                cfg.archs = vec![Arch::Gcn];
            }
            if a.grid.sparsities.is_none() {
                cfg.sparsities = vec![0.01];
            }
            if a.grid.ks.is_none() {
                cfg.ks = vec![256];
            }
            if a.grid.ms.is_none() {
                cfg.ms = vec![256];
            }
            finish_sweep(depth_study(&cfg)?, &a.grid.out_dir)
        }
        Command::Plot(a) => plot_cmd(a),
    }
}

fn synth_gen(a: SynthArgs, seed: u64) -> Result<()> {
    let cfg = SyntheticConfig {
        num_nodes: a.num_nodes,
        num_noise_features: a.noise_features,
        signal_feature_index: a.noise_features,
        sparsity: a.sparsity,
        seed,
    };
    let g = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    export_dataset(&g, &a.out_dir.join("nodes.csv"), &a.out_dir.join("edges.csv"))?;
    println!(
        "nodes={} edges={} features={} signal_feature={}",
        g.num_nodes(),
        g.num_edges(),
        g.num_features(),
        g.feature_names()[cfg.signal_feature_index]
    );
    Ok(())
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<()> {
    check_output(&a.out, &a.data.paths())?;
    let graph = a.data.load()?;
    let (train_graph, test_pos) = random_link_split(&graph, a.test_fraction, derive_seed(seed, &[1]))?;
    let test_neg = negative_sample(&graph, test_pos.len(), derive_seed(seed, &[2]))?;
    let mut dims = vec![graph.num_features()];
    dims.extend(std::iter::repeat_n(a.hidden, a.layers.saturating_sub(1)));
    dims.push(a.output_dim);
    let init = GnnModel::new(a.arch, &dims, a.norm, derive_seed(seed, &[3]))?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: derive_seed(seed, &[4]),
        ..TrainConfig::default()
    };
    let (model, losses) = train(&init, &train_graph, &cfg)?;
    let met = evaluate(&model, &train_graph, &test_pos, &test_neg)?;
    save_checkpoint(&model, &a.out)?;
    println!(
        "arch={} params={} final_train_loss={} auc={:.4} f1={:.4} test_loss={:.4} fingerprint={}",
        a.arch,
        model.num_params(),
        losses.last().map_or("-".into(), |l| format!("{l:.4}")),
        met.auc_roc,
        met.f1,
        met.loss,
        model.fingerprint()
    );
    Ok(())
}

fn feature_index(graph: &Graph, spec: &str) -> Result<usize> {
    if let Some(i) = graph.feature_names().iter().position(|n| n == spec) {
        return Ok(i);
    }
    match spec.parse::<usize>() {
        Ok(i) if i < graph.num_features() => Ok(i),
        _ => Err(alegnn::Error::InvalidArgument(format!(
            "unknown feature {spec:?}; have {}",
            graph.feature_names().join(", ")
        ))
        .into()),
    }
}

fn emit_profile(p: &AleProfile, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => p.save(path)?,
        None => println!("{}", p.to_json()?),
    }
    Ok(())
}

fn explain_cmd(a: ExplainArgs, seed: u64) -> Result<()> {
    if let Some(out) = &a.out {
        let [n, e] = a.data.paths();
        check_output(out, &[n, e, &a.model])?;
    }
    let graph = a.data.load()?;
    let model = load_checkpoint(&a.model, None)?;
    let req = AleRequest {
        num_bins: a.bins,
        strategy: a.strategy,
        normalization: if a.global_normalization {
            Normalization::Global
        } else {
            Normalization::PerBin
        },
        ..AleRequest::new(feature_index(&graph, &a.feature)?, a.m, a.k, seed, a.mode)
    };
    let session = InferenceSession::new(&model, &graph)?;
    let mut profile = explain(&session, &req)?;
    if a.center {
        profile = center_profile(&profile)?;
    }
    emit_profile(&profile, a.out.as_deref())
}

fn load_profiles(paths: &[PathBuf]) -> Result<Vec<AleProfile>> {
    paths
        .iter()
        .map(|p| AleProfile::load(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn aggregate_cmd(a: AggregateArgs) -> Result<()> {
    if let Some(out) = &a.out {
        let inputs: Vec<&Path> = a.profiles.iter().map(PathBuf::as_path).collect();
        check_output(out, &inputs)?;
    }
    let agg = aggregate_profiles(&load_profiles(&a.profiles)?)?;
    emit_profile(&agg, a.out.as_deref())
}

fn compare_cmd(a: CompareArgs, seed: u64) -> Result<()> {
    let ga = CurveGroup::new("a", load_profiles(&a.group_a)?)?;
    let gb = CurveGroup::new("b", load_profiles(&a.group_b)?)?;
    let result = match a.test {
        TestMethod::Rmse => rmse_test(&ga, &gb)?,
        TestMethod::Chi2 => chi2_curve_test(&ga, &gb)?,
        TestMethod::Permutation => permutation_test(&ga, &gb, a.n_perm, seed)?,
    };
    println!("{result}");
    Ok(())
}

fn sweep_config(g: &GridArgs, seed: u64) -> Result<SweepConfig> {
    let mut cfg = SweepConfig {
        base_seed: seed,
        output_dir: Some(g.out_dir.clone()),
        save_profiles: !g.no_profiles,
        ..SweepConfig::default()
    };
    if let Some(v) = &g.ks {
        cfg.ks = v.clone();
    }
    if let Some(v) = &g.ms {
        cfg.ms = v.clone();
    }
    if let Some(v) = &g.sparsities {
        cfg.sparsities = v.clone();
    }
    if let Some(v) = &g.archs {
        cfg.archs = v.clone();
    }
    if let Some(v) = &g.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = g.model_seeds {
        cfg.model_seeds = v;
    }
    if let Some(v) = g.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = g.num_nodes {
        cfg.num_nodes = v;
    }
    if let Some(v) = g.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = g.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = g.bins {
        cfg.num_bins = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish_sweep(out: SweepOutcome, dir: &Path) -> Result<()> {
    let diverged = out.models.iter().filter(|m| m.status != "ok").count();
    println!(
        "models={} diverged={} records={} out_dir={}",
        out.models.len(),
        diverged,
        out.records.len(),
        dir.display()
    );
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> Result<()> {
    if let Some(records) = &a.records {
        let figs = sweep_figures(&read_records(records)?)?;
        for path in write_figures(&figs, &a.out)? {
            println!("{}", path.display());
        }
        return Ok(());
    }
    if a.profiles.is_empty() {
        bail!("plot needs --records or --profiles");
    }
    let inputs: Vec<&Path> = a.profiles.iter().map(PathBuf::as_path).collect();
    check_output(&a.out, &inputs)?;
    let profiles = load_profiles(&a.profiles)?;
    let series: Vec<Series> = profiles
        .iter()
        .zip(&a.profiles)
        .map(|(p, path)| {
            let label = path.file_stem().map_or_else(|| p.method.to_string(), |s| s.to_string_lossy().into_owned());
            let points = p.grid.edges.iter().zip(&p.accumulated).map(|(&x, &y)| Point::new(x, y)).collect();
            Series::new(label, points)
        })
        .collect();
    let style = PlotStyle {
        kind: PlotKind::Line,
        title: a.title.unwrap_or_else(|| "ALE".into()),
        x_label: format!("feature {}", profiles[0].grid.feature),
        y_label: "accumulated effect".into(),
        ..PlotStyle::default()
    };
    std::fs::write(&a.out, render_plot(&series, &style)?)?;
    println!("{}", a.out.display());
    Ok(())
}
