//! The `nomad` command line: fit, eval, plot and index-debug.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ann::{build_index, write_assignment_csv, write_edges_csv, IndexParams};
use crate::error::{NomadError, Result};
use crate::io::{load_labels, load_layout, load_vectors, save_layout, VectorDataset, VectorFormat};
use crate::metrics::{
    neighborhood_preservation, neighborhood_preservation_ann, random_triplet_accuracy, NpMode,
};
use crate::optimizer::{fit_with, FitOptions, NegativeMode, StepScale, TrainConfig, UpdateMode};
use crate::plot::{write_svg, PlotStyle};

/// A count or float that defaults to a value derived from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T> Auto<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(v),
        }
    }
}

impl<T: FromStr> FromStr for Auto<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(Auto::Auto)
        } else {
            s.parse().map(Auto::Value).map_err(|e: T::Err| e.to_string())
        }
    }
}

impl<T: fmt::Display> fmt::Display for Auto<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nomad", version, about = "Sharded InfoNCE t-SNE data maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the index, train a layout and write it as CSV.
    Fit(FitArgs),
    /// Score a layout against its input vectors.
    Eval(EvalArgs),
    /// Render a layout CSV as an SVG scatter plot.
    Plot(PlotArgs),
    /// Build only the index and dump its clusters and edges.
    IndexDebug(IndexDebugArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Vector file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = VectorFormat::RawF32)]
    pub format: VectorFormat,
    /// Row count; `auto` infers it from the file.
    #[arg(long, default_value = "auto")]
    pub rows: Auto<usize>,
    /// Column count; `auto` infers it (raw-f32 needs rows or dims).
    #[arg(long, default_value = "auto")]
    pub dims: Auto<usize>,
    /// One label per line, attached to the output layout.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<VectorDataset> {
        let ds = load_vectors(&self.input, self.format, self.rows.value(), self.dims.value())?;
        match &self.labels {
            Some(p) => ds.with_labels(load_labels(p)?),
            None => Ok(ds),
        }
    }
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Neighbors per point.
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    /// Worker count; also the lower bound on the default cluster count.
    #[arg(long, env = "NOMAD_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// K-Means cluster count; `auto` is ceil(n / 4096) clamped to [workers, n].
    #[arg(long, default_value = "auto")]
    pub clusters: Auto<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub kmeans_max_iters: usize,
    /// Convergence threshold as a fraction of the mean squared data norm.
    #[arg(long, default_value_t = 1e-6)]
    pub kmeans_tol: f64,
}

impl IndexArgs {
    /// Flag checks that need no data.
    fn precheck(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(NomadError::Parameter("workers must be at least 1".into()));
        }
        if let Auto::Value(c) = self.clusters {
            if c < self.workers {
                return Err(NomadError::Parameter(format!(
                    "clusters must be ≥ workers ({c} clusters, {} workers)",
                    self.workers
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    /// Output layout CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Nominal negatives per head.
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    /// Negatives actually drawn from the worker's own points per head.
    #[arg(long, default_value_t = 5)]
    pub local_draws: usize,
    /// Heads per SGD step.
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    /// Initial learning rate; `auto` is n / 10.
    #[arg(long, default_value = "auto")]
    pub lr0: Auto<f64>,
    #[arg(long, value_enum, default_value_t = NegativeMode::RemoteClusters)]
    pub negative_mode: NegativeMode,
    #[arg(long, value_enum, default_value_t = UpdateMode::All)]
    pub update_mode: UpdateMode,
    #[arg(long, value_enum, default_value_t = StepScale::BatchMean)]
    pub step_scale: StepScale,
    /// Print one line per epoch to stderr.
    #[arg(long, default_value_t = false)]
    pub progress: bool,
    /// Write a layout checkpoint every this many epochs (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Directory for checkpoints.
    #[arg(long, default_value = ".")]
    pub checkpoint_dir: PathBuf,
}

impl FitArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            k: self.index.k,
            n_negatives: self.negatives,
            local_draws: self.local_draws,
            batch_size: self.batch_size,
            workers: self.index.workers,
            n_clusters: self.index.clusters.value(),
            seed: self.index.seed,
            lr0: self.lr0.value(),
            kmeans_max_iters: self.index.kmeans_max_iters,
            kmeans_tol_factor: self.index.kmeans_tol,
            negative_mode: self.negative_mode,
            update_mode: self.update_mode,
            step_scale: self.step_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    /// Neighborhood preservation against brute-force input neighbors.
    Np,
    /// Neighborhood preservation against the within-cluster index.
    NpAnn,
    /// Random triplet accuracy.
    Triplet,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Layout CSV to score.
    #[arg(long)]
    pub layout: PathBuf,
    /// Metrics to report; repeat the flag for several.
    #[arg(long, value_enum, default_values_t = [MetricKind::Np])]
    pub metric: Vec<MetricKind>,
    /// Neighborhood size for NP.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Points evaluated by NP; `auto` evaluates every point.
    #[arg(long, default_value = "auto")]
    pub sample_points: Auto<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub triplets: usize,
    /// Seed for sampled metrics and for the index used by np-ann.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cluster count for the np-ann index.
    #[arg(long, default_value = "auto")]
    pub clusters: Auto<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Layout CSV.
    #[arg(long)]
    pub layout: PathBuf,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 800)]
    pub width: u32,
    #[arg(long, default_value_t = 800)]
    pub height: u32,
    /// Circle radius in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.8)]
    pub opacity: f64,
    #[arg(long, default_value = "#ffffff")]
    pub background: String,
}

#[derive(Debug, Args)]
pub struct IndexDebugArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    /// CSV of `point_id,cluster_id`.
    #[arg(long, default_value = "assignment.csv")]
    pub assignment_out: PathBuf,
    /// CSV of `src,dst,distance`.
    #[arg(long, default_value = "edges.csv")]
    pub edges_out: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &NomadError) -> i32 {
    match e {
        NomadError::Divergence { .. } => 2,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Plot(a) => cmd_plot(&a),
        Command::IndexDebug(a) => cmd_index_debug(&a),
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    args.index.precheck()?;
    let data = args.input.load()?;
    let config = args.config();
    config.validate(data.n())?;
    let options = FitOptions {
        progress: args.progress,
        checkpoint_every: (args.checkpoint_every > 0).then_some(args.checkpoint_every),
        checkpoint_dir: Some(args.checkpoint_dir.clone()),
    };
    let result = fit_with(&data, &config, &options)?;
    save_layout(&result.layout, data.ids(), data.labels(), &args.out)?;
    let final_loss = result.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "fit: {} points, {} clusters, {} workers, {} epochs, final loss {:.6}, wrote {}",
        data.n(),
        result.index.clusters.n_clusters(),
        config.workers,
        config.epochs,
        final_loss,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    if args.metric.contains(&MetricKind::NpAnn) {
        if let Auto::Value(0) = args.clusters {
            return Err(NomadError::Parameter("clusters must be at least 1".into()));
        }
    }
    let data = args.input.load()?;
    let loaded = load_layout(&args.layout)?;
    if loaded.layout.n() != data.n() {
        return Err(NomadError::Dimension(format!(
            "vectors have {} rows but the layout has {}",
            data.n(),
            loaded.layout.n()
        )));
    }
    let mode = match args.sample_points {
        Auto::Auto => NpMode::Exact,
        Auto::Value(h) => NpMode::Sampled(h),
    };
    for metric in dedup(&args.metric) {
        let report = match metric {
            MetricKind::Np => neighborhood_preservation(&data, &loaded.layout, args.k, mode, args.seed)?,
            MetricKind::NpAnn => {
                let index = build_index(
                    &data,
                    &IndexParams {
                        n_clusters: args
                            .clusters
                            .value()
                            .unwrap_or_else(|| crate::ann::default_n_clusters(data.n(), 1)),
                        k: args.k,
                        seed: args.seed,
                        max_iters: 100,
                        tol_factor: 1e-6,
                    },
                )?;
                neighborhood_preservation_ann(&index.graph, &loaded.layout, args.k, mode, args.seed)?
            }
            MetricKind::Triplet => random_triplet_accuracy(&data, &loaded.layout, args.triplets, args.seed)?,
        };
        println!("{}", report.to_json_line());
    }
    Ok(())
}

fn dedup(metrics: &[MetricKind]) -> Vec<MetricKind> {
    let mut out = Vec::new();
    for &m in metrics {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

pub fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let loaded = load_layout(&args.layout)?;
    let style = PlotStyle {
        width: args.width,
        height: args.height,
        radius: args.radius,
        opacity: args.opacity,
        background: args.background.clone(),
    };
    write_svg(&loaded.layout, loaded.labels.as_deref(), &style, &args.out)
}

pub fn cmd_index_debug(args: &IndexDebugArgs) -> Result<()> {
    args.index.precheck()?;
    let data = args.input.load()?;
    let n_clusters = args
        .index
        .clusters
        .value()
        .unwrap_or_else(|| crate::ann::default_n_clusters(data.n(), args.index.workers));
    let index = build_index(
        &data,
        &IndexParams {
            n_clusters,
            k: args.index.k,
            seed: args.index.seed,
            max_iters: args.index.kmeans_max_iters,
            tol_factor: args.index.kmeans_tol,
        },
    )?;
    write_assignment_csv(&index.clusters, data.ids(), &args.assignment_out)?;
    write_edges_csv(&index.graph, data.ids(), &args.edges_out)?;
    println!(
        "index: {} clusters, {} edges, {} cross-cluster, {} EM iterations",
        index.clusters.n_clusters(),
        index.graph.n_edges(),
        index.graph.cross_cluster_edges(&index.clusters),
        index.em_iterations
    );
    Ok(())
}
