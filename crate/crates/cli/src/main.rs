// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dendrowave::correspondence::FactorReport;
use dendrowave::haar::{self, ThresholdPolicy};
use dendrowave::pipeline::{self, Artifacts, KeepSpec, Linkage, PipelineConfig, Stage, StageError};
use dendrowave::regression;
use dendrowave::{Dendrogram, Error, Execution, Granularity};

#[derive(Parser)]
#[command(
    name = "dendrowave",
    version,
    about = "Hierarchical segmentation and wavelet regression of time series"
)]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate dated events into a contingency table.
    Ingest(IngestArgs),
    /// Correspondence analysis of a table.
    Ca(CaArgs),
    /// Build a dendrogram on factor coordinates.
    Cluster(ClusterArgs),
    /// Haar transform of leaf data on a dendrogram.
    Haar(HaarArgs),
    /// Regress signals on a dendrogram.
    Regress(RegressArgs),
    /// MSE for every number of kept details.
    Sweep(SweepArgs),
    /// Run every stage end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct RangeArgs {
    #[arg(long, default_value = "month")]
    granularity: Granularity,
    /// First bin label (YYYY-MM or YYYY).
    #[arg(long)]
    from: Option<String>,
    /// Last bin label, inclusive.
    #[arg(long)]
    to: Option<String>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[command(flatten)]
    range: RangeArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CaArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// factors.json written by `ca`.
    #[arg(long)]
    factors: PathBuf,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long, default_value = "constrained-complete")]
    linkage: Linkage,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HaarArgs {
    #[arg(long)]
    tree: PathBuf,
    /// Leaf vectors as `label,<dim>...`; rows in leaf order.
    #[arg(long, conflicts_with = "factors", required_unless_present = "factors")]
    data: Option<PathBuf>,
    /// Use the leading factor coordinates from a factors.json.
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KeepArgs {
    /// Number of detail coefficients to keep.
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    keep: Option<usize>,
    /// Fit every keep value from 0 to n - 1.
    #[arg(long)]
    sweep: bool,
}

impl KeepArgs {
    fn spec(&self) -> KeepSpec {
        match self.keep {
            Some(k) => KeepSpec::Keep(k),
            None => KeepSpec::Sweep,
        }
    }
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long = "signal", required = true)]
    signals: Vec<PathBuf>,
    #[arg(long, default_value = "magnitude")]
    policy: ThresholdPolicy,
    #[command(flatten)]
    keep: KeepArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long = "signal", required = true)]
    signals: Vec<PathBuf>,
    #[arg(long, default_value = "magnitude")]
    policy: ThresholdPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    range: RangeArgs,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long, default_value = "constrained-complete")]
    linkage: Linkage,
    #[arg(long = "signal")]
    signals: Vec<PathBuf>,
    #[arg(long, default_value = "magnitude")]
    policy: ThresholdPolicy,
    #[command(flatten)]
    keep: KeepArgs,
    #[arg(long)]
    out: PathBuf,
}

type StageResult<T> = Result<T, StageError>;

fn at<T>(stage: Stage, r: dendrowave::Result<T>) -> StageResult<T> {
    r.map_err(|source| StageError { stage, source })
}

fn read_tree(path: &Path) -> StageResult<Dendrogram> {
    at(
        Stage::Cluster,
        pipeline::read_file(path).and_then(|t| Dendrogram::from_json(&t)),
    )
}

fn read_factors(path: &Path) -> StageResult<FactorReport> {
    at(
        Stage::Ca,
        pipeline::read_file(path).and_then(|t| {
            serde_json::from_str(&t).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        }),
    )
}

fn ingest(args: &IngestArgs) -> StageResult<Artifacts> {
    let range = args.range.from.as_deref().zip(args.range.to.as_deref());
    if args.range.from.is_some() != args.range.to.is_some() {
        return at(
            Stage::Config,
            Err(Error::Invalid(
                "--from and --to must be given together".into(),
            )),
        );
    }
    let agg = at(
        Stage::Ingest,
        pipeline::ingest_events(&args.events, args.range.granularity, range),
    )?;
    Ok(Artifacts::from([(
        "table.csv".to_string(),
        agg.table.to_csv(),
    )]))
}

fn ca(args: &CaArgs) -> StageResult<Artifacts> {
    let agg = at(Stage::Ingest, pipeline::load_table(&args.table))?;
    let dec = at(Stage::Ca, pipeline::analyse(&agg.table))?;
    let report = FactorReport::new(&dec, &agg.table);
    let json = serde_json::to_string_pretty(&report).expect("factor report serializes");
    Ok(Artifacts::from([("factors.json".to_string(), json)]))
}

fn cluster(args: &ClusterArgs, exec: Execution) -> StageResult<Artifacts> {
    if args.dims == 0 {
        return at(
            Stage::Config,
            Err(Error::Invalid("--dims must be at least 1".into())),
        );
    }
    let report = read_factors(&args.factors)?;
    let (labels, points) = report.leading_rows(args.dims);
    let tree = at(
        Stage::Cluster,
        pipeline::build_tree(labels, &points, args.linkage, exec),
    )?;
    Ok(Artifacts::from([
        ("dendrogram.json".to_string(), tree.to_json()),
        ("dendrogram.nwk".to_string(), tree.to_newick()),
    ]))
}

fn haar_cmd(args: &HaarArgs) -> StageResult<Artifacts> {
    let tree = read_tree(&args.tree)?;
    let (labels, dims, data) = match (&args.data, &args.factors) {
        (Some(path), _) => at(
            Stage::Haar,
            pipeline::read_file(path).and_then(|t| pipeline::read_leaf_data(&t)),
        )?,
        (None, Some(path)) => {
            let report = read_factors(path)?;
            let (labels, points) = report.leading_rows(args.dims);
            let dims = pipeline::factor_names(points.first().map_or(0, Vec::len));
            (labels, dims, pipeline::points_matrix(&points))
        }
        (None, None) => unreachable!("clap requires one of --data or --factors"),
    };
    if labels != tree.leaf_labels() {
        return at(
            Stage::Haar,
            Err(Error::Data(
                "leaf data labels do not match the tree leaves".into(),
            )),
        );
    }
    let dec = at(Stage::Haar, haar::forward(&tree, &data))?;
    let csv = at(Stage::Haar, dec.to_csv(&dims))?;
    Ok(Artifacts::from([("decomposition.csv".to_string(), csv)]))
}

fn regress(args: &RegressArgs, exec: Execution) -> StageResult<Artifacts> {
    let tree = read_tree(&args.tree)?;
    let mut out = Artifacts::new();
    let loaded = args
        .signals
        .iter()
        .map(|p| at(Stage::Regress, pipeline::load_signal_file(p)))
        .collect::<StageResult<Vec<_>>>()?;
    let sweeps = regression::sweep_many(&tree, &loaded, args.policy, exec);
    for ((path, signal), sweep) in args.signals.iter().zip(&loaded).zip(sweeps) {
        let sweep = at(
            Stage::Regress,
            sweep.map_err(|e| Error::Data(format!("signal {}: {e}", path.display()))),
        )?;
        let name = pipeline::signal_name(path);
        match args.keep.spec() {
            KeepSpec::Keep(k) => {
                let point = sweep.get(k).ok_or_else(|| StageError {
                    stage: Stage::Regress,
                    source: Error::Invalid(format!(
                        "--keep {k} outside 0..={} for {}",
                        sweep.len() - 1,
                        path.display()
                    )),
                })?;
                out.insert(format!("fit_{name}.csv"), point.fit.to_csv(signal));
                out.insert(
                    format!("breakpoints_{name}.txt"),
                    regression::breakpoint_table(&[(format!("keep {k}"), &point.fit)]),
                );
            }
            KeepSpec::Sweep => {
                out.insert(
                    format!("fit_{name}.csv"),
                    pipeline::sweep_fits_csv(signal, &sweep),
                );
                out.insert(
                    format!("breakpoints_{name}.txt"),
                    pipeline::sweep_breakpoints(&sweep),
                );
                out.insert(format!("sweep_{name}.csv"), regression::sweep_csv(&sweep));
            }
        }
    }
    Ok(out)
}

fn sweep(args: &SweepArgs, exec: Execution) -> StageResult<Artifacts> {
    let tree = read_tree(&args.tree)?;
    let mut out = Artifacts::new();
    for path in &args.signals {
        let signal = at(Stage::Regress, pipeline::load_signal_file(path))?;
        let sweep = at(
            Stage::Regress,
            regression::mse_sweep(&tree, &signal, args.policy, exec)
                .map_err(|e| Error::Data(format!("signal {}: {e}", path.display()))),
        )?;
        out.insert(
            format!("sweep_{}.csv", pipeline::signal_name(path)),
            regression::sweep_csv(&sweep),
        );
    }
    Ok(out)
}

fn pipeline_config(args: PipelineArgs) -> PipelineConfig {
    PipelineConfig {
        events: args.events,
        table: args.table,
        granularity: args.range.granularity,
        from: args.range.from,
        to: args.range.to,
        dims: args.dims,
        linkage: args.linkage,
        signals: args.signals,
        policy: args.policy,
        keep: args.keep.spec(),
        out: args.out,
    }
}

fn run(cli: Cli) -> StageResult<Vec<PathBuf>> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let (out_dir, artifacts) = match cli.command {
        Command::Ingest(a) => (a.out.clone(), ingest(&a)?),
        Command::Ca(a) => (a.out.clone(), ca(&a)?),
        Command::Cluster(a) => (a.out.clone(), cluster(&a, exec)?),
        Command::Haar(a) => (a.out.clone(), haar_cmd(&a)?),
        Command::Regress(a) => (a.out.clone(), regress(&a, exec)?),
        Command::Sweep(a) => (a.out.clone(), sweep(&a, exec)?),
        Command::Pipeline(a) => return pipeline::run_pipeline(&pipeline_config(a), exec),
    };
    pipeline::write_artifacts(&out_dir, &artifacts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
