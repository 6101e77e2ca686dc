// SPDX-License-Identifier: MIT OR Apache-2.0

//! File-based orchestration of the full analysis.
//!
//! Every stage is exposed on its own so the command line tool can run it
//! on intermediate files. [`run_pipeline`] computes all artifacts in
//! memory first and only then writes them, removing anything already
//! written if a write fails, so a failed run leaves no partial output.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cluster::{self, Dendrogram};
use crate::correspondence::{self, FactorDecomposition, FactorReport};
use crate::haar::{self, ThresholdPolicy};
use crate::ingest::{self, Aggregation, BinRange, ContingencyTable, ExternalSignal, Granularity};
use crate::regression::{self, PiecewiseFit, SweepPoint};
use crate::{Error, Execution};

pub const TIE_BREAK_CONSTRAINED: &str = "leftmost adjacent pair";
pub const TIE_BREAK_MEDIAN: &str =
    "smallest node ids; children ordered singleton first, then by creation";
pub const TIE_BREAK_THRESHOLD: &str = "equal magnitudes: later merge kept first";
pub const FACTOR_SIGN: &str = "largest-magnitude row coordinate positive";
pub const MSE_NORMALIZATION: &str = "mean over n points";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Linkage {
    #[default]
    ConstrainedComplete,
    Median,
}

impl Linkage {
    pub fn as_str(self) -> &'static str {
        match self {
            Linkage::ConstrainedComplete => "constrained-complete",
            Linkage::Median => "median",
        }
    }
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "constrained-complete" => Ok(Linkage::ConstrainedComplete),
            "median" => Ok(Linkage::Median),
            other => Err(Error::invalid(format!(
                "unknown linkage '{other}', expected constrained-complete or median"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeepSpec {
    Keep(usize),
    Sweep,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub events: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub granularity: Granularity,
    pub from: Option<String>,
    pub to: Option<String>,
    pub dims: usize,
    pub linkage: Linkage,
    pub signals: Vec<PathBuf>,
    pub policy: ThresholdPolicy,
    pub keep: KeepSpec,
    pub out: PathBuf,
}

impl PipelineConfig {
    pub fn validate(&self) -> crate::Result<()> {
        match (&self.events, &self.table) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "give exactly one of --events and --table, not both",
                ))
            }
            (None, None) => return Err(Error::invalid("one of --events or --table is required")),
            _ => {}
        }
        if self.dims == 0 {
            return Err(Error::invalid("--dims must be at least 1"));
        }
        if self.from.is_some() != self.to.is_some() {
            return Err(Error::invalid("--from and --to must be given together"));
        }
        let mut stems = HashSet::new();
        for s in &self.signals {
            if !stems.insert(signal_name(s)) {
                return Err(Error::invalid(format!(
                    "two signals share the name '{}'",
                    signal_name(s)
                )));
            }
        }
        Ok(())
    }
}

/// Pipeline stage, used to tag errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Ca,
    Cluster,
    Haar,
    Regress,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Ca => "ca",
            Stage::Cluster => "cluster",
            Stage::Haar => "haar",
            Stage::Regress => "regress",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    /// 2 validation, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.source)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invalid(_) => 2,
        Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 3,
        Error::Numerical(_) => 4,
    }
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> StageExt<T> for crate::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub fn read_file(path: &Path) -> crate::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Signal name used in artifact file names: the file stem.
pub fn signal_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "signal".into())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Parses and aggregates an event file. Without a range, the span of the
/// events is used.
pub fn ingest_events(
    path: &Path,
    granularity: Granularity,
    range: Option<(&str, &str)>,
) -> crate::Result<Aggregation> {
    let text = read_file(path)?;
    let (schema, events) = ingest::parse_events_with_header(text.as_bytes())?;
    let range = match range {
        Some((from, to)) => BinRange::parse(granularity, from, to)?,
        None => BinRange::covering(&events, granularity)?,
    };
    ingest::aggregate(&events, &schema, range)
}

/// Reads a table CSV and drops empty rows and columns.
pub fn load_table(path: &Path) -> crate::Result<Aggregation> {
    let raw = ContingencyTable::read_csv(read_file(path)?.as_bytes())?;
    let (table, dropped_rows, dropped_cols) = raw.prune_empty()?;
    Ok(Aggregation {
        table,
        dropped_rows,
        dropped_cols,
    })
}

pub fn load_signal_file(path: &Path) -> crate::Result<ExternalSignal> {
    ingest::load_signal(read_file(path)?.as_bytes())
        .map_err(|e| Error::data(format!("signal {}: {e}", path.display())))
}

pub fn analyse(table: &ContingencyTable) -> crate::Result<FactorDecomposition> {
    let model = correspondence::frequency_model(table)?;
    let dec = correspondence::factor_decomposition(&model)?;
    let report = correspondence::transition_consistency(&dec, &model);
    if !report.consistent(1e-8) {
        return Err(Error::Numerical(format!(
            "transition formulas violated by {:e}",
            report.max_deviation()
        )));
    }
    Ok(dec)
}

pub fn build_tree(
    labels: Vec<String>,
    points: &[Vec<f64>],
    linkage: Linkage,
    exec: Execution,
) -> crate::Result<Dendrogram> {
    let tree = match linkage {
        Linkage::ConstrainedComplete => cluster::constrained_complete_link(points, exec)?,
        Linkage::Median => cluster::median_linkage(points, exec)?,
    };
    tree.with_labels(labels)
}

/// Reads a real-valued `label,<dim1>,...` CSV of leaf vectors.
pub fn read_leaf_data(text: &str) -> crate::Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::data("empty leaf data"))?;
    let mut cols = header.split(',').map(|c| c.trim().to_owned());
    if cols.next().as_deref() != Some("label") {
        return Err(Error::parse(1, "first header column must be 'label'"));
    }
    let dims: Vec<String> = cols.collect();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dims.len() + 1 {
            return Err(Error::parse(
                idx + 1,
                format!(
                    "expected {} columns, found {}",
                    dims.len() + 1,
                    fields.len()
                ),
            ));
        }
        labels.push(fields[0].to_owned());
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(idx + 1, format!("non-numeric value '{f}'")))?;
            values.push(v);
        }
    }
    let m = DMatrix::from_row_slice(labels.len(), dims.len(), &values);
    Ok((labels, dims, m))
}

pub fn points_matrix(points: &[Vec<f64>]) -> DMatrix<f64> {
    let m = points.first().map_or(0, Vec::len);
    DMatrix::from_fn(points.len(), m, |i, j| points[i][j])
}

pub fn factor_names(dims: usize) -> Vec<String> {
    (1..=dims).map(|a| format!("F{a}")).collect()
}

/// Fit CSV holding one fitted column per sweep entry.
pub fn sweep_fits_csv(signal: &ExternalSignal, sweep: &[SweepPoint]) -> String {
    let mut out = String::from("label,original");
    for p in sweep {
        out.push_str(&format!(",fitted_keep{}", p.keep));
    }
    out.push('\n');
    for (i, (label, s)) in signal.labels().iter().zip(signal.values()).enumerate() {
        out.push_str(&format!("{label},{s}"));
        for p in sweep {
            out.push_str(&format!(",{}", p.fit.fitted[i]));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_breakpoints(sweep: &[SweepPoint]) -> String {
    let rows: Vec<(String, &PiecewiseFit)> = sweep
        .iter()
        .map(|p| (format!("keep {}", p.keep), &p.fit))
        .collect();
    regression::breakpoint_table(&rows)
}

#[derive(Serialize)]
struct Conventions {
    haar_sign: &'static str,
    factor_sign: &'static str,
    constrained_tie_break: &'static str,
    median_tie_break: &'static str,
    threshold_tie_break: &'static str,
    mse: &'static str,
    breakpoint_tolerance: f64,
    eigenvalue_cutoff: f64,
}

impl Conventions {
    fn current() -> Self {
        Conventions {
            haar_sign: haar::SIGN_CONVENTION,
            factor_sign: FACTOR_SIGN,
            constrained_tie_break: TIE_BREAK_CONSTRAINED,
            median_tie_break: TIE_BREAK_MEDIAN,
            threshold_tie_break: TIE_BREAK_THRESHOLD,
            mse: MSE_NORMALIZATION,
            breakpoint_tolerance: regression::BREAK_TOLERANCE,
            eigenvalue_cutoff: correspondence::EIGENVALUE_CUTOFF,
        }
    }
}

#[derive(Serialize)]
struct SignalSummary {
    name: String,
    file: String,
    /// MSE at the requested keep, or per keep value for sweeps.
    mse: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    input_kind: &'static str,
    input_file: String,
    granularity: Option<&'static str>,
    range: Option<(String, String)>,
    rows: usize,
    cols: usize,
    dropped_rows: Vec<String>,
    dropped_cols: Vec<String>,
    factors_retained: usize,
    dims_used: usize,
    linkage: &'static str,
    policy: &'static str,
    keep: Option<usize>,
    sweep: bool,
    conventions: Conventions,
    signals: Vec<SignalSummary>,
    artifacts: Vec<String>,
}

/// In-memory artifact set, keyed by file name.
pub type Artifacts = BTreeMap<String, String>;

/// Runs every stage and returns the artifacts without touching disk.
pub fn compute_artifacts(
    config: &PipelineConfig,
    exec: Execution,
) -> Result<Artifacts, StageError> {
    config.validate().stage(Stage::Config)?;
    let mut out = Artifacts::new();

    let agg = match (&config.events, &config.table) {
        (Some(events), None) => {
            let range = config.from.as_deref().zip(config.to.as_deref());
            ingest_events(events, config.granularity, range)
        }
        (None, Some(table)) => load_table(table),
        _ => unreachable!("validated"),
    }
    .stage(Stage::Ingest)?;
    let table = &agg.table;
    out.insert("table.csv".into(), table.to_csv());

    let dec = analyse(table).stage(Stage::Ca)?;
    let report = FactorReport::new(&dec, table);
    out.insert(
        "factors.json".into(),
        serde_json::to_string_pretty(&report).expect("factor report serializes"),
    );

    let points = dec.leading_row_coords(config.dims);
    let dims_used = points.first().map_or(0, Vec::len);
    if dims_used < config.dims {
        log::warn!(
            "only {dims_used} factors retained, clustering on those instead of {}",
            config.dims
        );
    }
    let tree = build_tree(table.row_labels().to_vec(), &points, config.linkage, exec)
        .stage(Stage::Cluster)?;
    out.insert("dendrogram.json".into(), tree.to_json());
    out.insert("dendrogram.nwk".into(), tree.to_newick());

    let decomposition = haar::forward(&tree, &points_matrix(&points)).stage(Stage::Haar)?;
    out.insert(
        "decomposition.csv".into(),
        decomposition
            .to_csv(&factor_names(dims_used))
            .stage(Stage::Haar)?,
    );

    let signals = config
        .signals
        .iter()
        .map(|p| load_signal_file(p))
        .collect::<crate::Result<Vec<_>>>()
        .stage(Stage::Regress)?;
    let results = regression::sweep_many(&tree, &signals, config.policy, exec);
    let mut summaries = Vec::with_capacity(signals.len());
    for ((path, signal), sweep) in config.signals.iter().zip(&signals).zip(results) {
        let sweep = sweep
            .map_err(|e| Error::data(format!("signal {}: {e}", path.display())))
            .stage(Stage::Regress)?;
        let name = signal_name(path);
        out.insert(format!("sweep_{name}.csv"), regression::sweep_csv(&sweep));
        let mse = match config.keep {
            KeepSpec::Keep(k) => {
                let point = sweep.get(k).ok_or_else(|| StageError {
                    stage: Stage::Regress,
                    source: Error::invalid(format!(
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
                vec![(k, point.mse)]
            }
            KeepSpec::Sweep => {
                out.insert(format!("fit_{name}.csv"), sweep_fits_csv(signal, &sweep));
                out.insert(format!("breakpoints_{name}.txt"), sweep_breakpoints(&sweep));
                sweep.iter().map(|p| (p.keep, p.mse)).collect()
            }
        };
        summaries.push(SignalSummary {
            name,
            file: file_name(path),
            mse,
        });
    }

    let mut artifacts: Vec<String> = out.keys().cloned().collect();
    artifacts.push("manifest.json".into());
    artifacts.sort();
    let (input_kind, input_path) = match (&config.events, &config.table) {
        (Some(p), _) => ("events", p),
        (_, Some(p)) => ("table", p),
        _ => unreachable!("validated"),
    };
    let manifest = Manifest {
        tool: "dendrowave",
        version: env!("CARGO_PKG_VERSION"),
        input_kind,
        input_file: file_name(input_path),
        granularity: config.events.as_ref().map(|_| config.granularity.as_str()),
        range: table
            .row_labels()
            .first()
            .cloned()
            .zip(table.row_labels().last().cloned()),
        rows: table.nrows(),
        cols: table.ncols(),
        dropped_rows: agg.dropped_rows.clone(),
        dropped_cols: agg.dropped_cols.clone(),
        factors_retained: dec.retained(),
        dims_used,
        linkage: config.linkage.as_str(),
        policy: config.policy.as_str(),
        keep: match config.keep {
            KeepSpec::Keep(k) => Some(k),
            KeepSpec::Sweep => None,
        },
        sweep: config.keep == KeepSpec::Sweep,
        conventions: Conventions::current(),
        signals: summaries,
        artifacts,
    };
    out.insert(
        "manifest.json".into(),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    );
    Ok(out)
}

/// Writes artifacts into `dir`; on failure removes what was written.
pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<Vec<PathBuf>, StageError> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .stage(Stage::Write)?;
    let mut written = Vec::with_capacity(artifacts.len());
    for (name, content) in artifacts {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, content) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(StageError {
                stage: Stage::Write,
                source: Error::io(&path, e),
            });
        }
        written.push(path);
    }
    Ok(written)
}

pub fn run_pipeline(config: &PipelineConfig, exec: Execution) -> Result<Vec<PathBuf>, StageError> {
    let artifacts = compute_artifacts(config, exec)?;
    write_artifacts(&config.out, &artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> PipelineConfig {
        PipelineConfig {
            events: Some("e.csv".into()),
            table: None,
            granularity: Granularity::Month,
            from: None,
            to: None,
            dims: 2,
            linkage: Linkage::ConstrainedComplete,
            signals: vec![],
            policy: ThresholdPolicy::Magnitude,
            keep: KeepSpec::Sweep,
            out: "out".into(),
        }
    }

    #[test]
    fn validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.table = Some("t.csv".into());
        let err = compute_artifacts(&c, Execution::Sequential).unwrap_err();
        assert_eq!(err.stage, Stage::Config);
        assert_eq!(err.exit_code(), 2);
        let mut c = config();
        c.events = None;
        assert!(c.validate().is_err());
        let mut c = config();
        c.dims = 0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.from = Some("2000-01".into());
        assert!(c.validate().is_err());
        let mut c = config();
        c.signals = vec!["a/x.csv".into(), "b/x.csv".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let mut c = config();
        c.events = Some("/nonexistent/events.csv".into());
        let err = compute_artifacts(&c, Execution::Sequential).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().starts_with("[ingest]"));
    }

    #[test]
    fn parse_names() {
        assert_eq!("median".parse::<Linkage>().unwrap(), Linkage::Median);
        assert!("ward".parse::<Linkage>().is_err());
        assert_eq!(
            "subtree-closed".parse::<ThresholdPolicy>().unwrap(),
            ThresholdPolicy::SubtreeClosed
        );
    }
}
