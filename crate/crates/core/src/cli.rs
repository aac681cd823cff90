//! Command-line frontend: `dataset`, `fit` and `evaluate`.
//!
//! Every command writes its files and then prints a JSON run manifest to
//! stdout. Exit codes: 0 success, 1 output I/O failure, 2 usage or
//! configuration error (including unreadable inputs), 3 numerical failure.
//!
//! Any flag can also come from `--config file.json`, whose keys are flag
//! names without the leading dashes; flags given on the command line win.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{self, DataMatrix};
use crate::error::AlleError;
use crate::evaluation::{self, EvaluationOptions, Split};
use crate::metric::{MetricMode, MetricState, OptimizerConfig, OptimizerMethod};
use crate::pipeline::{self, Algorithm, MetricInit, PipelineConfig, RecomputeNeighbors};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "alle", version, about = "Adaptive locally linear embedding", args_override_self = true)]
pub struct Cli {
    /// JSON file of default flag values (keys are flag names).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or export a dataset as CSV.
    Dataset {
        #[command(subcommand)]
        kind: DatasetKind,
    },
    /// Fit LLE or adaptive LLE and write the embedding.
    Fit(FitArgs),
    /// Score an embedding against the original data.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Subcommand)]
enum DatasetKind {
    SwissRoll(RollArgs),
    ScaledSwissRoll(ScaledRollArgs),
    Iris {
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args, Serialize)]
struct RollArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ScaledRollArgs {
    #[command(flatten)]
    #[serde(flatten)]
    roll: RollArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0, 10.0])]
    factors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Lle,
    Alle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricInitArg {
    Identity,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricModeArg {
    #[value(name = "factorL", alias = "factorl")]
    FactorL,
    #[value(name = "directM", alias = "directm")]
    DirectM,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RecomputeArg {
    Never,
    EveryEpoch,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input CSV. By default the header is read and `label` / `color`
    /// columns are split off.
    #[arg(long, required_unless_present = "idx_images", conflicts_with = "idx_images")]
    input: Option<PathBuf>,
    /// Treat the input CSV as headerless.
    #[arg(long)]
    no_header: bool,
    /// Zero-based index of a label column in the input CSV.
    #[arg(long)]
    label_column: Option<usize>,
    /// IDX image file (e.g. MNIST).
    #[arg(long)]
    idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
    /// Keep only these labels before subsampling.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<usize>,
    /// Random subsample size (after the class filter).
    #[arg(long)]
    subsample: Option<usize>,
    /// Keep class proportions when subsampling.
    #[arg(long, requires = "subsample")]
    stratified: bool,

    #[arg(long, value_enum, default_value = "alle")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 10)]
    neighbors: usize,
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, value_enum, default_value = "sgd")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    adam_eps: f64,
    #[arg(long, value_enum, default_value = "identity")]
    metric_init: MetricInitArg,
    /// Standard deviation of the random factor entries.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "factorL")]
    metric_mode: MetricModeArg,
    #[arg(long, value_enum, default_value = "never")]
    recompute_neighbors: RecomputeArg,
    #[arg(long, default_value_t = crate::reconstruction::DEFAULT_GRAM_REG)]
    gram_reg: f64,
    #[arg(long, default_value_t = crate::embedding::DEFAULT_NULL_TOL)]
    null_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run every epoch even when the error has stopped changing.
    #[arg(long)]
    no_early_stop: bool,
    /// Report but do not clamp learning rates above the descent bound.
    #[arg(long)]
    no_eta_clamp: bool,
    /// Start from this metric factor L (CSV, D×D) instead of --metric-init.
    #[arg(long)]
    metric_in: Option<PathBuf>,
    #[arg(long)]
    metric_out: Option<PathBuf>,
    /// Per-epoch reconstruction error as CSV (`epoch,E`).
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Embedding CSV (`y0..`, plus label/color columns when known).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    /// CSV holding a `label` column (or a single column of labels).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Neighborhood size for trustworthiness and continuity.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = evaluation::DEFAULT_K_CLASSIFY)]
    k_classify: usize,
    #[arg(long, default_value_t = evaluation::DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

/// Manifest printed after every successful command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub input_checksums: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Numerical(m) => m,
        }
    }

    /// Problems reading inputs are configuration errors.
    fn input(e: AlleError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }

    fn compute(e: AlleError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }

    fn output(e: AlleError) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };

    let started = Instant::now();
    let result = match cli.command {
        Command::Dataset { kind } => cmd_dataset(kind),
        Command::Fit(args) => cmd_fit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(mut manifest) => {
            manifest.wall_time_seconds = started.elapsed().as_secs_f64();
            let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            let _ = writeln!(stdout, "{json}");
            EXIT_OK
        }
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message());
            failure.exit_code()
        }
    }
}

/// Replaces `--config FILE` with the flags it contains, placed before the
/// user's own flags so that later (explicit) occurrences override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            path = Some(PathBuf::from(iter.next().ok_or("--config needs a file")?));
        } else if let Some(p) = text.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let json: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let object = json
        .as_object()
        .ok_or_else(|| format!("{}: expected a JSON object", path.display()))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in object {
        let flag = format!("--{}", key.trim_start_matches('-').replace('_', "-"));
        match value {
            serde_json::Value::Bool(true) => injected.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar_text).collect();
                injected.push(flag.into());
                injected.push(joined.join(",").into());
            }
            other => {
                injected.push(flag.into());
                injected.push(scalar_text(other).into());
            }
        }
    }
    // Insert after the program name and subcommand words.
    let at = rest
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |(i, _)| i);
    rest.splice(at..at, injected);
    Ok(rest)
}

fn scalar_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn checksum(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn manifest(command: &str, config: serde_json::Value) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config,
        input_checksums: BTreeMap::new(),
        outputs: Vec::new(),
        wall_time_seconds: 0.0,
        version: env!("CARGO_PKG_VERSION").to_string(),
        summary: None,
    }
}

fn cmd_dataset(kind: DatasetKind) -> Result<RunManifest, Failure> {
    let (name, config, data, output) = match kind {
        DatasetKind::SwissRoll(args) => {
            let data = data::generate_swiss_roll(args.n, args.noise, args.seed).map_err(Failure::input)?;
            let config = serde_json::to_value(&args).expect("serializable");
            ("dataset swiss-roll", config, data, args.roll_output())
        }
        DatasetKind::ScaledSwissRoll(args) => {
            let r = &args.roll;
            let data = data::scaled_swiss_roll(r.n, r.noise, &args.factors, r.seed).map_err(Failure::input)?;
            let config = serde_json::to_value(&args).expect("serializable");
            ("dataset scaled-swiss-roll", config, data, args.roll.roll_output())
        }
        DatasetKind::Iris { output } => (
            "dataset iris",
            serde_json::json!({ "output": output }),
            data::builtin_iris(),
            output,
        ),
    };
    data::write_csv(&output, &data).map_err(Failure::output)?;
    let mut m = manifest(name, config);
    m.outputs.push(output.display().to_string());
    m.summary = Some(serde_json::json!({ "rows": data.rows(), "dim": data.dim() }));
    Ok(m)
}

impl RollArgs {
    fn roll_output(&self) -> PathBuf {
        self.output.clone()
    }
}

impl FitArgs {
    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            n_components: self.components,
            n_neighbors: self.neighbors,
            max_epochs: self.epochs,
            optimizer: OptimizerConfig {
                method: match self.optimizer {
                    OptimizerArg::Sgd => OptimizerMethod::Sgd,
                    OptimizerArg::Adam => OptimizerMethod::Adam,
                },
                learning_rate: self.lr,
                regularization: self.lambda,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.adam_eps,
                mode: match self.metric_mode {
                    MetricModeArg::FactorL => MetricMode::FactorL,
                    MetricModeArg::DirectM => MetricMode::DirectM,
                },
                enforce_eta_bound: !self.no_eta_clamp,
            },
            metric_init: if self.metric_in.is_some() {
                MetricInit::Provided
            } else {
                match self.metric_init {
                    MetricInitArg::Identity => MetricInit::Identity,
                    MetricInitArg::Random => MetricInit::Random {
                        sigma: self.sigma,
                        seed: self.seed,
                    },
                }
            },
            recompute_neighbors: match self.recompute_neighbors {
                RecomputeArg::Never => RecomputeNeighbors::Never,
                RecomputeArg::EveryEpoch => RecomputeNeighbors::EveryEpoch,
            },
            gram_reg: self.gram_reg,
            null_tol: self.null_tol,
            seed: self.seed,
            early_stop: !self.no_early_stop,
        }
    }

    fn load_input(&self, checksums: &mut BTreeMap<String, String>) -> Result<DataMatrix, Failure> {
        let mut data = if let Some(images) = &self.idx_images {
            checksums.insert(images.display().to_string(), checksum(images)?);
            if let Some(labels) = &self.idx_labels {
                checksums.insert(labels.display().to_string(), checksum(labels)?);
            }
            data::load_idx(images, self.idx_labels.as_deref()).map_err(Failure::input)?
        } else {
            let input = self.input.as_ref().expect("clap enforces an input");
            checksums.insert(input.display().to_string(), checksum(input)?);
            if self.no_header || self.label_column.is_some() {
                data::load_csv(input, !self.no_header, self.label_column).map_err(Failure::input)?
            } else {
                data::load_csv_table(input).map_err(Failure::input)?
            }
        };
        if !self.classes.is_empty() || self.subsample.is_some() {
            let classes: BTreeSet<usize> = self.classes.iter().copied().collect();
            let filter = (!classes.is_empty()).then_some(&classes);
            let n_out = match (self.subsample, filter) {
                (Some(n), _) => n,
                (None, Some(f)) => data
                    .labels()
                    .map_or(0, |l| l.iter().filter(|c| f.contains(c)).count()),
                (None, None) => data.rows(),
            };
            data = if self.stratified {
                data::stratified_subsample(&data, n_out, filter, self.seed)
            } else {
                data::subsample(&data, n_out, filter, self.seed)
            }
            .map_err(Failure::input)?;
        }
        Ok(data)
    }
}

fn cmd_fit(args: FitArgs) -> Result<RunManifest, Failure> {
    let config = args.pipeline_config();
    let mut checksums = BTreeMap::new();
    let data = args.load_input(&mut checksums)?;
    let initial = match &args.metric_in {
        Some(path) => {
            checksums.insert(path.display().to_string(), checksum(path)?);
            Some(MetricState::load_csv(path).map_err(Failure::input)?)
        }
        None => None,
    };
    config.validate_for(&data).map_err(Failure::input)?;

    let algorithm = match args.algorithm {
        AlgorithmArg::Lle => Algorithm::Lle,
        AlgorithmArg::Alle => Algorithm::Alle,
    };
    let result = match (algorithm, initial) {
        (Algorithm::Alle, Some(state)) => pipeline::fit_alle_with_metric(&data, &config, state),
        (Algorithm::Lle, Some(_)) => {
            return Err(Failure::Usage("--metric-in applies to --algorithm alle only".into()))
        }
        (alg, None) => pipeline::fit(&data, alg, &config),
    }
    .map_err(Failure::compute)?;

    let embedding = result.to_data(&data).map_err(Failure::compute)?;
    let mut m = manifest(
        "fit",
        serde_json::json!({ "algorithm": algorithm, "pipeline": config }),
    );
    m.input_checksums = checksums;

    data::write_csv(&args.output, &embedding).map_err(Failure::output)?;
    m.outputs.push(args.output.display().to_string());
    if let Some(path) = &args.metric_out {
        result.metric.write_csv(path).map_err(Failure::output)?;
        m.outputs.push(path.display().to_string());
    }
    if let Some(path) = &args.trace_out {
        let mut text = String::from("epoch,E\n");
        for (epoch, e) in result.error_trace.iter().enumerate() {
            text.push_str(&format!("{},{e}\n", epoch + 1));
        }
        std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        m.outputs.push(path.display().to_string());
    }
    m.summary = Some(serde_json::json!({
        "rows": data.rows(),
        "dim": data.dim(),
        "epochs_run": result.epochs_run,
        "final_error": result.error_trace.last(),
        "eta_guard": result.eta_guard,
        "psd_repairs": result.psd_repairs,
        "eigenvalues": result.embedding.eigenvalues,
    }));
    Ok(m)
}

fn load_labels(path: &Path) -> Result<Vec<usize>, Failure> {
    let table = data::load_csv_table(path).map_err(Failure::input)?;
    if let Some(labels) = table.labels() {
        return Ok(labels.to_vec());
    }
    if table.dim() == 1 {
        return data::load_csv(path, true, Some(0))
            .map(|d| d.labels().map(<[usize]>::to_vec).unwrap_or_default())
            .map_err(Failure::input);
    }
    Err(Failure::Usage(format!(
        "{}: no `label` column and more than one column",
        path.display()
    )))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<RunManifest, Failure> {
    let mut checksums = BTreeMap::new();
    for p in [&args.original, &args.embedding] {
        checksums.insert(p.display().to_string(), checksum(p)?);
    }
    let original = data::load_csv_table(&args.original).map_err(Failure::input)?;
    let embedded = data::load_csv_table(&args.embedding).map_err(Failure::input)?;
    if original.rows() != embedded.rows() {
        return Err(Failure::Usage(format!(
            "row count mismatch: original has {}, embedding has {}",
            original.rows(),
            embedded.rows()
        )));
    }
    let labels = match &args.labels {
        Some(path) => {
            checksums.insert(path.display().to_string(), checksum(path)?);
            let labels = load_labels(path)?;
            if labels.len() != original.rows() {
                return Err(Failure::Usage(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    original.rows()
                )));
            }
            Some(labels)
        }
        None => None,
    };
    let options = EvaluationOptions {
        k: args.k,
        k_classify: args.k_classify,
        split: Split::Stratified {
            test_fraction: args.test_fraction,
            seed: args.seed,
        },
    };
    let config = serde_json::json!({
        "k": args.k,
        "k_classify": args.k_classify,
        "split": options.split,
        "labels": args.labels.is_some(),
    });
    let mut report =
        evaluation::evaluate(&original, &embedded, labels.as_deref(), &options).map_err(Failure::input)?;
    report.config_echo = config.clone();
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&args.output, json + "\n")
        .map_err(|e| Failure::Io(format!("{}: {e}", args.output.display())))?;

    let mut m = manifest("evaluate", config);
    m.input_checksums = checksums;
    m.outputs.push(args.output.display().to_string());
    m.summary = Some(serde_json::to_value(&report).expect("report serializes"));
    Ok(m)
}
