//! Command-line surface for explanation-consistency evaluation.
//!
//! Subcommands: `evaluate` (full run from a manifest or flags), `explain`
//! (batch-generate explanations with a reference explainer), `demo`
//! (synthetic end-to-end showcase) and `stats` (summaries from an existing
//! report.json). Exit codes: 0 success, 1 validation error, 2 runtime
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ecf::axioms::{evaluate, EcfConfig, EvaluationReport, ExplanationSource};
use ecf::core::{build_augmented, ClusteringChoice, ObjectSet, PredictionVector, Task};
use ecf::error::EcfError;
use ecf::explainers::{
    default_kernel_width, explain_all, fit_linear, Explainer, KnnModel, KnnTargets,
    PredictionModel, SamplingSummary, ShapleyExplainer, SurrogateExplainer,
    SHAPLEY_DEFAULT_BACKGROUND_CAP, SURROGATE_DEFAULT_SAMPLES,
};
use ecf::{io, report, PairCounting};

#[derive(Parser)]
#[command(
    name = "ecf",
    version,
    about = "Score explanation methods against the identity, separability and stability checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full consistency evaluation and write report files
    Evaluate(EvaluateArgs),
    /// Batch-generate explanations to CSV with a reference explainer
    Explain(ExplainArgs),
    /// Generate seeded synthetic datasets and run the whole suite on them
    Demo(DemoArgs),
    /// Print count and summary statistics from an existing report.json
    Stats(StatsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    /// Exact Shapley attribution with marginal masking
    Shapley,
    /// Seeded local linear surrogate
    Surrogate,
    /// Local linear surrogate with fresh entropy per call
    SurrogateSeedless,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Shapley => "shapley",
            MethodArg::Surrogate => "surrogate",
            MethodArg::SurrogateSeedless => "surrogate-seedless",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ClusteringArg {
    Kmeans,
    AgnesSingle,
    AgnesWard,
}

impl From<ClusteringArg> for ClusteringChoice {
    fn from(value: ClusteringArg) -> Self {
        match value {
            ClusteringArg::Kmeans => ClusteringChoice::KmeansInformed,
            ClusteringArg::AgnesSingle => ClusteringChoice::AgnesSingle,
            ClusteringArg::AgnesWard => ClusteringChoice::AgnesWard,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PairCountingArg {
    Ordered,
    Unordered,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModelArg {
    /// k-nearest-neighbour model fit to the prediction file (k = 5)
    Knn,
    /// Least-squares linear model fit to the prediction file
    Linear,
}

/// Flags that override manifest values.
#[derive(Args)]
struct OverrideArgs {
    /// Seed for every sampled heuristic and explainer subsampling
    #[arg(long)]
    seed: Option<u64>,
    /// Quantile bin count for the binned regression fallback
    #[arg(long)]
    bins: Option<usize>,
    /// Clustering backend for the classification stability check
    #[arg(long, value_enum)]
    clustering: Option<ClusteringArg>,
    /// Pair counting convention for separability
    #[arg(long, value_enum)]
    pair_counting: Option<PairCountingArg>,
    /// Relative-or-absolute equality tolerance
    #[arg(long)]
    tolerance: Option<f64>,
    /// Row count up to which the exact formulations run
    #[arg(long)]
    exact_threshold: Option<usize>,
    /// Explainer invocations per object in the identity check
    #[arg(long)]
    identity_repeats: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON run manifest; explicit flags take precedence over it
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Feature CSV (header row, numeric cells)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Single-column prediction CSV
    #[arg(long)]
    preds: Option<PathBuf>,
    /// Pre-computed explanation CSV (header must match the dataset)
    #[arg(long)]
    expl: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Evaluate a reference explainer instead of a static explanation file
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Reference model the explainer wraps, fit to data + preds
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Background CSV for Shapley masking / surrogate sampling (defaults to --data)
    #[arg(long)]
    background: Option<PathBuf>,
    /// Output directory for report files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Method name recorded in the report
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "knn")]
    model: ModelArg,
    #[arg(long)]
    background: Option<PathBuf>,
    /// Output CSV path, row-aligned with --data
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DemoArgs {
    /// Output directory
    #[arg(long, default_value = "ecf-demo")]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    /// report.json path (or a directory containing one)
    #[arg(long)]
    report: PathBuf,
}

/// Run manifest: the file form of an `evaluate` invocation.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    dataset: Option<PathBuf>,
    predictions: Option<PathBuf>,
    explanations: Option<PathBuf>,
    task: Option<TaskArg>,
    method: Option<MethodArg>,
    model: Option<ModelArg>,
    background: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    name: Option<String>,
    seed: Option<u64>,
    bins: Option<usize>,
    clustering: Option<ClusteringArg>,
    pair_counting: Option<PairCountingArg>,
    tolerance: Option<f64>,
    exact_threshold: Option<usize>,
    identity_repeats: Option<usize>,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<EcfError> for CliError {
    fn from(e: EcfError) -> Self {
        match e {
            EcfError::Io { .. } | EcfError::ExplainerFailure { .. } => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ecf::apply_thread_cap();
    let outcome = match cli.command {
        Command::Evaluate(args) => run_evaluate(args),
        Command::Explain(args) => run_explain(args),
        Command::Demo(args) => run_demo(args),
        Command::Stats(args) => run_stats(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Input files are part of argument validation: an unreadable path is the
/// caller's mistake, not a runtime failure.
fn load_input<T>(result: Result<T, EcfError>) -> Result<T, CliError> {
    result.map_err(|e| match e {
        EcfError::Io { .. } => CliError::Validation(e.to_string()),
        other => other.into(),
    })
}

fn build_config(manifest: &RunManifest, flags: &OverrideArgs) -> Result<EcfConfig, CliError> {
    let mut config = EcfConfig::default();
    if let Some(seed) = flags.seed.or(manifest.seed) {
        config.seed = seed;
    }
    if let Some(bins) = flags.bins.or(manifest.bins) {
        config.regression_bins = bins;
    }
    if let Some(clustering) = flags.clustering.or(manifest.clustering) {
        config.stability_clustering = clustering.into();
    }
    if let Some(counting) = flags.pair_counting.or(manifest.pair_counting) {
        config.pair_counting = match counting {
            PairCountingArg::Ordered => PairCounting::Ordered,
            PairCountingArg::Unordered => PairCounting::Unordered,
        };
    }
    if let Some(tolerance) = flags.tolerance.or(manifest.tolerance) {
        config.equality_tolerance = tolerance;
    }
    if let Some(threshold) = flags.exact_threshold.or(manifest.exact_threshold) {
        config.exact_threshold = threshold;
    }
    if let Some(repeats) = flags.identity_repeats.or(manifest.identity_repeats) {
        config.identity_repeats = repeats;
    }
    config.validate()?;
    Ok(config)
}

fn load_background(
    objects: &ObjectSet,
    background: Option<&Path>,
    data_path: &Path,
) -> Result<ObjectSet, CliError> {
    let path = background.unwrap_or(data_path);
    let set = load_input(io::load_dataset(path))?;
    if set.feature_names() != objects.feature_names() {
        return Err(CliError::Validation(format!(
            "{}: background header does not match dataset header",
            path.display()
        )));
    }
    Ok(set)
}

fn build_model(
    objects: &ObjectSet,
    predictions: &PredictionVector,
    model: ModelArg,
) -> Result<Box<dyn PredictionModel>, CliError> {
    match model {
        ModelArg::Knn => {
            let k = 5.min(objects.len());
            let targets = match predictions {
                PredictionVector::Regression { values } => KnnTargets::Regression(values.clone()),
                PredictionVector::Classification { labels, .. } => {
                    KnnTargets::Classification(labels.clone())
                }
            };
            Ok(Box::new(KnnModel::new(
                objects.features().clone(),
                targets,
                k,
            )?))
        }
        ModelArg::Linear => {
            let targets: Vec<f64> = (0..predictions.len()).map(|i| predictions.numeric(i)).collect();
            Ok(Box::new(fit_linear(objects.features(), &targets)?))
        }
    }
}

fn build_explainer(
    method: MethodArg,
    model: Box<dyn PredictionModel>,
    background: &ObjectSet,
    seed: u64,
) -> Result<(Box<dyn Explainer>, String), CliError> {
    match method {
        MethodArg::Shapley => {
            let explainer = ShapleyExplainer::with_background_cap(
                model,
                background.features(),
                SHAPLEY_DEFAULT_BACKGROUND_CAP,
                seed,
            )?;
            let description = format!(
                "exact Shapley, marginal masking over {} background rows (cap {}, seed {seed})",
                explainer.background().nrows(),
                SHAPLEY_DEFAULT_BACKGROUND_CAP
            );
            Ok((Box::new(explainer), description))
        }
        MethodArg::Surrogate | MethodArg::SurrogateSeedless => {
            let seed_opt = match method {
                MethodArg::Surrogate => Some(seed),
                _ => None,
            };
            let m = model.num_features();
            let explainer = SurrogateExplainer::new(
                model,
                SamplingSummary::from_training(background.features()),
                SURROGATE_DEFAULT_SAMPLES,
                default_kernel_width(m),
                seed_opt,
            )?;
            let description = match seed_opt {
                Some(s) => format!(
                    "local linear surrogate, {SURROGATE_DEFAULT_SAMPLES} samples, seed {s}"
                ),
                None => format!(
                    "local linear surrogate, {SURROGATE_DEFAULT_SAMPLES} samples, seedless"
                ),
            };
            Ok((Box::new(explainer), description))
        }
    }
}

fn print_report_summary(report: &EvaluationReport, written: &[PathBuf]) {
    let line = |name: &str, v: &ecf::AxiomVerdict| {
        println!(
            "{name:>13}: {:>9.4}% satisfied ({} violated / {} checks)",
            v.satisfied_fraction * 100.0,
            v.violated,
            v.checks_total
        );
    };
    println!("method {} ({})", report.method_name, report.task);
    match &report.identity {
        Some(v) => line("identity", v),
        None => println!("{:>13}: not assessed (static explanation set)", "identity"),
    }
    line("separability", &report.separability);
    line("stability", &report.stability);
    println!("{:>13}: {}", "stability via", report.stability_method);
    for path in written {
        println!("wrote {}", path.display());
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let manifest = match &args.manifest {
        Some(path) => load_manifest(path)?,
        None => RunManifest::default(),
    };
    let config = build_config(&manifest, &args.overrides)?;

    let data_path = args
        .data
        .or(manifest.dataset)
        .ok_or_else(|| CliError::Validation("missing --data (or manifest dataset)".into()))?;
    let preds_path = args
        .preds
        .or(manifest.predictions)
        .ok_or_else(|| CliError::Validation("missing --preds (or manifest predictions)".into()))?;
    let task = args
        .task
        .or(manifest.task)
        .ok_or_else(|| CliError::Validation("missing --task (or manifest task)".into()))?;
    let out_dir = args
        .out
        .or(manifest.out_dir)
        .unwrap_or_else(|| PathBuf::from("ecf-out"));

    let objects = load_input(io::load_dataset(&data_path))?;
    let predictions = load_input(io::load_predictions(&preds_path, task.into()))?;

    let expl_path = args.expl.or(manifest.explanations);
    let method = args.method.or(manifest.method);
    let report = match (expl_path, method) {
        (Some(path), None) => {
            let explanations = load_input(io::load_explanations(&path, objects.feature_names()))?;
            let name = args.name.or(manifest.name).unwrap_or_else(|| "static".into());
            evaluate(
                &objects,
                &predictions,
                ExplanationSource::Static(&explanations),
                &name,
                &config,
            )?
        }
        (None, Some(method)) => {
            let background = load_background(&objects, args.background.as_deref().or(manifest.background.as_deref()), &data_path)?;
            let model = build_model(&objects, &predictions, args.model.or(manifest.model).unwrap_or(ModelArg::Knn))?;
            let (explainer, description) =
                build_explainer(method, model, &background, config.seed)?;
            let name = args
                .name
                .or(manifest.name)
                .unwrap_or_else(|| method.name().to_string());
            evaluate(
                &objects,
                &predictions,
                ExplanationSource::Callable {
                    explainer: explainer.as_ref(),
                    description: Some(description),
                },
                &name,
                &config,
            )?
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "provide either --expl or --method, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Validation(
                "provide --expl (static explanations) or --method (reference explainer)".into(),
            ))
        }
    };

    let written = report::write_report(&report, &out_dir)?;
    print_report_summary(&report, &written);
    Ok(())
}

fn run_explain(args: ExplainArgs) -> Result<(), CliError> {
    let objects = load_input(io::load_dataset(&args.data))?;
    let predictions = load_input(io::load_predictions(&args.preds, args.task.into()))?;
    let background = load_background(&objects, args.background.as_deref(), &args.data)?;
    let model = build_model(&objects, &predictions, args.model)?;
    let (explainer, _) = build_explainer(args.method, model, &background, args.seed)?;
    let names = objects.feature_names().to_vec();
    let augmented = build_augmented(objects, predictions)?;
    let explanations = explain_all(explainer.as_ref(), &augmented)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
        }
    }
    io::write_matrix_csv(&args.out, &names, explanations.importances())?;
    println!(
        "wrote {} ({} rows, {} columns)",
        args.out.display(),
        explanations.len(),
        explanations.num_features()
    );
    Ok(())
}

fn run_demo(args: DemoArgs) -> Result<(), CliError> {
    let output = ecf::demo::run(&args.out, args.seed)?;
    println!("demo outputs under {}", args.out.display());
    for report in [
        &output.regression_shapley,
        &output.regression_surrogate,
        &output.classification_shapley,
    ] {
        println!();
        print_report_summary(report, &[]);
    }
    Ok(())
}

fn run_stats(args: StatsArgs) -> Result<(), CliError> {
    let path = if args.report.is_dir() {
        args.report.join("report.json")
    } else {
        args.report.clone()
    };
    let report = load_input(report::read_report(&path))?;
    for line in report::stats_lines(&report) {
        println!("{line}");
    }
    Ok(())
}
