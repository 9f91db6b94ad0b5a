//! `readmit` — train readmission classifiers on tabular cohorts and audit
//! their predictions for group fairness.
//!
//! Audit-style subcommands follow the CI-gate exit-code contract:
//! 0 = all parity tests pass, 2 = at least one fail, 3 = indeterminate-only
//! issues, 1 = execution error.

use anyhow::{bail, Context, Result};
use clap::builder::ArgPredicate;
use clap::{Args, Parser, Subcommand};
use readmit_core::cohortgen::{generate_cohort, CohortConfig};
use readmit_core::evalmetrics::{confusion, scores};
use readmit_core::fairaudit::clinical_references;
use readmit_core::learners::{
    grid_search_cv, parse_grid_json, predict_proba, threshold_labels, train, ModelFamily,
    ModelSpec, TrainedModel,
};
use readmit_core::report::{
    artifacts, audit_config_for, compose_report, read_predictions, render, run_pipeline,
    sensitive_tokens, sha256_hex_file, AuditReport, AuditSection,
    ClassificationSummary, PipelineConfig, RenderFormat,
};
use readmit_core::tabular::{
    apply_cohort_filter, derive_readmission_label, load_admissions, load_dataset, load_schema,
    save_schema, write_dataset_csv, CategoricalEncoding, Dataset, PreprocessStats,
};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const CONFIG_ENV: &str = "READMIT_CONFIG";

#[derive(Parser)]
#[command(name = "readmit", version, about)]
struct Cli {
    /// Suppress progress output on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (CSV + schema + ground-truth manifest)
    Synth(SynthArgs),
    /// Derive 30-day readmission labels from admission records
    DeriveLabel(DeriveLabelArgs),
    /// Train a classifier, optionally with grid-search cross-validation
    Train(TrainArgs),
    /// Score a trained model on a dataset
    Evaluate(EvaluateArgs),
    /// Audit saved predictions for group fairness
    Audit(AuditArgs),
    /// Run the full pipeline: ingest, split, train, evaluate, audit
    Pipeline(PipelineArgs),
    /// Re-render a saved report
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Cohort config JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DeriveLabelArgs {
    /// Admissions CSV (patient_id, admission_id, admit_time, discharge_time,
    /// age, died_in_hospital, unit_transfer, is_icu_stay)
    #[arg(long)]
    admissions: PathBuf,
    /// Readmission window in days
    #[arg(long, default_value_t = 30.0)]
    window_days: f64,
    /// Apply the cohort filter (adults, ICU, survived, no transfer, first
    /// stay) before labeling
    #[arg(long)]
    cohort_filter: bool,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Model family: naive_bayes, logistic, glm or mlp
    #[arg(long)]
    family: ModelFamily,
    /// Hyperparameter grid JSON; omitted = family defaults, no search
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Training data CSV
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the model JSON
    #[arg(long)]
    out: PathBuf,
    /// Write cross-validation results here (requires --grid)
    #[arg(long)]
    cv_out: Option<PathBuf>,
    /// Treat unparseable cells as missing instead of failing
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Predictions CSV (row_id, probability, predicted_label)
    #[arg(long)]
    predictions: PathBuf,
    /// The audited rows (labels + sensitive attributes)
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Sensitive attributes to audit (default: all sensitive schema columns)
    #[arg(long, value_delimiter = ',')]
    attributes: Option<Vec<String>>,
    /// Fixed reference groups, e.g. `insurance=Medicare,gender=M`, or the
    /// keyword `clinical` for the standard clinical mapping; omitted =
    /// largest group per attribute
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    reference: Option<Vec<String>>,
    /// Pass band lower edge; a ratio passes iff tau <= ratio <= 1/tau
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    min_group_size: u64,
    /// Only fail FPRP/FNRP above the band (lower error than the reference
    /// passes)
    #[arg(long)]
    one_sided_error_rates: bool,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Omit the timestamp for byte-identical reruns
    #[arg(long)]
    no_timestamp: bool,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline config JSON (default: the READMIT_CONFIG environment
    /// variable)
    #[arg(long, env = CONFIG_ENV)]
    config: PathBuf,
    /// Output directory (default: the config directory's `run/`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// A saved report JSON
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "text", default_value_if("out", ArgPredicate::IsPresent, "json"))]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are not errors; anything else is an
            // execution error (exit 1), keeping 2 reserved for parity fails
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args, cli.quiet),
        Command::DeriveLabel(args) => cmd_derive_label(args),
        Command::Train(args) => cmd_train(args, cli.quiet),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Pipeline(args) => cmd_pipeline(args, cli.quiet),
        Command::Report(args) => cmd_report(args),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {path:?}"))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs, quiet: bool) -> Result<u8> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {:?}", args.config))?;
    let mut config: CohortConfig = serde_json::from_str(&text).context("parsing cohort config")?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (dataset, manifest) = generate_cohort(&config)?;
    fs::create_dir_all(&args.out)?;
    write_dataset_csv(&dataset, &args.out.join(artifacts::COHORT_CSV))?;
    save_schema(dataset.schema(), &args.out.join(artifacts::SCHEMA_JSON))?;
    fs::write(
        args.out.join(artifacts::MANIFEST_JSON),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    if !quiet {
        eprintln!(
            "wrote {} rows to {:?} (cohort.csv, schema.json, manifest.json)",
            dataset.n_rows(),
            args.out
        );
    }
    Ok(0)
}

fn cmd_derive_label(args: DeriveLabelArgs) -> Result<u8> {
    let records = load_admissions(&args.admissions)?;
    let records = if args.cohort_filter {
        apply_cohort_filter(&records)
    } else {
        records
    };
    if records.is_empty() {
        bail!("no admissions left after filtering");
    }
    let labels = derive_readmission_label(&records, args.window_days)?;
    let mut text = String::from("admission_id,label\n");
    for (id, label) in &labels {
        text.push_str(&format!("{id},{label}\n"));
    }
    emit(&args.out, &text)?;
    Ok(0)
}

fn load_data(csv: &Path, schema: &Path, lenient: bool) -> Result<Dataset> {
    let schema = load_schema(schema).with_context(|| format!("loading schema {schema:?}"))?;
    Ok(load_dataset(csv, &schema, !lenient).with_context(|| format!("loading {csv:?}"))?)
}

fn cmd_train(args: TrainArgs, quiet: bool) -> Result<u8> {
    let raw = load_data(&args.data, &args.schema, args.lenient)?;
    let encoding = match args.family {
        ModelFamily::NaiveBayes => CategoricalEncoding::Keep,
        _ => CategoricalEncoding::OneHot,
    };
    let stats = PreprocessStats::fit(&raw, encoding);
    let transformed = stats.transform(&raw)?;

    let spec = match &args.grid {
        Some(grid_path) => {
            let grid_text = fs::read_to_string(grid_path)
                .with_context(|| format!("reading {grid_path:?}"))?;
            let grid = parse_grid_json(&grid_text)?;
            let cv = grid_search_cv(args.family, &grid, &transformed, args.seed)?;
            if !quiet {
                eprintln!(
                    "grid search: {} candidates, best mean F1 {:.4}",
                    cv.candidates.len(),
                    cv.best().mean_score
                );
            }
            if let Some(cv_out) = &args.cv_out {
                fs::write(cv_out, serde_json::to_string_pretty(&cv)? + "\n")?;
            }
            cv.best().spec.clone()
        }
        None => ModelSpec::new(args.family),
    };
    let mut model = train(&spec, &transformed, args.seed)?;
    model.preprocess = Some(stats);
    fs::write(&args.out, model.to_json()? + "\n")
        .with_context(|| format!("writing {:?}", args.out))?;
    if !quiet {
        eprintln!("model written to {:?}", args.out);
    }
    Ok(0)
}

fn transform_for_model(model: &TrainedModel, raw: &Dataset) -> Result<Dataset> {
    let stats = model
        .preprocess
        .as_ref()
        .context("model file carries no preprocessing statistics")?;
    Ok(stats.transform(raw)?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<u8> {
    let model_text =
        fs::read_to_string(&args.model).with_context(|| format!("reading {:?}", args.model))?;
    let model = TrainedModel::from_json(&model_text)?;
    let raw = load_data(&args.data, &args.schema, args.lenient)?;
    let transformed = transform_for_model(&model, &raw)?;
    let probs = predict_proba(&model, &transformed)?;
    let preds = threshold_labels(&probs, args.threshold);
    let y_true = raw.label_values()?;
    let cm = confusion(&y_true, &preds)?;
    let s = scores(&cm);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or("undefined".into());
    let text = match args.format.as_str() {
        "json" => {
            serde_json::to_string_pretty(&ClassificationSummary {
                confusion: cm,
                scores: s,
            })? + "\n"
        }
        "text" => format!(
            "rows: {}\nconfusion: tp {} fp {} fn {} tn {}\nprecision: {}\nrecall: {}\nf1: {}\n",
            raw.n_rows(),
            cm.tp,
            cm.fp,
            cm.fn_,
            cm.tn,
            fmt(s.precision),
            fmt(s.recall),
            fmt(s.f1),
        ),
        other => bail!("unknown format {other:?} (expected json or text)"),
    };
    emit(&args.out, &text)?;
    Ok(0)
}

fn parse_references(raw: &[String]) -> Result<BTreeMap<String, String>> {
    if raw.len() == 1 && raw[0] == "clinical" {
        return Ok(clinical_references());
    }
    let mut map = BTreeMap::new();
    for pair in raw {
        let (attr, group) = pair
            .split_once('=')
            .with_context(|| format!("bad reference {pair:?}, expected attribute=group"))?;
        map.insert(attr.trim().to_string(), group.trim().to_string());
    }
    Ok(map)
}

fn cmd_audit(args: AuditArgs) -> Result<u8> {
    let raw = load_data(&args.data, &args.schema, args.lenient)?;
    let (probs, preds) = read_predictions(&args.predictions)?;
    if preds.len() != raw.n_rows() {
        bail!(
            "predictions cover {} rows but the dataset has {}",
            preds.len(),
            raw.n_rows()
        );
    }
    let _ = probs;
    let y_true = raw.label_values()?;

    let section = AuditSection {
        attributes: args.attributes.clone(),
        references: match &args.reference {
            Some(raw_refs) => Some(parse_references(raw_refs)?),
            None => None,
        },
        tau: args.tau,
        min_group_size: args.min_group_size,
        one_sided_error_rates: args.one_sided_error_rates,
    };
    let cfg = audit_config_for(&section, &raw);
    let tokens = sensitive_tokens(&raw, &cfg.sensitive_attributes)?;
    let audit = readmit_core::fairaudit::run_audit(&y_true, &preds, &tokens, &cfg)?;

    let cm = confusion(&y_true, &preds)?;
    let report = compose_report(
        audit,
        Some(ClassificationSummary {
            confusion: cm,
            scores: scores(&cm),
        }),
        sha256_hex_file(&args.data)?,
        None,
        args.seed,
        !args.no_timestamp,
    );
    let format: RenderFormat = args.format.parse()?;
    emit(&args.out, &render(&report, format)?)?;
    Ok(report.exit_code() as u8)
}

fn cmd_pipeline(args: PipelineArgs, quiet: bool) -> Result<u8> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {:?}", args.config))?;
    let mut config = PipelineConfig::from_json(&text).context("parsing pipeline config")?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out_dir = args.out.unwrap_or_else(|| {
        args.config
            .parent()
            .unwrap_or(Path::new("."))
            .join("run")
    });
    let run = run_pipeline(&config, &out_dir, !args.no_timestamp)?;
    let format: RenderFormat = args.format.parse()?;
    print!("{}", render(&run.report, format)?);
    if !quiet {
        eprintln!("artifacts in {out_dir:?}");
    }
    Ok(run.report.exit_code() as u8)
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let text =
        fs::read_to_string(&args.report).with_context(|| format!("reading {:?}", args.report))?;
    let report = AuditReport::from_json(&text)?;
    let format: RenderFormat = args.format.parse()?;
    emit(&args.out, &render(&report, format)?)?;
    Ok(0)
}
