//! Command-line interface: `section`, `evaluate`, `run` and `report`.
//!
//! Exit codes: 0 on success, 1 on fatal input errors, 2 when an adapter fails
//! in strict mode.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::aggregate::{timing_aggregate, AggregateReport};
use crate::corpus::{self, Ingest};
use crate::metrics::{BleuParams, Smoothing};
use crate::pipeline::{self, AdapterCommand, EvaluateOptions, PipelineError, SectionOptions};
use crate::report;
use crate::sectioner::{FuzzyConfig, DEFAULT_FUZZY_THRESHOLD};
use crate::textnorm::NormalizationConfig;

#[derive(Debug, Parser)]
#[command(name = "ocrbench", version, about = "Section, score and report OCR output on food-packaging images")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Normalization config (JSON). Defaults apply when absent.
    #[arg(long, global = true, env = "OCRBENCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Treat irregular input rows and adapter failures as fatal.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Worker threads for per-image work (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Classify raw predictions into ingredient / NFP fields and write the sectioned CSV.
    Section(SectionArgs),
    /// Score a sectioned CSV against ground truth.
    Evaluate(EvaluateArgs),
    /// Run an OCR adapter over a directory of images.
    Run(RunArgs),
    /// Render text tables from one or more summary JSON files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SectionArgs {
    /// Predictions CSV (or a sectioned CSV to re-section).
    pub input: PathBuf,
    /// Sectioned CSV to write.
    pub output: PathBuf,
    /// Fall back to fuzzy anchor matching for unclassified text.
    #[arg(long)]
    pub fuzzy: bool,
    #[arg(long, default_value_t = DEFAULT_FUZZY_THRESHOLD, value_parser = clap::value_parser!(u32).range(0..=100))]
    pub fuzzy_threshold: u32,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub sectioned: PathBuf,
    pub ground_truth: PathBuf,
    /// Directory for metrics.csv, summary.json and summary.txt.
    pub out_dir: PathBuf,
    /// Raw predictions CSV supplying per-image times.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Model name in the summary; defaults to the sectioned file stem.
    #[arg(long)]
    pub model: Option<String>,
    /// Exclude ground-truth pairs without a prediction from the scores.
    #[arg(long)]
    pub skip_missing: bool,
    /// Leave timing out of the summary.
    #[arg(long)]
    pub no_timing: bool,
    /// Write a header-only metrics file when nothing was scored.
    #[arg(long)]
    pub allow_empty: bool,
    /// Disable BLEU smoothing.
    #[arg(long)]
    pub no_smoothing: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Adapter executable.
    pub adapter: PathBuf,
    pub image_dir: PathBuf,
    /// Predictions CSV to write.
    pub output: PathBuf,
    /// Invoke the adapter once on the whole directory.
    #[arg(long)]
    pub batch: bool,
    /// Extra arguments passed to the adapter before `--input`.
    #[arg(last = true)]
    pub adapter_args: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary JSON files; models are listed in argument order.
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    /// Text output (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Merged summary JSON.
    #[arg(long)]
    pub json_output: Option<PathBuf>,
}

fn ingest_mode(global: &GlobalArgs) -> Ingest {
    if global.strict {
        Ingest::Strict
    } else {
        Ingest::Lenient
    }
}

fn load_config(global: &GlobalArgs) -> Result<NormalizationConfig> {
    match &global.config {
        Some(path) => NormalizationConfig::load(path).with_context(|| format!("loading config {}", path.display())),
        None => Ok(NormalizationConfig::default().validated()?),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_section(global: &GlobalArgs, args: &SectionArgs) -> Result<()> {
    let cfg = load_config(global)?;
    let mode = ingest_mode(global);
    let header = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let rows = if corpus::is_sectioned_header(header)? {
        let rows = corpus::load_sectioned(&args.input, mode)?;
        pipeline::resection(&rows, &cfg)
    } else {
        let records = corpus::load_predictions(&args.input, mode)?;
        let fuzzy = if args.fuzzy { Some(FuzzyConfig::new(args.fuzzy_threshold)?) } else { None };
        pipeline::section_predictions(&records, &cfg, SectionOptions { fuzzy, jobs: global.jobs })?
    };
    corpus::write_sectioned(create(&args.output)?, &rows)?;
    log::info!("wrote {} sectioned rows to {}", rows.len(), args.output.display());
    Ok(())
}

fn cmd_evaluate(global: &GlobalArgs, args: &EvaluateArgs) -> Result<()> {
    let cfg = load_config(global)?;
    let mode = ingest_mode(global);
    let sectioned = corpus::load_sectioned(&args.sectioned, mode)?;
    let gt = corpus::load_ground_truth(&args.ground_truth)?;

    let timing = match (&args.predictions, args.no_timing) {
        (Some(path), false) => {
            let records = corpus::load_predictions(path, mode)?;
            match timing_aggregate(&records) {
                Ok(t) => Some(t),
                Err(e) if !global.strict => {
                    log::warn!("timing omitted: {e}");
                    None
                }
                Err(e) => return Err(e.into()),
            }
        }
        _ => None,
    };

    let model_name = args.model.clone().unwrap_or_else(|| {
        args.sectioned.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
    });
    let smoothing = if args.no_smoothing { Smoothing::None } else { Smoothing::Method4 };
    let opts = EvaluateOptions {
        model_name,
        skip_missing: args.skip_missing,
        bleu: BleuParams::uniform(4, smoothing)?,
        jobs: global.jobs,
    };
    let ev = pipeline::evaluate(&sectioned, &gt, timing, &cfg, &opts)?;

    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    report::write_metric_rows(&ev.rows, &args.out_dir.join("metrics.csv"), args.allow_empty)?;
    report::write_summary(
        std::slice::from_ref(&ev.report),
        &args.out_dir.join("summary.json"),
        Some(&args.out_dir.join("summary.txt")),
    )?;
    log::info!("scored {} rows ({} missing)", ev.report.row_count, ev.report.missing_count);
    Ok(())
}

fn cmd_run(global: &GlobalArgs, args: &RunArgs) -> Result<()> {
    let cmd = AdapterCommand {
        program: args.adapter.clone().into_os_string(),
        args: args.adapter_args.iter().map(Into::into).collect(),
    };
    let outcome = pipeline::run_adapter(&cmd, &args.image_dir, args.batch, ingest_mode(global))?;
    corpus::write_predictions(create(&args.output)?, &outcome.records)?;
    if !outcome.failures.is_empty() {
        let list = args.output.with_extension("failed.txt");
        std::fs::write(&list, outcome.failures.join("\n") + "\n")
            .with_context(|| format!("writing {}", list.display()))?;
        log::warn!(
            "adapter failed on {} of {} images; see {}",
            outcome.failures.len(),
            outcome.records.len(),
            list.display()
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut reports: Vec<AggregateReport> = Vec::new();
    for path in &args.summaries {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let summary = report::read_summary(f).with_context(|| format!("reading {}", path.display()))?;
        if summary.version != report::SUMMARY_VERSION {
            bail!("{}: unsupported summary version {}", path.display(), summary.version);
        }
        reports.extend(summary.models);
    }
    let text = report::render_tables(&reports);
    match &args.output {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(p) = &args.json_output {
        std::fs::write(p, report::summary_json(&reports)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Cmd::Section(a) => cmd_section(&cli.global, a),
        Cmd::Evaluate(a) => cmd_evaluate(&cli.global, a),
        Cmd::Run(a) => cmd_run(&cli.global, a),
        Cmd::Report(a) => cmd_report(a),
    }
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    match err.downcast_ref::<PipelineError>() {
        Some(PipelineError::AdapterFailure { .. }) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}
