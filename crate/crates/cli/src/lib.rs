//! The `slb` command. Every stage reads and writes files, so stages compose
//! without hidden state; each prints a one-line JSON summary on success.

pub mod pipeline;
pub mod select;
pub mod session;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::select::Selection;

#[derive(Debug, Parser)]
#[command(name = "slb", version, about = "Self-labeling pipeline and human-robot collaboration toolkit")]
pub struct Cli {
    /// Worker threads for per-recording stages (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth.
    Gen(GenArgs),
    /// Detect weight state changes; writes <rid>.changes.jsonl per recording.
    Detect(DetectArgs),
    /// Fit the interaction-time model from manual labels and change reports.
    FitItm(FitItmArgs),
    /// Turn change reports into intention labels with a fitted model.
    Selflabel(SelflabelArgs),
    /// Sample negative (no-intention) windows away from labels.
    Negatives(NegativesArgs),
    /// Timing metrics of labels relative to state changes.
    Metrics(MetricsArgs),
    /// Score candidate labels against reference labels.
    EvalAgreement(EvalAgreementArgs),
    /// Confusion matrix of per-window class predictions.
    EvalConfusion(EvalConfusionArgs),
    /// Manual labeling hours against self-labeling hours.
    TimeReport(TimeReportArgs),
    /// Serve the annotation endpoints over HTTP.
    ServeAnnotation(ServeAnnotationArgs),
    /// Serve a simulated robot over TCP.
    ServeRobot(ServeRobotArgs),
    /// Write the default waypoint calibration files.
    Calibrate(CalibrateArgs),
    /// Run a classification-to-dispatch session over one recording.
    RunSession(RunSessionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Default,
    Clean,
    ShiftedLab,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario JSON (fields as in the manifest's `config`); overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[arg(long)]
    pub seed: u64,
    /// Override the scenario's recording count.
    #[arg(long)]
    pub recordings: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Detector JSON; defaults apply to missing fields.
    #[arg(long)]
    pub detector: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// `a..b` id range or comma list.
    #[arg(long)]
    pub recordings: Option<Selection>,
}

#[derive(Debug, Args)]
pub struct FitItmArgs {
    /// Checks every labeled recording exists here.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Label directory; repeat together with --changes to pool sources.
    #[arg(long, required = true)]
    pub labels: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub changes: Vec<PathBuf>,
    #[arg(long)]
    pub recordings: Option<Selection>,
    #[arg(long, default_value_t = slb_core::labels::DEFAULT_INTENTION_MS)]
    pub d_ms: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelflabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub itm: PathBuf,
    #[arg(long)]
    pub changes: PathBuf,
    #[arg(long)]
    pub recordings: Option<Selection>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NegativesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub per_class: usize,
    #[arg(long)]
    pub seed: u64,
    /// Clearance kept around every label.
    #[arg(long, default_value_t = 0)]
    pub margin_ms: i64,
    #[arg(long, default_value_t = slb_core::labels::DEFAULT_INTENTION_MS)]
    pub d_ms: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub changes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalAgreementArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long, default_value_t = 0.5, conflicts_with = "onset_ms")]
    pub iou: f64,
    /// Match on onset distance instead of IoU.
    #[arg(long)]
    pub onset_ms: Option<i64>,
    #[arg(long)]
    pub recordings: Option<Selection>,
    /// Also write the full report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalConfusionArgs {
    /// JSONL, one class per line: a bare integer or {"class_id": n}.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TimeReportArgs {
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub minutes_per_label: f64,
    #[arg(long)]
    pub slb_hours: f64,
    /// Print the full report as JSON instead.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeAnnotationArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Label directory; `<corpus>/labels` by default.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct ServeRobotArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 30002)]
    pub port: u16,
    /// Metres (and radians) per second.
    #[arg(long, default_value_t = 0.5)]
    pub speed: f64,
    #[arg(long, default_value_t = 8)]
    pub tick_ms: i64,
    /// Run the motion clock this many times faster than real time.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub classes: u32,
    /// Replace existing waypoint files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RunSessionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub recording: String,
    /// `sim` for an in-process robot, or host:port of a robot server.
    #[arg(long, default_value = "sim")]
    pub robot: String,
    /// `oracle`, `noisy:<accuracy>` or `scripted:<file>`.
    #[arg(long)]
    pub classifier: String,
    /// Ground-truth labels for oracle and noisy modes; `<corpus>/truth` by default.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub waypoints: PathBuf,
    #[arg(long)]
    pub detector: Option<PathBuf>,
    /// Required for noisy classifiers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dispatch only the next SOP class, or any remaining one.
    #[arg(long, default_value = "strict")]
    pub mode: String,
    #[arg(long, default_value_t = 0.5)]
    pub min_confidence: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("building worker pool")?;
    pool.install(|| dispatch(cli.command))
}

fn print(v: serde_json::Value) {
    println!("{v}");
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => print(pipeline::gen(&a)?),
        Command::Detect(a) => print(pipeline::detect(&a)?),
        Command::FitItm(a) => print(pipeline::fit(&a)?),
        Command::Selflabel(a) => print(pipeline::selflabel(&a)?),
        Command::Negatives(a) => print(pipeline::negatives(&a)?),
        Command::Metrics(a) => print(pipeline::metrics(&a)?),
        Command::EvalAgreement(a) => print(pipeline::eval_agreement(&a)?),
        Command::EvalConfusion(a) => print(pipeline::eval_confusion(&a)?),
        Command::TimeReport(a) => {
            let r = slb_core::eval::time_savings(a.samples, a.minutes_per_label, a.slb_hours)?;
            if a.json {
                print(serde_json::to_value(&r)?);
            } else {
                println!("manual {:.1} h, saved {:.1} h", r.manual_hours, r.saved_hours);
            }
        }
        Command::ServeAnnotation(a) => session::serve_annotation(&a)?,
        Command::ServeRobot(a) => session::serve_robot(&a)?,
        Command::Calibrate(a) => print(session::calibrate(&a)?),
        Command::RunSession(a) => print(session::run(&a)?),
    }
    Ok(())
}
