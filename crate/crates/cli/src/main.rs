//! `newsocr`: every pipeline stage and every evaluation as a subcommand.
//!
//! Exit status is 0 when everything succeeded, 1 when some samples failed
//! (their failures are logged and recorded), and 2 for usage, configuration
//! or input errors that stop the command.

mod commands;
mod config;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use logging::LogFormat;

#[derive(Debug, Parser)]
#[command(name = "newsocr", version, about = "Segment, upscale, transcribe and score newspaper page scans")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config whose tables mirror the pipeline configuration,
    /// plus optional [degrade] and [eval] tables
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set upscaler.tile_size=128`; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads for local stages [default: logical CPUs]
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print machine output to stdout instead of writing it to files
    #[arg(long, global = true)]
    stdout: bool,
    /// Diagnostics format on stderr
    #[arg(long, global = true, value_enum, default_value = "text")]
    log: LogFormat,
    /// Only warnings and errors on stderr
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Article,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Replay,
    Neural,
    Bicubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    #[value(name = "openai_compat")]
    OpenaiCompat,
    Anthropic,
    Google,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TierArg {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AveragingArg {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefusalArg {
    Exclude,
    Penalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PsnrArg {
    Rgb,
    Luma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Machine,
}

/// Detector settings shared by `segment`.
#[derive(Debug, Args)]
pub struct DetectorFlags {
    /// Backend (`<stage>.backend`)
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Replay detections jsonl (`<stage>.fixture`)
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// ONNX detector (`<stage>.model_path`)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Square model input side (`<stage>.input_size`)
    #[arg(long)]
    input_size: Option<u32>,
    /// Minimum confidence (`<stage>.confidence_threshold`)
    #[arg(long)]
    confidence: Option<f64>,
    /// NMS IoU threshold (`<stage>.nms_iou_threshold`)
    #[arg(long)]
    nms_iou: Option<f64>,
}

/// Upscaler settings shared by `enhance`.
#[derive(Debug, Args)]
pub struct UpscalerFlags {
    /// Backend (`upscaler.backend`)
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Replay directory of `<digest>.png` outputs (`upscaler.fixture`)
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// ONNX upscaler (`upscaler.model_path`)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Upscale factor (`upscaler.scale`)
    #[arg(long)]
    scale: Option<u32>,
    /// Tile side in input pixels (`upscaler.tile_size`)
    #[arg(long)]
    tile_size: Option<u32>,
    /// Tile overlap in input pixels (`upscaler.tile_overlap`)
    #[arg(long)]
    tile_overlap: Option<u32>,
}

/// Recognizer settings shared by `recognize`.
#[derive(Debug, Args)]
pub struct RecognizerFlags {
    /// Provider protocol (`recognizer.provider_kind`)
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    /// Model identifier sent to the provider (`recognizer.model_name`)
    #[arg(long)]
    model_name: Option<String>,
    /// API base URL (`recognizer.endpoint`)
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key (`recognizer.api_key_env`)
    #[arg(long)]
    api_key_env: Option<String>,
    /// Sampling temperature (`recognizer.temperature`)
    #[arg(long)]
    temperature: Option<f64>,
    /// Output token cap (`recognizer.max_output_tokens`)
    #[arg(long)]
    max_output_tokens: Option<u32>,
    /// Request rate cap (`recognizer.requests_per_minute`)
    #[arg(long)]
    requests_per_minute: Option<u32>,
    /// In-flight request cap (`recognizer.max_concurrency`)
    #[arg(long)]
    max_concurrency: Option<u32>,
    /// Per-request timeout (`recognizer.timeout_secs`)
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Replay transcripts jsonl (`recognizer.replay_fixture`)
    #[arg(long)]
    replay_fixture: Option<PathBuf>,
    /// Built-in prompt profile (`recognizer.prompt_profile`)
    #[arg(long)]
    prompt_profile: Option<String>,
    /// Response cache directory (`recognizer.cache_dir`)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

/// OCR scoring settings.
#[derive(Debug, Args)]
pub struct OcrFlags {
    /// Refusal rate above which a tier is reported as Fail (`eval.failure_threshold`)
    #[arg(long)]
    failure_threshold: Option<f64>,
    /// Averaging over samples (`eval.averaging`)
    #[arg(long, value_enum)]
    averaging: Option<AveragingArg>,
    /// How refusals enter WER/CER (`eval.refusals`)
    #[arg(long, value_enum)]
    refusals: Option<RefusalArg>,
}

/// Where evaluation reports go.
#[derive(Debug, Args)]
pub struct ReportOut {
    /// Directory for report.md and report.jsonl
    #[arg(long, required_unless_present = "stdout")]
    out: Option<PathBuf>,
    /// Format printed with --stdout
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build low/high-resolution pairs: box downscale, then lossy JPEG
    Degrade {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for low/, high/ and pairs.jsonl
        #[arg(long)]
        out: PathBuf,
        /// Downscale factor (`degrade.scale_factor`)
        #[arg(long)]
        scale: Option<u32>,
        /// Points taken off the base JPEG quality (`degrade.quality_reduction`)
        #[arg(long)]
        quality_reduction: Option<u8>,
        /// JPEG quality before the reduction (`degrade.base_quality`)
        #[arg(long)]
        base_quality: Option<u8>,
    },
    /// Detect article or column regions on every manifest image
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        /// Which detector table to use
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Detections jsonl to write
        #[arg(long, required_unless_present = "stdout")]
        out: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorFlags,
    },
    /// Upscale every manifest image
    Enhance {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for <id>.png and enhanced.jsonl
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        upscaler: UpscalerFlags,
    },
    /// Transcribe every manifest image with a vision LLM
    Recognize {
        #[arg(long)]
        manifest: PathBuf,
        /// Outcomes jsonl to write
        #[arg(long, required_unless_present = "stdout")]
        out: Option<PathBuf>,
        #[command(flatten)]
        recognizer: RecognizerFlags,
    },
    /// Run all four stages over a manifest
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        /// Run directory (`output_root`)
        #[arg(long)]
        output_root: Option<PathBuf>,
        /// Keep crops and upscaled images (`keep_intermediates`)
        #[arg(long)]
        keep_intermediates: Option<bool>,
        /// Article crop padding in page pixels (`crop_padding`)
        #[arg(long)]
        crop_padding: Option<f64>,
    },
    /// Score detections against YOLO labels
    EvalDet {
        /// Detections jsonl from `segment`
        #[arg(long)]
        pred: PathBuf,
        /// Manifest with `labels`
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Restrict to one task [default: every task in the predictions]
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Score transcripts with WER and CER
    EvalOcr {
        /// Outcomes jsonl from `recognize`, or a pipeline run.jsonl
        #[arg(long)]
        hyp: PathBuf,
        /// Manifest with reference `text`
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Resolution tier the transcripts belong to
        #[arg(long, value_enum, default_value = "high")]
        tier: TierArg,
        /// Model name to report under [default: as recorded]
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        ocr: OcrFlags,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Score upscaled images against references with PSNR
    EvalPsnr {
        /// Manifest whose `image` is the output and `pair` the reference
        #[arg(long)]
        manifest: PathBuf,
        /// Channels compared (`eval.psnr_mode`)
        #[arg(long, value_enum)]
        mode: Option<PsnrArg>,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Merge machine reports into one, pairing low and high tiers per model
    Report {
        /// report.jsonl files from the eval commands; repeatable
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        report: ReportOut,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init(cli.global.log, cli.global.quiet);
    match commands::run(cli.command, &cli.global) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            log::warn!(target: "run", failed_samples = failed; "finished with failures");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!(target: "run", "{e:#}");
            ExitCode::from(2)
        }
    }
}
