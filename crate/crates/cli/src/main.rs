//! `wvssl`: preprocessing, pretraining and evaluation pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "wvssl", version, about = "Contrastive self-supervised embeddings for SAR wave-mode imagery")]
pub struct Cli {
    /// TOML (or .json) run configuration layered over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-identical reruns, 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (default: $WVSSL_CACHE, else ./wvssl-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one config value, e.g. `--set pretrain.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic texture corpus (images + manifest).
    Synth,
    /// Turn raw scenes into model-ready 8-bit images.
    Preprocess(PreprocessArgs),
    /// Write augmented view pairs and their sampled parameters.
    AugmentPreview(PreviewArgs),
    /// Contrastive pretraining of the encoder.
    Pretrain(PretrainArgs),
    /// Embed every manifest image with a frozen encoder.
    Embed(EmbedArgs),
    /// Evaluate embeddings (or finetune) with a supervised protocol.
    Probe(ProbeArgs),
    /// Nearest-neighbour retrieval and per-class mAP.
    Retrieve(RetrieveArgs),
    /// Summarize metric files into a table and SVG charts.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Manifest whose paths point at scenes (.wvsc or 16-bit PNG with sidecar).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Inputs are already 8-bit images: only re-encode their centred square.
    #[arg(long)]
    pub bypass: bool,
}

#[derive(Args, Debug)]
pub struct PreviewArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of images to augment.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Pool description replacing `pretrain.pool`.
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Split to train on, or `all` (labels are never read).
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Continue from a checkpoint (its embedded configuration is used).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many completed epochs; the run can be resumed.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, required_unless_present = "random_init")]
    pub checkpoint: Option<PathBuf>,
    /// Use a freshly initialized encoder instead of a checkpoint.
    #[arg(long)]
    pub random_init: bool,
    /// Output file name inside --out.
    #[arg(long, default_value = "embeddings.wvem")]
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Knn,
    Linear,
    Mlp,
    Finetune,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(value_enum)]
    pub protocol: Protocol,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embedding file (frozen protocols).
    #[arg(long, required_unless_present = "checkpoint")]
    pub embeddings: Option<PathBuf>,
    /// Pretrained checkpoint (finetune).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Print the ranked neighbours of one image instead of computing mAP.
    #[arg(long)]
    pub anchor: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Metric files (line-delimited JSON).
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<wvssl::Error>() {
            return if e.is_numerical_error() {
                3
            } else if e.is_data_error() {
                2
            } else {
                1
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{}", error_text(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Top-level message; library errors already embed their source.
fn error_text(e: &anyhow::Error) -> String {
    match e.downcast_ref::<wvssl::Error>() {
        Some(w) => w.to_string(),
        None => format!("{e:#}"),
    }
}
