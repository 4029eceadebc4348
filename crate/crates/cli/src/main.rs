mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perfnet_core::{Error, Result};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "perfnet", version, about = "Pose-rendered multi-stream action recognition on synthetic clips")]
struct Cli {
    /// Experiment config (flat key = value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded run with byte-identical outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct ClipSelection {
    /// Dataset split to read clips from.
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Clip ids; defaults to the first `--limit` clips of the split.
    #[arg(long = "clip")]
    pub clips: Vec<String>,
    #[arg(long, default_value_t = 4)]
    pub limit: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset into the output directory.
    GenData,
    /// Render the pose stream of dataset clips to PNG frames.
    RenderPose(ClipSelection),
    /// Compute TV-L1 flow for dataset clips (.flo plus color PNGs).
    Flow(ClipSelection),
    /// Train one stream on the configured modality.
    Train,
    /// Train a student with logit regression towards `distill.teachers`.
    Distill,
    /// Score a trained run on the validation split.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Late-fuse trained runs by summing their logits.
    Fuse {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
    },
    /// Grad-CAM overlays for a trained run.
    Gradcam {
        #[arg(long)]
        model: PathBuf,
        /// Explain this class instead of the predicted one.
        #[arg(long)]
        class: Option<usize>,
        #[command(flatten)]
        clips: ClipSelection,
    },
    /// Train the pose stream once per rendering variant and compare.
    AblateRender,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::Divergence(_) => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    cfg.write_resolved(&cfg.out_dir)?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::RenderPose(sel) => commands::render_pose(&cfg, &sel),
        Command::Flow(sel) => commands::flow(&cfg, &sel),
        Command::Train => commands::train(&cfg, false),
        Command::Distill => commands::train(&cfg, true),
        Command::Eval { model } => commands::eval(&cfg, &model),
        Command::Fuse { models } => commands::fuse(&cfg, &models),
        Command::Gradcam { model, class, clips } => commands::gradcam(&cfg, &model, class, &clips),
        Command::AblateRender => commands::ablate_render(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("perfnet: {}", err.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&err))
        }
    }
}
