//! Command-line front end.
//!
//! Every command reads an optional versioned JSON config (`--config`),
//! applies `--seed`, and writes its outputs into `--out`. Failures print a
//! JSON object `{"error": {"code": .., "message": ..}}` on stderr and exit
//! with status 1. `RMF_LOG` sets the log level (error, warn, info, debug).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{load_fields, Paths};
pub use config::{DenoiseConfig, GenDataConfig, InbetweenConfig, Init, Keyframes, RunConfig, TrainCmdConfig};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "motionfield", version, about = "Riemannian motion fields: data, training, projection, fitting")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Versioned JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replaces the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created when missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Record wall-clock seconds per stage in the reports.
    #[arg(long, global = true)]
    pub timings: bool,
}

#[derive(Clone, Debug, Default, Args)]
pub struct MotionArgs {
    /// Input file or directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory holding field_pose.json, field_velocity.json and
    /// field_acceleration.json.
    #[arg(long)]
    pub fields: Option<PathBuf>,
    /// Skeleton JSON; defaults to the one stored with the motion.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    /// Reference motion for metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Synthesize corpora and labeled samples.
    GenData,
    /// Train fields on the samples in --input.
    Train(MotionArgs),
    /// Project every frame of a motion onto the fields.
    Project(MotionArgs),
    /// Roll out a motion from its first state and its accelerations.
    Rollout(MotionArgs),
    /// Fit a motion's own (optionally noised) joints.
    Denoise(MotionArgs),
    /// Fit an observation file.
    Fit(MotionArgs),
    /// Fill unobserved frames between keyframes.
    Inbetween(MotionArgs),
    /// Generate a motion from the first state of --input.
    Generate(MotionArgs),
    /// Compare --input against --reference.
    Metrics(MotionArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train(_) => "train",
            Command::Project(_) => "project",
            Command::Rollout(_) => "rollout",
            Command::Denoise(_) => "denoise",
            Command::Fit(_) => "fit",
            Command::Inbetween(_) => "inbetween",
            Command::Generate(_) => "generate",
            Command::Metrics(_) => "metrics",
        }
    }

    fn motion_args(&self) -> MotionArgs {
        match self {
            Command::GenData => MotionArgs::default(),
            Command::Train(a)
            | Command::Project(a)
            | Command::Rollout(a)
            | Command::Denoise(a)
            | Command::Fit(a)
            | Command::Inbetween(a)
            | Command::Generate(a)
            | Command::Metrics(a) => a.clone(),
        }
    }
}

/// Resolves the config and runs one command.
pub fn run(cli: &Cli) -> Result<()> {
    let a = cli.command.motion_args();
    for p in [&cli.common.config, &a.input, &a.fields, &a.skeleton, &a.reference].into_iter().flatten() {
        if !p.exists() {
            return Err(Error::Config(format!("{} does not exist", p.display())));
        }
    }
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&cli.common.out)?;
    let paths = Paths {
        out: cli.common.out.clone(),
        input: a.input,
        fields: a.fields,
        skeleton: a.skeleton,
        reference: a.reference,
        timings: cli.common.timings,
    };
    log::info!("{} (seed {})", cli.command.name(), cfg.seed);
    match &cli.command {
        Command::GenData => commands::gen_data(&cfg, &paths),
        Command::Train(_) => commands::train(&cfg, &paths),
        Command::Project(_) => commands::project(&cfg, &paths),
        Command::Rollout(_) => commands::rollout(&cfg, &paths),
        Command::Denoise(_) => commands::denoise(&cfg, &paths),
        Command::Fit(_) => commands::fit(&cfg, &paths),
        Command::Inbetween(_) => commands::inbetween_cmd(&cfg, &paths),
        Command::Generate(_) => commands::generate(&cfg, &paths),
        Command::Metrics(_) => commands::metrics(&cfg, &paths),
    }
}

/// Machine-readable error line.
pub fn error_json(e: &Error) -> String {
    let mut v = serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } });
    if let Error::Divergence { trace, .. } = e {
        v["error"]["trace"] = serde_json::json!(trace);
    }
    v.to_string()
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("RMF_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}
