//! `relpose`: curate, synthesize, solve and score relative-pose benchmarks.

mod commands;
mod settings;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use settings::Tuning;

#[derive(Debug, Parser)]
#[command(name = "relpose", version, about = "Relative camera pose benchmark tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Output path (a directory for `synth`); standard output when omitted
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output on standard error (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajectoryKind {
    Orbit,
    SingleDof,
    Static,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a dataset directory into a sequence manifest
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Sequence name; defaults to the directory name
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long)]
        fx: Option<f64>,
        #[arg(long)]
        fy: Option<f64>,
        #[arg(long)]
        cx: Option<f64>,
        #[arg(long)]
        cy: Option<f64>,
        #[arg(long)]
        depth_scale: Option<f64>,
    },
    /// Generate a synthetic sequence with exact poses and depth
    Synth {
        #[arg(long, value_enum, default_value = "orbit")]
        trajectory: TrajectoryKind,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        /// Orbit angular step, degrees
        #[arg(long, default_value_t = 1.1, allow_negative_numbers = true)]
        step: f64,
        /// Orbit frame after which the camera retraces its path
        #[arg(long)]
        turn_at: Option<usize>,
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
        /// DoF moved by a single-dof trajectory
        #[arg(long, default_value = "yaw")]
        dof: String,
        /// Per-frame increment of a single-dof trajectory (degrees or metres)
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        increment: f64,
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long, default_value = "synthetic")]
        name: String,
        /// Render depth maps for single-dof and static trajectories too
        #[arg(long)]
        depth: bool,
    },
    /// Viewpoint-angle pair curation
    CurateBench {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Single-DoF pair curation
    CurateDiag {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Estimate relative pose from correspondences and classify it
    Solve {
        /// Single `u1,v1,u2,v2` correspondence file
        #[arg(long, conflicts_with_all = ["samples"])]
        matches: Option<PathBuf>,
        /// Intrinsics `fx,fy,cx,cy,width,height` for a single correspondence file
        #[arg(long, requires = "matches")]
        intrinsics: Option<String>,
        /// Target-view intrinsics when they differ from the source view
        #[arg(long, requires = "matches")]
        intrinsics_tgt: Option<String>,
        /// Sample manifest to predict in batch
        #[arg(long, requires = "manifest")]
        samples: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Synthetic scene to project correspondences from
        #[arg(long, conflicts_with = "matches_dir")]
        scene: Option<PathBuf>,
        /// Directory of `<sequence>/<src>-<tgt>.csv` correspondence files
        #[arg(long)]
        matches_dir: Option<PathBuf>,
        /// Answer the swapped question (target first), keyed by the original ids
        #[arg(long)]
        swap: bool,
    },
    /// Score predictions against a sample manifest
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Predictions for the swapped pairs, for the consistency column
        #[arg(long)]
        swapped: Option<PathBuf>,
    },
    /// Swap-consistency between two prediction files
    Consistency {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        swapped: PathBuf,
    },
    /// Re-derive every retention predicate of a sample manifest
    Check {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration (exit 1).
    Validation(String),
    /// Filesystem failure (exit 2).
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
