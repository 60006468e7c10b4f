//! `depthguide` command-line front end.

mod commands;
mod manifest;
mod yaw;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthguide::pipeline::Profile;

#[derive(Parser, Debug)]
#[command(name = "depthguide", version, about = "Depth-guided high-resolution volume rendering")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Preset name (sphere, two-sphere, step-edge, tilted-plane, triplane-sphere) or scene JSON path
    #[arg(long, global = true, default_value = "sphere")]
    pub scene: String,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// desk64 (64 -> 256), desk128 (128 -> 512) or full (256 -> 1024)
    #[arg(long, global = true, default_value = "desk128", value_parser = parse_profile)]
    pub profile: Profile,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: depthguide::Error| e.to_string())
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NormalGuided,
    Bilinear,
}

#[derive(Args, Debug, Clone)]
pub struct SrFlags {
    /// Structuring element half-size k (window 2k+1)
    #[arg(long, default_value_t = 1)]
    pub se_k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps_z: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_g: f64,
    #[arg(long, default_value_t = 2)]
    pub passes: u32,
    #[arg(long, value_enum, default_value = "normal-guided")]
    pub method: Method,
    /// Feed (D, D, D) instead of (erode D, D, dilate D)
    #[arg(long)]
    pub no_aggregate: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dense low-resolution render: color.png, depth.pfm, normal.pfm, alpha.pfm
    RenderLr,
    /// Multi-depth map from LR depth/normal/alpha PFMs
    BuildDepth {
        /// Defaults to <out>/depth.pfm
        #[arg(long)]
        depth: Option<PathBuf>,
        /// Defaults to <out>/normal.pfm
        #[arg(long)]
        normal: Option<PathBuf>,
        /// Defaults to <out>/alpha.pfm
        #[arg(long)]
        alpha: Option<PathBuf>,
        /// Only aggregate (erode, D, dilate) at the input resolution; normals are not needed
        #[arg(long)]
        aggregate_only: bool,
        #[command(flatten)]
        sr: SrFlags,
    },
    /// Guided high-resolution render from a multi-depth map
    RenderHr {
        /// Defaults to <out>/multi_depth.pfm
        #[arg(long)]
        multi_depth: Option<PathBuf>,
        /// Defaults to <out>/hr_mask.pfm
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Run LR render and multi-depth construction first
        #[arg(long)]
        full_pipeline: bool,
        /// Also render the dense HR oracle and score against it
        #[arg(long)]
        oracle: bool,
        /// Print the sample budget report to stdout
        #[arg(long, value_enum)]
        report: Option<ReportFormat>,
        #[command(flatten)]
        sr: SrFlags,
    },
    /// Dense vs. guided timings and quality over a scene suite (appends to bench.csv)
    Bench {
        /// Comma-separated scenes; defaults to every preset
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
    },
    /// Yaw sweep scored against the dense oracle
    Sweep {
        /// start:end:count in radians
        #[arg(long, default_value = "-0.4:0.4:8", allow_hyphen_values = true)]
        yaw: String,
        /// Write per-view guided and oracle PNGs
        #[arg(long)]
        images: bool,
        #[command(flatten)]
        sr: SrFlags,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or unreadable/invalid user input.
    Input(anyhow::Error),
    /// Pipeline stage contract broken (missing/mismatched/unsorted intermediate data).
    Contract(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Contract(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Tags an error as an input error (exit 2).
pub fn input<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| Failure::Input(e.into()))
}

/// Tags an error as a contract violation (exit 3).
pub fn contract<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| Failure::Contract(e.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Contract(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
