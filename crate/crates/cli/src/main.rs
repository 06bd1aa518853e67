//! `compdec`: runs the composite-particle decoherence studies from the command line.
//!
//! Exit codes: 0 on success, 1 on configuration errors (nothing is written),
//! 2 when a run fails its numerical diagnostics. Failures print one JSON
//! object on standard error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "compdec",
    version,
    about = "Decoherence of a composite particle by its internal degree of freedom"
)]
pub struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted override such as `grid.dt=0.0025`; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// Well depth giving a target reflection probability.
    Calibrate {
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long = "L", default_value_t = 0.5)]
        #[serde(rename = "L")]
        width: f64,
        #[arg(long, default_value_t = 0.5)]
        target: f64,
    },
    /// One two-branch scattering run.
    Scatter,
    /// Scattering runs over the configured ξ₀ range.
    ScanXi0,
    /// Compositeness heatmap over (Y₀, ξ).
    ScanMc {
        /// Use the wide-well variant.
        #[arg(long)]
        wide: bool,
    },
    /// Riccati coefficients and influence overlap along a transmitted/reflected path pair.
    Influence {
        /// Launch distance of the transmitted path.
        #[arg(long, default_value_t = 3.0)]
        start: f64,
        #[arg(long, default_value_t = 6.0)]
        horizon: f64,
        #[arg(long, default_value_t = 2.5e-4)]
        dt: f64,
        /// Rows are written every `stride` path steps.
        #[arg(long, default_value_t = 400)]
        stride: usize,
        /// Internal displacement (defaults to `initial.xi0`).
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long, default_value_t = 16.0)]
        internal_half_width: f64,
        #[arg(long, default_value_t = 4096)]
        internal_points: usize,
    },
    /// Number-basis propagation against split-step evolution.
    RiccatiCheck {
        #[arg(long, default_value_t = 64)]
        n_fock: usize,
        #[arg(long, default_value_t = 5e-4)]
        dt: f64,
        /// Extra random profiles drawn from the configured seed.
        #[arg(long, default_value_t = 3)]
        sampled: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] compdec::Error),
    #[error("{message}")]
    Diagnostics {
        message: String,
        details: Vec<String>,
    },
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error("cannot encode output: {0}")]
    Encode(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Diagnostics { .. } => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "invalid-input",
            CliError::Diagnostics { .. } => "diagnostics",
            CliError::Output(_) | CliError::Encode(_) => "output",
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Diagnostics { details, .. } = self {
            v["details"] = serde_json::json!(details);
        }
        v
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
