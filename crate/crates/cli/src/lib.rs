//! Command implementations behind the `lossep` binary: the clutter
//! decision-flip demo, the two-point GPC picture, the utility sweep and the
//! oracle cross-checks. Each command writes CSV tables, an SVG overlay and a
//! JSON manifest into an output directory.

pub mod commands;
pub mod svg;
pub mod tables;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run_clutter_demo, run_sweep_command, run_two_point, run_validate, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("run failed: {0}")]
    Run(#[from] lossep_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
