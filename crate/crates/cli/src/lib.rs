//! Batch pipeline over order-flow files, gap files and synthetic series.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod pipeline;
pub mod plot;

pub use config::{Analyses, Input, PipelineConfig};
pub use pipeline::{run_pipeline, InstrumentReport, RunSummary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{instrument}: report has no {section} section")]
    MissingAnalysis { instrument: String, section: String },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }
}
