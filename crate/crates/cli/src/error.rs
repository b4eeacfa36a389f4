use std::process::ExitCode;

use thiserror::Error;
use vigxray::heatmap::HeatmapError;
use vigxray::imaging::ImageError;
use vigxray::metrics::{MetricsError, ReportError};
use vigxray::model::{ConfigError, ModelError, WeightsError};
use vigxray::trace::TraceError;

/// Process exit codes. Stable; documented in the README.
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;
pub const EXIT_DATA: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, inconsistent options, out-of-range indices.
    #[error("{0}")]
    Validation(String),
    /// Missing or unwritable files.
    #[error("{0}")]
    Io(String),
    /// Inputs that exist but are malformed or mutually inconsistent.
    #[error("{0}")]
    Data(String),
    /// Some manifest entries failed; the rest were written.
    #[error("{failed} of {total} images failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
            CliError::Partial { .. } => EXIT_PARTIAL,
            CliError::Data(_) => EXIT_DATA,
        })
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::Unreadable { .. } | ImageError::Write { .. } => CliError::Io(e.to_string()),
            ImageError::PatchIndex(_) => CliError::Validation(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::NeighborCount { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<WeightsError> for CliError {
    fn from(e: WeightsError) -> Self {
        match e {
            WeightsError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::LabelOutOfRange { .. } => CliError::Validation(e.to_string()),
            MetricsError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::Io(e.to_string()),
            ReportError::Format { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<HeatmapError> for CliError {
    fn from(e: HeatmapError) -> Self {
        match e {
            HeatmapError::Image(i) => i.into(),
            HeatmapError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
