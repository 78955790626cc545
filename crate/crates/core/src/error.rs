use thiserror::Error;

use crate::controller::ControllerError;
use crate::fusion::FusionError;
use crate::geofield::FieldError;
use crate::gradient::GradientError;
use crate::metrics::MetricsError;
use crate::navigator::NavError;
use crate::qp::QpError;
use crate::scenario::ScenarioError;
use crate::storm::StormError;

/// Crate-level error; each module keeps its own error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Storm(#[from] StormError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
