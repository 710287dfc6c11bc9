use thiserror::Error;

pub use crate::acoustic::AcousticError;
pub use crate::manifest::ManifestError;
pub use crate::metrics::MetricsError;
pub use crate::scoring::ScoringError;
pub use crate::splits::SplitError;
pub use crate::synth::SynthError;
pub use crate::trials::TrialError;

/// Any failure raised by the core, prefixed with the module that raised it.
#[derive(Debug, Error, PartialEq)]
pub enum Error {
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("splits: {0}")]
    Splits(#[from] SplitError),
    #[error("trials: {0}")]
    Trials(#[from] TrialError),
    #[error("acoustic: {0}")]
    Acoustic(#[from] AcousticError),
    #[error("scoring: {0}")]
    Scoring(#[from] ScoringError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
}
