use std::fmt;
use std::path::Path;

use prpm_core::encoding::EncodingError;
use prpm_core::estimators::EstimatorError;
use prpm_core::eventlog::LogError;
use prpm_core::gain::GainError;
use prpm_core::scores::ScoreError;
use prpm_core::sim::SimError;
use prpm_core::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Incompatible,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Incompatible => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn incompatible(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Incompatible,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::InvalidRules(_) | LogError::InvalidFractions(_) => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<EncodingError> for CliError {
    fn from(e: EncodingError) -> Self {
        match e {
            EncodingError::BadPercentile(_) | EncodingError::ZeroCap => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::InvalidConfig(_) => Self::config(e.to_string()),
            EstimatorError::WidthMismatch { .. } => Self::incompatible(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Incompatible(_) => Self::incompatible(e.to_string()),
            ScoreError::Estimator(inner) => inner.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<GainError> for CliError {
    fn from(e: GainError) -> Self {
        match e {
            GainError::Params(_) => Self::config(e.to_string()),
            GainError::Probability(_) => Self::data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Duration(_) => Self::config(e.to_string()),
            SimError::Gain(inner) => inner.into(),
            SimError::Score(inner) => inner.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::config(e.to_string())
    }
}
