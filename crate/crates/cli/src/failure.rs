use std::fmt;
use std::process::ExitCode;

use kgat::augment::AugmentError;
use kgat::harness::DataError;
use kgat::params::CheckpointError;
use kgat::simmatrix::CacheError;
use kgat::train::ModelError;
use kgat::wordnet::WordNetError;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or an invalid run configuration (exit 1).
    Usage(String),
    /// Unreadable or malformed input files (exit 2).
    Data(String),
    /// Training diverged (exit 3).
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

pub fn data(message: impl fmt::Display) -> Failure {
    Failure::Data(message.to_string())
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } => Failure::Numeric(e.to_string()),
            ModelError::Config(_) | ModelError::GuidedWithoutSim => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::EmptyDataset => Failure::Data(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.to_string())
            }
        })*
    };
}

data_errors!(
    CheckpointError,
    CacheError,
    DataError,
    WordNetError,
    std::io::Error
);
