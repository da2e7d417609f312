use std::path::PathBuf;

use tent_core::nn::NnError;
use tent_core::sim::SimError;
use tent_core::select::SelectError;
use tent_core::{DotError, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("blob {0} is missing")]
    MissingBlob(PathBuf),
    #[error("blob {file}: checksum {found} does not match manifest {expected}")]
    ChecksumMismatch { file: String, expected: String, found: String },
    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),
    #[error("tensor {tensor}: expected {expected} elements, found {found}")]
    ShapeMismatch { tensor: String, expected: usize, found: usize },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("{path}: malformed dataset: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }

    /// Stable name of the innermost error variant, for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "NotFound",
            Error::Io { .. } => "Io",
            Error::Json { .. } => "Json",
            Error::MissingBlob(_) => "MissingBlob",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::UnknownLayerKind(_) => "UnknownLayerKind",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::Manifest(_) => "Manifest",
            Error::Dataset { .. } => "Dataset",
            Error::Argument(_) => "Argument",
            Error::Csv(_) => "Csv",
            Error::Nn(e) => nn_code(e),
            Error::Sim(e) => sim_code(e),
            Error::Format(e) => format_code(e),
        }
    }
}

fn format_code(e: &FormatError) -> &'static str {
    match e {
        FormatError::UnsupportedWidth(_) => "UnsupportedWidth",
        FormatError::InvalidRunLimit { .. } => "InvalidRunLimit",
        FormatError::InvalidScale(_) => "InvalidScale",
        FormatError::InvalidFracBits { .. } => "InvalidFracBits",
        FormatError::RunTooLong { .. } => "RunTooLong",
        FormatError::FractionTooWide { .. } => "FractionTooWide",
        FormatError::InconsistentFields => "InconsistentFields",
        FormatError::CodeTooWide { .. } => "CodeTooWide",
        FormatError::NotANumber => "NotANumber",
        FormatError::BadDescriptor(_) => "BadDescriptor",
    }
}

fn select_code(e: &SelectError) -> &'static str {
    match e {
        SelectError::EmptyTensor => "EmptyTensor",
        SelectError::NonFinite => "NonFinite",
        SelectError::InvalidStat(_) => "InvalidStat",
        SelectError::Format(f) => format_code(f),
    }
}

fn dot_code(e: &DotError) -> &'static str {
    match e {
        DotError::LengthMismatch { .. } => "LengthMismatch",
        DotError::TooManyTerms { .. } => "TooManyTerms",
        DotError::Overflow { .. } => "Overflow",
        DotError::MisalignedOperand { .. } => "MisalignedOperand",
        DotError::NoTerms => "NoTerms",
    }
}

fn nn_code(e: &NnError) -> &'static str {
    match e {
        NnError::EmptyModel => "EmptyModel",
        NnError::ShapeMismatch { .. } => "ShapeMismatch",
        NnError::InvalidResidual { .. } => "InvalidResidual",
        NnError::UnfoldableBatchNorm { .. } => "UnfoldableBatchNorm",
        NnError::UnfoldedBatchNorm { .. } => "UnfoldedBatchNorm",
        NnError::InvalidParameter { .. } => "InvalidParameter",
        NnError::StatsMismatch { .. } => "StatsMismatch",
        NnError::EmptyBatch => "EmptyBatch",
        NnError::LabelCountMismatch { .. } => "LabelCountMismatch",
        NnError::Format(f) => format_code(f),
        NnError::Select(s) => select_code(s),
        NnError::Dot(d) => dot_code(d),
    }
}

fn sim_code(e: &SimError) -> &'static str {
    match e {
        SimError::TileOverflow { .. } => "TileOverflow",
        SimError::InvalidConfig(_) => "InvalidConfig",
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
