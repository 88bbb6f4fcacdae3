use std::path::PathBuf;

use imageddi_chem::ChemError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid SMILES{}: {source}", drug.as_ref().map(|d| format!(" for drug {d}")).unwrap_or_default())]
    InvalidSmiles {
        drug: Option<String>,
        #[source]
        source: ChemError,
    },
    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("index {index} out of range for table of {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every key position is masked")]
    AllMasked,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("empty input")]
    EmptyInput,
    #[error("{}:{line}: {message}", path.display())]
    ParseError {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: unknown drug {drug:?}", path.display())]
    UnknownDrugReference {
        path: PathBuf,
        line: usize,
        drug: String,
    },
    #[error("event classes with fewer than 3 samples: {events:?}")]
    ClassTooSmall { events: Vec<u32> },
    #[error("split bucket {0} is empty")]
    EmptyPartition(&'static str),
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("data error: {0}")]
    DataError(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("vocabulary mismatch: checkpoint {expected}, given {found}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("operation needs a {expected} checkpoint, got {found}")]
    ModalityMismatch { expected: String, found: String },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("render failure: {0}")]
    RenderFailure(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable identifier of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSmiles { .. } => "InvalidSmiles",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::AllMasked => "AllMasked",
            Error::DomainError(_) => "DomainError",
            Error::EmptyInput => "EmptyInput",
            Error::ParseError { .. } => "ParseError",
            Error::UnknownDrugReference { .. } => "UnknownDrugReference",
            Error::ClassTooSmall { .. } => "ClassTooSmall",
            Error::EmptyPartition(_) => "EmptyPartition",
            Error::ConfigError(_) => "ConfigError",
            Error::DataError(_) => "DataError",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::VocabularyMismatch { .. } => "VocabularyMismatch",
            Error::ModalityMismatch { .. } => "ModalityMismatch",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::RenderFailure(_) => "RenderFailure",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
            Error::Tensor(_) => "TensorError",
            Error::Image(_) => "ImageError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

impl From<ChemError> for Error {
    fn from(source: ChemError) -> Self {
        Error::InvalidSmiles { drug: None, source }
    }
}
