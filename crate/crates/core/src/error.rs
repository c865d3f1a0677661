use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpnError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("goal generation failed after {attempts} attempts")]
    GoalGeneration { attempts: usize },

    #[error("query error: unknown slot `{slot}` in domain `{domain}`")]
    UnknownSlot { domain: String, slot: String },

    #[error("conversion error: label `{0}` not in vocabulary")]
    OutOfVocabulary(String),

    #[error("concatenation error: module `{module}` state has length {got}, manifest says {expected}")]
    StateLengthMismatch {
        module: String,
        got: usize,
        expected: usize,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("incompatible manifest: file hash {file} does not match current {current}")]
    ManifestMismatch { file: String, current: String },

    #[error("weight file format error: {0}")]
    WeightFormat(String),

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PpnError>;
