use crate::data::Label;

/// Errors produced by dataset handling, pattern rendering, scoring, training,
/// splitting, and generation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate example id `{0}` in dataset")]
    DuplicateId(String),

    #[error("requirement text for `{id}` ({side}) is empty")]
    EmptyText { id: String, side: &'static str },

    #[error("dataset kind mismatch: {0}")]
    KindMismatch(String),

    #[error("operation requires a non-empty dataset")]
    EmptyDataset,

    #[error("invalid soft label: {0}")]
    InvalidSoftLabel(String),

    #[error("invalid pattern `{id}`: {reason}")]
    InvalidPattern { id: String, reason: String },

    #[error("verbalizer `{id}` is not injective: `{word}` maps from more than one label")]
    NonInjectiveVerbalizer { id: String, word: String },

    #[error("token budget unsatisfiable: fixed tokens ({fixed}) exceed budget ({budget})")]
    UnsatisfiableBudget { fixed: usize, budget: usize },

    #[error("verbalization token `{word}` is out of vocabulary")]
    OutOfVocabulary { word: String },

    #[error("prediction/gold length mismatch: {preds} vs {golds}")]
    LengthMismatch { preds: usize, golds: usize },

    #[error("metrics over an empty confusion matrix are undefined")]
    EmptyMatrix,

    #[error("class {label} is short: need {need}, have {have}")]
    ClassShortage {
        label: Label,
        need: usize,
        have: usize,
    },

    #[error("generator capacity exceeded for {label}: need {need}, capacity {capacity}")]
    CapacityExceeded {
        label: Label,
        need: usize,
        capacity: usize,
    },

    #[error("all ensemble weights are zero; the weighted combination is undefined")]
    AllZeroWeights,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss {loss} at update {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
