use thiserror::Error;

#[derive(Debug, Error)]
pub enum GecError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("not {m}-step weakly revealing: sigma_S = {sigma:.3e} at step {step}")]
    NotWeaklyRevealing { m: usize, step: usize, sigma: f64 },

    #[error("decoder inconsistency at step {step}: window {window:?} decodes to {decoded:?} but latent state is {actual}")]
    DecoderInconsistent {
        step: usize,
        window: Vec<usize>,
        decoded: Option<usize>,
        actual: usize,
    },

    #[error("unreachable history")]
    UnreachableHistory,

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("rank extraction failed: {0}")]
    Rank(String),

    #[error("no pseudo-inverse link construction: {0}")]
    LinkConstruction(String),

    #[error("batch shorter than n_batch: got {got}, need {need}")]
    ShortBatch { got: usize, need: usize },

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GecError>;
