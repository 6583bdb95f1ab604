use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("no valid supervision in batch: {0}")]
    UnsupervisedBatch(&'static str),

    #[error("loss term {part} is not finite ({value})")]
    NonFiniteLoss { part: &'static str, value: f64 },

    #[error("no valid ground-truth pixels for evaluation")]
    NoValidPixels,

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },

    #[error(transparent)]
    Tensor(#[from] diffcore::TensorError),

    #[error(transparent)]
    Geom(#[from] camgeom::GeomError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
