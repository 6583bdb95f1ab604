use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene: {0}")]
    Scene(String),

    #[error("dataset file {path}: {msg}")]
    Dataset { path: String, msg: String },

    #[error(transparent)]
    Geom(#[from] camgeom::GeomError),

    #[error(transparent)]
    Tensor(#[from] diffcore::TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
