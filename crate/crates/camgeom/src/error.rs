use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),

    #[error("not a rigid transform: {0}")]
    NotRigid(String),

    #[error("axis-angle chart undefined at rotation angle {angle} (limit {limit})")]
    ChartSingularity { angle: f64, limit: f64 },

    #[error("inverse depth must be strictly positive, found {0}")]
    NonPositiveInverseDepth(f64),

    #[error("rig: {0}")]
    BadRig(String),

    #[error("rig file: {0}")]
    RigFile(String),

    #[error(transparent)]
    Tensor(#[from] diffcore::TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
