use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("shapes {lhs:?} and {rhs:?} are not broadcast-compatible")]
    NotBroadcastable { lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("data length {len} does not match shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },

    #[error("axis {axis} out of range for shape {shape:?}")]
    BadAxis { axis: usize, shape: Vec<usize> },

    #[error("invalid {op} geometry: input {input:?}, kernel {kernel:?}, stride {stride}, padding {padding}")]
    ConvGeometry { op: &'static str, input: Vec<usize>, kernel: Vec<usize>, stride: usize, padding: usize },

    #[error("{op} expects {expected}, got shape {shape:?}")]
    BadRank { op: &'static str, expected: &'static str, shape: Vec<usize> },

    #[error("{op}: non-finite input")]
    NonFiniteInput { op: &'static str },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}
