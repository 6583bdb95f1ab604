pub(crate) mod boxfilter;
pub(crate) mod conv;
pub(crate) mod elementwise;
pub(crate) mod grid_sample;
pub(crate) mod matmul;
pub(crate) mod norm;
pub(crate) mod reduce;
pub(crate) mod resample;
pub(crate) mod shape;
pub(crate) mod softmax;

use crate::tape::Node;
use crate::Element;
use resample::ResampleMode;

/// Saved context for one recorded primitive. Input/output buffers live in
/// the node itself; variants only carry what forward no longer has.
pub(crate) enum Op<E: Element> {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Relu,
    Abs,
    Sigmoid,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Recip,
    Scale(E),
    AddScalar,
    Matmul,
    Reshape,
    Permute(Vec<usize>),
    Narrow { axis: usize, start: usize },
    Concat { axis: usize },
    Softmax { axis: usize },
    LayerNorm { eps: E },
    SumAll,
    SumAxis { axis: usize },
    Conv2d { stride: usize, padding: usize },
    Resample { mode: ResampleMode },
    GridSample,
    Box3Reflect,
}

/// Gradients w.r.t. each node input, aligned with `node.inputs`.
pub(crate) fn backward<E: Element>(node: &Node<E>, dout: &[E]) -> Vec<Option<Vec<E>>> {
    match &node.op {
        Op::Add | Op::Sub | Op::Mul | Op::Div => elementwise::backward_binary(node, dout),
        Op::Neg
        | Op::Relu
        | Op::Abs
        | Op::Sigmoid
        | Op::Exp
        | Op::Ln
        | Op::Sqrt
        | Op::Sin
        | Op::Cos
        | Op::Recip
        | Op::Scale(_)
        | Op::AddScalar => elementwise::backward_unary(node, dout),
        Op::Matmul => matmul::backward(node, dout),
        Op::Reshape | Op::Permute(_) | Op::Narrow { .. } | Op::Concat { .. } => shape::backward(node, dout),
        Op::Softmax { axis } => softmax::backward(node, dout, *axis),
        Op::LayerNorm { eps } => norm::backward(node, dout, *eps),
        Op::SumAll | Op::SumAxis { .. } => reduce::backward(node, dout),
        Op::Conv2d { stride, padding } => conv::backward(node, dout, *stride, *padding),
        Op::Resample { mode } => resample::backward(node, dout, *mode),
        Op::GridSample => grid_sample::backward(node, dout),
        Op::Box3Reflect => boxfilter::backward(node, dout),
    }
}
