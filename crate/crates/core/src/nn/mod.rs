//! Minimal classifier networks: temperature softmax, hard/soft cross-entropy,
//! manual backpropagation and SGD with weight decay.

pub mod checkpoint;
mod loss;
mod model;
mod sgd;

pub use loss::{argmax, cross_entropy_hard, cross_entropy_soft, softmax_t, total_loss, SoftDistribution};
pub(crate) use loss::softmax_into;
pub use model::{
    layer_kinds, Architecture, ConvSpec, Gradients, InputShape, Layer, LayerGrad, LayerKind, LossSpec, ModelParams,
};
pub(crate) use model::Scratch;
pub use sgd::{sgd_step, LossMode, TrainConfig};
