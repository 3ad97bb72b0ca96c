//! Forward and backward kernels for every layer type in the network.
//!
//! Kernels are plain functions over tensors plus explicit state. Backward
//! functions return exact gradients of `sum(d_output * output)` with respect
//! to the layer input and each parameter.

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{relu, relu_backward};
pub use conv::{
    conv1d, conv1d_backward, conv1d_out_len, conv2d, conv2d_backward, Conv1dCtx, Conv1dSpec,
    Conv2dCtx, Conv2dSpec,
};
pub use linear::{linear, linear_backward, LinearCtx};
pub use loss::cross_entropy_logits;
pub use norm::{batchnorm, batchnorm_backward, BnCache, BnState, BN_EPS, BN_MOMENTUM};
pub use pool::{
    adaptive_avg_pool_1x1, adaptive_avg_pool_1x1_backward, maxpool1d, maxpool1d_backward,
    MaxPoolCache,
};

use crate::tensor::Tensor;

/// Gradients produced by a layer's backward pass.
///
/// `d_params` follows the parameter order of the corresponding forward
/// function (for example `[d_weight, d_bias]` for convolutions).
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub d_input: Tensor<T>,
    pub d_params: Vec<Tensor<T>>,
}

/// Whether batch normalization uses batch statistics (and updates its
/// running averages) or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}
