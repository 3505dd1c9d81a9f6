//! Minimal differentiable kernels: 2-D convolution and its transpose, dense
//! layers, LeakyReLU, and inverted dropout, each with an exact backward pass.
//!
//! Everything computes in f64 with a fixed reduction order, so results are
//! bit-reproducible run to run and gradients can be checked against central
//! finite differences at tight tolerances.

mod activation;
mod conv;
mod dense;
mod dropout;
mod init;
mod tensor;

pub use activation::{leaky_relu, leaky_relu_bwd, sigmoid, sigmoid_bwd};
pub use conv::{conv2d_bwd, conv2d_fwd, conv_t2d_bwd, conv_t2d_fwd};
pub use dense::{dense_bwd, dense_fwd};
pub use dropout::{apply_mask, dropout, DropoutMode};
pub use init::he_init;
pub use tensor::Tensor;

/// Weight + bias for one layer; gradients reuse the same type so their
/// shapes mirror the parameters by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn zeros_like(other: &LayerParams) -> LayerParams {
        LayerParams {
            weight: Tensor::zeros(other.weight.shape()),
            bias: Tensor::zeros(other.bias.shape()),
        }
    }
}
