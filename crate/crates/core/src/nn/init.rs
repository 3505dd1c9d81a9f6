//! Seeded He initialization: zero-mean Gaussians with std sqrt(2/fan_in).

use crate::nn::Tensor;
use crate::rng::Rng;

/// Draw a weight tensor. Fan-in follows the layout convention used by the
/// layers here: [out, in, kh, kw] kernels use in*kh*kw, [in, out] dense
/// weights use in, and vectors use their length. Biases are initialized to
/// zero separately (`Tensor::zeros`).
pub fn he_init(shape: &[usize], rng: &mut Rng) -> Tensor {
    let fan_in: usize = match shape {
        [_, c, kh, kw] => c * kh * kw,
        [k, _] => *k,
        [k] => *k,
        _ => panic!("unsupported weight shape {shape:?}"),
    };
    let std = (2.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..numel).map(|_| rng.normal() * std).collect())
}
