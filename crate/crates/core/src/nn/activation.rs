//! Elementwise activations.

use crate::nn::Tensor;

/// LeakyReLU: v for v >= 0, slope*v otherwise.
pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// Backward through LeakyReLU given the pre-activation input. The derivative
/// at exactly zero uses the negative-side slope.
pub fn leaky_relu_bwd(grad_out: &Tensor, pre: &Tensor, slope: f64) -> Tensor {
    debug_assert_eq!(grad_out.shape(), pre.shape());
    let mut out = grad_out.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(pre.data()) {
        if z <= 0.0 {
            *g *= slope;
        }
    }
    out
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Backward through sigmoid given the forward output.
pub fn sigmoid_bwd(grad_out: &Tensor, out: &Tensor) -> Tensor {
    debug_assert_eq!(grad_out.shape(), out.shape());
    let mut grad = grad_out.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(out.data()) {
        *g *= y * (1.0 - y);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::from_vec(&[3], vec![5.0, -1.0, 0.0]);
        let y = leaky_relu(&x, 0.01);
        assert_eq!(y.data(), &[5.0, -0.01, 0.0]);
    }

    #[test]
    fn leaky_relu_gradient_convention_at_zero() {
        let pre = Tensor::from_vec(&[3], vec![2.0, -3.0, 0.0]);
        let g = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]);
        let out = leaky_relu_bwd(&g, &pre, 0.01);
        assert_eq!(out.data(), &[1.0, 0.01, 0.01]);
    }

    #[test]
    fn sigmoid_midpoint_and_grad() {
        let x = Tensor::from_vec(&[1], vec![0.0]);
        let y = sigmoid(&x);
        assert_eq!(y.data(), &[0.5]);
        let g = sigmoid_bwd(&Tensor::from_vec(&[1], vec![1.0]), &y);
        assert_eq!(g.data(), &[0.25]);
    }
}
