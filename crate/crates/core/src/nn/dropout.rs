//! Inverted dropout: zero each element with probability `rate` at train
//! time and scale survivors by 1/(1-rate), so eval mode is the identity.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::Rng;

pub enum DropoutMode<'a> {
    Train(&'a mut Rng),
    Eval,
}

/// Returns the output and, in train mode, the applied mask (0 or the
/// survivor scale per element). The backward pass is a multiply by the mask.
pub fn dropout(x: &Tensor, rate: f64, mode: DropoutMode) -> Result<(Tensor, Option<Tensor>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidDropoutRate { rate });
    }
    match mode {
        DropoutMode::Eval => Ok((x.clone(), None)),
        DropoutMode::Train(rng) => {
            let scale = 1.0 / (1.0 - rate);
            let mut mask = Tensor::zeros(x.shape());
            for m in mask.data_mut() {
                if rng.next_f64() >= rate {
                    *m = scale;
                }
            }
            Ok((apply_mask(x, &mask), Some(mask)))
        }
    }
}

pub fn apply_mask(x: &Tensor, mask: &Tensor) -> Tensor {
    debug_assert_eq!(x.shape(), mask.shape());
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    out
}
