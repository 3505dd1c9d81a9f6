//! Affine (dense) layer.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// y = x w + bias, with x [N,K], w [K,M], bias [M].
pub fn dense_fwd(x: &Tensor, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, k) = x.dims2("dense")?;
    let (wk, m) = w.dims2("dense")?;
    if wk != k {
        return Err(Error::ShapeMismatch {
            op: "dense",
            detail: format!("input features K={k} != weight rows K={wk}"),
        });
    }
    if bias.shape() != [m] {
        return Err(Error::ShapeMismatch {
            op: "dense",
            detail: format!("bias shape {:?} != output features M={m}", bias.shape()),
        });
    }
    let xd = x.data();
    let wd = w.data();
    let bd = bias.data();
    let mut out = Tensor::zeros(&[n, m]);
    let od = out.data_mut();
    for ni in 0..n {
        let out_row = &mut od[ni * m..(ni + 1) * m];
        out_row.copy_from_slice(bd);
        for ki in 0..k {
            let xv = xd[ni * k + ki];
            if xv == 0.0 {
                continue;
            }
            let w_row = &wd[ki * m..(ki + 1) * m];
            for (o, wv) in out_row.iter_mut().zip(w_row) {
                *o += xv * wv;
            }
        }
    }
    Ok(out)
}

/// Gradients of `dense_fwd`: (grad_x, grad_w, grad_bias).
pub fn dense_bwd(grad_out: &Tensor, x: &Tensor, w: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, k) = x.dims2("dense_bwd")?;
    let (wk, m) = w.dims2("dense_bwd")?;
    let (gn, gm) = grad_out.dims2("dense_bwd")?;
    if wk != k || gn != n || gm != m {
        return Err(Error::ShapeMismatch {
            op: "dense_bwd",
            detail: format!(
                "x [{n},{k}], w [{wk},{m}], grad [{gn},{gm}] are inconsistent"
            ),
        });
    }
    let gd = grad_out.data();
    let xd = x.data();
    let wd = w.data();
    let mut grad_x = Tensor::zeros(&[n, k]);
    let mut grad_w = Tensor::zeros(&[k, m]);
    let mut grad_b = Tensor::zeros(&[m]);
    let gxd = grad_x.data_mut();
    let gwd = grad_w.data_mut();
    let gbd = grad_b.data_mut();
    for ni in 0..n {
        let g_row = &gd[ni * m..(ni + 1) * m];
        for (gb, g) in gbd.iter_mut().zip(g_row) {
            *gb += g;
        }
        for ki in 0..k {
            let w_row = &wd[ki * m..(ki + 1) * m];
            let gw_row = &mut gwd[ki * m..(ki + 1) * m];
            let xv = xd[ni * k + ki];
            let mut acc = 0.0;
            for mi in 0..m {
                let g = g_row[mi];
                acc += g * w_row[mi];
                gw_row[mi] += g * xv;
            }
            gxd[ni * k + ki] += acc;
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identity_weight_passes_through() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let out = dense_fwd(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn hand_computed_affine() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]);
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]);
        let out = dense_fwd(&x, &w, &b).unwrap();
        assert_eq!(out.data(), &[4.0, 6.0]);
    }

    #[test]
    fn inner_dim_mismatch_is_error() {
        let x = Tensor::zeros(&[1, 3]);
        let w = Tensor::zeros(&[4, 2]);
        assert!(matches!(
            dense_fwd(&x, &w, &Tensor::zeros(&[2])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bwd_matches_finite_differences() {
        let mut rng = Rng::new(8);
        let x = Tensor::from_vec(&[2, 3], (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let w = Tensor::from_vec(&[3, 4], (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let b = Tensor::from_vec(&[4], (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let probe = Tensor::from_vec(&[2, 4], (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            dense_fwd(x, w, b)
                .unwrap()
                .data()
                .iter()
                .zip(probe.data())
                .map(|(a, p)| a * p)
                .sum()
        };
        let (gx, gw, gb) = dense_bwd(&probe, &x, &w).unwrap();
        let eps = 1e-5;
        let cases: [(&Tensor, &Tensor, usize); 3] = [(&x, &gx, 0), (&w, &gw, 1), (&b, &gb, 2)];
        for (param, grad, which) in cases {
            for idx in 0..param.numel() {
                let mut plus = param.clone();
                plus.data_mut()[idx] += eps;
                let mut minus = param.clone();
                minus.data_mut()[idx] -= eps;
                let (lp, lm) = match which {
                    0 => (loss(&plus, &w, &b), loss(&minus, &w, &b)),
                    1 => (loss(&x, &plus, &b), loss(&x, &minus, &b)),
                    _ => (loss(&x, &w, &plus), loss(&x, &w, &minus)),
                };
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = grad.data()[idx];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(((numeric - analytic) / denom).abs() < 1e-4);
            }
        }
    }
}
