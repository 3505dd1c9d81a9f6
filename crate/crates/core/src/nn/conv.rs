//! Strided 2-D convolution (cross-correlation) and its transpose.
//!
//! The transpose is the exact adjoint of the convolution's linear part:
//! <conv(x), y> == <x, conv_t(y)> for a shared kernel, which is what makes
//! the decoder mirror the encoder shape-for-shape.

use crate::error::{Error, Result};
use crate::nn::Tensor;

fn check(cond: bool, op: &'static str, detail: impl Fn() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, detail: detail() })
    }
}

/// Forward convolution: x [N,C,H,W] * k [F,C,KH,KW] -> [N,F,OH,OW] with
/// OH = (H + 2 pad - KH) / stride + 1, plus a per-filter bias.
pub fn conv2d_fwd(
    x: &Tensor,
    k: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4("conv2d")?;
    let (f, kc, kh, kw) = k.dims4("conv2d")?;
    check(kc == c, "conv2d", || {
        format!("input channels C={c} != kernel channels C={kc}")
    })?;
    check(bias.shape() == [f], "conv2d", || {
        format!("bias shape {:?} != filter count F={f}", bias.shape())
    })?;
    check(h + 2 * pad >= kh && w + 2 * pad >= kw, "conv2d", || {
        format!("input {h}x{w} with pad {pad} smaller than kernel {kh}x{kw}")
    })?;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;

    let xd = x.data();
    let kd = k.data();
    let bd = bias.data();
    let mut out = Tensor::zeros(&[n, f, oh, ow]);
    let od = out.data_mut();
    let (oj_lo, oj_hi) = interior(ow, w, stride, pad, kw);
    for ni in 0..n {
        for fi in 0..f {
            let out_base = (ni * f + fi) * oh * ow;
            od[out_base..out_base + oh * ow].fill(bd[fi]);
            for ci in 0..c {
                let x_base = (ni * c + ci) * h * w;
                let k_base = (fi * c + ci) * kh * kw;
                for oi in 0..oh {
                    let i0 = (oi * stride) as isize - pad as isize;
                    let (a_lo, a_hi) = kernel_range(i0, h, kh);
                    let out_row = out_base + oi * ow;
                    for a in a_lo..a_hi {
                        let x_row = x_base + (i0 + a as isize) as usize * w;
                        let k_row = &kd[k_base + a * kw..k_base + a * kw + kw];
                        let mut edge = |oj: usize| {
                            let j0 = (oj * stride) as isize - pad as isize;
                            let (b_lo, b_hi) = kernel_range(j0, w, kw);
                            let x_off = (x_row as isize + j0 + b_lo as isize) as usize;
                            let mut acc = 0.0;
                            for (step, b) in (b_lo..b_hi).enumerate() {
                                acc += xd[x_off + step] * k_row[b];
                            }
                            od[out_row + oj] += acc;
                        };
                        for oj in 0..oj_lo {
                            edge(oj);
                        }
                        for oj in oj_hi..ow {
                            edge(oj);
                        }
                        // Interior windows sit fully inside the input row.
                        for oj in oj_lo..oj_hi {
                            let x_off = x_row + oj * stride - pad;
                            let xs = &xd[x_off..x_off + kw];
                            let mut acc = 0.0;
                            for b in 0..kw {
                                acc += xs[b] * k_row[b];
                            }
                            od[out_row + oj] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Kernel offsets that keep `origin + offset` inside [0, len).
#[inline]
fn kernel_range(origin: isize, len: usize, k: usize) -> (usize, usize) {
    let lo = (-origin).max(0) as usize;
    let hi = ((len as isize - origin).clamp(0, k as isize)) as usize;
    (lo.min(k), hi)
}

/// Output/input index range whose k-wide window lies fully inside the
/// opposite axis, so the hot loop needs no bounds handling.
#[inline]
fn interior(len_out: usize, len_in: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    let lo = pad.div_ceil(stride).min(len_out);
    let hi = if len_in + pad >= k {
        (((len_in + pad - k) / stride) + 1).min(len_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Gradients of `conv2d_fwd` with respect to input, kernel, and bias.
pub fn conv2d_bwd(
    grad_out: &Tensor,
    x: &Tensor,
    k: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, h, w) = x.dims4("conv2d_bwd")?;
    let (f, kc, kh, kw) = k.dims4("conv2d_bwd")?;
    check(kc == c, "conv2d_bwd", || {
        format!("input channels C={c} != kernel channels C={kc}")
    })?;
    let (gn, gf, oh, ow) = grad_out.dims4("conv2d_bwd")?;
    check(gn == n && gf == f, "conv2d_bwd", || {
        format!("grad batch/filters ({gn},{gf}) != forward ({n},{f})")
    })?;

    let gd = grad_out.data();
    let xd = x.data();
    let kd = k.data();
    let mut grad_x = Tensor::zeros(&[n, c, h, w]);
    let mut grad_k = Tensor::zeros(&[f, c, kh, kw]);
    let mut grad_b = Tensor::zeros(&[f]);
    let gxd = grad_x.data_mut();
    let gkd = grad_k.data_mut();
    let gbd = grad_b.data_mut();
    let (oj_lo, oj_hi) = interior(ow, w, stride, pad, kw);
    for ni in 0..n {
        for fi in 0..f {
            let g_base = (ni * f + fi) * oh * ow;
            for cell in gd[g_base..g_base + oh * ow].iter() {
                gbd[fi] += cell;
            }
            for ci in 0..c {
                let x_base = (ni * c + ci) * h * w;
                let k_base = (fi * c + ci) * kh * kw;
                for oi in 0..oh {
                    let i0 = (oi * stride) as isize - pad as isize;
                    let (a_lo, a_hi) = kernel_range(i0, h, kh);
                    let g_row = g_base + oi * ow;
                    for a in a_lo..a_hi {
                        let x_row = x_base + (i0 + a as isize) as usize * w;
                        let k_row = k_base + a * kw;
                        let edge = |oj: usize, gxd: &mut [f64], gkd: &mut [f64]| {
                            let g = gd[g_row + oj];
                            let j0 = (oj * stride) as isize - pad as isize;
                            let (b_lo, b_hi) = kernel_range(j0, w, kw);
                            let x_off = (x_row as isize + j0 + b_lo as isize) as usize;
                            for (step, b) in (b_lo..b_hi).enumerate() {
                                gkd[k_row + b] += xd[x_off + step] * g;
                                gxd[x_off + step] += kd[k_row + b] * g;
                            }
                        };
                        for oj in 0..oj_lo {
                            edge(oj, gxd, gkd);
                        }
                        for oj in oj_hi..ow {
                            edge(oj, gxd, gkd);
                        }
                        for oj in oj_lo..oj_hi {
                            let g = gd[g_row + oj];
                            let x_off = x_row + oj * stride - pad;
                            for b in 0..kw {
                                gkd[k_row + b] += xd[x_off + b] * g;
                                gxd[x_off + b] += kd[k_row + b] * g;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_k, grad_b))
}

/// Transposed convolution: x [N,F,H,W] with kernel [F,C,KH,KW] -> [N,C,OH,OW]
/// where OH = (H-1) stride + KH - 2 pad, plus a per-output-channel bias.
/// The linear part is the adjoint of `conv2d_fwd` with the same kernel.
pub fn conv_t2d_fwd(
    x: &Tensor,
    k: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, f, h, w) = x.dims4("conv_t2d")?;
    let (kf, c, kh, kw) = k.dims4("conv_t2d")?;
    check(kf == f, "conv_t2d", || {
        format!("input channels F={f} != kernel channels F={kf}")
    })?;
    check(bias.shape() == [c], "conv_t2d", || {
        format!("bias shape {:?} != output channels C={c}", bias.shape())
    })?;
    let oh = (h - 1) * stride + kh;
    let ow = (w - 1) * stride + kw;
    check(oh > 2 * pad && ow > 2 * pad, "conv_t2d", || {
        format!("padding {pad} too large for output {oh}x{ow}")
    })?;
    let oh = oh - 2 * pad;
    let ow = ow - 2 * pad;

    let xd = x.data();
    let kd = k.data();
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    {
        let od = out.data_mut();
        let bd = bias.data();
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * oh * ow;
                for cell in od[base..base + oh * ow].iter_mut() {
                    *cell = bd[ci];
                }
            }
        }
        let (jj_lo, jj_hi) = interior(w, ow, stride, pad, kw);
        for ni in 0..n {
            for fi in 0..f {
                let x_base = (ni * f + fi) * h * w;
                for ci in 0..c {
                    let o_base = (ni * c + ci) * oh * ow;
                    let k_base = (fi * c + ci) * kh * kw;
                    for ii in 0..h {
                        let i0 = (ii * stride) as isize - pad as isize;
                        let (a_lo, a_hi) = kernel_range(i0, oh, kh);
                        let x_row = x_base + ii * w;
                        for a in a_lo..a_hi {
                            let o_row = o_base + (i0 + a as isize) as usize * ow;
                            let k_row = &kd[k_base + a * kw..k_base + a * kw + kw];
                            let edge = |jj: usize, od: &mut [f64]| {
                                let xv = xd[x_row + jj];
                                let j0 = (jj * stride) as isize - pad as isize;
                                let (b_lo, b_hi) = kernel_range(j0, ow, kw);
                                let o_off = (o_row as isize + j0 + b_lo as isize) as usize;
                                for (step, b) in (b_lo..b_hi).enumerate() {
                                    od[o_off + step] += xv * k_row[b];
                                }
                            };
                            for jj in 0..jj_lo {
                                edge(jj, od);
                            }
                            for jj in jj_hi..w {
                                edge(jj, od);
                            }
                            for jj in jj_lo..jj_hi {
                                let xv = xd[x_row + jj];
                                let o_off = o_row + jj * stride - pad;
                                let os = &mut od[o_off..o_off + kw];
                                for b in 0..kw {
                                    os[b] += xv * k_row[b];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `conv_t2d_fwd`. The input gradient is the convolution
/// gather applied to `grad_out` (adjoint of the forward scatter).
pub fn conv_t2d_bwd(
    grad_out: &Tensor,
    x: &Tensor,
    k: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, f, h, w) = x.dims4("conv_t2d_bwd")?;
    let (kf, c, kh, kw) = k.dims4("conv_t2d_bwd")?;
    check(kf == f, "conv_t2d_bwd", || {
        format!("input channels F={f} != kernel channels F={kf}")
    })?;
    let (gn, gc, oh, ow) = grad_out.dims4("conv_t2d_bwd")?;
    check(gn == n && gc == c, "conv_t2d_bwd", || {
        format!("grad batch/channels ({gn},{gc}) != forward ({n},{c})")
    })?;

    let gd = grad_out.data();
    let xd = x.data();
    let kd = k.data();
    let mut grad_x = Tensor::zeros(&[n, f, h, w]);
    let mut grad_k = Tensor::zeros(&[f, c, kh, kw]);
    let mut grad_b = Tensor::zeros(&[c]);
    let gxd = grad_x.data_mut();
    let gkd = grad_k.data_mut();
    let gbd = grad_b.data_mut();
    let (jj_lo, jj_hi) = interior(w, ow, stride, pad, kw);
    for ni in 0..n {
        for fi in 0..f {
            let x_base = (ni * f + fi) * h * w;
            for ci in 0..c {
                let g_base = (ni * c + ci) * oh * ow;
                let k_base = (fi * c + ci) * kh * kw;
                for ii in 0..h {
                    let i0 = (ii * stride) as isize - pad as isize;
                    let (a_lo, a_hi) = kernel_range(i0, oh, kh);
                    let x_row = x_base + ii * w;
                    for a in a_lo..a_hi {
                        let g_row = g_base + (i0 + a as isize) as usize * ow;
                        let k_row = k_base + a * kw;
                        let edge = |jj: usize, gxd: &mut [f64], gkd: &mut [f64]| {
                            let xv = xd[x_row + jj];
                            let j0 = (jj * stride) as isize - pad as isize;
                            let (b_lo, b_hi) = kernel_range(j0, ow, kw);
                            let g_off = (g_row as isize + j0 + b_lo as isize) as usize;
                            let mut acc = 0.0;
                            for (step, b) in (b_lo..b_hi).enumerate() {
                                let g = gd[g_off + step];
                                acc += g * kd[k_row + b];
                                gkd[k_row + b] += xv * g;
                            }
                            gxd[x_row + jj] += acc;
                        };
                        for jj in 0..jj_lo {
                            edge(jj, gxd, gkd);
                        }
                        for jj in jj_hi..w {
                            edge(jj, gxd, gkd);
                        }
                        for jj in jj_lo..jj_hi {
                            let xv = xd[x_row + jj];
                            let g_off = g_row + jj * stride - pad;
                            let gs = &gd[g_off..g_off + kw];
                            let mut acc = 0.0;
                            for b in 0..kw {
                                acc += gs[b] * kd[k_row + b];
                                gkd[k_row + b] += xv * gs[b];
                            }
                            gxd[x_row + jj] += acc;
                        }
                    }
                }
            }
        }
    }
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * oh * ow;
            for cell in gd[base..base + oh * ow].iter() {
                gbd[ci] += cell;
            }
        }
    }
    Ok((grad_x, grad_k, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
        let numel = shape.iter().product();
        Tensor::from_vec(shape, (0..numel).map(|_| rng.uniform(-1.0, 1.0)).collect())
    }

    fn inner(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_kernel_outputs_bias() {
        let x = random_tensor(&[1, 1, 4, 4], &mut Rng::new(1));
        let k = Tensor::zeros(&[1, 1, 4, 4]);
        let bias = Tensor::from_vec(&[1], vec![0.75]);
        let out = conv2d_fwd(&x, &k, &bias, 2, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn all_ones_window_overlap_counts() {
        // With an all-ones input and kernel, each output cell counts how many
        // input cells its padded window overlaps. Hand count for pad 1,
        // stride 2, 4x4 kernel: on a 4x4 input every window covers rows
        // {2oi-1..2oi+2} of which exactly three are in bounds, so all four
        // outputs are 9; on a 5x5 input the second window gains a row/column,
        // giving [9 12; 12 16].
        let k = Tensor::from_vec(&[1, 1, 4, 4], vec![1.0; 16]);
        let bias = Tensor::from_vec(&[1], vec![0.5]);

        let x4 = Tensor::from_vec(&[1, 1, 4, 4], vec![1.0; 16]);
        let out = conv2d_fwd(&x4, &k, &bias, 2, 1).unwrap();
        assert_eq!(out.data(), &[9.5, 9.5, 9.5, 9.5]);

        let x5 = Tensor::from_vec(&[1, 1, 5, 5], vec![1.0; 25]);
        let out = conv2d_fwd(&x5, &k, &bias, 2, 1).unwrap();
        assert_eq!(out.data(), &[9.5, 12.5, 12.5, 16.5]);
    }

    #[test]
    fn conv_is_linear_in_input() {
        let mut rng = Rng::new(2);
        let x = random_tensor(&[2, 3, 8, 6], &mut rng);
        let k = random_tensor(&[4, 3, 4, 4], &mut rng);
        let bias = Tensor::zeros(&[4]);
        let base = conv2d_fwd(&x, &k, &bias, 2, 1).unwrap();
        let scaled = conv2d_fwd(&x.map(|v| 3.5 * v), &k, &bias, 2, 1).unwrap();
        for (a, b) in base.data().iter().zip(scaled.data()) {
            assert!((3.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_shape_mismatch_names_axis() {
        let x = Tensor::zeros(&[1, 3, 8, 8]);
        let k = Tensor::zeros(&[4, 2, 4, 4]);
        let bias = Tensor::zeros(&[4]);
        match conv2d_fwd(&x, &k, &bias, 2, 1) {
            Err(Error::ShapeMismatch { detail, .. }) => assert!(detail.contains("channels")),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn conv_bwd_zero_grad_gives_zero() {
        let mut rng = Rng::new(3);
        let x = random_tensor(&[1, 2, 6, 6], &mut rng);
        let k = random_tensor(&[3, 2, 4, 4], &mut rng);
        let g = Tensor::zeros(&[1, 3, 3, 3]);
        let (gx, gk, gb) = conv2d_bwd(&g, &x, &k, 2, 1).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gk.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_bwd_bias_is_grad_sum() {
        let mut rng = Rng::new(4);
        let x = random_tensor(&[2, 1, 6, 6], &mut rng);
        let k = random_tensor(&[2, 1, 4, 4], &mut rng);
        let g = random_tensor(&[2, 2, 3, 3], &mut rng);
        let (_, _, gb) = conv2d_bwd(&g, &x, &k, 2, 1).unwrap();
        for fi in 0..2 {
            let mut expected = 0.0;
            for ni in 0..2 {
                for cell in 0..9 {
                    expected += g.data()[(ni * 2 + fi) * 9 + cell];
                }
            }
            assert!((gb.data()[fi] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_t_zero_input_outputs_bias() {
        let x = Tensor::zeros(&[1, 2, 3, 3]);
        let k = Tensor::from_vec(&[2, 1, 4, 4], vec![0.3; 32]);
        let bias = Tensor::from_vec(&[1], vec![-0.25]);
        let out = conv_t2d_fwd(&x, &k, &bias, 2, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 6, 6]);
        assert!(out.data().iter().all(|&v| v == -0.25));
    }

    #[test]
    fn conv_t_doubles_spatial_dims() {
        let x = Tensor::zeros(&[1, 4, 5, 7]);
        let k = Tensor::zeros(&[4, 2, 4, 4]);
        let bias = Tensor::zeros(&[2]);
        let out = conv_t2d_fwd(&x, &k, &bias, 2, 1).unwrap();
        assert_eq!(out.shape(), &[1, 2, 10, 14]);
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = Rng::new(5);
        for case in 0..50 {
            let n = 1 + rng.next_below(2);
            let c = 1 + rng.next_below(3);
            let f = 1 + rng.next_below(3);
            let h = 2 * (2 + rng.next_below(4));
            let w = 2 * (2 + rng.next_below(4));
            let x = random_tensor(&[n, c, h, w], &mut rng);
            let k = random_tensor(&[f, c, 4, 4], &mut rng);
            let zero_f = Tensor::zeros(&[f]);
            let zero_c = Tensor::zeros(&[c]);
            let cx = conv2d_fwd(&x, &k, &zero_f, 2, 1).unwrap();
            let y = random_tensor(cx.shape(), &mut rng);
            let ty = conv_t2d_fwd(&y, &k, &zero_c, 2, 1).unwrap();
            let lhs = inner(&cx, &y);
            let rhs = inner(&x, &ty);
            let scale = lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(
                ((lhs - rhs) / scale).abs() < 1e-8,
                "case {case}: <conv(x),y>={lhs} vs <x,convT(y)>={rhs}"
            );
        }
    }

    /// Central finite differences through a scalar functional of the op.
    fn finite_diff_check(
        fwd: &dyn Fn(&Tensor, &Tensor) -> Tensor,
        bwd: &dyn Fn(&Tensor, &Tensor, &Tensor) -> (Tensor, Tensor),
        x: &Tensor,
        k: &Tensor,
        probe: &Tensor,
    ) {
        let eps = 1e-5;
        let loss = |x: &Tensor, k: &Tensor| -> f64 { inner(&fwd(x, k), probe) };
        let (gx, gk) = bwd(probe, x, k);
        for (param, grad) in [(x, &gx), (k, &gk)] {
            for idx in 0..param.numel() {
                let mut plus = param.clone();
                plus.data_mut()[idx] += eps;
                let mut minus = param.clone();
                minus.data_mut()[idx] -= eps;
                let (lp, lm) = if std::ptr::eq(param, x) {
                    (loss(&plus, k), loss(&minus, k))
                } else {
                    (loss(x, &plus), loss(x, &minus))
                };
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = grad.data()[idx];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    ((numeric - analytic) / denom).abs() < 1e-4,
                    "idx {idx}: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn conv_bwd_matches_finite_differences() {
        let mut rng = Rng::new(6);
        let x = random_tensor(&[1, 1, 8, 8], &mut rng);
        let k = random_tensor(&[2, 1, 4, 4], &mut rng);
        let bias = Tensor::zeros(&[2]);
        let out = conv2d_fwd(&x, &k, &bias, 2, 1).unwrap();
        let probe = random_tensor(out.shape(), &mut rng);
        finite_diff_check(
            &|x, k| conv2d_fwd(x, k, &bias, 2, 1).unwrap(),
            &|g, x, k| {
                let (gx, gk, _) = conv2d_bwd(g, x, k, 2, 1).unwrap();
                (gx, gk)
            },
            &x,
            &k,
            &probe,
        );
    }

    #[test]
    fn conv_t_bwd_matches_finite_differences() {
        let mut rng = Rng::new(7);
        let x = random_tensor(&[1, 2, 4, 4], &mut rng);
        let k = random_tensor(&[2, 1, 4, 4], &mut rng);
        let bias = Tensor::zeros(&[1]);
        let out = conv_t2d_fwd(&x, &k, &bias, 2, 1).unwrap();
        let probe = random_tensor(out.shape(), &mut rng);
        finite_diff_check(
            &|x, k| conv_t2d_fwd(x, k, &bias, 2, 1).unwrap(),
            &|g, x, k| {
                let (gx, gk, _) = conv_t2d_bwd(g, x, k, 2, 1).unwrap();
                (gx, gk)
            },
            &x,
            &k,
            &probe,
        );
    }
}
