//! The convolutional autoencoder: a two-conv encoder to a d-dimensional
//! embedding, a mirrored two-transpose-conv decoder, and the context
//! reconstruction loss.
//!
//! One reconstruction is produced per target word; its squared distance to
//! each context word's spectrogram is averaged over the contexts available
//! to that item (boundary words have fewer than 2m), then over the batch.

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::nn::{
    apply_mask, conv2d_bwd, conv2d_fwd, conv_t2d_bwd, conv_t2d_fwd, dense_bwd, dense_fwd, dropout,
    he_init, leaky_relu, leaky_relu_bwd, sigmoid, sigmoid_bwd, DropoutMode, LayerParams, Tensor,
};
use crate::rng::Rng;

/// Architecture knobs that are independent of the data shape and the
/// training config; defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub leaky_slope: f64,
    /// When set, the decoder ends in a sigmoid instead of LeakyReLU.
    pub sigmoid_output: bool,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            conv1_channels: 8,
            conv2_channels: 16,
            kernel: 4,
            stride: 2,
            pad: 1,
            leaky_slope: 0.01,
            sigmoid_output: false,
        }
    }
}

/// Full model configuration: input grid, architecture, embedding width,
/// and dropout rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub embedding_dim: usize,
    pub dropout_rate: f64,
    #[serde(flatten)]
    pub shape: ModelShape,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_h: 128,
            input_w: 96,
            embedding_dim: 16,
            dropout_rate: 0.7,
            shape: ModelShape::default(),
        }
    }
}

impl ModelConfig {
    /// A scaled-down configuration for numeric tests: 8x8 inputs, 2x2
    /// kernels without padding, and a tiny embedding.
    pub fn miniature() -> Self {
        ModelConfig {
            input_h: 8,
            input_w: 8,
            embedding_dim: 2,
            dropout_rate: 0.5,
            shape: ModelShape {
                conv1_channels: 2,
                conv2_channels: 4,
                kernel: 2,
                stride: 2,
                pad: 0,
                leaky_slope: 0.01,
                sigmoid_output: false,
            },
        }
    }

    fn conv_out(&self, dim: usize) -> usize {
        (dim + 2 * self.shape.pad - self.shape.kernel) / self.shape.stride + 1
    }

    fn conv_t_out(&self, dim: usize) -> usize {
        (dim - 1) * self.shape.stride + self.shape.kernel - 2 * self.shape.pad
    }

    /// Spatial dims after the two encoder convolutions.
    pub fn bottleneck_hw(&self) -> (usize, usize) {
        let h = self.conv_out(self.conv_out(self.input_h));
        let w = self.conv_out(self.conv_out(self.input_w));
        (h, w)
    }

    /// Flattened feature width entering the embedding layer.
    pub fn flat_dim(&self) -> usize {
        let (h, w) = self.bottleneck_hw();
        self.shape.conv2_channels * h * w
    }

    /// Check that the decoder mirrors the encoder back to the input grid
    /// and that every dimension is usable.
    pub fn validate(&self) -> Result<()> {
        let s = &self.shape;
        if self.embedding_dim == 0
            || s.conv1_channels == 0
            || s.conv2_channels == 0
            || s.kernel == 0
            || s.stride == 0
        {
            return Err(Error::Config { detail: "model dimensions must be positive".into() });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidDropoutRate { rate: self.dropout_rate });
        }
        let (h2, w2) = self.bottleneck_hw();
        let h_back = self.conv_t_out(self.conv_t_out(h2));
        let w_back = self.conv_t_out(self.conv_t_out(w2));
        if h_back != self.input_h || w_back != self.input_w {
            return Err(Error::Config {
                detail: format!(
                    "decoder output {h_back}x{w_back} does not recover input {}x{} \
                     (kernel {}, stride {}, pad {})",
                    self.input_h, self.input_w, s.kernel, s.stride, s.pad
                ),
            });
        }
        Ok(())
    }
}

/// Encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub cfg: ModelConfig,
    pub enc_conv1: LayerParams,
    pub enc_conv2: LayerParams,
    pub enc_dense: LayerParams,
    pub dec_dense: LayerParams,
    pub dec_conv_t1: LayerParams,
    pub dec_conv_t2: LayerParams,
}

/// Gradients for every parameter tensor, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub enc_conv1: LayerParams,
    pub enc_conv2: LayerParams,
    pub enc_dense: LayerParams,
    pub dec_dense: LayerParams,
    pub dec_conv_t1: LayerParams,
    pub dec_conv_t2: LayerParams,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    x: Tensor,
    z1: Tensor,
    a1: Tensor,
    z2: Tensor,
    mask: Option<Tensor>,
    dropped: Tensor,
    z3: Tensor,
    pub h: Tensor,
    z4: Tensor,
    a4: Tensor,
    z5: Tensor,
    a5: Tensor,
    z6: Tensor,
    pub recon: Tensor,
}

impl ForwardCache {
    /// Hash of the sign pattern of every pre-activation. Two forward passes
    /// with the same signature lie in the same linear region of the
    /// piecewise-linear network, where the loss is exactly quadratic —
    /// the condition under which central finite differences are exact.
    pub fn kink_signature(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        for tensor in [&self.z1, &self.z2, &self.z3, &self.z4, &self.z5, &self.z6] {
            for &v in tensor.data() {
                hash ^= (v > 0.0) as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        }
        hash
    }
}

/// Loss value with per-pair terms and the divisor bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// Squared-distance terms, one inner vec per batch item.
    pub per_pair: Vec<Vec<f64>>,
    pub batch_size: usize,
    pub context_counts: Vec<usize>,
}

struct EncCache {
    z1: Tensor,
    a1: Tensor,
    z2: Tensor,
    mask: Option<Tensor>,
    dropped: Tensor,
    z3: Tensor,
    h: Tensor,
}

struct DecCache {
    z4: Tensor,
    a4: Tensor,
    z5: Tensor,
    a5: Tensor,
    z6: Tensor,
    recon: Tensor,
}

impl CaeModel {
    /// Seeded He initialization for all weights; biases start at zero.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<CaeModel> {
        cfg.validate()?;
        let s = cfg.shape.clone();
        let k = s.kernel;
        let flat = cfg.flat_dim();
        let d = cfg.embedding_dim;
        let mut rng = Rng::derived(seed, "init", 0);
        Ok(CaeModel {
            enc_conv1: LayerParams {
                weight: he_init(&[s.conv1_channels, 1, k, k], &mut rng),
                bias: Tensor::zeros(&[s.conv1_channels]),
            },
            enc_conv2: LayerParams {
                weight: he_init(&[s.conv2_channels, s.conv1_channels, k, k], &mut rng),
                bias: Tensor::zeros(&[s.conv2_channels]),
            },
            enc_dense: LayerParams {
                weight: he_init(&[flat, d], &mut rng),
                bias: Tensor::zeros(&[d]),
            },
            dec_dense: LayerParams {
                weight: he_init(&[d, flat], &mut rng),
                bias: Tensor::zeros(&[flat]),
            },
            dec_conv_t1: LayerParams {
                weight: he_init(&[s.conv2_channels, s.conv1_channels, k, k], &mut rng),
                bias: Tensor::zeros(&[s.conv1_channels]),
            },
            dec_conv_t2: LayerParams {
                weight: he_init(&[s.conv1_channels, 1, k, k], &mut rng),
                bias: Tensor::zeros(&[1]),
            },
            cfg,
        })
    }

    /// Parameter tensors in checkpoint order, with layer names for
    /// diagnostics.
    pub fn slots(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("enc_conv1.weight", &self.enc_conv1.weight),
            ("enc_conv1.bias", &self.enc_conv1.bias),
            ("enc_conv2.weight", &self.enc_conv2.weight),
            ("enc_conv2.bias", &self.enc_conv2.bias),
            ("enc_dense.weight", &self.enc_dense.weight),
            ("enc_dense.bias", &self.enc_dense.bias),
            ("dec_dense.weight", &self.dec_dense.weight),
            ("dec_dense.bias", &self.dec_dense.bias),
            ("dec_conv_t1.weight", &self.dec_conv_t1.weight),
            ("dec_conv_t1.bias", &self.dec_conv_t1.bias),
            ("dec_conv_t2.weight", &self.dec_conv_t2.weight),
            ("dec_conv_t2.bias", &self.dec_conv_t2.bias),
        ]
    }

    pub fn slots_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("enc_conv1.weight", &mut self.enc_conv1.weight),
            ("enc_conv1.bias", &mut self.enc_conv1.bias),
            ("enc_conv2.weight", &mut self.enc_conv2.weight),
            ("enc_conv2.bias", &mut self.enc_conv2.bias),
            ("enc_dense.weight", &mut self.enc_dense.weight),
            ("enc_dense.bias", &mut self.enc_dense.bias),
            ("dec_dense.weight", &mut self.dec_dense.weight),
            ("dec_dense.bias", &mut self.dec_dense.bias),
            ("dec_conv_t1.weight", &mut self.dec_conv_t1.weight),
            ("dec_conv_t1.bias", &mut self.dec_conv_t1.bias),
            ("dec_conv_t2.weight", &mut self.dec_conv_t2.weight),
            ("dec_conv_t2.bias", &mut self.dec_conv_t2.bias),
        ]
    }

    fn check_input(&self, x: &Tensor, op: &'static str) -> Result<usize> {
        let (n, c, h, w) = x.dims4(op)?;
        if c != 1 || h != self.cfg.input_h || w != self.cfg.input_w {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!(
                    "expected [N,1,{},{}], got {:?}",
                    self.cfg.input_h, self.cfg.input_w, x.shape()
                ),
            });
        }
        Ok(n)
    }

    /// Encoder: conv, LeakyReLU, conv, LeakyReLU, flatten, dropout (train
    /// only), dense, LeakyReLU. Returns the [N,d] embeddings.
    pub fn encode(&self, x: &Tensor, mode: DropoutMode) -> Result<Tensor> {
        Ok(self.encode_cached(x, mode)?.h)
    }

    fn encode_cached(&self, x: &Tensor, mode: DropoutMode) -> Result<EncCache> {
        let n = self.check_input(x, "encode")?;
        let s = &self.cfg.shape;
        let z1 = conv2d_fwd(x, &self.enc_conv1.weight, &self.enc_conv1.bias, s.stride, s.pad)?;
        let a1 = leaky_relu(&z1, s.leaky_slope);
        let z2 = conv2d_fwd(&a1, &self.enc_conv2.weight, &self.enc_conv2.bias, s.stride, s.pad)?;
        let a2 = leaky_relu(&z2, s.leaky_slope);
        let flat = a2.reshape(&[n, self.cfg.flat_dim()])?;
        let (dropped, mask) = dropout(&flat, self.cfg.dropout_rate, mode)?;
        let z3 = dense_fwd(&dropped, &self.enc_dense.weight, &self.enc_dense.bias)?;
        let h = leaky_relu(&z3, s.leaky_slope);
        Ok(EncCache { z1, a1, z2, mask, dropped, z3, h })
    }

    /// Decoder: dense, LeakyReLU, reshape, transpose conv, LeakyReLU,
    /// transpose conv, final activation. Returns [N,1,H,W] reconstructions.
    pub fn decode(&self, h: &Tensor) -> Result<Tensor> {
        Ok(self.decode_cached(h)?.recon)
    }

    fn decode_cached(&self, h: &Tensor) -> Result<DecCache> {
        let (n, d) = h.dims2("decode")?;
        if d != self.cfg.embedding_dim {
            return Err(Error::ShapeMismatch {
                op: "decode",
                detail: format!("embedding width {d} != configured {}", self.cfg.embedding_dim),
            });
        }
        let s = &self.cfg.shape;
        let (h2, w2) = self.cfg.bottleneck_hw();
        let z4 = dense_fwd(h, &self.dec_dense.weight, &self.dec_dense.bias)?;
        let a4 = leaky_relu(&z4, s.leaky_slope).reshape(&[n, s.conv2_channels, h2, w2])?;
        let z5 =
            conv_t2d_fwd(&a4, &self.dec_conv_t1.weight, &self.dec_conv_t1.bias, s.stride, s.pad)?;
        let a5 = leaky_relu(&z5, s.leaky_slope);
        let z6 =
            conv_t2d_fwd(&a5, &self.dec_conv_t2.weight, &self.dec_conv_t2.bias, s.stride, s.pad)?;
        let recon = if s.sigmoid_output { sigmoid(&z6) } else { leaky_relu(&z6, s.leaky_slope) };
        Ok(DecCache { z4, a4, z5, a5, z6, recon })
    }

    /// One pass through encoder and decoder, keeping everything the backward
    /// pass needs. The reconstruction is computed once per item, however
    /// many contexts the item carries.
    pub fn forward(&self, x: &Tensor, mode: DropoutMode) -> Result<ForwardCache> {
        let enc = self.encode_cached(x, mode)?;
        let dec = self.decode_cached(&enc.h)?;
        if !dec.recon.is_finite() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: "non-finite values in reconstruction".into(),
            });
        }
        Ok(ForwardCache {
            x: x.clone(),
            z1: enc.z1,
            a1: enc.a1,
            z2: enc.z2,
            mask: enc.mask,
            dropped: enc.dropped,
            z3: enc.z3,
            h: enc.h,
            z4: dec.z4,
            a4: dec.a4,
            z5: dec.z5,
            a5: dec.a5,
            z6: dec.z6,
            recon: dec.recon,
        })
    }

    /// Exact gradient of the context loss with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, contexts: &[Vec<Tensor>]) -> Result<ModelGrads> {
        let s = &self.cfg.shape;
        let n = cache.recon.shape()[0];
        let grad_recon = context_loss_grad(&cache.recon, contexts)?;

        // Decoder, output back to embedding.
        let grad_z6 = if s.sigmoid_output {
            sigmoid_bwd(&grad_recon, &cache.recon)
        } else {
            leaky_relu_bwd(&grad_recon, &cache.z6, s.leaky_slope)
        };
        let (grad_a5, g_t2_w, g_t2_b) =
            conv_t2d_bwd(&grad_z6, &cache.a5, &self.dec_conv_t2.weight, s.stride, s.pad)?;
        let grad_z5 = leaky_relu_bwd(&grad_a5, &cache.z5, s.leaky_slope);
        let (grad_a4, g_t1_w, g_t1_b) =
            conv_t2d_bwd(&grad_z5, &cache.a4, &self.dec_conv_t1.weight, s.stride, s.pad)?;
        let grad_z4 = leaky_relu_bwd(
            &grad_a4.reshape(&[n, self.cfg.flat_dim()])?,
            &cache.z4,
            s.leaky_slope,
        );
        let (grad_h, g_dd_w, g_dd_b) = dense_bwd(&grad_z4, &cache.h, &self.dec_dense.weight)?;

        // Encoder, embedding back to input.
        let grad_z3 = leaky_relu_bwd(&grad_h, &cache.z3, s.leaky_slope);
        let (grad_dropped, g_ed_w, g_ed_b) =
            dense_bwd(&grad_z3, &cache.dropped, &self.enc_dense.weight)?;
        let grad_flat = match &cache.mask {
            Some(mask) => apply_mask(&grad_dropped, mask),
            None => grad_dropped,
        };
        let (h2, w2) = self.cfg.bottleneck_hw();
        let grad_a2 = grad_flat.reshape(&[n, s.conv2_channels, h2, w2])?;
        let grad_z2 = leaky_relu_bwd(&grad_a2, &cache.z2, s.leaky_slope);
        let (grad_a1, g_c2_w, g_c2_b) =
            conv2d_bwd(&grad_z2, &cache.a1, &self.enc_conv2.weight, s.stride, s.pad)?;
        let grad_z1 = leaky_relu_bwd(&grad_a1, &cache.z1, s.leaky_slope);
        let (_, g_c1_w, g_c1_b) =
            conv2d_bwd(&grad_z1, &cache.x, &self.enc_conv1.weight, s.stride, s.pad)?;

        Ok(ModelGrads {
            enc_conv1: LayerParams { weight: g_c1_w, bias: g_c1_b },
            enc_conv2: LayerParams { weight: g_c2_w, bias: g_c2_b },
            enc_dense: LayerParams { weight: g_ed_w, bias: g_ed_b },
            dec_dense: LayerParams { weight: g_dd_w, bias: g_dd_b },
            dec_conv_t1: LayerParams { weight: g_t1_w, bias: g_t1_b },
            dec_conv_t2: LayerParams { weight: g_t2_w, bias: g_t2_b },
        })
    }

    /// Forward, loss, and gradients in one call.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        contexts: &[Vec<Tensor>],
        mode: DropoutMode,
    ) -> Result<(LossReport, ModelGrads)> {
        let cache = self.forward(x, mode)?;
        let report = context_loss(&cache.recon, contexts)?;
        let grads = self.backward(&cache, contexts)?;
        Ok((report, grads))
    }
}

impl ModelGrads {
    pub fn slots(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("enc_conv1.weight", &self.enc_conv1.weight),
            ("enc_conv1.bias", &self.enc_conv1.bias),
            ("enc_conv2.weight", &self.enc_conv2.weight),
            ("enc_conv2.bias", &self.enc_conv2.bias),
            ("enc_dense.weight", &self.enc_dense.weight),
            ("enc_dense.bias", &self.enc_dense.bias),
            ("dec_dense.weight", &self.dec_dense.weight),
            ("dec_dense.bias", &self.dec_dense.bias),
            ("dec_conv_t1.weight", &self.dec_conv_t1.weight),
            ("dec_conv_t1.bias", &self.dec_conv_t1.bias),
            ("dec_conv_t2.weight", &self.dec_conv_t2.weight),
            ("dec_conv_t2.bias", &self.dec_conv_t2.bias),
        ]
    }
}

/// Context reconstruction loss: for each item, the squared distance of its
/// reconstruction to each of its context spectrograms, averaged over the
/// item's available contexts, then over the batch.
pub fn context_loss(recon: &Tensor, contexts: &[Vec<Tensor>]) -> Result<LossReport> {
    let (n, c, h, w) = recon.dims4("context_loss")?;
    if contexts.len() != n {
        return Err(Error::ShapeMismatch {
            op: "context_loss",
            detail: format!("{} context lists for batch of {n}", contexts.len()),
        });
    }
    let item_len = c * h * w;
    let mut per_pair = Vec::with_capacity(n);
    let mut context_counts = Vec::with_capacity(n);
    let mut total = 0.0;
    for (i, ctxs) in contexts.iter().enumerate() {
        if ctxs.is_empty() {
            return Err(Error::NoContexts { index: i });
        }
        let rec = &recon.data()[i * item_len..(i + 1) * item_len];
        let mut deltas = Vec::with_capacity(ctxs.len());
        let mut item_sum = 0.0;
        for ctx in ctxs {
            if ctx.numel() != item_len {
                return Err(Error::ShapeMismatch {
                    op: "context_loss",
                    detail: format!(
                        "context shape {:?} != reconstruction item [{c},{h},{w}]",
                        ctx.shape()
                    ),
                });
            }
            let mut delta = 0.0;
            for (r, t) in rec.iter().zip(ctx.data()) {
                let diff = r - t;
                delta += diff * diff;
            }
            deltas.push(delta);
            item_sum += delta;
        }
        total += item_sum / ctxs.len() as f64;
        context_counts.push(ctxs.len());
        per_pair.push(deltas);
    }
    total /= n as f64;
    Ok(LossReport { total, per_pair, batch_size: n, context_counts })
}

/// d(loss)/d(reconstruction): per item, 2/(N * |ctx|) times the summed
/// residuals against that item's contexts.
pub fn context_loss_grad(recon: &Tensor, contexts: &[Vec<Tensor>]) -> Result<Tensor> {
    let (n, c, h, w) = recon.dims4("context_loss_grad")?;
    if contexts.len() != n {
        return Err(Error::ShapeMismatch {
            op: "context_loss_grad",
            detail: format!("{} context lists for batch of {n}", contexts.len()),
        });
    }
    let item_len = c * h * w;
    let mut grad = Tensor::zeros(recon.shape());
    let gd = grad.data_mut();
    for (i, ctxs) in contexts.iter().enumerate() {
        if ctxs.is_empty() {
            return Err(Error::NoContexts { index: i });
        }
        let scale = 2.0 / (n as f64 * ctxs.len() as f64);
        let rec = &recon.data()[i * item_len..(i + 1) * item_len];
        for ctx in ctxs {
            for (cell, (r, t)) in rec.iter().zip(ctx.data()).enumerate() {
                gd[i * item_len + cell] += scale * (r - t);
            }
        }
    }
    Ok(grad)
}

/// View a spectrogram as a [1, l1, l2] tensor.
pub fn spectrogram_to_tensor(spec: &Spectrogram) -> Tensor {
    Tensor::from_vec(&[1, spec.l1, spec.l2], spec.values.iter().map(|&v| v as f64).collect())
}

/// Stack spectrograms into a [N, 1, l1, l2] batch tensor.
pub fn batch_to_tensor(specs: &[&Spectrogram]) -> Tensor {
    assert!(!specs.is_empty(), "batch must be nonempty");
    let (l1, l2) = (specs[0].l1, specs[0].l2);
    let mut data = Vec::with_capacity(specs.len() * l1 * l2);
    for spec in specs {
        assert_eq!((spec.l1, spec.l2), (l1, l2), "mixed spectrogram shapes in one batch");
        data.extend(spec.values.iter().map(|&v| v as f64));
    }
    Tensor::from_vec(&[specs.len(), 1, l1, l2], data)
}
