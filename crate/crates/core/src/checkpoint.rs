//! Model checkpoints: magic "CAEM1", a fixed config block, then parameter
//! tensors as 32-bit little-endian floats in slot order, optionally followed
//! by the Adam moment tensors in the same order.
//!
//! Writes are atomic (temp file then rename). Because the trainer keeps
//! parameters on the f32 grid, save followed by load reproduces the model
//! bit for bit.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CaeModel, ModelConfig, ModelShape};
use crate::nn::Tensor;
use crate::trainer::AdamState;

const MAGIC: &[u8; 5] = b"CAEM1";

/// A saved model plus optional optimizer state for resuming.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: CaeModel,
    pub adam: Option<AdamState>,
    /// Number of completed training epochs at save time.
    pub trained_epochs: u64,
}

fn push_tensor_f32(buf: &mut Vec<u8>, t: &Tensor) {
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_tensor_f32(bytes: &[u8], offset: &mut usize, shape: &[usize], path: &Path) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    let end = *offset + numel * 4;
    if end > bytes.len() {
        return Err(Error::Truncated { what: "checkpoint", path: path.into() });
    }
    let mut data = Vec::with_capacity(numel);
    let mut at = *offset;
    for _ in 0..numel {
        data.push(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64);
        at += 4;
    }
    *offset = end;
    Ok(Tensor::from_vec(shape, data))
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let cfg = &self.model.cfg;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        for v in [
            cfg.input_h,
            cfg.input_w,
            cfg.embedding_dim,
            cfg.shape.conv1_channels,
            cfg.shape.conv2_channels,
            cfg.shape.kernel,
            cfg.shape.stride,
            cfg.shape.pad,
            cfg.shape.sigmoid_output as usize,
            self.adam.is_some() as usize,
        ] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&cfg.shape.leaky_slope.to_le_bytes());
        buf.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
        let adam_t = self.adam.as_ref().map(|a| a.t).unwrap_or(0);
        buf.extend_from_slice(&adam_t.to_le_bytes());
        buf.extend_from_slice(&self.trained_epochs.to_le_bytes());
        for (_, tensor) in self.model.slots() {
            push_tensor_f32(&mut buf, tensor);
        }
        if let Some(adam) = &self.adam {
            for t in &adam.m {
                push_tensor_f32(&mut buf, t);
            }
            for t in &adam.v {
                push_tensor_f32(&mut buf, t);
            }
        }

        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 5 + 10 * 4 + 4 * 8 || &bytes[..5] != MAGIC {
            return Err(Error::BadMagic { path: path.into(), magic: "CAEM1" });
        }
        let mut ints = [0usize; 10];
        for (i, v) in ints.iter_mut().enumerate() {
            let at = 5 + i * 4;
            *v = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        }
        let mut offset = 5 + 10 * 4;
        let leaky_slope = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
        let dropout_rate = f64::from_le_bytes(bytes[offset + 8..offset + 16].try_into().unwrap());
        offset += 16;
        let adam_t = u64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
        let trained_epochs = u64::from_le_bytes(bytes[offset + 8..offset + 16].try_into().unwrap());
        offset += 16;

        let cfg = ModelConfig {
            input_h: ints[0],
            input_w: ints[1],
            embedding_dim: ints[2],
            dropout_rate,
            shape: ModelShape {
                conv1_channels: ints[3],
                conv2_channels: ints[4],
                kernel: ints[5],
                stride: ints[6],
                pad: ints[7],
                leaky_slope,
                sigmoid_output: ints[8] != 0,
            },
        };
        cfg.validate()?;
        let has_adam = ints[9] != 0;

        let mut model = CaeModel::init(cfg, 0)?;
        let shapes: Vec<Vec<usize>> =
            model.slots().iter().map(|(_, t)| t.shape().to_vec()).collect();
        for ((_, slot), shape) in model.slots_mut().into_iter().zip(&shapes) {
            *slot = read_tensor_f32(&bytes, &mut offset, shape, path)?;
        }
        let adam = if has_adam {
            let mut m = Vec::with_capacity(shapes.len());
            for shape in &shapes {
                m.push(read_tensor_f32(&bytes, &mut offset, shape, path)?);
            }
            let mut v = Vec::with_capacity(shapes.len());
            for shape in &shapes {
                v.push(read_tensor_f32(&bytes, &mut offset, shape, path)?);
            }
            Some(AdamState { m, v, t: adam_t })
        } else {
            None
        };
        if offset != bytes.len() {
            return Err(Error::Truncated { what: "checkpoint", path: path.into() });
        }
        Ok(Checkpoint { model, adam, trained_epochs })
    }
}

/// Save just the weights (no optimizer state).
pub fn save_checkpoint(model: &CaeModel, path: &Path) -> Result<()> {
    Checkpoint { model: model.clone(), adam: None, trained_epochs: 0 }.save(path)
}

/// Load just the weights.
pub fn load_checkpoint(path: &Path) -> Result<CaeModel> {
    Ok(Checkpoint::load(path)?.model)
}
