//! Spectrogram cache: one fixed-shape spectrogram per token, stored as a
//! flat binary container so training never re-reads audio.
//!
//! Layout: magic "CAES1", then l1, l2, token count as u32 little-endian,
//! then l1*l2 f32 little-endian values per token in token_id order.

use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"CAES1";

/// In-memory cache contents, indexed by token id.
#[derive(Debug, Clone)]
pub struct SpectrogramStore {
    pub l1: usize,
    pub l2: usize,
    specs: Vec<Spectrogram>,
}

impl SpectrogramStore {
    pub fn new(l1: usize, l2: usize) -> Self {
        SpectrogramStore { l1, l2, specs: Vec::new() }
    }

    /// Append the spectrogram for the next token id.
    pub fn push(&mut self, spec: Spectrogram) {
        assert_eq!(
            (spec.l1, spec.l2),
            (self.l1, self.l2),
            "spectrogram shape must match the store"
        );
        self.specs.push(spec);
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, token_id: u32) -> Result<&Spectrogram> {
        self.specs.get(token_id as usize).ok_or(Error::MissingSpectrogram { token_id })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut buf = Vec::with_capacity(17 + self.specs.len() * self.l1 * self.l2 * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.l1 as u32).to_le_bytes());
        buf.extend_from_slice(&(self.l2 as u32).to_le_bytes());
        buf.extend_from_slice(&(self.specs.len() as u32).to_le_bytes());
        for spec in &self.specs {
            for &v in &spec.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 17 || &bytes[..5] != MAGIC {
            return Err(Error::BadMagic { path: path.into(), magic: "CAES1" });
        }
        let l1 = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let l2 = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let cell = l1 * l2;
        if bytes.len() != 17 + count * cell * 4 {
            return Err(Error::Truncated { what: "spectrogram cache", path: path.into() });
        }
        let mut specs = Vec::with_capacity(count);
        let mut offset = 17;
        for _ in 0..count {
            let mut values = Vec::with_capacity(cell);
            for _ in 0..cell {
                values.push(f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()));
                offset += 4;
            }
            specs.push(Spectrogram { values, l1, l2 });
        }
        Ok(SpectrogramStore { l1, l2, specs })
    }
}
