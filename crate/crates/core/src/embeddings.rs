//! Embedding extraction and the portable text table format.
//!
//! Token-level tables hold one vector per utterance (key `word#token_id`);
//! type-level tables pool a word's utterances into one vector by arithmetic
//! mean. The text format is the usual word-vector layout: a `<count> <dim>`
//! header, then `word v1 .. vd` per line.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cache::SpectrogramStore;
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::model::{batch_to_tensor, CaeModel};
use crate::nn::DropoutMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Token,
    Type,
}

impl Level {
    pub fn name(&self) -> &'static str {
        match self {
            Level::Token => "token",
            Level::Type => "type",
        }
    }
}

/// Word (or word#token) to d-dimensional vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub entries: BTreeMap<String, Vec<f64>>,
    pub level: Level,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new(level: Level, dim: usize) -> Self {
        EmbeddingTable { entries: BTreeMap::new(), level, dim }
    }

    pub fn insert(&mut self, key: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::EmbeddingDimMismatch {
                line: self.entries.len() + 1,
                expected: self.dim,
                got: vector.len(),
            });
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey { key });
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Vec<f64>> {
        self.entries.get(key)
    }

    pub fn expect_level(&self, expected: Level) -> Result<()> {
        if self.level != expected {
            return Err(Error::WrongTableLevel { expected: expected.name(), got: self.level.name() });
        }
        Ok(())
    }
}

/// Run the trained encoder over every cached token spectrogram (eval mode,
/// batched); keys are `normalized_word#token_id`.
pub fn embed_tokens(
    model: &CaeModel,
    manifest: &Manifest,
    store: &SpectrogramStore,
) -> Result<EmbeddingTable> {
    let d = model.cfg.embedding_dim;
    let mut table = EmbeddingTable::new(Level::Token, d);
    let tokens: Vec<(u32, &str)> = manifest
        .sentences
        .iter()
        .flatten()
        .map(|t| (t.token_id, t.word.as_str()))
        .collect();
    for chunk in tokens.chunks(32) {
        let specs: Result<Vec<_>> = chunk.iter().map(|(id, _)| store.get(*id)).collect();
        let specs = specs?;
        let x = batch_to_tensor(&specs);
        let h = model.encode(&x, DropoutMode::Eval)?;
        for (row, (token_id, word)) in chunk.iter().enumerate() {
            let vector = h.data()[row * d..(row + 1) * d].to_vec();
            table.insert(format!("{word}#{token_id}"), vector)?;
        }
    }
    if table.entries.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(table)
}

/// Pool a token-level table to one mean vector per word type.
pub fn aggregate_types(token_table: &EmbeddingTable) -> Result<EmbeddingTable> {
    token_table.expect_level(Level::Token)?;
    if token_table.entries.is_empty() {
        return Err(Error::EmptyTable);
    }
    let d = token_table.dim;
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (key, vector) in &token_table.entries {
        let word = key.rsplit_once('#').map(|(w, _)| w).unwrap_or(key);
        let entry = sums.entry(word.to_string()).or_insert_with(|| (vec![0.0; d], 0));
        for (acc, v) in entry.0.iter_mut().zip(vector) {
            *acc += v;
        }
        entry.1 += 1;
    }
    let mut table = EmbeddingTable::new(Level::Type, d);
    for (word, (sum, count)) in sums {
        let mean = sum.into_iter().map(|v| v / count as f64).collect();
        table.insert(word, mean)?;
    }
    Ok(table)
}

/// Write `<count> <dim>` then one `word v1 .. vd` line per entry, values at
/// nine significant digits.
pub fn export_text(table: &EmbeddingTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = format!("{} {}\n", table.entries.len(), table.dim);
    for (key, vector) in &table.entries {
        out.push_str(key);
        for v in vector {
            out.push_str(&format!(" {v:.8e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a text table. Tables loaded from disk are treated as type-level
/// (the side-by-side comparison role for external word vectors).
pub fn import_text(path: &Path) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::EmbeddingParse { line: 1, detail: "empty file".into() })?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::EmbeddingParse { line: 1, detail: "bad count in header".into() })?;
    let dim: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::EmbeddingParse { line: 1, detail: "bad dimension in header".into() })?;
    let mut table = EmbeddingTable::new(Level::Type, dim);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens
            .next()
            .ok_or_else(|| Error::EmbeddingParse { line: line_no, detail: "missing word".into() })?;
        let values: std::result::Result<Vec<f64>, _> = tokens.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| Error::EmbeddingParse {
            line: line_no,
            detail: format!("bad value: {e}"),
        })?;
        if values.len() != dim {
            return Err(Error::EmbeddingDimMismatch {
                line: line_no,
                expected: dim,
                got: values.len(),
            });
        }
        table.insert(key.to_string(), values)?;
    }
    if table.entries.len() != count {
        return Err(Error::EmbeddingParse {
            line: 1,
            detail: format!("header says {count} entries, file has {}", table.entries.len()),
        });
    }
    Ok(table)
}
