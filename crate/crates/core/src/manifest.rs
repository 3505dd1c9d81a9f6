//! Corpus manifest: the JSON sidecar written at ingest time so later stages
//! (train, embed) never have to re-read audio. It records corpus statistics,
//! the DSP parameters and normalization ceiling actually used, the
//! sentence-level split, and every token's normalized word.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_word, Corpus, CorpusStats};
use crate::dataset::SplitSpec;
use crate::dsp::DspParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token_id: u32,
    /// Normalized word text.
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub words: usize,
    pub sentences: usize,
    pub seconds: f64,
    pub context_mappings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stats: ManifestStats,
    pub dsp: DspParams,
    /// Max raw spectrogram value over the training split, the log-normalize
    /// ceiling.
    pub normalize_ceiling: f64,
    pub window: usize,
    pub seed: u64,
    pub split: SplitSpec,
    pub sentences: Vec<Vec<TokenEntry>>,
}

impl Manifest {
    pub fn build(
        corpus: &Corpus,
        dsp: DspParams,
        normalize_ceiling: f64,
        window: usize,
        seed: u64,
        split: SplitSpec,
        context_mappings: usize,
    ) -> Manifest {
        let CorpusStats { words, sentences, seconds } = corpus.stats();
        let sentence_tokens = corpus
            .sentences
            .iter()
            .map(|sentence| {
                sentence
                    .iter()
                    .map(|(span, _)| TokenEntry {
                        token_id: span.token_id,
                        word: normalize_word(&span.word_text),
                        start_s: span.start_s,
                        end_s: span.end_s,
                    })
                    .collect()
            })
            .collect();
        Manifest {
            stats: ManifestStats { words, sentences, seconds, context_mappings },
            dsp,
            normalize_ceiling,
            window,
            seed,
            split,
            sentences: sentence_tokens,
        }
    }

    /// Token ids per sentence, the shape `build_context_pairs` consumes.
    pub fn sentence_token_ids(&self) -> Vec<Vec<u32>> {
        self.sentences
            .iter()
            .map(|s| s.iter().map(|t| t.token_id).collect())
            .collect()
    }

    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.sentences
            .iter()
            .flatten()
            .map(|t| t.word.as_str())
            .filter(|w| !w.is_empty())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config { detail: format!("manifest serialization: {e}") })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config { detail: format!("manifest parse: {e}") })
    }

    #[cfg(test)]
    pub(crate) fn for_tests(sentences: Vec<Vec<TokenEntry>>) -> Manifest {
        use std::collections::BTreeSet;
        let words = sentences.iter().map(Vec::len).sum();
        Manifest {
            stats: ManifestStats {
                words,
                sentences: sentences.len(),
                seconds: 0.0,
                context_mappings: 0,
            },
            dsp: DspParams::default(),
            normalize_ceiling: 1.0,
            window: 2,
            seed: 0,
            split: SplitSpec {
                train: BTreeSet::new(),
                val: BTreeSet::new(),
                test: BTreeSet::new(),
                seed: 0,
            },
            sentences,
        }
    }
}
