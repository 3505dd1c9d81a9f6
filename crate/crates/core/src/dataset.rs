//! Training-pair construction: slide a size-m context window over every
//! sentence, split the corpus at sentence level, and chunk shuffled pairs
//! into mini-batches.
//!
//! Windows never cross sentence boundaries; tokens near a boundary keep
//! their partial window instead of being dropped, and the loss divisor
//! adapts to the number of available contexts.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub type TokenId = u32;

/// One training unit: a target token and its in-sentence neighbors within
/// offset -m..m (0 excluded), offsets ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPair {
    pub target_id: TokenId,
    pub context_ids: Vec<TokenId>,
    /// Signed window offsets aligned with `context_ids`.
    pub offsets: Vec<i32>,
}

/// Sentence-level train/val/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: BTreeSet<u32>,
    pub val: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn contains_all(&self, n_sentences: usize) -> bool {
        self.train.len() + self.val.len() + self.test.len() == n_sentences
    }
}

/// A mini-batch of context pairs (spectrograms are materialized from the
/// cache at training time).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pairs: Vec<ContextPair>,
}

/// Build one pair per token that has at least one in-sentence neighbor
/// within the window. Single-token sentences yield nothing.
pub fn build_context_pairs(sentences: &[Vec<TokenId>], m: usize) -> Vec<ContextPair> {
    assert!(m >= 1, "context window must be at least 1");
    let mut pairs = Vec::new();
    for sentence in sentences {
        let n = sentence.len();
        for t in 0..n {
            let mut context_ids = Vec::new();
            let mut offsets = Vec::new();
            for j in -(m as i64)..=(m as i64) {
                if j == 0 {
                    continue;
                }
                let idx = t as i64 + j;
                if idx >= 0 && (idx as usize) < n {
                    context_ids.push(sentence[idx as usize]);
                    offsets.push(j as i32);
                }
            }
            if !context_ids.is_empty() {
                pairs.push(ContextPair { target_id: sentence[t], context_ids, offsets });
            }
        }
    }
    pairs
}

/// Total number of (target, context) mappings across all pairs.
pub fn count_mappings(pairs: &[ContextPair]) -> usize {
    pairs.iter().map(|p| p.context_ids.len()).sum()
}

/// Seeded sentence-level split: ~10% of sentences to test, ~10% of the
/// remainder to validation, the rest to train.
pub fn split_corpus(n_sentences: usize, seed: u64) -> Result<SplitSpec> {
    if n_sentences < 10 {
        return Err(Error::TooFewSentences { got: n_sentences, need: 10 });
    }
    let mut ids: Vec<u32> = (0..n_sentences as u32).collect();
    let mut rng = Rng::derived(seed, "split", 0);
    rng.shuffle(&mut ids);
    let n_test = ((n_sentences as f64) * 0.10).round() as usize;
    let n_val = (((n_sentences - n_test) as f64) * 0.10).round() as usize;
    let test: BTreeSet<u32> = ids[..n_test].iter().copied().collect();
    let val: BTreeSet<u32> = ids[n_test..n_test + n_val].iter().copied().collect();
    let train: BTreeSet<u32> = ids[n_test + n_val..].iter().copied().collect();
    Ok(SplitSpec { train, val, test, seed })
}

/// Shuffle pairs with a (seed, epoch)-derived stream and chunk into batches
/// of `n` (the last batch may be short).
pub fn make_batches(pairs: &[ContextPair], n: usize, seed: u64, epoch: u32) -> Result<Vec<Batch>> {
    assert!(n >= 1, "batch size must be at least 1");
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = Rng::derived(seed, "batches", epoch as u64);
    rng.shuffle(&mut order);
    Ok(order
        .chunks(n)
        .map(|chunk| Batch { pairs: chunk.iter().map(|&i| pairs[i].clone()).collect() })
        .collect())
}

/// Debug dump: CSV of `target_id,context_id,offset_j` lines.
pub fn dump_pairs_csv(pairs: &[ContextPair], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::from("target_id,context_id,offset_j\n");
    for pair in pairs {
        for (ctx, off) in pair.context_ids.iter().zip(&pair.offsets) {
            out.push_str(&format!("{},{},{}\n", pair.target_id, ctx, off));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent enumeration: for every ordered token pair in a sentence,
    /// count it when the distance is within the window.
    fn brute_force_mappings(sentences: &[Vec<TokenId>], m: usize) -> Vec<(TokenId, TokenId)> {
        let mut mappings = Vec::new();
        for s in sentences {
            for (i, &target) in s.iter().enumerate() {
                for (j, &ctx) in s.iter().enumerate() {
                    if i != j && (i as i64 - j as i64).unsigned_abs() as usize <= m {
                        mappings.push((target, ctx));
                    }
                }
            }
        }
        mappings
    }

    fn numbered_sentences(lengths: &[usize]) -> Vec<Vec<TokenId>> {
        let mut next = 0u32;
        lengths
            .iter()
            .map(|&n| {
                let s: Vec<TokenId> = (next..next + n as u32).collect();
                next += n as u32;
                s
            })
            .collect()
    }

    #[test]
    fn five_word_sentence_window_counts() {
        let sentences = numbered_sentences(&[5]);
        let pairs = build_context_pairs(&sentences, 2);
        let counts: Vec<usize> = pairs.iter().map(|p| p.context_ids.len()).collect();
        assert_eq!(counts, vec![2, 3, 4, 3, 2]);
        assert_eq!(count_mappings(&pairs), 14);
    }

    #[test]
    fn single_token_sentence_yields_nothing() {
        let sentences = numbered_sentences(&[1]);
        assert!(build_context_pairs(&sentences, 2).is_empty());
    }

    #[test]
    fn offsets_are_ordered_and_exclude_target() {
        let sentences = numbered_sentences(&[5]);
        let pairs = build_context_pairs(&sentences, 2);
        let middle = &pairs[2];
        assert_eq!(middle.offsets, vec![-2, -1, 1, 2]);
        assert!(!middle.context_ids.contains(&middle.target_id));
    }

    #[test]
    fn pairs_match_brute_force_on_random_corpora() {
        let mut rng = crate::rng::Rng::new(17);
        for _ in 0..200 {
            let n_sentences = 1 + rng.next_below(50);
            let lengths: Vec<usize> = (0..n_sentences).map(|_| 1 + rng.next_below(9)).collect();
            let sentences = numbered_sentences(&lengths);
            let m = 1 + rng.next_below(3);
            let pairs = build_context_pairs(&sentences, m);
            let mut ours: Vec<(TokenId, TokenId)> = pairs
                .iter()
                .flat_map(|p| p.context_ids.iter().map(|&c| (p.target_id, c)))
                .collect();
            let mut expected = brute_force_mappings(&sentences, m);
            ours.sort_unstable();
            expected.sort_unstable();
            assert_eq!(ours, expected);
        }
    }

    #[test]
    fn split_100_sentences_is_10_9_81() {
        let split = split_corpus(100, 7).unwrap();
        assert_eq!(split.test.len(), 10);
        assert_eq!(split.val.len(), 9);
        assert_eq!(split.train.len(), 81);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        assert_eq!(split_corpus(50, 3).unwrap(), split_corpus(50, 3).unwrap());
        assert_ne!(split_corpus(50, 3).unwrap(), split_corpus(50, 4).unwrap());
    }

    #[test]
    fn split_rejects_tiny_corpora() {
        assert!(matches!(split_corpus(9, 1), Err(Error::TooFewSentences { got: 9, .. })));
    }

    #[test]
    fn batches_chunk_sizes() {
        let sentences = numbered_sentences(&[5]);
        let pairs = build_context_pairs(&sentences, 2);
        let batches = make_batches(&pairs, 5, 1, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.pairs.len()).collect();
        assert_eq!(sizes, vec![5]);

        // 14 single-context pairs -> [5, 5, 4].
        let sentences = numbered_sentences(&[2; 7]);
        let pairs = build_context_pairs(&sentences, 2);
        assert_eq!(pairs.len(), 14);
        let batches = make_batches(&pairs, 5, 1, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.pairs.len()).collect();
        assert_eq!(sizes, vec![5, 5, 4]);
    }

    #[test]
    fn batches_deterministic_per_seed_epoch() {
        let sentences = numbered_sentences(&[4, 6, 3]);
        let pairs = build_context_pairs(&sentences, 2);
        assert_eq!(make_batches(&pairs, 5, 9, 2).unwrap(), make_batches(&pairs, 5, 9, 2).unwrap());
        assert_ne!(make_batches(&pairs, 5, 9, 2).unwrap(), make_batches(&pairs, 5, 9, 3).unwrap());
    }

    #[test]
    fn empty_pairs_is_error() {
        assert!(matches!(make_batches(&[], 5, 1, 0), Err(Error::EmptyPairs)));
    }

    #[test]
    fn pairs_csv_dump_format() {
        let sentences = numbered_sentences(&[3]);
        let pairs = build_context_pairs(&sentences, 1);
        let path = std::env::temp_dir().join(format!("cawe-pairs-{}.csv", std::process::id()));
        dump_pairs_csv(&pairs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "target_id,context_id,offset_j");
        assert_eq!(lines[1], "0,1,1");
        assert_eq!(lines.len(), 1 + count_mappings(&pairs));
        std::fs::remove_file(&path).ok();
    }

    proptest! {
        #[test]
        fn splits_are_disjoint_and_complete(n in 10usize..400, seed in 0u64..1000) {
            let split = split_corpus(n, seed).unwrap();
            prop_assert!(split.contains_all(n));
            prop_assert!(split.train.is_disjoint(&split.val));
            prop_assert!(split.train.is_disjoint(&split.test));
            prop_assert!(split.val.is_disjoint(&split.test));
            // Fractions within one sentence of 10% / 9% / 81%.
            let n_f = n as f64;
            prop_assert!((split.test.len() as f64 - 0.10 * n_f).abs() <= 1.0);
            prop_assert!((split.val.len() as f64 - 0.09 * n_f).abs() <= 1.0);
        }

        #[test]
        fn epoch_shuffle_preserves_multiset(seed in 0u64..500, epoch in 0u32..20) {
            let sentences = numbered_sentences(&[5, 3, 7, 2]);
            let pairs = build_context_pairs(&sentences, 2);
            let batches = make_batches(&pairs, 4, seed, epoch).unwrap();
            let mut flattened: Vec<ContextPair> =
                batches.into_iter().flat_map(|b| b.pairs).collect();
            let mut original = pairs.clone();
            flattened.sort_by_key(|p| p.target_id);
            original.sort_by_key(|p| p.target_id);
            prop_assert_eq!(flattened, original);
        }
    }
}
