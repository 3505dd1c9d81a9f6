//! Synthetic tone-language corpora for tests and demos.
//!
//! Words are harmonic tones: each word class has a fundamental frequency
//! (plus two decaying harmonics) and every utterance jitters the pitch
//! slightly, so utterances of one word are similar but never identical.
//! Word classes are partitioned into co-occurrence groups and each sentence
//! draws all its words from a single group, giving the context window a
//! designed semantic structure to recover.

use std::path::Path;

use crate::corpus::{AudioClip, Corpus, WordSpan};
use crate::error::Result;
use crate::rng::Rng;

/// Pronounceable labels for up to twelve word classes.
const WORD_NAMES: [&str; 12] = [
    "bana", "kemo", "rilu", "sato", "veni", "wozu", "pika", "mude", "lofa", "gesi", "haru", "tobi",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub word_classes: usize,
    /// Co-occurrence groups; classes are dealt round-robin into groups.
    pub groups: usize,
    pub sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub sample_rate_hz: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Relative pitch jitter per utterance (0.03 = +/-3%).
    pub pitch_jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            word_classes: 12,
            groups: 4,
            sentences: 200,
            min_words: 3,
            max_words: 6,
            sample_rate_hz: 16_000,
            min_duration_s: 0.18,
            max_duration_s: 0.30,
            pitch_jitter: 0.03,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn word_name(&self, class: usize) -> &'static str {
        WORD_NAMES[class % WORD_NAMES.len()]
    }

    /// Fundamental frequency for a word class. Classes of one co-occurrence
    /// group sit in a tight pitch band; groups are spaced far apart, so the
    /// designed semantics (who appears with whom) agrees with the spectral
    /// neighborhoods the encoder can see.
    pub fn fundamental_hz(&self, class: usize) -> f64 {
        let members = self.word_classes.div_ceil(self.groups);
        let group = class / members;
        let member = class % members;
        400.0 + 450.0 * group as f64 + 40.0 * member as f64
    }

    pub fn group_of(&self, class: usize) -> usize {
        let members = self.word_classes.div_ceil(self.groups);
        class / members
    }

    /// Word classes belonging to one co-occurrence group.
    pub fn group_members(&self, group: usize) -> Vec<usize> {
        (0..self.word_classes).filter(|c| self.group_of(*c) == group).collect()
    }
}

/// One utterance: a three-harmonic tone with a Hann amplitude envelope and
/// per-utterance pitch jitter.
pub fn synth_utterance(cfg: &SynthConfig, class: usize, rng: &mut Rng) -> AudioClip {
    let duration = rng.uniform(cfg.min_duration_s, cfg.max_duration_s);
    let jitter = 1.0 + cfg.pitch_jitter * rng.uniform(-1.0, 1.0);
    let f0 = cfg.fundamental_hz(class) * jitter;
    let rate = cfg.sample_rate_hz as f64;
    let n = (duration * rate).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let env = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos());
            let tone = 0.45 * (2.0 * std::f64::consts::PI * f0 * t).sin()
                + 0.22 * (2.0 * std::f64::consts::PI * 2.0 * f0 * t).sin()
                + 0.11 * (2.0 * std::f64::consts::PI * 3.0 * f0 * t).sin();
            (env * tone) as f32
        })
        .collect();
    AudioClip { samples, sample_rate_hz: cfg.sample_rate_hz }
}

/// Deterministic sentence plan: one co-occurrence group per sentence, words
/// drawn uniformly from that group.
pub fn sentence_plan(cfg: &SynthConfig, rng: &mut Rng) -> Vec<Vec<usize>> {
    (0..cfg.sentences)
        .map(|_| {
            let group = rng.next_below(cfg.groups);
            let members = cfg.group_members(group);
            let len = cfg.min_words + rng.next_below(cfg.max_words - cfg.min_words + 1);
            (0..len).map(|_| members[rng.next_below(members.len())]).collect()
        })
        .collect()
}

/// Build the corpus in memory (each sentence on its own timeline).
pub fn generate_corpus(cfg: &SynthConfig) -> Corpus {
    let mut rng = Rng::derived(cfg.seed, "synth", 0);
    let plan = sentence_plan(cfg, &mut rng);
    let mut sentences = Vec::with_capacity(plan.len());
    let mut vocabulary = std::collections::BTreeSet::new();
    let mut token_id = 0u32;
    for (sentence_id, classes) in plan.iter().enumerate() {
        let mut tokens = Vec::with_capacity(classes.len());
        let mut cursor = 0.0f64;
        for &class in classes {
            let clip = synth_utterance(cfg, class, &mut rng);
            let dur = clip.duration_s();
            let span = WordSpan {
                word_text: cfg.word_name(class).to_string(),
                start_s: cursor,
                end_s: cursor + dur,
                sentence_id: sentence_id as u32,
                token_id,
            };
            vocabulary.insert(cfg.word_name(class).to_string());
            cursor += dur + 0.08;
            token_id += 1;
            tokens.push((span, clip));
        }
        sentences.push(tokens);
    }
    Corpus { sentences, vocabulary, sentence_ids_inferred: false }
}

/// Write the corpus as WAV + alignment JSON files (one file per sentence)
/// so the file-based pipeline can ingest it.
pub fn write_corpus_files(cfg: &SynthConfig, audio_dir: &Path, alignment_dir: &Path) -> Result<()> {
    let mut rng = Rng::derived(cfg.seed, "synth", 0);
    let plan = sentence_plan(cfg, &mut rng);
    std::fs::create_dir_all(audio_dir).map_err(|e| crate::Error::io(audio_dir, e))?;
    std::fs::create_dir_all(alignment_dir).map_err(|e| crate::Error::io(alignment_dir, e))?;
    for (sentence_id, classes) in plan.iter().enumerate() {
        let gap = 0.08f64;
        let rate = cfg.sample_rate_hz;
        let mut samples: Vec<f32> = Vec::new();
        let mut entries = Vec::new();
        let mut cursor = 0.0f64;
        for &class in classes {
            let clip = synth_utterance(cfg, class, &mut rng);
            let start = cursor;
            let end = cursor + clip.duration_s();
            entries.push(serde_json::json!({
                "word": cfg.word_name(class),
                "start": start,
                "end": end,
            }));
            samples.extend_from_slice(&clip.samples);
            samples.extend(std::iter::repeat_n(0.0f32, (gap * rate as f64) as usize));
            cursor = end + gap;
        }
        let stem = format!("s{sentence_id:04}");
        crate::corpus::write_wav(
            &audio_dir.join(format!("{stem}.wav")),
            &AudioClip { samples, sample_rate_hz: rate },
        )?;
        let json = serde_json::to_string_pretty(&entries)
            .map_err(|e| crate::Error::Config { detail: e.to_string() })?;
        std::fs::write(alignment_dir.join(format!("{stem}.json")), json)
            .map_err(|e| crate::Error::io(alignment_dir, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape_matches_config() {
        let cfg = SynthConfig { sentences: 20, seed: 5, ..SynthConfig::default() };
        let corpus = generate_corpus(&cfg);
        let stats = corpus.stats();
        assert_eq!(stats.sentences, 20);
        assert!(stats.words >= 20 * cfg.min_words && stats.words <= 20 * cfg.max_words);
        // Token ids are dense and unique.
        let ids: Vec<u32> = corpus.tokens().map(|(s, _)| s.token_id).collect();
        assert_eq!(ids, (0..stats.words as u32).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig { sentences: 5, ..SynthConfig::default() };
        let a = generate_corpus(&cfg);
        let b = generate_corpus(&cfg);
        for (sa, sb) in a.sentences.iter().zip(&b.sentences) {
            for ((spa, ca), (spb, cb)) in sa.iter().zip(sb) {
                assert_eq!(spa, spb);
                assert_eq!(ca.samples, cb.samples);
            }
        }
    }

    #[test]
    fn sentences_stay_within_one_group() {
        let cfg = SynthConfig { sentences: 50, ..SynthConfig::default() };
        let mut rng = Rng::derived(cfg.seed, "synth", 0);
        for sentence in sentence_plan(&cfg, &mut rng) {
            let group = cfg.group_of(sentence[0]);
            assert!(sentence.iter().all(|&c| cfg.group_of(c) == group));
        }
    }

    #[test]
    fn utterance_tone_lands_in_the_expected_bin() {
        let cfg = SynthConfig::default();
        let mut rng = Rng::new(9);
        let clip = synth_utterance(&cfg, 4, &mut rng);
        let spec = crate::dsp::stft_magnitude(&clip, 256, 128).unwrap();
        // Fundamental 875 Hz (+/- 3%) at 16 kHz / 256 bins: bin 14.
        let mid_frame = spec.l2 / 2;
        let argmax = (0..spec.l1)
            .max_by(|&a, &b| spec.at(a, mid_frame).partial_cmp(&spec.at(b, mid_frame)).unwrap())
            .unwrap();
        assert!((13..=15).contains(&argmax), "argmax {argmax}");
    }

    #[test]
    fn written_files_load_back_as_a_corpus() {
        let root = std::env::temp_dir().join(format!("cawe-synth-{}", std::process::id()));
        let audio = root.join("audio");
        let align = root.join("align");
        let cfg = SynthConfig { sentences: 3, seed: 11, ..SynthConfig::default() };
        write_corpus_files(&cfg, &audio, &align).unwrap();
        let corpus = crate::corpus::load_corpus(&audio, &align, cfg.sample_rate_hz).unwrap();
        let direct = generate_corpus(&cfg);
        assert_eq!(corpus.stats().sentences, 3);
        assert_eq!(corpus.stats().words, direct.stats().words);
        assert_eq!(corpus.vocabulary, direct.vocabulary);
        std::fs::remove_dir_all(&root).ok();
    }
}
