//! Corpus assembly: read audio and word-alignment JSON, slice recordings
//! into per-word utterance clips grouped into sentences.
//!
//! Alignment files are JSON arrays of `{"word", "start", "end"}` objects
//! (seconds), optionally carrying a `"sentence"` index. When the sentence
//! field is absent, sentence boundaries are inferred from inter-word gaps.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inter-word gap (seconds) that starts a new sentence when the alignment
/// carries no sentence indices.
pub const DEFAULT_SENTENCE_GAP_S: f64 = 0.5;

/// Mono waveform for one utterance (or one full recording).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Samples in [-1, 1].
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// One aligned word: where it sits in the recording and in the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpan {
    pub word_text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub sentence_id: u32,
    pub token_id: u32,
}

/// Word-aligned corpus: sentences of (span, clip) tokens plus the
/// normalized vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sentences: Vec<Vec<(WordSpan, AudioClip)>>,
    pub vocabulary: BTreeSet<String>,
    /// True when any alignment file lacked explicit sentence indices and
    /// boundaries came from the inter-word gap heuristic instead.
    pub sentence_ids_inferred: bool,
}

/// Aggregate corpus statistics (word/sentence counts, total speech seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub words: usize,
    pub sentences: usize,
    pub seconds: f64,
}

impl Corpus {
    pub fn stats(&self) -> CorpusStats {
        let words = self.sentences.iter().map(Vec::len).sum();
        let seconds = self
            .sentences
            .iter()
            .flatten()
            .map(|(span, _)| span.end_s - span.start_s)
            .sum();
        CorpusStats { words, sentences: self.sentences.len(), seconds }
    }

    /// Token ids per sentence, in order.
    pub fn sentence_token_ids(&self) -> Vec<Vec<u32>> {
        self.sentences
            .iter()
            .map(|s| s.iter().map(|(span, _)| span.token_id).collect())
            .collect()
    }

    /// All (token_id, clip) pairs in token_id order.
    pub fn tokens(&self) -> impl Iterator<Item = &(WordSpan, AudioClip)> {
        self.sentences.iter().flatten()
    }
}

/// Lowercase and strip leading/trailing punctuation, so "Big," and "big"
/// share a vocabulary entry and match benchmark word lists.
pub fn normalize_word(raw: &str) -> String {
    raw.to_lowercase()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// Read a mono 16-bit PCM WAV file. Integer samples map to v/32768.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::MalformedWav { path: path.into(), detail: other.to_string() },
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannels { path: path.into(), channels: spec.channels });
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedBitDepth { path: path.into(), bits: spec.bits_per_sample });
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedSampleFormat {
            path: path.into(),
            format: format!("{:?}", spec.sample_format),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f32 / 32768.0).map_err(|e| Error::MalformedWav {
                path: path.into(),
                detail: e.to_string(),
            })
        })
        .collect::<Result<Vec<f32>>>()?;
    if samples.is_empty() {
        return Err(Error::EmptyAudio { path: path.into() });
    }
    Ok(AudioClip { samples, sample_rate_hz: spec.sample_rate })
}

/// Resample by linear interpolation onto the target grid. Output length is
/// round(len * target/source); positions past the last sample hold the edge
/// value. Equal rates return the clip unchanged.
pub fn resample_linear(clip: &AudioClip, target_hz: u32) -> AudioClip {
    assert!(target_hz > 0, "target rate must be positive");
    if target_hz == clip.sample_rate_hz {
        return clip.clone();
    }
    let src = &clip.samples;
    let ratio = clip.sample_rate_hz as f64 / target_hz as f64;
    let out_len = (src.len() as f64 * target_hz as f64 / clip.sample_rate_hz as f64).round() as usize;
    let out_len = out_len.max(1);
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * ratio;
        let base = pos.floor() as usize;
        if base + 1 >= src.len() {
            out.push(src[src.len() - 1]);
        } else {
            let frac = (pos - base as f64) as f32;
            out.push(src[base] + (src[base + 1] - src[base]) * frac);
        }
    }
    AudioClip { samples: out, sample_rate_hz: target_hz }
}

#[derive(Debug, Deserialize)]
struct RawAlignmentEntry {
    word: String,
    start: f64,
    end: f64,
    #[serde(default)]
    sentence: Option<u32>,
}

/// Parse word-alignment JSON into spans with sentence ids.
///
/// Sentence ids come from the file's `sentence` field when present; otherwise
/// a new sentence starts wherever the gap to the previous word exceeds
/// `gap_s`. Starts must be monotone non-decreasing.
pub fn parse_alignment_with_gap(json_text: &str, gap_s: f64) -> Result<Vec<WordSpan>> {
    Ok(parse_alignment_inner(json_text, gap_s)?.0)
}

fn parse_alignment_inner(json_text: &str, gap_s: f64) -> Result<(Vec<WordSpan>, bool)> {
    let raw: Vec<RawAlignmentEntry> = serde_json::from_str(json_text)
        .map_err(|e| Error::AlignmentJson { detail: e.to_string() })?;
    let mut spans = Vec::with_capacity(raw.len());
    let mut sentence_id: u32 = 0;
    let mut prev_start: Option<f64> = None;
    let mut prev_end: Option<f64> = None;
    let has_sentence_field = raw.iter().any(|e| e.sentence.is_some());
    for (index, entry) in raw.into_iter().enumerate() {
        if entry.end <= entry.start {
            return Err(Error::DegenerateSpan { index, start_s: entry.start, end_s: entry.end });
        }
        if let Some(prev) = prev_start {
            if entry.start < prev {
                return Err(Error::NonMonotoneStart {
                    index,
                    start_s: entry.start,
                    prev_start_s: prev,
                });
            }
        }
        let sid = match entry.sentence {
            Some(s) if has_sentence_field => s,
            _ => {
                if let Some(prev_end) = prev_end {
                    if entry.start - prev_end > gap_s {
                        sentence_id += 1;
                    }
                }
                sentence_id
            }
        };
        prev_start = Some(entry.start);
        prev_end = Some(entry.end);
        spans.push(WordSpan {
            word_text: entry.word,
            start_s: entry.start,
            end_s: entry.end,
            sentence_id: sid,
            token_id: index as u32,
        });
    }
    Ok((spans, !has_sentence_field))
}

pub fn parse_alignment(json_text: &str) -> Result<Vec<WordSpan>> {
    parse_alignment_with_gap(json_text, DEFAULT_SENTENCE_GAP_S)
}

/// Cut one word out of a full recording: samples floor(start*rate) up to
/// floor(end*rate), exclusive.
pub fn slice_word(full: &AudioClip, span: &WordSpan) -> Result<AudioClip> {
    let rate = full.sample_rate_hz as f64;
    let lo = (span.start_s * rate).floor() as usize;
    let hi = (span.end_s * rate).floor() as usize;
    if hi > full.samples.len() || lo >= hi {
        return Err(Error::SpanOutOfRange {
            start_s: span.start_s,
            end_s: span.end_s,
            clip_s: full.duration_s(),
        });
    }
    Ok(AudioClip {
        samples: full.samples[lo..hi].to_vec(),
        sample_rate_hz: full.sample_rate_hz,
    })
}

/// Load a whole corpus: every `<stem>.wav` in `audio_dir` paired with
/// `<stem>.json` in `alignment_dir`, processed in lexicographic stem order,
/// all clips resampled to `target_hz`.
pub fn load_corpus(audio_dir: &Path, alignment_dir: &Path, target_hz: u32) -> Result<Corpus> {
    load_corpus_with_gap(audio_dir, alignment_dir, target_hz, DEFAULT_SENTENCE_GAP_S)
}

pub fn load_corpus_with_gap(
    audio_dir: &Path,
    alignment_dir: &Path,
    target_hz: u32,
    gap_s: f64,
) -> Result<Corpus> {
    let audio_stems = list_stems(audio_dir, "wav")?;
    let alignment_stems = list_stems(alignment_dir, "json")?;
    let missing_alignments: Vec<&String> =
        audio_stems.iter().filter(|s| !alignment_stems.contains(*s)).collect();
    let missing_audio: Vec<&String> =
        alignment_stems.iter().filter(|s| !audio_stems.contains(*s)).collect();
    if !missing_alignments.is_empty() || !missing_audio.is_empty() {
        let mut detail = String::new();
        if !missing_alignments.is_empty() {
            detail.push_str(&format!("audio without alignment: {missing_alignments:?}"));
        }
        if !missing_audio.is_empty() {
            if !detail.is_empty() {
                detail.push_str("; ");
            }
            detail.push_str(&format!("alignment without audio: {missing_audio:?}"));
        }
        return Err(Error::UnmatchedFiles { detail });
    }

    let mut sentences: Vec<Vec<(WordSpan, AudioClip)>> = Vec::new();
    let mut vocabulary = BTreeSet::new();
    let mut next_token: u32 = 0;
    let mut next_sentence: u32 = 0;
    let mut sentence_ids_inferred = false;
    for stem in &audio_stems {
        let wav_path = audio_dir.join(format!("{stem}.wav"));
        let json_path = alignment_dir.join(format!("{stem}.json"));
        let full = resample_linear(&read_wav(&wav_path)?, target_hz);
        let json_text = std::fs::read_to_string(&json_path)
            .map_err(|e| Error::io(&json_path, e))?;
        let (spans, inferred) = parse_alignment_inner(&json_text, gap_s)?;
        sentence_ids_inferred |= inferred;

        // Sentence ids are file-local; remap them to corpus-global ids while
        // keeping tokens grouped in file order.
        let mut current_local: Option<u32> = None;
        for mut span in spans {
            if current_local != Some(span.sentence_id) {
                current_local = Some(span.sentence_id);
                sentences.push(Vec::new());
                next_sentence += 1;
            }
            span.sentence_id = next_sentence - 1;
            span.token_id = next_token;
            next_token += 1;
            let clip = slice_word(&full, &span)?;
            let normalized = normalize_word(&span.word_text);
            if !normalized.is_empty() {
                vocabulary.insert(normalized);
            }
            sentences.last_mut().unwrap().push((span, clip));
        }
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus { sentences, vocabulary, sentence_ids_inferred })
}

fn list_stems(dir: &Path, ext: &str) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string());
            }
        }
    }
    Ok(stems)
}

/// Write a clip as mono 16-bit PCM; inverse of the read_wav scaling.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::MalformedWav { path: path.into(), detail: e.to_string() })?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::MalformedWav { path: path.into(), detail: e.to_string() })?;
    }
    writer
        .finalize()
        .map_err(|e| Error::MalformedWav { path: path.into(), detail: e.to_string() })?;
    Ok(())
}
