//! Crate-wide error type.
//!
//! One enum covers the whole pipeline; variants stay fine-grained so CLI
//! error messages can name the offending field, token, or file. Each variant
//! maps onto one of three process exit classes (config / data / numeric).

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- I/O and container formats ---
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed wav {path}: {detail}")]
    MalformedWav { path: PathBuf, detail: String },
    #[error("unsupported channel count {channels} in {path}: mono required")]
    UnsupportedChannels { path: PathBuf, channels: u16 },
    #[error("unsupported bit depth {bits} in {path}: 16-bit PCM required")]
    UnsupportedBitDepth { path: PathBuf, bits: u16 },
    #[error("unsupported sample format {format} in {path}: integer PCM required")]
    UnsupportedSampleFormat { path: PathBuf, format: String },
    #[error("empty audio in {path}")]
    EmptyAudio { path: PathBuf },

    // --- alignment and corpus assembly ---
    #[error("alignment json: {detail}")]
    AlignmentJson { detail: String },
    #[error("degenerate span at token {index}: end {end_s} <= start {start_s}")]
    DegenerateSpan { index: usize, start_s: f64, end_s: f64 },
    #[error("non-monotone start at token {index}: {start_s} follows {prev_start_s}")]
    NonMonotoneStart { index: usize, start_s: f64, prev_start_s: f64 },
    #[error("span [{start_s}, {end_s}] exceeds clip of {clip_s} s")]
    SpanOutOfRange { start_s: f64, end_s: f64, clip_s: f64 },
    #[error("unmatched corpus files: {detail}")]
    UnmatchedFiles { detail: String },
    #[error("corpus has no sentences")]
    EmptyCorpus,

    // --- dsp ---
    #[error("window length {n} too short: need n >= 2")]
    WindowTooShort { n: usize },
    #[error("transform length {n} is not a power of two")]
    NonPowerOfTwoLength { n: usize },
    #[error("normalization ceiling {ceiling} must be positive")]
    NonPositiveCeiling { ceiling: f64 },

    // --- binary containers (spectrogram cache, checkpoints) ---
    #[error("{path} is not a {magic} file")]
    BadMagic { path: PathBuf, magic: &'static str },
    #[error("truncated {what} file {path}")]
    Truncated { what: &'static str, path: PathBuf },
    #[error("no cached spectrogram for token {token_id}")]
    MissingSpectrogram { token_id: u32 },

    // --- dataset ---
    #[error("context pair list is empty")]
    EmptyPairs,
    #[error("too few sentences to split: have {got}, need at least {need}")]
    TooFewSentences { got: usize, need: usize },

    // --- nn / model / trainer ---
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("dropout rate {rate} out of range [0, 1)")]
    InvalidDropoutRate { rate: f64 },
    #[error("item {index} has no context spectrograms")]
    NoContexts { index: usize },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: &'static str },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    // --- embeddings ---
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("embedding table line {line}: expected {expected} values, found {got}")]
    EmbeddingDimMismatch { line: usize, expected: usize, got: usize },
    #[error("duplicate embedding key {key:?}")]
    DuplicateKey { key: String },
    #[error("expected a {expected}-level embedding table, got {got}-level")]
    WrongTableLevel { expected: &'static str, got: &'static str },
    #[error("embedding table parse error at line {line}: {detail}")]
    EmbeddingParse { line: usize, detail: String },

    // --- eval ---
    #[error("benchmark {path} line {line}: {detail}")]
    BenchmarkParse { path: PathBuf, line: usize, detail: String },
    #[error("benchmark {path} is empty")]
    EmptyBenchmark { path: PathBuf },
    #[error("length mismatch: {xs} vs {ys} values")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("undefined correlation: {side} input is constant")]
    ConstantInput { side: &'static str },
    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,
    #[error("only {covered} of {total} benchmark pairs covered (coverage {coverage:.3}); need at least 2")]
    TooFewCoveredPairs { covered: usize, total: usize, coverage: f64 },

    // --- projection ---
    #[error("component count {k} out of range: need 1 <= k <= {max}")]
    BadComponentCount { k: usize, max: usize },
    #[error("degenerate data: all rows identical")]
    DegenerateData,

    // --- cli / config ---
    #[error("config error: {detail}")]
    Config { detail: String },
    #[error("missing {what}: {path} (run `{hint}` first)")]
    MissingArtifact { what: &'static str, path: PathBuf, hint: &'static str },
    #[error("workspace locked by {path}; another command may be running")]
    LockHeld { path: PathBuf },
}

impl Error {
    /// Process exit code class: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config { .. } => 2,
            NonFiniteGradient { .. }
            | NonFiniteLoss { .. }
            | ConstantInput { .. }
            | ZeroNorm
            | DegenerateData
            | NonPositiveCeiling { .. } => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
