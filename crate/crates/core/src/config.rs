//! Pipeline configuration: one JSON file drives every subcommand. Every
//! field has a default, so an empty object `{}` reproduces the reference
//! training setup exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::DspParams;
use crate::error::{Error, Result};
use crate::eval::BenchmarkFormat;
use crate::model::ModelShape;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub audio_dir: PathBuf,
    pub alignment_dir: PathBuf,
    /// Every derived artifact lands here unless overridden below.
    pub output_dir: PathBuf,
    pub cache: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub token_embeddings: Option<PathBuf>,
    pub type_embeddings: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub scatter_csv: Option<PathBuf>,
    pub scatter_svg: Option<PathBuf>,
    /// When set, ingest also dumps the context-pair list as CSV.
    pub pairs_csv: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            audio_dir: "audio".into(),
            alignment_dir: "alignments".into(),
            output_dir: "out".into(),
            cache: None,
            manifest: None,
            checkpoint: None,
            history: None,
            token_embeddings: None,
            type_embeddings: None,
            report: None,
            scatter_csv: None,
            scatter_svg: None,
            pairs_csv: None,
        }
    }
}

impl Paths {
    fn derived(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.output_dir.join(name))
    }

    pub fn cache(&self) -> PathBuf {
        self.derived(&self.cache, "spectrograms.caes")
    }
    pub fn manifest(&self) -> PathBuf {
        self.derived(&self.manifest, "manifest.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.derived(&self.checkpoint, "model.caem")
    }
    pub fn history(&self) -> PathBuf {
        self.derived(&self.history, "history.jsonl")
    }
    pub fn token_embeddings(&self) -> PathBuf {
        self.derived(&self.token_embeddings, "embeddings_token.txt")
    }
    pub fn type_embeddings(&self) -> PathBuf {
        self.derived(&self.type_embeddings, "embeddings_type.txt")
    }
    pub fn report(&self) -> PathBuf {
        self.derived(&self.report, "eval_report.tsv")
    }
    pub fn scatter_csv(&self) -> PathBuf {
        self.derived(&self.scatter_csv, "scatter.csv")
    }
    pub fn scatter_svg(&self) -> PathBuf {
        self.derived(&self.scatter_svg, "scatter.svg")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub format: BenchmarkFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub benchmarks: Vec<BenchmarkSpec>,
    /// Append the published reference rows to the report.
    pub include_reference: bool,
    /// Evaluate an external text embedding table instead of the trained one
    /// (the side-by-side comparison role).
    pub external_table: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { benchmarks: Vec::new(), include_reference: true, external_table: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotLevel {
    Type,
    Token,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub level: PlotLevel,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig { level: PlotLevel::Type }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub dsp: DspParams,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub project: ProjectConfig,
    /// Top-level seed; when present it overrides `train.seed`.
    pub seed: Option<u64>,
    /// Inter-word gap (seconds) that opens a new sentence when alignments
    /// carry no sentence field.
    pub sentence_gap_s: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
            detail: format!("{}: {e}", path.display()),
        })?;
        if let Some(seed) = cfg.seed {
            cfg.train.seed = seed;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Apply a command-line seed override.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.train.seed = seed;
    }

    pub fn sentence_gap(&self) -> f64 {
        self.sentence_gap_s.unwrap_or(crate::corpus::DEFAULT_SENTENCE_GAP_S)
    }
}
