//! Subcommand implementations behind the `cawe` binary: ingest, train,
//! embed, eval, project, inspect. Each stage reads its predecessors'
//! artifacts from disk, so expensive steps are cached and re-runnable, and
//! every stage is deterministic given its inputs.

use std::path::{Path, PathBuf};

use crate::cache::SpectrogramStore;
use crate::checkpoint::Checkpoint;
use crate::config::{PipelineConfig, PlotLevel};
use crate::corpus::{load_corpus_with_gap, Corpus};
use crate::dataset::{build_context_pairs, count_mappings, split_corpus, ContextPair, SplitSpec};
use crate::dsp::{fit_shape, log_normalize, stft_magnitude, DspParams};
use crate::embeddings::{aggregate_types, embed_tokens, export_text, import_text};
use crate::error::{Error, Result};
use crate::eval::{evaluate, load_benchmark, render_report_tsv, EvalReport};
use crate::manifest::Manifest;
use crate::projection::{emit_scatter, pca_fit, pca_transform};
use crate::trainer::train_with_progress;

/// Guards an output directory against concurrent writers. The lock file is
/// removed on drop.
pub struct WorkspaceLock {
    path: PathBuf,
}

impl WorkspaceLock {
    pub fn acquire(dir: &Path) -> Result<WorkspaceLock> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".cawe.lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WorkspaceLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::LockHeld { path })
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        std::fs::remove_file(&self.path).ok();
    }
}

/// Extract, fit, and normalize one spectrogram per token. The log-normalize
/// ceiling is the max raw value over tokens of training-split sentences
/// only, so no statistic leaks from validation or test data.
pub fn build_spectrogram_store(
    corpus: &Corpus,
    dsp: &DspParams,
    train_sentences: &std::collections::BTreeSet<u32>,
) -> Result<(SpectrogramStore, f64)> {
    let mut raw = Vec::new();
    let mut ceiling = 0.0f64;
    for sentence in &corpus.sentences {
        for (span, clip) in sentence {
            let spec = stft_magnitude(clip, dsp.n_fft, dsp.hop)?;
            let fitted = fit_shape(&spec, dsp.freq_bins, dsp.time_frames);
            if train_sentences.contains(&span.sentence_id) {
                ceiling = ceiling.max(fitted.max_value() as f64);
            }
            raw.push(fitted);
        }
    }
    if ceiling <= 0.0 {
        return Err(Error::NonPositiveCeiling { ceiling });
    }
    let mut store = SpectrogramStore::new(dsp.freq_bins, dsp.time_frames);
    for spec in &raw {
        store.push(log_normalize(spec, ceiling)?);
    }
    Ok((store, ceiling))
}

fn require(path: &Path, what: &'static str, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { what, path: path.into(), hint })
    }
}

/// Split context pairs by the sentence of their target token.
fn split_pairs(
    pairs: &[ContextPair],
    manifest: &Manifest,
    split: &SplitSpec,
) -> (Vec<ContextPair>, Vec<ContextPair>) {
    let mut sentence_of = std::collections::HashMap::new();
    for (sentence_idx, sentence) in manifest.sentences.iter().enumerate() {
        for token in sentence {
            sentence_of.insert(token.token_id, sentence_idx as u32);
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for pair in pairs {
        let sid = sentence_of[&pair.target_id];
        if split.train.contains(&sid) {
            train.push(pair.clone());
        } else if split.val.contains(&sid) {
            val.push(pair.clone());
        }
    }
    (train, val)
}

/// Slice audio, extract spectrograms, and write the cache + manifest.
pub fn cmd_ingest(cfg: &PipelineConfig, quiet: bool) -> Result<()> {
    let _lock = WorkspaceLock::acquire(&cfg.paths.output_dir)?;
    let corpus = load_corpus_with_gap(
        &cfg.paths.audio_dir,
        &cfg.paths.alignment_dir,
        cfg.dsp.sample_rate_hz,
        cfg.sentence_gap(),
    )?;
    let stats = corpus.stats();
    let split = split_corpus(stats.sentences, cfg.train.seed)?;
    let pairs = build_context_pairs(&corpus.sentence_token_ids(), cfg.train.window);
    let mappings = count_mappings(&pairs);
    let (store, ceiling) = build_spectrogram_store(&corpus, &cfg.dsp, &split.train)?;
    store.write(&cfg.paths.cache())?;
    let manifest = Manifest::build(
        &corpus,
        cfg.dsp.clone(),
        ceiling,
        cfg.train.window,
        cfg.train.seed,
        split,
        mappings,
    );
    manifest.save(&cfg.paths.manifest())?;
    if let Some(pairs_csv) = &cfg.paths.pairs_csv {
        crate::dataset::dump_pairs_csv(&pairs, pairs_csv)?;
    }
    if !quiet {
        if corpus.sentence_ids_inferred {
            println!(
                "note: alignments carry no sentence indices; boundaries inferred at \
                 inter-word gaps > {:.2} s",
                cfg.sentence_gap()
            );
        }
        println!(
            "ingested {} words in {} sentences ({:.1} s of speech), {} context mappings \
             ({:.2} per word)",
            stats.words,
            stats.sentences,
            stats.seconds,
            mappings,
            mappings as f64 / stats.words as f64,
        );
        println!(
            "cache: {} ({} x {} per token, ceiling {ceiling:.3})",
            cfg.paths.cache().display(),
            cfg.dsp.freq_bins,
            cfg.dsp.time_frames,
        );
    }
    Ok(())
}

/// Train the autoencoder on cached spectrograms; writes the best checkpoint
/// and the per-epoch history log.
pub fn cmd_train(cfg: &PipelineConfig, quiet: bool) -> Result<()> {
    let _lock = WorkspaceLock::acquire(&cfg.paths.output_dir)?;
    require(&cfg.paths.cache(), "spectrogram cache", "cawe ingest --config <config>")?;
    require(&cfg.paths.manifest(), "corpus manifest", "cawe ingest --config <config>")?;
    let manifest = Manifest::load(&cfg.paths.manifest())?;
    let store = SpectrogramStore::read(&cfg.paths.cache())?;
    let pairs = build_context_pairs(&manifest.sentence_token_ids(), manifest.window);
    let (train_pairs, val_pairs) = split_pairs(&pairs, &manifest, &manifest.split);
    if !quiet {
        println!(
            "training on {} pairs, validating on {} (batch {}, lr {}, d {})",
            train_pairs.len(),
            val_pairs.len(),
            cfg.train.batch_size,
            cfg.train.learning_rate,
            cfg.train.embedding_dim,
        );
    }
    let mut progress = |rec: &crate::trainer::EpochRecord| {
        if !quiet {
            println!(
                "epoch {:>3}  train {:.6}  val {:.6}  ({:.1}s)",
                rec.epoch, rec.train_loss, rec.val_loss, rec.seconds
            );
        }
    };
    let (model, state, history) = train_with_progress(
        &train_pairs,
        &val_pairs,
        &store,
        cfg.model.clone(),
        &cfg.train,
        &mut progress,
    )?;
    Checkpoint {
        model,
        adam: Some(state),
        trained_epochs: history.best_epoch as u64,
    }
    .save(&cfg.paths.checkpoint())?;

    let mut log = String::new();
    for rec in &history.epochs {
        log.push_str(&serde_json::to_string(rec).map_err(|e| Error::Config {
            detail: format!("history serialization: {e}"),
        })?);
        log.push('\n');
    }
    std::fs::write(cfg.paths.history(), log).map_err(|e| Error::io(cfg.paths.history(), e))?;
    if !quiet {
        match history.stopped_epoch {
            Some(epoch) => println!(
                "early stop after epoch {epoch}; restored best epoch {}",
                history.best_epoch
            ),
            None => println!("completed all epochs; best epoch {}", history.best_epoch),
        }
        println!("checkpoint: {}", cfg.paths.checkpoint().display());
    }
    Ok(())
}

/// Extract token embeddings with the trained encoder and pool them per word
/// type; writes both text tables.
pub fn cmd_embed(cfg: &PipelineConfig, quiet: bool) -> Result<()> {
    let _lock = WorkspaceLock::acquire(&cfg.paths.output_dir)?;
    require(&cfg.paths.checkpoint(), "model checkpoint", "cawe train --config <config>")?;
    require(&cfg.paths.cache(), "spectrogram cache", "cawe ingest --config <config>")?;
    require(&cfg.paths.manifest(), "corpus manifest", "cawe ingest --config <config>")?;
    let checkpoint = Checkpoint::load(&cfg.paths.checkpoint())?;
    let manifest = Manifest::load(&cfg.paths.manifest())?;
    let store = SpectrogramStore::read(&cfg.paths.cache())?;
    let tokens = embed_tokens(&checkpoint.model, &manifest, &store)?;
    let types = aggregate_types(&tokens)?;
    export_text(&tokens, &cfg.paths.token_embeddings())?;
    export_text(&types, &cfg.paths.type_embeddings())?;
    if !quiet {
        println!(
            "embedded {} tokens into {} type vectors of width {}",
            tokens.entries.len(),
            types.entries.len(),
            types.dim
        );
        println!("tables: {} / {}", cfg.paths.token_embeddings().display(), cfg.paths.type_embeddings().display());
    }
    Ok(())
}

/// Score the type-level table (or an external table) against the configured
/// benchmarks; writes the TSV report.
pub fn cmd_eval(cfg: &PipelineConfig, quiet: bool) -> Result<()> {
    let _lock = WorkspaceLock::acquire(&cfg.paths.output_dir)?;
    let table_path = match &cfg.eval.external_table {
        Some(path) => path.clone(),
        None => cfg.paths.type_embeddings(),
    };
    require(&table_path, "embedding table", "cawe embed --config <config>")?;
    let table = import_text(&table_path)?;
    if cfg.eval.benchmarks.is_empty() {
        return Err(Error::Config { detail: "eval.benchmarks is empty".into() });
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for spec in &cfg.eval.benchmarks {
        let pairs = load_benchmark(&spec.path, &spec.format)?;
        let report = evaluate(&table, &pairs, &spec.name)?;
        if !quiet {
            println!(
                "{}: rho {:.4} over {}/{} pairs (coverage {:.2})",
                report.benchmark, report.rho, report.n_pairs_used, report.total_pairs, report.coverage
            );
        }
        reports.push(report);
    }
    let tsv = render_report_tsv(&reports, cfg.eval.include_reference);
    std::fs::write(cfg.paths.report(), tsv).map_err(|e| Error::io(cfg.paths.report(), e))?;
    if !quiet {
        println!("report: {}", cfg.paths.report().display());
    }
    Ok(())
}

/// Reduce embeddings to 2-D with PCA and emit the labeled scatter files.
pub fn cmd_project(cfg: &PipelineConfig, quiet: bool) -> Result<()> {
    let _lock = WorkspaceLock::acquire(&cfg.paths.output_dir)?;
    let table_path = match cfg.project.level {
        PlotLevel::Type => cfg.paths.type_embeddings(),
        PlotLevel::Token => cfg.paths.token_embeddings(),
    };
    require(&table_path, "embedding table", "cawe embed --config <config>")?;
    let table = import_text(&table_path)?;
    let labels: Vec<String> = table.entries.keys().cloned().collect();
    let rows: Vec<Vec<f64>> = table.entries.values().cloned().collect();
    let model = pca_fit(&rows, 2)?;
    let coords = pca_transform(&model, &rows)?;
    emit_scatter(&coords, &labels, &cfg.paths.scatter_csv(), &cfg.paths.scatter_svg())?;
    if !quiet {
        let share: f64 = model.explained_variance.iter().sum();
        println!(
            "projected {} vectors to 2-D (explained variance {:.3e}); {} / {}",
            labels.len(),
            share,
            cfg.paths.scatter_csv().display(),
            cfg.paths.scatter_svg().display()
        );
    }
    Ok(())
}

/// Print the manifest statistics.
pub fn cmd_inspect(cfg: &PipelineConfig) -> Result<()> {
    require(&cfg.paths.manifest(), "corpus manifest", "cawe ingest --config <config>")?;
    let manifest = Manifest::load(&cfg.paths.manifest())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&manifest.stats)
            .map_err(|e| Error::Config { detail: e.to_string() })?
    );
    println!(
        "vocabulary: {} types; splits: {} train / {} val / {} test sentences",
        manifest.vocabulary().len(),
        manifest.split.train.len(),
        manifest.split.val.len(),
        manifest.split.test.len()
    );
    Ok(())
}

/// Dispatch a subcommand by name.
pub fn run(command: &str, cfg: &PipelineConfig, quiet: bool) -> Result<()> {
    match command {
        "ingest" => cmd_ingest(cfg, quiet),
        "train" => cmd_train(cfg, quiet),
        "embed" => cmd_embed(cfg, quiet),
        "eval" => cmd_eval(cfg, quiet),
        "project" => cmd_project(cfg, quiet),
        "inspect" => cmd_inspect(cfg),
        other => Err(Error::Config { detail: format!("unknown subcommand {other:?}") }),
    }
}
