//! Contextualized acoustic word embeddings.
//!
//! This crate turns word-aligned speech recordings into fixed-dimensional
//! vector representations of spoken words. The pipeline:
//!
//! 1. [`corpus`] — slice full recordings into per-word utterance clips using
//!    word-alignment JSON.
//! 2. [`dsp`] — convert each utterance into a fixed-shape, normalized
//!    magnitude spectrogram.
//! 3. [`dataset`] — build target/context training pairs with a sliding
//!    window over each sentence.
//! 4. [`nn`] / [`model`] — a small convolutional autoencoder, trained so the
//!    reconstruction of a target word's spectrogram matches the spectrograms
//!    of its context words.
//! 5. [`trainer`] — Adam optimization with early stopping and checkpoints.
//! 6. [`embeddings`] / [`eval`] / [`projection`] — extract per-word vectors,
//!    score them against word-similarity benchmarks (Spearman's rho over
//!    cosine similarities), and project them to 2-D for plotting.
//!
//! Everything is deterministic for a fixed seed: reruns produce
//! byte-identical caches, checkpoints, embedding tables, and reports.
//!
//! The `cawe` binary wires the stages into `ingest`, `train`, `embed`,
//! `eval`, `project`, and `inspect` subcommands driven by a JSON config.

#![allow(clippy::needless_range_loop)]

pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod dsp;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod projection;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
