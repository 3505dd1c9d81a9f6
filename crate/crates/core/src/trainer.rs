//! Training: Adam optimization over shuffled mini-batches, per-epoch
//! validation with dropout disabled, early stopping with best-weight
//! restoration, and resumable state.
//!
//! After every optimizer step the parameters and Adam moments are snapped to
//! the nearest-f32 grid. That is what makes checkpoints (stored as f32)
//! lossless and a resumed run bit-identical to an uninterrupted one.

use serde::{Deserialize, Serialize};

use crate::cache::SpectrogramStore;
use crate::dataset::{make_batches, Batch, ContextPair};
use crate::error::{Error, Result};
use crate::model::{batch_to_tensor, context_loss, spectrogram_to_tensor, CaeModel, ModelShape};
use crate::nn::{DropoutMode, Tensor};
use crate::rng::Rng;

/// Ties count as non-improvement: a validation loss must beat the best by
/// more than this to reset patience.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

/// Training hyperparameters. Defaults are the reference setup: 50 epochs,
/// batches of 5, Adam at 0.01, window 2, patience 5, dropout 0.7, d = 16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Context window size m.
    pub window: usize,
    pub patience: usize,
    pub dropout_rate: f64,
    pub embedding_dim: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative per-epoch learning-rate factor; 1.0 keeps the initial
    /// rate constant.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 5,
            learning_rate: 0.01,
            window: 2,
            patience: 5,
            dropout_rate: 0.7,
            embedding_dim: 16,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.batch_size == 0
            || self.window == 0
            || self.patience == 0
            || self.embedding_dim == 0
            || self.learning_rate <= 0.0
        {
            return Err(Error::Config { detail: "training parameters must be positive".into() });
        }
        if self.patience > self.epochs {
            return Err(Error::Config {
                detail: format!("patience {} exceeds epochs {}", self.patience, self.epochs),
            });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidDropoutRate { rate: self.dropout_rate });
        }
        Ok(())
    }
}

/// Adam first/second moments, aligned with the model's slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Completed optimizer steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &CaeModel) -> AdamState {
        let zeros: Vec<Tensor> =
            model.slots().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One Adam update on a single tensor; `t` is the already-incremented step
/// index used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    let pd = param.data_mut();
    let md = m.data_mut();
    let vd = v.data_mut();
    for i in 0..pd.len() {
        let g = grad.data()[i];
        md[i] = beta1 * md[i] + (1.0 - beta1) * g;
        vd[i] = beta2 * vd[i] + (1.0 - beta2) * g * g;
        let m_hat = md[i] / bc1;
        let v_hat = vd[i] / bc2;
        pd[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// One Adam step over every model parameter. Rejects non-finite gradients,
/// naming the offending layer.
pub fn adam_step(
    model: &mut CaeModel,
    grads: &crate::model::ModelGrads,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads.slots() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { layer: name });
        }
    }
    state.t += 1;
    let t = state.t;
    for (i, ((_, param), (_, grad))) in
        model.slots_mut().into_iter().zip(grads.slots()).enumerate()
    {
        adam_update(param, grad, &mut state.m[i], &mut state.v[i], t, lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    }
    Ok(())
}

/// Snap parameters and optimizer moments to the f32 grid (the checkpoint
/// representation).
pub fn quantize_to_f32(model: &mut CaeModel, state: &mut AdamState) {
    for (_, t) in model.slots_mut() {
        t.round_to_f32();
    }
    for t in state.m.iter_mut().chain(state.v.iter_mut()) {
        t.round_to_f32();
    }
}

/// Early-stopping bookkeeping; see `observe`.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Feed one validation loss. `Stop` fires after `patience` consecutive
    /// non-improvements.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best - IMPROVEMENT_TOLERANCE {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Wall-clock seconds for the epoch. Excluded from reproducibility
    /// comparisons, like any timestamp.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Set when early stopping fired before the epoch budget ran out.
    pub stopped_epoch: Option<usize>,
}

/// Gather one batch's tensors from the cache.
pub fn materialize_batch(
    batch: &Batch,
    store: &SpectrogramStore,
) -> Result<(Tensor, Vec<Vec<Tensor>>)> {
    let mut targets = Vec::with_capacity(batch.pairs.len());
    let mut contexts = Vec::with_capacity(batch.pairs.len());
    for pair in &batch.pairs {
        targets.push(store.get(pair.target_id)?);
        let ctx: Result<Vec<Tensor>> = pair
            .context_ids
            .iter()
            .map(|&id| Ok(spectrogram_to_tensor(store.get(id)?)))
            .collect();
        contexts.push(ctx?);
    }
    Ok((batch_to_tensor(&targets), contexts))
}

/// Mean context loss over `pairs` in eval mode (dropout off), batched in
/// pair order so the reduction order is stable.
pub fn evaluate_loss(
    model: &CaeModel,
    pairs: &[ContextPair],
    store: &SpectrogramStore,
    batch_size: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in pairs.chunks(batch_size) {
        let batch = Batch { pairs: chunk.to_vec() };
        let (x, contexts) = materialize_batch(&batch, store)?;
        let cache = model.forward(&x, DropoutMode::Eval)?;
        let report = context_loss(&cache.recon, &contexts)?;
        sum += report.total * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(sum / count as f64)
}

/// Train from scratch: seeded init, epoch loop, early stopping, and
/// restoration of the best-validation weights.
pub fn train(
    train_pairs: &[ContextPair],
    val_pairs: &[ContextPair],
    store: &SpectrogramStore,
    shape: ModelShape,
    cfg: &TrainConfig,
) -> Result<(CaeModel, TrainHistory)> {
    cfg.validate()?;
    let model_cfg = crate::model::ModelConfig {
        input_h: store.l1,
        input_w: store.l2,
        embedding_dim: cfg.embedding_dim,
        dropout_rate: cfg.dropout_rate,
        shape,
    };
    let mut model = CaeModel::init(model_cfg, cfg.seed)?;
    let mut state = AdamState::new(&model);
    quantize_to_f32(&mut model, &mut state);
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, stopped_epoch: None };
    run_epochs(&mut model, &mut state, 1, train_pairs, val_pairs, store, cfg, &mut history, None)?;
    Ok((model, history))
}

/// Continue training from a checkpointed model/optimizer; epochs resume at
/// `start_epoch` so shuffles and dropout masks replay exactly as an
/// uninterrupted run would have drawn them.
#[allow(clippy::too_many_arguments)]
pub fn resume(
    model: &mut CaeModel,
    state: &mut AdamState,
    start_epoch: usize,
    train_pairs: &[ContextPair],
    val_pairs: &[ContextPair],
    store: &SpectrogramStore,
    cfg: &TrainConfig,
    history: &mut TrainHistory,
) -> Result<()> {
    cfg.validate()?;
    run_epochs(model, state, start_epoch, train_pairs, val_pairs, store, cfg, history, None)
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    model: &mut CaeModel,
    state: &mut AdamState,
    start_epoch: usize,
    train_pairs: &[ContextPair],
    val_pairs: &[ContextPair],
    store: &SpectrogramStore,
    cfg: &TrainConfig,
    history: &mut TrainHistory,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<()> {
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut stopper = EarlyStopper::new(cfg.patience);
    // Replay past epochs into the stopper so resuming keeps its state.
    for rec in history.epochs.iter() {
        stopper.observe(rec.epoch, rec.val_loss);
    }
    // The incoming weights are the initial restore point; any improving
    // epoch replaces them.
    let mut best: Option<(CaeModel, AdamState)> = Some((model.clone(), state.clone()));

    for epoch in start_epoch..=cfg.epochs {
        let started = std::time::Instant::now();
        let lr = cfg.learning_rate * cfg.lr_decay.powi((epoch - 1) as i32);
        let batches = make_batches(train_pairs, cfg.batch_size, cfg.seed, epoch as u32)?;
        let mut loss_sum = 0.0;
        let mut item_count = 0usize;
        for (batch_index, batch) in batches.iter().enumerate() {
            let (x, contexts) = materialize_batch(batch, store)?;
            let mut dropout_rng =
                Rng::derived(cfg.seed, "dropout", ((epoch as u64) << 32) | batch_index as u64);
            let (report, grads) =
                model.loss_and_grads(&x, &contexts, DropoutMode::Train(&mut dropout_rng))?;
            if !report.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_index });
            }
            adam_step(model, &grads, state, lr, cfg)?;
            quantize_to_f32(model, state);
            loss_sum += report.total * batch.pairs.len() as f64;
            item_count += batch.pairs.len();
        }
        let train_loss = loss_sum / item_count as f64;
        let val_loss = evaluate_loss(model, val_pairs, store, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let record =
            EpochRecord { epoch, train_loss, val_loss, seconds: started.elapsed().as_secs_f64() };
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&record);
        }
        history.epochs.push(record);

        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => {
                best = Some((model.clone(), state.clone()));
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_epoch = Some(epoch);
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch;
    if let Some((best_model, best_state)) = best {
        *model = best_model;
        *state = best_state;
    }
    Ok(())
}

/// Like `train` but streaming per-epoch records to a callback (the CLI uses
/// this for progress lines).
pub fn train_with_progress(
    train_pairs: &[ContextPair],
    val_pairs: &[ContextPair],
    store: &SpectrogramStore,
    shape: ModelShape,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(CaeModel, AdamState, TrainHistory)> {
    cfg.validate()?;
    let model_cfg = crate::model::ModelConfig {
        input_h: store.l1,
        input_w: store.l2,
        embedding_dim: cfg.embedding_dim,
        dropout_rate: cfg.dropout_rate,
        shape,
    };
    let mut model = CaeModel::init(model_cfg, cfg.seed)?;
    let mut state = AdamState::new(&model);
    quantize_to_f32(&mut model, &mut state);
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, stopped_epoch: None };
    run_epochs(
        &mut model,
        &mut state,
        1,
        train_pairs,
        val_pairs,
        store,
        cfg,
        &mut history,
        Some(on_epoch),
    )?;
    Ok((model, state, history))
}
