//! Deterministic training under a pacing schedule.
//!
//! One continuous warmup/decay learning-rate schedule spans the whole run.
//! Its length is the number of updates the pacing schedule plans, so a
//! curriculum run warms up over 10% of its own (shorter) step count.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::metrics::{entity_prf, MetricsError};
use crate::model::{init_model, loss_and_grads, predict_all, ModelError, ModelSpec, ModelState, Params};
use crate::rng::{stream_rng, Stream};
use crate::schedule::{sample_subset, PacingSchedule, ScheduleError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("total_steps must be >= 2, got {0}")]
    DegenerateSteps(usize),
    #[error("step {step} outside 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(&'static str),
    #[error("parameter and gradient shapes differ")]
    ShapeMismatch,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("model expects {model} labels, corpus schema has {corpus}")]
    LabelCount { model: usize, corpus: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    /// Standard fine-tuning hyperparameters.
    fn default() -> Self {
        TrainConfig {
            peak_lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            epsilon: 1e-8,
            clip_norm: 1.0,
            warmup_fraction: 0.10,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    /// Defaults with a learning rate suited to the toy models, which start
    /// from random weights rather than a pretrained checkpoint.
    pub fn desk_scale() -> Self {
        TrainConfig {
            peak_lr: 2e-2,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return fail("warmup_fraction must be in (0, 1)");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return fail("betas must be in (0, 1)");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.peak_lr >= 0.0) || !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) {
            return fail("peak_lr, epsilon and weight_decay must be non-negative (epsilon positive)");
        }
        Ok(())
    }
}

/// Linear warmup over `round(warmup_fraction × total)` steps, then linear
/// decay to zero at `total`.
pub fn lr_at_step(step: usize, total_steps: usize, config: &TrainConfig) -> Result<f64, TrainError> {
    if total_steps < 2 {
        return Err(TrainError::DegenerateSteps(total_steps));
    }
    if step > total_steps {
        return Err(TrainError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    let warmup = (config.warmup_fraction * total_steps as f64).round() as usize;
    Ok(if step < warmup {
        config.peak_lr * (step as f64 / warmup as f64)
    } else {
        config.peak_lr * ((total_steps - step) as f64 / (total_steps - warmup) as f64)
    })
}

/// Rescales `grads` in place so the global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Params, clip_norm: f64) -> Result<f64, TrainError> {
    for (name, t) in grads.tensors() {
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient(name));
        }
    }
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    Ok(norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moments: Params,
    pub second_moments: Params,
}

impl OptimizerState {
    pub fn new(params: &Params) -> Self {
        OptimizerState {
            step: 0,
            first_moments: params.zeros_like(),
            second_moments: params.zeros_like(),
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay.
pub fn optimizer_step(
    params: &mut Params,
    grads: &Params,
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if !params.same_shapes(grads) || !params.same_shapes(&state.first_moments) || !params.same_shapes(&state.second_moments) {
        return Err(TrainError::ShapeMismatch);
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let correct1 = 1.0 - b1.powi(t);
    let correct2 = 1.0 - b2.powi(t);
    let grads = grads.tensors();
    let firsts = state.first_moments.tensors_mut();
    let seconds = state.second_moments.tensors_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(grads).zip(firsts).zip(seconds) {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
            let m_hat = m.data[i] / correct1;
            let v_hat = v.data[i] / correct2;
            let pi = p.data[i];
            p.data[i] = pi - lr * (m_hat / (v_hat.sqrt() + config.epsilon) + config.weight_decay * pi);
        }
    }
    Ok(())
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Outcome of one (condition, architecture, dataset, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub condition: String,
    pub arch: String,
    pub dataset: String,
    pub seed: u64,
    pub final_loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wall_time_s: f64,
    pub gradient_updates: usize,
    pub effective_epochs: f64,
    pub realized_exposure: f64,
    /// Set when a non-finite loss aborted the run.
    #[serde(default, skip_serializing_if = "is_false")]
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RunResult {
    pub fn key(&self) -> RunKey {
        RunKey {
            condition: self.condition.clone(),
            arch: self.arch.clone(),
            dataset: self.dataset.clone(),
            seed: self.seed,
        }
    }

    /// Copy with wall time zeroed, for comparisons that must ignore timing.
    pub fn without_timing(&self) -> RunResult {
        RunResult {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub condition: String,
    pub arch: String,
    pub dataset: String,
    pub seed: u64,
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}/seed={}", self.dataset, self.arch, self.condition, self.seed)
    }
}

/// A finished run plus the trained model and per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub result: RunResult,
    pub epoch_losses: Vec<f64>,
    pub model: ModelState,
}

pub fn train(
    spec: &ModelSpec,
    corpus: &Corpus,
    schedule: &PacingSchedule,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    schedule.validate()?;
    if spec.num_labels != corpus.schema.num_labels() {
        return Err(TrainError::LabelCount {
            model: spec.num_labels,
            corpus: corpus.schema.num_labels(),
        });
    }
    let started = Instant::now();
    let n = corpus.train.len();
    let batch_size = config.batch_size;
    let total_steps = schedule.planned_updates(n, batch_size);
    // Fail before any work if the LR schedule is undefined.
    lr_at_step(0, total_steps, config)?;

    let mut model = init_model(spec, seed)?;
    let mut opt = OptimizerState::new(&model.params);
    let mut step = 0usize;
    let mut exposure = 0.0;
    let mut epoch_losses = Vec::with_capacity(schedule.total_epochs);
    let mut divergence: Option<String> = None;

    'epochs: for epoch in 1..=schedule.total_epochs {
        let plan = sample_subset(n, schedule.ratio(epoch)?, seed, epoch)?;
        exposure += plan.subset_size as f64 / n as f64;
        let mut order = plan.indices;
        order.shuffle(&mut stream_rng(seed, epoch as u64, Stream::Shuffle));

        let mut loss_tokens = 0.0;
        let mut token_count = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| &corpus.train[i]).collect();
            let (loss, mut grads) = match loss_and_grads(&model, &batch) {
                Ok(v) => v,
                Err(ModelError::NonFiniteLoss(l)) => {
                    divergence = Some(format!("non-finite loss {l} at epoch {epoch}, step {step}"));
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            if let Err(TrainError::NonFiniteGradient(name)) = clip_gradients(&mut grads, config.clip_norm) {
                divergence = Some(format!("non-finite gradient in {name} at epoch {epoch}, step {step}"));
                break 'epochs;
            }
            let lr = lr_at_step(step, total_steps, config)?;
            optimizer_step(&mut model.params, &grads, &mut opt, lr, config)?;
            step += 1;
            let tokens: usize = batch.iter().map(|s| s.len()).sum();
            loss_tokens += loss * tokens as f64;
            token_count += tokens;
        }
        epoch_losses.push(loss_tokens / token_count.max(1) as f64);
    }

    let base = RunResult {
        condition: schedule.name.clone(),
        arch: spec.arch.to_string(),
        dataset: corpus.name.clone(),
        seed,
        final_loss: epoch_losses.last().copied().unwrap_or(0.0),
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        wall_time_s: 0.0,
        gradient_updates: step,
        effective_epochs: schedule.effective_epochs(),
        realized_exposure: exposure,
        diverged: false,
        diagnostic: None,
    };
    let result = if let Some(msg) = divergence {
        RunResult {
            diverged: true,
            diagnostic: Some(msg),
            wall_time_s: started.elapsed().as_secs_f64(),
            ..base
        }
    } else {
        let preds = predict_all(&model, &corpus.test)?;
        let pred_tags: Vec<Vec<String>> = preds.iter().map(|p| corpus.schema.tags(p)).collect();
        let gold_tags: Vec<Vec<String>> = corpus.test.iter().map(|s| corpus.schema.tags(&s.labels)).collect();
        let prf = entity_prf(&gold_tags, &pred_tags)?;
        RunResult {
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            wall_time_s: started.elapsed().as_secs_f64(),
            ..base
        }
    };
    Ok(TrainOutcome {
        result,
        epoch_losses,
        model,
    })
}
