//! Alternating discriminator/generator optimization with early stopping.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::losses::{clamped, discriminator_loss, generator_adv_loss, generator_total_loss, LossWeights};
use crate::datagen::{Dataset, Units};
use crate::error::{Error, Result};
use crate::model::{
    discriminator_backward, discriminator_forward, generator_backward, generator_forward, init_weights,
    ArchitectureConfig, DiscriminatorWeights, GeneratorTrace, GeneratorWeights, ModelWeights, Params,
};
use crate::numeric::{cst, Real};

/// A run is judged to have improved when the best loss drops by this
/// relative amount.
pub const IMPROVEMENT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub horizon_train: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            max_epochs: 15_000,
            patience_epochs: 200,
            horizon_train: 25,
            seed: 0,
            loss_weights: LossWeights::STREAMWISE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr = {} must be > 0", self.lr));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be > 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.patience_epochs == 0 {
            return bad("patience_epochs must be >= 1".into());
        }
        if self.horizon_train == 0 {
            return bad("horizon_train must be >= 1".into());
        }
        self.loss_weights.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Patience => "patience",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    pub reason: Option<StopReason>,
}

/// One row of `history.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_pred: f64,
    pub loss_adv_g: f64,
    pub loss_g_total: f64,
    pub loss_adv_d: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    /// Epochs completed.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub best_loss_pred: f64,
    /// Epoch (1-based) of the best loss, 0 before the first epoch.
    pub best_epoch: usize,
    pub stop_reason: Option<StopReason>,
    pub gen_opt: Adam<f32>,
    pub disc_opt: Adam<f32>,
}

pub struct TrainOutcome {
    /// Weights at the end of the epoch with the lowest prediction loss.
    pub best: ModelWeights<f32>,
    pub last: ModelWeights<f32>,
    pub state: TrainState,
}

/// Index (1-based epoch) of the running best under the relative
/// improvement rule, and its value.
fn running_best(history: &[f64]) -> (usize, f64) {
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    for (i, &loss) in history.iter().enumerate() {
        if improves(loss, best) {
            best = loss;
            best_epoch = i + 1;
        }
    }
    (best_epoch, best)
}

fn improves(loss: f64, best: f64) -> bool {
    if best.is_infinite() {
        return loss.is_finite();
    }
    loss < best - IMPROVEMENT_RTOL * best.abs()
}

/// Stop once `max_epochs` are done or the running best of `history`
/// (prediction loss per completed epoch) has not improved for
/// `patience_epochs` consecutive epochs.
pub fn early_stop(history: &[f64], epoch: usize, cfg: &TrainConfig) -> StopDecision {
    if epoch >= cfg.max_epochs {
        return StopDecision {
            stop: true,
            reason: Some(StopReason::MaxEpochs),
        };
    }
    let (best_epoch, _) = running_best(&history[..epoch.min(history.len())]);
    if epoch >= best_epoch + cfg.patience_epochs {
        return StopDecision {
            stop: true,
            reason: Some(StopReason::Patience),
        };
    }
    StopDecision {
        stop: false,
        reason: None,
    }
}

/// One training pair: scaled Reynolds number and the first `T` frames.
#[derive(Debug, Clone)]
pub struct TrainSample<R> {
    pub scaled_re: R,
    pub frames: Vec<R>,
}

/// Converts the first `horizon` frames of every sample.
pub fn prepare_samples<R: Real>(ds: &Dataset, w: &ModelWeights<R>, horizon: usize) -> Vec<TrainSample<R>> {
    ds.samples
        .iter()
        .map(|s| TrainSample {
            scaled_re: cst(w.scale_re(s.params.re)),
            frames: s.frames[..horizon * s.frame_len()]
                .iter()
                .map(|&v| cst(v as f64))
                .collect(),
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Sums per-sample gradients in sample order so the reduction is fixed.
fn reduce<R: Real, P: Params<R>>(mut parts: Vec<P>) -> P {
    let mut acc = parts.remove(0);
    for mut p in parts {
        let flat = p.flatten();
        let mut k = 0;
        acc.visit_params(&mut |_, v| {
            for x in v.iter_mut() {
                *x += flat[k];
                k += 1;
            }
        });
    }
    acc
}

pub fn forward_batch<R: Real>(
    g: &GeneratorWeights<R>,
    arch: &ArchitectureConfig,
    batch: &[&TrainSample<R>],
) -> Result<Vec<GeneratorTrace<R>>> {
    par_map(batch, |s| generator_forward(g, arch, s.scaled_re, arch.horizon_train))
        .into_iter()
        .collect()
}

/// Discriminator loss on real vs. (detached) generated sequences and its
/// gradient w.r.t. the discriminator weights.
pub fn discriminator_grad<R: Real>(
    d: &DiscriminatorWeights<R>,
    arch: &ArchitectureConfig,
    batch: &[&TrainSample<R>],
    traces: &[GeneratorTrace<R>],
    gamma: f64,
) -> (f64, DiscriminatorWeights<R>) {
    let n = batch.len() as f64;
    let pairs: Vec<(&TrainSample<R>, &GeneratorTrace<R>)> = batch.iter().copied().zip(traces).collect();
    let parts = par_map(&pairs, |(s, tr)| {
        let mut grad = d.zeros_like();
        let real = discriminator_forward(d, arch, &s.frames, s.scaled_re);
        let fake = discriminator_forward(d, arch, &tr.output, s.scaled_re);
        let d_real = if clamped(real.prob) { 0.0 } else { -gamma / n * (1.0 - real.prob) };
        let d_fake = if clamped(fake.prob) { 0.0 } else { gamma / n * fake.prob };
        discriminator_backward(d, arch, &real, cst(d_real), Some(&mut grad), false);
        discriminator_backward(d, arch, &fake, cst(d_fake), Some(&mut grad), false);
        (grad, real.prob, fake.prob)
    });
    let d_real: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let d_fake: Vec<f64> = parts.iter().map(|p| p.2).collect();
    let loss = discriminator_loss(&d_real, &d_fake, gamma);
    (loss, reduce(parts.into_iter().map(|p| p.0).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLosses {
    pub pred: f64,
    pub adv: f64,
    pub total: f64,
}

/// Combined generator loss and its gradient w.r.t. the generator weights,
/// with the adversarial term evaluated through `d`.
pub fn generator_grad<R: Real>(
    g: &GeneratorWeights<R>,
    d: &DiscriminatorWeights<R>,
    arch: &ArchitectureConfig,
    batch: &[&TrainSample<R>],
    traces: &[GeneratorTrace<R>],
    lw: &LossWeights,
) -> (GeneratorLosses, GeneratorWeights<R>) {
    let n = batch.len() as f64;
    let count = n * (arch.horizon_train * arch.frame_len()) as f64;
    let pred_scale: R = cst(2.0 * lw.beta1 / count);
    let pairs: Vec<(&TrainSample<R>, &GeneratorTrace<R>)> = batch.iter().copied().zip(traces).collect();
    let parts = par_map(&pairs, |(s, tr)| {
        let mut sse = 0.0;
        let mut d_out: Vec<R> = tr
            .output
            .iter()
            .zip(&s.frames)
            .map(|(&y, &x)| {
                let diff = y - x;
                sse += diff.as_f64() * diff.as_f64();
                pred_scale * diff
            })
            .collect();
        let fake = discriminator_forward(d, arch, &tr.output, s.scaled_re);
        let d_logit = if clamped(fake.prob) { 0.0 } else { -lw.beta2 / n * (1.0 - fake.prob) };
        let dx = discriminator_backward(d, arch, &fake, cst(d_logit), None, true).expect("input gradient requested");
        for (a, b) in d_out.iter_mut().zip(&dx) {
            *a += *b;
        }
        let mut grad = g.zeros_like();
        generator_backward(g, arch, tr, &d_out, &mut grad);
        (grad, sse, fake.prob)
    });
    let pred = parts.iter().map(|p| p.1).sum::<f64>() / count;
    let probs: Vec<f64> = parts.iter().map(|p| p.2).collect();
    let adv = generator_adv_loss(&probs);
    let losses = GeneratorLosses {
        pred,
        adv,
        total: generator_total_loss(pred, adv, lw),
    };
    (losses, reduce(parts.into_iter().map(|p| p.0).collect()))
}

fn check_inputs(ds: &Dataset, cfg: &TrainConfig, arch: &ArchitectureConfig) -> Result<()> {
    cfg.validate()?;
    arch.validate()?;
    if cfg.horizon_train != arch.horizon_train {
        return Err(Error::InvalidConfig(format!(
            "training horizon {} differs from the architecture horizon {}",
            cfg.horizon_train, arch.horizon_train
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidConfig("dataset has no samples".into()));
    }
    if ds.normalization.is_none() || ds.samples.iter().any(|s| s.units != Units::Normalized) {
        return Err(Error::InvalidConfig("training needs a normalized dataset".into()));
    }
    if ds.n_steps < cfg.horizon_train {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} steps, fewer than the training horizon {}",
            ds.n_steps, cfg.horizon_train
        )));
    }
    if (ds.grid.ny, ds.grid.nx) != (arch.ny(), arch.nx()) {
        return Err(Error::InvalidConfig(format!(
            "dataset grid {}x{} differs from the architecture grid {}x{}",
            ds.grid.ny,
            ds.grid.nx,
            arch.ny(),
            arch.nx()
        )));
    }
    Ok(())
}

fn initial_weights(ds: &Dataset, cfg: &TrainConfig, arch: &ArchitectureConfig) -> Result<ModelWeights<f32>> {
    let mut w = init_weights::<f32>(arch, cfg.seed)?;
    w.normalization = ds.normalization.expect("checked by check_inputs");
    w.re_range = ds.re_range;
    // enough of the dataset metadata to write predictions in the same layout
    let p = &mut w.provenance;
    p.insert("dt".into(), ds.dt.to_string());
    p.insert("field".into(), ds.field.as_str().into());
    Ok(w)
}

/// Deterministic minibatch order for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
    idx.shuffle(&mut rng);
    idx
}

fn blowup(epoch: usize, what: &str, value: f64) -> Error {
    Error::NumericalBlowup {
        stage: "epoch",
        index: epoch,
        detail: format!("{what} = {value}"),
    }
}

pub fn train(ds: &Dataset, cfg: &TrainConfig, arch: &ArchitectureConfig) -> Result<TrainOutcome> {
    train_with(ds, cfg, arch, &mut |_| {})
}

/// As [`train`], calling `observer` after every epoch.
pub fn train_with(
    ds: &Dataset,
    cfg: &TrainConfig,
    arch: &ArchitectureConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    check_inputs(ds, cfg, arch)?;
    let mut w = initial_weights(ds, cfg, arch)?;
    let samples = prepare_samples(ds, &w, cfg.horizon_train);
    let lw = cfg.loss_weights;
    let adam = |n| Adam::new(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, n);
    let mut state = TrainState {
        epoch: 0,
        history: Vec::new(),
        best_loss_pred: f64::INFINITY,
        best_epoch: 0,
        stop_reason: None,
        gen_opt: adam(w.generator.param_count()),
        disc_opt: adam(w.discriminator.param_count()),
    };
    let mut best = w.clone();
    let mut pred_history = Vec::new();

    loop {
        let epoch = state.epoch + 1;
        let order = epoch_order(samples.len(), cfg.seed, epoch);
        let mut totals = [0.0f64; 4];
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainSample<f32>> = chunk.iter().map(|&i| &samples[i]).collect();
            let traces = forward_batch(&w.generator, arch, &batch)?;

            let (loss_d, mut grad_d) = discriminator_grad(&w.discriminator, arch, &batch, &traces, lw.gamma);
            state.disc_opt.update(&mut w.discriminator, &mut grad_d);

            let (losses, mut grad_g) = generator_grad(&w.generator, &w.discriminator, arch, &batch, &traces, &lw);
            state.gen_opt.update(&mut w.generator, &mut grad_g);

            for (what, v) in [("loss_pred", losses.pred), ("loss_adv_g", losses.adv), ("loss_adv_d", loss_d)] {
                if !v.is_finite() {
                    return Err(blowup(epoch, what, v));
                }
            }
            let b = batch.len() as f64;
            totals[0] += b * losses.pred;
            totals[1] += b * losses.adv;
            totals[2] += b * losses.total;
            totals[3] += b * loss_d;
        }
        let n = samples.len() as f64;
        let record = EpochRecord {
            epoch,
            loss_pred: totals[0] / n,
            loss_adv_g: totals[1] / n,
            loss_g_total: totals[2] / n,
            loss_adv_d: totals[3] / n,
        };
        if !record.loss_g_total.is_finite() {
            return Err(blowup(epoch, "loss_g_total", record.loss_g_total));
        }
        state.epoch = epoch;
        state.history.push(record);
        pred_history.push(record.loss_pred);
        if improves(record.loss_pred, state.best_loss_pred) {
            state.best_loss_pred = record.loss_pred;
            state.best_epoch = epoch;
            best.generator.clone_from(&w.generator);
            best.discriminator.clone_from(&w.discriminator);
        }
        observer(&record);
        let decision = early_stop(&pred_history, epoch, cfg);
        if decision.stop {
            state.stop_reason = decision.reason;
            break;
        }
    }

    for m in [&mut best, &mut w] {
        let p = &mut m.provenance;
        p.insert("seed".into(), cfg.seed.to_string());
        p.insert("epochs_run".into(), state.epoch.to_string());
        p.insert("best_epoch".into(), state.best_epoch.to_string());
        p.insert("best_loss_pred".into(), format!("{:e}", state.best_loss_pred));
        if let Some(r) = state.stop_reason {
            p.insert("stop_reason".into(), r.to_string());
        }
    }
    best.provenance.insert("checkpoint".into(), "best".into());
    w.provenance.insert("checkpoint".into(), "last".into());
    Ok(TrainOutcome { best, last: w, state })
}

/// Plain MSE trainer with the adversarial path removed entirely. Used as
/// the reference for ablation runs; returns the final weights and the
/// per-epoch prediction loss.
pub fn train_supervised(
    ds: &Dataset,
    cfg: &TrainConfig,
    arch: &ArchitectureConfig,
    epochs: usize,
) -> Result<(ModelWeights<f32>, Vec<f64>)> {
    check_inputs(ds, cfg, arch)?;
    let mut w = initial_weights(ds, cfg, arch)?;
    let samples = prepare_samples(ds, &w, cfg.horizon_train);
    let mut opt = Adam::new(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, w.generator.param_count());
    let scale = 2.0 * cfg.loss_weights.beta1;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let mut sum = 0.0;
        for chunk in epoch_order(samples.len(), cfg.seed, epoch).chunks(cfg.batch_size) {
            let count = (chunk.len() * arch.horizon_train * arch.frame_len()) as f64;
            let mut parts = Vec::with_capacity(chunk.len());
            let mut sse = 0.0;
            for &i in chunk {
                let s = &samples[i];
                let tr = generator_forward(&w.generator, arch, s.scaled_re, arch.horizon_train)?;
                let d_out: Vec<f32> = tr
                    .output
                    .iter()
                    .zip(&s.frames)
                    .map(|(&y, &x)| {
                        sse += ((y - x) as f64).powi(2);
                        cst::<f32>(scale / count) * (y - x)
                    })
                    .collect();
                let mut grad = w.generator.zeros_like();
                generator_backward(&w.generator, arch, &tr, &d_out, &mut grad);
                parts.push(grad);
            }
            let mut grad = reduce(parts);
            opt.update(&mut w.generator, &mut grad);
            sum += sse / (arch.horizon_train * arch.frame_len()) as f64;
        }
        history.push(sum / samples.len() as f64);
    }
    Ok((w, history))
}
