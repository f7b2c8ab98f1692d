use serde::{Deserialize, Serialize};

use crate::datagen::FlowSequence;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

/// Weights of the prediction, generator-adversarial and discriminator losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub const STREAMWISE: LossWeights = LossWeights::new(100.0, 10.0, 10.0);
    pub const TRANSVERSE: LossWeights = LossWeights::new(100.0, 10.0, 10.0);
    /// Transverse velocity during the start-up transient.
    pub const TRANSVERSE_TRANSIENT: LossWeights = LossWeights::new(100.0, 1.0, 10.0);
    pub const CAVITY: LossWeights = LossWeights::new(100.0, 1.0, 10.0);

    pub const fn new(beta1: f64, beta2: f64, gamma: f64) -> Self {
        LossWeights { beta1, beta2, gamma }
    }

    /// Named presets: `streamwise`, `transverse`, `transverse-transient`, `cavity`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "streamwise" => Some(Self::STREAMWISE),
            "transverse" => Some(Self::TRANSVERSE),
            "transverse-transient" | "transverse_transient" => Some(Self::TRANSVERSE_TRANSIENT),
            "cavity" => Some(Self::CAVITY),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.beta1, self.beta2, self.gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and >= 0, got {self:?}"
            )));
        }
        if self.beta1 <= 0.0 {
            return Err(Error::InvalidConfig(
                "beta1 must be > 0 (pure adversarial training is unsupported)".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::STREAMWISE
    }
}

fn clamp(d: f64) -> f64 {
    d.clamp(CLAMP, 1.0 - CLAMP)
}

/// True when the clamp is active, i.e. the loss is locally flat in `d`.
pub(crate) fn clamped(d: f64) -> bool {
    !(d > CLAMP && d < 1.0 - CLAMP)
}

/// Mean squared error of two equally long slices.
pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    s / a.len().max(1) as f64
}

/// Mean squared error over every sample, frame and grid point.
pub fn prediction_loss(generated: &[FlowSequence], truth: &[FlowSequence]) -> Result<f64> {
    if generated.len() != truth.len() || generated.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} generated vs {} truth sequences",
            generated.len(),
            truth.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (g, t) in generated.iter().zip(truth) {
        if !g.same_shape(t) {
            return Err(Error::ShapeMismatch(format!(
                "generated [{}, {}, {}] vs truth [{}, {}, {}]",
                g.n_steps(),
                g.ny,
                g.nx,
                t.n_steps(),
                t.ny,
                t.nx
            )));
        }
        sum += mse(&g.frames, &t.frames) * g.frames.len() as f64;
        count += g.frames.len();
    }
    Ok(sum / count as f64)
}

/// `-(1/n) sum log d`.
pub fn generator_adv_loss(d_fake: &[f64]) -> f64 {
    -d_fake.iter().map(|&d| clamp(d).ln()).sum::<f64>() / d_fake.len().max(1) as f64
}

pub fn generator_total_loss(pred: f64, adv: f64, lw: &LossWeights) -> f64 {
    lw.beta1 * pred + lw.beta2 * adv
}

/// `-(gamma/n) sum [log d_real + log(1 - d_fake)]`.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64], gamma: f64) -> f64 {
    let n = d_real.len().max(1) as f64;
    let s: f64 = d_real
        .iter()
        .zip(d_fake)
        .map(|(&r, &f)| clamp(r).ln() + (1.0 - clamp(f)).ln())
        .sum();
    if gamma == 0.0 {
        0.0
    } else {
        -gamma * s / n
    }
}
