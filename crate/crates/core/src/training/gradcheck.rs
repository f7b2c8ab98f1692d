//! Finite-difference checks of the hand-written backward passes.
//!
//! Runs in `f64` on a small reference model so central differences resolve
//! the analytic gradients to well below the reported tolerances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::LossWeights;
use super::trainer::{discriminator_grad, forward_batch, generator_grad, TrainSample};
use crate::datagen::Grid;
use crate::model::{init_weights, ArchitectureConfig, ModelWeights, Params};

const STEP: f64 = 1e-4;

/// Latent size 4, 8x8 grid, horizon 2, random positive biases, and two
/// samples with random target frames.
pub fn reference_model() -> (ModelWeights<f64>, Vec<TrainSample<f64>>) {
    let mut arch = ArchitectureConfig::new(Grid::unit_square(8).unwrap(), 2);
    arch.latent_dim = 4;
    arch.encoder_layers = vec![5];
    arch.dynamics_layers = vec![6];
    arch.decoder_seed_channels = 4;
    arch.decoder_channels = [4, 4, 3];
    arch.disc_channels = [2, 3, 2];
    let mut w = init_weights::<f64>(&arch, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    // Zero biases put zero-input ReLUs exactly on the kink, where central
    // differences are meaningless; small positive ones move them off it and
    // keep most units active.
    w.visit_params(&mut |name, v| {
        if name.ends_with(".bias") {
            v.iter_mut().for_each(|b| *b = rng.random_range(0.02..0.2));
        }
    });
    let samples = [0.2, 0.9]
        .iter()
        .map(|&s| TrainSample {
            scaled_re: s,
            frames: (0..2 * 64).map(|_| rng.random_range(-0.9..0.9)).collect(),
        })
        .collect();
    (w, samples)
}

fn set(w: &mut ModelWeights<f64>, index: usize, value: f64) {
    let mut k = 0;
    w.visit_params(&mut |_, v| {
        if index >= k && index < k + v.len() {
            v[index - k] = value;
        }
        k += v.len();
    });
}

/// Loss and flat gradient over all generator then discriminator weights.
fn gen_loss(w: &ModelWeights<f64>, batch: &[&TrainSample<f64>], lw: &LossWeights) -> (f64, Vec<f64>) {
    let traces = forward_batch(&w.generator, &w.arch, batch).unwrap();
    let (losses, mut g) = generator_grad(&w.generator, &w.discriminator, &w.arch, batch, &traces, lw);
    let mut flat = g.flatten();
    flat.extend(std::iter::repeat_n(0.0, w.discriminator.clone().param_count()));
    (losses.total, flat)
}

fn disc_loss(
    w: &ModelWeights<f64>,
    fixed_g: &ModelWeights<f64>,
    batch: &[&TrainSample<f64>],
    gamma: f64,
) -> (f64, Vec<f64>) {
    let traces = forward_batch(&fixed_g.generator, &w.arch, batch).unwrap();
    let (loss, mut d) = discriminator_grad(&w.discriminator, &w.arch, batch, &traces, gamma);
    let mut flat = vec![0.0; w.generator.clone().param_count()];
    flat.extend(d.flatten());
    (loss, flat)
}

/// Worst relative error of the generator-loss gradient over `n` sampled
/// generator weights (plus `n` uniform picks). Panics if fewer than `n / 2`
/// weights carry a gradient.
pub fn generator_gradient_error(
    w: &ModelWeights<f64>,
    samples: &[TrainSample<f64>],
    lw: &LossWeights,
    n: usize,
    seed: u64,
) -> f64 {
    let batch: Vec<&TrainSample<f64>> = samples.iter().collect();
    let n_gen = w.generator.clone().param_count();
    check(w, 0..n_gen, n, seed, |m| gen_loss(m, &batch, lw))
}

/// Same for the discriminator loss, with the generator fixed at `w`.
pub fn discriminator_gradient_error(
    w: &ModelWeights<f64>,
    samples: &[TrainSample<f64>],
    gamma: f64,
    n: usize,
    seed: u64,
) -> f64 {
    let batch: Vec<&TrainSample<f64>> = samples.iter().collect();
    let n_gen = w.generator.clone().param_count();
    let n_all = w.clone().param_count();
    check(w, n_gen..n_all, n, seed, |m| disc_loss(m, w, &batch, gamma))
}

/// Compares analytic and central-difference gradients on `n` weights drawn
/// from those in `range` with a non-negligible analytic gradient, plus `n`
/// drawn uniformly from the whole range (catching spurious zeros); returns
/// the worst relative error among pairs where either side exceeds 1e-6.
fn check(
    w: &ModelWeights<f64>,
    range: std::ops::Range<usize>,
    n: usize,
    seed: u64,
    f: impl Fn(&ModelWeights<f64>) -> (f64, Vec<f64>),
) -> f64 {
    let (_, grad) = f(w);
    let flat = w.clone().flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible: Vec<usize> = range.clone().filter(|&i| grad[i].abs() > 1e-6).collect();
    assert!(eligible.len() >= n / 2, "only {} weights have a gradient", eligible.len());
    let mut picks: Vec<usize> = (0..n)
        .map(|_| eligible[rng.random_range(0..eligible.len())])
        .collect();
    picks.extend((0..n).map(|_| rng.random_range(range.clone())));
    let mut worst: f64 = 0.0;
    for i in picks {
        let mut plus = w.clone();
        set(&mut plus, i, flat[i] + STEP);
        let mut minus = w.clone();
        set(&mut minus, i, flat[i] - STEP);
        let numeric = (f(&plus).0 - f(&minus).0) / (2.0 * STEP);
        let analytic = grad[i];
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-6 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}
