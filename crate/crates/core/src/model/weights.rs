use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ArchitectureConfig;
use super::layers::{Conv3x3, Dense};
use crate::datagen::NormStats;
use crate::error::Result;
use crate::numeric::{cst, Real};

/// Parameter encoder, dynamics block and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorWeights<R> {
    /// Hidden layers followed by the map to the latent space.
    pub encoder: Vec<Dense<R>>,
    /// Hidden layers followed by the linear latent-to-latent output.
    pub dynamics: Vec<Dense<R>>,
    /// Latent vector to the coarse decoder seed.
    pub seed: Dense<R>,
    /// Three upsample stages followed by the single-channel output conv.
    pub convs: Vec<Conv3x3<R>>,
}

/// Conditional discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorWeights<R> {
    /// Three stride-2 convolutions over the frames stacked as channels.
    pub convs: Vec<Conv3x3<R>>,
    /// Flattened feature map to the field vector.
    pub field: Dense<R>,
    /// Parameter branch: hidden layers, then a linear map to the latent size.
    pub param: Vec<Dense<R>>,
    /// Flattened frames to the scalar bypass score.
    pub bypass: Dense<R>,
}

/// Full model state persisted in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<R = f32> {
    pub arch: ArchitectureConfig,
    pub normalization: NormStats,
    pub re_range: (f64, f64),
    /// Free-form training metadata (seed, epochs, stop reason, ...).
    pub provenance: BTreeMap<String, String>,
    pub generator: GeneratorWeights<R>,
    pub discriminator: DiscriminatorWeights<R>,
}

/// Mutable visitor over `(name, values)` of every parameter tensor.
macro_rules! visit_dense {
    ($f:ident, $name:expr, $layer:expr) => {
        $f(format!("{}.weight", $name), &mut $layer.weight);
        $f(format!("{}.bias", $name), &mut $layer.bias);
    };
}

fn dense_stack<R: Real>(
    inputs: usize,
    hidden: &[usize],
    outputs: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Dense<R>> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut fan_in = inputs;
    for &w in hidden.iter().chain(std::iter::once(&outputs)) {
        layers.push(Dense::xavier(fan_in, w, rng));
        fan_in = w;
    }
    layers
}

impl<R: Real> GeneratorWeights<R> {
    pub fn init(arch: &ArchitectureConfig, rng: &mut ChaCha8Rng) -> Self {
        let (h0, w0) = arch.coarse_shape();
        let l = arch.latent_dim;
        let encoder = dense_stack(arch.param_dim, &arch.encoder_layers, l, rng);
        let dynamics = dense_stack(l, &arch.dynamics_layers, l, rng);
        let seed = Dense::xavier(l, arch.decoder_seed_channels * h0 * w0, rng);
        let mut convs = Vec::with_capacity(4);
        let mut cin = arch.decoder_seed_channels;
        for &c in &arch.decoder_channels {
            convs.push(Conv3x3::xavier(cin, c, 1, rng));
            cin = c;
        }
        convs.push(Conv3x3::xavier(cin, 1, 1, rng));
        GeneratorWeights {
            encoder,
            dynamics,
            seed,
            convs,
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(String, &mut Vec<R>)) {
        for (i, l) in self.encoder.iter_mut().enumerate() {
            visit_dense!(f, format!("generator.encoder.{i}"), l);
        }
        for (i, l) in self.dynamics.iter_mut().enumerate() {
            visit_dense!(f, format!("generator.dynamics.{i}"), l);
        }
        visit_dense!(f, "generator.decoder.seed", self.seed);
        for (i, l) in self.convs.iter_mut().enumerate() {
            visit_dense!(f, format!("generator.decoder.conv{i}"), l);
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, v| v.iter_mut().for_each(|x| *x = R::zero()));
        z
    }
}

impl<R: Real> DiscriminatorWeights<R> {
    pub fn init(arch: &ArchitectureConfig, rng: &mut ChaCha8Rng) -> Self {
        let (h3, w3) = arch.coarse_shape();
        let mut convs = Vec::with_capacity(3);
        let mut cin = arch.horizon_train;
        for &c in &arch.disc_channels {
            convs.push(Conv3x3::xavier(cin, c, 2, rng));
            cin = c;
        }
        let field = Dense::xavier(cin * h3 * w3, arch.latent_dim, rng);
        let param = dense_stack(arch.param_dim, &arch.encoder_layers, arch.latent_dim, rng);
        let bypass = Dense::xavier(arch.horizon_train * arch.frame_len(), 1, rng);
        DiscriminatorWeights {
            convs,
            field,
            param,
            bypass,
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(String, &mut Vec<R>)) {
        for (i, l) in self.convs.iter_mut().enumerate() {
            visit_dense!(f, format!("discriminator.conv{i}"), l);
        }
        visit_dense!(f, "discriminator.field", self.field);
        for (i, l) in self.param.iter_mut().enumerate() {
            visit_dense!(f, format!("discriminator.param.{i}"), l);
        }
        visit_dense!(f, "discriminator.bypass", self.bypass);
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, v| v.iter_mut().for_each(|x| *x = R::zero()));
        z
    }
}

/// Tensor list traversal shared by the optimizer, checkpoints and tests.
pub trait Params<R: Real> {
    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Vec<R>));

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, v| n += v.len());
        n
    }

    /// Copies every parameter into one flat vector in declaration order.
    fn flatten(&mut self) -> Vec<R> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, v| out.extend_from_slice(v));
        out
    }
}

impl<R: Real> Params<R> for GeneratorWeights<R> {
    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Vec<R>)) {
        self.visit_mut(f)
    }
}

impl<R: Real> Params<R> for DiscriminatorWeights<R> {
    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Vec<R>)) {
        self.visit_mut(f)
    }
}

impl<R: Real> Params<R> for ModelWeights<R> {
    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Vec<R>)) {
        self.generator.visit_mut(&mut *f);
        self.discriminator.visit_mut(&mut *f);
    }
}

/// Xavier-uniform initialization, biases zero, deterministic in `seed`.
///
/// Scaling metadata starts as the identity normalization and a unit
/// Reynolds range; training overwrites both from the dataset.
pub fn init_weights<R: Real>(arch: &ArchitectureConfig, seed: u64) -> Result<ModelWeights<R>> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = GeneratorWeights::init(arch, &mut rng);
    let discriminator = DiscriminatorWeights::init(arch, &mut rng);
    Ok(ModelWeights {
        arch: arch.clone(),
        normalization: NormStats::from_range(-1.0, 1.0),
        re_range: (0.0, 1.0),
        provenance: BTreeMap::new(),
        generator,
        discriminator,
    })
}

impl<R: Real> ModelWeights<R> {
    /// Affine map of Re onto `[0, 1]` over the stored training range.
    pub fn scale_re(&self, re: f64) -> f64 {
        let (lo, hi) = self.re_range;
        if hi > lo {
            (re - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    /// True when `re` lies outside the training range.
    pub fn is_extrapolation(&self, re: f64) -> bool {
        let (lo, hi) = self.re_range;
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        re < lo - tol || re > hi + tol
    }

    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.visit_params(&mut |_, v| v.iter_mut().for_each(|x| *x = R::zero()));
        z
    }

    /// Converts every tensor to another float type.
    pub fn cast<S: Real>(&self) -> ModelWeights<S> {
        fn dense<R: Real, S: Real>(d: &Dense<R>) -> Dense<S> {
            Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weight: d.weight.iter().map(|&x| cst(x.as_f64())).collect(),
                bias: d.bias.iter().map(|&x| cst(x.as_f64())).collect(),
            }
        }
        fn conv<R: Real, S: Real>(c: &Conv3x3<R>) -> Conv3x3<S> {
            Conv3x3 {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                stride: c.stride,
                weight: c.weight.iter().map(|&x| cst(x.as_f64())).collect(),
                bias: c.bias.iter().map(|&x| cst(x.as_f64())).collect(),
            }
        }
        let g = &self.generator;
        let d = &self.discriminator;
        ModelWeights {
            arch: self.arch.clone(),
            normalization: self.normalization,
            re_range: self.re_range,
            provenance: self.provenance.clone(),
            generator: GeneratorWeights {
                encoder: g.encoder.iter().map(dense).collect(),
                dynamics: g.dynamics.iter().map(dense).collect(),
                seed: dense(&g.seed),
                convs: g.convs.iter().map(conv).collect(),
            },
            discriminator: DiscriminatorWeights {
                convs: d.convs.iter().map(conv).collect(),
                field: dense(&d.field),
                param: d.param.iter().map(dense).collect(),
                bypass: dense(&d.bypass),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Grid;

    fn arch() -> ArchitectureConfig {
        ArchitectureConfig::new(Grid::unit_square(16).unwrap(), 4)
    }

    /// Every tensor with its fan-in, for bound checks.
    fn fan_ins(w: &ModelWeights<f32>) -> Vec<(usize, &[f32])> {
        let g = &w.generator;
        let d = &w.discriminator;
        let mut out: Vec<(usize, &[f32])> = Vec::new();
        for l in g.encoder.iter().chain(&g.dynamics).chain([&g.seed]) {
            out.push((l.fan_in(), &l.weight));
        }
        for l in d.param.iter().chain([&d.field, &d.bypass]) {
            out.push((l.fan_in(), &l.weight));
        }
        for c in g.convs.iter().chain(&d.convs) {
            out.push((c.fan_in(), &c.weight));
        }
        out
    }

    #[test]
    fn fresh_weights_obey_the_xavier_bound() {
        let w = init_weights::<f32>(&arch(), 3).unwrap();
        for (fan_in, values) in fan_ins(&w) {
            let bound = 1.0 / (fan_in as f32).sqrt();
            assert!(values.iter().all(|v| v.abs() <= bound), "fan-in {fan_in}");
        }
        // fan-in 64 gives the bound 0.125
        let dense64 = w.generator.dynamics[0].weight.iter().all(|v| v.abs() <= 0.125);
        assert_eq!(w.generator.dynamics[0].inputs, 64);
        assert!(dense64);
        let mut w = w;
        let mut biases_zero = true;
        w.visit_params(&mut |name, v| {
            if name.ends_with(".bias") {
                biases_zero &= v.iter().all(|&x| x == 0.0);
            }
        });
        assert!(biases_zero);
    }

    #[test]
    fn same_seed_gives_bit_identical_weights() {
        let a = init_weights::<f32>(&arch(), 11).unwrap();
        let b = init_weights::<f32>(&arch(), 11).unwrap();
        let c = init_weights::<f32>(&arch(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_mean_of_a_square_layer_is_small() {
        let mut a = arch();
        a.dynamics_layers = vec![128, 128];
        let w = init_weights::<f64>(&a, 5).unwrap();
        let layer = &w.generator.dynamics[1];
        assert_eq!((layer.inputs, layer.outputs), (128, 128));
        let bound = 1.0 / 128f64.sqrt();
        let mean = layer.weight.iter().sum::<f64>() / layer.weight.len() as f64;
        // std of the sample mean is bound / sqrt(3 * 128 * 128)
        assert!(mean.abs() < 3.0 * bound / (128.0 * 128.0 * 3.0f64).sqrt());
    }

    #[test]
    fn rejects_grid_not_divisible_by_eight() {
        let a = ArchitectureConfig::new(Grid::unit_square(12).unwrap(), 4);
        assert!(init_weights::<f32>(&a, 0).is_err());
    }

    #[test]
    fn cast_roundtrip_is_exact_from_f32() {
        let w = init_weights::<f32>(&arch(), 9).unwrap();
        assert_eq!(w.cast::<f64>().cast::<f32>(), w);
    }
}
