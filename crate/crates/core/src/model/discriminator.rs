//! Conditional discriminator: frame branch, parameter branch and a dense bypass.

use super::config::ArchitectureConfig;
use super::layers::{conv_out_dim, dot, mlp_backward, mlp_forward, relu_inplace, relu_mask, sigmoid};
use super::weights::{DiscriminatorWeights, ModelWeights};
use crate::datagen::{FlowSequence, SimulationParams};
use crate::error::{Error, Result};
use crate::numeric::{cst, Real};

/// Intermediate activations of one discriminator pass.
#[derive(Debug, Clone)]
pub struct DiscriminatorTrace<R> {
    /// `[T, ny, nx]` input, i.e. `T` channels of one image.
    input: Vec<R>,
    /// Post-ReLU outputs of the three stride-2 convolutions.
    convs: Vec<Vec<R>>,
    field_vec: Vec<R>,
    param_acts: Vec<Vec<R>>,
    /// Pre-sigmoid score `s1 + s2`.
    pub logit: f64,
    /// `sigma(s1 + s2)`.
    pub prob: f64,
}

pub fn discriminator_forward<R: Real>(
    w: &DiscriminatorWeights<R>,
    arch: &ArchitectureConfig,
    frames: &[R],
    scaled_re: R,
) -> DiscriminatorTrace<R> {
    let mut col = Vec::new();
    let (mut h, mut wd) = (arch.ny(), arch.nx());
    let mut convs: Vec<Vec<R>> = Vec::with_capacity(3);
    for conv in &w.convs {
        let x = convs.last().map(|v| v.as_slice()).unwrap_or(frames);
        let (ho, wo) = (conv_out_dim(h, 2), conv_out_dim(wd, 2));
        let mut y = vec![R::zero(); conv.out_channels * ho * wo];
        conv.forward(x, 1, h, wd, &mut y, &mut col);
        relu_inplace(&mut y);
        convs.push(y);
        h = ho;
        wd = wo;
    }
    let field_vec = w.field.forward_vec(convs.last().expect("three convolutions"));
    let param_acts = mlp_forward(&w.param, &[scaled_re], true);
    let s1 = dot(&field_vec, param_acts.last().expect("non-empty stack"));
    let s2 = w.bypass.forward_vec(frames)[0];
    let logit = (s1 + s2).as_f64();
    DiscriminatorTrace {
        input: frames.to_vec(),
        convs,
        field_vec,
        param_acts,
        logit,
        prob: sigmoid(logit),
    }
}

/// Backpropagates `d_logit` (gradient w.r.t. `s1 + s2`). Parameter
/// gradients accumulate into `grad` when given; the gradient w.r.t. the
/// input frames is returned when `want_input_grad` is set.
pub fn discriminator_backward<R: Real>(
    w: &DiscriminatorWeights<R>,
    arch: &ArchitectureConfig,
    trace: &DiscriminatorTrace<R>,
    d_logit: R,
    mut grad: Option<&mut DiscriminatorWeights<R>>,
    want_input_grad: bool,
) -> Option<Vec<R>> {
    let mut col = Vec::new();
    let param_vec = trace.param_acts.last().expect("non-empty stack");

    // s1 = <field_vec, param_vec>
    let d_field: Vec<R> = param_vec.iter().map(|&p| p * d_logit).collect();
    let d_param: Vec<R> = trace.field_vec.iter().map(|&f| f * d_logit).collect();
    mlp_backward(
        &w.param,
        &trace.param_acts,
        true,
        &d_param,
        grad.as_deref_mut().map(|g| g.param.as_mut_slice()),
    );

    // s2 = bypass(frames)
    let mut d_input = vec![R::zero(); trace.input.len()];
    w.bypass.backward(
        &trace.input,
        1,
        &[d_logit],
        grad.as_deref_mut().map(|g| &mut g.bypass),
        want_input_grad.then_some(d_input.as_mut_slice()),
    );

    // field branch
    let last = trace.convs.last().expect("three convolutions");
    let mut d = vec![R::zero(); last.len()];
    w.field.backward(last, 1, &d_field, grad.as_deref_mut().map(|g| &mut g.field), Some(&mut d));

    let mut sizes = vec![(arch.ny(), arch.nx())];
    for _ in 0..3 {
        let (h, wd) = *sizes.last().expect("non-empty");
        sizes.push((conv_out_dim(h, 2), conv_out_dim(wd, 2)));
    }
    for k in (0..3).rev() {
        relu_mask(&trace.convs[k], &mut d);
        let x = if k == 0 { &trace.input } else { &trace.convs[k - 1] };
        let (h, wd) = sizes[k];
        let need_dx = k > 0 || want_input_grad;
        let mut dx = vec![R::zero(); if need_dx { x.len() } else { 0 }];
        w.convs[k].backward(
            x,
            1,
            h,
            wd,
            &d,
            grad.as_deref_mut().map(|g| &mut g.convs[k]),
            need_dx.then_some(dx.as_mut_slice()),
            &mut col,
        );
        d = dx;
    }
    if want_input_grad {
        for (a, b) in d_input.iter_mut().zip(&d) {
            *a += *b;
        }
        Some(d_input)
    } else {
        None
    }
}

/// Probability that `seq` is a real sequence for the parameters `p`.
pub fn discriminate<R: Real>(seq: &FlowSequence, p: &SimulationParams, w: &ModelWeights<R>) -> Result<f64> {
    let arch = &w.arch;
    if seq.ny != arch.ny() || seq.nx != arch.nx() || seq.n_steps() != arch.horizon_train {
        return Err(Error::ShapeMismatch(format!(
            "discriminator expects [{}, {}, {}], got [{}, {}, {}]",
            arch.horizon_train,
            arch.ny(),
            arch.nx(),
            seq.n_steps(),
            seq.ny,
            seq.nx
        )));
    }
    let frames: Vec<R> = seq.frames.iter().map(|&v| cst(v as f64)).collect();
    let trace = discriminator_forward(&w.discriminator, arch, &frames, cst(w.scale_re(p.re)));
    Ok(trace.prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{FieldKind, Grid};
    use crate::model::init_weights;

    fn setup() -> (ModelWeights<f64>, SimulationParams) {
        let mut arch = ArchitectureConfig::new(Grid::unit_square(16).unwrap(), 2);
        arch.latent_dim = 4;
        arch.encoder_layers = vec![3];
        arch.disc_channels = [2, 2, 3];
        let mut w = init_weights::<f64>(&arch, 2).unwrap();
        w.re_range = (100.0, 200.0);
        let p = SimulationParams {
            re: 130.0,
            dt: 0.1,
            n_steps: 2,
            field: FieldKind::Vorticity,
        };
        (w, p)
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let (w, p) = setup();
        let w = w.zeroed();
        let seq = FlowSequence::new(p, 16, 16, vec![0.7; 2 * 256]).unwrap();
        assert_eq!(discriminate(&seq, &p, &w).unwrap(), 0.5);
    }

    #[test]
    fn output_is_strictly_inside_the_unit_interval() {
        let (w, p) = setup();
        for scale in [0.0f32, 0.1, 1.0, -1.0] {
            let frames = (0..512).map(|i| scale * ((i % 13) as f32 - 6.0)).collect();
            let seq = FlowSequence::new(p, 16, 16, frames).unwrap();
            let d = discriminate(&seq, &p, &w).unwrap();
            assert!(d > 0.0 && d < 1.0);
        }
    }

    #[test]
    fn wrong_horizon_is_a_shape_mismatch() {
        let (w, p) = setup();
        let seq = FlowSequence::new(p.with_steps(3), 16, 16, vec![0.0; 3 * 256]).unwrap();
        assert!(matches!(discriminate(&seq, &p, &w), Err(Error::ShapeMismatch(_))));
    }
}
