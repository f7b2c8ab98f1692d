//! Dyn-cGAN: a conditional GAN whose generator embeds a recursive latent
//! dynamics block, used as a surrogate for Reynolds-parameterized flows.
//!
//! The crate is organised the way the pipeline runs:
//!
//! * [`datagen`] produces training data: a vorticity/streamfunction solver for
//!   the lid-driven cavity and an analytic vortex-street wake generator, plus
//!   the on-disk dataset format.
//! * [`model`] holds the generator (parameter encoder, dynamics block, decoder)
//!   and the conditional discriminator, with hand-written reverse-mode passes.
//! * [`training`] implements the losses, Adam and the alternating adversarial
//!   loop with early stopping.
//! * [`evaluation`] computes error maps, probe metrics, KSG mutual information,
//!   Reynolds sweeps and the prediction-horizon study.
//! * [`cli`] wires everything into the `dyncgan` command.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
