//! Dyn-Gen generator, conditional discriminator and checkpoints.
//!
//! All layers are generic over [`Real`](crate::numeric::Real): training runs
//! in `f32`, gradient checks in `f64`.

mod checkpoint;
mod config;
mod discriminator;
mod generator;
pub mod layers;
mod weights;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_SCHEMA};
pub use config::ArchitectureConfig;
pub use discriminator::{discriminate, discriminator_backward, discriminator_forward, DiscriminatorTrace};
pub use generator::{
    decode, dynamics_step, encode_params, generate, generator_backward, generator_forward, rollout, Encoded,
    GeneratorTrace, LatentState, DIVERGENCE_LIMIT,
};
pub use layers::{Conv3x3, Dense};
pub use weights::{init_weights, DiscriminatorWeights, GeneratorWeights, ModelWeights, Params};
