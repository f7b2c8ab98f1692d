//! Losses, Adam and the alternating adversarial training loop.

mod adam;
pub mod gradcheck;
mod losses;
mod run;
mod trainer;

pub use adam::Adam;
pub use losses::{
    discriminator_loss, generator_adv_loss, generator_total_loss, mse, prediction_loss, LossWeights, CLAMP,
};
pub use run::{read_history_csv, write_history_csv, write_run_dir, CONFIG_FILE, HISTORY_FILE};
pub use trainer::{
    discriminator_grad, early_stop, epoch_order, forward_batch, generator_grad, prepare_samples, train,
    train_supervised, train_with, EpochRecord, GeneratorLosses, StopDecision, StopReason, TrainConfig,
    TrainOutcome, TrainSample, TrainState, IMPROVEMENT_RTOL,
};
