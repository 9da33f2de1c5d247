//! Maximum-likelihood training of the full model.

mod checkpoint;
mod fit;
mod gradcheck;
mod loss;
mod noise;
mod optim;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, load_checkpoint_with_meta, save_checkpoint,
    save_checkpoint_with_meta, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use fit::{fit, fit_with_callback, write_history, EpochStats, FitResult, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport, GroupError, GRAD_FLOOR};
pub use loss::{loss_and_grad, nll_loss, Example};
pub use noise::{inject_noise, unscale, NoiseConfig};
pub use optim::Adam;
