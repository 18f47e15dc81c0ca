//! Variance-exploding noising, the conditional denoiser, its losses and training loop.

mod checkpoint;
mod loss;
mod model;
mod schedule;
mod train;

pub use checkpoint::{Checkpoint, ModelKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{loss_positions, loss_reconstruction, loss_total, loss_velocity, LossBreakdown, LossWeights};
pub use model::DenoiserModel;
pub use schedule::{edm_coefficients, perturb, standard_normal, Coefficients, DiffusionSchedule, TimeDistribution};
pub use train::{batch_loss, draw_noise, pack, train_step, Example, Packed, TrainConfig};

pub(crate) use checkpoint::params_to_f32;
pub(crate) use model::{check_inputs, per_row, preconditioned};
