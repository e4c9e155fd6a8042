//! Fitting losses, Adam, and the single-task training loop.

mod adam;
mod fit;
mod losses;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub(crate) use fit::channel_loss;
pub use fit::{fit_task, BatchSampler, ExtraLoss, FitTrace, LossHook, TraceRecord, TrainConfig};
pub use losses::{cross_entropy_loss, huber_loss};
