//! Objectives, sampling, optimisation and the training loop.

mod adam;
mod losses;
mod sampler;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use losses::{bpr_loss, infonce_cross_view, squared_norm, total_loss, LossWeights};
pub use sampler::{BprBatch, BprSampler};
pub use trainer::{history_csv, train, validation_ndcg, EpochRecord, TrainOutcome, TrainSetup, HISTORY_CSV_HEADER};
