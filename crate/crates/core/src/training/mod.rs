//! Teacher-forced training with the joint answer + alignment objective, and
//! the pause and masked-input baselines.

pub mod config;
pub mod loss;
pub mod trainer;

pub use config::{LatentLoss, TrainConfig, Variant};
pub use loss::{latent_distance, mask_input, objective_loss, objective_loss_tape, LossTerms, TrainObjective};
pub use trainer::{
    accuracy, prepare_examples, total_steps, train, EncodedSample, EpochRecord, QuickEval, StepEval, TrainReport,
};
