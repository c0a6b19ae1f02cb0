//! Toy decoder-only transformer with a latent block between L_s and L_e.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod inference;
pub mod transformer;
pub mod vocab;

pub use config::ModelConfig;
pub use encoder::{oracle_latents, GridEncoder, OracleLatents};
pub use inference::{predict_answer, ForwardOutput, LatentBlock, LatentMode};
pub use transformer::{param_schema, LatentModel, ModelInput, SlotFill, TapeForward};
pub use vocab::Vocab;
