//! Transformer encoder over per-node token lists, with hand-written
//! backpropagation, Adam, gradient checking and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{ModelConfig, Precision, Readout, TrainConfig};
pub use error::{Error, Result};
pub use gradcheck::{compare_gradients, gradient_check, numeric_gradients, GradCheckReport};
pub use model::{attention_forward, batch_loss, encoder_forward, loss_and_backward, predict, Tokens};
pub use optim::Adam;
pub use params::{ModelParams, Tensor};
pub use scalar::Scalar;
pub use train::{train, Dataset, EpochMetrics, TrainOutcome};
