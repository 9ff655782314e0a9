//! Plaintext CNN training and inference.
//!
//! Holds the server architecture (whose lower five layers get frozen and
//! served under encryption), the client fine-tuning stack, exact gradients
//! for every layer type including the cubic ReLU stand-in, plain SGD with
//! momentum, per-example DP-SGD, and a Renyi-DP privacy accountant.

pub mod data;
pub mod dp;
pub mod error;
pub mod model;
pub mod spec;
pub mod state;
pub mod synth;
pub mod train;

pub use data::Dataset;
pub use dp::{account_epsilon, DpConfig, PrivacyReport};
pub use error::{NnError, Result};
pub use model::{backward, bce_loss, forward, forward_prefix, Gradients, Mode};
pub use spec::{Activation, LayerSpec, ModelSpec};
pub use state::{LayerParams, ModelState};
pub use train::{
    dpsgd_step, finetune_client, predict, sgd_step, train, train_source, TrainConfig, TrainReport,
};
