//! Momentum-contrast pretraining: a dense encoder with object and context
//! projection heads, a momentum key copy, a negative queue, InfoNCE with
//! hand-derived gradients, SGD, and checkpoints.

mod checkpoint;
mod loss;
mod net;
mod state;
mod train;

pub use checkpoint::CHECKPOINT_VERSION;
pub use loss::{info_nce, info_nce_batch, NceStats};
pub use net::{normalize_rows, Arch, Dense, HeadKind, Mlp, NetGrads, Network, Tape};
pub use state::{momentum_update, route_heads, ModelState, Queue};
pub use train::{pretrain, EpochMetrics, TrainConfig, TrainData, Trainer};
