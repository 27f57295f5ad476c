//! Normed-gradient objectness: an 8×8 linear template scored over many
//! quantized window sizes, per-size calibration, NMS, training from
//! ground-truth boxes, and a JSONL proposal cache.

mod cache;
mod model;
mod ng;
mod propose;
mod train;

pub use cache::ProposalCache;
pub use model::{default_sizes, BingModel, BingTrainConfig, Calibration, BASE_SIDES, FEAT_DIM, MODEL_VERSION, WIN};
pub use ng::{grayscale, normed_gradient, NgMap};
pub use propose::{nms, propose, random_proposals, rank_order, recall_counts, Proposal, ProposalConfig};
pub use train::{train, train_with_sizes, TrainReport};
