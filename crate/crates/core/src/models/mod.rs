//! Scene-classification models built on the feature matrices.

pub mod heads;
pub mod network;
pub mod objective;
pub mod train;

pub use heads::{
    ssf_cnn_param_count, ssf_cnn_specs, ssf_nn_param_count, ssf_nn_specs, HeadKind, SemanticHead, SEMANTIC_FEATURES,
};
pub use network::{argmax, fuse_concat, fuse_concat_batch, Architecture, Batch, Network, Score, DEFAULT_FC3};
pub use objective::NetworkObjective;
pub use train::{fusion_from_step1, train, EpochMetrics, Stage, TrainOutcome, TrainPlan};
