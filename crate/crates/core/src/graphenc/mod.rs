//! Graph encoder over the feeder topology, trained by local/global
//! mutual-information maximisation against random-tree negatives.

mod adjacency;
mod model;
mod train;

pub use adjacency::{edges_to_adjacency, normalize_adjacency, prufer_decode, sample_negative_tree};
pub use model::{js_mi_loss, BoundGraph, Fusion, GraphMode, GraphModel, GraphShape};
pub use train::{
    discriminator_accuracy, encode_events, event_scores, train_graph_encoder, GraphEpoch, GraphTrainConfig,
    GraphTrainReport,
};
