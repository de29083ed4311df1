//! Recurrent autoencoder that compresses each bus's event window into a
//! fixed-length embedding, one model per harmonic order.

mod aed;
mod embed;
mod train;

pub use aed::{AedParams, AedShape, BoundAed, DecoderSeed};
pub use embed::{embed_dataset, EventFeatures, FlatLoading};
pub use train::{train_aed, train_on_pool, window_pool, AedTrainConfig, AedTrainReport, EpochLoss, WindowPool};
