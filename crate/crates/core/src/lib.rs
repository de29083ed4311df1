//! Unsupervised clustering of distribution-feeder events from sparse phasor
//! measurements.
//!
//! The pipeline compresses each sensor's event window with a recurrent
//! autoencoder ([`temporal`]), propagates the embeddings over the feeder graph
//! with a two-layer GCN trained to maximise local/global mutual information
//! ([`graphenc`]), and clusters the resulting graph vectors with a Gaussian
//! mixture ([`cluster`]). [`feeder`] provides the radial network model and a
//! synthetic event generator; [`pipeline`] wires the stages together and
//! hosts the ablation harness.

pub mod checkpoint;
pub mod cluster;
pub mod error;
pub mod feeder;
pub mod graphenc;
pub mod numerics;
pub mod pipeline;
pub mod temporal;

pub use error::{Error, Result};
