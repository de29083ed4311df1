//! Mixture-model clustering, agreement scoring, a k-means baseline and
//! PCA projection export.

mod gmm;
mod kmeans;
mod metrics;
mod pca;
mod report;

pub use gmm::{gmm_fit, GmmConfig, GmmModel};
pub use kmeans::{kmeans_baseline, KMeansResult, KMEANS_RESTARTS};
pub use metrics::ari;
pub use pca::{pca_project, Projection};
pub use report::{projection_csv, ClusterReport};
