//! Clustering of detected boundary points and Gaussian-process curve fits.

mod dbscan;
mod fit;
mod gpr;

pub use dbscan::{dbscan, groups, NOISE};
pub use fit::{
    cluster_boundaries, cluster_with_eps, curves_to_json, fit_boundaries, gpr_fit, split_on_gap, y_grid,
    BoundaryCurve, ClusterConfig, GRID_STEP,
};
pub use gpr::{matern_kernel, GpPosterior, GprConfig, MAX_JITTER, Z95};
