//! Road-boundary detection from 4D mmWave radar point clouds.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`preprocess`]: physical-constraint filtering and three-frame fusion
//!    with ego-motion compensation.
//! 2. [`segnet`]: point-wise boundary probabilities from a set-abstraction /
//!    feature-propagation network trained with cross-entropy plus a distance
//!    penalty, fed with temporal deviation features from the previous frame.
//! 3. [`curvefit`]: DBSCAN clustering of detected points and Gaussian-process
//!    curve fitting with gap splitting and uncertainty-driven re-clustering.
//!
//! [`sim`] generates labeled synthetic drives and [`eval`] scores detections.

pub mod curvefit;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod plot;
pub mod preprocess;
pub mod rng;
pub mod segnet;
pub mod sim;

pub use error::{Error, Result};
