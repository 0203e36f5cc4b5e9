//! Point-wise boundary segmentation network, its losses, training loop and
//! recurrent inference.

mod checkpoint;
mod grouping;
mod layers;
mod loss;
mod model;
mod optim;
mod temporal;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use grouping::{ball_query, farthest_point_sample, interpolation_weights};
pub use layers::{Linear, Mlp};
pub use loss::{bce_loss, boundary_distances, distance_loss, loss_and_gradient, total_loss, LossConfig, LossParts};
pub use model::{Forward, Geometry, SaConfig, SegConfig, SegModel, LOGIT_LIMIT};
pub use optim::Adam;
pub use temporal::{apply_temporal, deviation_features, run_clouds, run_sequence, Detection, THRESHOLD};
pub use train::{gradient_check, loss_gradients, train, EpochStats, GradientCheck, TrainConfig};
