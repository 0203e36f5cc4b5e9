use crate::error::Result;
use crate::geom::{motion_compensate, nearest, EgoPose, RadarFrame};
use crate::preprocess::{preprocess_sequence, FeatureCloud, FilterConfig, DEFAULT_PREV_PROB};
use crate::segnet::model::SegModel;

/// Probability threshold separating boundary from non-boundary points.
pub const THRESHOLD: f64 = 0.5;

/// Segmentation result of one fused cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub timestamp: f64,
    pub pose: EgoPose,
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    /// Current-frame rows classified as boundary, in this frame's ego
    /// coordinates, with their probabilities.
    pub boundary: Vec<([f64; 3], f64)>,
}

impl Detection {
    pub fn new(cloud: &FeatureCloud, probs: Vec<f64>) -> Self {
        let labels: Vec<u8> = probs.iter().map(|&p| u8::from(p > THRESHOLD)).collect();
        let boundary = cloud
            .points
            .iter()
            .zip(&probs)
            .filter(|(pt, &p)| pt.frame_index == 0 && p > THRESHOLD)
            .map(|(pt, &p)| (pt.position(), p))
            .collect();
        Self {
            timestamp: cloud.timestamp,
            pose: cloud.pose,
            probs,
            labels,
            boundary,
        }
    }

    pub fn empty(cloud: &FeatureCloud) -> Self {
        Self::new(cloud, Vec::new())
    }
}

/// Per point `(dev_x, dev_y, prev_prob)`: the ground-plane vector from the
/// nearest motion-compensated previous boundary point to the point, and
/// that neighbor's probability.
pub fn deviation_features(curr: &[[f64; 3]], prev: Option<&Detection>, pose_curr: &EgoPose) -> Vec<(f64, f64, f64)> {
    let default = (0.0, 0.0, DEFAULT_PREV_PROB);
    let prev = match prev {
        Some(p) if !p.boundary.is_empty() => p,
        _ => return vec![default; curr.len()],
    };
    let coords: Vec<[f64; 3]> = prev.boundary.iter().map(|b| b.0).collect();
    let comp: Vec<[f64; 2]> = motion_compensate(&coords, &prev.pose, pose_curr)
        .into_iter()
        .map(|c| [c[0], c[1]])
        .collect();
    curr.iter()
        .map(|c| {
            let n = nearest(&[c[0], c[1]], &comp).expect("non-empty boundary");
            (n.vector[0], n.vector[1], prev.boundary[n.index].1)
        })
        .collect()
}

/// Writes temporal features derived from `prev` into `cloud`.
pub fn apply_temporal(cloud: &mut FeatureCloud, prev: Option<&Detection>) {
    let feats = deviation_features(&cloud.positions(), prev, &cloud.pose);
    for (p, (dx, dy, pp)) in cloud.points.iter_mut().zip(feats) {
        p.dev_x = dx;
        p.dev_y = dy;
        p.prev_prob = pp;
    }
}

/// Recurrent inference over preprocessed clouds of one sequence. With
/// `temporal` off every cloud keeps the default temporal features.
pub fn run_clouds(model: &SegModel, clouds: &[FeatureCloud], temporal: bool) -> Result<Vec<Detection>> {
    let mut out: Vec<Detection> = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        let mut cloud = cloud.clone();
        if temporal {
            apply_temporal(&mut cloud, out.last());
        } else {
            cloud.clear_temporal();
        }
        let det = if cloud.is_empty() {
            Detection::empty(&cloud)
        } else {
            Detection::new(&cloud, model.forward(&cloud)?)
        };
        out.push(det);
    }
    Ok(out)
}

/// Preprocesses and segments one time-ordered sequence of frames.
pub fn run_sequence(
    model: &SegModel,
    frames: &[RadarFrame],
    filter: &FilterConfig,
    temporal: bool,
) -> Result<Vec<Detection>> {
    run_clouds(model, &preprocess_sequence(frames, filter)?, temporal)
}
