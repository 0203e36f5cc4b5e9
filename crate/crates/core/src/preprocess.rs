//! Point-wise features, physical-constraint filtering and three-frame fusion.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{motion_compensate, EgoPose, EgoState, RadarFrame, RadarPoint};

/// Width of a network input row.
pub const FEATURE_WIDTH: usize = 12;
/// Frames fused into one cloud (current plus two previous).
pub const FUSED_FRAMES: usize = 3;
/// Carried probability when no previous detection is available.
pub const DEFAULT_PREV_PROB: f64 = 0.5;
/// Timestamp jump that starts a new sequence.
pub const SEQUENCE_BREAK: f64 = 0.5;

/// One fused, feature-augmented return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub doppler: f64,
    pub snr: f64,
    pub range: f64,
    pub ego_speed: f64,
    pub yaw_rate: f64,
    /// 0 for the current frame, 1 and 2 for the two before it.
    pub frame_index: u8,
    pub dev_x: f64,
    pub dev_y: f64,
    pub prev_prob: f64,
    pub label: Option<u8>,
}

impl FeaturePoint {
    /// Network input row in canonical column order.
    pub fn row(&self) -> [f64; FEATURE_WIDTH] {
        [
            self.x,
            self.y,
            self.z,
            self.doppler,
            self.snr,
            self.range,
            self.ego_speed,
            self.yaw_rate,
            self.frame_index as f64,
            self.dev_x,
            self.dev_y,
            self.prev_prob,
        ]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Fused cloud expressed in the ego frame of its current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    pub timestamp: f64,
    pub pose: EgoPose,
    pub points: Vec<FeaturePoint>,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(FeaturePoint::position).collect()
    }

    /// Labels, or `None` when any row is unlabeled.
    pub fn labels(&self) -> Option<Vec<u8>> {
        self.points.iter().map(|p| p.label).collect()
    }

    /// Resets every row's temporal features to their defaults.
    pub fn clear_temporal(&mut self) {
        for p in &mut self.points {
            p.dev_x = 0.0;
            p.dev_y = 0.0;
            p.prev_prob = DEFAULT_PREV_PROB;
        }
    }

    /// Keeps only the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureCloud {
        FeatureCloud {
            timestamp: self.timestamp,
            pose: self.pose,
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

/// Physical plausibility limits for static road boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub z_max: f64,
    pub z_min: f64,
    pub doppler_dev_max: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            z_max: 3.0,
            z_min: -1.5,
            doppler_dev_max: 1.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_max > self.z_min) || !(self.doppler_dev_max > 0.0) {
            return Err(Error::Config(
                "filter requires z_max > z_min and doppler_dev_max > 0".into(),
            ));
        }
        Ok(())
    }
}

pub fn passes_height(p: &RadarPoint, cfg: &FilterConfig) -> bool {
    p.z >= cfg.z_min && p.z <= cfg.z_max
}

/// Keeps points inside the closed height band.
pub fn height_filter(points: &[RadarPoint], cfg: &FilterConfig) -> Vec<RadarPoint> {
    points.iter().filter(|p| passes_height(p, cfg)).copied().collect()
}

/// Doppler a static reflector at the point's bearing would produce,
/// −v·cos(azimuth).
pub fn expected_static_doppler(p: &RadarPoint, ego_speed: f64) -> Result<f64> {
    let r = (p.x * p.x + p.y * p.y).sqrt();
    if r == 0.0 {
        return Err(Error::DegenerateBearing);
    }
    Ok(-ego_speed * p.y / r)
}

/// Points on the radar axis origin carry no bearing and always pass.
pub fn passes_doppler(p: &RadarPoint, ego: &EgoState, cfg: &FilterConfig) -> bool {
    match expected_static_doppler(p, ego.speed) {
        Ok(expected) => (p.doppler - expected).abs() <= cfg.doppler_dev_max,
        Err(_) => true,
    }
}

/// Keeps points whose Doppler is consistent with a static reflector.
pub fn doppler_filter(points: &[RadarPoint], ego: &EgoState, cfg: &FilterConfig) -> Vec<RadarPoint> {
    points
        .iter()
        .filter(|p| passes_doppler(p, ego, cfg))
        .copied()
        .collect()
}

/// Height then Doppler filter on a whole frame, keeping labels aligned.
pub fn filter_frame(frame: &RadarFrame, cfg: &FilterConfig) -> RadarFrame {
    let keep: Vec<usize> = (0..frame.points.len())
        .filter(|&i| {
            let p = &frame.points[i];
            passes_height(p, cfg) && passes_doppler(p, &frame.ego, cfg)
        })
        .collect();
    RadarFrame {
        timestamp: frame.timestamp,
        ego: frame.ego,
        points: keep.iter().map(|&i| frame.points[i]).collect(),
        labels: frame
            .labels
            .as_ref()
            .map(|l| keep.iter().map(|&i| l[i]).collect()),
    }
}

/// Fuses up to three frames into the current ego frame.
///
/// Previous frames are motion compensated; their Doppler, SNR and range
/// stay as measured while the current frame's odometry is attached to
/// every row.
pub fn fuse_frames(curr: &RadarFrame, prev1: Option<&RadarFrame>, prev2: Option<&RadarFrame>) -> Result<FeatureCloud> {
    if prev2.is_some() && prev1.is_none() {
        return Err(Error::Config("prev2 given without prev1".into()));
    }
    let mut later = curr.timestamp;
    for f in [prev1, prev2].into_iter().flatten() {
        if !(f.timestamp < later) {
            return Err(Error::OutOfOrder {
                earlier: f.timestamp,
                later,
            });
        }
        later = f.timestamp;
    }

    let mut points = Vec::new();
    for (index, frame) in [Some(curr), prev1, prev2].into_iter().enumerate() {
        let Some(frame) = frame else { break };
        let positions: Vec<[f64; 3]> = frame.points.iter().map(RadarPoint::position).collect();
        let positions = if index == 0 {
            positions
        } else {
            motion_compensate(&positions, &frame.ego.pose, &curr.ego.pose)
        };
        for (i, (p, pos)) in frame.points.iter().zip(positions).enumerate() {
            points.push(FeaturePoint {
                x: pos[0],
                y: pos[1],
                z: pos[2],
                doppler: p.doppler,
                snr: p.snr,
                range: p.range,
                ego_speed: curr.ego.speed,
                yaw_rate: curr.ego.yaw_rate,
                frame_index: index as u8,
                dev_x: 0.0,
                dev_y: 0.0,
                prev_prob: DEFAULT_PREV_PROB,
                label: frame.labels.as_ref().map(|l| l[i]),
            });
        }
    }
    Ok(FeatureCloud {
        timestamp: curr.timestamp,
        pose: curr.ego.pose,
        points,
    })
}

/// Filters each source frame, then fuses.
pub fn preprocess(
    curr: &RadarFrame,
    prev1: Option<&RadarFrame>,
    prev2: Option<&RadarFrame>,
    cfg: &FilterConfig,
) -> Result<FeatureCloud> {
    let curr = filter_frame(curr, cfg);
    let prev1 = prev1.map(|f| filter_frame(f, cfg));
    let prev2 = prev2.map(|f| filter_frame(f, cfg));
    fuse_frames(&curr, prev1.as_ref(), prev2.as_ref())
}

/// Preprocesses every frame of one time-ordered sequence.
pub fn preprocess_sequence(frames: &[RadarFrame], cfg: &FilterConfig) -> Result<Vec<FeatureCloud>> {
    let filtered: Vec<RadarFrame> = frames.iter().map(|f| filter_frame(f, cfg)).collect();
    (0..filtered.len())
        .map(|k| {
            let prev = |d: usize| k.checked_sub(d).map(|i| &filtered[i]);
            fuse_frames(&filtered[k], prev(1), prev(2))
        })
        .collect()
}

/// Splits a frame list into contiguous sequences; a new one starts when the
/// timestamp fails to increase or jumps by more than [`SEQUENCE_BREAK`].
pub fn split_sequences(frames: &[RadarFrame]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..frames.len() {
        let dt = frames[i].timestamp - frames[i - 1].timestamp;
        if !(dt > 0.0 && dt <= SEQUENCE_BREAK) {
            out.push(start..i);
            start = i;
        }
    }
    if !frames.is_empty() {
        out.push(start..frames.len());
    }
    out
}

/// Mirrors a frame across the vehicle's longitudinal axis.
///
/// The pose is mirrored as well (world x and yaw negated) so that motion
/// compensation within a flipped sequence stays consistent.
pub fn flip_augment(frame: &RadarFrame) -> RadarFrame {
    RadarFrame {
        timestamp: frame.timestamp,
        ego: EgoState {
            pose: EgoPose::new(-frame.ego.pose.x, frame.ego.pose.y, -frame.ego.pose.yaw),
            speed: frame.ego.speed,
            yaw_rate: -frame.ego.yaw_rate,
        },
        points: frame
            .points
            .iter()
            .map(|p| RadarPoint { x: -p.x, ..*p })
            .collect(),
        labels: frame.labels.clone(),
    }
}
