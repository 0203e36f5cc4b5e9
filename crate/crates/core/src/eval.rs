//! Per-frame and aggregate segmentation and curve metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::curvefit::{fit_boundaries, BoundaryCurve, ClusterConfig, GprConfig};
use crate::error::Result;
use crate::geom::{chamfer, hausdorff, RadarFrame};
use crate::preprocess::{preprocess_sequence, split_sequences, FeatureCloud, FilterConfig};
use crate::segnet::{run_clouds, Detection, SegModel};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(TP + TN) / total`, or `None` without any points.
    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.tp + self.tn) as f64 / n as f64)
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub sequence: usize,
    pub frame: usize,
    pub timestamp: f64,
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub detected: usize,
    pub ground_truth: usize,
    pub chamfer: Option<f64>,
    pub hausdorff: Option<f64>,
    pub curves: usize,
    pub max_jitter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: String,
    pub temporal: bool,
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub median_chamfer: Option<f64>,
    pub median_hausdorff: Option<f64>,
    pub mean_chamfer: Option<f64>,
    pub mean_hausdorff: Option<f64>,
    /// Frames with both a detection and a ground-truth set.
    pub scored_frames: usize,
    pub empty_ground_truth_frames: usize,
    pub empty_detection_frames: usize,
    pub max_jitter: Option<f64>,
    pub frames: Vec<FrameMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub arms: Vec<ArmReport>,
}

impl EvalReport {
    pub fn new(arms: Vec<ArmReport>) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            arms,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per arm and frame.
    pub fn frames_csv(&self) -> String {
        let mut out = String::from("arm,sequence,frame,timestamp,tp,fp,tn,fn,accuracy,chamfer,hausdorff,curves\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
        for arm in &self.arms {
            for f in &arm.frames {
                let c = &f.confusion;
                let _ = writeln!(
                    out,
                    "{},{},{},{:?},{},{},{},{},{},{},{},{}",
                    arm.arm,
                    f.sequence,
                    f.frame,
                    f.timestamp,
                    c.tp,
                    c.fp,
                    c.tn,
                    c.fn_,
                    opt(f.accuracy),
                    opt(f.chamfer),
                    opt(f.hausdorff),
                    f.curves
                );
            }
        }
        out
    }

    /// One row per arm with the aggregate metrics.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "arm,temporal,accuracy,median_chamfer,median_hausdorff,mean_chamfer,mean_hausdorff,scored_frames,empty_ground_truth_frames,empty_detection_frames\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
        for a in &self.arms {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                a.arm,
                a.temporal,
                opt(a.accuracy),
                opt(a.median_chamfer),
                opt(a.median_hausdorff),
                opt(a.mean_chamfer),
                opt(a.mean_hausdorff),
                a.scored_frames,
                a.empty_ground_truth_frames,
                a.empty_detection_frames
            );
        }
        out
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Ground-plane positions of the current-frame rows that are true and
/// detected boundary points.
pub fn boundary_sets(cloud: &FeatureCloud, det: &Detection) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let mut detected = Vec::new();
    let mut truth = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if p.frame_index != 0 {
            continue;
        }
        if det.labels.get(i) == Some(&1) {
            detected.push(p.xy());
        }
        if p.label == Some(1) {
            truth.push(p.xy());
        }
    }
    (detected, truth)
}

/// Detected boundary points of all fused rows, the input to curve fitting.
pub fn detected_points(cloud: &FeatureCloud, det: &Detection) -> Vec<[f64; 2]> {
    cloud
        .points
        .iter()
        .zip(&det.labels)
        .filter(|(_, &l)| l == 1)
        .map(|(p, _)| p.xy())
        .collect()
}

/// Metrics of one frame; segmentation scores cover current-frame rows.
pub fn frame_metrics(
    cloud: &FeatureCloud,
    det: &Detection,
    curves: &[BoundaryCurve],
    sequence: usize,
    frame: usize,
) -> Result<FrameMetrics> {
    let mut confusion = Confusion::default();
    for (i, p) in cloud.points.iter().enumerate() {
        if p.frame_index != 0 {
            continue;
        }
        let (Some(truth), Some(&pred)) = (p.label, det.labels.get(i)) else {
            continue;
        };
        match (truth, pred) {
            (1, 1) => confusion.tp += 1,
            (0, 1) => confusion.fp += 1,
            (1, _) => confusion.fn_ += 1,
            _ => confusion.tn += 1,
        }
    }
    let (detected, truth) = boundary_sets(cloud, det);
    let scored = !detected.is_empty() && !truth.is_empty();
    Ok(FrameMetrics {
        sequence,
        frame,
        timestamp: cloud.timestamp,
        accuracy: confusion.accuracy(),
        confusion,
        detected: detected.len(),
        ground_truth: truth.len(),
        chamfer: if scored { Some(chamfer(&detected, &truth)?) } else { None },
        hausdorff: if scored { Some(hausdorff(&detected, &truth)?) } else { None },
        curves: curves.len(),
        max_jitter: curves.iter().map(|c| c.jitter).reduce(f64::max),
    })
}

/// Aggregates per-frame metrics into an arm summary.
pub fn summarize(arm: &str, temporal: bool, frames: Vec<FrameMetrics>) -> ArmReport {
    let mut confusion = Confusion::default();
    for f in &frames {
        confusion.add(&f.confusion);
    }
    let ch: Vec<f64> = frames.iter().filter_map(|f| f.chamfer).collect();
    let hd: Vec<f64> = frames.iter().filter_map(|f| f.hausdorff).collect();
    ArmReport {
        arm: arm.to_string(),
        temporal,
        accuracy: confusion.accuracy(),
        confusion,
        median_chamfer: median(&ch),
        median_hausdorff: median(&hd),
        mean_chamfer: mean(&ch),
        mean_hausdorff: mean(&hd),
        scored_frames: ch.len(),
        empty_ground_truth_frames: frames.iter().filter(|f| f.ground_truth == 0).count(),
        empty_detection_frames: frames.iter().filter(|f| f.detected == 0).count(),
        max_jitter: frames.iter().filter_map(|f| f.max_jitter).reduce(f64::max),
        frames,
    }
}

/// Everything produced for one evaluated frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub cloud: FeatureCloud,
    pub detection: Detection,
    pub curves: Vec<BoundaryCurve>,
}

/// Settings shared by every arm evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalConfig {
    pub filter: FilterConfig,
    pub cluster: ClusterConfig,
    pub gpr: GprConfig,
}

/// Runs preprocessing, recurrent segmentation and curve fitting on every
/// sequence of `frames`.
pub fn run_pipeline(model: &SegModel, temporal: bool, frames: &[RadarFrame], cfg: &EvalConfig) -> Result<Vec<Vec<FrameOutput>>> {
    let mut out = Vec::new();
    for range in split_sequences(frames) {
        let clouds = preprocess_sequence(&frames[range], &cfg.filter)?;
        let dets = run_clouds(model, &clouds, temporal)?;
        let mut seq = Vec::with_capacity(clouds.len());
        for (cloud, detection) in clouds.into_iter().zip(dets) {
            let curves = fit_boundaries(&detected_points(&cloud, &detection), &cfg.cluster, &cfg.gpr)?;
            seq.push(FrameOutput {
                cloud,
                detection,
                curves,
            });
        }
        out.push(seq);
    }
    Ok(out)
}

pub fn evaluate_outputs(arm: &str, temporal: bool, outputs: &[Vec<FrameOutput>]) -> Result<ArmReport> {
    let mut frames = Vec::new();
    for (s, seq) in outputs.iter().enumerate() {
        for (k, o) in seq.iter().enumerate() {
            frames.push(frame_metrics(&o.cloud, &o.detection, &o.curves, s, k)?);
        }
    }
    Ok(summarize(arm, temporal, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::preprocess_sequence;
    use crate::sim::{build_scenario_frames, simulate, RadarModel, ScenarioKind};

    fn oracle(cloud: &FeatureCloud) -> Detection {
        let probs = cloud.points.iter().map(|p| f64::from(p.label.unwrap())).collect();
        Detection::new(cloud, probs)
    }

    #[test]
    fn median_definition() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn oracle_detector_is_perfect() {
        let scenario = build_scenario_frames(ScenarioKind::Curved, 3, 10);
        let frames = simulate(&scenario, &RadarModel::default(), 10, 3).unwrap();
        let clouds = preprocess_sequence(&frames, &FilterConfig::default()).unwrap();
        let metrics: Vec<FrameMetrics> = clouds
            .iter()
            .enumerate()
            .map(|(k, c)| frame_metrics(c, &oracle(c), &[], 0, k).unwrap())
            .collect();
        let arm = summarize("oracle", false, metrics);
        assert_eq!(arm.accuracy, Some(1.0));
        assert_eq!(arm.median_chamfer, Some(0.0));
        assert_eq!(arm.median_hausdorff, Some(0.0));
        assert_eq!(arm.confusion.fp + arm.confusion.fn_, 0);
        assert_eq!(arm.scored_frames, 10);
    }

    #[test]
    fn confusion_counts_and_empty_sets() {
        let scenario = build_scenario_frames(ScenarioKind::Straight, 1, 3);
        let frames = simulate(&scenario, &RadarModel::default(), 3, 1).unwrap();
        let cloud = preprocess_sequence(&frames, &FilterConfig::default()).unwrap().remove(0);
        let none = Detection::new(&cloud, vec![0.0; cloud.len()]);
        let m = frame_metrics(&cloud, &none, &[], 0, 0).unwrap();
        assert_eq!(m.confusion.tp + m.confusion.fp, 0);
        assert_eq!(m.confusion.fn_, m.ground_truth);
        assert_eq!(m.chamfer, None);
        let arm = summarize("none", false, vec![m]);
        assert_eq!(arm.empty_detection_frames, 1);
        assert_eq!(arm.median_chamfer, None);
        let acc = arm.accuracy.unwrap();
        let c = arm.confusion;
        assert_eq!(acc, (c.tp + c.tn) as f64 / c.total() as f64);
    }

    #[test]
    fn csv_medians_recompute() {
        let scenario = build_scenario_frames(ScenarioKind::Straight, 2, 12);
        let frames = simulate(&scenario, &RadarModel::default(), 12, 2).unwrap();
        let clouds = preprocess_sequence(&frames, &FilterConfig::default()).unwrap();
        let metrics: Vec<FrameMetrics> = clouds
            .iter()
            .enumerate()
            .map(|(k, c)| {
                // A detector that keeps every other true boundary point.
                let probs = c
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if p.label == Some(1) && i % 2 == 0 { 0.9 } else { 0.1 })
                    .collect();
                frame_metrics(c, &Detection::new(c, probs), &[], 0, k).unwrap()
            })
            .collect();
        let report = EvalReport::new(vec![summarize("half", false, metrics)]);
        let csv = report.frames_csv();
        let chamfers: Vec<f64> = csv
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').nth(9).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()))
            .collect();
        assert_eq!(median(&chamfers), report.arms[0].median_chamfer);
        assert!(report.arms[0].median_chamfer.unwrap() > 0.0);
    }
}
