//! Command implementations behind the `roadedge` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use roadedge_core::curvefit::{curves_to_json, ClusterConfig, GprConfig};
use roadedge_core::eval::{evaluate_outputs, run_pipeline, EvalConfig, EvalReport, FrameOutput};
use roadedge_core::io::atomic_write_bytes;
use roadedge_core::plot::{top_view_svg, trace_svg};
use roadedge_core::preprocess::FilterConfig;
use roadedge_core::segnet::{train, Checkpoint, EpochStats, LossConfig, SegConfig, SegModel, TrainConfig};
use roadedge_core::sim::{build_scenario_frames, read_dataset, simulate, write_dataset, RadarModel, ScenarioKind};

/// Every tunable of the pipeline, loaded from one TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; when set it replaces `train.seed` and `cluster.seed`.
    pub seed: Option<u64>,
    pub radar: RadarModel,
    pub filter: FilterConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub cluster: ClusterConfig,
    pub gpr: GprConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        cfg.apply_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = Some(s);
            self.train.seed = s;
            self.cluster.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.filter.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.cluster.validate()?;
        self.gpr.validate()?;
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            filter: self.filter.clone(),
            cluster: self.cluster.clone(),
            gpr: self.gpr,
        }
    }

    /// Default configuration rendered as TOML, for `--help`.
    pub fn defaults_toml() -> String {
        let mut cfg = RunConfig::default();
        cfg.seed = Some(0);
        toml::to_string(&cfg).unwrap_or_default()
    }
}

pub fn simulate_cmd(kind: &str, frames: usize, seed: u64, out: &Path, config: &RunConfig) -> Result<()> {
    let kind: ScenarioKind = kind.parse()?;
    config.radar.validate()?;
    let scenario = build_scenario_frames(kind, seed, frames);
    let rendered = simulate(&scenario, &config.radar, frames, seed)?;
    write_dataset(&rendered, out)?;
    Ok(())
}

/// Arm name for a pair of ablation switches.
pub fn arm_name(temporal: bool, distance_loss: bool) -> &'static str {
    match (temporal, distance_loss) {
        (true, true) => "full",
        (false, true) => "no-temporal",
        (true, false) => "no-distance-loss",
        (false, false) => "no-temporal-no-distance-loss",
    }
}

pub fn loss_trace_csv(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch,steps,total,bce,dist\n");
    for e in trace {
        out.push_str(&format!("{},{},{:?},{:?},{:?}\n", e.epoch, e.steps, e.total, e.bce, e.dist));
    }
    out
}

/// Loss-trace path written next to a checkpoint.
pub fn trace_path(model_out: &Path) -> PathBuf {
    let mut name = model_out.file_stem().unwrap_or_default().to_os_string();
    name.push(".loss.csv");
    model_out.with_file_name(name)
}

pub fn train_cmd(data: &Path, out: &Path, config: &RunConfig) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let frames = read_dataset(data)?;
    let model = SegModel::new(SegConfig::default(), config.train.seed)?;
    let (model, trace) = train(model, &frames, &config.filter, &config.train, &config.loss)?;
    let ck = Checkpoint {
        model,
        temporal: config.train.temporal,
        arm: arm_name(config.train.temporal, config.loss.lambda_dist > 0.0).to_string(),
    };
    ck.save(out)?;
    atomic_write_bytes(&trace_path(out), loss_trace_csv(&trace).as_bytes())?;
    Ok(trace)
}

#[derive(Serialize)]
struct InferRecord<'a> {
    sequence: usize,
    frame: usize,
    t: f64,
    points: Vec<[f64; 3]>,
    frame_index: Vec<u8>,
    probs: &'a [f64],
    labels: &'a [u8],
    curves: serde_json::Value,
}

fn infer_lines(outputs: &[Vec<FrameOutput>]) -> Result<String> {
    let mut text = String::new();
    for (s, seq) in outputs.iter().enumerate() {
        for (k, o) in seq.iter().enumerate() {
            let rec = InferRecord {
                sequence: s,
                frame: k,
                t: o.cloud.timestamp,
                points: o.cloud.positions(),
                frame_index: o.cloud.points.iter().map(|p| p.frame_index).collect(),
                probs: &o.detection.probs,
                labels: &o.detection.labels,
                curves: serde_json::from_str(&curves_to_json(&o.curves)?)?,
            };
            text.push_str(&serde_json::to_string(&rec)?);
            text.push('\n');
        }
    }
    Ok(text)
}

/// Writes one JSON line per frame with per-point probabilities and the
/// fitted curves.
pub fn infer_cmd(data: &Path, model: &Path, out: &Path, config: &RunConfig) -> Result<()> {
    config.validate()?;
    let frames = read_dataset(data)?;
    let ck = Checkpoint::load(model)?;
    let outputs = run_pipeline(&ck.model, ck.temporal, &frames, &config.eval_config())?;
    atomic_write_bytes(out, infer_lines(&outputs)?.as_bytes())?;
    Ok(())
}

fn unique_arm(name: &str, taken: &[String]) -> String {
    if !taken.iter().any(|t| t == name) {
        return name.to_string();
    }
    (2..)
        .map(|k| format!("{name}-{k}"))
        .find(|c| !taken.contains(c))
        .expect("unbounded suffixes")
}

/// Evaluates every model on the dataset and writes `report.json`,
/// `frames.csv`, `summary.csv`, per-arm curves and SVG plots.
pub fn eval_cmd(data: &Path, models: &[PathBuf], report_dir: &Path, config: &RunConfig) -> Result<EvalReport> {
    config.validate()?;
    if models.is_empty() {
        bail!("at least one --model is required");
    }
    let frames = read_dataset(data)?;
    let cfg = config.eval_config();
    fs::create_dir_all(report_dir).with_context(|| format!("creating {}", report_dir.display()))?;
    let mut arms = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for path in models {
        let ck = Checkpoint::load(path)?;
        let name = unique_arm(&ck.arm, &names);
        names.push(name.clone());
        let outputs = run_pipeline(&ck.model, ck.temporal, &frames, &cfg)?;
        let arm = evaluate_outputs(&name, ck.temporal, &outputs)?;
        if let Some(last) = outputs.first().and_then(|s| s.last()) {
            let svg = top_view_svg(&last.cloud, &last.detection, &last.curves, &format!("{name}: t = {:.1} s", last.cloud.timestamp));
            atomic_write_bytes(&report_dir.join(format!("top_view_{name}.svg")), svg.as_bytes())?;
            atomic_write_bytes(&report_dir.join(format!("curves_{name}.json")), curves_to_json(&last.curves)?.as_bytes())?;
        }
        arms.push(arm);
    }
    let report = EvalReport::new(arms);
    let series = |f: &dyn Fn(&roadedge_core::eval::FrameMetrics) -> Option<f64>| -> Vec<(String, Vec<(f64, f64)>)> {
        report
            .arms
            .iter()
            .map(|a| {
                let pts = a
                    .frames
                    .iter()
                    .enumerate()
                    .filter_map(|(i, fm)| f(fm).map(|v| (i as f64, v)))
                    .collect();
                (a.arm.clone(), pts)
            })
            .collect()
    };
    atomic_write_bytes(
        &report_dir.join("accuracy.svg"),
        trace_svg(&series(&|f| f.accuracy), "Segmentation accuracy per frame", "accuracy").as_bytes(),
    )?;
    atomic_write_bytes(
        &report_dir.join("chamfer.svg"),
        trace_svg(&series(&|f| f.chamfer), "Chamfer distance per frame", "chamfer (m)").as_bytes(),
    )?;
    atomic_write_bytes(&report_dir.join("frames.csv"), report.frames_csv().as_bytes())?;
    atomic_write_bytes(&report_dir.join("summary.csv"), report.summary_csv().as_bytes())?;
    atomic_write_bytes(&report_dir.join("report.json"), report.to_json()?.as_bytes())?;
    Ok(report)
}
