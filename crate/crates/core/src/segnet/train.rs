use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::RadarFrame;
use crate::preprocess::{flip_augment, preprocess_sequence, split_sequences, FeatureCloud, FilterConfig};
use crate::rng::substream;
use crate::segnet::loss::{loss_and_gradient, LossConfig, LossParts};
use crate::segnet::model::{Geometry, SegModel};
use crate::segnet::optim::Adam;
use crate::segnet::temporal::{apply_temporal, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    /// Clouds above this size are randomly subsampled.
    pub max_points: usize,
    pub seed: u64,
    /// Feed the model its own previous detection as temporal features.
    pub temporal: bool,
    /// Add an x-mirrored twin of every sequence.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 6,
            max_points: 2048,
            seed: 0,
            temporal: true,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("train needs lr >= 0 and betas in [0, 1)".into()));
        }
        if self.max_points < 64 {
            return Err(Error::Config("max_points must be at least 64".into()));
        }
        Ok(())
    }
}

/// Mean loss over the frame steps of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub total: f64,
    pub bce: f64,
    pub dist: f64,
}

/// Loss of one labeled cloud and the gradient of its total with respect to
/// every parameter.
pub fn loss_gradients(
    model: &SegModel,
    cloud: &FeatureCloud,
    labels: &[u8],
    cfg: &LossConfig,
) -> Result<(LossParts, SegModel)> {
    let geo = model.geometry(cloud)?;
    let (parts, grads, _) = step_gradients(model, &geo, cloud, labels, cfg)?;
    Ok((parts, grads))
}

fn step_gradients(
    model: &SegModel,
    geo: &Geometry,
    cloud: &FeatureCloud,
    labels: &[u8],
    cfg: &LossConfig,
) -> Result<(LossParts, SegModel, Vec<f64>)> {
    let fwd = model.forward_with(geo, &model.input_matrix(cloud));
    let xy: Vec<[f64; 2]> = cloud.points.iter().map(|p| p.xy()).collect();
    let (parts, d_probs) = loss_and_gradient(&fwd.probs, labels, &xy, cfg)?;
    let grads = model.backward(geo, &fwd, &d_probs);
    Ok((parts, grads, fwd.probs))
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    /// Per tensor: `‖g − g_fd‖ / ‖max(|g|, |g_fd|)‖`.
    pub tensors: Vec<(String, f64)>,
    /// Distance of the nearest ReLU or max-pool switch from the evaluation
    /// point; differences are meaningful only when this exceeds the step.
    pub kink_margin: f64,
}

/// Central-difference check of [`loss_gradients`] on every parameter.
pub fn gradient_check(model: &SegModel, cloud: &FeatureCloud, cfg: &LossConfig, h: f64) -> Result<GradientCheck> {
    let labels = cloud
        .labels()
        .ok_or_else(|| Error::Config("gradient check needs a labeled cloud".into()))?;
    let geo = model.geometry(cloud)?;
    let x = model.input_matrix(cloud);
    let kink_margin = model.kink_margin(&geo, &model.forward_with(&geo, &x));
    let (_, grads, _) = step_gradients(model, &geo, cloud, &labels, cfg)?;
    let eval = |m: &SegModel| -> Result<f64> { Ok(step_gradients(m, &geo, cloud, &labels, cfg)?.0.total) };
    let mut tensors = Vec::new();
    let mut probe = model.clone();
    for (k, (name, _, analytic)) in grads.tensors().into_iter().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe.tensors_mut()[k][i];
            probe.tensors_mut()[k][i] = orig + h;
            let plus = eval(&probe)?;
            probe.tensors_mut()[k][i] = orig - h;
            let minus = eval(&probe)?;
            probe.tensors_mut()[k][i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            num += (fd - a).powi(2);
            den += fd.powi(2).max(a.powi(2));
        }
        tensors.push((name, if den > 0.0 { (num / den).sqrt() } else { 0.0 }));
    }
    Ok(GradientCheck { tensors, kink_margin })
}

struct Stream {
    clouds: Vec<FeatureCloud>,
    geometry: Vec<Option<Geometry>>,
}

/// Trains `model` on labeled frames. Sequences are split at timestamp
/// breaks and each is processed in time order so that temporal features
/// come from the model's own previous output.
pub fn train(
    mut model: SegModel,
    frames: &[RadarFrame],
    filter: &FilterConfig,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<(SegModel, Vec<EpochStats>)> {
    cfg.validate()?;
    loss.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut streams = Vec::new();
    for range in split_sequences(frames) {
        let seq = &frames[range];
        let mut variants = vec![preprocess_sequence(seq, filter)?];
        if cfg.augment {
            let flipped: Vec<RadarFrame> = seq.iter().map(flip_augment).collect();
            variants.push(preprocess_sequence(&flipped, filter)?);
        }
        for clouds in variants {
            if clouds.iter().any(|c| c.labels().is_none()) {
                return Err(Error::Config("training frames must be labeled".into()));
            }
            let geometry = clouds
                .iter()
                .map(|c| {
                    if c.is_empty() || c.len() > cfg.max_points {
                        Ok(None)
                    } else {
                        model.geometry(c).map(Some)
                    }
                })
                .collect::<Result<_>>()?;
            streams.push(Stream { clouds, geometry });
        }
    }

    let mut adam = Adam::new(&model, cfg.lr, cfg.beta1, cfg.beta2);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..streams.len()).collect();
        order.shuffle(&mut substream(cfg.seed, "train", epoch as u64));
        let mut sums = LossParts::default();
        let mut steps = 0;
        for &s in &order {
            let stream = &streams[s];
            let mut prev: Option<Detection> = None;
            for (cloud, geo) in stream.clouds.iter().zip(&stream.geometry) {
                global_step += 1;
                let mut cloud = cloud.clone();
                if cfg.temporal {
                    apply_temporal(&mut cloud, prev.as_ref());
                } else {
                    cloud.clear_temporal();
                }
                if cloud.is_empty() {
                    prev = Some(Detection::empty(&cloud));
                    continue;
                }
                let built;
                let geo = match geo {
                    Some(g) => g,
                    None => {
                        let mut rng = substream(cfg.seed, "subsample", global_step);
                        let mut keep = sample(&mut rng, cloud.len(), cfg.max_points).into_vec();
                        keep.sort_unstable();
                        cloud = cloud.select(&keep);
                        built = model.geometry(&cloud)?;
                        &built
                    }
                };
                let labels = cloud.labels().expect("checked above");
                let (parts, grads, probs) = step_gradients(&model, geo, &cloud, &labels, loss)?;
                adam.step(&mut model, &grads);
                sums.total += parts.total;
                sums.bce += parts.bce;
                sums.dist += parts.dist;
                steps += 1;
                prev = Some(Detection::new(&cloud, probs));
            }
        }
        let n = steps.max(1) as f64;
        trace.push(EpochStats {
            epoch,
            steps,
            total: sums.total / n,
            bce: sums.bce / n,
            dist: sums.dist / n,
        });
    }
    Ok((model, trace))
}
