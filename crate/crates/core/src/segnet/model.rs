use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{FeatureCloud, FEATURE_WIDTH};
use crate::rng::substream;
use crate::segnet::grouping::{ball_query, farthest_point_sample, interpolation_weights};
use crate::segnet::layers::{concat, max_pool, max_pool_backward, pool_margin, Mlp, MlpCache};

/// Logits are clamped here so probabilities stay strictly inside (0, 1).
pub const LOGIT_LIMIT: f64 = 30.0;

/// One set-abstraction stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    /// Upper bound on sampled centroids; smaller clouds use every point.
    pub centroids: usize,
    pub radius: f64,
    pub k: usize,
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegConfig {
    pub sa1: SaConfig,
    pub sa2: SaConfig,
    pub fp1: Vec<usize>,
    pub fp2: Vec<usize>,
    pub head: Vec<usize>,
    /// Input rows are normalized as `(row − shift) · scale`.
    pub feature_shift: [f64; FEATURE_WIDTH],
    pub feature_scale: [f64; FEATURE_WIDTH],
}

const SHIFT: [f64; FEATURE_WIDTH] = [0.0, 40.0, 0.0, 0.0, 15.0, 40.0, 10.0, 0.0, 1.0, 0.0, 0.0, 0.5];
const SCALE: [f64; FEATURE_WIDTH] = [0.05, 0.05, 0.5, 0.1, 0.05, 0.025, 0.1, 2.0, 1.0, 0.2, 0.2, 2.0];

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            sa1: SaConfig {
                centroids: 512,
                radius: 2.0,
                k: 16,
                widths: vec![FEATURE_WIDTH, 32, 32, 64],
            },
            sa2: SaConfig {
                centroids: 128,
                radius: 4.0,
                k: 16,
                widths: vec![64 + 3, 64, 64, 128],
            },
            fp1: vec![128 + 64, 128, 64],
            fp2: vec![64 + FEATURE_WIDTH, 64, 64],
            head: vec![64, 32, 1],
            feature_shift: SHIFT,
            feature_scale: SCALE,
        }
    }
}

impl SegConfig {
    /// Reduced network for gradient checks: 8 and 4 centroids.
    pub fn micro() -> Self {
        Self {
            sa1: SaConfig {
                centroids: 8,
                radius: 4.0,
                k: 6,
                widths: vec![FEATURE_WIDTH, 6, 8],
            },
            sa2: SaConfig {
                centroids: 4,
                radius: 8.0,
                k: 4,
                widths: vec![8 + 3, 8, 10],
            },
            fp1: vec![10 + 8, 8],
            fp2: vec![8 + FEATURE_WIDTH, 8],
            head: vec![8, 6, 1],
            feature_shift: SHIFT,
            feature_scale: SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let last = |w: &[usize]| w.last().copied().unwrap_or(0);
        let first = |w: &[usize]| w.first().copied().unwrap_or(0);
        let chain = [
            (first(&self.sa1.widths), FEATURE_WIDTH, "sa1 input"),
            (first(&self.sa2.widths), last(&self.sa1.widths) + 3, "sa2 input"),
            (first(&self.fp1), last(&self.sa2.widths) + last(&self.sa1.widths), "fp1 input"),
            (first(&self.fp2), last(&self.fp1) + FEATURE_WIDTH, "fp2 input"),
            (first(&self.head), last(&self.fp2), "head input"),
            (last(&self.head), 1, "head output"),
        ];
        for (got, want, what) in chain {
            if got != want {
                return Err(Error::Config(format!("{what} width {got}, expected {want}")));
            }
        }
        for sa in [&self.sa1, &self.sa2] {
            if sa.centroids == 0 || sa.k == 0 || !(sa.radius > 0.0) || sa.widths.len() < 2 {
                return Err(Error::Config("set abstraction needs centroids, k, radius > 0".into()));
            }
        }
        if [&self.fp1, &self.fp2, &self.head].iter().any(|w| w.len() < 2) {
            return Err(Error::Config("every MLP needs at least one layer".into()));
        }
        Ok(())
    }
}

/// Trainable parameters of the segmentation network.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    pub config: SegConfig,
    pub sa1: Mlp,
    pub sa2: Mlp,
    pub fp1: Mlp,
    pub fp2: Mlp,
    pub head: Mlp,
}

/// Sampling, grouping and interpolation structure of one cloud. Depends
/// only on point coordinates, so it can be reused across training epochs.
#[derive(Debug, Clone)]
pub struct Geometry {
    n: usize,
    sa1_offsets: Vec<usize>,
    sa1_members: Vec<usize>,
    sa1_rel: Array2<f64>,
    sa2_offsets: Vec<usize>,
    sa2_members: Vec<usize>,
    sa2_rel: Array2<f64>,
    fp1_weights: Vec<Vec<(usize, f64)>>,
    fp2_weights: Vec<Vec<(usize, f64)>>,
}

struct Grouping {
    centers: Vec<[f64; 3]>,
    offsets: Vec<usize>,
    members: Vec<usize>,
    rel: Array2<f64>,
}

fn group(coords: &[[f64; 3]], sa: &SaConfig) -> Result<Grouping> {
    let m = sa.centroids.min(coords.len());
    let centers: Vec<[f64; 3]> = farthest_point_sample(coords, m)?
        .into_iter()
        .map(|i| coords[i])
        .collect();
    let groups = ball_query(&centers, coords, sa.radius, sa.k);
    let mut offsets = vec![0];
    let mut members = Vec::new();
    let mut rel = Vec::new();
    for (c, g) in centers.iter().zip(&groups) {
        for &j in g {
            members.push(j);
            rel.extend((0..3).map(|d| (coords[j][d] - c[d]) / sa.radius));
        }
        offsets.push(members.len());
    }
    let rel = Array2::from_shape_vec((members.len(), 3), rel).expect("three columns");
    Ok(Grouping {
        centers,
        offsets,
        members,
        rel,
    })
}

impl Geometry {
    pub fn build(coords: &[[f64; 3]], config: &SegConfig) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let g1 = group(coords, &config.sa1)?;
        let g2 = group(&g1.centers, &config.sa2)?;
        Ok(Self {
            n: coords.len(),
            fp1_weights: interpolation_weights(&g1.centers, &g2.centers),
            fp2_weights: interpolation_weights(coords, &g1.centers),
            sa1_offsets: g1.offsets,
            sa1_members: g1.members,
            sa1_rel: g1.rel,
            sa2_offsets: g2.offsets,
            sa2_members: g2.members,
            sa2_rel: g2.rel,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

fn interpolate(weights: &[Vec<(usize, f64)>], src: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((weights.len(), src.ncols()));
    for (t, ws) in weights.iter().enumerate() {
        let mut row = out.row_mut(t);
        for &(s, w) in ws {
            row.scaled_add(w, &src.row(s));
        }
    }
    out
}

fn interpolate_backward(weights: &[Vec<(usize, f64)>], d_out: &Array2<f64>, sources: usize) -> Array2<f64> {
    let mut d = Array2::zeros((sources, d_out.ncols()));
    for (t, ws) in weights.iter().enumerate() {
        for &(s, w) in ws {
            d.row_mut(s).scaled_add(w, &d_out.row(t));
        }
    }
    d
}

/// Gathers `members` rows of `features`, replacing or appending relative
/// coordinates.
fn gather(features: &Array2<f64>, members: &[usize], rel: &Array2<f64>, replace_xyz: bool) -> Array2<f64> {
    let width = features.ncols() + if replace_xyz { 0 } else { 3 };
    let mut out = Array2::zeros((members.len(), width));
    for (r, &j) in members.iter().enumerate() {
        let mut row = out.row_mut(r);
        if replace_xyz {
            row.assign(&features.row(j));
            row.slice_mut(s![..3]).assign(&rel.row(r));
        } else {
            row.slice_mut(s![..features.ncols()]).assign(&features.row(j));
            row.slice_mut(s![features.ncols()..]).assign(&rel.row(r));
        }
    }
    out
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Forward activations needed by [`SegModel::backward`].
pub struct Forward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    sa1: MlpCache,
    sa1_arg: Array2<usize>,
    sa1_rows: usize,
    sa2: MlpCache,
    sa2_arg: Array2<usize>,
    sa2_rows: usize,
    n_sa1: usize,
    n_sa2: usize,
    fp1: MlpCache,
    fp2: MlpCache,
    head: MlpCache,
}

impl SegModel {
    pub fn new(config: SegConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, "init", 0);
        Ok(Self {
            sa1: Mlp::init(&config.sa1.widths, true, &mut rng),
            sa2: Mlp::init(&config.sa2.widths, true, &mut rng),
            fp1: Mlp::init(&config.fp1, true, &mut rng),
            fp2: Mlp::init(&config.fp2, true, &mut rng),
            head: Mlp::init(&config.head, false, &mut rng),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            sa1: self.sa1.zeros_like(),
            sa2: self.sa2.zeros_like(),
            fp1: self.fp1.zeros_like(),
            fp2: self.fp2.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    fn mlps(&self) -> [(&'static str, &Mlp); 5] {
        [
            ("sa1", &self.sa1),
            ("sa2", &self.sa2),
            ("fp1", &self.fp1),
            ("fp2", &self.fp2),
            ("head", &self.head),
        ]
    }

    /// Named parameter tensors in canonical order: (name, shape, values).
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (name, mlp) in self.mlps() {
            for (i, l) in mlp.layers.iter().enumerate() {
                out.push((
                    format!("{name}.{i}.weight"),
                    l.weight.shape().to_vec(),
                    l.weight.as_slice().expect("standard layout"),
                ));
                out.push((
                    format!("{name}.{i}.bias"),
                    l.bias.shape().to_vec(),
                    l.bias.as_slice().expect("standard layout"),
                ));
            }
        }
        out
    }

    /// Mutable parameter slices in the order of [`SegModel::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for mlp in [&mut self.sa1, &mut self.sa2, &mut self.fp1, &mut self.fp2, &mut self.head] {
            for l in &mut mlp.layers {
                out.push(l.weight.as_slice_mut().expect("standard layout"));
                out.push(l.bias.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    /// Normalized input matrix (n × 12).
    pub fn input_matrix(&self, cloud: &FeatureCloud) -> Array2<f64> {
        let (shift, scale) = (&self.config.feature_shift, &self.config.feature_scale);
        let mut x = Array2::zeros((cloud.len(), FEATURE_WIDTH));
        for (i, p) in cloud.points.iter().enumerate() {
            for (j, v) in p.row().into_iter().enumerate() {
                x[[i, j]] = (v - shift[j]) * scale[j];
            }
        }
        x
    }

    pub fn geometry(&self, cloud: &FeatureCloud) -> Result<Geometry> {
        Geometry::build(&cloud.positions(), &self.config)
    }

    /// Boundary probability of every point.
    pub fn forward(&self, cloud: &FeatureCloud) -> Result<Vec<f64>> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let geo = self.geometry(cloud)?;
        Ok(self.forward_with(&geo, &self.input_matrix(cloud)).probs)
    }

    pub fn forward_with(&self, geo: &Geometry, x: &Array2<f64>) -> Forward {
        let g1 = gather(x, &geo.sa1_members, &geo.sa1_rel, true);
        let sa1_rows = g1.nrows();
        let (h1, sa1) = self.sa1.forward_cached(g1);
        let (s1, sa1_arg) = max_pool(&h1, &geo.sa1_offsets);
        drop(h1);

        let g2 = gather(&s1, &geo.sa2_members, &geo.sa2_rel, false);
        let sa2_rows = g2.nrows();
        let (h2, sa2) = self.sa2.forward_cached(g2);
        let (s2, sa2_arg) = max_pool(&h2, &geo.sa2_offsets);
        drop(h2);

        let i1 = interpolate(&geo.fp1_weights, &s2);
        let (t1, fp1) = self.fp1.forward_cached(concat(&i1, &s1));
        let i2 = interpolate(&geo.fp2_weights, &t1);
        let (t2, fp2) = self.fp2.forward_cached(concat(&i2, x));
        let (z, head) = self.head.forward_cached(t2);

        let logits: Vec<f64> = z.column(0).to_vec();
        let probs = logits
            .iter()
            .map(|&v| sigmoid(v.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)))
            .collect();
        Forward {
            logits,
            probs,
            sa1,
            sa1_arg,
            sa1_rows,
            sa2,
            sa2_arg,
            sa2_rows,
            n_sa1: s1.nrows(),
            n_sa2: s2.nrows(),
            fp1,
            fp2,
            head,
        }
    }

    /// Smallest distance of any ReLU pre-activation or max-pool runner-up
    /// from its switching point.
    pub fn kink_margin(&self, geo: &Geometry, fwd: &Forward) -> f64 {
        let relu = [
            (&self.sa1, &fwd.sa1),
            (&self.sa2, &fwd.sa2),
            (&self.fp1, &fwd.fp1),
            (&self.fp2, &fwd.fp2),
            (&self.head, &fwd.head),
        ]
        .iter()
        .map(|(m, c)| m.relu_margin(c))
        .fold(f64::INFINITY, f64::min);
        relu.min(pool_margin(fwd.sa1.output(), &geo.sa1_offsets))
            .min(pool_margin(fwd.sa2.output(), &geo.sa2_offsets))
    }

    /// Parameter gradients given the loss gradient with respect to every
    /// output probability.
    pub fn backward(&self, geo: &Geometry, fwd: &Forward, d_probs: &[f64]) -> SegModel {
        let mut grads = self.zeros_like();
        let d_z: Vec<f64> = fwd
            .logits
            .iter()
            .zip(&fwd.probs)
            .zip(d_probs)
            .map(|((&z, &p), &g)| {
                if z.abs() > LOGIT_LIMIT {
                    0.0
                } else {
                    g * p * (1.0 - p)
                }
            })
            .collect();
        let d_z = Array2::from_shape_vec((d_z.len(), 1), d_z).expect("column");

        let d_t2 = self.head.backward(&fwd.head, d_z, &mut grads.head, true).expect("input grad");
        let d_c2 = self.fp2.backward(&fwd.fp2, d_t2, &mut grads.fp2, true).expect("input grad");
        let width_t1 = self.fp1.out_width();
        let d_i2 = d_c2.slice(s![.., ..width_t1]).to_owned();
        let d_t1 = interpolate_backward(&geo.fp2_weights, &d_i2, fwd.n_sa1);
        let d_c1 = self.fp1.backward(&fwd.fp1, d_t1, &mut grads.fp1, true).expect("input grad");
        let width_s2 = self.sa2.out_width();
        let d_i1 = d_c1.slice(s![.., ..width_s2]).to_owned();
        let mut d_s1 = d_c1.slice(s![.., width_s2..]).to_owned();
        let d_s2 = interpolate_backward(&geo.fp1_weights, &d_i1, fwd.n_sa2);
        let d_h2 = max_pool_backward(&fwd.sa2_arg, &d_s2, fwd.sa2_rows);
        let d_g2 = self.sa2.backward(&fwd.sa2, d_h2, &mut grads.sa2, true).expect("input grad");
        let width_s1 = self.sa1.out_width();
        for (r, &j) in geo.sa2_members.iter().enumerate() {
            d_s1.row_mut(j).scaled_add(1.0, &d_g2.slice(s![r, ..width_s1]));
        }
        let d_h1 = max_pool_backward(&fwd.sa1_arg, &d_s1, fwd.sa1_rows);
        self.sa1.backward(&fwd.sa1, d_h1, &mut grads.sa1, false);
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{FeaturePoint, DEFAULT_PREV_PROB};
    use rand::Rng;

    pub(crate) fn random_cloud(seed: u64, n: usize, extent: f64) -> FeatureCloud {
        let mut rng = substream(seed, "cloud", 0);
        let points = (0..n)
            .map(|_| {
                let x = rng.random_range(-extent..extent);
                let y = rng.random_range(1.0..2.0 * extent);
                let z = rng.random_range(-0.5..1.5);
                FeaturePoint {
                    x,
                    y,
                    z,
                    doppler: rng.random_range(-10.0..0.0),
                    snr: rng.random_range(0.0..30.0),
                    range: (x * x + y * y + z * z).sqrt(),
                    ego_speed: 10.0,
                    yaw_rate: 0.01,
                    frame_index: rng.random_range(0..3),
                    dev_x: rng.random_range(-1.0..1.0),
                    dev_y: rng.random_range(-1.0..1.0),
                    prev_prob: DEFAULT_PREV_PROB,
                    label: Some(rng.random_range(0..2)),
                }
            })
            .collect();
        FeatureCloud {
            timestamp: 0.0,
            pose: crate::geom::EgoPose::identity(),
            points,
        }
    }

    #[test]
    fn default_and_micro_configs_are_consistent() {
        SegConfig::default().validate().unwrap();
        SegConfig::micro().validate().unwrap();
        let mut bad = SegConfig::default();
        bad.fp1[0] = 100;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn outputs_are_strict_probabilities() {
        let model = SegModel::new(SegConfig::default(), 1).unwrap();
        let p = model.forward(&random_cloud(2, 300, 30.0)).unwrap();
        assert_eq!(p.len(), 300);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(matches!(
            model.forward(&random_cloud(2, 0, 30.0)),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn saturated_logits_stay_inside_unit_interval() {
        let mut model = SegModel::new(SegConfig::micro(), 1).unwrap();
        model.head.layers[1].bias[0] = 1e3;
        let p = model.forward(&random_cloud(2, 20, 10.0)).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn permutation_equivariance() {
        // Sparse cloud: every point is a centroid and no ball overflows k.
        let model = SegModel::new(SegConfig::default(), 3).unwrap();
        let cloud = random_cloud(5, 60, 40.0);
        let p = model.forward(&cloud).unwrap();
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let mut rng = substream(9, "perm", 0);
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let q = model.forward(&cloud.select(&order)).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert!((q[k] - p[i]).abs() < 1e-12, "{} vs {}", q[k], p[i]);
        }
    }

    #[test]
    fn duplicated_points_get_equal_probabilities() {
        let model = SegModel::new(SegConfig::default(), 4).unwrap();
        let mut cloud = random_cloud(6, 80, 20.0);
        let dup = cloud.points[17];
        cloud.points.push(dup);
        let p = model.forward(&cloud).unwrap();
        assert_eq!(p[17], p[80]);
    }
}
