use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::curvefit::dbscan::{dbscan, groups};
use crate::curvefit::gpr::{GpPosterior, GprConfig};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Spacing of the curve evaluation grid.
pub const GRID_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub y_scale: f64,
    /// Neighborhood radius in the y-scaled plane.
    pub eps: f64,
    pub min_pts: usize,
    pub gap_split: f64,
    pub subsample_max: usize,
    /// Largest allowed full interval width `2 · ci_half_width`.
    pub ci_threshold: f64,
    pub max_recluster_depth: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            y_scale: 5.0,
            eps: 1.5,
            min_pts: 3,
            gap_split: 6.0,
            subsample_max: 120,
            ci_threshold: 2.0,
            max_recluster_depth: 2,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.y_scale >= 1.0)
            || !(self.eps > 0.0)
            || self.min_pts == 0
            || !(self.gap_split > 0.0)
            || self.subsample_max < 2
            || !(self.ci_threshold > 0.0)
        {
            return Err(Error::Config(
                "cluster needs y_scale >= 1, eps > 0, min_pts >= 1, gap_split > 0, subsample_max >= 2, ci_threshold > 0"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Fitted boundary `x = f(y)` on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub cluster_id: usize,
    #[serde(skip)]
    pub members: Vec<usize>,
    pub y_grid: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub ci_half_width: Vec<f64>,
    #[serde(skip)]
    pub jitter: f64,
}

impl BoundaryCurve {
    pub fn max_ci_width(&self) -> f64 {
        2.0 * self.ci_half_width.iter().copied().fold(0.0, f64::max)
    }
}

/// DBSCAN on `(x, y / y_scale)` with the given radius; clusters in label
/// order as lists of indices into `points`.
pub fn cluster_with_eps(points: &[[f64; 2]], indices: &[usize], eps: f64, cfg: &ClusterConfig) -> Vec<Vec<usize>> {
    let scaled: Vec<[f64; 2]> = indices
        .iter()
        .map(|&i| [points[i][0], points[i][1] / cfg.y_scale])
        .collect();
    groups(&dbscan(&scaled, eps, cfg.min_pts))
        .into_iter()
        .map(|g| g.into_iter().map(|k| indices[k]).collect())
        .collect()
}

pub fn cluster_boundaries(points: &[[f64; 2]], cfg: &ClusterConfig) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..points.len()).collect();
    cluster_with_eps(points, &all, cfg.eps, cfg)
}

/// Sorts members by y and cuts wherever consecutive y values differ by more
/// than `gap_split`.
pub fn split_on_gap(points: &[[f64; 2]], members: &[usize], gap_split: f64) -> Vec<Vec<usize>> {
    let mut sorted = members.to_vec();
    sorted.sort_by(|&a, &b| points[a][1].total_cmp(&points[b][1]).then(a.cmp(&b)));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (k, &i) in sorted.iter().enumerate() {
        if k == 0 || points[i][1] - points[sorted[k - 1]][1] > gap_split {
            out.push(Vec::new());
        }
        out.last_mut().expect("segment started").push(i);
    }
    out
}

/// Grid from the smallest to the largest member y at [`GRID_STEP`].
pub fn y_grid(lo: f64, hi: f64) -> Vec<f64> {
    let steps = ((hi - lo) / GRID_STEP + 1e-9).floor().max(0.0) as usize;
    (0..=steps).map(|k| lo + k as f64 * GRID_STEP).collect()
}

/// Fits one cluster, subsampling to at most `subsample_max` members.
pub fn gpr_fit(
    points: &[[f64; 2]],
    members: &[usize],
    gpr: &GprConfig,
    cfg: &ClusterConfig,
) -> Result<BoundaryCurve> {
    if members.len() < 2 {
        return Err(Error::SampleTooLarge {
            requested: 2,
            available: members.len(),
        });
    }
    let chosen: Vec<usize> = if members.len() > cfg.subsample_max {
        let first = members.iter().copied().min().unwrap_or(0) as u64;
        let mut rng = substream(cfg.seed, "subsample", first << 16 | members.len() as u64);
        let mut pick = sample(&mut rng, members.len(), cfg.subsample_max).into_vec();
        pick.sort_unstable();
        pick.into_iter().map(|k| members[k]).collect()
    } else {
        members.to_vec()
    };
    let ys: Vec<f64> = chosen.iter().map(|&i| points[i][1]).collect();
    let xs: Vec<f64> = chosen.iter().map(|&i| points[i][0]).collect();
    let post = GpPosterior::fit(&ys, &xs, gpr)?;
    let lo = members.iter().map(|&i| points[i][1]).fold(f64::INFINITY, f64::min);
    let hi = members.iter().map(|&i| points[i][1]).fold(f64::NEG_INFINITY, f64::max);
    let grid = y_grid(lo, hi);
    let mut mean_x = Vec::with_capacity(grid.len());
    let mut ci = Vec::with_capacity(grid.len());
    let noise = post.noise_level();
    for &y in &grid {
        let (m, v) = post.predict(y);
        mean_x.push(m);
        ci.push(crate::curvefit::gpr::Z95 * (v + noise).sqrt());
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    Ok(BoundaryCurve {
        cluster_id: 0,
        members: sorted,
        y_grid: grid,
        mean_x,
        ci_half_width: ci,
        jitter: post.jitter,
    })
}

fn fit_segment(
    points: &[[f64; 2]],
    members: Vec<usize>,
    eps: f64,
    depth: usize,
    gpr: &GprConfig,
    cfg: &ClusterConfig,
    out: &mut Vec<BoundaryCurve>,
) -> Result<()> {
    if members.len() < cfg.min_pts.max(2) {
        return Ok(());
    }
    let curve = gpr_fit(points, &members, gpr, cfg)?;
    if curve.max_ci_width() <= cfg.ci_threshold || depth >= cfg.max_recluster_depth {
        out.push(curve);
        return Ok(());
    }
    let eps = eps / 2.0;
    for cluster in cluster_with_eps(points, &members, eps, cfg) {
        for seg in split_on_gap(points, &cluster, cfg.gap_split) {
            fit_segment(points, seg, eps, depth + 1, gpr, cfg, out)?;
        }
    }
    Ok(())
}

/// Clusters boundary points, splits clusters at longitudinal gaps and fits
/// each segment, re-clustering uncertain fits with a halved radius. Curves
/// are ordered by the smallest y, then smallest x, of their members.
pub fn fit_boundaries(points: &[[f64; 2]], cfg: &ClusterConfig, gpr: &GprConfig) -> Result<Vec<BoundaryCurve>> {
    cfg.validate()?;
    gpr.validate()?;
    let mut curves = Vec::new();
    for cluster in cluster_boundaries(points, cfg) {
        for seg in split_on_gap(points, &cluster, cfg.gap_split) {
            fit_segment(points, seg, cfg.eps, 0, gpr, cfg, &mut curves)?;
        }
    }
    let key = |c: &BoundaryCurve| {
        let y = c.members.iter().map(|&i| points[i][1]).fold(f64::INFINITY, f64::min);
        let x = c.members.iter().map(|&i| points[i][0]).fold(f64::INFINITY, f64::min);
        (y, x)
    };
    curves.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    for (id, c) in curves.iter_mut().enumerate() {
        c.cluster_id = id;
    }
    Ok(curves)
}

/// Curve export as a JSON array of `{cluster_id, y_grid, mean_x, ci_half_width}`.
pub fn curves_to_json(curves: &[BoundaryCurve]) -> Result<String> {
    Ok(serde_json::to_string(curves)?)
}
