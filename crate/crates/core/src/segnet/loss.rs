use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::nearest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_dist: f64,
    pub dist_clamp: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_dist: 0.2,
            dist_clamp: 10.0,
            eps: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_dist >= 0.0) || !(self.dist_clamp > 0.0) || !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Config(
                "loss needs lambda_dist >= 0, dist_clamp > 0, 0 < eps < 0.5".into(),
            ));
        }
        Ok(())
    }
}

/// Loss value with its components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub bce: f64,
    pub dist: f64,
    pub total: f64,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 − eps]`.
pub fn bce_loss(probs: &[f64], labels: &[u8], eps: f64) -> Result<f64> {
    check_len(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Normalized, clamped distance from each point to its nearest true
/// boundary point in the ground plane; `None` when there is no boundary.
pub fn boundary_distances(coords: &[[f64; 2]], gt: &[[f64; 2]], cfg: &LossConfig) -> Option<Vec<f64>> {
    if gt.is_empty() {
        return None;
    }
    Some(
        coords
            .iter()
            .map(|c| {
                let d = nearest(c, gt).expect("non-empty reference").distance;
                d.min(cfg.dist_clamp) / cfg.dist_clamp
            })
            .collect(),
    )
}

/// Probability-weighted mean boundary distance `Σ p·d / (Σ p + eps)`.
pub fn distance_loss(probs: &[f64], coords: &[[f64; 2]], gt: &[[f64; 2]], cfg: &LossConfig) -> Result<f64> {
    check_len(probs.len(), coords.len())?;
    Ok(match boundary_distances(coords, gt, cfg) {
        None => 0.0,
        Some(d) => weighted_mean(probs, &d, cfg.eps),
    })
}

fn weighted_mean(probs: &[f64], d: &[f64], eps: f64) -> f64 {
    let num: f64 = probs.iter().zip(d).map(|(p, d)| p * d).sum();
    let den: f64 = probs.iter().sum();
    num / (den + eps)
}

/// `bce + lambda_dist · distance_loss`, taking the true boundary to be the
/// points labeled 1.
pub fn total_loss(probs: &[f64], labels: &[u8], coords: &[[f64; 2]], cfg: &LossConfig) -> Result<LossParts> {
    Ok(loss_and_gradient(probs, labels, coords, cfg)?.0)
}

/// Loss and its gradient with respect to each probability.
pub fn loss_and_gradient(
    probs: &[f64],
    labels: &[u8],
    coords: &[[f64; 2]],
    cfg: &LossConfig,
) -> Result<(LossParts, Vec<f64>)> {
    check_len(probs.len(), labels.len())?;
    check_len(probs.len(), coords.len())?;
    let n = probs.len().max(1) as f64;
    let bce = bce_loss(probs, labels, cfg.eps)?;
    let mut grad: Vec<f64> = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < cfg.eps || p > 1.0 - cfg.eps {
                0.0
            } else if y == 1 {
                -1.0 / (p * n)
            } else {
                1.0 / ((1.0 - p) * n)
            }
        })
        .collect();
    let gt: Vec<[f64; 2]> = coords
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(c, _)| *c)
        .collect();
    let mut dist = 0.0;
    if cfg.lambda_dist > 0.0 {
        if let Some(d) = boundary_distances(coords, &gt, cfg) {
            dist = weighted_mean(probs, &d, cfg.eps);
            let den = probs.iter().sum::<f64>() + cfg.eps;
            for (g, di) in grad.iter_mut().zip(&d) {
                *g += cfg.lambda_dist * (di - dist) / den;
            }
        }
    }
    let parts = LossParts {
        bce,
        dist,
        total: bce + cfg.lambda_dist * dist,
    };
    Ok((parts, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn bce_examples() {
        let eps = 1e-6;
        let perfect = bce_loss(&[1.0, 0.0, 1.0], &[1, 0, 1], eps).unwrap();
        assert!(perfect <= 2.0 * eps * eps.ln().abs());
        let half = bce_loss(&[0.5; 4], &[0, 1, 1, 0], eps).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(bce_loss(&[0.5], &[], eps), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn bce_matches_scalar_formula() {
        let mut rng = substream(1, "bce", 0);
        let p: Vec<f64> = (0..50).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<u8> = (0..50).map(|_| rng.random_range(0..2)).collect();
        let mut want = 0.0;
        for i in 0..50 {
            let yi = y[i] as f64;
            want += -(yi * p[i].ln() + (1.0 - yi) * (1.0 - p[i]).ln());
        }
        want /= 50.0;
        assert!((bce_loss(&p, &y, 1e-6).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn distance_loss_examples() {
        let cfg = LossConfig::default();
        let gt = [[0.0, 0.0], [1.0, 0.0]];
        assert_eq!(distance_loss(&[0.7, 0.9], &gt, &gt, &cfg).unwrap(), 0.0);
        let single = distance_loss(&[1.0], &[[5.0, 0.0]], &[[0.0, 0.0]], &cfg).unwrap();
        assert!((single - 0.5 / (1.0 + 1e-6)).abs() < 1e-15);
        assert_eq!(distance_loss(&[1.0], &[[5.0, 0.0]], &[], &cfg).unwrap(), 0.0);
        let far = distance_loss(&[1.0], &[[500.0, 0.0]], &[[0.0, 0.0]], &cfg).unwrap();
        assert!((far - 1.0 / (1.0 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn distance_loss_scale_invariance() {
        let cfg = LossConfig {
            eps: 1e-12,
            ..LossConfig::default()
        };
        let coords = [[0.0, 0.0], [3.0, 1.0], [7.0, -2.0]];
        let gt = [[0.0, 1.0]];
        let p = [0.9, 0.4, 0.6];
        let scaled: Vec<f64> = p.iter().map(|v| v * 0.1).collect();
        let a = distance_loss(&p, &coords, &gt, &cfg).unwrap();
        let b = distance_loss(&scaled, &coords, &gt, &cfg).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn total_loss_components() {
        let mut rng = substream(2, "total", 0);
        let cfg = LossConfig::default();
        let n = 40;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let c: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(0.0..30.0)])
            .collect();
        let gt: Vec<[f64; 2]> = (0..n).filter(|&i| y[i] == 1).map(|i| c[i]).collect();
        let t = total_loss(&p, &y, &c, &cfg).unwrap();
        let want = bce_loss(&p, &y, cfg.eps).unwrap() + 0.2 * distance_loss(&p, &c, &gt, &cfg).unwrap();
        assert!((t.total - want).abs() < 1e-12);
        let off = LossConfig {
            lambda_dist: 0.0,
            ..cfg
        };
        assert_eq!(
            total_loss(&p, &y, &c, &off).unwrap().total,
            bce_loss(&p, &y, cfg.eps).unwrap()
        );
        let perfect: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        assert!(total_loss(&perfect, &y, &c, &cfg).unwrap().total < 1e-4);
    }

    #[test]
    fn probability_gradient_matches_finite_differences() {
        let mut rng = substream(3, "lossgrad", 0);
        let cfg = LossConfig::default();
        let n = 25;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let c: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(0.0..30.0)])
            .collect();
        let (_, g) = loss_and_gradient(&p, &y, &c, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut a = p.clone();
            a[i] += h;
            let mut b = p.clone();
            b[i] -= h;
            let fd = (total_loss(&a, &y, &c, &cfg).unwrap().total - total_loss(&b, &y, &c, &cfg).unwrap().total)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }

    proptest! {
        #[test]
        fn losses_are_bounded_and_finite(
            pts in proptest::collection::vec((0.0f64..=1.0, 0u8..2, -50.0f64..50.0, -50.0f64..50.0), 1..40)
        ) {
            let cfg = LossConfig::default();
            let p: Vec<f64> = pts.iter().map(|t| t.0).collect();
            let y: Vec<u8> = pts.iter().map(|t| t.1).collect();
            let c: Vec<[f64; 2]> = pts.iter().map(|t| [t.2, t.3]).collect();
            let gt: Vec<[f64; 2]> = (0..c.len()).filter(|&i| y[i] == 1).map(|i| c[i]).collect();
            let d = distance_loss(&p, &c, &gt, &cfg).unwrap();
            prop_assert!(d.is_finite() && (0.0..=1.0).contains(&d));
            let t = total_loss(&p, &y, &c, &cfg).unwrap();
            prop_assert!(t.total.is_finite() && t.total >= 0.0);
        }
    }
}
