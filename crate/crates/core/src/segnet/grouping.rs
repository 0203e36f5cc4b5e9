//! Sampling, grouping and interpolation for set abstraction and feature
//! propagation.

use crate::error::{Error, Result};
use crate::geom::dist2;

/// Greedy farthest-point sampling starting from index 0; ties go to the
/// lowest index.
pub fn farthest_point_sample(coords: &[[f64; 3]], m: usize) -> Result<Vec<usize>> {
    let n = coords.len();
    if m > n || n == 0 {
        return Err(Error::SampleTooLarge {
            requested: m,
            available: n,
        });
    }
    let mut chosen = Vec::with_capacity(m);
    if m == 0 {
        return Ok(chosen);
    }
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = 0;
    for _ in 0..m {
        chosen.push(current);
        min_d[current] = f64::NEG_INFINITY;
        let mut next = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            if min_d[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(&coords[i], &coords[current]);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best {
                best = min_d[i];
                next = i;
            }
        }
        if next == usize::MAX {
            break;
        }
        current = next;
    }
    Ok(chosen)
}

/// For every centroid, the first `k` points (in index order) within
/// `radius`; an empty ball falls back to the single nearest point.
pub fn ball_query(centroids: &[[f64; 3]], coords: &[[f64; 3]], radius: f64, k: usize) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    centroids
        .iter()
        .map(|c| {
            let mut group = Vec::with_capacity(k);
            for (i, p) in coords.iter().enumerate() {
                if dist2(c, p) <= r2 {
                    group.push(i);
                    if group.len() == k {
                        break;
                    }
                }
            }
            if group.is_empty() {
                if let Ok(n) = crate::geom::nearest(c, coords) {
                    group.push(n.index);
                }
            }
            group
        })
        .collect()
}

/// Sparse inverse-squared-distance weights from up to three nearest sources
/// to each target; an exact hit uses that source alone.
pub fn interpolation_weights(targets: &[[f64; 3]], sources: &[[f64; 3]]) -> Vec<Vec<(usize, f64)>> {
    targets
        .iter()
        .map(|t| {
            let mut best: [(usize, f64); 3] = [(usize::MAX, f64::INFINITY); 3];
            for (i, s) in sources.iter().enumerate() {
                let d = dist2(t, s);
                if d < best[2].1 {
                    let mut slot = 2;
                    while slot > 0 && d < best[slot - 1].1 {
                        best[slot] = best[slot - 1];
                        slot -= 1;
                    }
                    best[slot] = (i, d);
                }
            }
            let found: Vec<(usize, f64)> = best.into_iter().filter(|b| b.0 != usize::MAX).collect();
            if let Some(&(i, d)) = found.first() {
                if d == 0.0 {
                    return vec![(i, 1.0)];
                }
            }
            let total: f64 = found.iter().map(|(_, d)| 1.0 / d).sum();
            found.into_iter().map(|(i, d)| (i, (1.0 / d) / total)).collect()
        })
        .collect()
}
