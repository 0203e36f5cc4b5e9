use std::collections::VecDeque;

use crate::geom::dist2;

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

fn neighbors(points: &[[f64; 2]], i: usize, eps2: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| dist2(&points[i], &points[j]) <= eps2)
        .collect()
}

/// Density-based clustering with inclusive `eps`; a point is core when its
/// closed neighborhood (itself included) holds at least `min_pts` points.
/// Seeds are visited in index order, so labels are numbered by each
/// cluster's lowest core index and a border point joins the first cluster
/// that reaches it.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let eps2 = eps * eps;
    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let hood = neighbors(points, i, eps2);
        if hood.len() < min_pts {
            continue;
        }
        labels[i] = next;
        let mut queue: VecDeque<usize> = hood.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = next;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let hood = neighbors(points, j, eps2);
            if hood.len() >= min_pts {
                queue.extend(hood);
            }
        }
        next += 1;
    }
    labels
}

/// Groups point indices by label in label order, skipping noise.
pub fn groups(labels: &[i32]) -> Vec<Vec<usize>> {
    let count = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut out = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            out[l as usize].push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    /// Reference partition: connected components of the core-point graph,
    /// numbered by lowest core index; each border point joins the adjacent
    /// component with the lowest number.
    pub(crate) fn brute_force_dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<i32> {
        let n = points.len();
        let close = |i: usize, j: usize| {
            let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
            d <= eps
        };
        let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..n {
            for j in 0..i {
                if core[i] && core[j] && close(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    let (lo, hi) = (a.min(b), a.max(b));
                    parent[hi] = lo;
                }
            }
        }
        let mut comp_label = vec![NOISE; n];
        let mut labels = vec![NOISE; n];
        let mut next = 0;
        for i in 0..n {
            if core[i] {
                let r = find(&mut parent, i);
                if comp_label[r] == NOISE {
                    comp_label[r] = next;
                    next += 1;
                }
                labels[i] = comp_label[r];
            }
        }
        for i in 0..n {
            if !core[i] {
                labels[i] = (0..n)
                    .filter(|&j| core[j] && close(i, j))
                    .map(|j| labels[j])
                    .min()
                    .unwrap_or(NOISE);
            }
        }
        labels
    }

    #[test]
    fn dbscan_examples() {
        let tight: Vec<[f64; 2]> = (0..5).map(|i| [i as f64 * 0.1, 0.0]).collect();
        assert_eq!(dbscan(&tight, 1.0, 3), vec![0; 5]);
        assert_eq!(dbscan(&[[0.0, 0.0]], 1.0, 3), vec![NOISE]);
        assert!(dbscan(&[], 1.0, 3).is_empty());
        // Distance exactly eps is a neighbor.
        assert_eq!(dbscan(&[[0.0, 0.0], [1.5, 0.0]], 1.5, 2), vec![0, 0]);
    }

    #[test]
    fn matches_brute_force_reference() {
        let mut rng = substream(17, "dbscan", 0);
        for trial in 0..120 {
            let n = rng.random_range(1..=150);
            let extent = rng.random_range(3.0..20.0);
            let mut pts: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random_range(0.0..extent), rng.random_range(0.0..extent)])
                .collect();
            // Lattice points create exact-eps distances.
            if trial % 4 == 0 {
                for p in &mut pts {
                    p[0] = p[0].round();
                    p[1] = p[1].round();
                }
            }
            let eps = rng.random_range(0.5..2.0);
            let min_pts = rng.random_range(1..6);
            let got = dbscan(&pts, if trial % 4 == 0 { 1.0 } else { eps }, min_pts);
            let want = brute_force_dbscan(&pts, if trial % 4 == 0 { 1.0 } else { eps }, min_pts);
            assert_eq!(got, want, "trial {trial}");
        }
    }

    #[test]
    fn groups_partition_non_noise_points() {
        let labels = [0, NOISE, 1, 0, 1, NOISE];
        assert_eq!(groups(&labels), vec![vec![0, 3], vec![2, 4]]);
        assert!(groups(&[NOISE, NOISE]).is_empty());
    }
}
