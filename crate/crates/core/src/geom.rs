//! Coordinate frames, ego-motion compensation, nearest-neighbor queries and
//! point-set distance metrics.
//!
//! The ego frame has x to the right of the vehicle, y forward and z up,
//! originating at the radar. Poses are planar: yaw is measured
//! counter-clockwise and a yaw of zero aligns vehicle forward with world +y.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Planar vehicle pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl EgoPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// Pose plus the odometry the radar features need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: EgoPose,
    /// Forward speed along vehicle +y, m/s.
    pub speed: f64,
    /// rad/s, counter-clockwise positive.
    pub yaw_rate: f64,
}

/// One radar return in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Signed range rate, positive when the target recedes.
    pub doppler: f64,
    pub snr: f64,
    pub range: f64,
}

impl RadarPoint {
    /// Builds a point with `range` derived from the position.
    pub fn new(x: f64, y: f64, z: f64, doppler: f64, snr: f64) -> Self {
        Self {
            x,
            y,
            z,
            doppler,
            snr,
            range: (x * x + y * y + z * z).sqrt(),
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// A timestamped radar sweep with the ego state at capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarFrame {
    pub timestamp: f64,
    pub ego: EgoState,
    pub points: Vec<RadarPoint>,
    /// 1 marks a road-boundary return. Aligned with `points` when present.
    pub labels: Option<Vec<u8>>,
}

impl RadarFrame {
    pub fn boundary_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }
}

/// Ego-frame position to world frame: rotate by yaw, then translate.
pub fn ego_to_world(p: [f64; 3], pose: &EgoPose) -> [f64; 3] {
    let (s, c) = pose.yaw.sin_cos();
    [
        c * p[0] - s * p[1] + pose.x,
        s * p[0] + c * p[1] + pose.y,
        p[2],
    ]
}

/// Inverse of [`ego_to_world`].
pub fn world_to_ego(w: [f64; 3], pose: &EgoPose) -> [f64; 3] {
    let (s, c) = pose.yaw.sin_cos();
    let dx = w[0] - pose.x;
    let dy = w[1] - pose.y;
    [c * dx + s * dy, -s * dx + c * dy, w[2]]
}

/// Re-expresses positions observed from `prev` in the ego frame at `curr`.
pub fn motion_compensate(points: &[[f64; 3]], prev: &EgoPose, curr: &EgoPose) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|&p| world_to_ego(ego_to_world(p, prev), curr))
        .collect()
}

/// Result of a nearest-neighbor lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<const D: usize> {
    pub index: usize,
    pub distance: f64,
    /// `query − reference[index]`.
    pub vector: [f64; D],
}

#[inline]
pub(crate) fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

/// Closest reference point to `query`; ties go to the lowest index.
pub fn nearest<const D: usize>(query: &[f64; D], reference: &[[f64; D]]) -> Result<Neighbor<D>> {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, r) in reference.iter().enumerate() {
        let d = dist2(query, r);
        if d < best.1 {
            best = (i, d);
        }
    }
    if best.0 == usize::MAX {
        return Err(Error::EmptyReference);
    }
    let r = &reference[best.0];
    let mut vector = [0.0; D];
    for k in 0..D {
        vector[k] = query[k] - r[k];
    }
    Ok(Neighbor {
        index: best.0,
        distance: best.1.sqrt(),
        vector,
    })
}

/// [`nearest`] for every query.
pub fn nearest_neighbor<const D: usize>(
    queries: &[[f64; D]],
    reference: &[[f64; D]],
) -> Result<Vec<Neighbor<D>>> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    queries.iter().map(|q| nearest(q, reference)).collect()
}

fn directed_min_distances<const D: usize>(from: &[[f64; D]], to: &[[f64; D]]) -> Vec<f64> {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| dist2(a, b))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Symmetric Chamfer distance: the average of both directed mean
/// closest-point distances.
pub fn chamfer<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(directed_min_distances(a, b)) + mean(directed_min_distances(b, a))))
}

/// Hausdorff distance: the larger of both directed maximum closest-point
/// distances.
pub fn hausdorff<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    Ok(max(directed_min_distances(a, b)).max(max(directed_min_distances(b, a))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close3(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        (0..3).all(|k| (a[k] - b[k]).abs() < tol)
    }

    #[test]
    fn identity_pose_is_identity() {
        let p = [1.0, 2.0, 0.5];
        assert_eq!(ego_to_world(p, &EgoPose::identity()), p);
    }

    #[test]
    fn quarter_turn_maps_right_to_world_forward() {
        let w = ego_to_world([1.0, 0.0, 0.0], &EgoPose::new(0.0, 0.0, FRAC_PI_2));
        assert!(close3(w, [0.0, 1.0, 0.0], 1e-12), "{w:?}");
    }

    #[test]
    fn yaw_is_normalized() {
        assert!((EgoPose::new(0.0, 0.0, 3.0 * PI).yaw - PI).abs() < 1e-12);
        assert!((EgoPose::new(0.0, 0.0, -PI).yaw - PI).abs() < 1e-12);
        assert!((normalize_angle(-3.0 * FRAC_PI_2) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn forward_motion_compensation() {
        let prev = EgoPose::new(0.0, 0.0, 0.0);
        let curr = EgoPose::new(0.0, 2.0, 0.0);
        let out = motion_compensate(&[[0.0, 10.0, 0.0]], &prev, &curr);
        assert!(close3(out[0], [0.0, 8.0, 0.0], 1e-12));
        assert_eq!(motion_compensate(&[[3.0, 4.0, 1.0]], &prev, &prev), vec![[3.0, 4.0, 1.0]]);
    }

    #[test]
    fn yaw_change_matches_rotation_matrix_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let prev = EgoPose::new(0.0, 0.0, 0.0);
        let curr = EgoPose::new(0.0, 0.0, FRAC_PI_2);
        for _ in 0..50 {
            let p = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 0.3];
            // R(-π/2) · p
            let expected = [p[1], -p[0], p[2]];
            let got = motion_compensate(&[p], &prev, &curr)[0];
            assert!(close3(got, expected, 1e-9), "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn nearest_neighbor_examples() {
        let n = nearest_neighbor(&[[0.0, 0.0]], &[[0.0, 0.0], [5.0, 5.0]]).unwrap()[0];
        assert_eq!((n.index, n.distance, n.vector), (0, 0.0, [0.0, 0.0]));
        let n = nearest_neighbor(&[[1.0, 0.0]], &[[0.0, 0.0], [3.0, 0.0]]).unwrap()[0];
        assert_eq!((n.index, n.distance, n.vector), (0, 1.0, [1.0, 0.0]));
        let n = nearest_neighbor(&[[1.5, 0.0]], &[[0.0, 0.0], [3.0, 0.0]]).unwrap()[0];
        assert_eq!(n.index, 0);
        assert!(matches!(
            nearest_neighbor::<2>(&[[0.0, 0.0]], &[]),
            Err(Error::EmptyReference)
        ));
    }

    #[test]
    fn metric_examples() {
        let a = [[0.0, 0.0], [1.0, 2.0]];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap(), 5.0);
        assert_eq!(hausdorff(&[[0.0, 0.0], [10.0, 0.0]], &[[0.0, 0.0]]).unwrap(), 10.0);
        assert!(matches!(chamfer::<2>(&[], &a), Err(Error::UndefinedMetric)));
        assert!(matches!(hausdorff::<2>(&a, &[]), Err(Error::UndefinedMetric)));
    }

    fn pose() -> impl Strategy<Value = EgoPose> {
        (-500.0..500.0f64, -500.0..500.0f64, -PI..PI).prop_map(|(x, y, t)| EgoPose::new(x, y, t))
    }

    fn pt() -> impl Strategy<Value = [f64; 3]> {
        (-100.0..100.0f64, -100.0..100.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| [x, y, z])
    }

    fn set2(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y)| [x, y]), 1..max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn world_round_trip(p in pt(), pose in pose()) {
            let back = world_to_ego(ego_to_world(p, &pose), &pose);
            prop_assert!(close3(back, p, 1e-9));
        }

        #[test]
        fn compensation_with_swapped_poses_inverts(p in pt(), a in pose(), b in pose()) {
            let fwd = motion_compensate(&[p], &a, &b);
            let back = motion_compensate(&fwd, &b, &a);
            prop_assert!(close3(back[0], p, 1e-9));
        }

        #[test]
        fn metrics_symmetric_and_ordered(a in set2(12), b in set2(12)) {
            let cab = chamfer(&a, &b).unwrap();
            let hab = hausdorff(&a, &b).unwrap();
            prop_assert_eq!(cab, chamfer(&b, &a).unwrap());
            prop_assert_eq!(hab, hausdorff(&b, &a).unwrap());
            prop_assert!(cab >= 0.0);
            prop_assert!(hab >= cab);
        }
    }
}
