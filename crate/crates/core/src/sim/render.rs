use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{ego_to_world, world_to_ego, EgoState, RadarFrame, RadarPoint};
use crate::rng::{substream, Rng};
use crate::sim::scenario::{Scenario, FRAME_PERIOD};

/// Ground-truth labeling tolerance, m.
pub const DEFAULT_LABEL_TAU: f64 = 0.5;

const GHOST_DOPPLER_MAX: f64 = 15.0;
const GHOST_Z: (f64, f64) = (-2.5, 4.0);

/// Sensor realism knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarModel {
    pub max_range: f64,
    /// Half-width of the azimuth field of view, rad.
    pub azimuth_fov: f64,
    /// Lateral and longitudinal position noise, m.
    pub position_noise_sigma: f64,
    pub vertical_noise_sigma: f64,
    pub doppler_noise_sigma: f64,
    pub snr_base_db: f64,
    pub snr_atten_db_per_m: f64,
    pub snr_noise_db: f64,
    pub boundary_sample_spacing: f64,
    pub dropout_prob: f64,
    /// Returns drawn from each vehicle footprint.
    pub mover_returns: usize,
}

impl Default for RadarModel {
    fn default() -> Self {
        Self {
            max_range: 80.0,
            azimuth_fov: 60f64.to_radians(),
            position_noise_sigma: 0.15,
            vertical_noise_sigma: 0.3,
            doppler_noise_sigma: 0.2,
            snr_base_db: 30.0,
            snr_atten_db_per_m: 0.2,
            snr_noise_db: 2.0,
            boundary_sample_spacing: 1.0,
            dropout_prob: 0.3,
            mover_returns: 6,
        }
    }
}

impl RadarModel {
    /// All noise sources and dropout disabled.
    pub fn noiseless() -> Self {
        Self {
            position_noise_sigma: 0.0,
            vertical_noise_sigma: 0.0,
            doppler_noise_sigma: 0.0,
            snr_noise_db: 0.0,
            dropout_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.position_noise_sigma,
            self.vertical_noise_sigma,
            self.doppler_noise_sigma,
            self.snr_noise_db,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("radar noise sigmas must be >= 0".into()));
        }
        if !(self.max_range > 0.0) || !(self.azimuth_fov > 0.0) {
            return Err(Error::Config("radar range and fov must be > 0".into()));
        }
        if !(self.boundary_sample_spacing > 0.0) || !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(
                "boundary spacing must be > 0 and dropout in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Whether an ego-frame position lies inside range and azimuth limits.
    pub fn in_fov(&self, p: [f64; 3]) -> bool {
        let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        range > 0.0 && range <= self.max_range && p[0].atan2(p[1]).abs() <= self.azimuth_fov
    }
}

/// What produced a rendered return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Boundary(usize),
    Overhead(usize),
    Mover(usize),
    Ghost,
}

/// A labeled frame together with the generator's per-point source tags.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub frame: RadarFrame,
    pub sources: Vec<Source>,
}

struct Noise {
    xy: Normal<f64>,
    z: Normal<f64>,
    doppler: Normal<f64>,
    snr: Normal<f64>,
}

impl Noise {
    fn new(radar: &RadarModel) -> Self {
        let n = |s: f64| Normal::new(0.0, s).expect("sigma validated");
        Self {
            xy: n(radar.position_noise_sigma),
            z: n(radar.vertical_noise_sigma),
            doppler: n(radar.doppler_noise_sigma),
            snr: n(radar.snr_noise_db),
        }
    }
}

/// Ego-relative radial velocity of an ego-frame point moving with world
/// velocity `v_world`; positive when receding.
fn radial_velocity(p: [f64; 3], v_world: [f64; 2], ego: &EgoState) -> f64 {
    let (s, c) = ego.pose.yaw.sin_cos();
    let vx = c * v_world[0] + s * v_world[1];
    let vy = -s * v_world[0] + c * v_world[1] - ego.speed;
    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if r == 0.0 {
        0.0
    } else {
        (vx * p[0] + vy * p[1]) / r
    }
}

struct Emitter<'a> {
    radar: &'a RadarModel,
    ego: EgoState,
    noise: Noise,
    points: Vec<(RadarPoint, Source)>,
}

impl Emitter<'_> {
    /// Adds a return from a true ego-frame reflector position, applying
    /// dropout, noise and field-of-view checks.
    fn emit(&mut self, rng: &mut Rng, truth: [f64; 3], v_world: [f64; 2], snr_offset: f64, src: Source) {
        if !self.radar.in_fov(truth) || rng.random::<f64>() < self.radar.dropout_prob {
            return;
        }
        let doppler = radial_velocity(truth, v_world, &self.ego) + self.noise.doppler.sample(rng);
        let x = truth[0] + self.noise.xy.sample(rng);
        let y = truth[1] + self.noise.xy.sample(rng);
        let z = truth[2] + self.noise.z.sample(rng);
        let snr_noise = self.noise.snr.sample(rng);
        self.push(x, y, z, doppler, snr_offset + snr_noise, src);
    }

    fn push(&mut self, x: f64, y: f64, z: f64, doppler: f64, snr_offset: f64, src: Source) {
        if !self.radar.in_fov([x, y, z]) {
            return;
        }
        let mut p = RadarPoint::new(x, y, z, doppler, 0.0);
        p.snr =
            (self.radar.snr_base_db - self.radar.snr_atten_db_per_m * p.range + snr_offset).max(0.0);
        self.points.push((p, src));
    }
}

/// Renders the radar view at time `t` with ground-truth labels.
pub fn render_frame(scenario: &Scenario, t: f64, radar: &RadarModel, rng: &mut Rng) -> Result<RenderedFrame> {
    radar.validate()?;
    let ego = scenario.state_at(t)?;
    let mut em = Emitter {
        radar,
        ego,
        noise: Noise::new(radar),
        points: Vec::new(),
    };
    let to_ego = |w: [f64; 3]| world_to_ego(w, &ego.pose);

    for (bi, b) in scenario.boundaries.iter().enumerate() {
        for r in b.reflectors(radar.boundary_sample_spacing) {
            em.emit(rng, to_ego([r[0], r[1], b.height]), [0.0, 0.0], 0.0, Source::Boundary(bi));
        }
    }
    for (oi, &o) in scenario.overheads.iter().enumerate() {
        em.emit(rng, to_ego(o), [0.0, 0.0], 3.0, Source::Overhead(oi));
    }
    for (mi, m) in scenario.movers.iter().enumerate() {
        let (c, v) = scenario.mover_kinematics(mi, t);
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let d = if speed > 0.0 { [v[0] / speed, v[1] / speed] } else { [0.0, 1.0] };
        let n = [d[1], -d[0]];
        for _ in 0..radar.mover_returns {
            let u = rng.random_range(-0.5..0.5) * m.extent[0];
            let w = rng.random_range(-0.5..0.5) * m.extent[1];
            let z = rng.random_range(0.3..1.5);
            let world = [c[0] + u * d[0] + w * n[0], c[1] + u * d[1] + w * n[1], z];
            em.emit(rng, to_ego(world), v, 6.0, Source::Mover(mi));
        }
    }
    if scenario.ghost_rate > 0.0 {
        let count = Poisson::new(scenario.ghost_rate)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng) as usize;
        for _ in 0..count {
            let r = rng.random_range(1.0..radar.max_range * radar.max_range).sqrt();
            let az = rng.random_range(-radar.azimuth_fov..=radar.azimuth_fov);
            let z = rng.random_range(GHOST_Z.0..GHOST_Z.1);
            let doppler = rng.random_range(-GHOST_DOPPLER_MAX..=GHOST_DOPPLER_MAX);
            let snr_noise = em.noise.snr.sample(rng);
            em.push(r * az.sin(), r * az.cos(), z, doppler, snr_noise - 8.0, Source::Ghost);
        }
    }

    let mut points = em.points;
    points.sort_by(|a, b| a.0.range.total_cmp(&b.0.range));
    let (points, sources): (Vec<_>, Vec<_>) = points.into_iter().unzip();
    let mut frame = RadarFrame {
        timestamp: t,
        ego,
        points,
        labels: None,
    };
    frame.labels = Some(label_points(&frame, &sources, scenario, DEFAULT_LABEL_TAU));
    Ok(RenderedFrame { frame, sources })
}

/// 1 for returns of a boundary reflector that still lie within `tau` of
/// their source polyline after noise, 0 otherwise.
pub fn label_points(frame: &RadarFrame, sources: &[Source], scenario: &Scenario, tau: f64) -> Vec<u8> {
    frame
        .points
        .iter()
        .zip(sources)
        .map(|(p, s)| match *s {
            Source::Boundary(b) => {
                let w = ego_to_world(p.position(), &frame.ego.pose);
                u8::from(scenario.boundaries[b].distance([w[0], w[1]]) <= tau)
            }
            _ => 0,
        })
        .collect()
}

/// Renders the first `n_frames` trajectory samples, each from its own
/// random substream of `seed`.
pub fn simulate(scenario: &Scenario, radar: &RadarModel, n_frames: usize, seed: u64) -> Result<Vec<RadarFrame>> {
    (0..n_frames)
        .map(|k| {
            let mut rng = substream(seed, "sim", k as u64);
            let t = scenario.span().0 + k as f64 * FRAME_PERIOD;
            render_frame(scenario, t, radar, &mut rng).map(|r| r.frame)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{EgoPose, RadarFrame};
    use crate::sim::scenario::{build_scenario, build_scenario_frames, Boundary, ScenarioKind, TimedState};

    fn lone_reflector_scene(point: [f64; 3], speed: f64) -> Scenario {
        let mut s = build_scenario_frames(ScenarioKind::Straight, 0, 2);
        s.boundaries = vec![Boundary {
            vertices: vec![[point[0], point[1]], [point[0], point[1] + 0.5]],
            height: point[2],
        }];
        s.movers.clear();
        s.overheads.clear();
        s.ghost_rate = 0.0;
        s.ego_trajectory = (0..2)
            .map(|k| TimedState {
                t: k as f64 * 0.1,
                state: EgoState {
                    pose: EgoPose::identity(),
                    speed,
                    yaw_rate: 0.0,
                },
            })
            .collect();
        s
    }

    fn render_one(s: &Scenario) -> RadarFrame {
        let mut radar = RadarModel::noiseless();
        radar.boundary_sample_spacing = 10.0;
        radar.azimuth_fov = 70f64.to_radians();
        render_frame(s, 0.0, &radar, &mut substream(0, "t", 0)).unwrap().frame
    }

    #[test]
    fn static_doppler_dead_ahead() {
        let f = render_one(&lone_reflector_scene([0.0, 20.0, 0.0], 10.0));
        assert_eq!(f.points.len(), 1);
        assert_eq!(f.points[0].doppler, -10.0);
    }

    #[test]
    fn static_doppler_at_sixty_degrees() {
        let x = 20.0 * 60f64.to_radians().sin();
        let f = render_one(&lone_reflector_scene([x, 10.0, 0.0], 10.0));
        assert!((f.points[0].doppler + 5.0).abs() < 1e-9, "{}", f.points[0].doppler);
    }

    #[test]
    fn stationary_ego_sees_zero_static_doppler() {
        let mut s = build_scenario_frames(ScenarioKind::Straight, 4, 3);
        s.movers.clear();
        s.ghost_rate = 0.0;
        for st in &mut s.ego_trajectory {
            st.state.speed = 0.0;
        }
        let f = render_frame(&s, 0.1, &RadarModel::default(), &mut substream(1, "t", 0))
            .unwrap()
            .frame;
        assert!(!f.points.is_empty());
        assert!(f.points.iter().all(|p| p.doppler.abs() < 1.5));
    }

    #[test]
    fn out_of_span_time_is_rejected() {
        let s = build_scenario_frames(ScenarioKind::Straight, 4, 3);
        let r = render_frame(&s, 10.0, &RadarModel::default(), &mut substream(1, "t", 0));
        assert!(matches!(r, Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn rendered_points_satisfy_range_and_fov() {
        let radar = RadarModel::default();
        for kind in ScenarioKind::ALL {
            let s = build_scenario_frames(kind, 9, 40);
            for f in simulate(&s, &radar, 40, 9).unwrap() {
                for p in &f.points {
                    assert!((p.range - (p.x * p.x + p.y * p.y + p.z * p.z).sqrt()).abs() < 1e-6);
                    assert!(p.snr >= 0.0);
                    assert!(radar.in_fov(p.position()));
                }
                assert_eq!(f.labels.as_ref().unwrap().len(), f.points.len());
            }
        }
    }

    #[test]
    fn noiseless_static_doppler_is_exact_and_labels_match_sources() {
        let radar = RadarModel::noiseless();
        for kind in ScenarioKind::ALL {
            let s = build_scenario_frames(kind, 2, 30);
            for k in [0usize, 17, 29] {
                let r = render_frame(&s, k as f64 * 0.1, &radar, &mut substream(2, "sim", k as u64)).unwrap();
                let speed = r.frame.ego.speed;
                for (i, (p, src)) in r.frame.points.iter().zip(&r.sources).enumerate() {
                    if matches!(src, Source::Boundary(_) | Source::Overhead(_)) {
                        let expected = -speed * p.y / (p.x * p.x + p.y * p.y).sqrt();
                        assert!((p.doppler - expected).abs() < 1e-12);
                    }
                    let tag = u8::from(matches!(src, Source::Boundary(_)));
                    assert_eq!(r.frame.labels.as_ref().unwrap()[i], tag);
                }
            }
        }
    }

    #[test]
    fn labeling_tolerance() {
        let s = lone_reflector_scene([2.0, 20.0, 0.5], 10.0);
        let mut frame = render_one(&s);
        let sources = vec![Source::Boundary(0), Source::Ghost];
        frame.points.push(RadarPoint::new(12.0, 20.0, 0.5, 0.0, 5.0));
        assert_eq!(label_points(&frame, &sources, &s, 0.5), vec![1, 0]);
        frame.points[0].x += 0.6;
        assert_eq!(label_points(&frame, &sources, &s, 0.5), vec![0, 0]);
    }

    #[test]
    fn fork_frames_contain_both_classes() {
        let s = build_scenario_frames(ScenarioKind::Fork, 7, 100);
        for f in simulate(&s, &RadarModel::default(), 100, 7).unwrap() {
            let labels = f.labels.unwrap();
            assert!(labels.contains(&0) && labels.contains(&1));
        }
    }

    #[test]
    fn intersection_frames_show_the_gap() {
        let s = build_scenario(ScenarioKind::Intersection, 8);
        let f = simulate(&s, &RadarModel::default(), 1, 8).unwrap().remove(0);
        let labels = f.labels.unwrap();
        let mut left: Vec<f64> = f
            .points
            .iter()
            .zip(&labels)
            .filter(|(p, &l)| l == 1 && p.x < 0.0)
            .map(|(p, _)| p.y)
            .collect();
        left.sort_by(f64::total_cmp);
        let max_gap = left.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(max_gap > 6.0, "{max_gap}");
    }
}
