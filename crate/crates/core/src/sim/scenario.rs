use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize_angle, EgoPose, EgoState};
use crate::rng::substream;

/// Sampling period of ego trajectories.
pub const FRAME_PERIOD: f64 = 0.1;
/// Trajectory length used by [`build_scenario`].
pub const DEFAULT_SCENARIO_FRAMES: usize = 600;
/// Longitudinal extent of the cross street in `intersection` and `urban`.
pub const INTERSECTION_GAP: f64 = 7.0;

const HALF_ROAD: f64 = 4.0;
const VERTEX_STEP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Straight,
    Curved,
    Fork,
    Intersection,
    Urban,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Straight,
        ScenarioKind::Curved,
        ScenarioKind::Fork,
        ScenarioKind::Intersection,
        ScenarioKind::Urban,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Straight => "straight",
            ScenarioKind::Curved => "curved",
            ScenarioKind::Fork => "fork",
            ScenarioKind::Intersection => "intersection",
            ScenarioKind::Urban => "urban",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Road centerline as a function x = f(y) in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Centerline {
    Straight,
    /// x = amplitude · (1 − cos(2πy / period))
    Sinusoid { amplitude: f64, period: f64 },
}

impl Centerline {
    pub fn x(&self, y: f64) -> f64 {
        match *self {
            Centerline::Straight => 0.0,
            Centerline::Sinusoid { amplitude, period } => {
                amplitude * (1.0 - (2.0 * std::f64::consts::PI * y / period).cos())
            }
        }
    }

    pub fn slope(&self, y: f64) -> f64 {
        match *self {
            Centerline::Straight => 0.0,
            Centerline::Sinusoid { amplitude, period } => {
                let w = 2.0 * std::f64::consts::PI / period;
                amplitude * w * (w * y).sin()
            }
        }
    }

    pub fn curvature_term(&self, y: f64) -> f64 {
        match *self {
            Centerline::Straight => 0.0,
            Centerline::Sinusoid { amplitude, period } => {
                let w = 2.0 * std::f64::consts::PI / period;
                amplitude * w * w * (w * y).cos()
            }
        }
    }
}

/// A static boundary reflector line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    /// World-frame (x, y) vertices, at least two.
    pub vertices: Vec<[f64; 2]>,
    /// Reflector height above the radar plane, m.
    pub height: f64,
}

impl Boundary {
    fn from_fn(y0: f64, y1: f64, height: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (((y1 - y0) / VERTEX_STEP).ceil() as usize).max(1);
        let vertices = (0..=n)
            .map(|i| {
                let y = y0 + (y1 - y0) * i as f64 / n as f64;
                [f(y), y]
            })
            .collect();
        Self { vertices, height }
    }

    pub fn length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// Points at arc-length multiples of `spacing` from the first vertex.
    pub fn reflectors(&self, spacing: f64) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        let mut next = 0.0;
        let mut walked = 0.0;
        for w in self.vertices.windows(2) {
            let (a, b) = (w[0], w[1]);
            let seg = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if seg == 0.0 {
                continue;
            }
            while next <= walked + seg {
                let u = (next - walked) / seg;
                out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
                next += spacing;
            }
            walked += seg;
        }
        out
    }

    /// Planar distance from `p` to the polyline.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let u = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + u * dx, a[1] + u * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// A vehicle driving along the road at a fixed lateral offset from the
/// centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub lateral_offset: f64,
    /// World y at t = 0.
    pub y0: f64,
    /// Signed longitudinal speed, m/s (negative = oncoming).
    pub speed: f64,
    /// Footprint (length, width), m.
    pub extent: [f64; 2],
    /// When set, the mover crosses the road along world x at this y
    /// instead of following the centerline.
    pub crossing_y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub t: f64,
    pub state: EgoState,
}

/// Ground-truth world for one synthetic drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub centerline: Centerline,
    pub boundaries: Vec<Boundary>,
    pub ego_trajectory: Vec<TimedState>,
    pub movers: Vec<Mover>,
    /// World positions of overhead reflectors (z > 3 m).
    pub overheads: Vec<[f64; 3]>,
    /// Expected ghost returns per frame.
    pub ghost_rate: f64,
}

impl Scenario {
    pub fn span(&self) -> (f64, f64) {
        let first = self.ego_trajectory.first().map_or(0.0, |s| s.t);
        let last = self.ego_trajectory.last().map_or(0.0, |s| s.t);
        (first, last)
    }

    /// Ego state at `t`, linearly interpolated between trajectory samples.
    pub fn state_at(&self, t: f64) -> Result<EgoState> {
        let (start, end) = self.span();
        if self.ego_trajectory.is_empty() || !(t >= start - 1e-9 && t <= end + 1e-9) {
            return Err(Error::TimeOutOfRange { t, start, end });
        }
        let pos = ((t - start) / FRAME_PERIOD).max(0.0);
        let last = self.ego_trajectory.len() - 1;
        if (pos - pos.round()).abs() < 1e-6 {
            return Ok(self.ego_trajectory[(pos.round() as usize).min(last)].state);
        }
        let i = (pos.floor() as usize).min(last);
        let frac = pos - i as f64;
        let a = &self.ego_trajectory[i];
        if i + 1 > last {
            return Ok(a.state);
        }
        let b = &self.ego_trajectory[i + 1];
        let lerp = |u: f64, v: f64| u + frac * (v - u);
        let dyaw = normalize_angle(b.state.pose.yaw - a.state.pose.yaw);
        Ok(EgoState {
            pose: EgoPose::new(
                lerp(a.state.pose.x, b.state.pose.x),
                lerp(a.state.pose.y, b.state.pose.y),
                a.state.pose.yaw + frac * dyaw,
            ),
            speed: lerp(a.state.speed, b.state.speed),
            yaw_rate: lerp(a.state.yaw_rate, b.state.yaw_rate),
        })
    }

    /// World position and velocity of mover `i` at `t`.
    pub fn mover_kinematics(&self, i: usize, t: f64) -> ([f64; 2], [f64; 2]) {
        let m = &self.movers[i];
        match m.crossing_y {
            Some(y) => ([m.lateral_offset + m.speed * t, y], [m.speed, 0.0]),
            None => {
                let y = m.y0 + m.speed * t;
                let x = self.centerline.x(y) + m.lateral_offset;
                ([x, y], [self.centerline.slope(y) * m.speed, m.speed])
            }
        }
    }
}

/// Builds the scenario with the default trajectory length.
pub fn build_scenario(kind: ScenarioKind, seed: u64) -> Scenario {
    build_scenario_frames(kind, seed, DEFAULT_SCENARIO_FRAMES)
}

/// Builds a scenario whose ego trajectory covers `frames` samples.
pub fn build_scenario_frames(kind: ScenarioKind, seed: u64, frames: usize) -> Scenario {
    let mut rng = substream(seed, "scenario", kind as u64);
    let frames = frames.max(1);
    let speed = rng.random_range(8.0..14.0);
    let centerline = match kind {
        ScenarioKind::Curved => {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Centerline::Sinusoid {
                amplitude: sign * rng.random_range(4.0..8.0),
                period: rng.random_range(150.0..250.0),
            }
        }
        _ => Centerline::Straight,
    };
    let ego_trajectory = ego_trajectory(&centerline, speed, frames);
    let y_end = ego_trajectory.last().map_or(0.0, |s| s.state.pose.y) + 120.0;
    let y_start = -30.0;
    let layout: f64 = rng.random();
    let mut height = || rng.random_range(0.2..1.2);

    let mut boundaries = Vec::new();
    let mut gap_start = None;
    match kind {
        ScenarioKind::Straight | ScenarioKind::Curved => {
            for side in [-1.0, 1.0] {
                let c = centerline;
                boundaries.push(Boundary::from_fn(y_start, y_end, height(), move |y| {
                    c.x(y) + side * HALF_ROAD
                }));
            }
        }
        ScenarioKind::Fork => {
            let y_fork = 20.0 + 20.0 * layout;
            let bend: f64 = 0.02;
            boundaries.push(Boundary::from_fn(y_start, y_end, height(), |_| -HALF_ROAD));
            // Outer edge of the right branch, drawn until it leaves radar reach.
            let y_out = (y_fork + (60.0 / bend).sqrt()).min(y_end);
            boundaries.push(Boundary::from_fn(y_start, y_out, height(), move |y| {
                HALF_ROAD + bend * (y - y_fork).max(0.0).powi(2)
            }));
            // Gore between the branches.
            let y_gore = y_fork + 25.0;
            let y_gore_end = (y_fork + (60.0 / (0.35 * bend)).sqrt()).min(y_end);
            boundaries.push(Boundary::from_fn(y_gore, y_gore_end, height(), move |y| {
                HALF_ROAD + 0.5 + 0.35 * bend * (y - y_fork).powi(2)
            }));
        }
        ScenarioKind::Intersection | ScenarioKind::Urban => {
            let y_gap = 30.0 + 20.0 * layout;
            gap_start = Some(y_gap);
            let mut offsets = vec![-HALF_ROAD, HALF_ROAD];
            if kind == ScenarioKind::Urban {
                offsets.extend([-9.5, 10.5]);
            }
            for x in offsets {
                let h = height();
                boundaries.push(Boundary::from_fn(y_start, y_gap, h, |_| x));
                boundaries.push(Boundary::from_fn(y_gap + INTERSECTION_GAP, y_end, h, |_| x));
            }
        }
    }

    let mut movers = vec![
        Mover {
            lateral_offset: 0.5,
            y0: rng.random_range(20.0..40.0),
            speed: speed + rng.random_range(-2.0..2.0),
            extent: [4.5, 1.8],
            crossing_y: None,
        },
        Mover {
            lateral_offset: -2.2,
            y0: rng.random_range(60.0..200.0),
            speed: -rng.random_range(8.0..15.0),
            extent: [4.5, 1.8],
            crossing_y: None,
        },
    ];
    if kind == ScenarioKind::Urban {
        let y_gap = gap_start.unwrap_or(40.0);
        for _ in 0..3 {
            movers.push(Mover {
                lateral_offset: rng.random_range(-1.5..1.5),
                y0: rng.random_range(10.0..150.0),
                speed: rng.random_range(-12.0..12.0),
                extent: [4.5, 1.8],
                crossing_y: None,
            });
        }
        movers.push(Mover {
            lateral_offset: -30.0,
            y0: 0.0,
            speed: rng.random_range(5.0..9.0),
            extent: [4.5, 1.8],
            crossing_y: Some(y_gap + 0.5 * INTERSECTION_GAP),
        });
    }

    let spacing = rng.random_range(35.0..50.0);
    let mut overheads = Vec::new();
    let mut y = rng.random_range(10.0..30.0);
    while y < y_end {
        for x in [-HALF_ROAD - 0.5, HALF_ROAD + 0.5] {
            overheads.push([centerline.x(y) + x, y, rng.random_range(5.0..7.0)]);
        }
        y += spacing;
    }

    let ghost_rate = match kind {
        ScenarioKind::Urban => 50.0,
        _ => 40.0,
    };

    Scenario {
        kind,
        seed,
        centerline,
        boundaries,
        ego_trajectory,
        movers,
        overheads,
        ghost_rate,
    }
}

fn ego_trajectory(c: &Centerline, speed: f64, frames: usize) -> Vec<TimedState> {
    let mut y = 0.0;
    (0..frames)
        .map(|k| {
            let slope = c.slope(y);
            let norm = 1.0 + slope * slope;
            let vy = speed / norm.sqrt();
            let state = EgoState {
                pose: EgoPose::new(c.x(y), y, -slope.atan()),
                speed,
                yaw_rate: -c.curvature_term(y) / norm * vy,
            };
            y += vy * FRAME_PERIOD;
            TimedState {
                t: k as f64 * FRAME_PERIOD,
                state,
            }
        })
        .collect()
}
