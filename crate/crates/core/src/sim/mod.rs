//! Synthetic labeled radar sequences standing in for recorded drives.

mod dataset;
mod render;
mod scenario;

pub use dataset::{decode_frames, encode_frames, read_dataset, write_dataset};
pub use render::{label_points, render_frame, simulate, RadarModel, RenderedFrame, Source, DEFAULT_LABEL_TAU};
pub use scenario::{
    build_scenario, build_scenario_frames, point_segment_distance, Boundary, Centerline, Mover, Scenario,
    ScenarioKind, TimedState, DEFAULT_SCENARIO_FRAMES, FRAME_PERIOD, INTERSECTION_GAP,
};
