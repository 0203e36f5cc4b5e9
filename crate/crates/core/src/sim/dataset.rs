//! JSON Lines dataset files, one frame per line, optionally gzip-compressed
//! when the path ends in `.gz`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{EgoPose, EgoState, RadarFrame, RadarPoint};
use crate::io::atomic_write;

#[derive(Serialize, Deserialize)]
struct EgoRecord {
    x: f64,
    y: f64,
    yaw: f64,
    speed: f64,
    yaw_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: f64,
    ego: EgoRecord,
    points: Vec<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<u8>>,
}

impl From<&RadarFrame> for FrameRecord {
    fn from(f: &RadarFrame) -> Self {
        Self {
            t: f.timestamp,
            ego: EgoRecord {
                x: f.ego.pose.x,
                y: f.ego.pose.y,
                yaw: f.ego.pose.yaw,
                speed: f.ego.speed,
                yaw_rate: f.ego.yaw_rate,
            },
            points: f
                .points
                .iter()
                .map(|p| [p.x, p.y, p.z, p.doppler, p.snr, p.range])
                .collect(),
            labels: f.labels.clone(),
        }
    }
}

impl FrameRecord {
    fn into_frame(self) -> std::result::Result<RadarFrame, String> {
        if let Some(l) = &self.labels {
            if l.len() != self.points.len() {
                return Err(format!("{} labels for {} points", l.len(), self.points.len()));
            }
            if l.iter().any(|&v| v > 1) {
                return Err("labels must be 0 or 1".into());
            }
        }
        Ok(RadarFrame {
            timestamp: self.t,
            ego: EgoState {
                // Stored yaw is already normalized; keep it bit-exact.
                pose: EgoPose {
                    x: self.ego.x,
                    y: self.ego.y,
                    yaw: self.ego.yaw,
                },
                speed: self.ego.speed,
                yaw_rate: self.ego.yaw_rate,
            },
            points: self
                .points
                .into_iter()
                .map(|[x, y, z, doppler, snr, range]| RadarPoint {
                    x,
                    y,
                    z,
                    doppler,
                    snr,
                    range,
                })
                .collect(),
            labels: self.labels,
        })
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Serializes frames to JSON Lines bytes.
pub fn encode_frames(frames: &[RadarFrame]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for f in frames {
        serde_json::to_writer(&mut out, &FrameRecord::from(f))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Parses JSON Lines; blank lines are skipped.
pub fn decode_frames(reader: impl BufRead) -> Result<Vec<RadarFrame>> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Dataset {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            line: line_no,
            message: e.to_string(),
        })?;
        frames.push(record.into_frame().map_err(|message| Error::Dataset {
            line: line_no,
            message,
        })?);
    }
    Ok(frames)
}

/// Writes a dataset atomically; `.gz` paths are gzip-compressed.
pub fn write_dataset(frames: &[RadarFrame], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_frames(frames)?;
    atomic_write(path, |file| {
        if is_gz(path) {
            // Fixed header fields keep compressed output reproducible.
            let mut gz = GzEncoder::new(BufWriter::new(file), Compression::default());
            gz.write_all(&bytes)?;
            gz.finish()?.flush()
        } else {
            file.write_all(&bytes)
        }
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<RadarFrame>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    decode_frames(BufReader::new(reader))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_scenario_frames, simulate, RadarModel, ScenarioKind};
    use proptest::prelude::*;

    #[test]
    fn empty_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_dataset(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert!(read_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn single_frame_round_trip_plain_and_gz() {
        let s = build_scenario_frames(ScenarioKind::Curved, 3, 1);
        let frames = simulate(&s, &RadarModel::default(), 1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["one.jsonl", "one.jsonl.gz"] {
            let path = dir.path().join(name);
            write_dataset(&frames, &path).unwrap();
            assert_eq!(read_dataset(&path).unwrap(), frames);
        }
    }

    #[test]
    fn field_order_is_fixed() {
        let s = build_scenario_frames(ScenarioKind::Straight, 3, 1);
        let frames = simulate(&s, &RadarModel::default(), 1, 3).unwrap();
        let text = String::from_utf8(encode_frames(&frames).unwrap()).unwrap();
        let keys = ["\"t\":", "\"ego\":{\"x\":", "\"y\":", "\"yaw\":", "\"speed\":", "\"yaw_rate\":", "\"points\":[[", "\"labels\":["];
        let mut at = 0;
        for k in keys {
            let pos = text[at..].find(k).unwrap_or_else(|| panic!("missing {k}"));
            at += pos;
        }
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let s = build_scenario_frames(ScenarioKind::Straight, 3, 3);
        let frames = simulate(&s, &RadarModel::default(), 3, 3).unwrap();
        let mut text = String::from_utf8(encode_frames(&frames).unwrap()).unwrap();
        let cut = text.trim_end().len() - 20;
        text.truncate(cut);
        match decode_frames(text.as_bytes()) {
            Err(Error::Dataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected dataset error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn arbitrary_values_round_trip_exactly(
            vals in prop::collection::vec(prop::array::uniform6(-1e6..1e6f64), 0..8),
            t in 0.0..1e4f64,
        ) {
            let frame = RadarFrame {
                timestamp: t,
                ego: EgoState { pose: EgoPose::new(t, -t, 0.3), speed: 3.0, yaw_rate: -0.01 },
                points: vals.iter().map(|v| RadarPoint { x: v[0], y: v[1], z: v[2], doppler: v[3], snr: v[4], range: v[5] }).collect(),
                labels: None,
            };
            let back = decode_frames(&encode_frames(std::slice::from_ref(&frame)).unwrap()[..]).unwrap();
            prop_assert_eq!(back, vec![frame]);
        }
    }
}
