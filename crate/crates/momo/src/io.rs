//! Sequence file formats.
//!
//! A skeleton sequence is a JSON object
//! `{"topology": name, "fps": number, "frames": [[[x, y], ...], ...]}` with
//! one `[x, y]` (or `[x, y, z]` for the 3D variant) entry per joint per
//! frame. Missing keypoints are encoded as `null`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::skeleton::{RawSequence2D, Sequence2D, Sequence3D, SkeletonTopology};
use crate::Result;

#[derive(Debug, Serialize, Deserialize)]
struct SeqFile2D {
    topology: String,
    fps: f64,
    frames: Vec<Vec<Option<[f64; 2]>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeqFile3D {
    topology: String,
    fps: f64,
    frames: Vec<Vec<Option<[f64; 3]>>>,
}

fn resolve_topology(name: &str) -> Result<Arc<SkeletonTopology>> {
    match name {
        crate::skeleton::DEFAULT_TOPOLOGY_NAME => Ok(SkeletonTopology::default_15()),
        other => Err(Error::Dataset(format!("unknown topology `{other}`"))),
    }
}

pub fn write_sequence2d(path: &Path, seq: &Sequence2D) -> Result<()> {
    let file = SeqFile2D {
        topology: seq.topology().name().to_string(),
        fps: seq.fps,
        frames: (0..seq.frames())
            .map(|f| {
                (0..seq.joint_count())
                    .map(|j| Some(seq.joint(f, j)))
                    .collect()
            })
            .collect(),
    };
    write_json(path, &file)
}

pub fn write_sequence3d(path: &Path, seq: &Sequence3D) -> Result<()> {
    let file = SeqFile3D {
        topology: seq.topology().name().to_string(),
        fps: seq.fps,
        frames: (0..seq.frames())
            .map(|f| {
                (0..seq.joint_count())
                    .map(|j| Some(seq.joint(f, j)))
                    .collect()
            })
            .collect(),
    };
    write_json(path, &file)
}

/// Read a 2D sequence that may contain missing (`null`) keypoints.
pub fn read_raw2d(path: &Path) -> Result<RawSequence2D> {
    let file: SeqFile2D = read_json(path)?;
    let topology = resolve_topology(&file.topology)?;
    let n = topology.joint_count();
    for (f, frame) in file.frames.iter().enumerate() {
        if frame.len() != n {
            return Err(Error::Sequence(format!(
                "{}: frame {f} has {} joints, expected {n}",
                path.display(),
                frame.len()
            )));
        }
    }
    Ok(RawSequence2D {
        topology,
        frames: file.frames,
        fps: file.fps,
    })
}

/// Read a complete 2D sequence, rejecting missing keypoints.
pub fn read_sequence2d(path: &Path) -> Result<Sequence2D> {
    let raw = read_raw2d(path)?;
    let n = raw.topology.joint_count();
    let t = raw.frames.len();
    let mut data = Vec::with_capacity(t * n * 2);
    for frame in &raw.frames {
        for joint in frame {
            let Some(p) = joint else {
                return Err(Error::Sequence(format!(
                    "{}: missing keypoint in a complete sequence",
                    path.display()
                )));
            };
            data.extend_from_slice(p);
        }
    }
    let mut seq = Sequence2D::new(raw.topology, t, data)?;
    seq.fps = raw.fps;
    Ok(seq)
}

pub fn read_sequence3d(path: &Path) -> Result<Sequence3D> {
    let file: SeqFile3D = read_json(path)?;
    let topology = resolve_topology(&file.topology)?;
    let n = topology.joint_count();
    let t = file.frames.len();
    let mut data = Vec::with_capacity(t * n * 3);
    for (f, frame) in file.frames.iter().enumerate() {
        if frame.len() != n {
            return Err(Error::Sequence(format!(
                "{}: frame {f} has {} joints, expected {n}",
                path.display(),
                frame.len()
            )));
        }
        for joint in frame {
            let Some(p) = joint else {
                return Err(Error::Sequence(format!(
                    "{}: missing keypoint in a 3D sequence",
                    path.display()
                )));
            };
            data.extend_from_slice(p);
        }
    }
    let mut seq = Sequence3D::new(topology, t, data)?;
    seq.fps = file.fps;
    Ok(seq)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sequence_round_trip_is_lossless() {
        let topo = SkeletonTopology::default_15();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data: Vec<f64> = (0..4 * 15 * 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let seq = Sequence2D::new(topo, 4, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.json");
        write_sequence2d(&path, &seq).unwrap();
        let back = read_sequence2d(&path).unwrap();
        assert_eq!(back.data(), seq.data());
        assert_eq!(back.fps, seq.fps);
    }

    #[test]
    fn null_keypoints_come_back_as_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.json");
        let mut frames: Vec<Vec<Option<[f64; 2]>>> = vec![vec![Some([0.0, 0.0]); 15]; 3];
        frames[1][4] = None;
        let file = SeqFile2D {
            topology: "momo15".into(),
            fps: 25.0,
            frames,
        };
        write_json(&path, &file).unwrap();
        let raw = read_raw2d(&path).unwrap();
        assert!(raw.frames[1][4].is_none());
        assert!(read_sequence2d(&path).is_err());
    }
}
