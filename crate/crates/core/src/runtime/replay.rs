//! Offline replay of tracker recordings through a session.

use serde::{Deserialize, Serialize};
use std::io::Write;

use super::session::{Status, StreamSession};
use super::RuntimeError;
use crate::features::TrackerFrame;
use crate::motion::{write_bvh, Category, LegRig, MotionClip, Pose, Skeleton, Transform, POSE_DIM};
use std::sync::Arc;

/// One predicted frame; warm-up frames produce no line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayLine {
    /// Index of the input frame.
    pub frame: usize,
    pub status: Status,
    #[serde(with = "pose_array")]
    pub pose: [f64; POSE_DIM],
    pub contact_probabilities: [f64; 4],
    pub contacts: [bool; 2],
    pub root: Transform,
}

mod pose_array {
    use super::POSE_DIM;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; POSE_DIM], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; POSE_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let n = v.len();
        v.try_into()
            .map_err(|_| D::Error::custom(format!("pose needs {POSE_DIM} values, got {n}")))
    }
}

/// Steps every frame through `session`. Frames are first rounded to the
/// wire precision so replay and the socket service see identical inputs.
pub fn replay(frames: &[TrackerFrame], session: &mut StreamSession) -> Result<Vec<ReplayLine>, RuntimeError> {
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let r = match f.quantized() {
            Ok(q) => session.step(&q)?,
            Err(_) => session.hold(),
        };
        if r.status != Status::WarmUp {
            out.push(ReplayLine {
                frame: i,
                status: r.status,
                pose: r.pose,
                contact_probabilities: r.contact_probabilities,
                contacts: r.contacts,
                root: r.root,
            });
        }
    }
    Ok(out)
}

pub fn write_replay_jsonl<W: Write>(mut w: W, lines: &[ReplayLine]) -> Result<(), RuntimeError> {
    for l in lines {
        let s = serde_json::to_string(l).map_err(|e| RuntimeError::Io(e.to_string()))?;
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Predicted lower body on the given skeleton, driven by the replayed root;
/// the upper body stays at rest. Lengths are written in centimetres.
pub fn write_replay_bvh(lines: &[ReplayLine], skeleton: Arc<Skeleton>, fps: f64) -> Result<String, RuntimeError> {
    let rig: LegRig = *skeleton.rig()?;
    let frames = lines
        .iter()
        .map(|l| {
            let mut p = Pose::identity(&skeleton);
            p.root = l.root;
            p.set_lower_body_6d(&rig, &l.pose)?;
            Ok(p)
        })
        .collect::<Result<Vec<_>, RuntimeError>>()?;
    let clip = MotionClip::new(skeleton, fps, frames, "replay", Category::Other)?;
    Ok(write_bvh(&clip, 0.01))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{read_recording, synthesize_trackers, write_recording};
    use crate::motion::{parse_bvh, BvhOptions};
    use crate::net::{NetDims, NetworkParams};
    use crate::runtime::{Calibration, SessionConfig};
    use crate::synth::{locomotion_clip, LocomotionParams};

    fn session() -> StreamSession {
        let params = Arc::new(NetworkParams::init(NetDims { hidden: 8, latent: 4 }, 1));
        StreamSession::new(params, Arc::new(Skeleton::standard()), Calibration::default(), SessionConfig::default()).unwrap()
    }

    fn frames(n: usize) -> Vec<TrackerFrame> {
        synthesize_trackers(&locomotion_clip(&LocomotionParams {
            frames: n,
            ..Default::default()
        }))
        .unwrap()
    }

    #[test]
    fn empty_recording_gives_empty_output() {
        assert!(replay(&[], &mut session()).unwrap().is_empty());
        let mut buf = Vec::new();
        write_replay_jsonl(&mut buf, &[]).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn line_count_after_warm_up() {
        for n in [10, 45, 46, 80] {
            let lines = replay(&frames(n), &mut session()).unwrap();
            assert_eq!(lines.len(), n.saturating_sub(45), "{n}");
            if let Some(l) = lines.first() {
                assert_eq!(l.frame, 45);
            }
        }
    }

    #[test]
    fn jsonl_and_bvh_outputs() {
        let f = frames(70);
        let mut rec = Vec::new();
        write_recording(&mut rec, &f).unwrap();
        let f = read_recording(&rec[..]).unwrap();
        let lines = replay(&f, &mut session()).unwrap();
        let mut buf = Vec::new();
        write_replay_jsonl(&mut buf, &lines).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 25);
        let back: Vec<ReplayLine> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        for (a, b) in back.iter().zip(&lines) {
            assert_eq!((a.frame, a.status, a.pose, a.contacts), (b.frame, b.status, b.pose, b.contacts));
            assert!(a.root.rotation.angle_to(&b.root.rotation) < 1e-9);
            assert!((a.root.position - b.root.position).norm() < 1e-12);
        }
        let bvh = write_replay_bvh(&lines, Arc::new(Skeleton::standard()), 45.0).unwrap();
        let opts = BvhOptions { unit_scale: 0.01, ..BvhOptions::default() };
        let clip = parse_bvh(&bvh, &opts).unwrap();
        assert_eq!(clip.len(), 25);
        for (f, l) in clip.frames.iter().zip(&lines) {
            assert!((f.root.position - l.root.position).norm() < 1e-9);
        }
    }
}
