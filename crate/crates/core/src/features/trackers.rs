//! Tracker frames: synthesis from motion clips, noise augmentation, and the
//! JSON Lines recording format.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use super::FeatureError;
use crate::motion::{fk, skeleton::vec3_serde, MotionClip, Rotation, Transform};

/// Values per tracker on the wire and in dataset payloads.
pub const TRACKER_DIM: usize = 9;
/// Tracker order everywhere: head, left hand, right hand, pelvis.
pub const TRACKER_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerFrame {
    #[serde(default)]
    pub timestamp: f64,
    pub head: Transform,
    pub left_hand: Transform,
    pub right_hand: Transform,
    pub pelvis: Transform,
    /// Optional foot-tracker positions, used only by evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec3")]
    pub left_toe: Option<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec3")]
    pub right_toe: Option<Vector3<f64>>,
}

impl TrackerFrame {
    pub fn new(head: Transform, left_hand: Transform, right_hand: Transform, pelvis: Transform) -> Self {
        Self {
            timestamp: 0.0,
            head,
            left_hand,
            right_hand,
            pelvis,
            left_toe: None,
            right_toe: None,
        }
    }

    pub fn trackers(&self) -> [&Transform; TRACKER_COUNT] {
        [&self.head, &self.left_hand, &self.right_hand, &self.pelvis]
    }

    pub fn trackers_mut(&mut self) -> [&mut Transform; TRACKER_COUNT] {
        [
            &mut self.head,
            &mut self.left_hand,
            &mut self.right_hand,
            &mut self.pelvis,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite() && self.trackers().iter().all(|t| t.is_finite())
    }

    pub fn to_array(&self) -> [f64; TRACKER_COUNT * TRACKER_DIM] {
        let mut out = [0.0; TRACKER_COUNT * TRACKER_DIM];
        for (k, t) in self.trackers().iter().enumerate() {
            out[k * TRACKER_DIM..(k + 1) * TRACKER_DIM].copy_from_slice(&t.to_array());
        }
        out
    }

    pub fn from_slice(v: &[f64], timestamp: f64) -> Result<Self, FeatureError> {
        if v.len() != TRACKER_COUNT * TRACKER_DIM {
            return Err(FeatureError::Shape {
                expected: TRACKER_COUNT * TRACKER_DIM,
                got: v.len(),
            });
        }
        let t = |k: usize| {
            let a: [f64; TRACKER_DIM] = v[k * TRACKER_DIM..(k + 1) * TRACKER_DIM]
                .try_into()
                .expect("slice width");
            Transform::from_array(&a).map_err(FeatureError::from)
        };
        let mut f = TrackerFrame::new(t(0)?, t(1)?, t(2)?, t(3)?);
        f.timestamp = timestamp;
        Ok(f)
    }

    /// Rounds every value through `f32`, the precision of the wire format.
    pub fn quantized(&self) -> Result<Self, FeatureError> {
        let v: Vec<f64> = self.to_array().iter().map(|x| *x as f32 as f64).collect();
        let mut f = Self::from_slice(&v, self.timestamp)?;
        f.left_toe = self.left_toe;
        f.right_toe = self.right_toe;
        Ok(f)
    }
}

/// World transforms of head, finger-bases and root for every frame.
pub fn synthesize_trackers(clip: &MotionClip) -> Result<Vec<TrackerFrame>, FeatureError> {
    let rig = *clip.skeleton.rig()?;
    Ok(clip
        .frames
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let world = fk(&clip.skeleton, pose);
            let mut f = TrackerFrame::new(
                world[rig.head],
                world[rig.left_hand],
                world[rig.right_hand],
                world[0],
            );
            f.timestamp = i as f64 / clip.fps;
            f
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviation of the displacement magnitude, meters.
    pub position_sigma: f64,
    /// Upper bound of the random rotation angle, degrees.
    pub max_angle_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            position_sigma: 0.01,
            max_angle_deg: 1.5,
        }
    }
}

/// Perturbs every tracker: position += uniform direction × N(0, σ) and the
/// rotation is pre-multiplied by a random-axis rotation with angle uniform
/// in `[0, max_angle]`.
pub fn augment_noise(frames: &[TrackerFrame], seed: u64, cfg: &NoiseConfig) -> Vec<TrackerFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, cfg.position_sigma.max(0.0)).expect("finite sigma");
    let max_angle = cfg.max_angle_deg.to_radians();
    frames
        .iter()
        .map(|f| {
            let mut out = *f;
            for t in out.trackers_mut() {
                let (dp, dr) = noise_sample(&mut rng, &normal, max_angle);
                t.position += dp;
                t.rotation = dr * t.rotation;
            }
            out
        })
        .collect()
}

pub(crate) fn noise_sample<R: Rng>(
    rng: &mut R,
    normal: &Normal<f64>,
    max_angle: f64,
) -> (Vector3<f64>, Rotation) {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let mag = normal.sample(rng);
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..=max_angle);
    (
        Vector3::from(dir) * mag,
        Rotation::from_axis_angle(&Vector3::from(axis), angle),
    )
}

/// Reads a JSON Lines tracker recording; blank lines are skipped.
pub fn read_recording<R: BufRead>(reader: R) -> Result<Vec<TrackerFrame>, FeatureError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FeatureError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: TrackerFrame = serde_json::from_str(&line).map_err(|e| FeatureError::Recording {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(f);
    }
    Ok(out)
}

pub fn write_recording<W: Write>(mut w: W, frames: &[TrackerFrame]) -> Result<(), FeatureError> {
    for f in frames {
        let line = serde_json::to_string(f).map_err(|e| FeatureError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| FeatureError::Io(e.to_string()))?;
    }
    Ok(())
}

mod opt_vec3 {
    use super::vec3_serde;
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vector3<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => vec3_serde::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vector3<f64>>, D::Error> {
        Ok(Option::<[f64; 3]>::deserialize(d)?.map(|a| Vector3::new(a[0], a[1], a[2])))
    }
}
