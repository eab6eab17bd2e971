//! One tracker stream: calibration, features, streaming network, contact
//! decisions and foot locking, frame by frame.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use super::calibration::{apply_calibration, Calibration};
use super::RuntimeError;
use crate::features::{feature_vector, FeatureConfig, TrackerFrame, WINDOW_LEN};
use crate::motion::{rot_to_6d, LegRig, Pose, Skeleton, SixDof, Transform, LEG_CHAIN_LEN, POSE_DIM};
use crate::net::{NetworkOutput, NetworkParams, StreamingEncoder};
use crate::postprocess::{contact_probability, ContactDecider, PostProcessor, PostprocessConfig};

/// Frames held before the first prediction: a full window of velocity rows
/// needs one extra predecessor.
pub const BUFFER_FRAMES: usize = WINDOW_LEN + 1;

const SIDE_VALUES: usize = LEG_CHAIN_LEN * 6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// The height scale here is replaced by the calibration's.
    pub features: FeatureConfig,
    pub postprocess: PostprocessConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    WarmUp,
    /// The frame was rejected; the previous output is repeated.
    Held,
}

/// Microseconds spent per stage of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageLatency {
    pub features_us: f64,
    pub forward_us: f64,
    pub postprocess_us: f64,
    pub total_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub status: Status,
    /// Lower-body local rotations as forward/up pairs, left leg first.
    pub pose: [f64; POSE_DIM],
    /// `[left no-contact, left contact, right no-contact, right contact]`.
    pub contact_probabilities: [f64; 4],
    pub contacts: [bool; 2],
    /// Body root in standard-skeleton units.
    pub root: Transform,
    pub latency: StageLatency,
}

impl SessionOutput {
    fn warm_up() -> Self {
        let mut pose = [0.0; POSE_DIM];
        for c in pose.chunks_mut(6) {
            c.copy_from_slice(&SixDof::IDENTITY);
        }
        Self {
            status: Status::WarmUp,
            pose,
            contact_probabilities: [0.0; 4],
            contacts: [false; 2],
            root: Transform::identity(),
            latency: StageLatency::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamSession {
    rig: LegRig,
    calibration: Calibration,
    features: FeatureConfig,
    buffer: VecDeque<TrackerFrame>,
    encoder: StreamingEncoder,
    decider: ContactDecider,
    post: PostProcessor,
    last: Option<SessionOutput>,
}

impl StreamSession {
    pub fn new(
        params: Arc<NetworkParams>,
        skeleton: Arc<Skeleton>,
        calibration: Calibration,
        cfg: SessionConfig,
    ) -> Result<Self, RuntimeError> {
        if !(calibration.height_scale > 0.0 && calibration.height_scale.is_finite()) {
            return Err(RuntimeError::Calibration("height scale must be positive".into()));
        }
        let rig = *skeleton.rig()?;
        let pp = cfg.postprocess;
        Ok(Self {
            rig,
            calibration,
            features: FeatureConfig {
                height_scale: calibration.height_scale,
                ..cfg.features
            },
            buffer: VecDeque::with_capacity(BUFFER_FRAMES),
            encoder: StreamingEncoder::new(params)?,
            decider: ContactDecider::new(pp.threshold, pp.hysteresis),
            post: PostProcessor::new(skeleton, pp)?,
            last: None,
        })
    }

    pub fn is_warm(&self) -> bool {
        self.buffer.len() >= BUFFER_FRAMES
    }

    /// Calibrated frames currently buffered (at most [`BUFFER_FRAMES`]).
    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.encoder.reset();
        self.decider.reset();
        self.post.reset();
        self.last = None;
    }

    /// Rejects a frame without touching the stream state.
    pub fn hold(&self) -> SessionOutput {
        let mut out = self.last.clone().unwrap_or_else(SessionOutput::warm_up);
        out.status = Status::Held;
        out.latency = StageLatency::default();
        out
    }

    pub fn step(&mut self, frame: &TrackerFrame) -> Result<SessionOutput, RuntimeError> {
        let start = Instant::now();
        if !frame.is_finite() {
            return Ok(self.hold());
        }
        let cur = apply_calibration(frame, &self.calibration);
        let Some(prev) = self.buffer.back() else {
            self.buffer.push_back(cur);
            return Ok(SessionOutput::warm_up());
        };
        let Ok(row) = feature_vector(prev, &cur, &self.features) else {
            // pelvis heading undefined: treat like a tracking dropout
            return Ok(self.hold());
        };
        let t_features = Instant::now();
        let net = self.encoder.push(&row)?;
        let t_forward = Instant::now();
        if self.buffer.len() == BUFFER_FRAMES {
            self.buffer.pop_front();
        }
        self.buffer.push_back(cur);
        let Some(net) = net else {
            return Ok(SessionOutput::warm_up());
        };
        let mut out = self.finish(&net, &cur)?;
        let end = Instant::now();
        out.latency = StageLatency {
            features_us: micros(start, t_features),
            forward_us: micros(t_features, t_forward),
            postprocess_us: micros(t_forward, end),
            total_us: micros(start, end),
        };
        self.last = Some(out.clone());
        Ok(out)
    }

    fn finish(&mut self, net: &NetworkOutput, cur: &TrackerFrame) -> Result<SessionOutput, RuntimeError> {
        let l = &net.contact_logits;
        let p = [contact_probability(l[0], l[1]), contact_probability(l[2], l[3])];
        let contacts = self.decider.decide(p);
        let root = Transform::new(cur.pelvis.rotation, cur.pelvis.position * self.calibration.height_scale);
        let mut pose = Pose::identity(self.post.skeleton());
        pose.root = root;
        pose.set_lower_body_6d(&self.rig, &net.pose)?;
        let report = self.post.step(&pose, contacts)?;
        let mut values = net.pose;
        for (s, adjusted) in report.adjusted.iter().enumerate() {
            if *adjusted {
                let joints = &self.rig.lower_body[s * LEG_CHAIN_LEN..(s + 1) * LEG_CHAIN_LEN];
                for (k, j) in joints.iter().enumerate() {
                    let at = s * SIDE_VALUES + k * 6;
                    values[at..at + 6].copy_from_slice(&rot_to_6d(&report.pose.local_rotation(*j)).to_array());
                }
            }
        }
        Ok(SessionOutput {
            status: Status::Ok,
            pose: values,
            contact_probabilities: [1.0 - p[0], p[0], 1.0 - p[1], p[1]],
            contacts,
            root,
            latency: StageLatency::default(),
        })
    }
}

fn micros(a: Instant, b: Instant) -> f64 {
    (b - a).as_secs_f64() * 1e6
}
