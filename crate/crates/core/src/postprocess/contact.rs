//! Per-foot contact locking state machine.

use nalgebra::Vector3;
use std::sync::Arc;

use super::ik::jacobian_ik;
use super::{blend_alpha, PostprocessConfig, PostprocessError};
use crate::motion::{fk, Pose, Side, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FootState {
    Free,
    /// The toe-base is held at `target`.
    Locked { target: Vector3<f64> },
    /// `elapsed` frames of the release blend from `anchor` have been output.
    Blending { elapsed: usize, anchor: Vector3<f64> },
}

/// Thresholds contact probabilities, optionally with hysteresis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactDecider {
    pub threshold: f64,
    pub hysteresis: f64,
    last: [bool; 2],
}

impl ContactDecider {
    pub fn new(threshold: f64, hysteresis: f64) -> Self {
        Self {
            threshold,
            hysteresis,
            last: [false; 2],
        }
    }

    /// `probs` are per-foot contact probabilities `[left, right]`.
    pub fn decide(&mut self, probs: [f64; 2]) -> [bool; 2] {
        for (last, p) in self.last.iter_mut().zip(probs) {
            let bar = if *last {
                self.threshold - self.hysteresis
            } else {
                self.threshold + self.hysteresis
            };
            *last = p > bar;
        }
        self.last
    }

    pub fn reset(&mut self) {
        self.last = [false; 2];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub pose: Pose,
    /// Sides whose chain rotations were changed by IK.
    pub adjusted: [bool; 2],
    /// States after this frame.
    pub states: [FootState; 2],
    /// Toe-base target handed to IK, per side.
    pub targets: [Option<Vector3<f64>>; 2],
    /// Release blend weight used this frame, per side.
    pub alpha: [Option<f64>; 2],
    pub ik_converged: [bool; 2],
}

/// Owns the two foot state machines of one stream.
#[derive(Debug, Clone)]
pub struct PostProcessor {
    skeleton: Arc<Skeleton>,
    cfg: PostprocessConfig,
    chains: [[usize; 4]; 2],
    states: [FootState; 2],
}

impl PostProcessor {
    pub fn new(skeleton: Arc<Skeleton>, cfg: PostprocessConfig) -> Result<Self, PostprocessError> {
        cfg.validate()?;
        let rig = *skeleton.rig()?;
        // the hip joint stays fixed; upper leg, lower leg and foot rotate
        let chains = Side::BOTH.map(|s| {
            let c = rig.leg_chain(s);
            [c[1], c[2], c[3], rig.toe(s)]
        });
        Ok(Self {
            skeleton,
            cfg,
            chains,
            states: [FootState::Free; 2],
        })
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    pub fn config(&self) -> &PostprocessConfig {
        &self.cfg
    }

    pub fn states(&self) -> [FootState; 2] {
        self.states
    }

    pub fn reset(&mut self) {
        self.states = [FootState::Free; 2];
    }

    fn lock_target(&self, toe: Vector3<f64>) -> Vector3<f64> {
        let y = if self.cfg.snap_to_floor { 0.0 } else { toe.y.max(0.0) };
        Vector3::new(toe.x, y, toe.z)
    }

    /// Advances both feet by one frame. `pose` is the network pose placed at
    /// the tracked root; `contacts` are this frame's decisions.
    pub fn step(&mut self, pose: &Pose, contacts: [bool; 2]) -> Result<StepReport, PostprocessError> {
        let mut out = pose.clone();
        let mut report_targets = [None; 2];
        let mut alpha = [None; 2];
        let mut adjusted = [false; 2];
        let mut converged = [true; 2];
        if !self.cfg.enabled {
            return Ok(StepReport {
                pose: out,
                adjusted,
                states: self.states,
                targets: report_targets,
                alpha,
                ik_converged: converged,
            });
        }
        let world = fk(&self.skeleton, pose);
        let n = self.cfg.ik.blend_frames;
        for side in Side::BOTH {
            let s = side.index();
            let toe = world[self.chains[s][3]].position;
            let (next, target) = match (self.states[s], contacts[s]) {
                (FootState::Free, false) => (FootState::Free, None),
                (FootState::Free, true) | (FootState::Blending { .. }, true) => {
                    let t = self.lock_target(toe);
                    (FootState::Locked { target: t }, Some(t))
                }
                (FootState::Locked { target }, true) => (FootState::Locked { target }, Some(target)),
                (FootState::Locked { target: anchor }, false) => self.blend(1, anchor, toe, n, &mut alpha[s]),
                (FootState::Blending { elapsed, anchor }, false) => {
                    self.blend(elapsed + 1, anchor, toe, n, &mut alpha[s])
                }
            };
            self.states[s] = next;
            if let Some(t) = target {
                let r = jacobian_ik(&self.skeleton, &out, &self.chains[s], &t, &self.cfg.ik)?;
                adjusted[s] = r.iterations > 0;
                converged[s] = r.converged;
                out = r.pose;
                report_targets[s] = Some(t);
            }
        }
        Ok(StepReport {
            pose: out,
            adjusted,
            states: self.states,
            targets: report_targets,
            alpha,
            ik_converged: converged,
        })
    }

    /// Frame `k` of an `n`-frame release; the last frame is the network pose.
    fn blend(
        &self,
        k: usize,
        anchor: Vector3<f64>,
        toe: Vector3<f64>,
        n: usize,
        alpha: &mut Option<f64>,
    ) -> (FootState, Option<Vector3<f64>>) {
        let a = blend_alpha(k as f64 / n as f64);
        *alpha = Some(a);
        if k >= n {
            (FootState::Free, None)
        } else {
            (FootState::Blending { elapsed: k, anchor }, Some((1.0 - a) * anchor + a * toe))
        }
    }
}
