//! The combined training loss recorded on a tape for a batch of windows.

use nalgebra::Vector3;

use super::losses::{leg_toe_positions, LossComponents, LossWeights};
use crate::features::FeatureWindow;
use crate::motion::{Side, Skeleton, Transform, LEG_CHAIN_LEN, POSE_DIM};
use crate::net::{record_forward, stack_windows, NetError, Objective, ParamVars, Tape, Tensor, Var};

/// One supervised window: inputs ending at frame `i` and the targets of
/// frames `i` and `i − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub window: FeatureWindow,
    pub target: [f64; POSE_DIM],
    pub target_prev: [f64; POSE_DIM],
    pub root: Transform,
    pub root_prev: Transform,
    pub labels: [bool; 2],
    /// False when frame `i − 1` has no target; the velocity term is then
    /// zero for this sample.
    pub has_prev: bool,
}

/// Loss over a batch: per-element mean within each term and mean over
/// samples.
pub struct BatchObjective<'a> {
    pub samples: &'a [TrainingSample],
    pub skeleton: &'a Skeleton,
    pub weights: LossWeights,
}

/// Term variables on the tape, before weighting.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub pose: Var,
    pub fk: Var,
    pub velocity: Var,
    pub contact_left: Var,
    pub contact_right: Var,
}

impl LossVars {
    pub fn values(&self, tape: &Tape) -> LossComponents {
        let v = |x: Var| tape.value(x).data()[0];
        LossComponents {
            pose: v(self.pose),
            fk: v(self.fk),
            velocity: v(self.velocity),
            contact_left: v(self.contact_left),
            contact_right: v(self.contact_right),
        }
    }
}

fn const_rows(tape: &mut Tape, rows: impl Iterator<Item = Vector3<f64>>) -> Var {
    let data: Vec<f64> = rows.flat_map(|v| [v.x, v.y, v.z]).collect();
    let n = data.len() / 3;
    tape.constant(Tensor::from_vec(n, 3, data))
}

/// Gram–Schmidt decoding of 6-DoF block `k` of every row; returns the
/// rotation columns `(right, up, forward)`, each `[B,3]`.
fn decode_block(tape: &mut Tape, pose: Var, k: usize) -> [Var; 3] {
    let f = tape.slice_cols(pose, 6 * k, 3);
    let u = tape.slice_cols(pose, 6 * k + 3, 3);
    let fnorm = tape.norm_rows(f);
    let forward = tape.div_col(f, fnorm);
    let fu = tape.mul(forward, u);
    let dot = tape.sum_cols(fu);
    let proj = tape.mul_col(forward, dot);
    let up_raw = tape.sub(u, proj);
    let unorm = tape.norm_rows(up_raw);
    let up = tape.div_col(up_raw, unorm);
    let right = tape.cross(up, forward);
    [right, up, forward]
}

/// `Σ_c column_c · v[:, c]` for a per-row rotation given by its columns.
fn rotate(tape: &mut Tape, cols: &[Var; 3], v: Var) -> Var {
    let mut acc: Option<Var> = None;
    for (c, col) in cols.iter().enumerate() {
        let comp = tape.slice_cols(v, c, 1);
        let term = tape.mul_col(*col, comp);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    acc.expect("three columns")
}

/// Predicted toe-base world positions of one side, `[B,3]`.
fn toe_on_tape(tape: &mut Tape, pose: Var, skeleton: &Skeleton, side: Side, roots: &[Transform]) -> Var {
    let rig = skeleton.rig().expect("objective requires a rigged skeleton");
    let joints = skeleton.joints();
    let chain = rig.leg_chain(side);
    let b = roots.len();
    let mut v = const_rows(tape, std::iter::repeat_n(joints[rig.toe(side)].offset, b));
    for k in (0..LEG_CHAIN_LEN).rev() {
        let cols = decode_block(tape, pose, side.index() * LEG_CHAIN_LEN + k);
        let rotated = rotate(tape, &cols, v);
        let offset = const_rows(tape, std::iter::repeat_n(joints[chain[k]].offset, b));
        v = tape.add(rotated, offset);
    }
    let root_cols = [0, 1, 2].map(|c| const_rows(tape, roots.iter().map(|r| r.rotation.matrix().column(c).into())));
    let rotated = rotate(tape, &root_cols, v);
    let pos = const_rows(tape, roots.iter().map(|r| r.position));
    tape.add(rotated, pos)
}

impl BatchObjective<'_> {
    /// Records the forward pass and every loss term.
    pub fn record(&self, tape: &mut Tape, params: &ParamVars) -> Result<LossVars, NetError> {
        let b = self.samples.len();
        let windows: Vec<&FeatureWindow> = self.samples.iter().map(|s| &s.window).collect();
        let steps = windows.first().map_or(0, |w| w.len());
        let x = tape.constant(stack_windows(&windows)?);
        let (pose, logits) = record_forward(tape, params, x, steps);

        let target = tape.constant(Tensor::from_vec(
            b,
            POSE_DIM,
            self.samples.iter().flat_map(|s| s.target).collect(),
        ));
        let diff = tape.sub(pose, target);
        let abs = tape.abs(diff);
        let pose_term = tape.mean(abs);

        let roots: Vec<Transform> = self.samples.iter().map(|s| s.root).collect();
        let toe_targets: Vec<[Vector3<f64>; 2]> = self
            .samples
            .iter()
            .map(|s| leg_toe_positions(self.skeleton, &s.root, &s.target))
            .collect::<Result<_, _>>()
            .map_err(|e| NetError::Objective(format!("target pose: {e}")))?;
        let toe_prev: Vec<[Vector3<f64>; 2]> = self
            .samples
            .iter()
            .map(|s| leg_toe_positions(self.skeleton, &s.root_prev, &s.target_prev))
            .collect::<Result<_, _>>()
            .map_err(|e| NetError::Objective(format!("previous target pose: {e}")))?;
        let mask = tape.constant(Tensor::from_vec(
            b,
            1,
            self.samples.iter().map(|s| if s.has_prev { 1.0 } else { 0.0 }).collect(),
        ));
        let mut fk_sum: Option<Var> = None;
        let mut vel_sum: Option<Var> = None;
        for side in Side::BOTH {
            let s = side.index();
            let toe = toe_on_tape(tape, pose, self.skeleton, side, &roots);
            let tgt = const_rows(tape, toe_targets.iter().map(|t| t[s]));
            let d = tape.sub(toe, tgt);
            let n = tape.norm_rows(d);
            let fs = tape.sum(n);
            fk_sum = Some(match fk_sum {
                Some(a) => tape.add(a, fs),
                None => fs,
            });
            // (FK(pred_i) − FK(Y_{i−1})) − (FK(Y_i) − FK(Y_{i−1}))
            let prev = const_rows(tape, toe_prev.iter().map(|t| t[s]));
            let pred_delta = tape.sub(toe, prev);
            let tgt_delta = const_rows(tape, toe_targets.iter().zip(&toe_prev).map(|(t, p)| t[s] - p[s]));
            let dv = tape.sub(pred_delta, tgt_delta);
            let dv = tape.mul_col(dv, mask);
            let nv = tape.norm_rows(dv);
            let vs = tape.sum(nv);
            vel_sum = Some(match vel_sum {
                Some(a) => tape.add(a, vs),
                None => vs,
            });
        }
        let per = 1.0 / (2.0 * b as f64);
        let fk = tape.scale(fk_sum.expect("two sides"), per);
        let velocity = tape.scale(vel_sum.expect("two sides"), per);

        let contact = |tape: &mut Tape, s: usize| {
            let l = tape.slice_cols(logits, 2 * s, 2);
            let labels: Vec<usize> = self.samples.iter().map(|x| x.labels[s] as usize).collect();
            let xe = tape.softmax_xent(l, &labels);
            tape.mean(xe)
        };
        let contact_left = contact(tape, 0);
        let contact_right = contact(tape, 1);
        Ok(LossVars {
            pose: pose_term,
            fk,
            velocity,
            contact_left,
            contact_right,
        })
    }

    pub fn weighted(&self, vars: &LossVars) -> Vec<(f64, Var)> {
        let w = &self.weights;
        vec![
            (w.pose, vars.pose),
            (w.fk, vars.fk),
            (w.velocity, vars.velocity),
            (w.contact / 2.0, vars.contact_left),
            (w.contact / 2.0, vars.contact_right),
        ]
    }
}

impl Objective for BatchObjective<'_> {
    fn terms(&self, tape: &mut Tape, params: &ParamVars) -> Result<Vec<(f64, Var)>, NetError> {
        let vars = self.record(tape, params)?;
        Ok(self.weighted(&vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Dataset, DatasetConfig, FeatureConfig};
    use crate::net::{forward, grad_check, NetDims, NetworkParams};
    use crate::synth::{locomotion_clip, LocomotionParams};
    use crate::train::losses::{loss_contact, loss_fk, loss_pose, loss_velocity, total_loss};
    use crate::train::TrainingSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(window: usize, n: usize) -> (TrainingSet, Vec<TrainingSample>) {
        let clip = locomotion_clip(&LocomotionParams {
            frames: 60,
            ..Default::default()
        });
        let ds = Dataset::build(&[clip], &DatasetConfig::default()).unwrap();
        let set = TrainingSet::new(&ds, &FeatureConfig::default(), window).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = set.sample_batch(&mut rng, n).unwrap();
        (set, samples)
    }

    #[test]
    fn tape_losses_match_direct_evaluation() {
        let (set, samples) = batch(6, 5);
        let params = NetworkParams::init(NetDims { hidden: 8, latent: 5 }, 3);
        let obj = BatchObjective {
            samples: &samples,
            skeleton: &set.skeleton,
            weights: LossWeights::default(),
        };
        let mut tape = Tape::new();
        let pv = ParamVars::constant(&mut tape, &params);
        let got = obj.record(&mut tape, &pv).unwrap().values(&tape);

        let mut want = LossComponents::default();
        for s in &samples {
            let out = forward(&s.window, &params).unwrap();
            want.pose += loss_pose(&out.pose, &s.target).unwrap();
            want.fk += loss_fk(&out.pose, &s.target, &s.root, &set.skeleton).unwrap();
            want.velocity +=
                loss_velocity(&out.pose, &s.target, &s.target_prev, &s.root, &s.root_prev, &set.skeleton).unwrap();
            let c = loss_contact(&out.contact_logits, s.labels);
            want.contact_left += c[0];
            want.contact_right += c[1];
        }
        let n = samples.len() as f64;
        for ((name, a), (_, b)) in got.named().iter().zip(want.named()) {
            assert!((a - b / n).abs() < 1e-10, "{name}: {a} vs {}", b / n);
        }
        let w = LossWeights::default();
        let vars = obj.record(&mut tape, &pv).unwrap();
        let total = tape.weighted_sum(&obj.weighted(&vars));
        assert!((tape.value(total).data()[0] - total_loss(&got, &w).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn sample_order_does_not_matter() {
        let (set, samples) = batch(6, 6);
        let params = NetworkParams::init(NetDims { hidden: 8, latent: 5 }, 4);
        let eval = |s: &[TrainingSample]| {
            let obj = BatchObjective {
                samples: s,
                skeleton: &set.skeleton,
                weights: LossWeights::default(),
            };
            let mut tape = Tape::new();
            let pv = ParamVars::constant(&mut tape, &params);
            obj.record(&mut tape, &pv).unwrap().values(&tape)
        };
        let mut rev = samples.clone();
        rev.reverse();
        let (a, b) = (eval(&samples), eval(&rev));
        for ((_, x), (_, y)) in a.named().iter().zip(b.named()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn full_objective_gradients_match_finite_differences() {
        let (set, samples) = batch(8, 3);
        let params = NetworkParams::init(NetDims { hidden: 6, latent: 4 }, 8);
        let obj = BatchObjective {
            samples: &samples,
            skeleton: &set.skeleton,
            weights: LossWeights::default(),
        };
        let r = grad_check(&params, &obj, 1e-5, 1e-4, None).unwrap();
        assert!(r.passed, "{:#?}", r.tensors);
    }
}
