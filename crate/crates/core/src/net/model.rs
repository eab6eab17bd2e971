//! The predictor: GRU encoder over a feature window, ReLU latent layer, and
//! linear pose and contact heads.

use super::params::{NetworkParams, ParamId};
use super::tape::{sigmoid, Tape, Var};
use super::tensor::{gemm_raw, Tensor};
use super::{NetError, CONTACT_DIM};
use crate::features::{FeatureWindow, FEATURE_DIM};
use crate::motion::POSE_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkOutput {
    pub pose: [f64; POSE_DIM],
    /// `[left no-contact, left contact, right no-contact, right contact]`.
    pub contact_logits: [f64; CONTACT_DIM],
}

impl NetworkOutput {
    pub fn from_slices(pose: &[f64], logits: &[f64]) -> Self {
        let mut out = NetworkOutput {
            pose: [0.0; POSE_DIM],
            contact_logits: [0.0; CONTACT_DIM],
        };
        out.pose.copy_from_slice(pose);
        out.contact_logits.copy_from_slice(logits);
        out
    }

    /// Per-foot softmax over `[no-contact, contact]`.
    pub fn contact_probabilities(&self) -> [[f64; 2]; 2] {
        let l = &self.contact_logits;
        [softmax2(l[0], l[1]), softmax2(l[2], l[3])]
    }

    /// Probability of contact for each foot, `[left, right]`.
    pub fn contact_probability(&self) -> [f64; 2] {
        let p = self.contact_probabilities();
        [p[0][1], p[1][1]]
    }

    pub fn is_finite(&self) -> bool {
        self.pose.iter().chain(&self.contact_logits).all(|v| v.is_finite())
    }
}

fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let s = ea + eb;
    [ea / s, eb / s]
}

/// One GRU step for a single sequence.
pub fn gru_cell(x: &[f64], h_prev: &[f64], params: &NetworkParams) -> Result<Vec<f64>, NetError> {
    let hidden = params.dims().hidden;
    if x.len() != FEATURE_DIM {
        return Err(NetError::Shape {
            what: "gru input",
            expected: FEATURE_DIM,
            got: x.len(),
        });
    }
    if h_prev.len() != hidden {
        return Err(NetError::Shape {
            what: "gru state",
            expected: hidden,
            got: h_prev.len(),
        });
    }
    let mut a = Tensor::row_vector(x).matmul(params.get(ParamId::GruInput));
    for (v, b) in a.data_mut().iter_mut().zip(params.get(ParamId::GruBias).data()) {
        *v += b;
    }
    Ok(gru_step_rows(a.data(), &Tensor::row_vector(h_prev), params).into_vec())
}

/// Advances every row of `h` by one step sharing the input projection `a`
/// (`x·W + b`, width `3H`).
pub(crate) fn gru_step_rows(a: &[f64], h: &Tensor, params: &NetworkParams) -> Tensor {
    let (rows, hidden) = (h.rows(), h.cols());
    let g3 = 3 * hidden;
    let u = params.get(ParamId::GruHidden).data();
    let mut g = vec![0.0; rows * g3];
    gemm_raw(rows, hidden, 2 * hidden, 1.0, h.data(), hidden, 1, u, g3, 1, 0.0, &mut g, g3, 1);
    let mut rh = vec![0.0; rows * hidden];
    let mut z = vec![0.0; rows * hidden];
    for i in 0..rows {
        for j in 0..hidden {
            let k = i * hidden + j;
            z[k] = sigmoid(a[j] + g[i * g3 + j]);
            let r = sigmoid(a[hidden + j] + g[i * g3 + hidden + j]);
            rh[k] = r * h.data()[k];
        }
    }
    gemm_raw(rows, hidden, hidden, 1.0, &rh, hidden, 1, &u[2 * hidden..], g3, 1, 0.0, &mut g[2 * hidden..], g3, 1);
    let mut out = h.clone();
    for i in 0..rows {
        for j in 0..hidden {
            let k = i * hidden + j;
            let c = (a[2 * hidden + j] + g[i * g3 + 2 * hidden + j]).tanh();
            let hv = h.data()[k];
            out.data_mut()[k] = hv + z[k] * (c - hv);
        }
    }
    out
}

/// Latent vector of one window: zero initial state, one GRU step per row,
/// then the ReLU latent layer.
pub fn encode(window: &FeatureWindow, params: &NetworkParams) -> Result<Vec<f64>, NetError> {
    let mut h = vec![0.0; params.dims().hidden];
    for t in 0..window.len() {
        h = gru_cell(window.row(t), &h, params)?;
    }
    Ok(latent(&h, params))
}

pub(crate) fn latent(h: &[f64], params: &NetworkParams) -> Vec<f64> {
    let mut l = Tensor::row_vector(h).matmul(params.get(ParamId::LatentWeight));
    for (v, b) in l.data_mut().iter_mut().zip(params.get(ParamId::LatentBias).data()) {
        *v = (*v + b).max(0.0);
    }
    l.into_vec()
}

pub(crate) fn heads(latent: &[f64], params: &NetworkParams) -> NetworkOutput {
    let l = Tensor::row_vector(latent);
    let linear = |w: ParamId, b: ParamId| {
        let mut y = l.matmul(params.get(w));
        y.add_assign(params.get(b));
        y
    };
    let pose = linear(ParamId::PoseWeight, ParamId::PoseBias);
    let contact = linear(ParamId::ContactWeight, ParamId::ContactBias);
    NetworkOutput::from_slices(pose.data(), contact.data())
}

/// Pose and contact logits for one window.
pub fn forward(window: &FeatureWindow, params: &NetworkParams) -> Result<NetworkOutput, NetError> {
    params.validate()?;
    let l = encode(window, params)?;
    Ok(heads(&l, params))
}

/// Parameters placed on a tape, in [`ParamId::ALL`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    /// Leaves that receive gradients.
    pub fn trainable(tape: &mut Tape, params: &NetworkParams) -> Self {
        Self {
            vars: params.tensors().iter().map(|t| tape.param(t.clone())).collect(),
        }
    }

    pub fn constant(tape: &mut Tape, params: &NetworkParams) -> Self {
        Self {
            vars: params.tensors().iter().map(|t| tape.constant(t.clone())).collect(),
        }
    }

    pub fn get(&self, p: ParamId) -> Var {
        self.vars[p.index()]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Stacks equal-length windows time-major: row `t·B + b` is step `t` of
/// window `b`.
pub fn stack_windows(windows: &[&FeatureWindow]) -> Result<Tensor, NetError> {
    let steps = windows.first().map_or(0, |w| w.len());
    let batch = windows.len();
    let mut x = Tensor::zeros(steps * batch, FEATURE_DIM);
    for (b, w) in windows.iter().enumerate() {
        if w.len() != steps {
            return Err(NetError::Shape {
                what: "window length",
                expected: steps,
                got: w.len(),
            });
        }
        for t in 0..steps {
            x.row_mut(t * batch + b).copy_from_slice(w.row(t));
        }
    }
    Ok(x)
}

/// Records the batched forward pass; returns `(pose [B,48], logits [B,4])`.
pub fn record_forward(tape: &mut Tape, p: &ParamVars, x: Var, steps: usize) -> (Var, Var) {
    let h = tape.gru(
        x,
        p.get(ParamId::GruInput),
        p.get(ParamId::GruHidden),
        p.get(ParamId::GruBias),
        steps,
    );
    let l = tape.matmul(h, p.get(ParamId::LatentWeight));
    let l = tape.add_row(l, p.get(ParamId::LatentBias));
    let l = tape.relu(l);
    let pose = tape.matmul(l, p.get(ParamId::PoseWeight));
    let pose = tape.add_row(pose, p.get(ParamId::PoseBias));
    let contact = tape.matmul(l, p.get(ParamId::ContactWeight));
    let contact = tape.add_row(contact, p.get(ParamId::ContactBias));
    (pose, contact)
}

/// Batched inference over equal-length windows, processed in chunks.
pub fn forward_batch(
    windows: &[&FeatureWindow],
    params: &NetworkParams,
) -> Result<Vec<NetworkOutput>, NetError> {
    const CHUNK: usize = 64;
    params.validate()?;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(CHUNK) {
        let x = stack_windows(chunk)?;
        let steps = chunk[0].len();
        let mut tape = Tape::new();
        let pv = ParamVars::constant(&mut tape, params);
        let xv = tape.constant(x);
        let (pose, contact) = record_forward(&mut tape, &pv, xv, steps);
        let (pt, ct) = (tape.value(pose), tape.value(contact));
        for b in 0..chunk.len() {
            out.push(NetworkOutput::from_slices(pt.row(b), ct.row(b)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetDims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> NetDims {
        NetDims { hidden: 8, latent: 5 }
    }

    fn random_window(rows: usize, seed: u64) -> FeatureWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; FEATURE_DIM]> = (0..rows)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        FeatureWindow::from_rows(&rows)
    }

    #[test]
    fn zero_params_give_zero_state_and_uniform_contacts() {
        let p = NetworkParams::zeros(small());
        let h = gru_cell(&[0.0; FEATURE_DIM], &[0.0; 8], &p).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
        let out = forward(&random_window(10, 1), &p).unwrap();
        assert!(out.pose.iter().all(|v| *v == 0.0));
        assert_eq!(out.contact_logits, [0.0; 4]);
        assert_eq!(out.contact_probabilities(), [[0.5, 0.5], [0.5, 0.5]]);
    }

    /// Scalar gate equations evaluated by hand for a 1-unit GRU whose only
    /// non-zero input weight reads feature 0.
    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        let dims = NetDims { hidden: 1, latent: 1 };
        let mut p = NetworkParams::zeros(dims);
        let (wz, wr, wh) = (0.5, -0.3, 0.8);
        let (uz, ur, uh) = (0.2, 0.7, -0.6);
        let (bz, br, bh) = (0.1, -0.2, 0.05);
        p.get_mut(ParamId::GruInput).row_mut(0).copy_from_slice(&[wz, wr, wh]);
        p.get_mut(ParamId::GruHidden).row_mut(0).copy_from_slice(&[uz, ur, uh]);
        p.get_mut(ParamId::GruBias).row_mut(0).copy_from_slice(&[bz, br, bh]);
        let (x, h) = (0.9, -0.4);
        let mut input = [0.0; FEATURE_DIM];
        input[0] = x;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z = sig(wz * x + uz * h + bz);
        let r = sig(wr * x + ur * h + br);
        let c = (wh * x + uh * (r * h) + bh).tanh();
        let expected = (1.0 - z) * h + z * c;
        let got = gru_cell(&input, &[h], &p).unwrap()[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn saturated_update_gate_takes_the_candidate() {
        let mut p = NetworkParams::zeros(small());
        // update gate forced open; candidate is tanh(0) = 0
        p.get_mut(ParamId::GruBias).data_mut()[..8].fill(1e3);
        let h = gru_cell(&[0.3; FEATURE_DIM], &[0.7; 8], &p).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn shape_errors() {
        let p = NetworkParams::zeros(small());
        assert!(gru_cell(&[0.0; 3], &[0.0; 8], &p).is_err());
        assert!(gru_cell(&[0.0; FEATURE_DIM], &[0.0; 3], &p).is_err());
    }

    #[test]
    fn latent_is_non_negative_and_order_sensitive() {
        let p = NetworkParams::init(small(), 2);
        let w = random_window(12, 3);
        let l = encode(&w, &p).unwrap();
        assert!(l.iter().all(|v| *v >= 0.0));
        let mut rows: Vec<[f64; FEATURE_DIM]> = (0..12).map(|t| w.row(t).try_into().unwrap()).collect();
        rows.reverse();
        let l2 = encode(&FeatureWindow::from_rows(&rows), &p).unwrap();
        assert_ne!(l, l2);
    }

    #[test]
    fn batched_tape_forward_matches_direct() {
        let p = NetworkParams::init(small(), 4);
        let ws: Vec<FeatureWindow> = (0..5).map(|s| random_window(9, s)).collect();
        let refs: Vec<&FeatureWindow> = ws.iter().collect();
        let batch = forward_batch(&refs, &p).unwrap();
        for (w, b) in ws.iter().zip(&batch) {
            let d = forward(w, &p).unwrap();
            for (x, y) in d.pose.iter().zip(&b.pose).chain(d.contact_logits.iter().zip(&b.contact_logits)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(forward(&ws[0], &p).unwrap(), forward(&ws[0], &p).unwrap());
    }

    #[test]
    fn pose_bias_gradient_of_summed_pose_is_ones() {
        let p = NetworkParams::zeros(small());
        let w = random_window(6, 1);
        let mut tape = Tape::new();
        let pv = ParamVars::trainable(&mut tape, &p);
        let x = tape.constant(stack_windows(&[&w]).unwrap());
        let (pose, _) = record_forward(&mut tape, &pv, x, 6);
        let loss = tape.sum(pose);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(pv.get(ParamId::PoseBias)).unwrap().data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn non_finite_params_fail_fast() {
        let mut p = NetworkParams::zeros(small());
        p.get_mut(ParamId::GruHidden).data_mut()[0] = f64::INFINITY;
        assert!(matches!(forward(&random_window(3, 0), &p), Err(NetError::NonFiniteParam(_))));
    }
}
