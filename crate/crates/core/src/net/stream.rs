//! Per-frame inference without re-running whole windows.
//!
//! Every output needs a GRU pass from a zero state over the latest 45
//! feature rows. Consecutive windows overlap in all but one row, but the
//! recurrence restarts each time, so the work cannot be shared directly.
//! Instead one state per in-flight window is kept: a new window starts at
//! every incoming row, all live windows advance by that row in a single
//! matrix product, and the window that has just consumed its last row is
//! emitted. Results equal encoding each window from scratch up to the
//! single-precision rounding of the recurrent products.

use super::model::{heads, latent, NetworkOutput};
use super::params::{NetworkParams, ParamId};
use super::tape::sigmoid;
use super::tensor::{sgemm_raw, Tensor};
use super::NetError;
use crate::features::{FEATURE_DIM, WINDOW_LEN};
use std::sync::Arc;

/// The recurrent products run in single precision to stay inside the
/// per-frame budget; gate arithmetic and the output layers use `f64`.
#[derive(Debug, Clone)]
pub struct StreamingEncoder {
    params: Arc<NetworkParams>,
    hidden_weight: Vec<f32>,
    window: usize,
    hidden: usize,
    /// Row `k` holds the state of the window that started at a row index
    /// congruent to `k` modulo the window length.
    states: Vec<f32>,
    gates: Vec<f32>,
    update: Vec<f64>,
    reset_state: Vec<f32>,
    consumed: u64,
}

impl StreamingEncoder {
    pub fn new(params: Arc<NetworkParams>) -> Result<Self, NetError> {
        Self::with_window(params, WINDOW_LEN)
    }

    pub fn with_window(params: Arc<NetworkParams>, window: usize) -> Result<Self, NetError> {
        params.validate()?;
        let hidden = params.dims().hidden;
        let window = window.max(1);
        let hidden_weight = params.get(ParamId::GruHidden).data().iter().map(|v| *v as f32).collect();
        Ok(Self {
            params,
            hidden_weight,
            window,
            hidden,
            states: vec![0.0; window * hidden],
            gates: vec![0.0; window * 3 * hidden],
            update: vec![0.0; window * hidden],
            reset_state: vec![0.0; window * hidden],
            consumed: 0,
        })
    }

    pub fn params(&self) -> &Arc<NetworkParams> {
        &self.params
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Rows consumed since the last reset.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn reset(&mut self) {
        self.states.fill(0.0);
        self.consumed = 0;
    }

    /// Feeds one feature row; returns the output for the window ending at
    /// this row once a full window has been seen.
    pub fn push(&mut self, x: &[f64]) -> Result<Option<NetworkOutput>, NetError> {
        if x.len() != FEATURE_DIM {
            return Err(NetError::Shape {
                what: "feature row",
                expected: FEATURE_DIM,
                got: x.len(),
            });
        }
        let (w, h) = (self.window, self.hidden);
        let g3 = 3 * h;
        let start = (self.consumed % w as u64) as usize;
        self.states[start * h..(start + 1) * h].fill(0.0);
        let mut a = Tensor::row_vector(x).matmul(self.params.get(ParamId::GruInput));
        for (v, b) in a.data_mut().iter_mut().zip(self.params.get(ParamId::GruBias).data()) {
            *v += b;
        }
        let a = a.data();
        let u = &self.hidden_weight;
        sgemm_raw(w, h, 2 * h, &self.states, h, u, g3, 0.0, &mut self.gates, g3);
        for i in 0..w {
            for j in 0..h {
                let k = i * h + j;
                self.update[k] = sigmoid(a[j] + self.gates[i * g3 + j] as f64);
                let r = sigmoid(a[h + j] + self.gates[i * g3 + h + j] as f64);
                self.reset_state[k] = (r * self.states[k] as f64) as f32;
            }
        }
        sgemm_raw(w, h, h, &self.reset_state, h, &u[2 * h..], g3, 0.0, &mut self.gates[2 * h..], g3);
        for i in 0..w {
            for j in 0..h {
                let k = i * h + j;
                let c = (a[2 * h + j] + self.gates[i * g3 + 2 * h + j] as f64).tanh();
                let hv = self.states[k] as f64;
                self.states[k] = (hv + self.update[k] * (c - hv)) as f32;
            }
        }
        self.consumed += 1;
        if self.consumed < w as u64 {
            return Ok(None);
        }
        let done = (self.consumed % w as u64) as usize;
        let state: Vec<f64> = self.states[done * h..(done + 1) * h].iter().map(|v| *v as f64).collect();
        let l = latent(&state, &self.params);
        Ok(Some(heads(&l, &self.params)))
    }
}
