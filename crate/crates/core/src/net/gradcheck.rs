//! Finite-difference verification of tape gradients.

use serde::Serialize;

use super::model::ParamVars;
use super::params::{NetworkParams, ParamId};
use super::tape::{Tape, Var};
use super::NetError;

/// A scalar objective recorded as weighted terms `Σ wₖ·termₖ`.
pub trait Objective {
    fn terms(&self, tape: &mut Tape, params: &ParamVars) -> Result<Vec<(f64, Var)>, NetError>;
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: &'static str,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub max_abs_diff: f64,
    /// `max |analytic − numeric| / max(max |analytic|, max |numeric|)`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
    pub epsilon: f64,
    pub max_relative_error: f64,
    pub passed: bool,
}

fn term_values(objective: &dyn Objective, params: &NetworkParams) -> Result<Vec<(f64, f64)>, NetError> {
    let mut tape = Tape::new();
    let pv = ParamVars::constant(&mut tape, params);
    let terms = objective.terms(&mut tape, &pv)?;
    Ok(terms.iter().map(|(w, v)| (*w, tape.value(*v).data()[0])).collect())
}

/// Compares backpropagated gradients with central differences for every
/// element of the selected tensors (all when `only` is `None`).
///
/// The numeric derivative is formed per term and then weighted, which is the
/// same quantity as differencing the total but keeps small-weight terms from
/// being lost to rounding in the sum.
pub fn grad_check(
    params: &NetworkParams,
    objective: &dyn Objective,
    epsilon: f64,
    tolerance: f64,
    only: Option<&[ParamId]>,
) -> Result<GradCheckReport, NetError> {
    let mut tape = Tape::new();
    let pv = ParamVars::trainable(&mut tape, params);
    let terms = objective.terms(&mut tape, &pv)?;
    let total = tape.weighted_sum(&terms);
    let grads = tape.backward(total)?;
    let mut tensors = Vec::new();
    for id in ParamId::ALL {
        if only.is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let shape = params.get(id).shape();
        let analytic = grads
            .get(pv.get(id))
            .cloned()
            .unwrap_or_else(|| super::Tensor::zeros(shape[0], shape[1]));
        let mut numeric = vec![0.0; analytic.len()];
        let mut probe = params.clone();
        for (e, slot) in numeric.iter_mut().enumerate() {
            let orig = params.get(id).data()[e];
            probe.get_mut(id).data_mut()[e] = orig + epsilon;
            let plus = term_values(objective, &probe)?;
            probe.get_mut(id).data_mut()[e] = orig - epsilon;
            let minus = term_values(objective, &probe)?;
            probe.get_mut(id).data_mut()[e] = orig;
            *slot = plus
                .iter()
                .zip(&minus)
                .map(|((w, p), (_, m))| w * (p - m) / (2.0 * epsilon))
                .sum();
        }
        let max_a = analytic.max_abs();
        let max_n = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_d = analytic
            .data()
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        let scale = max_a.max(max_n);
        tensors.push(TensorCheck {
            name: id.name(),
            max_abs_analytic: max_a,
            max_abs_numeric: max_n,
            max_abs_diff: max_d,
            relative_error: if scale > 0.0 { max_d / scale } else { 0.0 },
        });
    }
    let max_relative_error = tensors.iter().fold(0.0f64, |m, t| m.max(t.relative_error));
    Ok(GradCheckReport {
        passed: tensors.iter().all(|t| t.relative_error < tolerance),
        tensors,
        tolerance,
        epsilon,
        max_relative_error,
    })
}
