//! Lower-body pose and foot-contact prediction from sparse upper-body
//! tracking: motion data handling, velocity features, a GRU predictor with
//! its own reverse-mode autodiff, contact-preserving IK, streaming runtime
//! and evaluation metrics.

pub mod motion;

pub mod eval;
pub mod features;
pub mod net;
pub mod postprocess;
pub mod runtime;
pub mod synth;
pub mod train;
