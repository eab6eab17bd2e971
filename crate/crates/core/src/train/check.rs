//! Finite-difference check of the full training objective on a small net.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::LossWeights;
use super::objective::BatchObjective;
use super::sampler::TrainingSet;
use super::TrainError;
use crate::features::{Dataset, DatasetConfig, FeatureConfig};
use crate::net::{grad_check, GradCheckReport, NetDims, NetworkParams};
use crate::synth::{locomotion_clip, LocomotionParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub network: NetDims,
    pub window: usize,
    pub batch: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            network: NetDims { hidden: 16, latent: 8 },
            window: 8,
            batch: 4,
            seed: 0,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Samples windows from a short synthetic walk and compares the analytic
/// gradient of the weighted loss (pose, FK, velocity, contact) with central
/// differences on every parameter tensor.
pub fn check_training_gradients(cfg: &GradCheckConfig) -> Result<GradCheckReport, TrainError> {
    if cfg.window == 0 || cfg.batch == 0 || !(cfg.epsilon > 0.0) {
        return Err(TrainError::Config("window, batch and epsilon must be positive".into()));
    }
    let clip = locomotion_clip(&LocomotionParams {
        frames: (cfg.window + 1).max(60),
        ..Default::default()
    });
    let ds = Dataset::build(&[clip], &DatasetConfig::default())?;
    let set = TrainingSet::new(&ds, &FeatureConfig::default(), cfg.window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = set.sample_batch(&mut rng, cfg.batch)?;
    let params = NetworkParams::init(cfg.network, cfg.seed);
    let objective = BatchObjective {
        samples: &samples,
        skeleton: &set.skeleton,
        weights: LossWeights::default(),
    };
    Ok(grad_check(&params, &objective, cfg.epsilon, cfg.tolerance, None)?)
}
