//! The training loop: epochs of Adam steps, loss curve and checkpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::losses::{learning_rate, total_loss, LossComponents, LossWeights};
use super::objective::{BatchObjective, TrainingSample};
use super::sampler::TrainingSet;
use super::TrainError;
use crate::features::{Dataset, FeatureConfig, WINDOW_LEN};
use crate::net::{save_params, Dtype, NetDims, NetworkParams, ParamVars, Tape, Tensor};

pub const CURVE_HEADER: &str = "epoch,lr,pose,fk,velocity,contact,total";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate once per epoch.
    pub lr_decay: f64,
    pub window: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Optimizer steps per epoch; by default one pass over the admissible
    /// windows, `max(1, windows / batch_size)`.
    pub batches_per_epoch: Option<usize>,
    pub checkpoint_every: usize,
    pub network: NetDims,
    pub features: FeatureConfig,
    pub adam: AdamConfig,
    pub checkpoint_dtype: Dtype,
    /// Fold the training-set feature mean and spread into the initial input
    /// weights. Velocity features are tiny and uneven in scale; without this
    /// the first layer starts nearly blind to them.
    pub input_scaling: bool,
}

/// Channels with less spread than this are scaled as if they had this much.
pub const MIN_FEATURE_SPREAD: f64 = 1e-3;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_decay: 0.999,
            window: WINDOW_LEN,
            weights: LossWeights::default(),
            seed: 0,
            batches_per_epoch: None,
            checkpoint_every: 50,
            network: NetDims::default(),
            features: FeatureConfig::default(),
            adam: AdamConfig::default(),
            checkpoint_dtype: Dtype::F32,
            input_scaling: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.window == 0 || self.checkpoint_every == 0 {
            return bad("epochs, batch_size, window and checkpoint_every must be positive");
        }
        if self.batches_per_epoch == Some(0) {
            return bad("batches_per_epoch must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if self.network.hidden == 0 || self.network.latent == 0 {
            return bad("network sizes must be positive");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive");
        }
        self.weights.validate()
    }
}

/// Averaged loss components of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub lr: f64,
    pub components: LossComponents,
    pub total: f64,
}

impl EpochRecord {
    pub fn csv_line(&self) -> String {
        let c = &self.components;
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.epoch,
            self.lr,
            c.pose,
            c.fk,
            c.velocity,
            c.contact(),
            self.total
        )
    }
}

#[derive(Serialize)]
struct NonFiniteDump<'a> {
    epoch: usize,
    batch: usize,
    component: &'a str,
    lr: f64,
    components: LossComponents,
    windows: &'a [(usize, usize)],
    param_max_abs: Vec<(&'static str, f64)>,
}

/// Single-owner training state.
pub struct Trainer {
    pub config: TrainConfig,
    set: TrainingSet,
    params: NetworkParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    batches_per_epoch: usize,
    dump_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(dataset: &Dataset, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let set = TrainingSet::new(dataset, &config.features, config.window)?;
        let mut params = NetworkParams::init(config.network, config.seed);
        if config.input_scaling {
            let (mean, std) = set.feature_statistics();
            let scale = std.map(|s| 1.0 / s.max(MIN_FEATURE_SPREAD));
            params.fold_input_scaling(&mean, &scale)?;
        }
        Ok(Self::with_params(set, config, params))
    }

    pub fn with_params(set: TrainingSet, config: TrainConfig, params: NetworkParams) -> Self {
        let adam = AdamState::new(params.tensors(), config.adam);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        // keep batch draws independent of the parameter initialization stream
        rng.set_stream(1);
        let batches_per_epoch = config
            .batches_per_epoch
            .unwrap_or_else(|| (set.sampler().admissible() / config.batch_size).max(1));
        Self {
            config,
            set,
            params,
            adam,
            rng,
            epoch: 0,
            batches_per_epoch,
            dump_dir: None,
        }
    }

    /// Directory that receives `nonfinite_dump.json` on abort.
    pub fn set_dump_dir(&mut self, dir: Option<PathBuf>) {
        self.dump_dir = dir;
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.set
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
    }

    /// Loss components and parameter gradients for one batch.
    pub fn evaluate(&self, samples: &[TrainingSample]) -> Result<(LossComponents, Vec<Tensor>), TrainError> {
        let objective = BatchObjective {
            samples,
            skeleton: &self.set.skeleton,
            weights: self.config.weights,
        };
        let mut tape = Tape::new();
        let pv = ParamVars::trainable(&mut tape, &self.params);
        let vars = objective.record(&mut tape, &pv)?;
        let components = vars.values(&tape);
        let terms = objective.weighted(&vars);
        let total = tape.weighted_sum(&terms);
        let mut grads = tape.backward(total)?;
        let g = pv
            .vars()
            .iter()
            .zip(self.params.tensors())
            .map(|(v, t)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
            .collect();
        Ok((components, g))
    }

    fn abort(
        &self,
        batch: usize,
        component: &str,
        lr: f64,
        components: LossComponents,
        windows: &[(usize, usize)],
    ) -> TrainError {
        if let Some(dir) = &self.dump_dir {
            let dump = NonFiniteDump {
                epoch: self.epoch + 1,
                batch,
                component,
                lr,
                components,
                windows,
                param_max_abs: crate::net::ParamId::ALL
                    .iter()
                    .map(|id| (id.name(), self.params.get(*id).max_abs()))
                    .collect(),
            };
            if let Ok(json) = serde_json::to_string_pretty(&dump) {
                let path = dir.join("nonfinite_dump.json");
                if let Err(e) = fs::write(&path, json) {
                    log::error!("could not write {}: {e}", path.display());
                }
            }
        }
        TrainError::NonFinite {
            epoch: self.epoch + 1,
            batch,
            component: component.to_string(),
        }
    }

    /// Runs one epoch and returns its averaged losses.
    pub fn run_epoch(&mut self) -> Result<EpochRecord, TrainError> {
        let lr = learning_rate(self.config.learning_rate, self.config.lr_decay, self.epoch);
        let mut sum = LossComponents::default();
        for b in 0..self.batches_per_epoch {
            let positions: Vec<(usize, usize)> = (0..self.config.batch_size)
                .map(|_| self.set.sampler().draw(&mut self.rng))
                .collect();
            let samples = positions
                .iter()
                .map(|&(c, e)| self.set.sample(c, e))
                .collect::<Result<Vec<_>, _>>()?;
            let (c, grads) = self.evaluate(&samples)?;
            if let Err(TrainError::NonFiniteLoss(name)) = total_loss(&c, &self.config.weights) {
                return Err(self.abort(b, name, lr, c, &positions));
            }
            if let Some(id) = grads.iter().position(|g| g.data().iter().any(|x| !x.is_finite())) {
                let name = format!("gradient of {}", crate::net::ParamId::ALL[id].name());
                return Err(self.abort(b, &name, lr, c, &positions));
            }
            adam_step(self.params.tensors_mut(), &grads, &mut self.adam, lr)?;
            sum.pose += c.pose;
            sum.fk += c.fk;
            sum.velocity += c.velocity;
            sum.contact_left += c.contact_left;
            sum.contact_right += c.contact_right;
        }
        let n = self.batches_per_epoch as f64;
        let components = LossComponents {
            pose: sum.pose / n,
            fk: sum.fk / n,
            velocity: sum.velocity / n,
            contact_left: sum.contact_left / n,
            contact_right: sum.contact_right / n,
        };
        self.epoch += 1;
        Ok(EpochRecord {
            epoch: self.epoch,
            lr,
            total: total_loss(&components, &self.config.weights)?,
            components,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub curve: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in curve {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

/// Trains for `config.epochs`. With `out_dir`, writes `loss_curve.csv`
/// after every epoch, `epoch_XXXXX.ckpt` every `checkpoint_every` epochs and
/// `final.ckpt` at the end.
pub fn train(dataset: &Dataset, config: TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    let io = |p: &Path, e: std::io::Error| TrainError::Io(format!("{}: {e}", p.display()));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let mut trainer = Trainer::new(dataset, config)?;
    trainer.set_dump_dir(out_dir.map(Path::to_path_buf));
    let (epochs, every, dtype) = (
        trainer.config.epochs,
        trainer.config.checkpoint_every,
        trainer.config.checkpoint_dtype,
    );
    let mut curve = Vec::with_capacity(epochs);
    let mut checkpoints = Vec::new();
    for _ in 0..epochs {
        let rec = trainer.run_epoch()?;
        log::info!("{}", rec.csv_line());
        curve.push(rec);
        if let Some(dir) = out_dir {
            let path = dir.join("loss_curve.csv");
            fs::write(&path, curve_csv(&curve)).map_err(|e| io(&path, e))?;
            if rec.epoch % every == 0 {
                let path = dir.join(format!("epoch_{:05}.ckpt", rec.epoch));
                save_params(trainer.params(), &path, dtype)?;
                checkpoints.push(path);
            }
        }
    }
    if let Some(dir) = out_dir {
        let path = dir.join("final.ckpt");
        save_params(trainer.params(), &path, dtype)?;
        checkpoints.push(path);
    }
    Ok(TrainOutcome {
        params: trainer.into_params(),
        curve,
        checkpoints,
    })
}
