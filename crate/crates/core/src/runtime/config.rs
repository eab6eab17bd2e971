//! One TOML file for every tunable, with an environment override for its
//! location.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::session::SessionConfig;
use super::RuntimeError;
use crate::eval::EvalConfig;
use crate::features::DatasetConfig;
use crate::train::TrainConfig;

pub const CONFIG_ENV: &str = "SPARSEPOSE_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "sparsepose.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub address: String,
    pub fps: f64,
    /// Stop serving after this many connections; unlimited when absent.
    pub max_connections: Option<usize>,
    pub session: SessionConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            address: "127.0.0.1:7878".into(),
            fps: 45.0,
            max_connections: None,
            session: SessionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub runtime: RuntimeConfig,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, RuntimeError> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| RuntimeError::Config(e.to_string()))?;
        cfg.train.validate().map_err(|e| RuntimeError::Config(e.to_string()))?;
        cfg.eval.postprocess.validate()?;
        cfg.runtime.session.postprocess.validate()?;
        if !(cfg.runtime.fps > 0.0 && cfg.runtime.fps.is_finite()) {
            return Err(RuntimeError::Config("runtime.fps must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = fs::read_to_string(path).map_err(|e| RuntimeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Defaults when no file is found.
    pub fn load_resolved(explicit: Option<&Path>) -> Result<Self, RuntimeError> {
        match resolve_config_path(explicit, std::env::var_os(CONFIG_ENV).map(PathBuf::from)) {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// An explicit path wins, then the environment variable, then
/// `sparsepose.toml` in the working directory if it exists.
pub fn resolve_config_path(explicit: Option<&Path>, env: Option<PathBuf>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    if let Some(p) = env.filter(|p| !p.as_os_str().is_empty()) {
        return Some(p);
    }
    let local = PathBuf::from(DEFAULT_CONFIG_FILE);
    local.exists().then_some(local)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = AppConfig::from_toml("[train]\nepochs = 3\n[runtime]\naddress = \"0.0.0.0:9000\"\n[runtime.session.postprocess]\nthreshold = 0.6\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.runtime.address, "0.0.0.0:9000");
        assert_eq!(c.runtime.session.postprocess.threshold, 0.6);
        assert_eq!(c.runtime.fps, 45.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(AppConfig::from_toml("[train]\nepoch = 3\n").is_err());
        assert!(AppConfig::from_toml("[train]\nlr_decay = 1.5\n").is_err());
        assert!(AppConfig::from_toml("[runtime]\nfps = 0.0\n").is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = AppConfig::default();
        assert_eq!(AppConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn path_precedence() {
        let env = Some(PathBuf::from("/env.toml"));
        assert_eq!(resolve_config_path(Some(Path::new("/a.toml")), env.clone()), Some(PathBuf::from("/a.toml")));
        assert_eq!(resolve_config_path(None, env), Some(PathBuf::from("/env.toml")));
    }
}
