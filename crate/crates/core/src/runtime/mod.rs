//! Calibration, the per-frame inference session, the TCP service, offline
//! replay and frame pacing.

pub mod calibration;
pub mod config;
pub mod pacer;
pub mod protocol;
pub mod replay;
pub mod server;
pub mod session;

pub use calibration::{apply_calibration, calibrate, calibrate_recording, rest_pelvis_height, Calibration};
pub use config::{resolve_config_path, AppConfig, RuntimeConfig, CONFIG_ENV, DEFAULT_CONFIG_FILE};
pub use pacer::FramePacer;
pub use protocol::{ProtocolError, Request, Response, ERROR_STATUS, MAGIC, REQUEST_LEN, RESPONSE_LEN, VERSION};
pub use replay::{replay, write_replay_bvh, write_replay_jsonl, ReplayLine};
pub use server::{serve, serve_connection, Client, ConnectionStats};
pub use session::{SessionConfig, SessionOutput, StageLatency, Status, StreamSession, BUFFER_FRAMES};

use crate::features::FeatureError;
use crate::motion::MotionError;
use crate::net::NetError;
use crate::postprocess::PostprocessError;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}

impl From<std::io::Error> for RuntimeError {
    fn from(e: std::io::Error) -> Self {
        RuntimeError::Io(e.to_string())
    }
}
