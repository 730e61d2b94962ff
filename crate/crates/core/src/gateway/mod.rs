//! Websocket teleoperation service and its JSON wire protocol.

mod server;
mod wire;

pub use server::{serve, ServerConfig, ServerHandle, FRAME_QUEUE_CAP, SCENE_HZ};
pub use wire::{codes, ArmFrame, ClientMessage, ObjectFrame, RecordAction, SceneFrame, ServerMessage, PROTOCOL_VERSION};

/// Environment variable naming the default data root.
pub const DATA_DIR_ENV: &str = "RMB_DATA_DIR";

/// `$RMB_DATA_DIR`, or `./data` when unset.
pub fn default_data_root() -> std::path::PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(Into::into).unwrap_or_else(|| "data".into())
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot bind port {0}: {1}")]
    Bind(u16, std::io::Error),
    #[error("environment: {0}")]
    Env(String),
}
