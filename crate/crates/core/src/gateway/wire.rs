use serde::{Deserialize, Serialize};

use crate::collect::{Grip, TeleopCommand};
use crate::env::{EnvSpec, GoalRegion, ObjectKind, State};
use crate::sim2d::scene::ee_poses;

pub const PROTOCOL_VERSION: u32 = 1;

/// Error codes carried by `error` messages.
pub mod codes {
    pub const BUSY: &str = "BUSY";
    pub const BAD_MESSAGE: &str = "BAD_MESSAGE";
    pub const UNKNOWN_TYPE: &str = "UNKNOWN_TYPE";
    pub const UNKNOWN_ENV: &str = "UNKNOWN_ENV";
    pub const NOT_RECORDING: &str = "NOT_RECORDING";
    pub const ALREADY_RECORDING: &str = "ALREADY_RECORDING";
    pub const EMPTY_RECORDING: &str = "EMPTY_RECORDING";
    pub const IO: &str = "IO";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFrame {
    pub joints: Vec<f64>,
    /// `[x, y, theta]`.
    pub ee: [f64; 3],
    pub gripper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectFrame {
    pub kind: ObjectKind,
    pub position: [f64; 2],
    pub half_extent: f64,
    pub goal: GoalRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub t: usize,
    pub arms: Vec<ArmFrame>,
    pub base: [f64; 2],
    pub objects: Vec<ObjectFrame>,
    pub rope: Option<Vec<[f64; 2]>>,
    /// The rope goal, or the first object's goal.
    pub goal: Option<GoalRegion>,
    pub recording: bool,
    pub success: bool,
}

impl SceneFrame {
    pub fn from_state(state: &State, spec: &EnvSpec, recording: bool, success: bool) -> Self {
        let poses = ee_poses(spec, state);
        let mut offset = 0;
        let arms = spec
            .link_lengths
            .iter()
            .enumerate()
            .map(|(i, links)| {
                let joints = state.joint_angles[offset..offset + links.len()].to_vec();
                offset += links.len();
                let p = poses[i];
                ArmFrame { joints, ee: [p.x, p.y, p.theta], gripper: state.gripper_open[i] }
            })
            .collect();
        let objects = state
            .objects
            .iter()
            .map(|o| ObjectFrame { kind: o.kind, position: o.position, half_extent: o.half_extent, goal: o.goal_region })
            .collect();
        Self {
            t: state.t,
            arms,
            base: state.base_pose,
            objects,
            rope: state.rope.clone(),
            goal: state.rope_goal.or_else(|| state.objects.first().map(|o| o.goal_region)),
            recording,
            success,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello { protocol_version: u32, env_spec: EnvSpec },
    Scene(SceneFrame),
    Recorded { path: String, length: usize, success: bool },
    Error { code: String, message: String },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.to_string(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages are plain data")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd {
        dx: f64,
        dy: f64,
        grip: Grip,
        #[serde(default)]
        arm: usize,
    },
    Reset {
        seed: u64,
    },
    Record {
        action: RecordAction,
    },
    SelectEnv {
        env_id: String,
    },
}

const CLIENT_TYPES: [&str; 4] = ["cmd", "reset", "record", "select_env"];

impl ClientMessage {
    /// Parses a client frame, mapping failures to the error reply to send.
    pub fn parse(text: &str) -> Result<Self, ServerMessage> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ServerMessage::error(codes::BAD_MESSAGE, e.to_string()))?;
        let ty = value
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| ServerMessage::error(codes::BAD_MESSAGE, "missing \"type\" field"))?;
        if !CLIENT_TYPES.contains(&ty) {
            return Err(ServerMessage::error(codes::UNKNOWN_TYPE, format!("unknown message type `{ty}`")));
        }
        let msg: ClientMessage =
            serde_json::from_value(value).map_err(|e| ServerMessage::error(codes::BAD_MESSAGE, e.to_string()))?;
        if let ClientMessage::Cmd { dx, dy, .. } = msg {
            if !dx.is_finite() || !dy.is_finite() {
                return Err(ServerMessage::error(codes::BAD_MESSAGE, "non-finite cmd field"));
            }
        }
        Ok(msg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages are plain data")
    }

    pub fn command(&self) -> Option<TeleopCommand> {
        match *self {
            ClientMessage::Cmd { dx, dy, grip, arm } => {
                Some(TeleopCommand { ee_delta: [dx, dy], grip, base_delta: None, arm_select: arm })
            }
            _ => None,
        }
    }
}
