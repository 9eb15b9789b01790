//! Wire messages between the sync server and its clients.
//!
//! Every message is one JSON text frame:
//! `{"v": 1, "seq": <u64>, "type": "<kind>", "payload": {...}}`.
//! Server to client frames are numbered per connection; client frames
//! carry the client's own counter, which must strictly increase.

use std::sync::Arc;

use roomsim_core::model::{PlayArea, VirtualObject, VirtualScene};
use roomsim_core::trace::TraceRecord;
use roomsim_core::{Event, ObjectId, Pose};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    /// On state updates: the newest command from this connection the
    /// engine has taken in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack: Option<u64>,
    #[serde(flatten)]
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Message {
    StateUpdate(Arc<StateUpdate>),
    UserPose { pose: Pose },
    TeleportRequest {
        x: f64,
        y: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading: Option<f64>,
    },
    MoveObject { object: ObjectId, pose: Pose },
    SceneLoad {
        objects: Vec<VirtualObject>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<Pose>,
    },
    /// Edit relayed from a remote design session.
    EditOp { object: ObjectId, pose: Pose },
    Error {
        reason: String,
        /// Seq of the offending client message when it could be read.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_reply_to: Option<u64>,
    },
}

/// Full world state; a client needs nothing else to draw the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub area: PlayArea,
    pub scene: VirtualScene,
    #[serde(flatten)]
    pub record: TraceRecord,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::StateUpdate(_) => "state_update",
            Message::UserPose { .. } => "user_pose",
            Message::TeleportRequest { .. } => "teleport_request",
            Message::MoveObject { .. } => "move_object",
            Message::SceneLoad { .. } => "scene_load",
            Message::EditOp { .. } => "edit_op",
            Message::Error { .. } => "error",
        }
    }

    /// Object a command refers to, if any.
    pub fn target(&self) -> Option<&ObjectId> {
        match self {
            Message::MoveObject { object, .. } | Message::EditOp { object, .. } => Some(object),
            _ => None,
        }
    }

    /// Engine event for a client command. `edit_seq` orders relayed edits
    /// by server arrival. Server-only kinds yield `None`.
    pub fn to_event(&self, edit_seq: u64) -> Option<Event> {
        Some(match self {
            Message::UserPose { pose } => Event::UserPose { pose: *pose },
            Message::TeleportRequest { x, y, heading } => Event::TeleportRequest { x: *x, y: *y, heading: *heading },
            Message::MoveObject { object, pose } => Event::VirtualMove { object: object.clone(), pose: *pose },
            Message::SceneLoad { objects, origin } => Event::SceneLoad { objects: objects.clone(), origin: *origin },
            Message::EditOp { object, pose } => Event::EditOp { seq: edit_seq, object: object.clone(), pose: *pose },
            Message::StateUpdate(_) | Message::Error { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
}

pub fn encode(envelope: &Envelope) -> String {
    serde_json::to_string(envelope).expect("messages serialize")
}

/// Parses a frame, reporting the seq when the frame was readable enough.
pub fn decode(text: &str) -> Result<Envelope, (DecodeError, Option<u64>)> {
    match serde_json::from_str::<Envelope>(text) {
        Ok(env) if env.v != PROTOCOL_VERSION => Err((DecodeError::Version(env.v), Some(env.seq))),
        Ok(env) => Ok(env),
        Err(e) => {
            let seq = serde_json::from_str::<serde_json::Value>(text).ok().and_then(|v| v.get("seq")?.as_u64());
            Err((DecodeError::Malformed(e.to_string()), seq))
        }
    }
}
