//! External inputs to the engine and the log entries it records.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::manipulation::ManipulationEvent;
use crate::model::{FurnitureId, ObjectId, Pose, RobotId, UserMode, Vector, VirtualObject};

/// An input applied at the next control tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// Walk through `waypoints` at `speed` m/s.
    UserMove { waypoints: Vec<Vector>, speed: f64 },
    /// Tracker update placing the user directly.
    UserPose { pose: Pose },
    UserMode { mode: UserMode },
    /// Jump the user to a virtual position; the heading defaults to the
    /// user's current virtual heading.
    TeleportRequest {
        x: f64,
        y: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading: Option<f64>,
    },
    VirtualMove { object: ObjectId, pose: Pose },
    /// Edit mirrored from another site, ordered by server sequence number.
    EditOp { seq: u64, object: ObjectId, pose: Pose },
    SceneLoad {
        objects: Vec<VirtualObject>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<Pose>,
    },
    OcclusionStart {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robot: Option<RobotId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        furniture: Option<FurnitureId>,
    },
    OcclusionStop {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robot: Option<RobotId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        furniture: Option<FurnitureId>,
    },
    /// Marks one virtual object as about to be touched, so its proxy is
    /// placed even outside the reach disc. `None` clears it.
    Highlight {
        #[serde(default)]
        object: Option<ObjectId>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("malformed event on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Event with a release time in seconds, as found in scripted event files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledEvent {
    pub t: f64,
    pub event: Event,
}

/// Parses a JSON-lines event script. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_event_script(text: &str) -> Result<Vec<ScheduledEvent>, EventError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ev: ScheduledEvent = serde_json::from_str(line)
            .map_err(|e| EventError::Malformed { line: i + 1, reason: e.to_string() })?;
        if !(ev.t.is_finite() && ev.t >= 0.0) {
            return Err(EventError::Malformed { line: i + 1, reason: "t must be a finite non-negative time".into() });
        }
        out.push(ev);
    }
    Ok(out)
}

pub fn parse_event(text: &str) -> Result<Event, EventError> {
    serde_json::from_str(text).map_err(|e| EventError::Malformed { line: 1, reason: e.to_string() })
}

/// Arrival-ordered inputs plus timed ones waiting for their tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventQueue {
    pub pending: VecDeque<(u64, Event)>,
    /// (release tick, arrival seq, event), sorted by tick then seq.
    pub timed: VecDeque<(u64, u64, Event)>,
    pub next_seq: u64,
}

impl EventQueue {
    /// Queues an event for the next control tick; returns its sequence number.
    pub fn push(&mut self, event: Event) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.push_back((seq, event));
        seq
    }

    pub fn push_at(&mut self, tick: u64, event: Event) -> u64 {
        let seq = self.next_seq;
        self.push_with_seq(tick, seq, event);
        seq
    }

    /// Timed event keeping a sequence number assigned elsewhere, as when
    /// replaying a trace.
    pub fn push_with_seq(&mut self, tick: u64, seq: u64, event: Event) {
        self.next_seq = self.next_seq.max(seq + 1);
        let pos = self.timed.iter().position(|(t, s, _)| (*t, *s) > (tick, seq)).unwrap_or(self.timed.len());
        self.timed.insert(pos, (tick, seq, event));
    }

    /// Moves timed events due at or before `tick` into the pending queue
    /// and drains everything pending, in sequence order.
    pub fn drain_due(&mut self, tick: u64) -> Vec<(u64, Event)> {
        while let Some((t, _, _)) = self.timed.front() {
            if *t > tick {
                break;
            }
            let (_, seq, ev) = self.timed.pop_front().expect("front exists");
            self.pending.push_back((seq, ev));
        }
        let mut out: Vec<(u64, Event)> = self.pending.drain(..).collect();
        out.sort_by_key(|(s, _)| *s);
        out
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty() && self.timed.is_empty()
    }
}

/// Something observable that happened during a control period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Applied { seq: u64, event: Event },
    Rejected { seq: u64, event: Event, reason: String },
    Assigned { robot: RobotId, furniture: FurnitureId },
    Unassigned { robot: RobotId, furniture: FurnitureId },
    Manipulation { robot: RobotId, event: ManipulationEvent },
    Teleport { eta_bound: f64, unrenderable: Vec<ObjectId>, tasks: usize },
    TrackingLost { robot: RobotId },
    TrackingRestored { robot: RobotId },
    UserArrived { position: Vector },
    NoParking { furniture: FurnitureId },
}
