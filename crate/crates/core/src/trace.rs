//! Canonical per-control-tick trace records and their digest.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::events::{Event, LogEntry};
use crate::manipulation::TrackingSource;
use crate::model::{FurnitureState, ObjectId, RobotState, UserAvatar};
use crate::scheduler::{ProxyBinding, ProxyTask};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    #[serde(flatten)]
    pub state: RobotState,
    pub task: Option<crate::model::FurnitureId>,
    pub tracking: Option<TrackingSource>,
}

/// Full world state at one control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub time: f64,
    pub robots: Vec<RobotRecord>,
    pub furniture: Vec<FurnitureState>,
    pub user: UserAvatar,
    pub tasks: Vec<ProxyTask>,
    pub bindings: Vec<ProxyBinding>,
    pub unmet: Vec<ObjectId>,
    pub events: Vec<LogEntry>,
}

/// Snapshot of the world, taking the log entries accumulated since the
/// previous record.
pub fn record_trace(world: &mut World) -> TraceRecord {
    let events = std::mem::take(&mut world.log);
    snapshot(world, events)
}

/// Snapshot without consuming the log.
pub fn snapshot(world: &World, events: Vec<LogEntry>) -> TraceRecord {
    TraceRecord {
        tick: world.clock.tick,
        time: world.clock.time(),
        robots: world
            .robots
            .iter()
            .map(|r| RobotRecord {
                state: r.state.clone(),
                task: r.task.clone(),
                tracking: if r.tracking_lost {
                    None
                } else if r.occluded {
                    Some(TrackingSource::FurnitureProxy)
                } else {
                    Some(TrackingSource::Robot)
                },
            })
            .collect(),
        furniture: world.furniture.clone(),
        user: world.user.avatar,
        tasks: world.tasks.values().cloned().collect(),
        bindings: world.scheduler.bindings.values().cloned().collect(),
        unmet: world.scheduler.unmet.clone(),
        events,
    }
}

/// Rounds to 9 significant digits and normalizes negative zero.
pub fn canonical_float(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let r: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Rewrites a JSON value with rounded floats. Object keys are already
/// sorted by `serde_json`'s ordered map.
pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                let f = canonical_float(n.as_f64().expect("f64 number"));
                Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null)
            } else {
                Value::Number(n)
            }
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        Value::Object(o) => {
            let mut m = Map::new();
            for (k, v) in o {
                m.insert(k, canonicalize(v));
            }
            Value::Object(m)
        }
        other => other,
    }
}

pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("trace values serialize");
    serde_json::to_string(&canonicalize(v)).expect("canonical value serializes")
}

/// One canonical JSON line per record.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&canonical_json(r));
        out.push('\n');
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Incremental digest over canonical trace lines.
#[derive(Clone, Default)]
pub struct TraceHasher {
    hasher: Sha256,
    pub records: u64,
}

impl TraceHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_line(&mut self, line: &str) {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.records += 1;
    }

    pub fn push(&mut self, record: &TraceRecord) {
        self.push_line(&canonical_json(record));
    }

    pub fn finish(self) -> String {
        hex(&self.hasher.finalize())
    }
}

pub fn hash_trace(records: &[TraceRecord]) -> String {
    let mut h = TraceHasher::new();
    for r in records {
        h.push(r);
    }
    h.finish()
}

/// Parses trace lines back into records.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Events handled during a recorded run, applied or rejected, with the
/// tick they were handled on and their sequence number, for replay.
pub fn replay_events(records: &[TraceRecord]) -> Vec<(u64, u64, Event)> {
    let mut out = Vec::new();
    for r in records {
        for e in &r.events {
            match e {
                LogEntry::Applied { seq, event } | LogEntry::Rejected { seq, event, .. } => {
                    out.push((r.tick, *seq, event.clone()))
                }
                _ => {}
            }
        }
    }
    out
}
