//! Connection bookkeeping between the engine loop and network clients.
//!
//! Each connection has a single state slot: publishing overwrites it, so a
//! client that stalls only ever sees the newest snapshot.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use roomsim_core::{Event, ObjectId};

use crate::protocol::{decode, Envelope, Message, StateUpdate, PROTOCOL_VERSION};

pub type ClientId = u64;

#[derive(Debug, Default)]
struct Client {
    last_in: Option<u64>,
    out_seq: u64,
    /// Newest unsent snapshot with the ack current when it was published.
    state: Option<(Arc<StateUpdate>, Option<u64>)>,
    errors: VecDeque<(String, Option<u64>)>,
    /// Newest command seq handed to the engine.
    taken: Option<u64>,
    /// Seq of commands still waiting in the inbox.
    queued: Option<u64>,
}

/// What happened to one incoming frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Receipt {
    Queued(u64),
    /// Seq not newer than the last one seen; ignored.
    Stale,
    Rejected(String),
}

#[derive(Debug, Default)]
pub struct Hub {
    clients: BTreeMap<ClientId, Client>,
    next_client: ClientId,
    edit_seq: u64,
    known: BTreeSet<ObjectId>,
    latest: Option<Arc<StateUpdate>>,
    inbox: Vec<(ClientId, u64, Event)>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a connection; its first frame is the newest snapshot.
    pub fn connect(&mut self) -> ClientId {
        let id = self.next_client;
        self.next_client += 1;
        let client = Client { state: self.latest.clone().map(|s| (s, None)), ..Client::default() };
        self.clients.insert(id, client);
        id
    }

    pub fn disconnect(&mut self, id: ClientId) {
        self.clients.remove(&id);
        self.inbox.retain(|(c, _, _)| *c != id);
    }

    pub fn clients(&self) -> usize {
        self.clients.len()
    }

    pub fn is_connected(&self, id: ClientId) -> bool {
        self.clients.contains_key(&id)
    }

    pub fn latest(&self) -> Option<&Arc<StateUpdate>> {
        self.latest.as_ref()
    }

    /// Replaces every client's pending snapshot with `update`.
    pub fn publish(&mut self, update: StateUpdate) {
        self.known = update.scene.objects.iter().map(|o| o.id.clone()).collect();
        let update = Arc::new(update);
        for c in self.clients.values_mut() {
            c.state = Some((update.clone(), c.taken));
        }
        self.latest = Some(update);
    }

    /// Validates a client frame and queues its engine event.
    pub fn receive(&mut self, id: ClientId, text: &str) -> Receipt {
        let Some(client) = self.clients.get_mut(&id) else {
            return Receipt::Rejected("not connected".into());
        };
        let env = match decode(text) {
            Ok(env) => env,
            Err((e, seq)) => {
                let reason = e.to_string();
                client.errors.push_back((reason.clone(), seq));
                return Receipt::Rejected(reason);
            }
        };
        if client.last_in.is_some_and(|last| env.seq <= last) {
            return Receipt::Stale;
        }
        client.last_in = Some(env.seq);
        let reject = |client: &mut Client, reason: &str| {
            client.errors.push_back((reason.to_string(), Some(env.seq)));
            Receipt::Rejected(reason.to_string())
        };
        if let Some(target) = env.message.target() {
            if !self.known.contains(target) {
                return reject(client, "unknown object");
            }
        }
        let Some(event) = env.message.to_event(self.edit_seq) else {
            return reject(client, &format!("{} is not a client command", env.message.kind()));
        };
        if let Message::EditOp { .. } = env.message {
            self.edit_seq += 1;
        }
        if let Event::SceneLoad { objects, .. } = &event {
            self.known = objects.iter().map(|o| o.id.clone()).collect();
        }
        client.queued = Some(env.seq);
        self.inbox.push((id, env.seq, event));
        Receipt::Queued(env.seq)
    }

    /// Commands in arrival order, for injection before the next control
    /// tick. Later snapshots acknowledge them.
    pub fn take_events(&mut self) -> Vec<Event> {
        for c in self.clients.values_mut() {
            if let Some(q) = c.queued.take() {
                c.taken = Some(q);
            }
        }
        self.inbox.drain(..).map(|(_, _, e)| e).collect()
    }

    /// Frames to send to `id` now: queued errors, then the newest snapshot.
    pub fn outgoing(&mut self, id: ClientId) -> Vec<Envelope> {
        let Some(c) = self.clients.get_mut(&id) else { return Vec::new() };
        let mut out = Vec::new();
        let next = |c: &mut Client, message: Message, ack: Option<u64>| {
            c.out_seq += 1;
            Envelope { v: PROTOCOL_VERSION, seq: c.out_seq, ack, message }
        };
        while let Some((reason, in_reply_to)) = c.errors.pop_front() {
            out.push(next(c, Message::Error { reason, in_reply_to }, None));
        }
        if let Some((state, ack)) = c.state.take() {
            out.push(next(c, Message::StateUpdate(state), ack));
        }
        out
    }
}
