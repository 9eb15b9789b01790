use roomsim_core::{presets, Event, ObjectId, Pose, Sim, TraceMode, World};
use roomsim_server::runner::state_update;
use roomsim_server::{Envelope, Hub, Message, Receipt};

fn world() -> World {
    World::from_scenario(presets::evaluation()).unwrap()
}

fn frame(seq: u64, kind: &str, payload: &str) -> String {
    format!(r#"{{"v":1,"seq":{seq},"type":"{kind}","payload":{payload}}}"#)
}

fn states(out: &[Envelope]) -> Vec<&Envelope> {
    out.iter().filter(|e| matches!(e.message, Message::StateUpdate(_))).collect()
}

fn tick_of(env: &Envelope) -> u64 {
    match &env.message {
        Message::StateUpdate(s) => s.record.tick,
        _ => panic!("not a state update"),
    }
}

#[test]
fn connected_clients_receive_identical_payloads() {
    let mut hub = Hub::new();
    let a = hub.connect();
    let b = hub.connect();
    hub.publish(state_update(&world(), vec![]));
    let (oa, ob) = (hub.outgoing(a), hub.outgoing(b));
    assert_eq!(oa.len(), 1);
    assert_eq!(oa[0].message, ob[0].message);
    assert!(hub.outgoing(a).is_empty());
}

#[test]
fn late_joiner_starts_with_the_full_snapshot() {
    let mut hub = Hub::new();
    let mut sim = Sim::new(world(), TraceMode::Off);
    for _ in 0..5 {
        sim.run_ticks(2);
        hub.publish(state_update(&sim.world, vec![]));
    }
    let late = hub.connect();
    let out = hub.outgoing(late);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].seq, 1);
    assert_eq!(tick_of(&out[0]), 10);
    match &out[0].message {
        Message::StateUpdate(s) => {
            assert_eq!(s.scene.objects.len(), 4);
            assert_eq!(s.record.robots.len(), 2);
        }
        _ => unreachable!(),
    }
}

#[test]
fn stalled_client_gets_only_the_latest_snapshot() {
    let mut hub = Hub::new();
    let fast = hub.connect();
    let slow = hub.connect();
    let mut sim = Sim::new(world(), TraceMode::Off);
    let mut fast_seen = 0;
    // one second of control ticks while the slow client reads nothing
    for _ in 0..30 {
        sim.run_ticks(2);
        hub.publish(state_update(&sim.world, vec![]));
        fast_seen += states(&hub.outgoing(fast)).len();
    }
    assert_eq!(fast_seen, 30);
    let out = hub.outgoing(slow);
    assert_eq!(out.len(), 1);
    assert_eq!(tick_of(&out[0]), 60);
    assert_eq!(out[0].seq, 1);
}

#[test]
fn unknown_object_is_an_error_and_stale_seq_is_silent() {
    let mut hub = Hub::new();
    let c = hub.connect();
    hub.publish(state_update(&world(), vec![]));
    hub.outgoing(c);
    let pose = r#"{"x":1,"y":1,"heading":0}"#;
    assert_eq!(
        hub.receive(c, &frame(10, "move_object", &format!(r#"{{"object":"ghost","pose":{pose}}}"#))),
        Receipt::Rejected("unknown object".into())
    );
    assert_eq!(hub.receive(c, &frame(11, "move_object", &format!(r#"{{"object":"v1","pose":{pose}}}"#))), Receipt::Queued(11));
    assert_eq!(hub.receive(c, &frame(11, "teleport_request", r#"{"x":0,"y":0}"#)), Receipt::Stale);
    assert_eq!(hub.receive(c, &frame(3, "teleport_request", r#"{"x":0,"y":0}"#)), Receipt::Stale);
    let out = hub.outgoing(c);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].message, Message::Error { reason: "unknown object".into(), in_reply_to: Some(10) });
    assert_eq!(hub.take_events().len(), 1);
}

#[test]
fn malformed_frames_get_a_reason() {
    let mut hub = Hub::new();
    let c = hub.connect();
    assert!(matches!(hub.receive(c, "{"), Receipt::Rejected(_)));
    assert!(matches!(hub.receive(c, &frame(1, "state_update", "{}")), Receipt::Rejected(_)));
    assert!(matches!(hub.receive(c, &frame(2, "error", r#"{"reason":"x"}"#)), Receipt::Rejected(r) if r.contains("not a client command")));
    let out = hub.outgoing(c);
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|e| matches!(&e.message, Message::Error { reason, .. } if !reason.is_empty())));
    assert_eq!(out.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn commands_are_acknowledged_in_the_next_state_update() {
    let mut hub = Hub::new();
    let c = hub.connect();
    let other = hub.connect();
    let mut sim = Sim::new(world(), TraceMode::Off);
    hub.publish(state_update(&sim.world, vec![]));
    assert_eq!(hub.receive(c, &frame(5, "teleport_request", r#"{"x":2,"y":3}"#)), Receipt::Queued(5));
    // published before the engine took the command: no ack yet
    assert_eq!(hub.outgoing(c)[0].ack, None);
    for e in hub.take_events() {
        sim.world.inject_event(e);
    }
    sim.run_ticks(2);
    assert!(sim.world.last_teleport.is_some());
    hub.publish(state_update(&sim.world, vec![]));
    let out = hub.outgoing(c);
    assert_eq!(out[0].ack, Some(5));
    let rest = hub.outgoing(other);
    assert_eq!(rest.len(), 1);
    assert_eq!(rest[0].ack, None);
}

#[test]
fn concurrent_edits_resolve_by_arrival() {
    let mut hub = Hub::new();
    let a = hub.connect();
    let b = hub.connect();
    let mut sim = Sim::new(world(), TraceMode::Off);
    hub.publish(state_update(&sim.world, vec![]));
    hub.receive(a, &frame(1, "edit_op", r#"{"object":"v1","pose":{"x":2.5,"y":2.0,"heading":0}}"#));
    hub.receive(b, &frame(1, "edit_op", r#"{"object":"v1","pose":{"x":1.5,"y":2.0,"heading":0}}"#));
    let events = hub.take_events();
    assert!(matches!(events[0], Event::EditOp { seq: 0, .. }));
    assert!(matches!(events[1], Event::EditOp { seq: 1, .. }));
    for e in events {
        sim.world.inject_event(e);
    }
    sim.run_ticks(2);
    hub.publish(state_update(&sim.world, vec![]));
    let (oa, ob) = (hub.outgoing(a), hub.outgoing(b));
    let (sa, sb) = (states(&oa)[0], states(&ob)[0]);
    assert_eq!(sa.message, sb.message);
    match &sa.message {
        Message::StateUpdate(s) => {
            assert_eq!(s.scene.get(&ObjectId::new("v1")).unwrap().pose, Pose::new(1.5, 2.0, 0.0));
        }
        _ => unreachable!(),
    }
}

#[test]
fn disconnected_clients_are_pruned() {
    let mut hub = Hub::new();
    let a = hub.connect();
    let b = hub.connect();
    hub.receive(a, &frame(1, "teleport_request", r#"{"x":0,"y":0}"#));
    hub.disconnect(a);
    assert_eq!(hub.clients(), 1);
    assert!(!hub.is_connected(a) && hub.is_connected(b));
    assert!(hub.take_events().is_empty());
    hub.publish(state_update(&world(), vec![]));
    assert!(hub.outgoing(a).is_empty());
    assert!(matches!(hub.receive(a, &frame(2, "teleport_request", r#"{"x":0,"y":0}"#)), Receipt::Rejected(_)));
}
