use std::process::Command;

fn roomsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_roomsim"));
    for (k, _) in std::env::vars() {
        if k.starts_with("ROOMSIM_") {
            c.env_remove(k);
        }
    }
    c
}

#[test]
fn headless_run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = roomsim()
        .args(["--headless", "--scenario", "empty", "--duration", "5", "--trace-out"])
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("300 ticks"), "{stdout}");
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 150);
    let digest = roomsim_core::trace::hash_trace(&roomsim_core::trace::parse_trace(&text).unwrap());
    assert!(stdout.trim_end().ends_with(&digest));
}

#[test]
fn environment_overrides_flags_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    std::fs::write(&events, "{\"t\":1.0,\"event\":{\"type\":\"highlight\",\"object\":\"missing\"}}\n").unwrap();
    let out = roomsim()
        .env("ROOMSIM_HEADLESS", "true")
        .env("ROOMSIM_SCENARIO", "corridor")
        .env("ROOMSIM_SEED", "3")
        .env("ROOMSIM_EVENTS", &events)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    // the script ends at 1 s, plus the 60 s default tail
    assert!(stdout.starts_with("3660 ticks"), "{stdout}");
    assert!(stdout.contains("1 rejected events"), "{stdout}");
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = roomsim().args(["--headless", "--scenario", "/no/such/file.json"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.json"));
    let out = roomsim().args(["--headless", "--realtime-factor", "-1"]).output().unwrap();
    assert!(!out.status.success());
}
