//! End-to-end acceptance checks. Runs without the libtest harness and
//! prints one line per criterion; exits non-zero if any fails.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomsim_core::assignment::solve_matrix;
use roomsim_core::events::{parse_event_script, LogEntry};
use roomsim_core::geometry::normalize_angle;
use roomsim_core::manipulation::{estimate_lift_height, LiftState, MarkerFrame};
use roomsim_core::model::{PlayArea, RobotSpec};
use roomsim_core::presets::{self, chair_walk, WalkPlan};
use roomsim_core::world::{RobotEntry, UserEntry, UserMotion};
use roomsim_core::{oracle, Pose, RobotId, Scenario, Sim, TraceMode, Vector, World};

// tolerances and budgets
const PLACE_TOL_M: f64 = 0.10;
const PLACE_TOL_DEG: f64 = 10.0;
const ASSIGN_MATRICES: usize = 1000;
const ASSIGN_BUDGET_S: f64 = 5.0;
const SAFETY_SEEDS: u64 = 100;
const SAFETY_MINUTES: f64 = 5.0;
const SAFETY_BUDGET_S: f64 = 600.0;
const CONVERGENCE_PAIRS: usize = 200;
const STOP_DISTANCE: f64 = 0.05;
const LIFT_FULL_S: f64 = 53.85;
const MARKER_TOL: f64 = 1e-9;
const THROUGHPUT_MIN: f64 = 10.0;
/// Trace digest of the first 120 s of the scripted evaluation.
const EVALUATION_120_DIGEST: &str = "6b6103df6f920faa3867aa738039f01582fc7ba9431576ca6f48c00388c32878";

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, name: &str, pass: bool, detail: String) {
        println!("criterion {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        self.lines.push((n, pass, detail));
    }
}

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(scenarios_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn brute_force(m: &[Vec<f64>]) -> f64 {
    fn go(m: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, free_rows: usize, best: &mut f64) {
        if row == m.len() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        let cols = m[0].len();
        let rows_left = m.len() - row;
        let cols_left = used.iter().filter(|u| !**u).count();
        // a row may stay unmatched only while enough rows remain for the columns
        if rows_left > cols_left && free_rows > 0 {
            go(m, row + 1, used, acc, free_rows - 1, best);
        }
        for j in 0..cols {
            if !used[j] {
                used[j] = true;
                go(m, row + 1, used, acc + m[row][j], free_rows, best);
                used[j] = false;
            }
        }
    }
    let rows = m.len();
    let cols = m[0].len();
    let mut best = f64::INFINITY;
    go(m, 0, &mut vec![false; cols], 0.0, rows.saturating_sub(cols), &mut best);
    best
}

fn criterion_1(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..ASSIGN_MATRICES {
        let rows = rng.gen_range(1..=7);
        let cols = rng.gen_range(1..=7);
        let robots: Vec<(f64, f64)> = (0..rows).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let targets: Vec<(f64, f64)> = (0..cols).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let m: Vec<Vec<f64>> = robots
            .iter()
            .map(|a| targets.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let matched = solve_matrix(&m).expect("valid matrix");
        let mut cost = 0.0;
        for (i, c) in matched.iter().enumerate() {
            if let Some(j) = c {
                cost += m[i][*j];
            }
        }
        if cost != brute_force(&m) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.record(
        1,
        "assignment optimality",
        mismatches == 0 && secs < ASSIGN_BUDGET_S,
        format!("{ASSIGN_MATRICES} matrices, {mismatches} differ from brute force, {secs:.2} s"),
    );
}

fn within(a: &Pose, b: &Pose) -> bool {
    a.position().distance(b.position()) <= PLACE_TOL_M && normalize_angle(a.heading - b.heading).abs() <= PLACE_TOL_DEG.to_radians()
}

fn criterion_2(r: &mut Report) {
    let scenario = roomsim_core::parse_scenario(&read("evaluation.json")).expect("evaluation scenario");
    let events = parse_event_script(&read("evaluation.events.jsonl")).expect("event script");
    let (_, visits) = chair_walk(&scenario, WalkPlan::default());
    let spec = &scenario.furniture_specs[0];
    let robot = scenario.robot_spec;
    let lift_cycle = 2.0 * (spec.underside_height + scenario.config.manipulation.lift_overshoot - robot.lift_min) / robot.lift_speed;
    let nav = 7.0 / robot.max_speed;
    let feasible = nav <= 35.0 && lift_cycle <= 20.0 && nav + lift_cycle < 90.0;

    let mut world = World::from_scenario(scenario).expect("world");
    world.schedule(&events);
    let mut sim = Sim::new(world, TraceMode::Off);
    sim.collect_log = true;
    let end = visits.last().expect("visits").arrive + 1.0;
    let mut arrivals = 0;
    let mut placed = 0;
    while sim.world.clock.time() < end {
        sim.step();
        for (_, e) in std::mem::take(&mut sim.log) {
            if let LogEntry::UserArrived { .. } = e {
                let Some(v) = visits.get(arrivals) else { continue };
                arrivals += 1;
                let obj = sim.world.scene.get(&v.object).expect("visited object").clone();
                let target = sim.world.scene.physical_pose(&obj);
                if sim.world.furniture.iter().any(|f| f.carried_by.is_none() && within(&f.pose, &target)) {
                    placed += 1;
                }
            }
        }
    }
    let violations = sim.violation_ticks;
    r.record(
        2,
        "evaluation replay",
        feasible && arrivals == visits.len() && placed == visits.len() && violations == 0,
        format!(
            "{placed}/{} cycles placed, {arrivals} arrivals, {violations} violation ticks, eta check {nav:.1} s + {lift_cycle:.2} s < 90 s",
            visits.len()
        ),
    );
}

fn criterion_3(r: &mut Report) {
    let start = Instant::now();
    let next = Arc::new(AtomicU64::new(0));
    let failures = Arc::new(Mutex::new(Vec::new()));
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let next = next.clone();
            let failures = failures.clone();
            std::thread::spawn(move || loop {
                let seed = next.fetch_add(1, Ordering::SeqCst);
                if seed >= SAFETY_SEEDS {
                    break;
                }
                let world = World::from_scenario(presets::random_safety(seed)).expect("random scenario");
                let mut sim = Sim::new(world, TraceMode::Off);
                sim.run_for(SAFETY_MINUTES * 60.0);
                if sim.violation_ticks > 0 {
                    failures.lock().expect("lock").push((seed, sim.violations[0].clone()));
                }
            })
        })
        .collect();
    for h in handles {
        h.join().expect("worker");
    }
    let secs = start.elapsed().as_secs_f64();
    let failures = failures.lock().expect("lock");
    let first = failures.iter().min_by_key(|f| f.0).map(|f| format!(", first seed {} {:?}", f.0, f.1)).unwrap_or_default();
    r.record(
        3,
        "safety suite",
        failures.is_empty() && secs < SAFETY_BUDGET_S,
        format!("{SAFETY_SEEDS} seeds x {SAFETY_MINUTES} min, {} with violations, {secs:.1} s wall on {workers} threads{first}", failures.len()),
    );
}

fn open_space(start: Pose) -> Scenario {
    Scenario {
        name: "open".into(),
        play_area: PlayArea { width: 40.0, depth: 40.0, margin: 0.0 },
        robot_spec: RobotSpec::default(),
        robots: vec![RobotEntry { id: RobotId::new("r1"), pose: start }],
        furniture_specs: vec![],
        furniture_instances: vec![],
        virtual_scene: vec![],
        scene_origin: Pose::identity(),
        user: UserEntry {
            pose: Pose::new(39.0, 39.0, 0.0),
            safety_radius: 0.6,
            reach_radius: 1.5,
            body_radius: 0.25,
            motion: UserMotion::Still,
            yield_distance: None,
        },
        seed: 0,
        config: Default::default(),
    }
}

fn criterion_4(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_miss: f64 = 0.0;
    for _ in 0..CONVERGENCE_PAIRS {
        let start = Pose::new(rng.gen_range(8.0..12.0), rng.gen_range(8.0..12.0), rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let (goal, d) = loop {
            let g = Vector::new(rng.gen_range(5.0..15.0), rng.gen_range(5.0..15.0));
            let d = g.distance(start.position());
            if d <= 5.0 {
                break (g, d);
            }
        };
        let limit = 2.0 * d / 0.2 + 15.0;
        let mut world = World::from_scenario(open_space(start)).expect("open space");
        let id = RobotId::new("r1");
        world.send_robot(&id, Some(goal));
        let mut sim = Sim::new(world, TraceMode::Off);
        let mut arrived: Option<f64> = None;
        while sim.world.clock.time() <= limit + 1.0 {
            sim.step();
            let rb = &sim.world.robots[0];
            let still = rb.state.wheel_left == 0 && rb.state.wheel_right == 0;
            let near = rb.state.pose.position().distance(goal) <= STOP_DISTANCE;
            match (still && near, arrived) {
                (true, None) => arrived = Some(sim.world.clock.time()),
                (false, Some(_)) => arrived = None,
                _ => {}
            }
        }
        let rb = &sim.world.robots[0];
        let miss = rb.state.pose.position().distance(goal);
        worst_miss = worst_miss.max(miss);
        if let Some(t) = arrived {
            worst_ratio = worst_ratio.max(t / limit);
            if t <= limit && miss <= STOP_DISTANCE && rb.state.wheel_left == 0 && rb.state.wheel_right == 0 {
                ok += 1;
            }
        }
    }
    r.record(
        4,
        "controller convergence",
        ok == CONVERGENCE_PAIRS,
        format!("{ok}/{CONVERGENCE_PAIRS} settled, worst final miss {worst_miss:.4} m, worst time {:.0}% of budget", worst_ratio * 100.0),
    );
}

/// Physics ticks the engine spends raising the lift for a piece whose
/// underside sits just below full extension, and the largest per-tick rise.
fn engine_full_lift() -> (u64, f64) {
    let mut spec = presets::chair_spec();
    spec.id = roomsim_core::model::SpecId::new("tall");
    spec.underside_height = 0.98;
    spec.top_height = 1.03;
    let mut s = open_space(Pose::new(1.0, 1.0, 0.0));
    s.furniture_specs = vec![spec.clone()];
    s.furniture_instances = vec![roomsim_core::world::FurnitureInstance {
        id: roomsim_core::FurnitureId::new("f1"),
        spec: spec.id.clone(),
        pose: Pose::new(3.0, 1.0, 0.0),
    }];
    s.virtual_scene = vec![roomsim_core::model::VirtualObject {
        id: roomsim_core::ObjectId::new("o1"),
        kind: spec.kind,
        pose: Pose::new(3.0, 4.0, 0.0),
        dimensions: Vector::new(0.45, 0.45),
        touchable: true,
        sliding: None,
    }];
    let mut world = World::from_scenario(s).expect("lift scene");
    world.inject_event(roomsim_core::Event::Highlight { object: Some(roomsim_core::ObjectId::new("o1")) });
    let mut sim = Sim::new(world, TraceMode::Off);
    let mut rising = 0;
    let mut max_rise: f64 = 0.0;
    let mut last = sim.world.robots[0].state.lift_height;
    while sim.world.clock.time() < 120.0 && last < 1.0 {
        sim.step();
        let h = sim.world.robots[0].state.lift_height;
        if h > last {
            rising += 1;
            max_rise = max_rise.max(h - last);
        }
        last = h;
    }
    (rising, max_rise)
}

fn criterion_5(r: &mut Report) {
    let dt = 1.0 / 60.0;
    let mut lift = LiftState::collapsed(0.30, 1.00, 0.013);
    lift.set_target(1.00);
    let mut ticks = 0u64;
    while !lift.at_target() {
        lift.step(dt);
        ticks += 1;
    }
    let t = ticks as f64 * dt;
    let (engine_ticks, max_rise) = engine_full_lift();
    let te = engine_ticks as f64 * dt;
    r.record(
        5,
        "lift timing",
        (t - LIFT_FULL_S).abs() <= dt && (te - LIFT_FULL_S).abs() <= dt && max_rise <= 0.013 * dt + 1e-12,
        format!(
            "0.30 -> 1.00 m in {ticks} ticks = {t:.4} s standalone, {te:.4} s in the engine, expected {LIFT_FULL_S} s +- {dt:.4} s, max rise {:.3e} m/tick",
            max_rise
        ),
    );
}

fn criterion_6(r: &mut Report) {
    let world = roomsim_core::load_scenario(&read("corridor.json")).expect("corridor");
    // settle one second, then teleport on a control boundary
    let mut sim = Sim::new(world, TraceMode::Off);
    sim.run_for(1.0);
    while !sim.world.clock.is_control_tick() {
        sim.step();
    }
    let user = sim.world.user.avatar;
    let virt = sim.world.scene.to_virtual(&user.pose);
    let request_tick = sim.world.clock.tick;
    sim.world.inject_event(roomsim_core::Event::TeleportRequest { x: virt.x + 5.0, y: virt.y, heading: None });
    sim.step();
    let record = sim.world.last_teleport.clone();
    let computed = sim.world.scheduler.required.iter().map(|q| q.object.clone()).collect::<Vec<_>>();

    // independent reach test: rectangle footprint against the reach disc
    let new_virtual = Pose::new(virt.x + 5.0, virt.y, virt.heading);
    let origin = user.pose.compose(&new_virtual.inverse());
    let mut expected: Vec<_> = sim
        .world
        .scene
        .objects
        .iter()
        .filter(|o| o.touchable)
        .filter(|o| {
            let p = origin.compose(&o.pose);
            let (s, c) = p.heading.sin_cos();
            let rel = user.pose.position() - p.position();
            let lx = c * rel.x + s * rel.y;
            let ly = -s * rel.x + c * rel.y;
            let dx = (lx.abs() - o.dimensions.x / 2.0).max(0.0);
            let dy = (ly.abs() - o.dimensions.y / 2.0).max(0.0);
            (dx * dx + dy * dy).sqrt() <= user.reach_radius
        })
        .map(|o| o.id.clone())
        .collect();
    expected.sort();
    let same_tick = record.as_ref().map(|t| t.tick) == Some(request_tick) && computed == expected;

    let eta = record.as_ref().map(|t| t.eta_bound).unwrap_or(0.0);
    let deadline = request_tick as f64 / 60.0 + eta;
    let mut placed_at: Option<f64> = None;
    while sim.world.clock.time() < deadline && placed_at.is_none() {
        sim.step();
        let all = expected.iter().all(|id| {
            let o = sim.world.scene.get(id).expect("object").clone();
            let target = sim.world.scene.physical_pose(&o);
            sim.world.furniture.iter().any(|f| f.carried_by.is_none() && within(&f.pose, &target))
        });
        let idle = sim.world.robots.iter().all(|r| r.state.carrying.is_none());
        if all && idle {
            placed_at = Some(sim.world.clock.time());
        }
    }
    // let the surplus finish parking within the same bound
    while sim.world.clock.time() < deadline {
        sim.step();
    }
    let world = &sim.world;
    let area = world.area;
    let rect = [(0.0, 0.0), (area.width, 0.0), (area.width, area.depth), (0.0, area.depth)];
    let bound: Vec<_> = world.scheduler.bindings.values().map(|b| b.furniture.clone()).collect();
    let surplus_parked = world.furniture.iter().filter(|f| !bound.contains(&f.id)).all(|f| {
        let poly: Vec<(f64, f64)> = world.world_footprint(f).vertices.iter().map(|v| (v.x, v.y)).collect();
        let outside = oracle::polygon_polygon(&rect, &poly) <= 0.0;
        let in_band = poly.iter().all(|p| area.contains_with_margin(Vector::new(p.0, p.1)));
        outside && in_band && f.carried_by.is_none()
    });
    r.record(
        6,
        "teleport reconfiguration",
        same_tick && placed_at.is_some() && surplus_parked && sim.violation_ticks == 0,
        format!(
            "required {:?} recomputed on tick {} (request {request_tick}), placed at {:.1} s vs bound {:.1} s, surplus parked {surplus_parked}, {} violation ticks",
            computed.iter().map(|o| o.as_str()).collect::<Vec<_>>(),
            record.as_ref().map(|t| t.tick).unwrap_or(0),
            placed_at.unwrap_or(f64::NAN),
            deadline,
            sim.violation_ticks
        ),
    );
}

fn traced_digest(scenario: Scenario, seconds: f64) -> (String, Vec<roomsim_core::trace::TraceRecord>) {
    let mut world = World::from_scenario(scenario).expect("world");
    world.schedule(&presets::evaluation_events());
    let mut sim = Sim::new(world, TraceMode::Keep);
    sim.run_for(seconds);
    (sim.digest(), sim.records)
}

fn criterion_7(r: &mut Report) {
    let (a, records) = traced_digest(presets::evaluation(), 120.0);
    let (b, _) = traced_digest(presets::evaluation(), 120.0);
    let (s1, _) = {
        let mut sim = Sim::new(World::from_scenario(presets::random_safety(1)).expect("world"), TraceMode::Hash);
        sim.run_for(20.0);
        (sim.digest(), ())
    };
    let (s2, _) = {
        let mut sim = Sim::new(World::from_scenario(presets::random_safety(2)).expect("world"), TraceMode::Hash);
        sim.run_for(20.0);
        (sim.digest(), ())
    };
    let replayed = roomsim_core::sim::replay(World::from_scenario(presets::evaluation()).expect("world"), &records, TraceMode::Hash).digest();
    let pass = a == b && s1 != s2 && replayed == a && a == EVALUATION_120_DIGEST;
    r.record(
        7,
        "determinism",
        pass,
        format!(
            "two runs equal {}, seeds differ {}, replay equal {}, digest {} matches pin {}; only one platform available here, the pinned digest is the cross-platform check",
            a == b,
            s1 != s2,
            replayed == a,
            &a[..12],
            a == EVALUATION_120_DIGEST
        ),
    );
}

fn criterion_8(r: &mut Report) {
    let scenario = presets::evaluation();
    let (_, visits) = chair_walk(&scenario, WalkPlan::default());
    let mut world = World::from_scenario(scenario).expect("world");
    world.schedule(&presets::evaluation_events());
    let mut sim = Sim::new(world, TraceMode::Hash);
    let seconds = visits.last().expect("visits").arrive + 10.0;
    let start = Instant::now();
    sim.run_for(seconds);
    let wall = start.elapsed().as_secs_f64();
    let factor = seconds / wall;
    r.record(8, "throughput", factor >= THROUGHPUT_MIN, format!("{seconds:.0} sim s in {wall:.3} wall s = {factor:.0}x real time"));
}

fn criterion_9(r: &mut Report) {
    let frame = MarkerFrame::<f64>::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = rng.gen_range(0.30..=1.00);
        let tilt = frame.tilt_for(h).expect("height in range");
        let back = estimate_lift_height(&frame, tilt).expect("tilt in range");
        worst = worst.max((back - h).abs());
    }
    let lo = estimate_lift_height(&frame, frame.tilt_min).expect("anchor");
    let hi = estimate_lift_height(&frame, frame.tilt_max).expect("anchor");
    r.record(
        9,
        "marker height estimator",
        worst <= MARKER_TOL && lo == 0.30 && hi == 1.00,
        format!("worst round trip error {worst:.2e} m, anchors {lo} m and {hi} m"),
    );
}

fn main() {
    // `cargo test -- --list` style invocations only enumerate
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut report = Report { lines: Vec::new() };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criterion_7(&mut report);
    criterion_8(&mut report);
    criterion_9(&mut report);
    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", report.lines.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
