//! Bundled scenarios, the scripted evaluation walk and the random
//! scenario generator used by the safety suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::events::{Event, ScheduledEvent};
use crate::geometry::Polygon;
use crate::model::{
    FurnitureId, FurnitureKind, FurnitureSpec, ObjectId, PlayArea, Pose, RobotId, RobotSpec, SpecId,
    UserMode, Vector, VirtualObject,
};
use crate::oracle;
use crate::world::{parse_scenario, FurnitureInstance, RobotEntry, Scenario, UserEntry, UserMotion};

pub const EVALUATION: &str = include_str!("../../../scenarios/evaluation.json");
pub const CORRIDOR: &str = include_str!("../../../scenarios/corridor.json");
pub const EMPTY: &str = include_str!("../../../scenarios/empty.json");

pub fn evaluation() -> Scenario {
    parse_scenario(EVALUATION).expect("bundled scenario parses")
}

pub fn corridor() -> Scenario {
    parse_scenario(CORRIDOR).expect("bundled scenario parses")
}

pub fn empty() -> Scenario {
    parse_scenario(EMPTY).expect("bundled scenario parses")
}

/// Timing of the scripted evaluation walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkPlan {
    pub speed: f64,
    pub dwell: f64,
    pub cycles: usize,
    /// Distance from the chair center at which the user stops to sit,
    /// on the side they approach from.
    pub standoff: f64,
}

impl Default for WalkPlan {
    fn default() -> Self {
        Self { speed: 1.0, dwell: 90.0, cycles: 8, standoff: 0.45 }
    }
}

/// One visit of the scripted walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub object: ObjectId,
    pub depart: f64,
    pub arrive: f64,
}

/// The user visits the scene's chairs in order, sitting `dwell` seconds
/// at each; the next chair is highlighted on arrival.
pub fn chair_walk(scenario: &Scenario, plan: WalkPlan) -> (Vec<ScheduledEvent>, Vec<Visit>) {
    let chairs: Vec<&VirtualObject> = scenario.virtual_scene.iter().filter(|o| o.kind == FurnitureKind::Chair).collect();
    let origin = scenario.scene_origin;
    let seat = |i: usize| origin.compose(&chairs[i % chairs.len()].pose).position();
    let id = |i: usize| chairs[i % chairs.len()].id.clone();
    let mut events = vec![ScheduledEvent { t: 0.0, event: Event::Highlight { object: Some(id(0)) } }];
    let mut visits = Vec::new();
    let mut at = scenario.user.pose.position();
    let mut t = plan.dwell;
    for k in 0..plan.cycles {
        let chair = seat(k);
        let to = chair - (chair - at).normalized() * plan.standoff;
        events.push(ScheduledEvent { t, event: Event::UserMove { waypoints: vec![to], speed: plan.speed } });
        let arrive = t + at.distance(to) / plan.speed;
        visits.push(Visit { object: id(k), depart: t, arrive });
        events.push(ScheduledEvent { t: arrive, event: Event::UserMode { mode: UserMode::Seated } });
        if k + 1 < plan.cycles {
            events.push(ScheduledEvent { t: arrive, event: Event::Highlight { object: Some(id(k + 1)) } });
        }
        at = to;
        t = arrive + plan.dwell;
    }
    (events, visits)
}

pub fn evaluation_events() -> Vec<ScheduledEvent> {
    chair_walk(&evaluation(), WalkPlan::default()).0
}

/// Event script as JSON lines.
pub fn event_script(events: &[ScheduledEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect()
}

fn rect(w: f64, d: f64) -> Polygon<f64> {
    Polygon::rectangle(w, d)
}

pub fn chair_spec() -> FurnitureSpec {
    FurnitureSpec {
        id: SpecId::new("chair"),
        kind: FurnitureKind::Chair,
        footprint: rect(0.45, 0.45),
        underside_height: 0.40,
        top_height: 0.45,
        weight: 5.0,
        entry_point: Pose::new(-0.65, 0.0, 0.0),
        exit_point: None,
        leg_free_radius: None,
    }
}

pub fn table_spec() -> FurnitureSpec {
    FurnitureSpec {
        id: SpecId::new("table"),
        kind: FurnitureKind::Table,
        footprint: rect(1.0, 0.6),
        underside_height: 0.70,
        top_height: 0.75,
        weight: 11.2,
        entry_point: Pose::new(-0.9, 0.0, 0.0),
        exit_point: None,
        leg_free_radius: None,
    }
}

/// Knobs of the random scenario generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomParams {
    pub area: f64,
    pub margin: f64,
    pub robots: usize,
    pub max_furniture: usize,
    pub virtual_objects: usize,
    pub user_speed: f64,
    /// Clear gap kept between any two initial bodies.
    pub spacing: f64,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            area: 10.0,
            margin: 1.5,
            robots: 9,
            max_furniture: 10,
            virtual_objects: 6,
            user_speed: 0.5,
            spacing: 0.6,
        }
    }
}

/// Random scene with a wandering user, rejection sampled so that the
/// initial state is collision free with `spacing` between bodies.
pub fn random_scenario(seed: u64, p: RandomParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5afe);
    let area = PlayArea { width: p.area, depth: p.area, margin: p.margin };
    let spec = RobotSpec::default();
    let specs = vec![chair_spec(), table_spec()];
    // (center, bounding radius)
    let mut placed: Vec<(Vector, f64)> = Vec::new();
    let user = Vector::new(rng.gen_range(2.0..p.area - 2.0), rng.gen_range(2.0..p.area - 2.0));
    placed.push((user, 1.5));
    let lo = -p.margin + 0.6;
    let hi = p.area + p.margin - 0.6;
    let sample = |rng: &mut ChaCha8Rng, radius: f64, placed: &mut Vec<(Vector, f64)>| -> Option<Vector> {
        for _ in 0..500 {
            let c = Vector::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi));
            if placed.iter().all(|(q, r)| q.distance(c) >= r + radius + p.spacing) {
                placed.push((c, radius));
                return Some(c);
            }
        }
        None
    };
    let n_furniture = rng.gen_range(p.max_furniture / 2..=p.max_furniture);
    let mut furniture = Vec::new();
    for i in 0..n_furniture {
        let s = &specs[usize::from(rng.gen_bool(0.3))];
        // keep the approach corridor free as well
        let reach = s.entry_point.position().norm() + spec.body_radius;
        let Some(c) = sample(&mut rng, reach, &mut placed) else { continue };
        furniture.push(FurnitureInstance {
            id: FurnitureId::new(format!("f{i}")),
            spec: s.id.clone(),
            pose: Pose::new(c.x, c.y, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
        });
    }
    let mut robots = Vec::new();
    for i in 0..p.robots {
        let c = sample(&mut rng, spec.body_radius, &mut placed).expect("room for every robot");
        robots.push(RobotEntry {
            id: RobotId::new(format!("r{}", i + 1)),
            pose: Pose::new(c.x, c.y, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
        });
    }
    let mut virtual_scene = Vec::new();
    for i in 0..p.virtual_objects {
        let table = rng.gen_bool(0.3);
        let (kind, dims) = if table {
            (FurnitureKind::Table, Vector::new(1.0, 0.6))
        } else {
            (FurnitureKind::Chair, Vector::new(0.45, 0.45))
        };
        virtual_scene.push(VirtualObject {
            id: ObjectId::new(format!("v{i}")),
            kind,
            pose: Pose::new(
                rng.gen_range(1.5..p.area - 1.5),
                rng.gen_range(1.5..p.area - 1.5),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ),
            dimensions: dims,
            touchable: true,
            sliding: None,
        });
    }
    Scenario {
        name: format!("random-{seed}"),
        play_area: area,
        robot_spec: spec,
        robots,
        furniture_specs: specs,
        furniture_instances: furniture,
        virtual_scene,
        scene_origin: Pose::identity(),
        user: UserEntry {
            pose: Pose::new(user.x, user.y, 0.0),
            safety_radius: 0.6,
            reach_radius: 1.5,
            body_radius: 0.25,
            motion: UserMotion::Wander { speed: p.user_speed, max_dwell: 10.0, inset: 0.5 },
            yield_distance: Some(0.15),
        },
        seed,
        config: Default::default(),
    }
}

/// Safety-suite scenario for `seed`.
pub fn random_safety(seed: u64) -> Scenario {
    random_scenario(seed, RandomParams::default())
}

/// Whether the initial placement passes the independent oracle.
pub fn initially_clear(s: &Scenario) -> bool {
    crate::world::World::from_scenario(s.clone()).map(|w| oracle::check_collisions(&w).is_empty()).unwrap_or(false)
}
