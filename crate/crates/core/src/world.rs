//! Live world state, scenario loading and the fleet-level queries used by
//! the planner and the scheduler.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{rebalance_candidates, Candidate};
use crate::controller::{PidGains, PidState, SpeedEnvelope};
use crate::events::{EventQueue, LogEntry};
use crate::manipulation::{LiftState, ManipulationParams};
use crate::model::{
    clearance_check, furniture_footprint, FurnitureId, FurnitureSpec, FurnitureState,
    ManipulationPhase, ObjectId, PlayArea, Pose, RobotId, RobotSpec, RobotState, SpecId,
    UserAvatar, UserMode, Vector, VirtualObject, VirtualScene,
};
use crate::oracle;
use crate::planner::{AgentDisc, AgentKind, RvoParams};
use crate::scheduler::{ParkingLot, PoolEntry, ProxyTask, Scheduler, SchedulerParams};
use crate::sim::SimClock;

/// Engine tunables. Every field has a default; scenarios override any
/// subset under `config`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub physics_hz: f64,
    pub control_divisor: u32,
    pub planner: RvoParams<f64>,
    pub pid: PidGains<f64>,
    pub envelope: SpeedEnvelope<f64>,
    pub manipulation: ManipulationParams,
    pub scheduler: SchedulerParams,
    /// Wheel command amplitude used when turning in place.
    pub spin_amplitude: f64,
    /// Gap below which the base may not drive toward a neighbor.
    pub governor_buffer: f64,
    /// Lookahead of the forward-motion check along the actual heading.
    pub governor_horizon: f64,
    /// Physics ticks between a control decision and the wheels applying it.
    pub control_delay_ticks: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics_hz: 60.0,
            control_divisor: 2,
            planner: RvoParams::default(),
            pid: PidGains::default(),
            envelope: SpeedEnvelope::default(),
            manipulation: ManipulationParams::default(),
            scheduler: SchedulerParams::default(),
            spin_amplitude: 128.0,
            governor_buffer: 0.03,
            governor_horizon: 1.0,
            control_delay_ticks: 0,
        }
    }
}

/// What a robot's base is trying to do this control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DriveIntent {
    Hold,
    Navigate {
        goal: Vector,
        /// Furniture left out of the obstacle set (the piece being approached).
        exclude: Option<FurnitureId>,
        stop_distance: f64,
    },
    Spin { heading: f64 },
}

/// Runtime record of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub state: RobotState,
    pub spec: RobotSpec,
    pub pid: PidState<f64>,
    pub lift: LiftState<f64>,
    /// Furniture whose task this robot serves.
    pub task: Option<FurnitureId>,
    /// Carried piece pose in the robot frame.
    pub pickup_offset: Option<Pose>,
    pub intent: DriveIntent,
    pub aligning: bool,
    pub approach: Option<(Vector, Vector)>,
    pub fault: Option<String>,
    /// Actual planar velocity over the last physics tick.
    pub velocity: Vector,
    pub occluded: bool,
    pub tracking_lost: bool,
    pub estimate: Pose,
    /// Issued wheel commands with the tick they take effect.
    pub pending_commands: VecDeque<(u64, i32, i32)>,
    /// Operator goal used instead of a parking slot while idle.
    pub goto: Option<Vector>,
}

impl Robot {
    pub fn new(id: RobotId, pose: Pose, spec: RobotSpec, gains: PidGains<f64>) -> Self {
        Self {
            state: RobotState {
                id,
                pose,
                wheel_left: 0,
                wheel_right: 0,
                lift_height: spec.lift_min,
                carrying: None,
                phase: ManipulationPhase::Idle,
            },
            spec,
            pid: PidState::new(gains),
            lift: LiftState::collapsed(spec.lift_min, spec.lift_max, spec.lift_speed),
            task: None,
            pickup_offset: None,
            intent: DriveIntent::Hold,
            aligning: false,
            approach: None,
            fault: None,
            velocity: Vector::zero(),
            occluded: false,
            tracking_lost: false,
            estimate: pose,
            pending_commands: VecDeque::new(),
            goto: None,
        }
    }

    pub fn id(&self) -> &RobotId {
        &self.state.id
    }

    /// Whether this robot will move this tick under its own control.
    pub fn is_mobile(&self) -> bool {
        match &self.intent {
            DriveIntent::Navigate { goal, stop_distance, .. } => {
                !self.tracking_lost && self.state.pose.position().distance(*goal) >= *stop_distance
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UserMotion {
    Still,
    /// Random waypoints inside the play area inset by `inset`, walked at
    /// `speed` with a random pause of up to `max_dwell` seconds.
    Wander { speed: f64, max_dwell: f64, inset: f64 },
}

/// Scripted user kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub avatar: UserAvatar,
    pub waypoints: VecDeque<Vector>,
    pub speed: f64,
    pub velocity: Vector,
    pub motion: UserMotion,
    pub dwell_ticks: u64,
    /// Gap at which the user stops rather than walk into a robot.
    pub yield_distance: Option<f64>,
    pub blocked_ticks: u64,
    pub yield_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotEntry {
    pub id: RobotId,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FurnitureInstance {
    pub id: FurnitureId,
    pub spec: SpecId,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub pose: Pose,
    #[serde(default = "default_safety")]
    pub safety_radius: f64,
    #[serde(default = "default_reach")]
    pub reach_radius: f64,
    #[serde(default = "default_body")]
    pub body_radius: f64,
    #[serde(default = "default_motion")]
    pub motion: UserMotion,
    #[serde(default)]
    pub yield_distance: Option<f64>,
}

fn default_safety() -> f64 {
    0.6
}
fn default_reach() -> f64 {
    1.5
}
fn default_body() -> f64 {
    0.25
}
fn default_motion() -> UserMotion {
    UserMotion::Still
}

/// Scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub play_area: PlayArea,
    #[serde(default)]
    pub robot_spec: RobotSpec,
    pub robots: Vec<RobotEntry>,
    #[serde(default)]
    pub furniture_specs: Vec<FurnitureSpec>,
    #[serde(default)]
    pub furniture_instances: Vec<FurnitureInstance>,
    #[serde(default)]
    pub virtual_scene: Vec<VirtualObject>,
    #[serde(default)]
    pub scene_origin: Pose,
    pub user: UserEntry,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("initial collision between {0} and {1}")]
    InitialCollision(String, String),
    #[error("furniture {furniture} references unknown spec {spec}")]
    UnknownSpec { furniture: FurnitureId, spec: SpecId },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("spec {spec}: {reason}")]
    InvalidSpec { spec: SpecId, reason: String },
}

/// Parses and validates a scenario document.
pub fn parse_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    serde_json::from_str(document).map_err(|e| ScenarioError::Schema(e.to_string()))
}

/// Builds a world from a scenario document.
pub fn load_scenario(document: &str) -> Result<World, ScenarioError> {
    World::from_scenario(parse_scenario(document)?)
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), ScenarioError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ScenarioError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    let schema = |m: &str| Err(ScenarioError::Schema(m.to_string()));
    let a = &s.play_area;
    if !(a.width > 0.0 && a.depth > 0.0 && a.margin >= 0.0) {
        return schema("play_area needs width, depth > 0 and margin >= 0");
    }
    let r = &s.robot_spec;
    if !(r.lift_min < r.lift_max && r.max_speed > 0.0 && r.wheel_cmd_max > 0 && r.body_radius > 0.0 && r.track_width > 0.0 && r.lift_speed > 0.0) {
        return schema("robot_spec violates lift_min < lift_max, positive speeds and sizes");
    }
    let u = &s.user;
    if !(u.reach_radius >= u.safety_radius && u.safety_radius > 0.0 && u.body_radius > 0.0) {
        return schema("user needs reach_radius >= safety_radius > 0 and body_radius > 0");
    }
    let c = &s.config;
    if !(c.physics_hz > 0.0 && c.control_divisor > 0) {
        return schema("config needs physics_hz > 0 and control_divisor > 0");
    }
    check_unique(s.robots.iter().map(|r| r.id.as_str()))?;
    check_unique(s.furniture_specs.iter().map(|f| f.id.as_str()))?;
    check_unique(s.furniture_instances.iter().map(|f| f.id.as_str()))?;
    check_unique(s.virtual_scene.iter().map(|o| o.id.as_str()))?;
    let poses = s.robots.iter().map(|r| r.pose).chain(s.furniture_instances.iter().map(|f| f.pose)).chain([s.user.pose, s.scene_origin]);
    for p in poses {
        if !p.is_finite() {
            return schema("non-finite pose");
        }
    }
    for spec in &s.furniture_specs {
        let bad = |reason: &str| ScenarioError::InvalidSpec { spec: spec.id.clone(), reason: reason.to_string() };
        if crate::geometry::Polygon::convex(spec.footprint.vertices.clone()).as_ref() != Some(&spec.footprint) {
            return Err(bad("footprint must be a convex counterclockwise polygon"));
        }
        if !spec.footprint.contains(Vector::zero()) {
            return Err(bad("footprint must contain its local origin"));
        }
        if !(spec.weight >= 0.0 && spec.underside_height >= 0.0 && spec.top_height >= spec.underside_height) {
            return Err(bad("weight and heights must be non-negative with top above underside"));
        }
        let clear = spec.circumradius() + r.body_radius;
        for (name, p) in [("entry", spec.entry_point), ("exit", spec.exit_pose())] {
            if Vector::new(p.x, p.y).norm() <= clear {
                return Err(bad(&format!("{name} point must lie outside the footprint disc plus the robot radius")));
            }
        }
    }
    for f in &s.furniture_instances {
        if !s.furniture_specs.iter().any(|sp| sp.id == f.spec) {
            return Err(ScenarioError::UnknownSpec { furniture: f.id.clone(), spec: f.spec.clone() });
        }
    }
    Ok(())
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub name: String,
    pub config: SimConfig,
    pub area: PlayArea,
    pub robots: Vec<Robot>,
    pub specs: BTreeMap<SpecId, FurnitureSpec>,
    pub furniture: Vec<FurnitureState>,
    pub scene: VirtualScene,
    pub user: UserState,
    pub scheduler: Scheduler,
    pub parking: ParkingLot,
    /// Open tasks, one per furniture piece.
    pub tasks: BTreeMap<FurnitureId, ProxyTask>,
    pub clock: SimClock,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    pub events: EventQueue,
    /// Entries since the last trace record.
    pub log: Vec<LogEntry>,
    /// Pieces that faulted during a lift and are no longer scheduled.
    pub faulted: BTreeSet<FurnitureId>,
    pub occluded_furniture: BTreeSet<FurnitureId>,
    pub last_plan: Option<PlanStepCache>,
    pub last_teleport: Option<TeleportRecord>,
}

/// Summary of the most recent teleport reconfiguration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportRecord {
    pub tick: u64,
    pub eta_bound: f64,
    pub required: Vec<ObjectId>,
    pub unrenderable: Vec<ObjectId>,
}

/// Planner output kept for inspection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanStepCache {
    pub velocities: BTreeMap<RobotId, Vector>,
}

impl World {
    pub fn from_scenario(s: Scenario) -> Result<Self, ScenarioError> {
        validate(&s)?;
        let mut robots: Vec<Robot> = s
            .robots
            .iter()
            .map(|r| Robot::new(r.id.clone(), r.pose, s.robot_spec, s.config.pid))
            .collect();
        robots.sort_by(|a, b| a.state.id.cmp(&b.state.id));
        let specs: BTreeMap<SpecId, FurnitureSpec> =
            s.furniture_specs.iter().map(|f| (f.id.clone(), f.clone())).collect();
        let mut furniture: Vec<FurnitureState> = s
            .furniture_instances
            .iter()
            .map(|f| FurnitureState {
                id: f.id.clone(),
                spec: f.spec.clone(),
                pose: f.pose,
                carried_by: None,
                elevation_offset: 0.0,
            })
            .collect();
        furniture.sort_by(|a, b| a.id.cmp(&b.id));
        let avatar = UserAvatar {
            pose: s.user.pose,
            safety_radius: s.user.safety_radius,
            reach_radius: s.user.reach_radius,
            body_radius: s.user.body_radius,
            mode: UserMode::Walking,
        };
        let user = UserState {
            avatar,
            waypoints: VecDeque::new(),
            speed: 0.0,
            velocity: Vector::zero(),
            motion: s.user.motion,
            dwell_ticks: 0,
            yield_distance: s.user.yield_distance,
            blocked_ticks: 0,
            yield_events: 0,
        };
        let parking = ParkingLot::for_area(&s.play_area, s.config.scheduler.parking_spacing);
        let mut world = World {
            name: s.name.clone(),
            config: s.config,
            area: s.play_area,
            robots,
            specs,
            furniture,
            scene: VirtualScene { objects: s.virtual_scene.clone(), origin: s.scene_origin },
            user,
            scheduler: Scheduler::new(s.config.scheduler),
            parking,
            tasks: BTreeMap::new(),
            clock: SimClock::new(1.0 / s.config.physics_hz, s.config.control_divisor),
            seed: s.seed,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            events: EventQueue::default(),
            log: Vec::new(),
            faulted: BTreeSet::new(),
            occluded_furniture: BTreeSet::new(),
            last_plan: None,
            last_teleport: None,
        };
        if let Some(v) = oracle::check_collisions(&world).into_iter().next() {
            return Err(ScenarioError::InitialCollision(v.a, v.b));
        }
        world.claim_initial_slots();
        Ok(world)
    }

    fn claim_initial_slots(&mut self) {
        let clear = 0.6;
        for r in &self.robots {
            let p = r.state.pose.position();
            let hit = self
                .parking
                .slots
                .iter()
                .enumerate()
                .filter(|(i, s)| s.position.distance(p) < clear && !self.parking.claims.contains_key(i))
                .map(|(i, _)| i)
                .next();
            if let Some(i) = hit {
                self.parking.claims.insert(i, crate::scheduler::SlotClaim::Robot(r.state.id.clone()));
            }
        }
    }

    pub fn robot_index(&self, id: &RobotId) -> Option<usize> {
        self.robots.iter().position(|r| &r.state.id == id)
    }

    pub fn furniture_index(&self, id: &FurnitureId) -> Option<usize> {
        self.furniture.iter().position(|f| &f.id == id)
    }

    pub fn spec_of(&self, f: &FurnitureState) -> &FurnitureSpec {
        &self.specs[&f.spec]
    }

    /// Radius of the disc a robot sweeps, grown to cover a carried piece.
    pub fn robot_radius(&self, idx: usize) -> f64 {
        let r = &self.robots[idx];
        let body = r.spec.body_radius;
        match (&r.state.carrying, &r.pickup_offset) {
            (Some(fid), Some(off)) => {
                let f = &self.furniture[self.furniture_index(fid).expect("carried piece exists")];
                let c = self.spec_of(f).circumradius();
                body.max(Vector::new(off.x, off.y).norm() + c)
            }
            _ => body,
        }
    }

    pub fn robot_disc(&self, idx: usize) -> AgentDisc<f64> {
        let r = &self.robots[idx];
        AgentDisc {
            position: r.state.pose.position(),
            velocity: r.velocity,
            radius: self.robot_radius(idx),
            max_speed: r.spec.max_speed,
            kind: if r.state.carrying.is_some() { AgentKind::RobotCarrying } else { AgentKind::Robot },
        }
    }

    /// Obstacles seen by robot `idx`: other robots, grounded furniture
    /// (minus `exclude`) and the user.
    pub fn neighbor_discs(&self, idx: usize, exclude: Option<&FurnitureId>) -> Vec<AgentDisc<f64>> {
        let mut out = Vec::with_capacity(self.robots.len() + self.furniture.len());
        for (j, other) in self.robots.iter().enumerate() {
            if j == idx {
                continue;
            }
            let mut d = self.robot_disc(j);
            if !other.is_mobile() {
                d.kind = AgentKind::StaticObstacle;
            }
            out.push(d);
        }
        for f in &self.furniture {
            if f.carried_by.is_some() || Some(&f.id) == exclude {
                continue;
            }
            out.push(AgentDisc {
                position: f.pose.position(),
                velocity: Vector::zero(),
                radius: self.spec_of(f).circumradius(),
                max_speed: 0.0,
                kind: AgentKind::StaticObstacle,
            });
        }
        out.push(AgentDisc {
            position: self.user.avatar.pose.position(),
            velocity: self.user.velocity,
            radius: self.user.avatar.safety_radius,
            max_speed: self.user.speed,
            kind: AgentKind::User,
        });
        out
    }

    /// Whether some robot is committed to manipulating `f`.
    pub fn is_locked(&self, f: &FurnitureId) -> bool {
        self.robots.iter().any(|r| r.task.as_ref() == Some(f) && r.state.phase.is_locked())
    }

    pub fn pool(&self) -> Vec<PoolEntry> {
        let robot_spec = self.robots.first().map(|r| r.spec).unwrap_or_default();
        self.furniture
            .iter()
            .filter(|f| !self.faulted.contains(&f.id))
            .map(|f| {
                let spec = self.spec_of(f);
                PoolEntry {
                    id: f.id.clone(),
                    kind: spec.kind,
                    pose: f.pose,
                    carried: f.carried_by.is_some(),
                    busy: self.is_locked(&f.id),
                    liftable: clearance_check(spec, &robot_spec),
                }
            })
            .collect()
    }

    pub fn world_footprint(&self, f: &FurnitureState) -> crate::geometry::Polygon<f64> {
        furniture_footprint(self.spec_of(f), &f.pose)
    }

    pub fn object(&self, id: &ObjectId) -> Option<&VirtualObject> {
        self.scene.get(id)
    }

    /// Centers of grounded furniture, used to keep parking slots apart.
    pub fn grounded_positions(&self) -> Vec<Vector> {
        self.furniture.iter().filter(|f| f.carried_by.is_none()).map(|f| f.pose.position()).collect()
    }
}

/// Robot-to-task pairs for this scheduler tick.
///
/// Robots that are idle or still driving to an entry point compete for
/// open tasks whose furniture nobody has committed to. When tasks
/// outnumber robots the most urgent ones are considered, along with any
/// task a robot already drives toward.
pub fn rebalance(world: &World) -> Vec<(RobotId, FurnitureId)> {
    let candidates: Vec<Candidate<RobotId, FurnitureId, f64>> = world
        .robots
        .iter()
        .filter(|r| !r.state.phase.is_locked() && r.state.carrying.is_none() && !r.tracking_lost)
        .map(|r| Candidate {
            id: r.state.id.clone(),
            pose: r.state.pose,
            current: r.task.clone(),
        })
        .collect();
    if candidates.is_empty() {
        return Vec::new();
    }
    let mut open: Vec<(&ProxyTask, Pose)> = world
        .tasks
        .values()
        .filter(|t| !world.is_locked(&t.furniture) && !world.faulted.contains(&t.furniture))
        .filter_map(|t| {
            let f = &world.furniture[world.furniture_index(&t.furniture)?];
            (f.carried_by.is_none()).then_some((t, f.pose))
        })
        .collect();
    open.sort_by(|a, b| a.0.priority.total_cmp(&b.0.priority).then(a.0.furniture.cmp(&b.0.furniture)));
    let held: BTreeSet<&FurnitureId> = candidates.iter().filter_map(|c| c.current.as_ref()).collect();
    let mut chosen: Vec<(FurnitureId, Pose)> = open
        .iter()
        .filter(|(t, _)| held.contains(&t.furniture))
        .map(|(t, p)| (t.furniture.clone(), *p))
        .collect();
    for (t, p) in &open {
        if chosen.len() >= candidates.len() {
            break;
        }
        if !held.contains(&t.furniture) {
            chosen.push((t.furniture.clone(), *p));
        }
    }
    if chosen.is_empty() {
        return Vec::new();
    }
    rebalance_candidates(&candidates, &chosen, world.config.scheduler.hysteresis)
}
