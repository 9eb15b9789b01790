//! Fixed-timestep engine: control ticks run scheduling, assignment,
//! planning and the drive controller; physics ticks integrate the bases,
//! the lifts, the user and carried furniture.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    command_to_wheel_speed, heading_error, pid_update, spin_commands, wheel_commands_with_amplitude,
};
use crate::events::{Event, LogEntry, ScheduledEvent};
use crate::geometry::normalize_angle;
use crate::kinematics::integrate_diff_drive;
use crate::manipulation::{proxy_tracking_fallback, step_manipulation, ManipulationContext, ManipulationEvent};
use crate::model::{FurnitureId, ManipulationPhase, Pose, RobotId, UserMode, Vector};
use crate::oracle::{check_collisions, Violation};
use crate::planner::{limit_forward_speed, plan_step, PlanStep};
use crate::scheduler::{
    handle_teleport, handle_virtual_move, parking_pose, within_tolerance, Diff, ProxyTask, RemoteEdit,
    SlotClaim, TaskKind,
};
use crate::trace::{record_trace, TraceHasher, TraceRecord};
use crate::world::{rebalance, DriveIntent, PlanStepCache, TeleportRecord, UserMotion, World};

/// Seconds added to every teleport ETA bound for turning and replanning.
pub const ETA_ALLOWANCE: f64 = 30.0;

/// Physics clock with a control tick every `divisor` physics ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub dt: f64,
    pub divisor: u32,
    pub tick: u64,
}

impl SimClock {
    pub fn new(dt: f64, divisor: u32) -> Self {
        Self { dt, divisor, tick: 0 }
    }

    pub fn is_control_tick(&self) -> bool {
        self.tick.is_multiple_of(self.divisor as u64)
    }

    pub fn control_dt(&self) -> f64 {
        self.dt * self.divisor as f64
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    /// First tick at or after `seconds`.
    pub fn tick_at(&self, seconds: f64) -> u64 {
        ((seconds / self.dt) - 1e-9).ceil().max(0.0) as u64
    }
}

/// Advances the world by one physics tick.
pub fn step(world: &mut World) -> bool {
    world.step()
}

/// Queues an event for the next control tick.
pub fn inject_event(world: &mut World, event: Event) -> u64 {
    world.events.push(event)
}

impl World {
    pub fn step(&mut self) -> bool {
        let control = self.clock.is_control_tick();
        if control {
            self.control_tick();
        }
        self.physics_tick();
        self.clock.tick += 1;
        control
    }

    pub fn inject_event(&mut self, event: Event) -> u64 {
        self.events.push(event)
    }

    /// Sends an idle robot to `goal` instead of its parking slot; `None`
    /// hands it back to the parking logic.
    pub fn send_robot(&mut self, robot: &RobotId, goal: Option<Vector>) -> bool {
        let Some(i) = self.robot_index(robot) else { return false };
        self.robots[i].goto = goal;
        if goal.is_some() {
            self.parking.release(&SlotClaim::Robot(robot.clone()));
        }
        true
    }

    pub fn schedule(&mut self, events: &[ScheduledEvent]) {
        for e in events {
            let tick = self.clock.tick_at(e.t);
            self.events.push_at(tick, e.event.clone());
        }
    }

    pub fn control_tick(&mut self) {
        let tick = self.clock.tick;
        for (seq, ev) in self.events.drain_due(tick) {
            self.apply_event(seq, ev);
        }
        self.update_tracking();
        self.scheduler_pass();
        self.assign();
        self.park_idle_robots();
        let plan = plan_step(self);
        self.drive(&plan);
        self.last_plan = Some(PlanStepCache { velocities: plan.velocities });
    }

    fn apply_event(&mut self, seq: u64, ev: Event) {
        let result = match &ev {
            Event::UserMove { waypoints, speed } => {
                if !(speed.is_finite() && *speed > 0.0) || waypoints.iter().any(|w| !w.is_finite()) {
                    Err("user_move needs finite waypoints and a positive speed".to_string())
                } else {
                    self.user.waypoints = waypoints.iter().copied().collect();
                    self.user.speed = *speed;
                    self.user.dwell_ticks = 0;
                    self.user.avatar.mode = UserMode::Walking;
                    Ok(())
                }
            }
            Event::UserPose { pose } => {
                if !pose.is_finite() {
                    Err("non-finite pose".to_string())
                } else {
                    self.user.avatar.pose = *pose;
                    self.user.waypoints.clear();
                    self.user.velocity = Vector::zero();
                    Ok(())
                }
            }
            Event::UserMode { mode } => {
                self.user.avatar.mode = *mode;
                Ok(())
            }
            Event::TeleportRequest { x, y, heading } => {
                if !(x.is_finite() && y.is_finite() && heading.is_none_or(f64::is_finite)) {
                    Err("non-finite teleport target".to_string())
                } else {
                    let current = self.scene.to_virtual(&self.user.avatar.pose);
                    let target = Pose::new(*x, *y, heading.unwrap_or(current.heading));
                    self.teleport(&target);
                    Ok(())
                }
            }
            Event::VirtualMove { object, pose } => {
                handle_virtual_move(&mut self.scene, object, *pose).map_err(|e| e.to_string())
            }
            Event::EditOp { seq, object, pose } => {
                let edit = RemoteEdit { seq: *seq, object: object.clone(), pose: *pose };
                match self.scheduler.mirror.mirror_remote_edit(&mut self.scene, &edit) {
                    Ok(true) => Ok(()),
                    Ok(false) => Err("stale sequence number".to_string()),
                    Err(e) => Err(e.to_string()),
                }
            }
            Event::SceneLoad { objects, origin } => {
                let ids: BTreeSet<_> = objects.iter().map(|o| &o.id).collect();
                if ids.len() != objects.len() {
                    Err("duplicate object id".to_string())
                } else {
                    self.scene.objects = objects.clone();
                    if let Some(o) = origin {
                        self.scene.origin = *o;
                    }
                    if let Some(h) = &self.scheduler.highlighted {
                        if !ids.contains(h) {
                            self.scheduler.highlighted = None;
                        }
                    }
                    Ok(())
                }
            }
            Event::OcclusionStart { robot, furniture } | Event::OcclusionStop { robot, furniture } => {
                let on = matches!(ev, Event::OcclusionStart { .. });
                self.set_occlusion(robot.as_ref(), furniture.as_ref(), on)
            }
            Event::Highlight { object } => match object {
                Some(id) if self.scene.get(id).is_none() => Err("unknown object".to_string()),
                _ => {
                    self.scheduler.highlighted = object.clone();
                    Ok(())
                }
            },
        };
        match result {
            Ok(()) => self.log.push(LogEntry::Applied { seq, event: ev }),
            Err(reason) => self.log.push(LogEntry::Rejected { seq, event: ev, reason }),
        }
    }

    fn set_occlusion(&mut self, robot: Option<&RobotId>, furniture: Option<&FurnitureId>, on: bool) -> Result<(), String> {
        if robot.is_none() && furniture.is_none() {
            return Err("occlusion event names neither a robot nor furniture".to_string());
        }
        if let Some(r) = robot {
            let i = self.robot_index(r).ok_or("unknown robot")?;
            self.robots[i].occluded = on;
        }
        if let Some(f) = furniture {
            self.furniture_index(f).ok_or("unknown furniture")?;
            if on {
                self.occluded_furniture.insert(f.clone());
            } else {
                self.occluded_furniture.remove(f);
            }
        }
        Ok(())
    }

    fn teleport(&mut self, target: &Pose) {
        let pool = self.pool();
        let extra = self.scheduler.extra();
        let plan = handle_teleport(
            &self.scene,
            &self.user.avatar,
            target,
            &self.scheduler.bindings,
            &pool,
            &self.area,
            &extra,
            &self.scheduler.params,
        );
        self.scene.origin = plan.origin;
        let touched: Vec<FurnitureId> = plan
            .diff
            .tasks
            .iter()
            .map(|t| t.furniture.clone())
            .chain(plan.diff.to_park.iter().cloned())
            .collect();
        let required_ids: Vec<_> = plan.required.iter().map(|r| r.object.clone()).collect();
        self.scheduler.apply(plan.required.clone(), &plan.diff);
        self.apply_diff(&plan.diff);
        let tasks: Vec<ProxyTask> = touched.iter().filter_map(|f| self.tasks.get(f).cloned()).collect();
        let eta_bound = self.eta_bound(&tasks);
        self.log.push(LogEntry::Teleport { eta_bound, unrenderable: plan.unrenderable.clone(), tasks: tasks.len() });
        self.last_teleport = Some(TeleportRecord {
            tick: self.clock.tick,
            eta_bound,
            required: required_ids,
            unrenderable: plan.unrenderable,
        });
    }

    /// Conservative completion time for a batch of tasks: each robot
    /// drives to the piece and carries it, at worst twice the straight
    /// distance, plus a full lift and lower cycle; batches larger than
    /// the fleet run in rounds.
    pub fn eta_bound(&self, tasks: &[ProxyTask]) -> f64 {
        if tasks.is_empty() || self.robots.is_empty() {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for t in tasks {
            let Some(fi) = self.furniture_index(&t.furniture) else { continue };
            let f = &self.furniture[fi];
            let spec = self.spec_of(f);
            let r = &self.robots[0].spec;
            let nav = self
                .robots
                .iter()
                .map(|r| r.state.pose.position().distance(f.pose.position()))
                .fold(0.0, f64::max);
            let carry = f.pose.position().distance(t.target.position());
            let lift = 2.0 * (spec.underside_height + self.config.manipulation.lift_overshoot - r.lift_min).max(0.0) / r.lift_speed;
            worst = worst.max(2.0 * (nav + carry) / r.max_speed + lift + ETA_ALLOWANCE);
        }
        let rounds = tasks.len().div_ceil(self.robots.len());
        rounds as f64 * worst
    }

    fn update_tracking(&mut self) {
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            let carried = match (&r.state.carrying, &r.pickup_offset) {
                (Some(f), Some(off)) => self
                    .furniture_index(f)
                    .map(|fi| (&self.furniture[fi], off, self.occluded_furniture.contains(f))),
                _ => None,
            };
            let result = proxy_tracking_fallback(&r.state.pose, r.occluded, carried);
            let was_lost = r.tracking_lost;
            let id = r.state.id.clone();
            let robot = &mut self.robots[i];
            match result {
                Ok((estimate, _)) => {
                    robot.estimate = estimate;
                    robot.tracking_lost = false;
                    if was_lost {
                        self.log.push(LogEntry::TrackingRestored { robot: id });
                    }
                }
                Err(_) => {
                    robot.tracking_lost = true;
                    if !was_lost {
                        self.log.push(LogEntry::TrackingLost { robot: id });
                    }
                }
            }
        }
    }

    fn scheduler_pass(&mut self) {
        let pool = self.pool();
        let diff = self.scheduler.update(&self.scene, &self.user.avatar, &pool);
        self.apply_diff(&diff);
        self.clean_board();
        let pool = self.pool();
        let assigned: BTreeSet<FurnitureId> = self.robots.iter().filter_map(|r| r.task.clone()).collect();
        self.scheduler.refresh_status(&pool, &assigned);
    }

    /// Writes scheduler output onto the task board.
    pub fn apply_diff(&mut self, diff: &Diff) {
        for t in &diff.tasks {
            match t.kind {
                TaskKind::RemoveToParking => self.park_furniture(&t.furniture, t.priority),
                _ => {
                    self.parking.release(&SlotClaim::Furniture(t.furniture.clone()));
                    self.tasks.insert(t.furniture.clone(), t.clone());
                }
            }
        }
        for f in &diff.to_park {
            let priority = self
                .furniture_index(f)
                .map(|i| self.user.avatar.pose.position().distance(self.furniture[i].pose.position()) / self.scheduler.params.assumed_user_speed)
                .unwrap_or(0.0);
            self.park_furniture(f, priority);
        }
    }

    fn park_furniture(&mut self, f: &FurnitureId, priority: f64) {
        let Some(fi) = self.furniture_index(f) else { return };
        let state = &self.furniture[fi];
        let pos = state.pose.position();
        if state.carried_by.is_none() && !self.is_locked(f) && self.area.in_parking_band(pos) {
            self.tasks.remove(f);
            return;
        }
        let occupied: Vec<Vector> = self
            .furniture
            .iter()
            .filter(|o| o.carried_by.is_none() && &o.id != f)
            .map(|o| o.pose.position())
            .collect();
        match self.parking.claim_nearest(pos, SlotClaim::Furniture(f.clone()), &occupied) {
            Some(slot) => {
                let entry = self.specs[&self.furniture[fi].spec].entry_point;
                let target = parking_pose(&self.parking.slots[slot], &entry);
                self.tasks.insert(f.clone(), ProxyTask { furniture: f.clone(), target, priority, kind: TaskKind::RemoveToParking });
            }
            None => {
                self.tasks.remove(f);
                self.log.push(LogEntry::NoParking { furniture: f.clone() });
            }
        }
    }

    /// Drops finished and orphaned tasks; makes sure every committed robot
    /// still has somewhere to take its piece.
    fn clean_board(&mut self) {
        let params = self.scheduler.params;
        let mut drop = Vec::new();
        let mut park = Vec::new();
        for (f, t) in &self.tasks {
            let Some(fi) = self.furniture_index(f) else {
                drop.push(f.clone());
                continue;
            };
            let state = &self.furniture[fi];
            let locked = self.is_locked(f);
            let grounded = state.carried_by.is_none() && !locked;
            if self.faulted.contains(f) {
                drop.push(f.clone());
                continue;
            }
            match t.kind {
                TaskKind::Place | TaskKind::SlideUpdate => match self.scheduler.binding_for_furniture(f) {
                    None => {
                        if locked {
                            park.push(f.clone());
                        } else {
                            drop.push(f.clone());
                        }
                    }
                    Some(_) => {
                        if t.kind == TaskKind::Place && grounded && within_tolerance(&state.pose, &t.target, &params) {
                            drop.push(f.clone());
                        }
                    }
                },
                TaskKind::RemoveToParking => {
                    if grounded && within_tolerance(&state.pose, &t.target, &params) {
                        drop.push(f.clone());
                    }
                }
            }
        }
        for f in drop {
            self.tasks.remove(&f);
        }
        for f in park {
            self.park_furniture(&f, 0.0);
        }
        let orphans: Vec<FurnitureId> = self
            .robots
            .iter()
            .filter(|r| r.state.phase.is_locked() && r.state.phase != ManipulationPhase::Retreat)
            .filter_map(|r| r.task.clone())
            .filter(|f| !self.tasks.contains_key(f))
            .collect();
        for f in orphans {
            self.park_furniture(&f, 0.0);
        }
    }

    fn assign(&mut self) {
        let pairs = rebalance(self);
        let next: BTreeMap<RobotId, FurnitureId> = pairs.into_iter().collect();
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            if r.state.phase.is_locked() || r.state.carrying.is_some() || r.tracking_lost {
                continue;
            }
            let new = next.get(&r.state.id).cloned();
            if new == r.task {
                continue;
            }
            let id = r.state.id.clone();
            if let Some(old) = r.task.clone() {
                self.log.push(LogEntry::Unassigned { robot: id.clone(), furniture: old });
            }
            let robot = &mut self.robots[i];
            robot.aligning = false;
            robot.approach = None;
            match new {
                Some(f) => {
                    robot.task = Some(f.clone());
                    robot.state.phase = ManipulationPhase::NavigateToEntry;
                    self.parking.release(&SlotClaim::Robot(id.clone()));
                    self.log.push(LogEntry::Assigned { robot: id, furniture: f });
                }
                None => {
                    robot.task = None;
                    robot.state.phase = ManipulationPhase::Idle;
                }
            }
        }
    }

    fn park_idle_robots(&mut self) {
        let occupied = self.grounded_positions();
        let stop = self.config.envelope.stop_distance;
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            if r.state.phase != ManipulationPhase::Idle || r.task.is_some() {
                continue;
            }
            if let Some(goal) = r.goto {
                self.robots[i].intent = DriveIntent::Navigate { goal, exclude: None, stop_distance: stop };
                continue;
            }
            let claim = SlotClaim::Robot(r.state.id.clone());
            let from = r.state.pose.position();
            let slot = self.parking.claim_nearest(from, claim, &occupied);
            let robot = &mut self.robots[i];
            robot.intent = match slot {
                Some(s) => DriveIntent::Navigate { goal: self.parking.slots[s].position, exclude: None, stop_distance: stop },
                None => DriveIntent::Hold,
            };
        }
    }

    fn drive(&mut self, plan: &PlanStep) {
        let cfg = self.config;
        let env = cfg.envelope;
        let dt = self.clock.control_dt();
        let apply_at = self.clock.tick + cfg.control_delay_ticks as u64;
        for i in 0..self.robots.len() {
            let cmd = self.command_for(i, plan, dt);
            let r = &mut self.robots[i];
            r.pending_commands.push_back((apply_at, cmd.0, cmd.1));
            let _ = env;
        }
    }

    fn command_for(&mut self, i: usize, plan: &PlanStep, dt: f64) -> (i32, i32) {
        let cfg = self.config;
        let env = cfg.envelope;
        let max_cmd = env.max_command;
        let intent = self.robots[i].intent.clone();
        if self.robots[i].tracking_lost {
            self.robots[i].pid.reset();
            return (0, 0);
        }
        match intent {
            DriveIntent::Hold => {
                self.robots[i].pid.reset();
                (0, 0)
            }
            DriveIntent::Spin { heading } => {
                let r = &mut self.robots[i];
                let e = normalize_angle(r.estimate.heading - heading);
                let u = pid_update(&mut r.pid, e, dt);
                spin_commands(u, cfg.spin_amplitude, max_cmd)
            }
            DriveIntent::Navigate { goal, exclude, .. } => {
                let v = plan.velocities.get(&self.robots[i].state.id).copied().unwrap_or_else(Vector::zero);
                if v.norm_sq() == 0.0 {
                    self.robots[i].pid.reset();
                    return (0, 0);
                }
                let radius = self.robot_radius(i);
                let neighbors = self.neighbor_discs(i, exclude.as_ref());
                let r = &mut self.robots[i];
                let est = r.estimate;
                let da = heading_error(&est, v);
                let u = pid_update(&mut r.pid, -da, dt);
                let dd = est.position().distance(goal);
                let vmax = r.spec.max_speed;
                let scaled = max_cmd as f64 * (v.norm() / vmax).min(1.0);
                let amp = if dd >= env.stop_distance { env.amplitude(dd).min(scaled) } else { scaled };
                if da.abs() > std::f64::consts::FRAC_PI_2 {
                    return spin_commands(u, amp, max_cmd);
                }
                let (l, rt) = wheel_commands_with_amplitude(u, amp, max_cmd);
                let fwd = (command_to_wheel_speed(l, max_cmd, vmax).unwrap_or(0.0)
                    + command_to_wheel_speed(rt, max_cmd, vmax).unwrap_or(0.0))
                    / 2.0;
                let allowed = limit_forward_speed(
                    r.state.pose.position(),
                    radius,
                    r.state.pose.direction(),
                    fwd,
                    &neighbors,
                    cfg.governor_buffer,
                    cfg.governor_horizon,
                );
                if fwd > 0.0 && allowed == 0.0 {
                    spin_commands(u, amp, max_cmd)
                } else {
                    (l, rt)
                }
            }
        }
    }

    pub fn physics_tick(&mut self) {
        let dt = self.clock.dt;
        let tick = self.clock.tick;
        for r in &mut self.robots {
            while let Some(&(at, l, rt)) = r.pending_commands.front() {
                if at > tick {
                    break;
                }
                r.pending_commands.pop_front();
                r.state.wheel_left = l;
                r.state.wheel_right = rt;
            }
            let max = r.spec.wheel_cmd_max;
            let vl = command_to_wheel_speed(r.state.wheel_left, max, r.spec.max_speed).unwrap_or(0.0);
            let vr = command_to_wheel_speed(r.state.wheel_right, max, r.spec.max_speed).unwrap_or(0.0);
            let before = r.state.pose;
            r.state.pose = integrate_diff_drive(&before, vl, vr, r.spec.track_width, dt);
            r.velocity = (r.state.pose.position() - before.position()) * (1.0 / dt);
        }
        self.step_user(dt);
        self.step_manipulators(dt);
        self.carry_rigidly();
    }

    fn carry_rigidly(&mut self) {
        for r in &self.robots {
            if let (Some(f), Some(off)) = (&r.state.carrying, &r.pickup_offset) {
                if let Some(fi) = self.furniture.iter().position(|x| &x.id == f) {
                    self.furniture[fi].pose = r.state.pose.compose(off);
                }
            }
        }
    }

    fn step_manipulators(&mut self, dt: f64) {
        let stop = self.config.envelope.stop_distance;
        let params = self.config.manipulation;
        for i in 0..self.robots.len() {
            if self.robots[i].state.phase == ManipulationPhase::Idle {
                continue;
            }
            let Some(f) = self.robots[i].task.clone() else {
                self.robots[i].state.phase = ManipulationPhase::Idle;
                continue;
            };
            let Some(fi) = self.furniture_index(&f) else { continue };
            let (destination, hold) = match self.tasks.get(&f) {
                Some(t) => (t.target, t.kind == TaskKind::SlideUpdate),
                None => (self.furniture[fi].pose, false),
            };
            let robot_spec = self.robots[i].spec;
            let user = &self.user.avatar;
            let user_near = self.world_footprint(&self.furniture[fi]).distance_to(user.pose.position())
                < user.body_radius + params.user_clearance;
            let spec = &self.specs[&self.furniture[fi].spec];
            let mut ctx = ManipulationContext {
                spec,
                furniture: &mut self.furniture[fi],
                destination,
                hold,
                robot_spec: &robot_spec,
                params: &params,
                stop_distance: stop,
                user_near,
            };
            let Some(ev) = step_manipulation(&mut self.robots[i], &mut ctx, dt) else { continue };
            let id = self.robots[i].state.id.clone();
            match &ev {
                ManipulationEvent::Completed { .. } | ManipulationEvent::Aborted { .. } => {
                    self.robots[i].task = None;
                }
                ManipulationEvent::Fault { furniture, .. } => {
                    self.faulted.insert(furniture.clone());
                    self.tasks.remove(furniture);
                }
                _ => {}
            }
            self.log.push(LogEntry::Manipulation { robot: id, event: ev });
        }
    }

    fn step_user(&mut self, dt: f64) {
        let hz = 1.0 / dt;
        let u = &mut self.user;
        if u.dwell_ticks > 0 {
            u.dwell_ticks -= 1;
            u.velocity = Vector::zero();
            return;
        }
        if u.waypoints.is_empty() {
            match u.motion {
                UserMotion::Wander { speed, inset, .. } => {
                    let lo = Vector::new(inset, inset);
                    let hi = Vector::new(self.area.width - inset, self.area.depth - inset);
                    if hi.x <= lo.x || hi.y <= lo.y {
                        u.velocity = Vector::zero();
                        return;
                    }
                    let p = Vector::new(self.rng.gen_range(lo.x..hi.x), self.rng.gen_range(lo.y..hi.y));
                    u.waypoints.push_back(p);
                    u.speed = speed;
                    u.avatar.mode = UserMode::Walking;
                }
                UserMotion::Still => {
                    u.velocity = Vector::zero();
                    return;
                }
            }
        }
        let pos = u.avatar.pose.position();
        let target = *u.waypoints.front().expect("non-empty");
        let delta = target - pos;
        let dist = delta.norm();
        let step = u.speed * dt;
        let reached = dist <= step;
        let next = if reached { target } else { pos + delta * (step / dist) };
        if let Some(gap) = u.yield_distance {
            if self.blocks_user(pos, next, gap) {
                let u = &mut self.user;
                u.velocity = Vector::zero();
                if u.blocked_ticks == 0 {
                    u.yield_events += 1;
                }
                u.blocked_ticks += 1;
                if matches!(u.motion, UserMotion::Wander { .. }) && u.blocked_ticks as f64 > 3.0 * hz {
                    u.waypoints.clear();
                    u.blocked_ticks = 0;
                }
                return;
            }
        }
        let u = &mut self.user;
        u.blocked_ticks = 0;
        let heading = if dist > 0.0 { delta.angle() } else { u.avatar.pose.heading };
        u.avatar.pose = Pose::from_parts(next, heading);
        u.velocity = (next - pos) * (1.0 / dt);
        if reached {
            u.waypoints.pop_front();
            if u.waypoints.is_empty() {
                self.log.push(LogEntry::UserArrived { position: next });
                if let UserMotion::Wander { max_dwell, .. } = self.user.motion {
                    let max = (max_dwell * hz).max(0.0) as u64;
                    self.user.dwell_ticks = if max > 0 { self.rng.gen_range(0..=max) } else { 0 };
                }
            }
        }
    }

    /// Whether moving the user from `from` to `to` brings them within
    /// `gap` of a robot or carried piece they are not already moving away from.
    fn blocks_user(&self, from: Vector, to: Vector, gap: f64) -> bool {
        let body = self.user.avatar.body_radius;
        for r in &self.robots {
            let c = r.state.pose.position();
            let reach = body + r.spec.body_radius + gap;
            if to.distance(c) < reach && to.distance(c) < from.distance(c) {
                return true;
            }
        }
        for f in &self.furniture {
            if f.carried_by.is_none() {
                continue;
            }
            let poly = self.world_footprint(f);
            let (dn, df) = (poly.distance_to(to), poly.distance_to(from));
            if dn < body + gap && dn < df {
                return true;
            }
        }
        false
    }
}

/// How a [`Sim`] keeps its trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    Off,
    /// Digest only.
    Hash,
    /// Digest and in-memory records.
    Keep,
}

/// Engine runner with trace recording and the collision oracle attached.
pub struct Sim {
    pub world: World,
    pub mode: TraceMode,
    pub check_oracle: bool,
    pub hasher: TraceHasher,
    pub records: Vec<TraceRecord>,
    pub violations: Vec<(u64, Violation)>,
    pub violation_ticks: u64,
    /// When set, every log entry is also copied here with its tick.
    pub collect_log: bool,
    pub log: Vec<(u64, LogEntry)>,
    copied: usize,
    writer: Option<Box<dyn Write + Send>>,
}

impl Sim {
    pub fn new(world: World, mode: TraceMode) -> Self {
        Self {
            world,
            mode,
            check_oracle: true,
            hasher: TraceHasher::new(),
            records: Vec::new(),
            violations: Vec::new(),
            violation_ticks: 0,
            collect_log: false,
            log: Vec::new(),
            copied: 0,
            writer: None,
        }
    }

    /// Also streams canonical trace lines to `writer`.
    pub fn with_writer(mut self, writer: Box<dyn Write + Send>) -> Self {
        self.writer = Some(writer);
        self
    }

    /// One physics tick; returns the trace record when a control tick ran
    /// and tracing is on.
    pub fn step(&mut self) -> Option<&TraceRecord> {
        let w = &mut self.world;
        let control = w.clock.is_control_tick();
        if control {
            w.control_tick();
        }
        w.physics_tick();
        if self.check_oracle {
            let v = check_collisions(w);
            if !v.is_empty() {
                self.violation_ticks += 1;
                if self.violations.len() < 1000 {
                    let t = w.clock.tick;
                    self.violations.extend(v.into_iter().map(|x| (t, x)));
                }
            }
        }
        if self.collect_log {
            let t = w.clock.tick;
            self.log.extend(w.log[self.copied..].iter().map(|e| (t, e.clone())));
            self.copied = w.log.len();
        }
        let mut out = None;
        if control && (self.mode != TraceMode::Off || self.writer.is_some()) {
            let rec = record_trace(w);
            self.copied = 0;
            let line = crate::trace::canonical_json(&rec);
            self.hasher.push_line(&line);
            if let Some(wr) = self.writer.as_mut() {
                // a failing sink must not perturb the simulation
                let _ = writeln!(wr, "{line}");
            }
            if self.mode == TraceMode::Keep {
                self.records.push(rec);
                out = self.records.last();
            }
        } else if control {
            w.log.clear();
            self.copied = 0;
        }
        self.world.clock.tick += 1;
        out
    }

    pub fn run_ticks(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }

    pub fn run_for(&mut self, seconds: f64) {
        let end = self.world.clock.tick_at(self.world.clock.time() + seconds);
        while self.world.clock.tick < end {
            self.step();
        }
    }

    pub fn digest(&self) -> String {
        self.hasher.clone().finish()
    }

    pub fn flush(&mut self) {
        if let Some(w) = self.writer.as_mut() {
            let _ = w.flush();
        }
    }
}

/// Re-runs a scenario feeding the events recorded in a trace on the ticks
/// they were applied.
pub fn replay(world: World, records: &[TraceRecord], mode: TraceMode) -> Sim {
    let mut sim = Sim::new(world, mode);
    for (tick, seq, ev) in crate::trace::replay_events(records) {
        sim.world.events.push_with_seq(tick, seq, ev);
    }
    let last = records.last().map(|r| r.tick).unwrap_or(0);
    while sim.world.clock.tick <= last {
        sim.step();
    }
    sim
}
