//! Sampling-based reciprocal velocity obstacles.
//!
//! Every robot picks, from a fixed polar grid of candidate velocities, the
//! one closest to its preferred velocity that stays outside the reciprocal
//! velocity obstacle of every neighbor for the time horizon. Robots share
//! avoidance evenly; against the user and static furniture the robot takes
//! all of it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Vec2};
use crate::model::{RobotId, Vector};
use crate::scalar::Scalar;
use crate::world::{DriveIntent, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Robot,
    RobotCarrying,
    StaticObstacle,
    User,
}

impl AgentKind {
    fn yields(self) -> bool {
        matches!(self, Self::Robot | Self::RobotCarrying)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentDisc<T> {
    pub position: Vec2<T>,
    pub velocity: Vec2<T>,
    pub radius: T,
    pub max_speed: T,
    pub kind: AgentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RvoParams<T> {
    pub time_horizon: T,
    pub cull_distance: T,
    pub directions: usize,
    pub magnitudes: usize,
    /// Extra clearance added to combined radii in the obstacle test.
    pub margin: T,
    /// Weight of the inverse time-to-collision penalty used when no
    /// candidate is collision free.
    pub collision_penalty: T,
    /// Cost added to left-hand deviations so symmetric ties go right.
    pub side_bias: T,
}

impl<T: Scalar> Default for RvoParams<T> {
    fn default() -> Self {
        Self {
            time_horizon: T::lit(4.0),
            cull_distance: T::lit(3.0),
            directions: 16,
            magnitudes: 5,
            margin: T::lit(0.05),
            collision_penalty: T::lit(1.0),
            side_bias: T::lit(1e-6),
        }
    }
}

/// Velocity toward `goal` at up to `max_speed`, zero inside `stop_distance`.
pub fn preferred_velocity<T: Scalar>(
    position: Vec2<T>,
    goal: Vec2<T>,
    max_speed: T,
    stop_distance: T,
    dt_control: T,
) -> Vec2<T> {
    let delta = goal - position;
    let dist = delta.norm();
    if dist < stop_distance || dist == T::zero() {
        return Vec2::zero();
    }
    let speed = max_speed.min(dist / dt_control);
    delta * (speed / dist)
}

/// Share of the avoidance `agent` takes against `other`.
fn responsibility<T: Scalar>(other: AgentKind) -> T {
    if other.yields() {
        T::half()
    } else {
        T::one()
    }
}

/// Earliest time at which discs separated by `rel_pos` (other minus self)
/// touch when self moves at `rel_vel` relative to other; `None` if never.
fn time_to_collision<T: Scalar>(rel_pos: Vec2<T>, rel_vel: Vec2<T>, radius: T) -> Option<T> {
    let closing = rel_pos.dot(rel_vel);
    if closing <= T::zero() {
        return None;
    }
    let speed_sq = rel_vel.norm_sq();
    let c = rel_pos.norm_sq() - radius * radius;
    if c <= T::zero() {
        return Some(T::zero());
    }
    let disc = closing * closing - speed_sq * c;
    if disc < T::zero() {
        return None;
    }
    Some((closing - disc.sqrt()) / speed_sq)
}

fn candidate_grid<T: Scalar>(agent: &AgentDisc<T>, preferred: Vec2<T>, params: &RvoParams<T>) -> (T, Vec<Vec2<T>>) {
    let base = if preferred.norm_sq() > T::zero() {
        preferred.angle()
    } else if agent.velocity.norm_sq() > T::zero() {
        agent.velocity.angle()
    } else {
        T::zero()
    };
    let mut out = Vec::with_capacity(params.directions * params.magnitudes + 2);
    out.push(preferred.clamp_norm(agent.max_speed));
    out.push(Vec2::zero());
    let n_dir = T::lit(params.directions as f64);
    let n_mag = T::lit(params.magnitudes as f64);
    for k in 0..params.directions {
        let dir = Vec2::from_angle(base + T::TAU() * T::lit(k as f64) / n_dir);
        for m in 1..=params.magnitudes {
            out.push(dir * (agent.max_speed * T::lit(m as f64) / n_mag));
        }
    }
    (base, out)
}

/// Chooses the agent's next velocity among the sampled candidates.
pub fn rvo_velocity<T: Scalar>(
    agent: &AgentDisc<T>,
    neighbors: &[AgentDisc<T>],
    preferred: Vec2<T>,
    params: &RvoParams<T>,
) -> Vec2<T> {
    let near: Vec<&AgentDisc<T>> = neighbors
        .iter()
        .filter(|n| {
            agent.position.distance(n.position) - agent.radius - n.radius <= params.cull_distance
        })
        .collect();
    if near.is_empty() {
        return preferred.clamp_norm(agent.max_speed);
    }

    // already overlapping: back straight out of the deepest penetration
    let deepest = near
        .iter()
        .map(|n| (agent.radius + n.radius - agent.position.distance(n.position), *n))
        .filter(|(depth, _)| *depth > T::zero())
        .fold(None::<(T, &AgentDisc<T>)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        });
    if let Some((_, n)) = deepest {
        let away = agent.position - n.position;
        let dir = if away.norm_sq() > T::zero() {
            away.normalized()
        } else {
            preferred.normalized().perp()
        };
        return dir * agent.max_speed;
    }

    let (base, candidates) = candidate_grid(agent, preferred, params);
    let mut best_free: Option<(T, Vec2<T>)> = None;
    let mut best_penalized: Option<(T, Vec2<T>)> = None;
    for v in candidates {
        let deviation = if v.norm_sq() > T::zero() {
            normalize_angle(v.angle() - base)
        } else {
            T::zero()
        };
        let bias = if deviation > T::lit(1e-12) { params.side_bias } else { T::zero() };
        let mut earliest: Option<T> = None;
        for n in &near {
            let alpha = responsibility::<T>(n.kind);
            let effective = agent.velocity + (v - agent.velocity) * (T::one() / alpha);
            let rel_vel = effective - n.velocity;
            let rel_pos = n.position - agent.position;
            let r = agent.radius + n.radius + params.margin;
            if let Some(t) = time_to_collision(rel_pos, rel_vel, r) {
                earliest = Some(earliest.map_or(t, |e| e.min(t)));
            }
        }
        let dist = (v - preferred).norm();
        match earliest {
            Some(t) if t < params.time_horizon => {
                let cost = params.collision_penalty / t.max(T::lit(1e-6)) + dist + bias;
                if best_penalized.is_none_or(|(c, _)| cost < c) {
                    best_penalized = Some((cost, v));
                }
            }
            _ => {
                let cost = dist + bias;
                if best_free.is_none_or(|(c, _)| cost < c) {
                    best_free = Some((cost, v));
                }
            }
        }
    }
    best_free
        .or(best_penalized)
        .map(|(_, v)| v)
        .unwrap_or_else(Vec2::zero)
}

/// Forward speed the base may use along `heading_dir` (unit vector): zero
/// when that motion closes on a neighbor already within `radius + buffer`
/// or would touch one within `horizon` seconds, otherwise `speed`.
///
/// This governs the differential-drive base, which cannot follow the
/// planner's velocity exactly while it turns.
pub fn limit_forward_speed<T: Scalar>(
    position: Vec2<T>,
    radius: T,
    heading_dir: Vec2<T>,
    speed: T,
    neighbors: &[AgentDisc<T>],
    buffer: T,
    horizon: T,
) -> T {
    if speed <= T::zero() {
        return speed;
    }
    let v = heading_dir * speed;
    for n in neighbors {
        let to_other = n.position - position;
        let gap = to_other.norm() - radius - n.radius;
        if gap < buffer && heading_dir.dot(to_other) > T::zero() {
            return T::zero();
        }
        if let Some(t) = time_to_collision(to_other, v - n.velocity, radius + n.radius) {
            if t < horizon {
                return T::zero();
            }
        }
    }
    speed
}

/// Per-robot velocity chosen for this control tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanStep {
    pub velocities: BTreeMap<RobotId, Vector>,
}

/// Builds each navigating robot's neighbor set from the world and runs
/// [`rvo_velocity`]. Robots that are holding or turning in place get zero.
pub fn plan_step(world: &World) -> PlanStep {
    let params = &world.config.planner;
    let dt_control = world.clock.control_dt();
    let mut velocities = BTreeMap::new();
    for (idx, robot) in world.robots.iter().enumerate() {
        let v = match &robot.intent {
            DriveIntent::Navigate { goal, exclude, stop_distance } => {
                let agent = world.robot_disc(idx);
                let neighbors = world.neighbor_discs(idx, exclude.as_ref());
                let pref = preferred_velocity(
                    agent.position,
                    *goal,
                    agent.max_speed,
                    *stop_distance,
                    dt_control,
                );
                rvo_velocity(&agent, &neighbors, pref, params)
            }
            _ => Vector::zero(),
        };
        velocities.insert(robot.state.id.clone(), v);
    }
    PlanStep { velocities }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn robot(x: f64, y: f64) -> AgentDisc<f64> {
        AgentDisc {
            position: Vec2::new(x, y),
            velocity: Vec2::zero(),
            radius: 0.175,
            max_speed: 0.2,
            kind: AgentKind::Robot,
        }
    }

    #[test]
    fn preferred_velocity_examples() {
        let v = preferred_velocity(Vec2::zero(), Vec2::new(10.0, 0.0), 0.2, 0.05, 1.0 / 30.0);
        assert_eq!(v, Vec2::new(0.2, 0.0));
        assert_eq!(preferred_velocity(Vec2::zero(), Vec2::zero(), 0.2, 0.05, 1.0 / 30.0), Vec2::zero());
        let v = preferred_velocity(Vec2::zero(), Vec2::new(0.01, 0.0), 0.2, 0.05, 1.0 / 30.0);
        assert_eq!(v, Vec2::zero());
    }

    #[test]
    fn no_neighbors_returns_preferred() {
        let a = robot(0.0, 0.0);
        let pref = Vec2::new(0.1, 0.05);
        assert_eq!(rvo_velocity(&a, &[], pref, &RvoParams::default()), pref);
    }

    #[test]
    fn far_neighbors_are_culled() {
        let a = robot(0.0, 0.0);
        let pref = Vec2::new(0.2, 0.0);
        let far = robot(10.0, 0.0);
        assert_eq!(rvo_velocity(&a, &[far], pref, &RvoParams::default()), pref);
    }

    #[test]
    fn head_on_pair_both_deviate_right() {
        let params = RvoParams::default();
        let mut a = robot(0.0, 0.0);
        let mut b = robot(1.2, 0.0);
        a.velocity = Vec2::new(0.2, 0.0);
        b.velocity = Vec2::new(-0.2, 0.0);
        let va = rvo_velocity(&a, &[b], Vec2::new(0.2, 0.0), &params);
        let vb = rvo_velocity(&b, &[a], Vec2::new(-0.2, 0.0), &params);
        // right of +x is -y; right of -x is +y
        assert!(va.y < 0.0, "{va:?}");
        assert!(vb.y > 0.0, "{vb:?}");
        assert!((va.x + vb.x).abs() < 1e-12 && (va.y + vb.y).abs() < 1e-12);
    }

    #[test]
    fn overlap_triggers_escape() {
        let a = robot(0.0, 0.0);
        let b = robot(0.2, 0.0);
        let v = rvo_velocity(&a, &[b], Vec2::new(0.2, 0.0), &RvoParams::default());
        assert_eq!(v, Vec2::new(-0.2, 0.0));
    }

    #[test]
    fn stationary_user_blocks_direct_path() {
        let a = robot(0.0, 0.0);
        let user = AgentDisc {
            position: Vec2::new(1.5, 0.0),
            velocity: Vec2::zero(),
            radius: 0.6,
            max_speed: 1.0,
            kind: AgentKind::User,
        };
        let v = rvo_velocity(&a, &[user], Vec2::new(0.2, 0.0), &RvoParams::default());
        let ttc = time_to_collision(user.position - a.position, v - user.velocity, 0.775);
        assert!(ttc.is_none_or(|t| t >= 4.0), "{v:?} {ttc:?}");
    }

    #[test]
    fn governor_blocks_only_closing_motion() {
        let other = robot(0.4, 0.0);
        let s = limit_forward_speed(Vec2::zero(), 0.175, Vec2::new(1.0, 0.0), 0.2, &[other], 0.08, 0.0);
        assert_eq!(s, 0.0);
        let s = limit_forward_speed(Vec2::zero(), 0.175, Vec2::new(-1.0, 0.0), 0.2, &[other], 0.08, 0.0);
        assert_eq!(s, 0.2);
    }

    proptest! {
        #[test]
        fn chosen_speed_is_capped(
            px in -3.0f64..3.0, py in -3.0f64..3.0,
            vx in -0.2f64..0.2, vy in -0.2f64..0.2,
            gx in -1.0f64..1.0, gy in -1.0f64..1.0,
        ) {
            let a = robot(0.0, 0.0);
            let mut b = robot(px, py);
            b.velocity = Vec2::new(vx, vy);
            let v = rvo_velocity(&a, &[b], Vec2::new(gx, gy), &RvoParams::default());
            prop_assert!(v.norm() <= 0.2 + 1e-12);
        }

        #[test]
        fn mirror_configurations_mirror_choices(
            d in 0.5f64..3.0, off in -0.5f64..0.5, s in 0.05f64..0.2
        ) {
            // mirror across the y axis: x -> -x
            let params = RvoParams::default();
            let mut a = robot(-d, off);
            let mut b = robot(d, off);
            a.velocity = Vec2::new(s, 0.0);
            b.velocity = Vec2::new(-s, 0.0);
            let va = rvo_velocity(&a, &[b], Vec2::new(0.2, 0.0), &params);
            let vb = rvo_velocity(&b, &[a], Vec2::new(-0.2, 0.0), &params);
            // mirror images up to the right-hand tie-break, which flips y
            prop_assert!((va.x + vb.x).abs() < 1e-9);
            prop_assert!((va.y.abs() - vb.y.abs()).abs() < 1e-9);
        }
    }
}
