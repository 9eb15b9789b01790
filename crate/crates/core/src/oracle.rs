//! Collision oracle.
//!
//! Deliberately self-contained: it works on raw coordinate pairs and does
//! not call into the planner or the geometry helpers, so a bug there can
//! not hide a penetration here.

use serde::{Deserialize, Serialize};

use crate::world::World;

/// Penetrations shallower than this are treated as contact.
pub const CONTACT_EPSILON: f64 = 1e-9;

type P = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    RobotRobot,
    RobotUser,
    RobotFurniture,
    FurnitureFurniture,
    FurnitureUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub a: String,
    pub b: String,
    pub depth: f64,
}

fn sub(a: P, b: P) -> P {
    (a.0 - b.0, a.1 - b.1)
}

fn dot(a: P, b: P) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn len(a: P) -> f64 {
    (a.0 * a.0 + a.1 * a.1).sqrt()
}

/// Overlap depth of two discs; positive when they penetrate.
pub fn disc_disc(c1: P, r1: f64, c2: P, r2: f64) -> f64 {
    r1 + r2 - len(sub(c1, c2))
}

/// Signed distance from `p` to a convex polygon: negative inside.
fn signed_distance(poly: &[P], p: P) -> f64 {
    let n = poly.len();
    let mut inside = true;
    let mut best = f64::INFINITY;
    let orient = area2(poly).signum();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let ab = sub(b, a);
        let ap = sub(p, a);
        if orient * (ab.0 * ap.1 - ab.1 * ap.0) < 0.0 {
            inside = false;
        }
        let t = (dot(ap, ab) / dot(ab, ab)).clamp(0.0, 1.0);
        let closest = (a.0 + ab.0 * t, a.1 + ab.1 * t);
        best = best.min(len(sub(p, closest)));
    }
    if inside {
        -best
    } else {
        best
    }
}

fn area2(poly: &[P]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a.0 * b.1 - a.1 * b.0
        })
        .sum()
}

/// Overlap depth of a disc and a convex polygon.
pub fn polygon_disc(poly: &[P], c: P, r: f64) -> f64 {
    r - signed_distance(poly, c)
}

/// Minimum overlap along the separating-axis candidates of two convex
/// polygons; positive when they penetrate.
pub fn polygon_polygon(a: &[P], b: &[P]) -> f64 {
    let mut depth = f64::INFINITY;
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let e = sub(poly[(i + 1) % n], poly[i]);
            let l = len(e);
            if l == 0.0 {
                continue;
            }
            let axis = (-e.1 / l, e.0 / l);
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            let overlap = amax.min(bmax) - amin.max(bmin);
            depth = depth.min(overlap);
        }
    }
    depth
}

fn project(poly: &[P], axis: P) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = dot(*v, axis);
        (lo.min(d), hi.max(d))
    })
}

fn world_polygon(world: &World, idx: usize) -> Vec<P> {
    let f = &world.furniture[idx];
    let spec = &world.specs[&f.spec];
    let (s, c) = (libm::sin(f.pose.heading), libm::cos(f.pose.heading));
    spec.footprint
        .vertices
        .iter()
        .map(|v| (f.pose.x + c * v.x - s * v.y, f.pose.y + s * v.x + c * v.y))
        .collect()
}

/// All current penetrations. A robot is allowed to overlap the piece it
/// carries or is working under; grounded furniture may touch the user.
pub fn check_collisions(world: &World) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, a: &str, b: &str, depth: f64| {
        if depth > CONTACT_EPSILON {
            out.push(Violation { kind, a: a.to_string(), b: b.to_string(), depth });
        }
    };
    let robots: Vec<(String, P, f64)> = world
        .robots
        .iter()
        .map(|r| (r.state.id.0.clone(), (r.state.pose.x, r.state.pose.y), r.spec.body_radius))
        .collect();
    let user = &world.user.avatar;
    let user_c = (user.pose.x, user.pose.y);
    let polys: Vec<Vec<P>> = (0..world.furniture.len()).map(|i| world_polygon(world, i)).collect();

    for i in 0..robots.len() {
        for j in i + 1..robots.len() {
            push(ViolationKind::RobotRobot, &robots[i].0, &robots[j].0, disc_disc(robots[i].1, robots[i].2, robots[j].1, robots[j].2));
        }
        push(ViolationKind::RobotUser, &robots[i].0, "user", disc_disc(robots[i].1, robots[i].2, user_c, user.body_radius));
        let r = &world.robots[i];
        for (k, f) in world.furniture.iter().enumerate() {
            let carrying = r.state.carrying.as_ref() == Some(&f.id);
            let working = r.task.as_ref() == Some(&f.id) && r.state.phase.is_under_furniture();
            if carrying || working {
                continue;
            }
            push(ViolationKind::RobotFurniture, &robots[i].0, &f.id.0, polygon_disc(&polys[k], robots[i].1, robots[i].2));
        }
    }
    for a in 0..world.furniture.len() {
        for b in a + 1..world.furniture.len() {
            push(
                ViolationKind::FurnitureFurniture,
                &world.furniture[a].id.0,
                &world.furniture[b].id.0,
                polygon_polygon(&polys[a], &polys[b]),
            );
        }
        if world.furniture[a].carried_by.is_some() {
            push(ViolationKind::FurnitureUser, &world.furniture[a].id.0, "user", polygon_disc(&polys[a], user_c, user.body_radius));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cy: f64, h: f64) -> Vec<P> {
        vec![(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)]
    }

    #[test]
    fn disc_examples() {
        assert!(disc_disc((0.0, 0.0), 0.175, (0.5, 0.0), 0.175) < 0.0);
        let d = disc_disc((0.0, 0.0), 0.175, (0.30, 0.0), 0.175);
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn polygon_disc_inside_and_outside() {
        let sq = square(0.0, 0.0, 0.5);
        assert!((polygon_disc(&sq, (1.0, 0.0), 0.2) - (-0.3)).abs() < 1e-12);
        assert!((polygon_disc(&sq, (0.0, 0.0), 0.1) - 0.6).abs() < 1e-12);
        assert!(polygon_disc(&sq, (0.6, 0.6), 0.14) < 0.0);
        assert!(polygon_disc(&sq, (0.6, 0.6), 0.15) > 0.0);
    }

    #[test]
    fn polygon_polygon_overlap() {
        assert!((polygon_polygon(&square(0.0, 0.0, 0.5), &square(0.8, 0.0, 0.5)) - 0.2).abs() < 1e-12);
        assert!(polygon_polygon(&square(0.0, 0.0, 0.5), &square(1.2, 0.0, 0.5)) < 0.0);
        let diamond = vec![(1.1, 0.0), (1.6, 0.5), (1.1, 1.0), (0.6, 0.5)];
        assert!(polygon_polygon(&square(0.0, 0.0, 0.5), &diamond) < 0.0);
        // clockwise input works too
        let mut cw = square(0.3, 0.3, 0.5);
        cw.reverse();
        assert!(polygon_polygon(&square(0.0, 0.0, 0.5), &cw) > 0.0);
    }
}
