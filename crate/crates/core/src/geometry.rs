//! Planar vectors, rigid poses and convex polygons.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle<T: Scalar>(angle: T) -> T {
    let two_pi = T::TAU();
    let pi = T::PI();
    let mut wrapped = angle - two_pi * ((angle + pi) / two_pi).floor();
    // floor() can land exactly on the open end after rounding
    if wrapped >= pi {
        wrapped = wrapped - two_pi;
    }
    if wrapped < -pi {
        wrapped = -pi;
    }
    wrapped
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector at `angle` radians from +x.
    pub fn from_angle(angle: T) -> Self {
        let (s, c) = angle.lsin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.lhypot(self.y)
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn angle(self) -> T {
        self.y.latan2(self.x)
    }

    /// Returns the unit vector, or zero for a zero-length input.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self * (T::one() / n)
        } else {
            Self::zero()
        }
    }

    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.lsin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    /// Scales the vector down so its length does not exceed `max_len`.
    pub fn clamp_norm(self, max_len: T) -> Self {
        let n = self.norm();
        if n > max_len && n > T::zero() {
            self * (max_len / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> AddAssign for Vec2<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Deserialize)]
struct PoseRepr<T> {
    x: T,
    y: T,
    #[serde(default)]
    heading: T,
}

/// Planar rigid pose. The heading is kept in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "PoseRepr<T>")]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
}

impl<T: Scalar> From<PoseRepr<T>> for Pose2D<T> {
    fn from(r: PoseRepr<T>) -> Self {
        Self::new(r.x, r.y, r.heading)
    }
}

impl<T: Scalar> Pose2D<T> {
    pub fn new(x: T, y: T, heading: T) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_parts(position: Vec2<T>, heading: T) -> Self {
        Self::new(position.x, position.y, heading)
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn direction(&self) -> Vec2<T> {
        Vec2::from_angle(self.heading)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, local: Vec2<T>) -> Vec2<T> {
        self.position() + local.rotated(self.heading)
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, world: Vec2<T>) -> Vec2<T> {
        (world - self.position()).rotated(-self.heading)
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_parts(
            self.transform_point(other.position()),
            self.heading + other.heading,
        )
    }

    pub fn inverse(&self) -> Self {
        let p = (-self.position()).rotated(-self.heading);
        Self::new(p.x, p.y, -self.heading)
    }

    /// Pose of `other` expressed in the frame of `self`.
    pub fn relative(&self, other: &Self) -> Self {
        self.inverse().compose(other)
    }

    pub fn distance(&self, other: &Self) -> T {
        self.position().distance(other.position())
    }

    /// Absolute wrapped heading difference.
    pub fn heading_gap(&self, other: &Self) -> T {
        normalize_angle(self.heading - other.heading).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon<T> {
    pub vertices: Vec<Vec2<T>>,
}

impl<T: Scalar> Polygon<T> {
    /// Builds a polygon, reversing clockwise input. Returns `None` for fewer
    /// than three vertices, zero area or a non-convex outline.
    pub fn convex(mut vertices: Vec<Vec2<T>>) -> Option<Self> {
        if vertices.len() < 3 || vertices.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut poly = Self { vertices: vertices.clone() };
        let area = poly.signed_area();
        if area == T::zero() {
            return None;
        }
        if area < T::zero() {
            vertices.reverse();
            poly = Self { vertices };
        }
        let n = poly.vertices.len();
        for i in 0..n {
            let a = poly.vertices[i];
            let b = poly.vertices[(i + 1) % n];
            let c = poly.vertices[(i + 2) % n];
            if (b - a).cross(c - b) < T::zero() {
                return None;
            }
        }
        Some(poly)
    }

    /// Axis-aligned rectangle centered on the origin.
    pub fn rectangle(width: T, depth: T) -> Self {
        let hw = width * T::half();
        let hd = depth * T::half();
        Self {
            vertices: vec![
                Vec2::new(-hw, -hd),
                Vec2::new(hw, -hd),
                Vec2::new(hw, hd),
                Vec2::new(-hw, hd),
            ],
        }
    }

    pub fn signed_area(&self) -> T {
        let n = self.vertices.len();
        let mut acc = T::zero();
        for i in 0..n {
            acc = acc + self.vertices[i].cross(self.vertices[(i + 1) % n]);
        }
        acc * T::half()
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    pub fn transformed(&self, pose: &Pose2D<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| pose.transform_point(*v)).collect(),
        }
    }

    /// Largest distance from the local origin to a vertex.
    pub fn circumradius(&self) -> T {
        self.vertices
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), T::max)
    }

    /// Smallest distance from the local origin to an edge line; negative
    /// when the origin lies outside.
    pub fn inradius(&self) -> T {
        let n = self.vertices.len();
        let mut best = T::infinity();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let edge = b - a;
            // inward normal distance for a CCW polygon
            let d = edge.cross(-a) / edge.norm();
            best = best.min(d);
        }
        best
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let n = self.vertices.len();
        // a degenerate polygon has no interior
        if self.signed_area() <= T::zero() {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= T::zero()
        })
    }

    /// Distance from `p` to the polygon boundary, zero when inside.
    pub fn distance_to(&self, p: Vec2<T>) -> T {
        if self.contains(p) {
            return T::zero();
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(T::infinity(), T::min)
    }
}

/// Closest point to `p` on segment `a`–`b`.
pub fn project_onto_segment<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == T::zero() {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    a + ab * t
}

pub fn point_segment_distance<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    p.distance(project_onto_segment(p, a, b))
}
