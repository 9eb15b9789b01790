//! Domain types for the tracked room: play area, robots, furniture, user
//! and virtual scene.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Polygon, Pose2D, Vec2};

pub type Pose = Pose2D<f64>;
pub type Vector = Vec2<f64>;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_type!(RobotId);
id_type!(
    /// Identifier of a physical furniture instance.
    FurnitureId
);
id_type!(
    /// Identifier of a furniture catalog entry.
    SpecId
);
id_type!(
    /// Identifier of a virtual scene object.
    ObjectId
);

/// Tracked floor region. The user walks in `[0, width] × [0, depth]`; the
/// parking band extends `margin` beyond every side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayArea {
    pub width: f64,
    pub depth: f64,
    #[serde(default)]
    pub margin: f64,
}

impl PlayArea {
    pub fn contains(&self, p: Vector) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.depth
    }

    /// Inside the play area grown by the margin.
    pub fn contains_with_margin(&self, p: Vector) -> bool {
        p.x >= -self.margin
            && p.x <= self.width + self.margin
            && p.y >= -self.margin
            && p.y <= self.depth + self.margin
    }

    pub fn in_parking_band(&self, p: Vector) -> bool {
        !self.contains(p) && self.contains_with_margin(p)
    }

    pub fn center(&self) -> Vector {
        Vector::new(self.width / 2.0, self.depth / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSpec {
    pub body_radius: f64,
    pub max_speed: f64,
    /// Wheel commands range over `[-wheel_cmd_max, wheel_cmd_max]`.
    pub wheel_cmd_max: i32,
    pub track_width: f64,
    pub lift_min: f64,
    pub lift_max: f64,
    pub lift_speed: f64,
    pub max_payload: f64,
    pub clearance_height: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            body_radius: 0.175,
            max_speed: 0.20,
            wheel_cmd_max: 255,
            track_width: 0.235,
            lift_min: 0.30,
            lift_max: 1.00,
            lift_speed: 0.013,
            max_payload: 22.0,
            clearance_height: 0.30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FurnitureKind {
    Chair,
    Table,
    WallProp,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureSpec {
    pub id: SpecId,
    pub kind: FurnitureKind,
    /// Convex outline in the furniture's local frame.
    pub footprint: Polygon<f64>,
    pub underside_height: f64,
    pub top_height: f64,
    pub weight: f64,
    pub entry_point: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_point: Option<Pose>,
    /// Radius of the leg-free disc around the local origin. Defaults to
    /// the footprint inradius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leg_free_radius: Option<f64>,
}

impl FurnitureSpec {
    /// Exit pose, defaulting to the entry pose mirrored through the center.
    pub fn exit_pose(&self) -> Pose {
        self.exit_point.unwrap_or_else(|| {
            let e = self.entry_point;
            Pose::new(-e.x, -e.y, e.heading)
        })
    }

    pub fn leg_free_radius(&self) -> f64 {
        self.leg_free_radius.unwrap_or_else(|| self.footprint.inradius())
    }

    pub fn circumradius(&self) -> f64 {
        self.footprint.circumradius()
    }
}

/// World-frame outline of a furniture piece at `pose`.
pub fn furniture_footprint(spec: &FurnitureSpec, pose: &Pose) -> Polygon<f64> {
    spec.footprint.transformed(pose)
}

/// Whether a single robot can slide under and lift this piece.
pub fn clearance_check(spec: &FurnitureSpec, robot: &RobotSpec) -> bool {
    spec.underside_height >= robot.clearance_height
        && spec.leg_free_radius() >= robot.body_radius
        && spec.weight <= robot.max_payload
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ManipulationPhase {
    Idle,
    NavigateToEntry,
    ApproachUnder,
    Lift,
    Carry,
    NavigateToExitAligned,
    Lower,
    Retreat,
}

impl ManipulationPhase {
    /// Phases in which the robot is committed to its furniture and may not
    /// be reassigned.
    pub fn is_locked(self) -> bool {
        !matches!(self, Self::Idle | Self::NavigateToEntry)
    }

    /// Phases in which the robot may legally overlap its target footprint.
    pub fn is_under_furniture(self) -> bool {
        matches!(
            self,
            Self::ApproachUnder
                | Self::Lift
                | Self::Carry
                | Self::NavigateToExitAligned
                | Self::Lower
                | Self::Retreat
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub pose: Pose,
    pub wheel_left: i32,
    pub wheel_right: i32,
    pub lift_height: f64,
    pub carrying: Option<FurnitureId>,
    pub phase: ManipulationPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureState {
    pub id: FurnitureId,
    pub spec: SpecId,
    pub pose: Pose,
    pub carried_by: Option<RobotId>,
    pub elevation_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserMode {
    Walking,
    Seated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserAvatar {
    pub pose: Pose,
    /// Clearance robots keep from the user when planning.
    pub safety_radius: f64,
    /// Radius of the proximity disc in which touchable proxies are rendered.
    pub reach_radius: f64,
    /// Physical body radius used by the collision oracle.
    pub body_radius: f64,
    pub mode: UserMode,
}

impl UserAvatar {
    pub fn at(pose: Pose) -> Self {
        Self {
            pose,
            safety_radius: 0.6,
            reach_radius: 1.5,
            body_radius: 0.25,
            mode: UserMode::Walking,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingSpec {
    /// Length of the physical proxy that slides along the surface.
    pub proxy_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualObject {
    pub id: ObjectId,
    pub kind: FurnitureKind,
    /// Pose in the virtual scene frame.
    pub pose: Pose,
    /// Length along the local x axis and depth along local y.
    pub dimensions: Vector,
    #[serde(default = "default_true")]
    pub touchable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sliding: Option<SlidingSpec>,
}

fn default_true() -> bool {
    true
}

impl VirtualObject {
    pub fn local_footprint(&self) -> Polygon<f64> {
        Polygon::rectangle(self.dimensions.x, self.dimensions.y)
    }
}

/// Virtual objects plus the transform from the virtual frame into the
/// play-area frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VirtualScene {
    pub objects: Vec<VirtualObject>,
    pub origin: Pose,
}

impl VirtualScene {
    pub fn get(&self, id: &ObjectId) -> Option<&VirtualObject> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn get_mut(&mut self, id: &ObjectId) -> Option<&mut VirtualObject> {
        self.objects.iter_mut().find(|o| &o.id == id)
    }

    /// Pose of a virtual object in the play-area frame.
    pub fn physical_pose(&self, object: &VirtualObject) -> Pose {
        self.origin.compose(&object.pose)
    }

    pub fn physical_footprint(&self, object: &VirtualObject) -> Polygon<f64> {
        object.local_footprint().transformed(&self.physical_pose(object))
    }

    /// Virtual-frame pose of a play-area pose.
    pub fn to_virtual(&self, physical: &Pose) -> Pose {
        self.origin.inverse().compose(physical)
    }
}
