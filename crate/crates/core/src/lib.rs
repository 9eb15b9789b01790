//! Deterministic simulator for a swarm of lifting robots that carry
//! physical furniture into place as haptic proxies for a virtual scene.
//!
//! The math modules are generic over [`Scalar`]; the world and engine
//! run on `f64`.

pub mod assignment;
pub mod controller;
pub mod events;
pub mod geometry;
pub mod kinematics;
pub mod manipulation;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod presets;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod trace;
pub mod world;

pub use scalar::Scalar;

pub type Vec2f = geometry::Vec2<f64>;
pub type Pose2f = geometry::Pose2D<f64>;
pub type Polygonf = geometry::Polygon<f64>;
pub type Vec2s = geometry::Vec2<f32>;
pub type Pose2s = geometry::Pose2D<f32>;
pub type PidGainsf = controller::PidGains<f64>;
pub type SpeedEnvelopef = controller::SpeedEnvelope<f64>;
pub type RvoParamsf = planner::RvoParams<f64>;
/// Exact costs for assignment problems on rational inputs.
pub type Rational = num_rational::Ratio<i64>;

pub use events::{Event, LogEntry, ScheduledEvent};
pub use model::{FurnitureId, ObjectId, Pose, RobotId, Vector};
pub use sim::{Sim, SimClock, TraceMode};
pub use world::{load_scenario, parse_scenario, Scenario, SimConfig, World};
