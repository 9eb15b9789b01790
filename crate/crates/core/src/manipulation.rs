//! Pickup, carry and place sequence with scissor-lift actuation, plus the
//! marker-plane lift height estimator and occlusion fallback tracking.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2D};
use crate::model::{
    clearance_check, FurnitureId, FurnitureSpec, FurnitureState, ManipulationPhase, Pose,
    RobotSpec,
};
use crate::scalar::Scalar;
use crate::world::{DriveIntent, Robot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManipulationParams {
    /// Height above the registered underside kept while carrying.
    pub lift_overshoot: f64,
    /// Heading tolerance at the entry pose before sliding under.
    pub entry_heading_tolerance: f64,
    /// Heading tolerance when aligning the carried piece with its target.
    pub align_tolerance: f64,
    /// Emit contact at the exact underside height (top sensor) instead of
    /// relying on the registered height alone.
    pub closed_loop_contact: bool,
    /// Lateral slack of the approach corridor beyond the body radius.
    pub corridor_slack: f64,
    /// Distance the held piece may drift from a sliding target before the
    /// robot moves again.
    pub slide_follow_distance: f64,
    /// The lift pauses below contact while the user stands within this
    /// gap of the piece.
    pub user_clearance: f64,
}

impl Default for ManipulationParams {
    fn default() -> Self {
        Self {
            lift_overshoot: 0.02,
            entry_heading_tolerance: 0.15,
            align_tolerance: 0.05,
            closed_loop_contact: false,
            corridor_slack: 0.02,
            slide_follow_distance: 0.06,
            user_clearance: 0.10,
        }
    }
}

/// Scissor lift height integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftState<T> {
    pub height: T,
    pub target: T,
    pub speed: T,
    pub min: T,
    pub max: T,
}

impl<T: Scalar> LiftState<T> {
    pub fn collapsed(min: T, max: T, speed: T) -> Self {
        Self { height: min, target: min, speed, min, max }
    }

    pub fn set_target(&mut self, target: T) {
        self.target = target.max(self.min).min(self.max);
    }

    pub fn at_target(&self) -> bool {
        self.height == self.target
    }

    /// Moves toward the target by at most `speed·dt`.
    pub fn step(&mut self, dt: T) {
        let step = self.speed * dt;
        if self.height < self.target {
            self.height = (self.height + step).min(self.target);
        } else if self.height > self.target {
            self.height = (self.height - step).max(self.target);
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LiftEstimateError {
    #[error("bar tilt {0} rad outside the calibrated range")]
    TiltOutOfRange(f64),
    #[error("height {0} m outside the lift range")]
    HeightOutOfRange(f64),
}

/// Marker plane on the scissor bars: height is `h0 + N·L·sin θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerFrame<T> {
    pub segments: u32,
    pub bar_length: T,
    pub base_height: T,
    pub tilt_min: T,
    pub tilt_max: T,
}

impl<T: Scalar> MarkerFrame<T> {
    /// Two 0.35 m segments spanning 0.30–1.00 m over tilts 0–π/2.
    pub fn standard() -> Self {
        Self {
            segments: 2,
            bar_length: T::lit(0.35),
            base_height: T::lit(0.30),
            tilt_min: T::zero(),
            tilt_max: T::FRAC_PI_2(),
        }
    }

    fn span(&self) -> T {
        T::lit(self.segments as f64) * self.bar_length
    }

    /// Height produced by a bar tilt.
    pub fn height_at(&self, tilt: T) -> Result<T, LiftEstimateError> {
        if !(tilt >= self.tilt_min && tilt <= self.tilt_max) {
            return Err(LiftEstimateError::TiltOutOfRange(tilt.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(self.base_height + self.span() * tilt.lsin())
    }

    /// Bar tilt the tracker would observe at `height`.
    pub fn tilt_for(&self, height: T) -> Result<T, LiftEstimateError> {
        let lo = self.base_height + self.span() * self.tilt_min.lsin();
        let hi = self.base_height + self.span() * self.tilt_max.lsin();
        if !(height >= lo && height <= hi) {
            return Err(LiftEstimateError::HeightOutOfRange(height.to_f64().unwrap_or(f64::NAN)));
        }
        let s = ((height - self.base_height) / self.span()).max(-T::one()).min(T::one());
        Ok(s.lasin())
    }
}

/// Lift height estimated from the observed marker-plane tilt.
pub fn estimate_lift_height<T: Scalar>(frame: &MarkerFrame<T>, observed_tilt: T) -> Result<T, LiftEstimateError> {
    frame.height_at(observed_tilt)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PickupError {
    #[error("furniture {0} is already carried by another robot")]
    AlreadyCarried(FurnitureId),
    #[error("furniture {0} cannot be lifted by this robot")]
    NotLiftable(FurnitureId),
}

/// World-frame entry pose for a piece at its current pose.
pub fn entry_pose(spec: &FurnitureSpec, furniture: &FurnitureState) -> Pose {
    furniture.pose.compose(&spec.entry_point)
}

pub fn exit_pose(spec: &FurnitureSpec, furniture: &FurnitureState) -> Pose {
    furniture.pose.compose(&spec.exit_pose())
}

/// Waypoints to get under a piece: the entry pose, then straight in to the
/// center. A robot already at the center gets the center only.
pub fn plan_pickup(
    robot_pose: &Pose,
    robot_spec: &RobotSpec,
    spec: &FurnitureSpec,
    furniture: &FurnitureState,
    stop_distance: f64,
) -> Result<Vec<Pose>, PickupError> {
    if furniture.carried_by.is_some() {
        return Err(PickupError::AlreadyCarried(furniture.id.clone()));
    }
    if !clearance_check(spec, robot_spec) {
        return Err(PickupError::NotLiftable(furniture.id.clone()));
    }
    let entry = entry_pose(spec, furniture);
    let approach_heading = (furniture.pose.position() - entry.position()).angle();
    let center = Pose::from_parts(furniture.pose.position(), approach_heading);
    if robot_pose.distance(&center) < stop_distance {
        return Ok(vec![center]);
    }
    Ok(vec![Pose::from_parts(entry.position(), approach_heading), center])
}

/// Robot pose that puts a carried piece at `destination`, given the piece's
/// pose in the robot frame.
pub fn carrier_goal(destination: &Pose, pickup_offset: &Pose) -> Pose {
    destination.compose(&pickup_offset.inverse())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManipulationEvent {
    Attached { furniture: FurnitureId },
    Detached { furniture: FurnitureId, pose: Pose },
    Completed { furniture: FurnitureId },
    Fault { furniture: FurnitureId, reason: String },
    Aborted { furniture: FurnitureId, reason: String },
}

/// Inputs for advancing one robot's manipulation sequence.
pub struct ManipulationContext<'a> {
    pub spec: &'a FurnitureSpec,
    pub furniture: &'a mut FurnitureState,
    /// Where the piece should end up.
    pub destination: Pose,
    /// Keep holding the piece at the destination instead of setting it down.
    pub hold: bool,
    pub robot_spec: &'a RobotSpec,
    pub params: &'a ManipulationParams,
    pub stop_distance: f64,
    /// The user is touching or about to touch the piece.
    pub user_near: bool,
}

/// Advances a robot's phase machine by one physics tick.
///
/// The robot's [`DriveIntent`] is rewritten for the next control tick;
/// returns an event when something observable happened.
pub fn step_manipulation(robot: &mut Robot, ctx: &mut ManipulationContext<'_>, dt: f64) -> Option<ManipulationEvent> {
    let fid = ctx.furniture.id.clone();
    let pose = robot.state.pose;
    let stop = ctx.stop_distance;
    match robot.state.phase {
        ManipulationPhase::Idle => None,
        ManipulationPhase::NavigateToEntry => {
            if let Some(holder) = &ctx.furniture.carried_by {
                if holder != &robot.state.id {
                    return Some(abort(robot, fid, "furniture taken by another robot"));
                }
            }
            let waypoints = match plan_pickup(&pose, ctx.robot_spec, ctx.spec, ctx.furniture, stop) {
                Ok(w) => w,
                Err(e) => return Some(abort(robot, fid, &e.to_string())),
            };
            if waypoints.len() == 1 {
                robot.state.phase = ManipulationPhase::ApproachUnder;
                robot.approach = Some((pose.position(), waypoints[0].position()));
                return None;
            }
            let entry = waypoints[0];
            let center = waypoints[1];
            if robot.aligning || pose.position().distance(entry.position()) < stop {
                robot.aligning = true;
                let err = normalize_angle(entry.heading - pose.heading);
                if err.abs() < ctx.params.entry_heading_tolerance {
                    robot.aligning = false;
                    robot.state.phase = ManipulationPhase::ApproachUnder;
                    robot.approach = Some((entry.position(), center.position()));
                    robot.intent = DriveIntent::Navigate {
                        goal: center.position(),
                        exclude: Some(fid),
                        stop_distance: stop,
                    };
                } else if pose.position().distance(entry.position()) > 3.0 * stop {
                    // pushed off the entry while turning
                    robot.aligning = false;
                } else {
                    robot.intent = DriveIntent::Spin { heading: entry.heading };
                }
            } else {
                robot.intent = DriveIntent::Navigate {
                    goal: entry.position(),
                    exclude: None,
                    stop_distance: stop,
                };
            }
            None
        }
        ManipulationPhase::ApproachUnder => {
            let center = ctx.furniture.pose.position();
            if pose.position().distance(center) < stop {
                let underside = ctx.spec.underside_height;
                let target = underside + ctx.params.lift_overshoot;
                if target > robot.lift.max {
                    robot.state.phase = ManipulationPhase::Retreat;
                    robot.fault = Some(format!(
                        "lift target {target:.3} m exceeds maximum {:.3} m",
                        robot.lift.max
                    ));
                    robot.intent = DriveIntent::Navigate {
                        goal: exit_pose(ctx.spec, ctx.furniture).position(),
                        exclude: Some(fid.clone()),
                        stop_distance: stop,
                    };
                    return Some(ManipulationEvent::Fault {
                        furniture: fid,
                        reason: robot.fault.clone().unwrap_or_default(),
                    });
                }
                robot.state.phase = ManipulationPhase::Lift;
                robot.lift.set_target(target);
                robot.intent = DriveIntent::Hold;
            } else {
                robot.intent = DriveIntent::Navigate {
                    goal: center,
                    exclude: Some(fid),
                    stop_distance: stop,
                };
            }
            None
        }
        ManipulationPhase::Lift => {
            robot.intent = DriveIntent::Hold;
            if ctx.user_near && ctx.furniture.carried_by.is_none() {
                return None;
            }
            robot.lift.step(dt);
            robot.state.lift_height = robot.lift.height;
            let underside = ctx.spec.underside_height;
            let contact = ctx.params.closed_loop_contact && robot.lift.height >= underside;
            if contact && ctx.furniture.carried_by.is_none() {
                attach(robot, ctx.furniture);
            }
            if ctx.furniture.carried_by.as_ref() == Some(&robot.state.id) {
                ctx.furniture.elevation_offset = (robot.lift.height - underside).max(0.0);
            }
            if robot.lift.at_target() {
                if ctx.furniture.carried_by.is_none() {
                    attach(robot, ctx.furniture);
                }
                ctx.furniture.elevation_offset = robot.lift.height - underside;
                robot.state.phase = ManipulationPhase::Carry;
                return Some(ManipulationEvent::Attached { furniture: fid });
            }
            None
        }
        ManipulationPhase::Carry => {
            let offset = robot.pickup_offset.unwrap_or_else(Pose2D::identity);
            let goal = carrier_goal(&ctx.destination, &offset);
            if pose.position().distance(goal.position()) < stop {
                robot.state.phase = ManipulationPhase::NavigateToExitAligned;
                robot.intent = DriveIntent::Spin { heading: goal.heading };
            } else {
                robot.intent = DriveIntent::Navigate {
                    goal: goal.position(),
                    exclude: Some(fid),
                    stop_distance: stop,
                };
            }
            None
        }
        ManipulationPhase::NavigateToExitAligned => {
            let offset = robot.pickup_offset.unwrap_or_else(Pose2D::identity);
            let goal = carrier_goal(&ctx.destination, &offset);
            let drift = pose.position().distance(goal.position());
            if drift > ctx.params.slide_follow_distance.max(2.0 * stop) {
                robot.state.phase = ManipulationPhase::Carry;
                return None;
            }
            let err = normalize_angle(goal.heading - pose.heading);
            if err.abs() < ctx.params.align_tolerance {
                if ctx.hold {
                    robot.intent = DriveIntent::Hold;
                } else {
                    robot.state.phase = ManipulationPhase::Lower;
                    robot.lift.set_target(robot.lift.min);
                    robot.intent = DriveIntent::Hold;
                }
            } else {
                robot.intent = DriveIntent::Spin { heading: goal.heading };
            }
            None
        }
        ManipulationPhase::Lower => {
            robot.intent = DriveIntent::Hold;
            robot.lift.step(dt);
            robot.state.lift_height = robot.lift.height;
            let underside = ctx.spec.underside_height;
            let mut event = None;
            if ctx.furniture.carried_by.as_ref() == Some(&robot.state.id) {
                if robot.lift.height <= underside {
                    ctx.furniture.carried_by = None;
                    ctx.furniture.elevation_offset = 0.0;
                    robot.state.carrying = None;
                    event = Some(ManipulationEvent::Detached {
                        furniture: fid.clone(),
                        pose: ctx.furniture.pose,
                    });
                } else {
                    ctx.furniture.elevation_offset = robot.lift.height - underside;
                }
            }
            if robot.lift.at_target() {
                robot.state.phase = ManipulationPhase::Retreat;
                robot.pickup_offset = None;
                robot.intent = DriveIntent::Navigate {
                    goal: exit_pose(ctx.spec, ctx.furniture).position(),
                    exclude: Some(fid),
                    stop_distance: stop,
                };
            }
            event
        }
        ManipulationPhase::Retreat => {
            let exit = exit_pose(ctx.spec, ctx.furniture).position();
            if pose.position().distance(exit) < stop {
                robot.state.phase = ManipulationPhase::Idle;
                robot.intent = DriveIntent::Hold;
                robot.approach = None;
                let fault = robot.fault.take();
                return Some(match fault {
                    Some(reason) => ManipulationEvent::Aborted { furniture: fid, reason },
                    None => ManipulationEvent::Completed { furniture: fid },
                });
            }
            robot.intent = DriveIntent::Navigate {
                goal: exit,
                exclude: Some(fid),
                stop_distance: stop,
            };
            None
        }
    }
}

fn attach(robot: &mut Robot, furniture: &mut FurnitureState) {
    furniture.carried_by = Some(robot.state.id.clone());
    robot.state.carrying = Some(furniture.id.clone());
    robot.pickup_offset = Some(robot.state.pose.relative(&furniture.pose));
}

fn abort(robot: &mut Robot, furniture: FurnitureId, reason: &str) -> ManipulationEvent {
    robot.state.phase = ManipulationPhase::Idle;
    robot.aligning = false;
    robot.approach = None;
    robot.intent = DriveIntent::Hold;
    ManipulationEvent::Aborted { furniture, reason: reason.to_string() }
}

/// Which marker set the pose estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingSource {
    Robot,
    FurnitureProxy,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("tracking lost: robot and carried furniture markers are both occluded")]
pub struct TrackingLost;

/// Robot pose estimate when its own markers may be hidden under the piece
/// it carries: the piece's pose composed with the inverse pickup offset.
pub fn proxy_tracking_fallback(
    robot_pose: &Pose,
    robot_occluded: bool,
    carried: Option<(&FurnitureState, &Pose, bool)>,
) -> Result<(Pose, TrackingSource), TrackingLost> {
    if !robot_occluded {
        return Ok((*robot_pose, TrackingSource::Robot));
    }
    match carried {
        Some((furniture, offset, furniture_occluded)) if !furniture_occluded => Ok((
            furniture.pose.compose(&offset.inverse()),
            TrackingSource::FurnitureProxy,
        )),
        _ => Err(TrackingLost),
    }
}
