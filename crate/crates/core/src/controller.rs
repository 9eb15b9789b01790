//! Heading PID and wheel command law for the differential-drive base.
//!
//! The PID regulates the heading error toward the planner's velocity
//! vector. Left and right wheel commands are `A(dd)·(1 + u)` and
//! `A(dd)·(1 − u)`, where `A` is a clamped linear function of the distance
//! to the goal that drops to zero inside the stop band.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2D, Vec2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PidGains<T> {
    pub kp: T,
    pub ki: T,
    pub kd: T,
    /// Bound on the magnitude of the integral accumulator.
    pub integral_clamp: T,
    /// Weight of the previous filtered derivative in the single-pole filter.
    pub derivative_smoothing: T,
}

impl<T: Scalar> Default for PidGains<T> {
    fn default() -> Self {
        Self {
            kp: T::lit(2.0),
            ki: T::lit(0.0),
            kd: T::lit(0.2),
            integral_clamp: T::lit(1.0),
            derivative_smoothing: T::lit(0.5),
        }
    }
}

impl<T: Scalar> PidGains<T> {
    pub fn proportional(kp: T) -> Self {
        Self {
            kp,
            ki: T::zero(),
            kd: T::zero(),
            integral_clamp: T::one(),
            derivative_smoothing: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PidState<T> {
    pub gains: PidGains<T>,
    pub integral: T,
    pub previous_error: Option<T>,
    pub filtered_derivative: T,
}

impl<T: Scalar> PidState<T> {
    pub fn new(gains: PidGains<T>) -> Self {
        Self {
            gains,
            integral: T::zero(),
            previous_error: None,
            filtered_derivative: T::zero(),
        }
    }

    pub fn reset(&mut self) {
        self.integral = T::zero();
        self.previous_error = None;
        self.filtered_derivative = T::zero();
    }
}

/// Advances the PID by one sample of angular error `e` and returns `u`.
///
/// The integral uses the rectangle rule and is clamped; the first sample
/// after a reset contributes no derivative.
pub fn pid_update<T: Scalar>(state: &mut PidState<T>, e: T, dt: T) -> T {
    debug_assert!(dt > T::zero());
    let g = state.gains;
    let clamp = g.integral_clamp.abs();
    state.integral = (state.integral + e * dt).max(-clamp).min(clamp);

    let raw = match state.previous_error {
        Some(prev) => normalize_angle(e - prev) / dt,
        None => T::zero(),
    };
    let a = g.derivative_smoothing;
    state.filtered_derivative = a * state.filtered_derivative + (T::one() - a) * raw;
    state.previous_error = Some(e);

    g.kp * e + g.ki * state.integral + g.kd * state.filtered_derivative
}

/// Signed angle from the current heading to `target`, in `[-π, π)`;
/// positive when the target lies counterclockwise. Zero for a zero vector.
pub fn heading_error<T: Scalar>(pose: &Pose2D<T>, target: Vec2<T>) -> T {
    if target.x == T::zero() && target.y == T::zero() {
        return T::zero();
    }
    normalize_angle(target.angle() - pose.heading)
}

/// Distance-to-goal envelope `A(dd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SpeedEnvelope<T> {
    /// Command units per meter on the linear segment.
    pub slope: T,
    pub stop_distance: T,
    pub saturation_distance: T,
    pub max_command: i32,
}

impl<T: Scalar> Default for SpeedEnvelope<T> {
    fn default() -> Self {
        Self {
            slope: T::lit(480.0),
            stop_distance: T::lit(0.05),
            saturation_distance: T::lit(0.5),
            max_command: 255,
        }
    }
}

impl<T: Scalar> SpeedEnvelope<T> {
    /// `A(dd)`: zero inside the stop band, the full command past the
    /// saturation distance, linear in between (anchored at saturation).
    pub fn amplitude(&self, dd: T) -> T {
        let max = T::lit(self.max_command as f64);
        if dd < self.stop_distance {
            T::zero()
        } else if dd >= self.saturation_distance {
            max
        } else {
            (max - self.slope * (self.saturation_distance - dd)).max(T::zero())
        }
    }

    /// Command at the inner edge of the linear segment.
    pub fn minimum_moving_command(&self) -> T {
        self.amplitude(self.stop_distance)
    }
}

fn clamp_command<T: Scalar>(value: T, max: i32) -> i32 {
    let m = T::lit(max as f64);
    let c = value.max(-m).min(m).round();
    c.to_i32().unwrap_or(0)
}

/// Left/right wheel commands `clamp(A·(1 + u))`, `clamp(A·(1 − u))`.
pub fn wheel_commands_with_amplitude<T: Scalar>(u: T, amplitude: T, max_command: i32) -> (i32, i32) {
    if amplitude <= T::zero() {
        return (0, 0);
    }
    (
        clamp_command(amplitude * (T::one() + u), max_command),
        clamp_command(amplitude * (T::one() - u), max_command),
    )
}

pub fn wheel_commands<T: Scalar>(u: T, dd: T, envelope: &SpeedEnvelope<T>) -> (i32, i32) {
    wheel_commands_with_amplitude(u, envelope.amplitude(dd), envelope.max_command)
}

/// Counter-rotating commands for turning in place with amplitude `A·u`.
pub fn spin_commands<T: Scalar>(u: T, amplitude: T, max_command: i32) -> (i32, i32) {
    let left = clamp_command(amplitude * u, max_command);
    (left, -left)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("wheel command {command} outside [-{max}, {max}]")]
pub struct CommandRangeError {
    pub command: i32,
    pub max: i32,
}

/// Linear map from wheel command units to wheel surface speed.
pub fn command_to_wheel_speed<T: Scalar>(cmd: i32, max_command: i32, max_speed: T) -> Result<T, CommandRangeError> {
    if cmd.abs() > max_command {
        return Err(CommandRangeError { command: cmd, max: max_command });
    }
    Ok(T::lit(cmd as f64) / T::lit(max_command as f64) * max_speed)
}
