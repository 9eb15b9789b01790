//! Differential-drive kinematics with exact arc integration.

use crate::geometry::{normalize_angle, Pose2D};
use crate::scalar::Scalar;

/// Integrates wheel surface speeds over `dt` along the exact circular arc.
pub fn integrate_diff_drive<T: Scalar>(pose: &Pose2D<T>, v_left: T, v_right: T, track_width: T, dt: T) -> Pose2D<T> {
    let v = (v_left + v_right) * T::half();
    let omega = (v_right - v_left) / track_width;
    let h0 = pose.heading;
    if omega == T::zero() {
        return Pose2D {
            x: pose.x + v * h0.lcos() * dt,
            y: pose.y + v * h0.lsin() * dt,
            heading: h0,
        };
    }
    let h1 = h0 + omega * dt;
    if v == T::zero() {
        return Pose2D { x: pose.x, y: pose.y, heading: normalize_angle(h1) };
    }
    let r = v / omega;
    Pose2D {
        x: pose.x + r * (h1.lsin() - h0.lsin()),
        y: pose.y - r * (h1.lcos() - h0.lcos()),
        heading: normalize_angle(h1),
    }
}
