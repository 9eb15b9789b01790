//! Scalar abstraction shared by the geometric and control math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar used by the kinematics, planner and controller
/// math. Implemented for `f32` and `f64`.
///
/// The trig functions below go to `libm` directly. `Float::sin` and
/// friends forward to the host C library whenever any crate in the build
/// enables `num-traits/std`, and those may differ in the last bit between
/// platforms; the simulation uses only these.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn lsin(self) -> Self;
    fn lcos(self) -> Self;
    fn lasin(self) -> Self;
    fn latan2(self, x: Self) -> Self;
    fn lhypot(self, other: Self) -> Self;

    fn lsin_cos(self) -> (Self, Self) {
        (self.lsin(), self.lcos())
    }

    /// Converts an `f64` literal or configuration value.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f32 {
    fn lsin(self) -> Self {
        libm::sinf(self)
    }
    fn lcos(self) -> Self {
        libm::cosf(self)
    }
    fn lasin(self) -> Self {
        libm::asinf(self)
    }
    fn latan2(self, x: Self) -> Self {
        libm::atan2f(self, x)
    }
    fn lhypot(self, other: Self) -> Self {
        libm::hypotf(self, other)
    }
}

impl Scalar for f64 {
    fn lsin(self) -> Self {
        libm::sin(self)
    }
    fn lcos(self) -> Self {
        libm::cos(self)
    }
    fn lasin(self) -> Self {
        libm::asin(self)
    }
    fn latan2(self, x: Self) -> Self {
        libm::atan2(self, x)
    }
    fn lhypot(self, other: Self) -> Self {
        libm::hypot(self, other)
    }
}
