//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the simulator can run on (`f32` or `f64`).
///
/// `rustfft::FftNum` brings `num_traits::Signed` along, whose `abs` and
/// `signum` collide with the `Float` methods of the same name; call those as
/// `Float::abs(x)` in generic code.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + rustfft::FftNum
    + Default
    + Display
    + LowerExp
    + Sum
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    /// Numerical tolerance used for density-matrix validity checks.
    ///
    /// 1e-10 in double precision, widened proportionally for `f32`.
    #[inline]
    fn validity_tol() -> Self {
        Float::max(Self::lit(1e-10), Self::epsilon() * Self::lit(1e3))
    }
}

impl Real for f32 {}
impl Real for f64 {}
