//! Scalar abstraction shared by the deterministic device models.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the device models are written against.
///
/// Implemented for `f32` and `f64`. The Monte Carlo engine itself is
/// `f64`-only, since absolute time tags over a ten minute acquisition
/// need the full mantissa.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_int(x: i64) -> Self {
        Self::from_i64(x).expect("integer representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Speed of light in nm·THz, so that `frequency_thz = C_NM_THZ / wavelength_nm`.
pub const C_NM_THZ: f64 = 299_792.458;
