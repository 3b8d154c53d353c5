use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar field the numerical code is generic over (`f32`, `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| Self::lit(n as f64))
    }
}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}
