//! Scalar abstraction for the numeric parts of the pipeline.
//!
//! Everything downstream of pixel decoding (quality scores, features, SUR
//! curves, the regressor) is generic over [`Real`], so the same code runs in
//! `f32` or `f64`. Concrete aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + AddAssign + Display + Debug + Default + 'static
{
    /// Complementary error function, needed for the normal Q-function.
    fn erfc(self) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Real for f64 {
    fn erfc(self) -> f64 {
        libm::erfc(self)
    }
}

impl Real for f32 {
    fn erfc(self) -> f32 {
        libm::erfcf(self)
    }
}
