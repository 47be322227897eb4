//! Scalar abstraction for the numerical core.
//!
//! The differentiable graph, attention blocks, losses, and simplex geometry
//! are generic over a floating-point scalar. Concrete `f64` aliases live at
//! the crate root; `f64` is the type used by the training pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Clamp margin used before `arccos` so its gradient stays finite.
    fn acos_margin() -> Self {
        Self::from_f64(1e-7).unwrap()
    }

    /// Determinants with absolute value below this are treated as singular.
    fn det_epsilon() -> Self {
        Self::from_f64(1e-12).unwrap()
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}
