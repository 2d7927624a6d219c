//! Scalar abstraction for the auction and scoring math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Real scalar the pricing, penalty and value arithmetic is generic over.
///
/// Implemented for `f32` and `f64`. The simulator itself runs on `f64`
/// (see the aliases at the crate root); `f32` is useful for compact
/// offline analysis and is exercised by the tests.
pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    fn real(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

/// Clamp into `[lo, hi]`, mapping NaN to `lo`.
pub fn clamp<S: Real>(x: S, lo: S, hi: S) -> S {
    if x.is_nan() || x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}
