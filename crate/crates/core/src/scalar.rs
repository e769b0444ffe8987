//! Numeric abstraction for score arithmetic.
//!
//! Scores are weighted proportions, so the estimator only needs field
//! operations, ordering (for clamping) and a way to lift counts into the
//! scalar type. `f32`/`f64` are used for everyday runs; [`Exact`] makes the
//! same code produce exact rationals so two summation routes can be compared
//! for equality rather than within a tolerance.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational scalar.
pub type Exact = Ratio<BigInt>;

/// Scalar type the estimator and oracle are generic over.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Lift a non-negative count into the scalar type.
    fn from_count(n: usize) -> Self;

    /// Lift an `f64` (e.g. a categorical weight). Exact for rationals.
    fn from_weight(w: f64) -> Self;

    /// Lossy conversion for rendering and export.
    fn as_f64(&self) -> f64;

    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }
}

impl<T> Scalar for T
where
    T: Num + Clone + PartialOrd + Debug + Send + Sync + FromPrimitive + ToPrimitive + 'static,
{
    fn from_count(n: usize) -> Self {
        T::from_usize(n).expect("count representable in scalar type")
    }

    fn from_weight(w: f64) -> Self {
        T::from_f64(w).expect("finite weight")
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_weights_are_exact() {
        let third = Exact::from_count(1) / Exact::from_count(3);
        let sum = third.clone() + third.clone() + third;
        assert_eq!(sum, Exact::from_count(1));
        assert_eq!(Exact::from_weight(0.5) * Exact::from_count(2), Exact::from_count(1));
    }

    #[test]
    fn clamp_unit_bounds() {
        assert_eq!((-0.25f64).clamp_unit(), 0.0);
        assert_eq!(1.5f32.clamp_unit(), 1.0);
        assert_eq!(0.3f64.clamp_unit(), 0.3);
    }
}
