//! Scalar abstraction for the numeric kernels.
//!
//! Everything math-heavy (the invertible flow, point forecasters, scoring
//! rules, interval baselines) is generic over [`Scalar`] so the same code
//! runs at `f32` or `f64`. The crate root exports `f64` aliases, which is
//! what the pipeline and CLI use.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar the numeric kernels operate on.
///
/// Implemented for `f32` and `f64`. Conversions to and from `f64` are
/// explicit so generic code can call into `f64`-only statistics routines
/// (normal quantiles, Student-t tails) without bound gymnastics.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Convert from `f64`, rounding when the scalar is narrower.
    fn cast_from(v: f64) -> Self;

    /// Widen to `f64` (lossless for both supported scalars).
    fn cast_into(self) -> f64;

    /// One draw from the standard normal distribution.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from the uniform distribution on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn cast_from(v: f64) -> Self {
        v
    }

    #[inline]
    fn cast_into(self) -> f64 {
        self
    }

    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }
}

impl Scalar for f32 {
    #[inline]
    fn cast_from(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn cast_into(self) -> f64 {
        f64::from(self)
    }

    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }
}
