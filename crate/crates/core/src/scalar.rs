use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point element type of tensors, vectors and models: `f32` or `f64`.
///
/// Reductions (pooling sums, variances, dot products) are accumulated in
/// `f64` regardless of the storage type; `T` only decides what is kept.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumCast + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (rounds to nearest for `f32`).
    #[inline]
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Real")
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("Real always converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts a slice element-wise between scalar types.
pub fn cast_slice<A: Real, B: Real>(src: &[A]) -> Vec<B> {
    src.iter().map(|v| B::of(v.to_f64_lossless())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(1.25f32.to_f64_lossless(), 1.25);
        let v: Vec<f64> = cast_slice(&[1.0f32, -2.5]);
        assert_eq!(v, vec![1.0, -2.5]);
    }
}
