//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the surrogate, acquisition and estimation code is generic over.
///
/// Implemented for `f32` and `f64`. The special functions come from `libm` so
/// both widths get a correctly rounded complementary error function.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    fn lit(v: f64) -> Self;

    fn erfc(self) -> Self;

    /// Standard normal cumulative distribution function.
    fn norm_cdf(self) -> Self {
        Self::lit(0.5) * (-self / Self::lit(std::f64::consts::SQRT_2)).erfc()
    }

    /// Standard normal density.
    fn norm_pdf(self) -> Self {
        let inv_sqrt_2pi = Self::lit(0.398_942_280_401_432_7);
        inv_sqrt_2pi * (-(self * self) * Self::lit(0.5)).exp()
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// `log(sum(exp(values)))` without overflow. Returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(mean(exp(values)))`.
pub fn log_mean_exp<T: Scalar>(values: &[T]) -> T {
    log_sum_exp(values) - T::from_usize_lossy(values.len()).ln()
}

/// `log(1 + exp(a))`, accurate for large and very negative `a`.
pub fn log1p_exp<T: Scalar>(a: T) -> T {
    if a > T::lit(35.0) {
        a + (-a).exp()
    } else if a < T::lit(-35.0) {
        a.exp()
    } else {
        a.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((0.0f64.norm_cdf() - 0.5).abs() < 1e-16);
        assert!((1.959_963_984_540_054f64.norm_cdf() - 0.975).abs() < 1e-14);
        assert!(((-1.0f64).norm_cdf() - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((0.0f32.norm_pdf() - 0.398_942_3).abs() < 1e-6);
    }

    #[test]
    fn lse_handles_huge_arguments() {
        let v = [700.0f64, 700.0, 699.0];
        let expected = 700.0 + (2.0 + (-1.0f64).exp()).ln();
        assert!((log_sum_exp(&v) - expected).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(log_mean_exp(&[0.0f64; 7]), 0.0);
    }

    #[test]
    fn softplus_branches_agree() {
        for a in [-50.0f64, -35.0, -1.0, 0.0, 3.0, 35.0, 50.0] {
            let direct = (1.0 + a.exp()).ln();
            assert!((log1p_exp(a) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }
}
