//! Floating-point scalar abstraction.
//!
//! All numerical kernels are generic over a [`Scalar`] so the same code path
//! runs in `f64` (the default used by the CLI, oracles, and I/O formats) and
//! in `f32` (compile-time coverage and loose-tolerance smoke tests). The
//! trait is a thin alias over the arithmetic the kernels actually use:
//! FFT support, transcendental functions, π constants, and compound
//! assignment.

use num_complex::Complex;

/// Scalar type usable on a spectral grid.
///
/// Implemented for `f32` and `f64` only; the explicit impls (rather than a
/// blanket impl) keep the set of supported scalars closed, which the
/// serialization formats rely on.
pub trait Scalar:
    rustfft::FftNum
    + num_traits::Float
    + num_traits::FloatConst
    + num_traits::NumAssign
    + std::iter::Sum
    + std::fmt::Display
    + std::fmt::LowerExp
{
    /// Lossy conversion from `f64`. Parameters, tolerances, and RNG draws
    /// are produced in `f64` and narrowed through this.
    fn of(x: f64) -> Self;

    /// Widening (or identity) conversion to `f64` for reporting and I/O.
    fn to_f64_lossy(self) -> f64;

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

/// Complex number over the active scalar.
pub type CScalar<S> = Complex<S>;

/// Unit-modulus complex exponential `e^{iθ}` built from `cos`/`sin`
/// (modulus exact to one ulp, unlike going through `Complex::exp`).
#[inline]
pub fn cis<S: Scalar>(theta: S) -> Complex<S> {
    Complex::new(theta.cos(), theta.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(1.25f32.to_f64_lossy(), 1.25);
    }

    #[test]
    fn cis_has_unit_modulus() {
        for k in 0..32 {
            let theta = 0.37 * f64::from(k);
            let z = cis(theta);
            assert!((z.norm() - 1.0).abs() < 4.0 * f64::EPSILON);
        }
    }
}
