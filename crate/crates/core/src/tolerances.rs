//! Central registry of numerical tolerances.
//!
//! Every tolerance used by the library and its test suites lives here with a
//! rationale, so that a change in one place is visible everywhere and tests
//! do not accumulate ad-hoc magic numbers. Tolerances are stated for `f64`;
//! scalar-generic code rescales via [`scaled`] so `f32` runs get proportional
//! budgets.

use crate::scalar::Scalar;

/// Relative round-trip error allowed for forward∘inverse transforms.
///
/// A radix-2 FFT of length `n ≤ 4096` loses at most a few ulps per butterfly
/// stage; 1e-12 leaves two orders of margin over the observed worst case.
pub const TRANSFORM_ROUND_TRIP: f64 = 1e-12;

/// Absolute/relative budget for identities that are exact at the multiplier
/// level (unitarity of the free propagator, Parseval, norm invariance).
pub const MULTIPLIER_EXACT: f64 = 1e-12;

/// Default orbital orthonormality tolerance `τ_gram`. Evolution preserves
/// the Gram matrix exactly at the multiplier level; drift is pure roundoff
/// accumulation, observed ≲ 1e-13 per thousand steps on the largest grids.
pub const GRAM_DEFAULT: f64 = 1e-8;

/// Per-step mass conservation budget for the split-step integrator.
pub const MASS_PER_STEP: f64 = 1e-12;

/// Gram-matrix drift budget per 1000 integrator steps.
pub const GRAM_PER_1000_STEPS: f64 = 1e-10;

/// Relative tolerance for the lens-transform chain identities that hold to
/// spectral accuracy (not exactly) on well-resolved data.
pub const SPECTRAL_IDENTITY: f64 = 1e-8;

/// Required relative convergence of the radial quadratures that build
/// interaction-kernel multipliers; failure to reach this is a hard error.
pub const KERNEL_QUADRATURE: f64 = 1e-10;

/// Target by which the adaptive refinement inside the kernel quadrature
/// undershoots [`KERNEL_QUADRATURE`] to absorb summation roundoff.
pub const KERNEL_QUADRATURE_INNER: f64 = 1e-12;

/// Imaginary residue allowed when a mathematically real field is obtained
/// through a complex transform pair, relative to the field's sup-norm.
pub const REAL_RESIDUE: f64 = 1e-12;

/// Densities below this magnitude may be clamped to zero before fractional
/// powers; anything more negative is a contract violation.
pub const DENSITY_CLAMP: f64 = 1e-12;

/// Default fraction of total mass allowed within two grid spacings of the
/// box boundary before wrap-around warnings fire.
pub const EDGE_MASS_DEFAULT: f64 = 1e-8;

/// `|dt|·‖V_eff‖_∞` above this is a hard stability error…
pub const STABILITY_HARD: f64 = 0.5;
/// …and above this it is only a logged warning.
pub const STABILITY_WARN: f64 = 0.1;

/// Unitarity deviation allowed for a user-supplied gauge-mixing matrix.
pub const UNITARY_MIX: f64 = 1e-12;

/// Relative agreement required between the multiplier convolution path and
/// the independent real-space quadrature oracle on coarse grids.
pub const CONVOLUTION_ORACLE: f64 = 1e-6;

/// Rescale an `f64` tolerance to the active scalar: `f32` budgets grow by
/// the ratio of machine epsilons (≈ 2.4e8), capped below at the `f64` value.
pub fn scaled<S: Scalar>(tol_f64: f64) -> S {
    let ratio = S::eps().to_f64_lossy() / f64::EPSILON;
    S::of(tol_f64 * ratio.max(1.0))
}
