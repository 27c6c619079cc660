//! Pseudospectral simulation and scattering analysis for half-density
//! quantum flows on periodic boxes.
//!
//! The library evolves finite-rank self-adjoint states `γ = Σ_j a_j |u_j⟩⟨u_j|`
//! whose orbitals obey coupled Schrödinger equations with a mean-field
//! potential built from the shared density `ρ = Σ_j a_j |u_j|²`:
//!
//! ```text
//!   i ∂_t u_j = -½ Δ u_j + ( λ (W_α ∗ ρ) + μ ρ^β ) u_j ,
//! ```
//!
//! on `d ∈ {1,2,3}`-dimensional periodic boxes, together with the
//! pseudo-conformal machinery that maps the large-time behavior of `u_j`
//! onto a compactified frame, extracts logarithmically corrected scattering
//! profiles, and cross-checks everything against closed-form and dense
//! linear-algebra oracles.
//!
//! Numerical contracts (documented per module):
//! * centered-order spectral transforms with exact Parseval weights
//!   ([`grid`]),
//! * symmetric Strang splitting with per-step stability guards
//!   ([`propagator`]),
//! * convolution potentials via precomputed truncated-kernel multipliers
//!   ([`potentials`]),
//! * lossless binary snapshots and deterministic CSV/SVG reporting
//!   ([`snapshot`], [`diagnostics`], [`plot`]).
//!
//! All numerics are generic over the floating-point scalar through
//! [`scalar::Scalar`]; the `f64` instantiations below are the supported
//! production types.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod plot;
pub mod potentials;
pub mod propagator;
pub mod pseudoconformal;
pub mod runner;
pub mod scalar;
pub mod scattering;
pub mod snapshot;
pub mod state;
pub mod tolerances;

pub use error::{Error, Result};

/// Production-precision grid.
pub type Grid = grid::SpectralGrid<f64>;
/// Production-precision complex field.
pub type FieldF64 = grid::Field<f64>;
/// Production-precision finite-rank state.
pub type State = state::OrbitalState<f64>;
