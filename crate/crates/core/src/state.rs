//! Finite-rank half-density states and their derived observables.
//!
//! A state is the factorized form `κ = Σ_j √a_j |u_j⟩⟨y_j|` of a rank-`R`
//! nonnegative operator `γ = κκ* = Σ_j a_j |u_j⟩⟨u_j|`, stored as
//! occupations `a_j ≥ 0` plus position-frame orbitals `u_j` on a shared
//! grid. The evolution acts on the `x` side only, through a common
//! self-adjoint Hamiltonian, so:
//!
//! * occupations are constants of motion,
//! * the orbital Gram matrix stays the identity (monitored, tolerance
//!   `τ_gram`),
//! * `γ` stays positive semi-definite by construction,
//! * Schatten quantities stay closed-form: `‖γ‖_{𝔖¹} = Σ a_j‖u_j‖²`,
//!   `‖κ‖_{𝔖²} = (Σ a_j‖u_j‖²)^{1/2}`.
//!
//! The shared density is `ρ(x) = Σ_j a_j |u_j(x)|² ≥ 0`, and the pointwise
//! identity `‖ρ‖_∞^{1/2} = ‖κ‖_{L^∞_x L²_y}` holds exactly on the grid.
//!
//! The weighted norm `‖⟨J(t)⟩^m κ‖` uses the Heisenberg factorization
//! `⟨J(t)⟩^m = U(t) ⟨x⟩^m U(-t)` with `U` the free flow, applied orbital
//! by orbital.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldFrame, NormKind, SpectralGrid};
use crate::scalar::{cis, Scalar};
use crate::tolerances;

/// Finite-rank state `{a_j, u_j}` at a definite frame time.
#[derive(Debug, Clone)]
pub struct OrbitalState<S: Scalar> {
    grid: Arc<SpectralGrid<S>>,
    occupations: Vec<S>,
    orbitals: Vec<Field<S>>,
    time: S,
}

impl<S: Scalar> OrbitalState<S> {
    /// Assemble a state, validating rank ≥ 1, nonnegative finite
    /// occupations, a finite frame time, and that every orbital is a
    /// position-frame field on the shared grid.
    pub fn new(
        grid: Arc<SpectralGrid<S>>,
        occupations: Vec<S>,
        orbitals: Vec<Field<S>>,
        time: S,
    ) -> Result<Self> {
        if occupations.is_empty() || occupations.len() != orbitals.len() {
            return Err(Error::InvalidParameter {
                name: "rank",
                value: occupations.len() as f64,
                requirement: "rank ≥ 1 with one orbital per occupation",
            });
        }
        for &a in &occupations {
            if !(a >= S::zero()) || !a.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "occupation",
                    value: a.to_f64_lossy(),
                    requirement: "finite and ≥ 0",
                });
            }
        }
        if !time.is_finite() {
            return Err(Error::InvalidParameter {
                name: "time",
                value: time.to_f64_lossy(),
                requirement: "finite",
            });
        }
        for u in &orbitals {
            if !u.grid().same_layout(&grid) {
                return Err(Error::GridMismatch {
                    detail: "all orbitals must share the state grid".into(),
                });
            }
            if u.frame() != FieldFrame::Position {
                return Err(Error::FrameMismatch {
                    expected: "position",
                    found: u.frame().name(),
                });
            }
        }
        Ok(Self {
            grid,
            occupations,
            orbitals,
            time,
        })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid<S>> {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.occupations.len()
    }

    pub fn occupations(&self) -> &[S] {
        &self.occupations
    }

    pub fn orbitals(&self) -> &[Field<S>] {
        &self.orbitals
    }

    pub fn orbitals_mut(&mut self) -> &mut [Field<S>] {
        &mut self.orbitals
    }

    /// Current frame time (the meaning — `t` or `s` — is the caller's frame).
    pub fn time(&self) -> S {
        self.time
    }

    pub fn set_time(&mut self, time: S) {
        self.time = time;
    }

    /// Shared density `ρ(x) = Σ_j a_j |u_j(x)|²`, nonnegative by
    /// construction.
    pub fn density(&self) -> Vec<S> {
        let mut rho = vec![S::zero(); self.grid.total_points()];
        for (a, u) in self.occupations.iter().zip(&self.orbitals) {
            for (r, z) in rho.iter_mut().zip(u.values()) {
                *r += *a * z.norm_sqr();
            }
        }
        rho
    }

    /// Total mass `∫ρ dx = Σ_j a_j ‖u_j‖²` (trace of `γ`), by quadrature.
    pub fn mass(&self) -> S {
        let w = self.grid.position_weight();
        let mut m = S::zero();
        for (a, u) in self.occupations.iter().zip(&self.orbitals) {
            let s: S = u.values().iter().map(|z| z.norm_sqr()).sum();
            m += *a * w * s;
        }
        m
    }

    /// Gram matrix `G_{jk} = ⟨u_j, u_k⟩`, row-major `R×R`, Hermitian.
    pub fn gram_matrix(&self) -> Vec<Complex<S>> {
        let r = self.rank();
        let mut g = vec![Complex::new(S::zero(), S::zero()); r * r];
        for j in 0..r {
            for k in j..r {
                let v = self.orbitals[j]
                    .inner(&self.orbitals[k])
                    .expect("orbitals share grid and frame by construction");
                g[j * r + k] = v;
                g[k * r + j] = v.conj();
            }
        }
        g
    }

    /// Largest entrywise deviation of the Gram matrix from the identity.
    pub fn gram_drift(&self) -> S {
        let r = self.rank();
        let g = self.gram_matrix();
        let mut worst = S::zero();
        for j in 0..r {
            for k in 0..r {
                let target = if j == k { S::one() } else { S::zero() };
                worst = worst.max((g[j * r + k] - Complex::new(target, S::zero())).norm());
            }
        }
        worst
    }

    /// `(‖γ‖_{𝔖¹}, ‖κ‖_{𝔖²})` for orthonormal orbitals. Errors with
    /// [`Error::GramDegraded`] when the Gram drift exceeds `tau_gram`,
    /// since the closed-form expressions are then invalid.
    pub fn schatten_norms(&self, tau_gram: S) -> Result<(S, S)> {
        let drift = self.gram_drift();
        if drift > tau_gram {
            return Err(Error::GramDegraded {
                drift: drift.to_f64_lossy(),
                tolerance: tau_gram.to_f64_lossy(),
            });
        }
        let trace = self.mass();
        Ok((trace, trace.sqrt()))
    }

    /// Hilbert–Schmidt norm `(Σ_j a_j ‖u_j‖²)^{1/2}` without the Gram
    /// guard (raw quadrature quantity, always well-defined).
    pub fn hilbert_schmidt_norm(&self) -> S {
        self.mass().sqrt()
    }

    /// `‖κ‖_{L^∞_x L²_y} = max_x ρ(x)^{1/2}`, exact on the grid.
    pub fn sup_l2_norm(&self) -> S {
        let mut m = S::zero();
        for v in self.density() {
            m = m.max(v);
        }
        m.sqrt()
    }

    /// Aggregate Sobolev norm `(Σ_j a_j ‖u_j‖_{H^m}²)^{1/2}` with the
    /// inhomogeneous multiplier `⟨k⟩^m`.
    pub fn sobolev_norm(&self, m: S) -> Result<S> {
        let mut sum = S::zero();
        for (a, u) in self.occupations.iter().zip(&self.orbitals) {
            let s = u.norm(NormKind::InhomogeneousSobolev(m))?;
            sum += *a * s * s;
        }
        Ok(sum.sqrt())
    }

    /// `‖⟨J(t)⟩^m κ‖` at the state's own frame time `t`, via the exact
    /// factorization `⟨J(t)⟩^m = U(t)⟨x⟩^m U(-t)`: per orbital, free-flow
    /// back by `t`, multiply by `(1+|x|²)^{m/2}`, free-flow forward, and
    /// take the occupation-weighted L².
    pub fn weighted_j_norm(&self, m: S) -> Result<S> {
        self.j_norm_impl(m, false)
    }

    /// Homogeneous variant `‖|J(t)|^m κ‖_{𝔖²}` with weight `|x|^m`
    /// (`m = 0` degenerates to the plain Hilbert–Schmidt norm, matching
    /// the homogeneous-Sobolev zero-mode convention).
    pub fn homogeneous_j_norm(&self, m: S) -> Result<S> {
        self.j_norm_impl(m, true)
    }

    fn j_norm_impl(&self, m: S, homogeneous: bool) -> Result<S> {
        if m < S::zero() {
            return Err(Error::InvalidParameter {
                name: "m",
                value: m.to_f64_lossy(),
                requirement: "m ≥ 0",
            });
        }
        let t = self.time;
        let half_m = m / S::of(2.0);
        let mut sum = S::zero();
        for (a, u) in self.occupations.iter().zip(&self.orbitals) {
            let mut v = u.clone();
            v.free_propagate(-t)?;
            let grid = self.grid.clone();
            grid.for_each_point(|idx, xsq| {
                let w = if homogeneous {
                    xsq.powf(half_m)
                } else {
                    (S::one() + xsq).powf(half_m)
                };
                v.values_mut()[idx] = v.values_mut()[idx].scale(w);
            });
            // The final U(t) is unitary, so the norm can be taken here.
            let s = v.l2_norm();
            sum += *a * s * s;
        }
        Ok(sum.sqrt())
    }

    /// Apply a unitary `R×R` matrix `Q` (row-major) to the orbital block:
    /// `u_j ← Σ_k Q_{jk} u_k`. `Q` must be unitary to the mixing tolerance
    /// and may couple only orbitals with exactly equal occupations, so the
    /// density and all Schatten data are preserved.
    pub fn gauge_mix(&mut self, q: &[Complex<S>]) -> Result<()> {
        let r = self.rank();
        if q.len() != r * r {
            return Err(Error::InvalidParameter {
                name: "Q",
                value: q.len() as f64,
                requirement: "R×R row-major entries",
            });
        }
        let tol = tolerances::scaled::<S>(tolerances::UNITARY_MIX);
        // Unitarity: max |(Q^H Q - I)_{kl}|.
        let mut deviation = S::zero();
        for k in 0..r {
            for l in 0..r {
                let mut acc = Complex::new(S::zero(), S::zero());
                for j in 0..r {
                    acc += q[j * r + k].conj() * q[j * r + l];
                }
                let target = if k == l { S::one() } else { S::zero() };
                deviation = deviation.max((acc - Complex::new(target, S::zero())).norm());
            }
        }
        if deviation > tol {
            return Err(Error::NonUnitaryMix {
                deviation: deviation.to_f64_lossy(),
            });
        }
        for j in 0..r {
            for k in 0..r {
                if j != k && q[j * r + k].norm() > tol && self.occupations[j] != self.occupations[k]
                {
                    return Err(Error::MixAcrossOccupations {
                        a: j,
                        b: k,
                        occ_a: self.occupations[j].to_f64_lossy(),
                        occ_b: self.occupations[k].to_f64_lossy(),
                    });
                }
            }
        }
        let old: Vec<Field<S>> = self.orbitals.clone();
        for j in 0..r {
            let out = self.orbitals[j].values_mut();
            for v in out.iter_mut() {
                *v = Complex::new(S::zero(), S::zero());
            }
            for k in 0..r {
                let c = q[j * r + k];
                if c.norm() == S::zero() {
                    continue;
                }
                for (o, i) in out.iter_mut().zip(old[k].values()) {
                    *o += c * *i;
                }
            }
        }
        Ok(())
    }

    /// Modified Gram–Schmidt re-orthonormalization in the grid inner
    /// product. Returns the Gram drift found beforehand. Errors if an
    /// orbital collapses (numerically dependent set).
    pub fn re_orthonormalize(&mut self) -> Result<S> {
        let drift = self.gram_drift();
        let r = self.rank();
        for j in 0..r {
            for k in 0..j {
                let proj = self.orbitals[k]
                    .inner(&self.orbitals[j])
                    .expect("shared grid");
                let (head, tail) = self.orbitals.split_at_mut(j);
                let uk = &head[k];
                let uj = &mut tail[0];
                for (a, b) in uj.values_mut().iter_mut().zip(uk.values()) {
                    *a -= proj * *b;
                }
            }
            let norm = self.orbitals[j].l2_norm();
            if !(norm > S::of(1e-12)) {
                return Err(Error::NumericAbort {
                    time: self.time.to_f64_lossy(),
                    detail: format!("orbital {j} collapsed during re-orthonormalization"),
                });
            }
            let inv = S::one() / norm;
            for v in self.orbitals[j].values_mut() {
                *v = v.scale(inv);
            }
        }
        Ok(drift)
    }

    /// Hilbert–Schmidt distance between two states sharing grid, rank and
    /// occupations: `‖κ_A − κ_B‖_{𝔖²} = (Σ_j a_j ‖u_j^A − u_j^B‖²)^{1/2}`.
    /// Exact for the common frozen second factor of the factorization.
    pub fn hs_distance(&self, other: &OrbitalState<S>) -> Result<S> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::GridMismatch {
                detail: "state comparison requires identical grids".into(),
            });
        }
        if self.rank() != other.rank() || self.occupations != other.occupations {
            return Err(Error::GridMismatch {
                detail: "state comparison requires identical rank and occupations".into(),
            });
        }
        let w = self.grid.position_weight();
        let mut sum = S::zero();
        for ((a, ua), ub) in self
            .occupations
            .iter()
            .zip(&self.orbitals)
            .zip(&other.orbitals)
        {
            let d: S = ua
                .values()
                .iter()
                .zip(ub.values())
                .map(|(x, y)| (*x - *y).norm_sqr())
                .sum();
            sum += *a * w * d;
        }
        Ok(sum.sqrt())
    }
}

/// Per-sample scalar observables recorded along a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables<S> {
    /// Frame time of the sample (`t` or `s` depending on the run frame).
    pub time: S,
    pub rho_l1: S,
    pub rho_l2: S,
    pub rho_linf: S,
    /// `‖κ‖_{𝔖²}` (equivalently `‖ν‖_{L²_xL²_y}` in the compact frame).
    pub kappa_l2l2: S,
    /// `‖κ‖_{L^∞_x L²_y} = ‖ρ‖_∞^{1/2}`.
    pub kappa_linfl2: S,
    /// Aggregate inhomogeneous Sobolev norm at the diagnostic exponent.
    pub sobolev_m: S,
    /// `‖⟨J(t)⟩^m κ‖` (position-frame weighted norm through the free flow).
    pub weighted_j_m: S,
    pub gram_drift: S,
    pub edge_mass: S,
    /// Running bootstrap combination (see the diagnostics module).
    pub bootstrap_x: S,
}

impl<S: Scalar> Observables<S> {
    /// All entries must be finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("rho_l1", self.rho_l1),
            ("rho_l2", self.rho_l2),
            ("rho_linf", self.rho_linf),
            ("kappa_l2l2", self.kappa_l2l2),
            ("kappa_linfl2", self.kappa_linfl2),
            ("sobolev_m", self.sobolev_m),
            ("weighted_j_m", self.weighted_j_m),
            ("gram_drift", self.gram_drift),
            ("edge_mass", self.edge_mass),
            ("bootstrap_x", self.bootstrap_x),
        ];
        for (name, v) in entries {
            if !v.is_finite() || v < S::zero() {
                return Err(Error::NumericAbort {
                    time: self.time.to_f64_lossy(),
                    detail: format!("observable {name} is not a finite nonnegative value: {v}"),
                });
            }
        }
        if !self.time.is_finite() {
            return Err(Error::NumericAbort {
                time: self.time.to_f64_lossy(),
                detail: "sample time is not finite".into(),
            });
        }
        Ok(())
    }
}

/// Reproducible random initial data: Gaussian envelopes with plane-wave
/// and affine modulations, orthonormalized, occupations `2^{-j}`, then
/// globally rescaled so the smallness functional
/// `‖⟨J(t₀)⟩^m κ‖ + ‖κ‖_{L^∞_xL²_y}` equals `epsilon0` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataSpec<S> {
    pub rank: usize,
    pub seed: u64,
    /// Target value of the smallness functional.
    pub epsilon0: S,
    /// Sobolev/weight exponent `m` used in the functional.
    pub sobolev_m: S,
    /// Base Gaussian width; per-orbital widths jitter around it.
    pub width: S,
    /// Scale of the random momentum kicks (physical wavenumber units).
    pub momentum_scale: S,
    /// Half-width of the uniform box from which centers are drawn.
    pub center_spread: S,
    /// Frame time at which the data is posed (and the functional evaluated).
    pub time: S,
}

/// Draw, orthonormalize, and scale an initial state on `grid`.
pub fn generate_initial_data<S: Scalar>(
    grid: &Arc<SpectralGrid<S>>,
    spec: &InitialDataSpec<S>,
) -> Result<OrbitalState<S>> {
    if spec.rank == 0 || spec.rank > 64 {
        return Err(Error::InvalidParameter {
            name: "rank",
            value: spec.rank as f64,
            requirement: "1 ≤ rank ≤ 64",
        });
    }
    if !(spec.epsilon0 > S::zero()) {
        return Err(Error::InvalidParameter {
            name: "epsilon0",
            value: spec.epsilon0.to_f64_lossy(),
            requirement: "> 0",
        });
    }
    if !(spec.width > S::zero()) {
        return Err(Error::InvalidParameter {
            name: "width",
            value: spec.width.to_f64_lossy(),
            requirement: "> 0",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = grid.dim();
    let mut orbitals = Vec::with_capacity(spec.rank);
    for _ in 0..spec.rank {
        // Draw all parameters in f64 and cast, so f32/f64 runs with one
        // seed sample identical shapes.
        let mut center = [0.0f64; 3];
        let mut kick = [0.0f64; 3];
        let mut slope = [0.0f64; 3];
        for a in 0..dim {
            center[a] = rng.gen_range(-1.0..1.0) * spec.center_spread.to_f64_lossy();
            kick[a] = rng.gen_range(-1.0..1.0) * spec.momentum_scale.to_f64_lossy();
            slope[a] = rng.gen_range(-0.3..0.3);
        }
        let width = spec.width.to_f64_lossy() * rng.gen_range(0.85..1.2);
        let phase0 = rng.gen_range(0.0..std::f64::consts::TAU);

        let g = grid.clone();
        let field = Field::from_fn(grid.clone(), FieldFrame::Position, |idx| {
            let ix = g.decode(idx);
            let mut q = 0.0f64; // |x-x₀|²/2σ²
            let mut kx = phase0;
            let mut affine = 1.0f64;
            for a in 0..dim {
                let x = g.coords()[ix[a]].to_f64_lossy();
                let dxa = x - center[a];
                q += dxa * dxa / (2.0 * width * width);
                kx += kick[a] * x;
                affine += slope[a] * dxa / width;
            }
            let env = (-q).exp() * affine;
            Complex::new(S::of(env), S::zero()) * cis(S::of(kx))
        });
        orbitals.push(field);
    }

    let occupations: Vec<S> = (0..spec.rank)
        .map(|j| S::of(0.5f64.powi(j as i32)))
        .collect();
    let mut state = OrbitalState::new(grid.clone(), occupations, orbitals, spec.time)?;
    state.re_orthonormalize()?;

    // The functional is 1-homogeneous in √(occupation scale): multiply all
    // a_j by (ε₀/Z)² to land on ε₀ exactly.
    let z = state.weighted_j_norm(spec.sobolev_m)? + state.sup_l2_norm();
    if !(z > S::zero()) || !z.is_finite() {
        return Err(Error::NumericAbort {
            time: spec.time.to_f64_lossy(),
            detail: format!("initial-data smallness functional is degenerate: {z}"),
        });
    }
    let ratio = spec.epsilon0 / z;
    let factor = ratio * ratio;
    for a in &mut state.occupations {
        *a *= factor;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn gaussian_field(grid: &Arc<SpectralGrid<f64>>, sigma: f64) -> Field<f64> {
        let g = grid.clone();
        Field::from_fn(grid.clone(), FieldFrame::Position, move |idx| {
            let ix = g.decode(idx);
            let mut q = 0.0;
            for a in 0..g.dim() {
                let x = g.coords()[ix[a]];
                q += x * x;
            }
            Complex64::new((-q / (2.0 * sigma * sigma)).exp(), 0.0)
        })
    }

    fn normalized(grid: &Arc<SpectralGrid<f64>>, mut f: Field<f64>) -> Field<f64> {
        let _ = grid;
        let n = f.l2_norm();
        for v in f.values_mut() {
            *v /= n;
        }
        f
    }

    #[test]
    fn density_single_orbital_is_modulus_squared() {
        let grid = SpectralGrid::<f64>::new(2, 16, 10.0).unwrap();
        let u = normalized(&grid, gaussian_field(&grid, 1.3));
        let st = OrbitalState::new(grid.clone(), vec![1.0], vec![u.clone()], 1.0).unwrap();
        let rho = st.density();
        for (r, z) in rho.iter().zip(u.values()) {
            assert!((r - z.norm_sqr()).abs() < 1e-15);
        }
        assert!((st.mass() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn density_linear_in_occupations() {
        let grid = SpectralGrid::<f64>::new(1, 32, 12.0).unwrap();
        let u = normalized(&grid, gaussian_field(&grid, 1.0));
        let st = OrbitalState::new(
            grid.clone(),
            vec![0.5, 0.5],
            vec![u.clone(), u.clone()],
            1.0,
        )
        .unwrap();
        for (r, z) in st.density().iter().zip(u.values()) {
            assert!((r - z.norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn schatten_formulas_and_gram_guard() {
        let grid = SpectralGrid::<f64>::new(1, 64, 20.0).unwrap();
        let spec = InitialDataSpec {
            rank: 2,
            seed: 11,
            epsilon0: 1.0,
            sobolev_m: 1.0,
            width: 1.5,
            momentum_scale: 0.7,
            center_spread: 1.0,
            time: 1.0,
        };
        let mut st = generate_initial_data(&grid, &spec).unwrap();
        assert!(st.gram_drift() < 1e-12);
        // Force the closed-form normalization for the formula check.
        st.occupations = vec![1.0, 0.5];
        let (tr, hs) = st.schatten_norms(1e-8).unwrap();
        assert!((tr - 1.5).abs() < 1e-12);
        assert!((hs - 1.5f64.sqrt()).abs() < 1e-12);

        // Degenerate pair: drift ~ 1 ⇒ guard trips.
        let u = normalized(&grid, gaussian_field(&grid, 1.0));
        let bad =
            OrbitalState::new(grid.clone(), vec![1.0, 0.5], vec![u.clone(), u], 1.0).unwrap();
        assert!(matches!(
            bad.schatten_norms(1e-8),
            Err(Error::GramDegraded { .. })
        ));
    }

    #[test]
    fn sup_l2_equals_sqrt_max_density() {
        let grid = SpectralGrid::<f64>::new(2, 16, 8.0).unwrap();
        let spec = InitialDataSpec {
            rank: 3,
            seed: 4,
            epsilon0: 0.3,
            sobolev_m: 1.5,
            width: 1.0,
            momentum_scale: 1.0,
            center_spread: 1.0,
            time: 1.0,
        };
        let st = generate_initial_data(&grid, &spec).unwrap();
        let rho = st.density();
        let max = rho.iter().fold(0.0f64, |m, &v| m.max(v));
        assert_eq!(st.sup_l2_norm(), max.sqrt());
    }

    #[test]
    fn weighted_j_norm_limits() {
        let grid = SpectralGrid::<f64>::new(1, 128, 30.0).unwrap();
        let u = normalized(&grid, gaussian_field(&grid, 1.0));

        // m = 0 reduces to the Hilbert–Schmidt norm.
        let st = OrbitalState::new(grid.clone(), vec![0.7], vec![u.clone()], 2.3).unwrap();
        let j0 = st.weighted_j_norm(0.0).unwrap();
        assert!((j0 - st.hilbert_schmidt_norm()).abs() < 1e-12);

        // t → 0: ⟨J(t)⟩ → ⟨x⟩.
        let st0 = OrbitalState::new(grid.clone(), vec![1.0], vec![u.clone()], 1e-9).unwrap();
        let j1 = st0.weighted_j_norm(1.0).unwrap();
        let w = grid.position_weight();
        let direct: f64 = grid
            .coords()
            .iter()
            .zip(u.values())
            .map(|(&x, z)| (1.0 + x * x) * z.norm_sqr() * w)
            .sum::<f64>()
            .sqrt();
        assert!((j1 - direct).abs() < 1e-8, "{j1} vs {direct}");

        // m = 2, t = 1: matches the direct quadrature of ‖⟨x⟩² U(-1)u‖
        // (the final unitary factor cannot change the norm).
        let st1 = OrbitalState::new(grid.clone(), vec![1.0], vec![u.clone()], 1.0).unwrap();
        let j2 = st1.weighted_j_norm(2.0).unwrap();
        let mut back = u.clone();
        back.free_propagate(-1.0).unwrap();
        let direct2: f64 = grid
            .coords()
            .iter()
            .zip(back.values())
            .map(|(&x, z)| (1.0 + x * x).powi(2) * z.norm_sqr() * w)
            .sum::<f64>()
            .sqrt();
        assert!((j2 - direct2).abs() < 1e-10 * direct2, "{j2} vs {direct2}");
    }

    #[test]
    fn gauge_mix_preserves_density() {
        let grid = SpectralGrid::<f64>::new(2, 16, 9.0).unwrap();
        let spec = InitialDataSpec {
            rank: 2,
            seed: 21,
            epsilon0: 0.5,
            sobolev_m: 1.5,
            width: 1.2,
            momentum_scale: 0.6,
            center_spread: 0.8,
            time: 1.0,
        };
        let mut st = generate_initial_data(&grid, &spec).unwrap();
        // Equalize occupations so mixing is legal.
        let a = st.occupations[0];
        st.occupations = vec![a, a];
        let rho_before = st.density();

        let th = 30f64.to_radians();
        let (c, s) = (th.cos(), th.sin());
        let q = vec![
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ];
        st.gauge_mix(&q).unwrap();
        for (x, y) in st.density().iter().zip(&rho_before) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
        assert!(st.gram_drift() < 1e-12);

        // Identity leaves the state untouched.
        let mut st2 = st.clone();
        let id = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ];
        st2.gauge_mix(&id).unwrap();
        assert_eq!(st2.orbitals[0].values(), st.orbitals[0].values());
    }

    #[test]
    fn gauge_mix_rejections() {
        let grid = SpectralGrid::<f64>::new(1, 32, 8.0).unwrap();
        let spec = InitialDataSpec {
            rank: 2,
            seed: 5,
            epsilon0: 0.4,
            sobolev_m: 1.0,
            width: 1.0,
            momentum_scale: 0.5,
            center_spread: 0.5,
            time: 1.0,
        };
        let mut st = generate_initial_data(&grid, &spec).unwrap();

        let not_unitary = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ];
        assert!(matches!(
            st.gauge_mix(&not_unitary),
            Err(Error::NonUnitaryMix { .. })
        ));

        // Occupations 2^{-j} are distinct ⇒ off-diagonal mixing is illegal.
        let th = 0.3f64;
        let rot = vec![
            Complex64::new(th.cos(), 0.0),
            Complex64::new(-th.sin(), 0.0),
            Complex64::new(th.sin(), 0.0),
            Complex64::new(th.cos(), 0.0),
        ];
        assert!(matches!(
            st.gauge_mix(&rot),
            Err(Error::MixAcrossOccupations { .. })
        ));
    }

    #[test]
    fn generator_hits_smallness_target_and_is_deterministic() {
        let grid = SpectralGrid::<f64>::new(2, 32, 16.0).unwrap();
        let spec = InitialDataSpec {
            rank: 3,
            seed: 7,
            epsilon0: 0.1,
            sobolev_m: 1.5,
            width: 1.4,
            momentum_scale: 0.8,
            center_spread: 1.0,
            time: 1.0,
        };
        let st = generate_initial_data(&grid, &spec).unwrap();
        let z = st.weighted_j_norm(1.5).unwrap() + st.sup_l2_norm();
        assert!((z - 0.1).abs() < 1e-12, "functional {z}");
        assert!(st.gram_drift() < 1e-12);
        // Occupation laddering survives the global rescale.
        assert!((st.occupations()[0] / st.occupations()[1] - 2.0).abs() < 1e-12);

        let st2 = generate_initial_data(&grid, &spec).unwrap();
        for (a, b) in st.orbitals()[0].values().iter().zip(st2.orbitals()[0].values()) {
            assert_eq!(a, b);
        }
        assert_eq!(st.occupations(), st2.occupations());
    }

    #[test]
    fn hs_distance_requires_matching_shape() {
        let grid = SpectralGrid::<f64>::new(1, 32, 8.0).unwrap();
        let u = normalized(&grid, gaussian_field(&grid, 1.0));
        let a = OrbitalState::new(grid.clone(), vec![1.0], vec![u.clone()], 1.0).unwrap();
        let mut shifted = u.clone();
        for v in shifted.values_mut() {
            *v *= Complex64::new(0.0, 1.0);
        }
        let b = OrbitalState::new(grid.clone(), vec![1.0], vec![shifted], 1.0).unwrap();
        // ‖u - iu‖ = √2·‖u‖ = √2.
        let d = a.hs_distance(&b).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);

        let c = OrbitalState::new(grid.clone(), vec![0.5], vec![u.clone()], 1.0).unwrap();
        assert!(a.hs_distance(&c).is_err());
    }

    #[test]
    fn observables_validation() {
        let good = Observables {
            time: 1.0,
            rho_l1: 0.1,
            rho_l2: 0.1,
            rho_linf: 0.1,
            kappa_l2l2: 0.1,
            kappa_linfl2: 0.1,
            sobolev_m: 0.1,
            weighted_j_m: 0.1,
            gram_drift: 0.0,
            edge_mass: 0.0,
            bootstrap_x: 0.2,
        };
        assert!(good.validate().is_ok());
        let mut bad = good;
        bad.rho_l2 = f64::NAN;
        assert!(bad.validate().is_err());
        let mut neg = good;
        neg.sobolev_m = -1.0;
        assert!(neg.validate().is_err());
    }
}
