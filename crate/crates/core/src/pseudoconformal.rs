//! The exact discrete lens-transform chain between the physical frame
//! (`κ`, time `t`) and the compactified frame (`ν`, time `s = 1/t`).
//!
//! The chain and its factorized discrete realization:
//!
//! ```text
//!   ω(t) = F_unit · M(t) · U(-t) κ(t),   M(t) = e^{i|x|²/(2t)},
//!   ν(s) = conj(ω(1/s)),
//! ```
//!
//! applied orbital-wise (which transforms both kernel arguments of
//! `κ = Σ_j √a_j u_j(x) ū_j(y)` at once). The dilation form
//! `ω(t,ξ) = (it)^{d/2} e^{-it|ξ|²/2} κ(t, tξ)` is never discretized —
//! resampling would break exactness — but every factor of the
//! factorization is an exact grid operation:
//!
//! * `U(-t)` is the free-flow multiplier,
//! * `M(t)` is a pointwise phase,
//! * `F_unit = (dx/√(2π))^d ×` the grid's forward transform, whose output
//!   lands on the reciprocal grid's position lattice *index-aligned*
//!   (both storage orders are centered), so no shuffling occurs and the
//!   map is exactly unitary from `L²(grid)` to `L²(reciprocal grid)`.
//!
//! Consequences verified in the tests: every map preserves the
//! Hilbert–Schmidt norm to roundoff; `‖|∇|^m ω‖ = ‖|J(t)|^m κ‖` (the
//! frequency lattice of the ν grid *is* the position lattice of the κ
//! grid); `‖ω‖_{L^∞L²} = t^{d/2}‖κ‖_{L^∞L²}`; free flows in the two
//! frames are conjugate; and on a self-reciprocal box (`L² = 2πn`) the
//! `t = 1` chain reduces pointwise to
//! `ν₁ = (-i)^{d/2} e^{+i|x|²/2} conj(κ₁)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Direction, Field, FieldFrame, SpectralGrid};
use crate::scalar::Scalar;
use crate::state::OrbitalState;

/// Which frame a state's orbitals and time label live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateFrame {
    /// Physical frame, time `t`.
    Kappa,
    /// Lens image before time inversion, time `t`.
    Omega,
    /// Compactified frame, time `s = 1/t`.
    Nu,
}

impl StateFrame {
    pub fn name(self) -> &'static str {
        match self {
            StateFrame::Kappa => "kappa",
            StateFrame::Omega => "omega",
            StateFrame::Nu => "nu",
        }
    }
}

/// A state with explicit frame bookkeeping. Both lattice descriptions are
/// cached so that chained maps land on the *same* grid objects and
/// round trips are exact by construction.
#[derive(Debug, Clone)]
pub struct FramedState<S: Scalar> {
    state: OrbitalState<S>,
    frame: StateFrame,
    kappa_grid: Arc<SpectralGrid<S>>,
    nu_grid: Arc<SpectralGrid<S>>,
}

impl<S: Scalar> FramedState<S> {
    /// Wrap a physical-frame state (time label is `t`).
    pub fn from_kappa(state: OrbitalState<S>) -> Result<Self> {
        let kappa_grid = state.grid().clone();
        let nu_grid = kappa_grid.reciprocal()?;
        Ok(Self {
            state,
            frame: StateFrame::Kappa,
            kappa_grid,
            nu_grid,
        })
    }

    /// Wrap a compact-frame state (time label is `s`); its grid is the ν
    /// lattice and the κ lattice is derived from it.
    pub fn from_nu(state: OrbitalState<S>) -> Result<Self> {
        let nu_grid = state.grid().clone();
        let kappa_grid = nu_grid.reciprocal()?;
        Ok(Self {
            state,
            frame: StateFrame::Nu,
            kappa_grid,
            nu_grid,
        })
    }

    pub fn frame(&self) -> StateFrame {
        self.frame
    }

    pub fn state(&self) -> &OrbitalState<S> {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut OrbitalState<S> {
        &mut self.state
    }

    pub fn into_state(self) -> OrbitalState<S> {
        self.state
    }

    pub fn kappa_grid(&self) -> &Arc<SpectralGrid<S>> {
        &self.kappa_grid
    }

    pub fn nu_grid(&self) -> &Arc<SpectralGrid<S>> {
        &self.nu_grid
    }

    fn expect(&self, frame: StateFrame) -> Result<()> {
        if self.frame != frame {
            return Err(Error::FrameMismatch {
                expected: frame.name(),
                found: self.frame.name(),
            });
        }
        Ok(())
    }
}

fn positive_time<S: Scalar>(t: S, name: &'static str) -> Result<()> {
    if !(t > S::zero()) || !t.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value: t.to_f64_lossy(),
            requirement: "finite and > 0",
        });
    }
    Ok(())
}

/// One orbital through `F_unit·M(t)·U(-t)`, producing a position-frame
/// field on the ν lattice.
fn lens_forward_orbital<S: Scalar>(
    u: &Field<S>,
    t: S,
    kappa_grid: &Arc<SpectralGrid<S>>,
    nu_grid: &Arc<SpectralGrid<S>>,
) -> Result<Field<S>> {
    let mut v = u.clone();
    v.free_propagate(-t)?;
    let half_inv_t = S::one() / (S::of(2.0) * t);
    let mut theta = vec![S::zero(); kappa_grid.total_points()];
    kappa_grid.for_each_point(|idx, xsq| {
        theta[idx] = xsq * half_inv_t;
    });
    v.phase_multiply(&theta);
    v.transform(Direction::Forward)?;
    let scale = (kappa_grid.dx() / (S::of(2.0) * S::PI()).sqrt())
        .powf(S::of(kappa_grid.dim() as f64));
    let mut values = v.into_values();
    for z in &mut values {
        *z = z.scale(scale);
    }
    Field::from_values(nu_grid.clone(), FieldFrame::Position, values)
}

/// Inverse of [`lens_forward_orbital`]: `U(t)·M(-t)·F_unit⁻¹`.
fn lens_inverse_orbital<S: Scalar>(
    w: &Field<S>,
    t: S,
    kappa_grid: &Arc<SpectralGrid<S>>,
) -> Result<Field<S>> {
    let scale = ((S::of(2.0) * S::PI()).sqrt() / kappa_grid.dx())
        .powf(S::of(kappa_grid.dim() as f64));
    let mut values = w.values().to_vec();
    for z in &mut values {
        *z = z.scale(scale);
    }
    let mut v = Field::from_values(kappa_grid.clone(), FieldFrame::Frequency, values)?;
    v.transform(Direction::Inverse)?;
    let half_inv_t = S::one() / (S::of(2.0) * t);
    let mut theta = vec![S::zero(); kappa_grid.total_points()];
    kappa_grid.for_each_point(|idx, xsq| {
        theta[idx] = -xsq * half_inv_t;
    });
    v.phase_multiply(&theta);
    v.free_propagate(t)?;
    Ok(v)
}

/// `κ(t) → ω(t)`: lens every orbital; the time label is unchanged.
pub fn kappa_to_omega<S: Scalar>(fs: &FramedState<S>) -> Result<FramedState<S>> {
    fs.expect(StateFrame::Kappa)?;
    let t = fs.state.time();
    positive_time(t, "kappa time")?;
    let orbitals = fs
        .state
        .orbitals()
        .iter()
        .map(|u| lens_forward_orbital(u, t, &fs.kappa_grid, &fs.nu_grid))
        .collect::<Result<Vec<_>>>()?;
    let state = OrbitalState::new(
        fs.nu_grid.clone(),
        fs.state.occupations().to_vec(),
        orbitals,
        t,
    )?;
    Ok(FramedState {
        state,
        frame: StateFrame::Omega,
        kappa_grid: fs.kappa_grid.clone(),
        nu_grid: fs.nu_grid.clone(),
    })
}

/// `ω(t) → ν(s)`: conjugate orbitals and relabel time `s = 1/t`. Exactly
/// preserves the density (conjugation leaves moduli bit-identical).
pub fn omega_to_nu<S: Scalar>(fs: &FramedState<S>) -> Result<FramedState<S>> {
    fs.expect(StateFrame::Omega)?;
    let t = fs.state.time();
    positive_time(t, "omega time")?;
    let mut out = fs.clone();
    for u in out.state.orbitals_mut() {
        for z in u.values_mut() {
            *z = z.conj();
        }
    }
    out.state.set_time(S::one() / t);
    out.frame = StateFrame::Nu;
    Ok(out)
}

/// `ν(s) → ω(t = 1/s)`: the involution partner of [`omega_to_nu`].
pub fn nu_to_omega<S: Scalar>(fs: &FramedState<S>) -> Result<FramedState<S>> {
    fs.expect(StateFrame::Nu)?;
    let s = fs.state.time();
    positive_time(s, "nu time")?;
    let mut out = fs.clone();
    for u in out.state.orbitals_mut() {
        for z in u.values_mut() {
            *z = z.conj();
        }
    }
    out.state.set_time(S::one() / s);
    out.frame = StateFrame::Omega;
    Ok(out)
}

/// `ω(t) → κ(t)`: inverse lens on every orbital.
pub fn omega_to_kappa<S: Scalar>(fs: &FramedState<S>) -> Result<FramedState<S>> {
    fs.expect(StateFrame::Omega)?;
    let t = fs.state.time();
    positive_time(t, "omega time")?;
    let orbitals = fs
        .state
        .orbitals()
        .iter()
        .map(|u| lens_inverse_orbital(u, t, &fs.kappa_grid))
        .collect::<Result<Vec<_>>>()?;
    let state = OrbitalState::new(
        fs.kappa_grid.clone(),
        fs.state.occupations().to_vec(),
        orbitals,
        t,
    )?;
    Ok(FramedState {
        state,
        frame: StateFrame::Kappa,
        kappa_grid: fs.kappa_grid.clone(),
        nu_grid: fs.nu_grid.clone(),
    })
}

/// Full chain `κ(t) → ν(s = 1/t)`.
pub fn kappa_to_nu<S: Scalar>(fs: &FramedState<S>) -> Result<FramedState<S>> {
    omega_to_nu(&kappa_to_omega(fs)?)
}

/// Full inverse chain `ν(s) → κ(t = 1/s)`.
pub fn nu_to_kappa<S: Scalar>(fs: &FramedState<S>) -> Result<FramedState<S>> {
    omega_to_kappa(&nu_to_omega(fs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::NormKind;
    use crate::oracle::{free_gaussian_exact, GaussianSpec};
    use crate::state::{generate_initial_data, InitialDataSpec};
    use num_complex::Complex;

    type C64 = Complex<f64>;

    fn generated(grid: &Arc<SpectralGrid<f64>>, time: f64, rank: usize) -> OrbitalState<f64> {
        let ispec = InitialDataSpec {
            rank,
            seed: 314,
            epsilon0: 0.6,
            sobolev_m: 1.0,
            width: 1.3,
            momentum_scale: 0.4,
            center_spread: 0.6,
            time,
        };
        generate_initial_data(grid, &ispec).unwrap()
    }

    #[test]
    fn chain_is_unitary_and_round_trips() {
        let grid = SpectralGrid::<f64>::new(2, 32, 18.0).unwrap();
        let st = generated(&grid, 1.7, 3);
        let fs = FramedState::from_kappa(st.clone()).unwrap();

        let omega = kappa_to_omega(&fs).unwrap();
        assert_eq!(omega.frame(), StateFrame::Omega);
        // Unitarity orbital by orbital and in aggregate.
        for (a, b) in st.orbitals().iter().zip(omega.state().orbitals()) {
            assert!((a.l2_norm() - b.l2_norm()).abs() < 1e-12);
        }
        assert!((st.mass() - omega.state().mass()).abs() < 1e-12);

        let nu = omega_to_nu(&omega).unwrap();
        assert_eq!(nu.frame(), StateFrame::Nu);
        assert!((nu.state().time() - 1.0 / 1.7).abs() < 1e-15);
        // Conjugation leaves the density bit-identical.
        assert_eq!(omega.state().density(), nu.state().density());

        // Involution: ν → ω → ν is the identity.
        let omega_back = nu_to_omega(&nu).unwrap();
        for (a, b) in omega.state().orbitals().iter().zip(omega_back.state().orbitals()) {
            assert_eq!(a.values(), b.values());
        }

        // Full round trip back to κ.
        let back = nu_to_kappa(&nu).unwrap();
        assert_eq!(back.frame(), StateFrame::Kappa);
        assert!((back.state().time() - 1.7).abs() < 1e-15);
        let dist = back.state().hs_distance(&st).unwrap();
        assert!(dist < 1e-12, "round trip distance {dist:e}");
    }

    #[test]
    fn frame_tags_are_enforced() {
        let grid = SpectralGrid::<f64>::new(1, 16, 12.0).unwrap();
        let st = generated(&grid, 1.0, 1);
        let fs = FramedState::from_kappa(st).unwrap();
        let nu = kappa_to_nu(&fs).unwrap();
        assert!(matches!(
            kappa_to_omega(&nu),
            Err(Error::FrameMismatch { .. })
        ));
        assert!(matches!(omega_to_nu(&fs), Err(Error::FrameMismatch { .. })));
        // Positive-time precondition.
        let mut bad = fs.clone();
        bad.state_mut().set_time(0.0);
        assert!(kappa_to_omega(&bad).is_err());
    }

    #[test]
    fn sobolev_of_omega_equals_weighted_j_of_kappa() {
        // ‖|∇|^m ω(t)‖ = ‖|J(t)|^m κ(t)‖: the ν lattice's frequency grid
        // is the κ position lattice, so the identity is exact on the grid
        // (tolerance far below the 1e-8 contract).
        let grid = SpectralGrid::<f64>::new(2, 32, 18.0).unwrap();
        for t in [1.0, 4.0] {
            let st = generated(&grid, t, 2);
            let fs = FramedState::from_kappa(st.clone()).unwrap();
            let omega = kappa_to_omega(&fs).unwrap();
            for m in [0.0, 1.0, 1.6] {
                let mut lhs_sq = 0.0;
                for (a, u) in omega
                    .state()
                    .occupations()
                    .iter()
                    .zip(omega.state().orbitals())
                {
                    let s = u.norm(NormKind::HomogeneousSobolev(m)).unwrap();
                    lhs_sq += a * s * s;
                }
                let lhs = lhs_sq.sqrt();
                let rhs = st.homogeneous_j_norm(m).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-8 * rhs.max(1.0),
                    "m={m}, t={t}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn sup_norm_picks_up_t_to_the_d_half() {
        // ‖ω‖_{L^∞L²} = t^{d/2}‖κ‖_{L^∞L²}. Exact at the lattice origin
        // for a centered packet (both suprema are attained there), so the
        // discrete ratio hits t^{d/2} to spectral accuracy. The box must
        // contain the U(-t)-spread packet (width √(σ²+t²/σ²) ≈ 3.1) with
        // ~6σ margin, or the truncation tail pollutes the ratio.
        let grid = SpectralGrid::<f64>::new(2, 128, 40.0).unwrap();
        let t = 4.0;
        let mut u = free_gaussian_exact(&GaussianSpec::centered(1.5), 0.0, &grid).unwrap();
        let norm = u.l2_norm();
        for z in u.values_mut() {
            *z /= norm;
        }
        let st = OrbitalState::new(grid.clone(), vec![0.8], vec![u], t).unwrap();
        let fs = FramedState::from_kappa(st.clone()).unwrap();
        let omega = kappa_to_omega(&fs).unwrap();
        let ratio = omega.state().sup_l2_norm() / st.sup_l2_norm();
        assert!(
            (ratio - t).abs() < 1e-6,
            "d=2, t=4: ratio {ratio} should be t^{{d/2}} = 4"
        );
    }

    #[test]
    fn time_one_chain_reduces_to_initial_data_formula() {
        // On a self-reciprocal box (L² = 2πn) the ξ lattice coincides
        // with the x lattice and the t = 1 chain must reproduce
        // ν₁ = (-i)^{d/2}·e^{+i|x|²/2}·conj(κ₁) pointwise.
        let n = 64usize;
        let dim = 2usize;
        let l = (2.0 * std::f64::consts::PI * n as f64).sqrt();
        let grid = SpectralGrid::<f64>::new(dim, n, l).unwrap();
        let mut u = free_gaussian_exact(&GaussianSpec::centered(1.0), 0.0, &grid).unwrap();
        let norm = u.l2_norm();
        for z in u.values_mut() {
            *z /= norm;
        }
        let kappa1 = u.values().to_vec();
        let st = OrbitalState::new(grid.clone(), vec![1.0], vec![u], 1.0).unwrap();
        let fs = FramedState::from_kappa(st).unwrap();
        let nu = kappa_to_nu(&fs).unwrap();
        assert!((nu.state().time() - 1.0).abs() < 1e-15);

        let minus_i_pow = C64::new(0.0, -1.0).powf(dim as f64 / 2.0);
        let mut worst = 0.0f64;
        grid.for_each_point(|idx, xsq| {
            let expect = minus_i_pow * C64::new(0.0, xsq / 2.0).exp() * kappa1[idx].conj();
            worst = worst.max((nu.state().orbitals()[0].values()[idx] - expect).norm());
        });
        assert!(worst < 1e-12, "pointwise deviation {worst:e}");
    }

    #[test]
    fn free_flows_are_conjugate_under_the_lens() {
        // Free κ evolution t: 1 → 2 equals lens → free ν evolution
        // s: 1 → 1/2 → inverse lens.
        let grid = SpectralGrid::<f64>::new(2, 64, 22.0).unwrap();
        let mut u = free_gaussian_exact(
            &GaussianSpec {
                center: [0.4, -0.2, 0.0],
                width: 1.3,
                momentum: [0.3, 0.1, 0.0],
                amplitude: 1.0,
            },
            0.0,
            &grid,
        )
        .unwrap();
        let norm = u.l2_norm();
        for z in u.values_mut() {
            *z /= norm;
        }
        let st = OrbitalState::new(grid.clone(), vec![0.7], vec![u], 1.0).unwrap();

        // Path A: physical free flow.
        let mut direct = st.clone();
        direct.orbitals_mut()[0].free_propagate(1.0).unwrap();
        direct.set_time(2.0);

        // Path B: through the compact frame.
        let mut nu = kappa_to_nu(&FramedState::from_kappa(st).unwrap()).unwrap();
        nu.state_mut().orbitals_mut()[0].free_propagate(-0.5).unwrap();
        nu.state_mut().set_time(0.5);
        let back = nu_to_kappa(&nu).unwrap();
        assert!((back.state().time() - 2.0).abs() < 1e-15);

        let dist = back.state().hs_distance(&direct).unwrap();
        let scale = direct.hilbert_schmidt_norm();
        assert!(dist < 1e-10 * scale, "conjugacy gap {dist:e}");
    }
}
