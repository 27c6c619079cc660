//! Periodic-box discretization and discrete Fourier transform contract.
//!
//! The box is the centered cube `[-L/2, L/2)^d` sampled at `n` points per
//! axis, `x_j = (j - n/2)·dx` with `dx = L/n`. The transform convention is
//! the continuum pair
//!
//! ```text
//!   (F f)(k)    = ∫ e^{-ik·x} f(x) dx,
//!   (F⁻¹ g)(x)  = (2π)^{-d} ∫ e^{+ik·x} g(k) dk,
//! ```
//!
//! realized discretely with **no prefactor on the forward transform** and
//! `n^{-d}` on the inverse. Both position and frequency samples are stored
//! in *centered* order (coordinates and wavenumbers strictly ascending,
//! `k_m = (m - n/2)·2π/L`), which makes every multiplier table a plain
//! ascending array and lets a frequency-frame field be reinterpreted
//! directly as a position-frame field on the reciprocal box.
//!
//! With centered storage the transform along one axis is
//! `F_c = σ ∘ FFT ∘ σ` where `σ` flips the sign of odd-index entries; the
//! sign bookkeeping contributes a global factor `(-1)^{n/2}` per axis which
//! is `+1` for every supported `n` (powers of two ≥ 8).
//!
//! Quadrature weights making Parseval exact to roundoff:
//! `‖f‖₂² = dx^d · Σ|f_j|²` in position and `‖f‖₂² = (dx^d/n^d) · Σ|f̂_m|²`
//! in frequency.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{cis, Scalar};

/// Which representation a [`Field`]'s samples currently live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFrame {
    /// Samples at the grid points `x_j`.
    Position,
    /// Transform coefficients at the wavenumbers `k_m`, centered order.
    Frequency,
}

impl FieldFrame {
    pub fn name(self) -> &'static str {
        match self {
            FieldFrame::Position => "position",
            FieldFrame::Frequency => "frequency",
        }
    }
}

/// Transform direction for [`Field::transform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Norm selector for [`Field::norm`].
///
/// * `Lp(p)` — `(∫|f|^p dx)^{1/p}` with `p = ∞` meaning the grid maximum.
/// * `HomogeneousSobolev(m)` — `‖ |k|^m f̂ ‖₂` with the `k = 0` mode
///   contributing `0` for `m > 0` and `1` for `m = 0` (continuum multiplier
///   convention).
/// * `InhomogeneousSobolev(m)` — `‖ ⟨k⟩^m f̂ ‖₂`, `⟨k⟩ = (1+|k|²)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind<S> {
    Lp(S),
    HomogeneousSobolev(S),
    InhomogeneousSobolev(S),
}

/// Shared, immutable discretization of the periodic box.
///
/// Constructed once via [`SpectralGrid::new`] and shared by `Arc`; all
/// transform plans and index tables are reusable across fields and threads.
pub struct SpectralGrid<S: Scalar> {
    dim: usize,
    n: usize,
    length: S,
    dx: S,
    coords: Vec<S>,
    wavenumbers: Vec<S>,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
}

impl<S: Scalar> fmt::Debug for SpectralGrid<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length.to_f64_lossy())
            .finish()
    }
}

impl<S: Scalar> PartialEq for SpectralGrid<S> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

impl<S: Scalar> SpectralGrid<S> {
    /// Build a grid with `dim ∈ {1,2,3}`, `n` a power of two ≥ 8, box
    /// length `L > 0` (same per axis).
    pub fn new(dim: usize, n: usize, length: S) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid {
                detail: format!("dim must be 1, 2, or 3; got {dim}"),
            });
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid {
                detail: format!("points per axis must be a power of two ≥ 8; got {n}"),
            });
        }
        if !(length > S::zero()) || !length.is_finite() {
            return Err(Error::InvalidGrid {
                detail: format!("box length must be positive and finite; got {length}"),
            });
        }
        // The centered-transform sign bookkeeping is a global (-1)^{n/2}
        // per axis; n ≥ 8 a power of two makes n/2 even, so it is +1.
        debug_assert!((n / 2) % 2 == 0);

        let dx = length / S::of(n as f64);
        let half = S::of(n as f64 / 2.0);
        let dk = S::of(2.0) * S::PI() / length;
        let coords: Vec<S> = (0..n)
            .map(|j| (S::of(j as f64) - half) * dx)
            .collect();
        let wavenumbers: Vec<S> = (0..n)
            .map(|m| (S::of(m as f64) - half) * dk)
            .collect();

        let mut planner = FftPlanner::<S>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);

        Ok(Arc::new(Self {
            dim,
            n,
            length,
            dx,
            coords,
            wavenumbers,
            fwd,
            inv,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Box length per axis.
    pub fn length(&self) -> S {
        self.length
    }

    /// Grid spacing `L/n`.
    pub fn dx(&self) -> S {
        self.dx
    }

    /// Total number of grid points `n^dim`.
    pub fn total_points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Centered per-axis coordinates `x_j = (j - n/2)·dx`, ascending.
    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    /// Centered per-axis wavenumbers `k_m = (m - n/2)·2π/L`, ascending.
    pub fn wavenumbers(&self) -> &[S] {
        &self.wavenumbers
    }

    /// Quadrature weight for position-frame L² sums: `dx^dim`.
    pub fn position_weight(&self) -> S {
        self.dx.powi(self.dim as i32)
    }

    /// Quadrature weight for frequency-frame L² sums: `dx^dim / n^dim`,
    /// chosen so Parseval holds exactly against [`Self::position_weight`].
    pub fn frequency_weight(&self) -> S {
        self.position_weight() / S::of(self.total_points() as f64)
    }

    /// The reciprocal box: same `dim` and `n`, length `L_ν = 2πn/L`, whose
    /// position lattice coincides with this grid's wavenumber lattice. The
    /// reciprocal of the reciprocal is the original grid.
    pub fn reciprocal(&self) -> Result<Arc<Self>> {
        let l_nu = S::of(2.0) * S::PI() * S::of(self.n as f64) / self.length;
        Self::new(self.dim, self.n, l_nu)
    }

    /// True when both grids share `dim`, `n`, and box length.
    pub fn same_layout(&self, other: &Self) -> bool {
        self == other
    }

    /// Decode a flat row-major index (axis 0 slowest) into per-axis indices;
    /// unused axes read 0.
    #[inline]
    pub fn decode(&self, idx: usize) -> [usize; 3] {
        match self.dim {
            1 => [idx, 0, 0],
            2 => [idx / self.n, idx % self.n, 0],
            _ => {
                let plane = self.n * self.n;
                [idx / plane, (idx % plane) / self.n, idx % self.n]
            }
        }
    }

    /// Visit every grid point as `(flat index, |x|²)`.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, S)) {
        self.for_each_lattice(&self.coords, &mut f);
    }

    /// Visit every mode as `(flat index, |k|²)` in centered storage order.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, S)) {
        self.for_each_lattice(&self.wavenumbers, &mut f);
    }

    fn for_each_lattice(&self, axis: &[S], f: &mut impl FnMut(usize, S)) {
        let mut idx = 0usize;
        match self.dim {
            1 => {
                for &a in axis {
                    f(idx, a * a);
                    idx += 1;
                }
            }
            2 => {
                for &a in axis {
                    let aa = a * a;
                    for &b in axis {
                        f(idx, aa + b * b);
                        idx += 1;
                    }
                }
            }
            _ => {
                for &a in axis {
                    let aa = a * a;
                    for &b in axis {
                        let ab = aa + b * b;
                        for &c in axis {
                            f(idx, ab + c * c);
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// Multiply element `idx` by `(-1)^{j_0 + … + j_{d-1}}` for all entries.
    fn apply_parity_sign(&self, values: &mut [Complex<S>]) {
        let bits = self.n.trailing_zeros();
        let dim = self.dim;
        for (idx, v) in values.iter_mut().enumerate() {
            let mut parity = idx;
            if dim > 1 {
                parity ^= idx >> bits;
            }
            if dim > 2 {
                parity ^= idx >> (2 * bits);
            }
            if parity & 1 == 1 {
                *v = -*v;
            }
        }
    }

    fn fft_axis(&self, values: &mut [Complex<S>], axis: usize, plan: &Arc<dyn Fft<S>>) {
        let n = self.n;
        let inner = n.pow((self.dim - 1 - axis) as u32);
        if inner == 1 {
            plan.process(values);
            return;
        }
        let outer = n.pow(axis as u32);
        // Batch `block` adjacent lanes through one contiguous scratch buffer
        // so the strided gather reads short contiguous runs.
        let block = (4096 / n).clamp(1, inner);
        let mut scratch = vec![Complex::new(S::zero(), S::zero()); block * n];
        for o in 0..outer {
            let base = o * n * inner;
            let mut i0 = 0;
            while i0 < inner {
                let b = block.min(inner - i0);
                for j in 0..n {
                    let row = base + j * inner + i0;
                    for (bi, &v) in values[row..row + b].iter().enumerate() {
                        scratch[bi * n + j] = v;
                    }
                }
                plan.process(&mut scratch[..b * n]);
                for j in 0..n {
                    let row = base + j * inner + i0;
                    for bi in 0..b {
                        values[row + bi] = scratch[bi * n + j];
                    }
                }
                i0 += b;
            }
        }
    }

    /// Centered forward transform in place:
    /// `f̂(k_m) = Σ_j e^{-i k_m·x_j} f(x_j)`, no prefactor.
    pub fn forward_in_place(&self, values: &mut [Complex<S>]) {
        debug_assert_eq!(values.len(), self.total_points());
        self.apply_parity_sign(values);
        for axis in 0..self.dim {
            self.fft_axis(values, axis, &self.fwd);
        }
        self.apply_parity_sign(values);
    }

    /// Centered inverse transform in place:
    /// `f(x_j) = n^{-d} Σ_m e^{+i k_m·x_j} f̂(k_m)`.
    pub fn inverse_in_place(&self, values: &mut [Complex<S>]) {
        debug_assert_eq!(values.len(), self.total_points());
        self.apply_parity_sign(values);
        for axis in 0..self.dim {
            self.fft_axis(values, axis, &self.inv);
        }
        let scale = S::one() / S::of(self.total_points() as f64);
        let bits = self.n.trailing_zeros();
        let dim = self.dim;
        for (idx, v) in values.iter_mut().enumerate() {
            let mut parity = idx;
            if dim > 1 {
                parity ^= idx >> bits;
            }
            if dim > 2 {
                parity ^= idx >> (2 * bits);
            }
            let s = if parity & 1 == 1 { -scale } else { scale };
            *v = v.scale(s);
        }
    }

    /// Fraction of the total mass of `density` lying within `2·dx` of the
    /// box boundary along any axis. Returns 0 for an identically zero field.
    pub fn edge_mass_fraction(&self, density: &[S]) -> S {
        debug_assert_eq!(density.len(), self.total_points());
        let n = self.n;
        let near = |j: usize| j < 2 || j >= n - 2;
        let mut total = S::zero();
        let mut edge = S::zero();
        for (idx, &rho) in density.iter().enumerate() {
            total += rho;
            let [a, b, c] = self.decode(idx);
            let on_edge = match self.dim {
                1 => near(a),
                2 => near(a) || near(b),
                _ => near(a) || near(b) || near(c),
            };
            if on_edge {
                edge += rho;
            }
        }
        if total == S::zero() {
            S::zero()
        } else {
            edge / total
        }
    }
}

/// Complex scalar field on a [`SpectralGrid`], tagged with its frame.
#[derive(Debug, Clone)]
pub struct Field<S: Scalar> {
    grid: Arc<SpectralGrid<S>>,
    frame: FieldFrame,
    values: Vec<Complex<S>>,
}

impl<S: Scalar> Field<S> {
    /// Wrap raw samples; `values.len()` must equal `grid.total_points()`.
    pub fn from_values(
        grid: Arc<SpectralGrid<S>>,
        frame: FieldFrame,
        values: Vec<Complex<S>>,
    ) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::GridMismatch {
                detail: format!(
                    "field has {} values, grid has {} points",
                    values.len(),
                    grid.total_points()
                ),
            });
        }
        Ok(Self { grid, frame, values })
    }

    /// Zero field in the given frame.
    pub fn zeros(grid: Arc<SpectralGrid<S>>, frame: FieldFrame) -> Self {
        let len = grid.total_points();
        Self {
            grid,
            frame,
            values: vec![Complex::new(S::zero(), S::zero()); len],
        }
    }

    /// Position-frame field sampled from a function of the flat index.
    pub fn from_fn(
        grid: Arc<SpectralGrid<S>>,
        frame: FieldFrame,
        mut f: impl FnMut(usize) -> Complex<S>,
    ) -> Self {
        let values = (0..grid.total_points()).map(|idx| f(idx)).collect();
        Self { grid, frame, values }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid<S>> {
        &self.grid
    }

    pub fn frame(&self) -> FieldFrame {
        self.frame
    }

    pub fn values(&self) -> &[Complex<S>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<S>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<S>> {
        self.values
    }

    /// Re-tag the frame without touching values. Used when a frequency
    /// field is reinterpreted as a position field on the reciprocal grid;
    /// the caller is responsible for supplying the matching grid.
    pub fn reinterpret(self, grid: Arc<SpectralGrid<S>>, frame: FieldFrame) -> Result<Self> {
        Self::from_values(grid, frame, self.values)
    }

    /// Apply the transform in the stated direction, flipping the frame tag.
    /// Applying `Forward` to a frequency-frame field (or `Inverse` to a
    /// position-frame field) is a contract violation.
    pub fn transform(&mut self, direction: Direction) -> Result<()> {
        match (direction, self.frame) {
            (Direction::Forward, FieldFrame::Position) => {
                self.grid.forward_in_place(&mut self.values);
                self.frame = FieldFrame::Frequency;
                Ok(())
            }
            (Direction::Inverse, FieldFrame::Frequency) => {
                self.grid.inverse_in_place(&mut self.values);
                self.frame = FieldFrame::Position;
                Ok(())
            }
            (Direction::Forward, FieldFrame::Frequency) => Err(Error::FrameMismatch {
                expected: "position",
                found: "frequency",
            }),
            (Direction::Inverse, FieldFrame::Position) => Err(Error::FrameMismatch {
                expected: "frequency",
                found: "position",
            }),
        }
    }

    /// Quadrature-weighted L² norm in the current frame (exact Parseval
    /// partner across frames).
    pub fn l2_norm(&self) -> S {
        let w = match self.frame {
            FieldFrame::Position => self.grid.position_weight(),
            FieldFrame::Frequency => self.grid.frequency_weight(),
        };
        let sum: S = self.values.iter().map(|z| z.norm_sqr()).sum();
        (w * sum).sqrt()
    }

    /// Weighted inner product `⟨self, other⟩ = w·Σ conj(self)·other` in the
    /// shared frame.
    pub fn inner(&self, other: &Field<S>) -> Result<Complex<S>> {
        if !self.grid.same_layout(&other.grid) || self.frame != other.frame {
            return Err(Error::GridMismatch {
                detail: "inner product requires matching grid and frame".into(),
            });
        }
        let w = match self.frame {
            FieldFrame::Position => self.grid.position_weight(),
            FieldFrame::Frequency => self.grid.frequency_weight(),
        };
        let mut acc = Complex::new(S::zero(), S::zero());
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a.conj() * *b;
        }
        Ok(acc.scale(w))
    }

    /// Norm dispatch; see [`NormKind`]. `Lp` with `p ≠ 2, ∞` requires the
    /// position frame.
    pub fn norm(&self, kind: NormKind<S>) -> Result<S> {
        match kind {
            NormKind::Lp(p) => {
                if p < S::one() {
                    return Err(Error::InvalidParameter {
                        name: "p",
                        value: p.to_f64_lossy(),
                        requirement: "p ≥ 1",
                    });
                }
                if p == S::infinity() {
                    let mut m = S::zero();
                    for z in &self.values {
                        m = m.max(z.norm());
                    }
                    return Ok(m);
                }
                if p == S::of(2.0) {
                    return Ok(self.l2_norm());
                }
                if self.frame != FieldFrame::Position {
                    return Err(Error::FrameMismatch {
                        expected: "position",
                        found: self.frame.name(),
                    });
                }
                let w = self.grid.position_weight();
                let sum: S = self.values.iter().map(|z| z.norm().powf(p)).sum();
                Ok((w * sum).powf(S::one() / p))
            }
            NormKind::HomogeneousSobolev(m) | NormKind::InhomogeneousSobolev(m) => {
                if m < S::zero() {
                    return Err(Error::InvalidParameter {
                        name: "m",
                        value: m.to_f64_lossy(),
                        requirement: "m ≥ 0",
                    });
                }
                let homogeneous = matches!(kind, NormKind::HomogeneousSobolev(_));
                let spectrum;
                let field = match self.frame {
                    FieldFrame::Frequency => self,
                    FieldFrame::Position => {
                        let mut c = self.clone();
                        c.transform(Direction::Forward)?;
                        spectrum = c;
                        &spectrum
                    }
                };
                let w = self.grid.frequency_weight();
                let mut sum = S::zero();
                field.grid.for_each_mode(|idx, ksq| {
                    // (k²)^m = |k|^{2m}, the squared multiplier.
                    let weight = if homogeneous {
                        if ksq == S::zero() {
                            if m == S::zero() {
                                S::one()
                            } else {
                                S::zero()
                            }
                        } else {
                            ksq.powf(m)
                        }
                    } else {
                        (S::one() + ksq).powf(m)
                    };
                    sum += weight * field.values[idx].norm_sqr();
                });
                Ok((w * sum).sqrt())
            }
        }
    }

    /// Exact free flow `e^{iτΔ/2}`: frequency multiplier `e^{-iτ|k|²/2}`.
    /// Requires the position frame; preserves every Sobolev norm to
    /// roundoff. `τ` may have either sign.
    pub fn free_propagate(&mut self, tau: S) -> Result<()> {
        if self.frame != FieldFrame::Position {
            return Err(Error::FrameMismatch {
                expected: "position",
                found: self.frame.name(),
            });
        }
        if tau == S::zero() {
            return Ok(());
        }
        self.transform(Direction::Forward)?;
        let half = tau / S::of(2.0);
        let grid = self.grid.clone();
        grid.for_each_mode(|idx, ksq| {
            let phase = cis(-half * ksq);
            self.values[idx] *= phase;
        });
        self.transform(Direction::Inverse)?;
        Ok(())
    }

    /// Pointwise multiplication by `e^{iθ(x)}` given the real phase values.
    pub fn phase_multiply(&mut self, theta: &[S]) {
        debug_assert_eq!(theta.len(), self.values.len());
        for (v, &t) in self.values.iter_mut().zip(theta) {
            *v *= cis(t);
        }
    }
}

/// `L^p` norm of a real nonnegative sample vector on the grid
/// (quadrature-weighted; `p = ∞` is the grid maximum).
pub fn lp_real<S: Scalar>(grid: &SpectralGrid<S>, values: &[S], p: S) -> Result<S> {
    if p < S::one() {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p.to_f64_lossy(),
            requirement: "p ≥ 1",
        });
    }
    if p == S::infinity() {
        return Ok(values.iter().fold(S::zero(), |m, &v| m.max(v.abs())));
    }
    let w = grid.position_weight();
    if p == S::one() {
        let sum: S = values.iter().map(|v| v.abs()).sum();
        return Ok(w * sum);
    }
    let sum: S = values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((w * sum).powf(S::one() / p))
}
