//! Uniform grids and complex wavefunctions on one and two axes.
//!
//! Units are dimensionless with ħ = 1 and unit mass on both the center-of-mass
//! axis `Y` and the internal axis `y`. Momentum amplitudes use the continuous
//! Fourier convention `φ(p) = (2π)^{-1/2} ∫ ψ(x) e^{-ipx} dx`, discretized so
//! that `Σ|φ|² dp = Σ|ψ|² dx` exactly; the momentum lattice is stored in
//! standard DFT order.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{transpose, RowFft};
use crate::scalar::{cis, Real};

/// Which representation an axis is currently stored in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Position,
    Momentum,
}

/// Axis of a two-dimensional (center-of-mass, internal) wavefunction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Center-of-mass coordinate `Y`, the slow (row) index.
    Com,
    /// Internal coordinate `y`, the contiguous index.
    Internal,
}

/// Periodic uniform lattice `x_j = x_min + j·dx`, `j = 0..n`, `dx = (x_max - x_min)/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1<T> {
    x_min: T,
    x_max: T,
    n: usize,
}

impl<T: Real> Grid1<T> {
    pub fn new(x_min: T, x_max: T, n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count {n} must be a power of two and at least 8"
            )));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Grid on `[-half_width, half_width)`.
    pub fn symmetric(half_width: T, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::count(self.n)
    }

    pub fn x(&self, j: usize) -> T {
        self.x_min + T::count(j) * self.dx()
    }

    pub fn positions(&self) -> Vec<T> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Momentum lattice spacing `2π/(n·dx)`.
    pub fn dp(&self) -> T {
        T::TAU() / (self.x_max - self.x_min)
    }

    /// Momentum of DFT bin `k`; covers `[-π/dx, π/dx)`.
    pub fn momentum(&self, k: usize) -> T {
        let half = self.n / 2;
        if k < half {
            T::count(k) * self.dp()
        } else {
            -(T::count(self.n - k) * self.dp())
        }
    }

    pub fn momenta(&self) -> Vec<T> {
        (0..self.n).map(|k| self.momentum(k)).collect()
    }

    pub fn p_max(&self) -> T {
        T::PI() / self.dx()
    }

    pub fn measure(&self, space: Space) -> T {
        match space {
            Space::Position => self.dx(),
            Space::Momentum => self.dp(),
        }
    }

    /// `x_min = -x_max`, so `j ↦ (n - j) mod n` maps the lattice onto its mirror image.
    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).mag() <= T::epsilon() * T::lit(16.0) * self.x_max.mag()
    }

    pub fn mirror_index(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    pub(crate) fn same_as(&self, other: &Self) -> bool {
        self.n == other.n && self.x_min == other.x_min && self.x_max == other.x_max
    }

    /// `dx/√(2π)·e^{-i p_k x_min}` applied after an unnormalized forward DFT.
    fn forward_factors(&self) -> Vec<Complex<T>> {
        let scale = self.dx() / T::TAU().sqrt();
        (0..self.n)
            .map(|k| cis(-self.momentum(k) * self.x_min) * scale)
            .collect()
    }

    /// `e^{i p_k x_min}` applied before an unnormalized inverse DFT.
    fn inverse_factors(&self) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|k| cis(self.momentum(k) * self.x_min))
            .collect()
    }

    fn inverse_scale(&self) -> T {
        self.dp() / T::TAU().sqrt()
    }
}

/// Transforms every consecutive row of `data` between position and momentum.
fn transform_rows<T: Real>(grid: &Grid1<T>, data: &mut [Complex<T>], to_momentum: bool) {
    let n = grid.n();
    let mut fft = RowFft::new(n);
    if to_momentum {
        let factors = grid.forward_factors();
        fft.forward(data);
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(&factors).for_each(|(a, f)| *a = *a * f);
        }
    } else {
        let factors = grid.inverse_factors();
        let scale = grid.inverse_scale();
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(&factors).for_each(|(a, f)| *a = *a * f);
        }
        fft.inverse(data);
        data.iter_mut().for_each(|a| *a = *a * scale);
    }
}

fn norm_sq_of<T: Real>(amp: &[Complex<T>]) -> T {
    amp.iter().map(|a| a.norm_sqr()).sum()
}

/// Single-axis wavefunction.
#[derive(Clone, Debug)]
pub struct Wavefunction1<T: Real> {
    grid: Grid1<T>,
    space: Space,
    amp: Vec<Complex<T>>,
}

impl<T: Real> Wavefunction1<T> {
    /// Position-space wavefunction from raw amplitudes (not renormalized).
    pub fn new(grid: Grid1<T>, amp: Vec<Complex<T>>) -> Result<Self> {
        Self::with_space(grid, Space::Position, amp)
    }

    pub fn with_space(grid: Grid1<T>, space: Space, amp: Vec<Complex<T>>) -> Result<Self> {
        if amp.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a {}-point grid",
                amp.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, space, amp })
    }

    pub fn from_fn(grid: Grid1<T>, f: impl Fn(T) -> Complex<T>) -> Self {
        let amp = grid.positions().into_iter().map(f).collect();
        Self {
            grid,
            space: Space::Position,
            amp,
        }
    }

    pub fn grid(&self) -> &Grid1<T> {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amp
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amp
    }

    /// Lattice coordinates of the current representation (positions, or momenta in DFT order).
    pub fn coordinates(&self) -> Vec<T> {
        match self.space {
            Space::Position => self.grid.positions(),
            Space::Momentum => self.grid.momenta(),
        }
    }

    pub fn norm_sq(&self) -> T {
        norm_sq_of(&self.amp) * self.grid.measure(self.space)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn density(&self) -> Vec<T> {
        self.amp.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Rescales to unit norm; a vanishing state is an error, not a silent NaN.
    pub fn normalized(mut self) -> Result<Self> {
        let n2 = self.norm_sq();
        if !(n2 > T::min_positive_value().sqrt()) {
            return Err(Error::ZeroNorm);
        }
        let s = T::one() / n2.sqrt();
        self.amp.iter_mut().for_each(|a| *a = *a * s);
        Ok(self)
    }

    pub fn scaled(mut self, c: Complex<T>) -> Self {
        self.amp.iter_mut().for_each(|a| *a = *a * c);
        self
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        if self.space != other.space {
            return Err(Error::Representation(format!(
                "{:?} vs {:?}",
                self.space, other.space
            )));
        }
        Ok(())
    }

    /// `⟨self|other⟩ = Σ conj(self)·other·measure`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        self.check_compatible(other)?;
        let s: Complex<T> = self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v);
        Ok(s * self.grid.measure(self.space))
    }

    /// Normalized mean and variance of the lattice coordinate in the current representation.
    pub fn moments(&self) -> (T, T) {
        let coords = self.coordinates();
        let rho = self.density();
        let total: T = rho.iter().copied().sum();
        let mean = coords.iter().zip(&rho).map(|(&x, &r)| x * r).sum::<T>() / total;
        let var = coords
            .iter()
            .zip(&rho)
            .map(|(&x, &r)| (x - mean) * (x - mean) * r)
            .sum::<T>()
            / total;
        (mean, var)
    }

    /// Probability in the outermost `band` lattice points on each side.
    pub fn boundary_mass(&self, band: usize) -> T {
        let n = self.amp.len();
        let band = band.min(n / 2);
        let edge: T = self.amp[..band]
            .iter()
            .chain(&self.amp[n - band..])
            .map(|a| a.norm_sqr())
            .sum();
        edge * self.grid.measure(self.space)
    }

    pub fn to_momentum(&self) -> Result<Self> {
        if self.space == Space::Momentum {
            return Err(Error::Representation("already in momentum space".into()));
        }
        let mut amp = self.amp.clone();
        transform_rows(&self.grid, &mut amp, true);
        Ok(Self {
            grid: self.grid,
            space: Space::Momentum,
            amp,
        })
    }

    pub fn to_position(&self) -> Result<Self> {
        if self.space == Space::Position {
            return Err(Error::Representation("already in position space".into()));
        }
        let mut amp = self.amp.clone();
        transform_rows(&self.grid, &mut amp, false);
        Ok(Self {
            grid: self.grid,
            space: Space::Position,
            amp,
        })
    }
}

/// Cell probability allowed at either end of the grid by [`make_gaussian_1d`].
pub const GAUSSIAN_TAIL_TOL: f64 = 1e-12;

/// `exp(-(x-center)²/(2·width_sq) + i·momentum·x + i·phase)`, renormalized on the grid.
pub fn make_gaussian_1d<T: Real>(
    grid: Grid1<T>,
    center: T,
    width_sq: T,
    momentum: T,
    phase: T,
) -> Result<Wavefunction1<T>> {
    if !(width_sq > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "Gaussian width_sq must be positive, got {width_sq}"
        )));
    }
    let two = T::lit(2.0);
    let psi = Wavefunction1::from_fn(grid, |x| {
        let d = x - center;
        cis(momentum * x + phase) * (-(d * d) / (two * width_sq)).exp()
    })
    .normalized()?;
    let n = grid.n();
    let dx = grid.dx();
    let tail = psi.amp[0].norm_sqr().max(psi.amp[n - 1].norm_sqr()) * dx;
    if tail.as_f64() > GAUSSIAN_TAIL_TOL {
        return Err(Error::TailClipped {
            tail: tail.as_f64(),
            tolerance: GAUSSIAN_TAIL_TOL,
        });
    }
    Ok(psi)
}

/// `(a + e^{iθ} b)/‖·‖`; perfect cancellation is reported as [`Error::ZeroNorm`].
pub fn superpose<T: Real>(
    a: &Wavefunction1<T>,
    b: &Wavefunction1<T>,
    rel_phase: T,
) -> Result<Wavefunction1<T>> {
    a.check_compatible(b)?;
    let w = cis(rel_phase);
    let amp: Vec<Complex<T>> = a.amp.iter().zip(&b.amp).map(|(x, y)| x + w * y).collect();
    let scale = a.norm_sq() + b.norm_sq();
    let combined = Wavefunction1 {
        grid: a.grid,
        space: a.space,
        amp,
    };
    // Relative cancellation at round-off level counts as exact cancellation.
    if combined.norm_sq() <= scale * T::epsilon() * T::epsilon() * T::lit(1e4) {
        return Err(Error::ZeroNorm);
    }
    combined.normalized()
}

/// Joint (center-of-mass, internal) wavefunction stored row-major with the
/// internal index contiguous: `amp[i_com * n_internal + i_internal]`.
#[derive(Clone, Debug)]
pub struct Wavefunction2<T: Real> {
    com: Grid1<T>,
    internal: Grid1<T>,
    spaces: [Space; 2],
    amp: Vec<Complex<T>>,
}

impl<T: Real> Wavefunction2<T> {
    pub fn new(com: Grid1<T>, internal: Grid1<T>, amp: Vec<Complex<T>>) -> Result<Self> {
        Self::with_spaces(com, internal, [Space::Position; 2], amp)
    }

    pub fn with_spaces(
        com: Grid1<T>,
        internal: Grid1<T>,
        spaces: [Space; 2],
        amp: Vec<Complex<T>>,
    ) -> Result<Self> {
        if amp.len() != com.n() * internal.n() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a {}x{} grid",
                amp.len(),
                com.n(),
                internal.n()
            )));
        }
        Ok(Self {
            com,
            internal,
            spaces,
            amp,
        })
    }

    pub fn from_fn(com: Grid1<T>, internal: Grid1<T>, f: impl Fn(T, T) -> Complex<T>) -> Self {
        let ys = internal.positions();
        let mut amp = Vec::with_capacity(com.n() * internal.n());
        for big_y in com.positions() {
            amp.extend(ys.iter().map(|&y| f(big_y, y)));
        }
        Self {
            com,
            internal,
            spaces: [Space::Position; 2],
            amp,
        }
    }

    /// Normalized product state `φ(Y)·ψ(y)`.
    pub fn product(phi: &Wavefunction1<T>, psi: &Wavefunction1<T>) -> Result<Self> {
        if phi.space != Space::Position || psi.space != Space::Position {
            return Err(Error::Representation(
                "product states are built from position-space factors".into(),
            ));
        }
        let mut amp = Vec::with_capacity(phi.amp.len() * psi.amp.len());
        for a in &phi.amp {
            amp.extend(psi.amp.iter().map(|b| a * b));
        }
        Self::new(phi.grid, psi.grid, amp)?.normalized()
    }

    pub fn com_grid(&self) -> &Grid1<T> {
        &self.com
    }

    pub fn internal_grid(&self) -> &Grid1<T> {
        &self.internal
    }

    pub fn grid(&self, axis: Axis) -> &Grid1<T> {
        match axis {
            Axis::Com => &self.com,
            Axis::Internal => &self.internal,
        }
    }

    pub fn space(&self, axis: Axis) -> Space {
        self.spaces[axis_index(axis)]
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amp
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amp
    }

    /// Amplitudes along the internal axis at one center-of-mass lattice index.
    pub fn row(&self, i_com: usize) -> &[Complex<T>] {
        let m = self.internal.n();
        &self.amp[i_com * m..(i_com + 1) * m]
    }

    fn cell(&self) -> T {
        self.com.measure(self.spaces[0]) * self.internal.measure(self.spaces[1])
    }

    pub fn norm_sq(&self) -> T {
        norm_sq_of(&self.amp) * self.cell()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n2 = self.norm_sq();
        if !(n2 > T::min_positive_value().sqrt()) {
            return Err(Error::ZeroNorm);
        }
        let s = T::one() / n2.sqrt();
        self.amp.iter_mut().for_each(|a| *a = *a * s);
        Ok(self)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.com.same_as(&other.com) || !self.internal.same_as(&other.internal) {
            return Err(Error::GridMismatch("two-axis grids differ".into()));
        }
        if self.spaces != other.spaces {
            return Err(Error::Representation(format!(
                "{:?} vs {:?}",
                self.spaces, other.spaces
            )));
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        self.check_compatible(other)?;
        let s = self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v);
        Ok(s * self.cell())
    }

    /// `ca·a + cb·b` (not renormalized).
    pub fn combine(a: &Self, ca: Complex<T>, b: &Self, cb: Complex<T>) -> Result<Self> {
        a.check_compatible(b)?;
        let amp = a
            .amp
            .iter()
            .zip(&b.amp)
            .map(|(x, y)| ca * x + cb * y)
            .collect();
        Ok(Self {
            com: a.com,
            internal: a.internal,
            spaces: a.spaces,
            amp,
        })
    }

    /// Mirror image under `Y → -Y` (momentum `p_Y → -p_Y` in momentum space).
    pub fn mirror_com(&self) -> Result<Self> {
        if !self.com.is_symmetric() {
            return Err(Error::InvalidGrid(
                "center-of-mass mirror needs a grid symmetric about 0".into(),
            ));
        }
        let n = self.com.n();
        let m = self.internal.n();
        let mut amp = Vec::with_capacity(self.amp.len());
        for i in 0..n {
            let j = match self.spaces[0] {
                Space::Position => self.com.mirror_index(i),
                Space::Momentum => (n - i) % n,
            };
            amp.extend_from_slice(&self.amp[j * m..(j + 1) * m]);
        }
        Ok(Self {
            com: self.com,
            internal: self.internal,
            spaces: self.spaces,
            amp,
        })
    }

    /// Marginal probability density along `axis` (the other axis integrated out).
    pub fn marginal(&self, axis: Axis) -> Vec<T> {
        let n = self.com.n();
        let m = self.internal.n();
        match axis {
            Axis::Com => {
                let w = self.internal.measure(self.spaces[1]);
                (0..n)
                    .map(|i| norm_sq_of(&self.amp[i * m..(i + 1) * m]) * w)
                    .collect()
            }
            Axis::Internal => {
                let w = self.com.measure(self.spaces[0]);
                let mut out = vec![T::zero(); m];
                for row in self.amp.chunks_exact(m) {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o = *o + a.norm_sqr();
                    }
                }
                out.iter_mut().for_each(|o| *o = *o * w);
                out
            }
        }
    }

    /// Probability in the outermost `band` lattice lines on both ends of `axis`.
    pub fn boundary_mass(&self, axis: Axis, band: usize) -> T {
        let marginal = self.marginal(axis);
        let n = marginal.len();
        let band = band.min(n / 2);
        let measure = self.grid(axis).measure(self.space(axis));
        let edge: T = marginal[..band]
            .iter()
            .chain(&marginal[n - band..])
            .copied()
            .sum();
        edge * measure
    }

    fn transform(&self, axis: Axis, to_momentum: bool) -> Result<Self> {
        let idx = axis_index(axis);
        let want_from = if to_momentum {
            Space::Position
        } else {
            Space::Momentum
        };
        if self.spaces[idx] != want_from {
            return Err(Error::Representation(format!(
                "{axis:?} axis is already in {:?} space",
                self.spaces[idx]
            )));
        }
        let n = self.com.n();
        let m = self.internal.n();
        let mut amp = self.amp.clone();
        match axis {
            Axis::Internal => transform_rows(&self.internal, &mut amp, to_momentum),
            Axis::Com => {
                let mut t = amp.clone();
                transpose(&amp, &mut t, n, m);
                transform_rows(&self.com, &mut t, to_momentum);
                transpose(&t, &mut amp, m, n);
            }
        }
        let mut spaces = self.spaces;
        spaces[idx] = if to_momentum {
            Space::Momentum
        } else {
            Space::Position
        };
        Ok(Self {
            com: self.com,
            internal: self.internal,
            spaces,
            amp,
        })
    }

    pub fn to_momentum(&self, axis: Axis) -> Result<Self> {
        self.transform(axis, true)
    }

    pub fn to_position(&self, axis: Axis) -> Result<Self> {
        self.transform(axis, false)
    }
}

fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::Com => 0,
        Axis::Internal => 1,
    }
}
