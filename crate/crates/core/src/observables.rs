//! Measurements on the joint state: the reduced internal density matrix and
//! its impurity, the leftward-moving probability with the interference phase
//! fit, and the compositeness measure `M_C` built from the operator
//! `Q(Y) = ⟨V(Y+y) + V(Y-y) - 2V(Y)⟩_ψ`.

use log::warn;
use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};

use crate::error::{Error, Result};
use crate::fft::RowFft;
use crate::potentials::ExternalPotential;
use crate::qgrid::{Axis, Grid1, Space, Wavefunction1, Wavefunction2};
use crate::scalar::{cis, Real};

/// Tolerance of the density-matrix invariants (hermiticity, trace, positivity).
pub const DENSITY_TOL: f64 = 1e-10;

/// Internal density matrix in the discrete normalization
/// `ρ_ij = ρ(y_i, y_j)·dy`, so that `Σ_i ρ_ii = 1`.
#[derive(Clone, Debug)]
pub struct ReducedDensityMatrix<T: Real> {
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ReducedDensityMatrix<T> {
    /// Validates hermiticity, unit trace and positivity within [`DENSITY_TOL`].
    pub fn new(dim: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != dim * dim || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "{} entries for a {dim}x{dim} density matrix",
                data.len()
            )));
        }
        let rho = Self { dim, data };
        rho.validate()?;
        Ok(rho)
    }

    fn validate(&self) -> Result<()> {
        let tol = DENSITY_TOL;
        let n = self.dim;
        let mut herm = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                herm = herm.max((self.entry(i, j) - self.entry(j, i).conj()).norm().as_f64());
            }
        }
        if herm > tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix is not Hermitian (deviation {herm:e})"
            )));
        }
        let trace = self.trace().as_f64();
        if (trace - 1.0).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix has trace {trace}"
            )));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    /// Projector onto a normalized position-space state.
    pub fn pure(psi: &Wavefunction1<T>) -> Result<Self> {
        let n = psi.grid().n();
        let w = psi.grid().measure(psi.space());
        let a = psi.amplitudes();
        let mut data = Vec::with_capacity(n * n);
        for ai in a {
            data.extend(a.iter().map(|aj| ai * aj.conj() * w));
        }
        Self::new(n, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.entry(i, i).re).sum()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let z = self.entry(i, j);
            Complex64::new(z.re.as_f64(), z.im.as_f64())
        })
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .to_matrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// `ρ_int = Tr_com |Ψ⟩⟨Ψ|`. The internal axis must be in position space; the
/// center-of-mass axis may be in either representation.
pub fn partial_trace_internal<T: Real>(psi: &Wavefunction2<T>) -> Result<ReducedDensityMatrix<T>> {
    if psi.space(Axis::Internal) != Space::Position {
        return Err(Error::Representation(
            "partial trace needs the internal axis in position space".into(),
        ));
    }
    let n2 = psi.norm_sq();
    if (n2 - T::one()).mag() > T::lit(DENSITY_TOL) {
        return Err(Error::InvalidParameter(format!(
            "partial trace of a state with norm² = {n2}"
        )));
    }
    let m = psi.internal_grid().n();
    let w = psi.grid(Axis::Com).measure(psi.space(Axis::Com)) * psi.internal_grid().dx();
    let zero = Complex::new(T::zero(), T::zero());
    let mut data = vec![zero; m * m];
    for row in psi.amplitudes().chunks_exact(m) {
        for (i, a) in row.iter().enumerate() {
            if a.norm_sqr() == T::zero() {
                continue;
            }
            let out = &mut data[i * m..(i + 1) * m];
            for (o, b) in out.iter_mut().zip(row) {
                *o = *o + a * b.conj();
            }
        }
    }
    data.iter_mut().for_each(|z| *z = *z * w);
    // Enforce exact hermiticity; the two triangles differ only by round-off.
    for i in 0..m {
        data[i * m + i].im = T::zero();
        for j in 0..i {
            let avg = (data[i * m + j] + data[j * m + i].conj()) / T::lit(2.0);
            data[i * m + j] = avg;
            data[j * m + i] = avg.conj();
        }
    }
    ReducedDensityMatrix::new(m, data)
}

/// `1 - Tr ρ²`.
pub fn impurity<T: Real>(rho: &ReducedDensityMatrix<T>) -> T {
    T::one() - rho.purity()
}

/// Half-width of the central window used to decide whether the packets have
/// left the well region.
pub const CLEARANCE_HALF_WIDTH: f64 = 5.0;
/// Probability allowed inside the central window at measurement time.
pub const CLEARANCE_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hemispheres<T> {
    /// Probability of negative center-of-mass momentum (the `p = 0` bin split evenly).
    pub leftward: T,
    pub rightward: T,
    /// Probability still in `|Y| < CLEARANCE_HALF_WIDTH`.
    pub central_mass: T,
    /// `false` when the measurement is taken before the packets cleared the well.
    pub cleared: bool,
}

/// Momentum-space projection onto negative center-of-mass momentum, summed
/// over the internal coordinate.
pub fn leftward_probability<T: Real>(psi: &Wavefunction2<T>) -> Result<Hemispheres<T>> {
    if psi.space(Axis::Com) != Space::Position {
        return Err(Error::Representation(
            "leftward probability takes a position-space center-of-mass axis".into(),
        ));
    }
    let com = *psi.com_grid();
    let half = T::lit(CLEARANCE_HALF_WIDTH);
    let marginal = psi.marginal(Axis::Com);
    let central_mass = marginal
        .iter()
        .enumerate()
        .filter(|&(i, _)| com.x(i).mag() < half)
        .map(|(_, &p)| p)
        .sum::<T>()
        * com.dx();
    let k = psi.to_momentum(Axis::Com)?;
    let dens = k.marginal(Axis::Com);
    let dp = com.dp();
    let (mut left, mut right) = (T::zero(), T::zero());
    for (i, &d) in dens.iter().enumerate() {
        let p = com.momentum(i);
        if p < T::zero() {
            left = left + d;
        } else if p > T::zero() {
            right = right + d;
        } else {
            left = left + d / T::lit(2.0);
            right = right + d / T::lit(2.0);
        }
    }
    let cleared = central_mass < T::lit(CLEARANCE_THRESHOLD);
    if !cleared {
        warn!("leftward probability measured with {central_mass} still near the well");
    }
    Ok(Hemispheres {
        leftward: left * dp,
        rightward: right * dp,
        central_mass,
        cleared,
    })
}

/// Largest acceptable disagreement between the fitted maximum and the confirmation run.
pub const THETA_FIT_TOL: f64 = 1e-4;
/// Agreement expected from a correct (linear) pipeline.
pub const THETA_CONFIRM_TOL: f64 = 1e-6;

/// `P(θ) = a + Re(z e^{iθ})` fitted from `θ ∈ {0, π/2, π}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaFit<T> {
    pub theta_star: T,
    pub p_max: T,
    pub a: T,
    pub z: Complex<T>,
    /// `P(θ*)` from the confirmation evaluation.
    pub confirmed: T,
}

impl<T: Real> ThetaFit<T> {
    pub fn predict(&self, theta: T) -> T {
        self.a + (self.z * cis(theta)).re
    }
}

/// Maximizes a probability that depends on `θ` only through `e^{iθ}` linearly
/// in the state. Three evaluations fix `(a, z)`; a fourth confirms.
pub fn optimize_theta<T: Real>(mut eval: impl FnMut(T) -> Result<T>) -> Result<ThetaFit<T>> {
    let two = T::lit(2.0);
    let p0 = eval(T::zero())?;
    let p_half = eval(T::PI() / two)?;
    let p_pi = eval(T::PI())?;
    let a = (p0 + p_pi) / two;
    let z = Complex::new((p0 - p_pi) / two, a - p_half);
    let theta_star = if z.norm() > T::zero() {
        let t = -z.arg();
        if t < T::zero() {
            t + T::TAU()
        } else {
            t
        }
    } else {
        T::zero()
    };
    let p_max = a + z.norm();
    let confirmed = eval(theta_star)?;
    let mismatch = (confirmed - p_max).mag();
    if mismatch > T::lit(THETA_FIT_TOL) {
        return Err(Error::ThetaFit {
            mismatch: mismatch.as_f64(),
        });
    }
    if mismatch > T::lit(THETA_CONFIRM_TOL) {
        warn!("theta fit confirmed only to {mismatch}");
    }
    Ok(ThetaFit {
        theta_star,
        p_max,
        a,
        z,
        confirmed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QMode {
    /// Quadrature of the full symmetric difference.
    Exact,
    /// `V''(Y)·⟨y²⟩_ψ`.
    Taylor,
}

/// `Q(Y)` on the center-of-mass lattice.
#[derive(Clone, Debug)]
pub struct QProfile<T> {
    pub grid: Grid1<T>,
    pub values: Vec<T>,
    pub mode: QMode,
}

/// Integrals of `|ψ(y)|²` over intervals, taken from the band-limited
/// interpolant of the lattice state so that discontinuous integrands (the
/// square well) are integrated exactly rather than sampled.
struct DensityIntegrator<T: Real> {
    x0: T,
    period: T,
    /// `(k, c_k)` of `|ψ|² = Σ c_k e^{i k (y - x0)}`.
    modes: Vec<(T, Complex<T>)>,
    mean: T,
}

impl<T: Real> DensityIntegrator<T> {
    fn new(psi: &Wavefunction1<T>) -> Self {
        let grid = *psi.grid();
        let n = grid.n();
        let big = 2 * n;
        let mut spec = psi.amplitudes().to_vec();
        let mut fft = RowFft::new(n);
        fft.forward(&mut spec);
        // Zero-pad to 2n so that |ψ|² is sampled without aliasing.
        let zero = Complex::new(T::zero(), T::zero());
        let mut padded = vec![zero; big];
        let half = n / 2;
        let inv_n = T::one() / T::count(n);
        for k in 0..half {
            padded[k] = spec[k] * inv_n;
        }
        // The Nyquist bin is split between ±n/2 to keep the interpolant real.
        padded[half] = spec[half] * inv_n / T::lit(2.0);
        padded[big - half] = spec[half] * inv_n / T::lit(2.0);
        for k in half + 1..n {
            padded[big - n + k] = spec[k] * inv_n;
        }
        let mut big_fft = RowFft::new(big);
        big_fft.inverse(&mut padded);
        let mut dens: Vec<Complex<T>> = padded
            .iter()
            .map(|z| Complex::new(z.norm_sqr(), T::zero()))
            .collect();
        big_fft.forward(&mut dens);
        let period = grid.x_max() - grid.x_min();
        let inv_big = T::one() / T::count(big);
        let modes = (0..big)
            .map(|k| {
                let kk = if k <= n {
                    k as i64
                } else {
                    k as i64 - big as i64
                };
                (T::TAU() * T::lit(kk as f64) / period, dens[k] * inv_big)
            })
            .collect::<Vec<_>>();
        let mean = modes[0].1.re;
        Self {
            x0: grid.x_min(),
            period,
            modes,
            mean,
        }
    }

    /// `∫_a^b |ψ(y)|² dy` for `a ≤ b`, the interval clipped to the grid.
    fn mass(&self, a: T, b: T) -> T {
        let lo = (a - self.x0).max(T::zero());
        let hi = (b - self.x0).min(self.period);
        if !(hi > lo) {
            return T::zero();
        }
        let mut s = self.mean * (hi - lo);
        for &(k, c) in &self.modes[1..] {
            // ∫ e^{iky} = (e^{ik hi} - e^{ik lo}) / (ik)
            let d = (cis(k * hi) - cis(k * lo)) / Complex::new(T::zero(), k);
            s = s + (c * d).re;
        }
        s
    }
}

/// `Q(Y)` on `com` for internal state `ψ`, in the `V(Y+y) + V(Y-y) - 2V(Y)` sign
/// convention.
///
/// Exact mode integrates the square well against the band-limited density in
/// closed form and uses the lattice quadrature for smooth potentials; Taylor
/// mode needs `V''` and rejects the raw square well.
pub fn q_profile<T: Real>(
    v: &ExternalPotential<T>,
    psi: &Wavefunction1<T>,
    com: &Grid1<T>,
    mode: QMode,
) -> Result<QProfile<T>> {
    if psi.space() != Space::Position {
        return Err(Error::Representation(
            "Q needs a position-space internal state".into(),
        ));
    }
    let norm = psi.norm_sq();
    let ys = psi.grid().positions();
    let rho: Vec<T> = psi.density().into_iter().map(|r| r / norm).collect();
    let dy = psi.grid().dx();
    let values = match mode {
        QMode::Taylor => {
            let y2 = ys.iter().zip(&rho).map(|(&y, &r)| y * y * r).sum::<T>() * dy;
            com.positions()
                .into_iter()
                .map(|big_y| Ok(v.second_derivative(big_y)? * y2))
                .collect::<Result<Vec<T>>>()?
        }
        QMode::Exact => match v {
            ExternalPotential::Square(w) => {
                let dens = DensityIntegrator::new(psi);
                let total = dens.mean * dens.period;
                let half = w.width() / T::lit(2.0);
                let depth = w.depth();
                com.positions()
                    .into_iter()
                    .map(|big_y| {
                        // V(Y+y) = -V₀ on y ∈ [-Y-L/2, -Y+L/2], V(Y-y) on [Y-L/2, Y+L/2].
                        let plus = dens.mass(-big_y - half, -big_y + half);
                        let minus = dens.mass(big_y - half, big_y + half);
                        let centre = if big_y.mag() <= half {
                            total
                        } else {
                            T::zero()
                        };
                        (-(plus + minus) + T::lit(2.0) * centre) * depth / total
                    })
                    .collect()
            }
            _ => com
                .positions()
                .into_iter()
                .map(|big_y| {
                    ys.iter()
                        .zip(&rho)
                        .map(|(&y, &r)| r * v.symmetric_difference(big_y, y))
                        .sum::<T>()
                        * dy
                })
                .collect(),
        },
    };
    Ok(QProfile {
        grid: *com,
        values,
        mode,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Compositeness<T> {
    pub q_mean: T,
    pub q_sq_mean: T,
    /// `√(⟨Q²⟩ - ⟨Q⟩²)`.
    pub m_c: T,
    /// `1/(2 M_C)`; infinite when `M_C = 0`.
    pub dt_min: T,
}

/// Spread of `Q` in the center-of-mass state `φ`.
pub fn compositeness<T: Real>(q: &QProfile<T>, phi: &Wavefunction1<T>) -> Result<Compositeness<T>> {
    if !phi.grid().same_as(&q.grid) {
        return Err(Error::GridMismatch(
            "Q profile and center-of-mass state live on different grids".into(),
        ));
    }
    if phi.space() != Space::Position {
        return Err(Error::Representation(
            "M_C needs a position-space state".into(),
        ));
    }
    let rho = phi.density();
    let total: T = rho.iter().copied().sum();
    let mean = rho.iter().zip(&q.values).map(|(&r, &v)| r * v).sum::<T>() / total;
    // Two-pass variance: a constant Q gives exactly zero rather than round-off.
    let var = rho
        .iter()
        .zip(&q.values)
        .map(|(&r, &v)| r * (v - mean) * (v - mean))
        .sum::<T>()
        / total;
    let m_c = var.sqrt();
    Ok(Compositeness {
        q_mean: mean,
        q_sq_mean: var + mean * mean,
        m_c,
        dt_min: T::one() / (T::lit(2.0) * m_c),
    })
}
