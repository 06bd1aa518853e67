//! Parametrically driven internal oscillator in normal-ordered form.
//!
//! For `H(t) = p²/2 + w(t)y²/2` and ladder operators of reference frequency ν,
//! `a = (√ν y + ip/√ν)/√2`, write `Ω = (w/ν + ν)/2` and `β = (Ω - ν)/2`, so that
//! `H = Ω(a†a + ½) + β(a² + a†²)`. With the default ν = 1 this is
//! `Ω = (w+1)/2`, `β = (Ω-1)/2`. The propagator factorizes as
//!
//! ```text
//! U(t) = e^{-iΦ} e^{A} e^{E a†²} (1+D)^{a†a} e^{F a²},   Φ = ½∫Ω
//! ```
//!
//! with the Riccati equation `i E' = β + 2ΩE + 4βE²` and the quadratures
//! `A = -2i∫βE`, `1 + D = e^{-iθ}` with `θ = ∫(Ω + 4βE)`, and
//! `F = -i∫β e^{-2iθ}`. All coefficients vanish at `t = 0`.
//!
//! The center-of-mass path enters only through `w(t) = 4k + 2V''(Y(t))`.
//!
//! The choice of ν matters numerically. For a stiff internal spring and ν = 1
//! the squeeze coefficient `|E|` approaches ½ and the truncated series lose
//! accuracy; matching ν to the spring frequency keeps `β` small and the number
//! basis short. Paths are therefore driven with ν = ω by default.

use std::fmt;
use std::io::Write;
use std::ops::{Add, Mul};
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::potentials::{ExternalPotential, HarmonicInternal};
use crate::qgrid::{Grid1, Space, Wavefunction1};
use crate::scalar::{cis, cplx, im_unit, Real};

/// Largest admissible `dt·max|Ω|` for the Riccati integrator.
pub const RICCATI_STEP_LIMIT: f64 = 0.05;

/// `|E|` may not come closer than this to the unitary bound ½.
pub const BLOW_UP_MARGIN: f64 = 1e-6;

/// Largest admissible norm fraction of the input lost by number-basis projection.
pub const TRUNCATION_TOL: f64 = 1e-8;

pub const DEFAULT_N_FOCK: usize = 64;

/// `apply_propagator_converged` stops doubling once the fidelity between
/// successive truncations changes by less than this.
pub const FOCK_CONVERGENCE_TOL: f64 = 1e-8;

/// Doubling stops here even if not converged.
/// Relative amplitude below which trailing input components are ignored.
pub const INPUT_TAIL_CUTOFF: f64 = 1e-13;
/// Largest relative norm gain accepted from a truncated propagator.
pub const NORM_GAIN_LIMIT: f64 = 1e-6;
pub const MAX_N_FOCK: usize = 1024;

/// Time-dependent squared frequency `w(t)` on `[0, horizon]`.
#[derive(Clone)]
pub struct DrivingProfile<T> {
    w: Arc<dyn Fn(T) -> T + Send + Sync>,
    horizon: T,
    reference: T,
    label: String,
}

impl<T: Real> fmt::Debug for DrivingProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DrivingProfile")
            .field("label", &self.label)
            .field("horizon", &self.horizon)
            .field("reference", &self.reference)
            .finish()
    }
}

impl<T: Real> DrivingProfile<T> {
    pub fn new(
        label: impl Into<String>,
        horizon: T,
        w: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(horizon > T::zero() && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "profile horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self {
            w: Arc::new(w),
            horizon,
            reference: T::one(),
            label: label.into(),
        })
    }

    /// Sets the reference frequency ν of the ladder operators (default 1).
    pub fn with_reference(mut self, nu: T) -> Result<Self> {
        if !(nu > T::zero() && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reference frequency must be positive and finite, got {nu}"
            )));
        }
        self.reference = nu;
        Ok(self)
    }

    pub fn constant(w0: T, horizon: T) -> Result<Self> {
        Self::new(format!("constant w = {w0}"), horizon, move |_| w0)
    }

    /// `w(t) = 4k + 2V''(Y(t))` along a center-of-mass path, with the
    /// reference frequency set to the spring frequency `√(4k)`.
    pub fn from_path(
        path: &PathSample<T>,
        v: &ExternalPotential<T>,
        u: &HarmonicInternal<T>,
    ) -> Result<Self> {
        // Fails for the square well, whose V'' is distributional.
        v.second_derivative(path.positions[0])?;
        let four_k = T::lit(4.0) * u.k();
        let two = T::lit(2.0);
        let v = *v;
        let path = path.clone();
        Self::new("path-driven", path.horizon(), move |t| {
            let curvature = v
                .second_derivative(path.position(t))
                .expect("second derivative checked on construction");
            four_k + two * curvature
        })?
        .with_reference(u.omega())
    }

    pub fn w(&self, t: T) -> T {
        (self.w)(t)
    }

    pub fn omega(&self, t: T) -> T {
        (self.w(t) / self.reference + self.reference) / T::lit(2.0)
    }

    pub fn beta(&self, t: T) -> T {
        (self.omega(t) - self.reference) / T::lit(2.0)
    }

    pub fn reference(&self) -> T {
        self.reference
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `max|Ω|` over `samples + 1` equally spaced times in `[0, horizon]`.
    pub fn max_rate(&self, samples: usize) -> T {
        let samples = samples.max(1);
        let h = self.horizon / T::count(samples);
        (0..=samples)
            .map(|k| self.omega(T::count(k) * h).mag())
            .fold(T::zero(), T::max)
    }

    /// Largest step satisfying the Riccati step limit, judged on `samples` points.
    pub fn stable_step(&self, samples: usize) -> T {
        T::lit(RICCATI_STEP_LIMIT) / self.max_rate(samples).max(T::epsilon())
    }
}

/// Cubic Hermite interpolation on `[0, h]` at fraction `s`.
fn hermite<T: Real, V>(y0: V, y1: V, d0: V, d1: V, h: T, s: T) -> V
where
    V: Copy + Add<Output = V> + Mul<T, Output = V>,
{
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = two * s3 - three * s2 + one;
    let h10 = s3 - two * s2 + s;
    let h01 = three * s2 - two * s3;
    let h11 = s3 - s2;
    y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h)
}

/// Index of the lattice cell containing `t` and the fraction within it.
fn locate<T: Real>(t: T, dt: T, n_cells: usize) -> (usize, T) {
    let u = (t / dt).max(T::zero());
    let k = u.floor().to_usize().unwrap_or(0).min(n_cells - 1);
    (k, u - T::count(k))
}

fn lattice<T: Real>(horizon: T, dt: T) -> Result<(usize, T)> {
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive and finite, got {dt}"
        )));
    }
    let ratio = (horizon / dt).as_f64();
    let n = ((ratio * (1.0 - 1e-12)).ceil() as usize).max(1);
    Ok((n, horizon / T::count(n)))
}

/// Riccati solution on a uniform lattice covering `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct RiccatiSolution<T> {
    pub times: Vec<T>,
    pub e: Vec<Complex<T>>,
    /// `dE/dt` at the lattice points, used for dense output.
    pub de: Vec<Complex<T>>,
    pub dt: T,
    /// Richardson estimate `max|E_dt - E_dt/2|/15` of the error in `e`.
    pub richardson_error: T,
}

impl<T: Real> RiccatiSolution<T> {
    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty lattice")
    }

    /// `E(t)` by cubic Hermite interpolation between lattice points.
    pub fn e_at(&self, t: T) -> Complex<T> {
        let (k, s) = locate(t, self.dt, self.times.len() - 1);
        hermite(
            self.e[k],
            self.e[k + 1],
            self.de[k],
            self.de[k + 1],
            self.dt,
            s,
        )
    }

    pub fn max_abs_e(&self) -> T {
        self.e.iter().map(|e| e.norm()).fold(T::zero(), T::max)
    }
}

fn riccati_rhs<T: Real>(profile: &DrivingProfile<T>, t: T, e: Complex<T>) -> Complex<T> {
    let omega = profile.omega(t);
    let beta = profile.beta(t);
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    -im_unit::<T>() * (e * (e * (beta * four) + omega * two) + beta)
}

fn rk4_riccati<T: Real>(profile: &DrivingProfile<T>, n: usize, h: T) -> Result<Vec<Complex<T>>> {
    let bound = T::lit(0.5 - BLOW_UP_MARGIN);
    let half = h / T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(n + 1);
    let mut e = Complex::new(T::zero(), T::zero());
    out.push(e);
    for k in 0..n {
        let t = T::count(k) * h;
        let k1 = riccati_rhs(profile, t, e);
        let k2 = riccati_rhs(profile, t + half, e + k1 * half);
        let k3 = riccati_rhs(profile, t + half, e + k2 * half);
        let k4 = riccati_rhs(profile, t + h, e + k3 * h);
        e = e + (k1 + k2 * two + k3 * two + k4) * sixth;
        let mag = e.norm();
        if !(mag < bound) {
            return Err(Error::RiccatiBlowUp {
                time: (t + h).as_f64(),
                magnitude: mag.as_f64(),
            });
        }
        out.push(e);
    }
    Ok(out)
}

/// Integrates `i E' = β + 2ΩE + 4βE²` from `E(0) = 0` with classical RK4.
///
/// The lattice step is the largest `horizon/n` not above `dt`. The returned
/// values come from a second pass at half the step; the difference to the
/// full-step pass gives the Richardson error estimate.
pub fn solve_riccati<T: Real>(profile: &DrivingProfile<T>, dt: T) -> Result<RiccatiSolution<T>> {
    let (n, h) = lattice(profile.horizon(), dt)?;
    let half = h / T::lit(2.0);
    let rate = (0..=2 * n)
        .map(|k| profile.omega(T::count(k) * half).mag())
        .fold(T::zero(), T::max);
    if h * rate > T::lit(RICCATI_STEP_LIMIT) * (T::one() + T::lit(1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "dt·max|Ω| = {} exceeds {RICCATI_STEP_LIMIT}; use dt ≤ {}",
            h * rate,
            T::lit(RICCATI_STEP_LIMIT) / rate
        )));
    }
    let coarse = rk4_riccati(profile, n, h)?;
    let fine = rk4_riccati(profile, 2 * n, half)?;
    let e: Vec<Complex<T>> = fine.iter().step_by(2).copied().collect();
    let richardson_error = coarse
        .iter()
        .zip(&e)
        .map(|(c, f)| (c - f).norm())
        .fold(T::zero(), T::max)
        / T::lit(15.0);
    let times: Vec<T> = (0..=n).map(|k| T::count(k) * h).collect();
    let de = times
        .iter()
        .zip(&e)
        .map(|(&t, &ek)| riccati_rhs(profile, t, ek))
        .collect();
    Ok(RiccatiSolution {
        times,
        e,
        de,
        dt: h,
        richardson_error,
    })
}

/// Normal-ordered propagator coefficients on a uniform time lattice.
#[derive(Clone, Debug)]
pub struct PropagatorCoeffs<T> {
    pub times: Vec<T>,
    pub a: Vec<Complex<T>>,
    pub d: Vec<Complex<T>>,
    pub e: Vec<Complex<T>>,
    pub f: Vec<Complex<T>>,
    /// `θ = ∫(Ω + 4βE)`, so that `1 + D = e^{-iθ}`.
    pub theta: Vec<Complex<T>>,
    /// `Φ = ½∫Ω`.
    pub phi: Vec<T>,
    pub dt: T,
    /// Reference frequency ν of the number basis the coefficients refer to.
    pub reference: T,
    pub label: String,
}

impl<T: Real> PropagatorCoeffs<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty lattice")
    }

    /// Lattice index of `t`; times off the lattice are rejected.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let u = t / self.dt;
        let k = u.round();
        let tol = T::lit(1e-9) * (T::one() + u.mag());
        if (u - k).mag() > tol || k < T::zero() || k.to_usize().unwrap_or(usize::MAX) >= self.len()
        {
            return Err(Error::LatticeMismatch(format!(
                "t = {t} is not a point of the lattice 0, {}, …, {}",
                self.dt,
                self.horizon()
            )));
        }
        Ok(k.to_usize().expect("checked above"))
    }

    pub fn max_abs_e(&self) -> T {
        self.e.iter().map(|e| e.norm()).fold(T::zero(), T::max)
    }

    /// `max |1 + D|` over the lattice.
    pub fn max_rotation_modulus(&self) -> T {
        self.d
            .iter()
            .map(|d| (d + T::one()).norm())
            .fold(T::zero(), T::max)
    }

    /// `max | |e^A|² - |1+D| |`, which vanishes for unitary evolution.
    pub fn unitarity_defect(&self) -> T {
        self.a
            .iter()
            .zip(&self.d)
            .map(|(a, d)| ((a.re * T::lit(2.0)).exp() - (d + T::one()).norm()).mag())
            .fold(T::zero(), T::max)
    }

    /// CSV with columns `t, reA, imA, reD, imD, reE, imE, reF, imF`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "reA", "imA", "reD", "imD", "reE", "imE", "reF", "imF"])?;
        for k in 0..self.len() {
            let row = [
                self.times[k],
                self.a[k].re,
                self.a[k].im,
                self.d[k].re,
                self.d[k].im,
                self.e[k].re,
                self.e[k].im,
                self.f[k].re,
                self.f[k].im,
            ];
            w.write_record(row.iter().map(|v| format!("{:.17e}", v.as_f64())))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cumulative Simpson quadratures for `A`, `D`, `F` and `Φ`.
///
/// Midpoint and quarter-point values of `E` come from the Hermite dense output
/// of the Riccati solution; `Ω` and `β` are evaluated exactly.
pub fn integrate_adf<T: Real>(
    sol: &RiccatiSolution<T>,
    profile: &DrivingProfile<T>,
) -> Result<PropagatorCoeffs<T>> {
    let n_pts = sol.times.len();
    if n_pts < 2 || sol.e.len() != n_pts || sol.de.len() != n_pts {
        return Err(Error::LatticeMismatch(
            "Riccati solution needs at least two consistent lattice points".into(),
        ));
    }
    let horizon = profile.horizon();
    if (sol.horizon() - horizon).mag() > T::lit(1e-9) * horizon {
        return Err(Error::LatticeMismatch(format!(
            "solution ends at {} but the profile horizon is {horizon}",
            sol.horizon()
        )));
    }
    let h = sol.dt;
    let zero = Complex::new(T::zero(), T::zero());
    let i = im_unit::<T>();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let sixth = T::one() / T::lit(6.0);
    let g = |t: T, e: Complex<T>| e * (profile.beta(t) * four) + profile.omega(t);
    let f_integrand = |t: T, theta: Complex<T>| -i * profile.beta(t) * (-i * theta * two).exp();

    let mut a = vec![zero; n_pts];
    let mut theta = vec![zero; n_pts];
    let mut f = vec![zero; n_pts];
    let mut phi = vec![T::zero(); n_pts];
    for k in 0..n_pts - 1 {
        let t0 = sol.times[k];
        let t1 = sol.times[k + 1];
        let tm = t0 + h / two;
        let tq = t0 + h / four;
        let dense = |s: T| hermite(sol.e[k], sol.e[k + 1], sol.de[k], sol.de[k + 1], h, s);
        let (e0, e1) = (sol.e[k], sol.e[k + 1]);
        let em = dense(T::lit(0.5));
        let eq = dense(T::lit(0.25));

        let (b0, bm, b1) = (profile.beta(t0), profile.beta(tm), profile.beta(t1));
        a[k + 1] = a[k] - i * two * (e0 * b0 + em * (bm * four) + e1 * b1) * (h * sixth);

        let (g0, gq, gm, g1) = (g(t0, e0), g(tq, eq), g(tm, em), g(t1, e1));
        let theta_m = theta[k] + (g0 + gq * four + gm) * (h / two * sixth);
        theta[k + 1] = theta[k] + (g0 + gm * four + g1) * (h * sixth);

        f[k + 1] = f[k]
            + (f_integrand(t0, theta[k])
                + f_integrand(tm, theta_m) * four
                + f_integrand(t1, theta[k + 1]))
                * (h * sixth);

        let (o0, om, o1) = (profile.omega(t0), profile.omega(tm), profile.omega(t1));
        phi[k + 1] = phi[k] + (o0 + four * om + o1) * h * sixth / two;
    }
    let d = theta.iter().map(|th| (-i * th).exp() - T::one()).collect();
    Ok(PropagatorCoeffs {
        times: sol.times.clone(),
        a,
        d,
        e: sol.e.clone(),
        f,
        theta,
        phi,
        dt: h,
        reference: profile.reference(),
        label: profile.label().to_string(),
    })
}

/// Riccati solve followed by the quadratures.
pub fn propagator_coeffs<T: Real>(
    profile: &DrivingProfile<T>,
    dt: T,
) -> Result<PropagatorCoeffs<T>> {
    integrate_adf(&solve_riccati(profile, dt)?, profile)
}

/// Hermite functions `φ_0 … φ_{n-1}` of frequency ν sampled on a grid,
/// `φ_k(y) = ν^{1/4} h_k(√ν y)` with `h_k` the unit-frequency functions.
#[derive(Clone, Debug)]
pub struct FockBasis<T> {
    grid: Grid1<T>,
    dim: usize,
    frequency: T,
    /// Row-major: `table[k * grid.n() + j] = φ_k(x_j)`.
    table: Vec<T>,
}

impl<T: Real> FockBasis<T> {
    /// Builds the basis by the three-term recurrence. The grid has to hold the
    /// highest function: its lattice norm must be 1 within `1e-10`.
    pub fn new(grid: Grid1<T>, dim: usize) -> Result<Self> {
        Self::with_frequency(grid, dim, T::one())
    }

    pub fn with_frequency(grid: Grid1<T>, dim: usize, frequency: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("n_fock must be positive".into()));
        }
        if !(frequency > T::zero() && frequency.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "basis frequency must be positive and finite, got {frequency}"
            )));
        }
        let m = grid.n();
        let scale = frequency.sqrt();
        let xs: Vec<T> = grid.positions().into_iter().map(|y| y * scale).collect();
        let mut table = vec![T::zero(); dim * m];
        let log_norm0 = (frequency / T::PI()).ln() / T::lit(4.0);
        // The recursion runs on unscaled polynomials with a per-point log
        // scale, so the Gaussian factor never underflows ahead of the growth.
        let big = T::lit(1e100);
        let ln_big = big.ln();
        let coef: Vec<(T, T)> = (0..dim)
            .map(|k| {
                (
                    (T::lit(2.0) / T::count(k + 1)).sqrt(),
                    (T::count(k) / T::count(k + 1)).sqrt(),
                )
            })
            .collect();
        for (j, &x) in xs.iter().enumerate() {
            let mut log_scale = log_norm0 - x * x / T::lit(2.0);
            let (mut prev, mut cur) = (T::zero(), T::one());
            table[j] = log_scale.exp();
            for k in 0..dim - 1 {
                let (a, b) = coef[k];
                let next = a * x * cur - b * prev;
                prev = cur;
                cur = next;
                if cur.mag() > big {
                    cur = cur / big;
                    prev = prev / big;
                    log_scale = log_scale + ln_big;
                }
                table[(k + 1) * m + j] = cur * log_scale.exp();
            }
        }
        let top = &table[(dim - 1) * m..];
        let norm = top.iter().map(|&v| v * v).sum::<T>() * grid.dx();
        if (norm - T::one()).mag() > T::lit(1e-10) {
            return Err(Error::InvalidGrid(format!(
                "grid [{}, {}] with {} points cannot hold {dim} number states (φ_{} has lattice norm {norm})",
                grid.x_min(),
                grid.x_max(),
                m,
                dim - 1
            )));
        }
        Ok(Self {
            grid,
            dim,
            frequency,
            table,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frequency(&self) -> T {
        self.frequency
    }

    pub fn grid(&self) -> &Grid1<T> {
        &self.grid
    }

    pub fn function(&self, k: usize) -> &[T] {
        let m = self.grid.n();
        &self.table[k * m..(k + 1) * m]
    }

    /// Number-basis coefficients of a position-space state and the fraction of
    /// its norm outside the basis.
    pub fn project(&self, psi: &Wavefunction1<T>) -> Result<(Vec<Complex<T>>, T)> {
        if psi.space() != Space::Position {
            return Err(Error::Representation(
                "projection takes a position-space state".into(),
            ));
        }
        if !psi.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch(format!(
                "{:?} vs basis grid {:?}",
                psi.grid(),
                self.grid
            )));
        }
        let dx = self.grid.dx();
        let amp = psi.amplitudes();
        let c: Vec<Complex<T>> = (0..self.dim)
            .map(|k| {
                self.function(k)
                    .iter()
                    .zip(amp)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (&phi, a)| {
                        acc + a * phi
                    })
                    * dx
            })
            .collect();
        let captured: T = c.iter().map(|z| z.norm_sqr()).sum();
        let deficit = (T::one() - captured / psi.norm_sq()).max(T::zero());
        Ok((c, deficit))
    }

    pub fn synthesize(&self, c: &[Complex<T>]) -> Wavefunction1<T> {
        let m = self.grid.n();
        let mut amp = vec![Complex::new(T::zero(), T::zero()); m];
        for (k, ck) in c.iter().enumerate().take(self.dim) {
            for (a, &phi) in amp.iter_mut().zip(self.function(k)) {
                *a = *a + ck * phi;
            }
        }
        Wavefunction1::new(self.grid, amp).expect("basis grid length")
    }
}

/// Number-basis matrix `G[m][n] = ⟨m|U|n⟩` (row-major, `dim × dim`) of the
/// propagator at lattice index `idx`.
///
/// Expanding the exponentials term by term cancels catastrophically once
/// `n|E|` or `n|F|` is large. Instead the entries come from the generating
/// function of the normal-ordered symbol,
/// `Σ G_mn x^m y^n/√(m!n!) = e^{A-iΦ} exp(E x² + (1+D) x y + F y²)`,
/// whose renormalized recurrences only involve `2E`, `2F` and `1+D`, all of
/// modulus at most one. Each entry depends on entries of lower total order
/// only, so the truncation does not feed back.
pub fn propagator_matrix<T: Real>(
    coeffs: &PropagatorCoeffs<T>,
    idx: usize,
    dim: usize,
) -> Vec<Complex<T>> {
    propagator_block(coeffs, idx, dim, dim)
}

/// Leading `rows x cols` block of [`propagator_matrix`], row-major. Column `n`
/// only depends on columns below it, so the block is exact as far as it goes.
/// Under strong squeezing rounding errors grow with the column index, which is
/// why callers only build the columns their input occupies.
pub fn propagator_block<T: Real>(
    coeffs: &PropagatorCoeffs<T>,
    idx: usize,
    rows: usize,
    cols: usize,
) -> Vec<Complex<T>> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut g = vec![zero; rows * cols];
    if rows == 0 || cols == 0 {
        return g;
    }
    let dim = rows.max(cols);
    let i = im_unit::<T>();
    let two = T::lit(2.0);
    let e2 = coeffs.e[idx] * two;
    let f2 = coeffs.f[idx] * two;
    let r = (-i * coeffs.theta[idx]).exp();
    let sqrt: Vec<T> = (0..=dim).map(|m| T::count(m).sqrt()).collect();
    g[0] = (coeffs.a[idx] - i * coeffs.phi[idx]).exp();
    for m in 0..rows {
        for n in 0..cols {
            if m == 0 && n == 0 {
                continue;
            }
            let at = |mm: usize, nn: usize| g[mm * cols + nn];
            let value = if m >= n {
                // Lower the row index: ∂_x brings down 2E x + r y.
                let mut v = zero;
                if m >= 2 {
                    v = v + e2 * at(m - 2, n) * (sqrt[m - 1] / sqrt[m]);
                }
                if n >= 1 {
                    v = v + r * at(m - 1, n - 1) * (sqrt[n] / sqrt[m]);
                }
                v
            } else {
                let mut v = zero;
                if n >= 2 {
                    v = v + f2 * at(m, n - 2) * (sqrt[n - 1] / sqrt[n]);
                }
                if m >= 1 {
                    v = v + r * at(m - 1, n - 1) * (sqrt[m] / sqrt[n]);
                }
                v
            };
            g[m * cols + n] = value;
        }
    }
    g
}

/// Applies the propagator at lattice index `idx` to number-basis coefficients
/// (output truncated to the same dimension). Input components whose combined
/// tail is below [`INPUT_TAIL_CUTOFF`] relative to the norm are dropped, and an
/// output norm exceeding the input norm is reported as an instability.
pub fn propagate_coefficients<T: Real>(
    coeffs: &PropagatorCoeffs<T>,
    idx: usize,
    c: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    let dim = c.len();
    let total: T = c.iter().map(|z| z.norm_sqr()).sum();
    let cutoff = total * T::lit(INPUT_TAIL_CUTOFF * INPUT_TAIL_CUTOFF);
    let mut cols = dim;
    let mut tail = T::zero();
    while cols > 0 {
        let next = tail + c[cols - 1].norm_sqr();
        if next > cutoff {
            break;
        }
        tail = next;
        cols -= 1;
    }
    let g = propagator_block(coeffs, idx, dim, cols);
    let out: Vec<Complex<T>> = g
        .chunks_exact(cols.max(1))
        .take(dim)
        .map(|row| {
            row.iter()
                .zip(c)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (u, v)| {
                    acc + u * v
                })
        })
        .collect();
    if cols == 0 {
        return Ok(vec![Complex::new(T::zero(), T::zero()); dim]);
    }
    let gain = out.iter().map(|z| z.norm_sqr()).sum::<T>() / (total - tail) - T::one();
    if !(gain <= T::lit(NORM_GAIN_LIMIT)) {
        return Err(Error::PropagatorInstability {
            gain: gain.as_f64(),
            n_fock: dim,
        });
    }
    Ok(out)
}

/// `U(t)ψ` in a basis of `n_fock` number states, with the default truncation check.
pub fn apply_propagator<T: Real>(
    coeffs: &PropagatorCoeffs<T>,
    t: T,
    psi: &Wavefunction1<T>,
    n_fock: usize,
) -> Result<Wavefunction1<T>> {
    let basis = FockBasis::with_frequency(*psi.grid(), n_fock, coeffs.reference)?;
    apply_with_basis(&basis, coeffs, t, psi, T::lit(TRUNCATION_TOL))
}

/// `U(t)ψ` in a prebuilt basis; fails if the projection loses more than `tol` of the norm.
pub fn apply_with_basis<T: Real>(
    basis: &FockBasis<T>,
    coeffs: &PropagatorCoeffs<T>,
    t: T,
    psi: &Wavefunction1<T>,
    tol: T,
) -> Result<Wavefunction1<T>> {
    if (basis.frequency() - coeffs.reference).mag() > T::lit(1e-12) * coeffs.reference {
        return Err(Error::InvalidParameter(format!(
            "basis frequency {} differs from the coefficients' reference {}",
            basis.frequency(),
            coeffs.reference
        )));
    }
    let idx = coeffs.index_of(t)?;
    let (c, deficit) = basis.project(psi)?;
    if deficit > tol {
        return Err(Error::Truncation {
            deficit: deficit.as_f64(),
            tolerance: tol.as_f64(),
            n_fock: basis.dim(),
        });
    }
    Ok(basis.synthesize(&propagate_coefficients(coeffs, idx, &c)?))
}

/// Result of [`apply_propagator_converged`].
#[derive(Clone, Debug)]
pub struct ConvergedState<T: Real> {
    pub state: Wavefunction1<T>,
    pub n_fock: usize,
    /// `1 - |⟨ψ_n|ψ_2n⟩|/(‖ψ_n‖‖ψ_2n‖)` for the last doubling.
    pub fidelity_change: T,
}

/// Doubles `n_fock` from `n_start` until successive results agree to
/// [`FOCK_CONVERGENCE_TOL`] and the input is captured within `tol`.
pub fn apply_propagator_converged<T: Real>(
    coeffs: &PropagatorCoeffs<T>,
    t: T,
    psi: &Wavefunction1<T>,
    n_start: usize,
    tol: T,
) -> Result<ConvergedState<T>> {
    let idx = coeffs.index_of(t)?;
    let grid = *psi.grid();
    let run = |n: usize| -> Result<(Wavefunction1<T>, T)> {
        let basis = FockBasis::with_frequency(grid, n, coeffs.reference)?;
        let (c, deficit) = basis.project(psi)?;
        Ok((
            basis.synthesize(&propagate_coefficients(coeffs, idx, &c)?),
            deficit,
        ))
    };
    let mut n = n_start.max(2);
    let (mut prev, mut deficit) = run(n)?;
    // Convergence estimate of the current basis; unknown until a larger one is tried.
    let mut change = T::one();
    loop {
        let next_n = 2 * n;
        let attempt = if next_n > MAX_N_FOCK {
            Err(Error::InvalidGrid(format!(
                "n_fock cap {MAX_N_FOCK} reached"
            )))
        } else {
            run(next_n)
        };
        let (next, next_deficit) = match attempt {
            Ok(v) => v,
            Err(Error::InvalidGrid(_)) => {
                return Err(Error::Truncation {
                    deficit: deficit.max(change).as_f64(),
                    tolerance: tol.as_f64(),
                    n_fock: n,
                });
            }
            Err(e) => return Err(e),
        };
        let overlap = prev.inner(&next)?.norm() / (prev.norm() * next.norm());
        change = (T::one() - overlap).max(T::zero());
        n = next_n;
        deficit = next_deficit;
        if change < T::lit(FOCK_CONVERGENCE_TOL) && deficit <= tol {
            return Ok(ConvergedState {
                state: next,
                n_fock: n,
                fidelity_change: change,
            });
        }
        prev = next;
    }
}

/// Center-of-mass path sampled on a uniform lattice starting at `t = 0`.
#[derive(Clone, Debug)]
pub struct PathSample<T> {
    times: Vec<T>,
    positions: Vec<T>,
    velocities: Vec<T>,
    dt: T,
}

impl<T: Real> PathSample<T> {
    pub fn new(dt: T, positions: Vec<T>, velocities: Vec<T>) -> Result<Self> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "path step must be positive, got {dt}"
            )));
        }
        if positions.len() < 2 || positions.len() != velocities.len() {
            return Err(Error::InvalidParameter(format!(
                "path needs matching positions and velocities (at least 2), got {} and {}",
                positions.len(),
                velocities.len()
            )));
        }
        if positions.iter().chain(&velocities).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "path contains non-finite values".into(),
            ));
        }
        let times = (0..positions.len()).map(|k| T::count(k) * dt).collect();
        Ok(Self {
            times,
            positions,
            velocities,
            dt,
        })
    }

    /// Samples `y(t)` and `ẏ(t)` at `t = 0, dt, …, n_steps·dt`.
    pub fn from_fn(
        dt: T,
        n_steps: usize,
        y: impl Fn(T) -> T,
        ydot: impl Fn(T) -> T,
    ) -> Result<Self> {
        let ts: Vec<T> = (0..=n_steps).map(|k| T::count(k) * dt).collect();
        Self::new(
            dt,
            ts.iter().map(|&t| y(t)).collect(),
            ts.iter().map(|&t| ydot(t)).collect(),
        )
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty path")
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn velocities(&self) -> &[T] {
        &self.velocities
    }

    /// `Y(t)` by cubic Hermite interpolation (clamped to the end cells).
    pub fn position(&self, t: T) -> T {
        let (k, s) = locate(t, self.dt, self.times.len() - 1);
        hermite(
            self.positions[k],
            self.positions[k + 1],
            self.velocities[k],
            self.velocities[k + 1],
            self.dt,
            s,
        )
    }

    pub fn same_lattice(&self, other: &Self) -> bool {
        self.times.len() == other.times.len()
            && (self.dt - other.dt).mag() <= T::lit(1e-12) * self.dt
    }

    /// First time the path reaches `x`, linearly interpolated between samples.
    pub fn crossing_time(&self, x: T) -> Option<T> {
        self.positions.windows(2).enumerate().find_map(|(k, w)| {
            let (a, b) = (w[0] - x, w[1] - x);
            if a == T::zero() {
                Some(self.times[k])
            } else if a * b < T::zero() {
                Some(self.times[k] + self.dt * a / (a - b))
            } else {
                None
            }
        })
    }

    /// The path that follows `self` up to `t_r` and then retraces it backwards:
    /// `Y(t) = Y_self(2t_r - t)` for `t > t_r`, continued as free motion before `t = 0`.
    pub fn reversed_after(&self, t_r: T) -> Result<Self> {
        if !(t_r >= T::zero() && t_r <= self.horizon()) {
            return Err(Error::InvalidParameter(format!(
                "reversal time {t_r} outside [0, {}]",
                self.horizon()
            )));
        }
        let (y0, v0) = (self.positions[0], self.velocities[0]);
        let velocity = |t: T| {
            let (k, s) = locate(t, self.dt, self.times.len() - 1);
            // Linear interpolation suffices for the Hermite slopes.
            self.velocities[k] * (T::one() - s) + self.velocities[k + 1] * s
        };
        let mut positions = Vec::with_capacity(self.times.len());
        let mut velocities = Vec::with_capacity(self.times.len());
        for (k, &t) in self.times.iter().enumerate() {
            if t <= t_r {
                positions.push(self.positions[k]);
                velocities.push(self.velocities[k]);
            } else {
                let back = T::lit(2.0) * t_r - t;
                if back >= T::zero() {
                    positions.push(self.position(back));
                    velocities.push(-velocity(back));
                } else {
                    positions.push(y0 + v0 * back);
                    velocities.push(-v0);
                }
            }
        }
        Self::new(self.dt, positions, velocities)
    }
}

/// Newtonian path in the center-of-mass potential `2V(Y)` (unit mass):
/// `Ÿ = -2V'(Y)`, integrated by velocity Verlet.
pub fn classical_path<T: Real>(
    v: &ExternalPotential<T>,
    y0: T,
    p0: T,
    dt: T,
    n_steps: usize,
) -> Result<PathSample<T>> {
    let two = T::lit(2.0);
    let force = |y: T| -> Result<T> { Ok(-two * v.derivative(y)?) };
    let mut y = y0;
    let mut vel = p0;
    let mut acc = force(y)?;
    let mut positions = Vec::with_capacity(n_steps + 1);
    let mut velocities = Vec::with_capacity(n_steps + 1);
    positions.push(y);
    velocities.push(vel);
    for _ in 0..n_steps {
        let v_half = vel + acc * dt / two;
        y = y + v_half * dt;
        acc = force(y)?;
        vel = v_half + acc * dt / two;
        positions.push(y);
        velocities.push(vel);
    }
    PathSample::new(dt, positions, velocities)
}

/// Coefficients for the internal oscillator driven along `path`, on the path's lattice.
pub fn driven_coefficients<T: Real>(
    path: &PathSample<T>,
    v: &ExternalPotential<T>,
    u: &HarmonicInternal<T>,
) -> Result<PropagatorCoeffs<T>> {
    let profile = DrivingProfile::from_path(path, v, u)?;
    propagator_coeffs(&profile, path.dt())
}

/// Influence functional of a pair of center-of-mass paths.
#[derive(Clone, Debug)]
pub struct InfluenceOverlap<T> {
    /// `e^{-2i∫(V(Y_A) - V(Y_B))}·⟨ψ_B(T)|ψ_A(T)⟩`.
    pub value: Complex<T>,
    /// `|⟨ψ_B(T)|ψ_A(T)⟩|`, the decoherence magnitude.
    pub magnitude: T,
    pub phase_factor: Complex<T>,
    /// Number states used for the two propagated states.
    pub n_fock: (usize, usize),
}

/// `∫₀ᵀ (V(Y_A) - V(Y_B)) dt` by Simpson's rule per lattice cell.
pub fn path_potential_difference<T: Real>(
    path_a: &PathSample<T>,
    path_b: &PathSample<T>,
    v: &ExternalPotential<T>,
) -> Result<T> {
    if !path_a.same_lattice(path_b) {
        return Err(Error::LatticeMismatch(
            "paths are sampled on different lattices".into(),
        ));
    }
    let h = path_a.dt();
    let diff = |t: T| v.value(path_a.position(t)) - v.value(path_b.position(t));
    let mut total = T::zero();
    for &t0 in &path_a.times()[..path_a.times().len() - 1] {
        total = total
            + (diff(t0) + T::lit(4.0) * diff(t0 + h / T::lit(2.0)) + diff(t0 + h)) * h
                / T::lit(6.0);
    }
    Ok(total)
}

/// Propagates `ψ_i` under the drive of each path through the Riccati pipeline
/// and returns the phase-weighted overlap of the two final internal states.
pub fn influence_overlap<T: Real>(
    psi_i: &Wavefunction1<T>,
    path_a: &PathSample<T>,
    path_b: &PathSample<T>,
    v: &ExternalPotential<T>,
    u: &HarmonicInternal<T>,
) -> Result<InfluenceOverlap<T>> {
    let phase_integral = path_potential_difference(path_a, path_b, v)?;
    let horizon = path_a.horizon();
    let tol = T::lit(TRUNCATION_TOL);
    let ca = driven_coefficients(path_a, v, u)?;
    let psi_a = apply_propagator_converged(&ca, horizon, psi_i, DEFAULT_N_FOCK, tol)?;
    let cb = driven_coefficients(path_b, v, u)?;
    let psi_b = apply_propagator_converged(&cb, horizon, psi_i, DEFAULT_N_FOCK, tol)?;
    let overlap = psi_b.state.inner(&psi_a.state)?;
    let phase_factor = cis(-T::lit(2.0) * phase_integral);
    Ok(InfluenceOverlap {
        value: phase_factor * overlap,
        magnitude: overlap.norm(),
        phase_factor,
        n_fock: (psi_a.n_fock, psi_b.n_fock),
    })
}

/// Closed-form `E(t)` for constant `w > 0` and reference frequency ν:
/// `E = -iβ sin(ω̃t)/(ω̃ cos(ω̃t) + iΩ sin(ω̃t))`, `ω̃ = √(Ω² - 4β²) = √w`.
pub fn constant_drive_e<T: Real>(w: T, nu: T, t: T) -> Complex<T> {
    let omega = (w / nu + nu) / T::lit(2.0);
    let beta = (omega - nu) / T::lit(2.0);
    let wt = w.sqrt();
    let (s, c) = (wt * t).sin_cos();
    cplx(T::zero(), -beta * s) / cplx(wt * c, omega * s)
}
