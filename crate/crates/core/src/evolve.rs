//! Symmetric (Strang) split-step spectral propagation in one and two dimensions.
//!
//! One step is `e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}` with the kinetic factor
//! applied in momentum space. Consecutive potential half-kicks are fused into
//! one full kick unless the state has to be observed in between; norms,
//! boundary masses and the stop test only need `|ψ|²`, which the potential
//! phase leaves untouched, so they are read off the unsynchronized state.

use log::warn;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{transpose, RowFft};
use crate::potentials::{ExternalPotential, HarmonicInternal};
use crate::qgrid::{Axis, Grid1, Space, Wavefunction1, Wavefunction2};
use crate::scalar::{cis, Real};

/// Probability allowed in the boundary band of any axis before a run aborts.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Cells with density below this fraction of the peak count as unoccupied when
/// checking the step size against the potential.
const OCCUPIED_FRACTION: f64 = 1e-10;

/// Width of the boundary band: `max(2, n/64)` lattice points per side.
pub fn boundary_band(n: usize) -> usize {
    (n / 64).max(2)
}

/// Stop once `t ≥ min_time` and the probability in `|Y| < half_width` has
/// dropped below `threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopCondition<T> {
    pub min_time: T,
    pub half_width: T,
    pub threshold: T,
}

impl<T: Real> StopCondition<T> {
    /// Packets launched from `±y0` with speed `p` have met at the origin and
    /// left the central region `|Y| < 5`.
    pub fn cleared(y0: T, p: T) -> Self {
        Self {
            min_time: y0 / p.mag(),
            half_width: T::lit(5.0),
            threshold: T::lit(1e-4),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionPlan<T> {
    /// Step; negative values run the evolution backwards.
    pub dt: T,
    /// Number of steps, or the step cap when a stop condition is set.
    pub n_steps: usize,
    /// Snapshot stride; 0 records only the initial and final states.
    pub record_every: usize,
    pub stop: Option<StopCondition<T>>,
    /// Keep full states in the snapshots (marginals are always kept).
    pub capture_states: bool,
    pub boundary_tol: T,
}

impl<T: Real> EvolutionPlan<T> {
    pub fn new(dt: T, n_steps: usize) -> Result<Self> {
        if !dt.is_finite() || dt == T::zero() {
            return Err(Error::InvalidParameter(format!(
                "time step must be finite and non-zero, got {dt}"
            )));
        }
        Ok(Self {
            dt,
            n_steps,
            record_every: 0,
            stop: None,
            capture_states: false,
            boundary_tol: T::lit(BOUNDARY_TOL),
        })
    }

    /// Plan covering `duration` with steps of (at most) `dt`.
    pub fn for_duration(dt: T, duration: T) -> Result<Self> {
        let n = (duration / dt).mag().round().to_usize().unwrap_or(0);
        Self::new(dt, n)
    }

    pub fn record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    pub fn stop_when(mut self, stop: StopCondition<T>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn capture_states(mut self, on: bool) -> Self {
        self.capture_states = on;
        self
    }

    pub fn boundary_tol(mut self, tol: T) -> Self {
        self.boundary_tol = tol;
        self
    }

    fn wants_snapshot(&self, step: usize) -> bool {
        self.record_every > 0 && step.is_multiple_of(self.record_every)
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot<T: Real, W> {
    pub time: T,
    pub norm: T,
    pub energy: T,
    /// Position-space marginal densities, one per axis (`[com, internal]` in 2D).
    pub marginals: Vec<Vec<T>>,
    pub state: Option<W>,
}

#[derive(Clone, Debug)]
pub struct Diagnostics<T> {
    pub steps: usize,
    pub max_norm_drift_per_step: T,
    pub norm_drift: T,
    pub initial_energy: T,
    pub final_energy: T,
    pub max_boundary_mass: T,
    pub warnings: Vec<String>,
}

impl<T: Real> Diagnostics<T> {
    fn new(initial_energy: T, warnings: Vec<String>) -> Self {
        Self {
            steps: 0,
            max_norm_drift_per_step: T::zero(),
            norm_drift: T::zero(),
            initial_energy,
            final_energy: initial_energy,
            max_boundary_mass: T::zero(),
            warnings,
        }
    }

    /// `|E_final - E_initial| / |E_initial|` (absolute drift when `E_initial = 0`).
    pub fn relative_energy_drift(&self) -> T {
        let d = (self.final_energy - self.initial_energy).mag();
        if self.initial_energy == T::zero() {
            d
        } else {
            d / self.initial_energy.mag()
        }
    }

    fn track_norm(&mut self, previous: T, current: T, initial: T) {
        self.max_norm_drift_per_step = self.max_norm_drift_per_step.max((current - previous).mag());
        self.norm_drift = self.norm_drift.max((current - initial).mag());
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real, W> {
    /// Times of the snapshots, in step order (decreasing when `dt < 0`).
    pub times: Vec<T>,
    pub snapshots: Vec<Snapshot<T, W>>,
    pub final_state: W,
    pub final_time: T,
    pub diagnostics: Diagnostics<T>,
}

/// Grid values of an external potential (cell averages for the square well).
pub fn sample_potential<T: Real>(grid: &Grid1<T>, v: &ExternalPotential<T>) -> Vec<T> {
    let h = grid.dx();
    grid.positions()
        .into_iter()
        .map(|x| v.grid_value(x, h))
        .collect()
}

/// Exact composite potential `V(Y+y) + V(Y-y) + U(y)` on the two-axis lattice,
/// row-major with the internal index contiguous.
pub fn composite_grid<T: Real>(
    com: &Grid1<T>,
    internal: &Grid1<T>,
    v: &ExternalPotential<T>,
    u: &HarmonicInternal<T>,
) -> Vec<T> {
    let h = com.dx();
    let ys = internal.positions();
    let us: Vec<T> = ys.iter().map(|&y| u.value(y)).collect();
    let mut out = Vec::with_capacity(com.n() * internal.n());
    for big_y in com.positions() {
        out.extend(
            ys.iter()
                .zip(&us)
                .map(|(&y, &uy)| v.grid_value(big_y + y, h) + v.grid_value(big_y - y, h) + uy),
        );
    }
    out
}

fn require_position_1d<T: Real>(psi: &Wavefunction1<T>) -> Result<()> {
    if psi.space() != Space::Position {
        return Err(Error::Representation(
            "evolution and energies take position-space states".into(),
        ));
    }
    Ok(())
}

fn require_position_2d<T: Real>(psi: &Wavefunction2<T>) -> Result<()> {
    if psi.space(Axis::Com) != Space::Position || psi.space(Axis::Internal) != Space::Position {
        return Err(Error::Representation(
            "evolution and energies take position-space states".into(),
        ));
    }
    Ok(())
}

fn require_normalized<T: Real>(norm_sq: T) -> Result<()> {
    if (norm_sq - T::one()).mag() > T::lit(1e-10) {
        return Err(Error::InvalidParameter(format!(
            "initial state must be normalized, has norm² = {norm_sq}"
        )));
    }
    Ok(())
}

/// `⟨T⟩ + ⟨V⟩` for a 1D state and grid potential values, divided by `‖ψ‖²`.
pub fn energy_1d<T: Real>(psi: &Wavefunction1<T>, potential: &[T]) -> Result<T> {
    require_position_1d(psi)?;
    if potential.len() != psi.grid().n() {
        return Err(Error::GridMismatch(format!(
            "{} potential values for a {}-point grid",
            potential.len(),
            psi.grid().n()
        )));
    }
    let grid = psi.grid();
    let pot: T = psi
        .amplitudes()
        .iter()
        .zip(potential)
        .map(|(a, &v)| a.norm_sqr() * v)
        .sum::<T>()
        * grid.dx();
    let phi = psi.to_momentum()?;
    let kin: T = phi
        .amplitudes()
        .iter()
        .zip(grid.momenta())
        .map(|(a, p)| a.norm_sqr() * p * p)
        .sum::<T>()
        * grid.dp()
        / T::lit(2.0);
    Ok((kin + pot) / psi.norm_sq())
}

/// `⟨p_Y²/2 + p_y²/2⟩ + ⟨V(Y+y) + V(Y-y) + U(y)⟩` with the lattice potential used by [`evolve_2d`].
pub fn energy_2d<T: Real>(
    psi: &Wavefunction2<T>,
    v: &ExternalPotential<T>,
    u: &HarmonicInternal<T>,
) -> Result<T> {
    let pot = composite_grid(psi.com_grid(), psi.internal_grid(), v, u);
    energy_2d_with(psi, &pot)
}

fn energy_2d_with<T: Real>(psi: &Wavefunction2<T>, pot: &[T]) -> Result<T> {
    require_position_2d(psi)?;
    let com = *psi.com_grid();
    let int = *psi.internal_grid();
    let cell = com.dx() * int.dx();
    let v: T = psi
        .amplitudes()
        .iter()
        .zip(pot)
        .map(|(a, &v)| a.norm_sqr() * v)
        .sum::<T>()
        * cell;
    let k = psi.to_momentum(Axis::Com)?.to_momentum(Axis::Internal)?;
    let p_com = com.momenta();
    let p_int = int.momenta();
    let p_int_sq: Vec<T> = p_int.iter().map(|&p| p * p).collect();
    let m = int.n();
    let mut kin = T::zero();
    for (i, &pc) in p_com.iter().enumerate() {
        let row = &k.amplitudes()[i * m..(i + 1) * m];
        let pc2 = pc * pc;
        kin = kin
            + row
                .iter()
                .zip(&p_int_sq)
                .map(|(a, &pi2)| a.norm_sqr() * (pc2 + pi2))
                .sum::<T>();
    }
    kin = kin * com.dp() * int.dp() / T::lit(2.0);
    Ok((kin + v) / psi.norm_sq())
}

/// `dt·max|V|` over the occupied region above 0.1, or a kinetic phase
/// `p_max²dt/2` outside the principal branch.
fn step_size_warnings<T: Real>(dt: T, max_v: T, p_max: &[(Axis, T)]) -> Vec<String> {
    let mut out = Vec::new();
    let dt = dt.mag();
    if dt * max_v > T::lit(0.1) {
        out.push(format!(
            "dt·max|V| = {} over the occupied region exceeds 0.1",
            dt * max_v
        ));
    }
    for &(axis, p) in p_max {
        let phase = p * p * dt / T::lit(2.0);
        if phase > T::PI() {
            out.push(format!(
                "kinetic phase per step {phase} at the {axis:?} p_max exceeds π"
            ));
        }
    }
    for w in &out {
        warn!("{w}");
    }
    out
}

fn mul_pointwise<T: Real>(data: &mut [Complex<T>], factors: &[Complex<T>]) {
    data.iter_mut().zip(factors).for_each(|(a, f)| *a = *a * f);
}

fn mul_rows<T: Real>(data: &mut [Complex<T>], factors: &[Complex<T>]) {
    for row in data.chunks_exact_mut(factors.len()) {
        mul_pointwise(row, factors);
    }
}

fn kinetic_factors<T: Real>(grid: &Grid1<T>, dt: T) -> Vec<Complex<T>> {
    // The 1/n of the unnormalized inverse DFT is folded in here.
    let inv_n = T::one() / T::count(grid.n());
    grid.momenta()
        .into_iter()
        .map(|p| cis(-p * p * dt / T::lit(2.0)) * inv_n)
        .collect()
}

fn phases<T: Real>(values: &[T], scale: T) -> Vec<Complex<T>> {
    values.iter().map(|&v| cis(-v * scale)).collect()
}

fn sum_sq<T: Real>(data: &[Complex<T>]) -> T {
    data.iter().map(|a| a.norm_sqr()).sum()
}

enum Drive<'a, T> {
    Static(&'a [T]),
    /// `w(t)·y²/2`, `w` evaluated at the midpoint of each step.
    Parametric(&'a dyn Fn(T) -> T),
}

/// Evolves a 1D state under a time-independent lattice potential.
pub fn evolve_1d_static<T: Real>(
    psi0: &Wavefunction1<T>,
    potential: &[T],
    plan: &EvolutionPlan<T>,
) -> Result<Trajectory<T, Wavefunction1<T>>> {
    if potential.len() != psi0.grid().n() {
        return Err(Error::GridMismatch(format!(
            "{} potential values for a {}-point grid",
            potential.len(),
            psi0.grid().n()
        )));
    }
    run_1d(psi0, Drive::Static(potential), plan)
}

/// Evolves a 1D state under `p²/2 + w(t)·y²/2`.
pub fn evolve_1d_parametric<T: Real>(
    psi0: &Wavefunction1<T>,
    w: &dyn Fn(T) -> T,
    plan: &EvolutionPlan<T>,
) -> Result<Trajectory<T, Wavefunction1<T>>> {
    run_1d(psi0, Drive::Parametric(w), plan)
}

fn run_1d<T: Real>(
    psi0: &Wavefunction1<T>,
    drive: Drive<'_, T>,
    plan: &EvolutionPlan<T>,
) -> Result<Trajectory<T, Wavefunction1<T>>> {
    require_position_1d(psi0)?;
    require_normalized(psi0.norm_sq())?;
    let grid = *psi0.grid();
    let n = grid.n();
    let dx = grid.dx();
    let dt = plan.dt;
    let half_dt = dt / T::lit(2.0);
    let xs = grid.positions();
    let x_sq_half: Vec<T> = xs.iter().map(|&x| x * x / T::lit(2.0)).collect();
    let band = boundary_band(n);

    let potential_at = |t: T| -> Vec<T> {
        match &drive {
            Drive::Static(v) => v.to_vec(),
            Drive::Parametric(w) => {
                let wt = w(t);
                x_sq_half.iter().map(|&q| wt * q).collect()
            }
        }
    };

    let warnings = {
        let v0 = potential_at(T::zero());
        let rho = psi0.density();
        let peak = rho.iter().copied().fold(T::zero(), T::max);
        let floor = peak * T::lit(OCCUPIED_FRACTION);
        let max_v = rho
            .iter()
            .zip(&v0)
            .filter(|(&r, _)| r > floor)
            .map(|(_, v)| v.mag())
            .fold(T::zero(), T::max);
        step_size_warnings(dt, max_v, &[(Axis::Internal, grid.p_max())])
    };

    let energy_of = |psi: &Wavefunction1<T>, t: T| energy_1d(psi, &potential_at(t));
    let mut diag = Diagnostics::new(energy_of(psi0, T::zero())?, warnings);

    let mut fft = RowFft::new(n);
    let kin = kinetic_factors(&grid, dt);
    let (static_half, static_full) = match &drive {
        Drive::Static(v) => (phases(v, half_dt), phases(v, dt)),
        Drive::Parametric(_) => (Vec::new(), Vec::new()),
    };
    let driven_half = |t_mid: T| -> Vec<Complex<T>> {
        match &drive {
            Drive::Parametric(w) => {
                let wt = w(t_mid);
                x_sq_half.iter().map(|&q| cis(-wt * q * half_dt)).collect()
            }
            Drive::Static(_) => unreachable!(),
        }
    };
    let is_static = matches!(drive, Drive::Static(_));

    let snapshot = |psi: Wavefunction1<T>, t: T| -> Result<Snapshot<T, Wavefunction1<T>>> {
        Ok(Snapshot {
            time: t,
            norm: psi.norm(),
            energy: energy_of(&psi, t)?,
            marginals: vec![psi.density().iter().map(|&r| r * dx).collect()],
            state: plan.capture_states.then_some(psi),
        })
    };

    let mut data = psi0.amplitudes().to_vec();
    let initial_norm = psi0.norm_sq();
    let mut prev_norm = initial_norm;
    let mut times = vec![T::zero()];
    let mut snapshots = vec![snapshot(psi0.clone(), T::zero())?];
    let mut pending = false;
    let mut t = T::zero();
    let mut step = 0;
    let mut stopped = false;
    while step < plan.n_steps {
        let t_mid = t + half_dt;
        let mut driven = Vec::new();
        if is_static {
            mul_pointwise(&mut data, if pending { &static_full } else { &static_half });
        } else {
            driven = driven_half(t_mid);
            mul_pointwise(&mut data, &driven);
        }
        fft.forward(&mut data);
        mul_pointwise(&mut data, &kin);
        fft.inverse(&mut data);
        step += 1;
        t = T::count(step) * dt;
        pending = true;

        let norm = sum_sq(&data) * dx;
        diag.track_norm(prev_norm, norm, initial_norm);
        prev_norm = norm;
        let edge = (sum_sq(&data[..band]) + sum_sq(&data[n - band..])) * dx;
        diag.max_boundary_mass = diag.max_boundary_mass.max(edge);
        if edge > plan.boundary_tol {
            return Err(Error::BoundaryLeak {
                axis: "1D".into(),
                time: t.as_f64(),
                mass: edge.as_f64(),
                tolerance: plan.boundary_tol.as_f64(),
            });
        }
        stopped = plan.stop.is_some_and(|s| {
            t.mag() >= s.min_time && {
                let inside: T = xs
                    .iter()
                    .zip(&data)
                    .filter(|(&x, _)| x.mag() < s.half_width)
                    .map(|(_, a)| a.norm_sqr())
                    .sum();
                inside * dx < s.threshold
            }
        });
        let last = step == plan.n_steps || stopped;
        if is_static {
            if plan.wants_snapshot(step) || last {
                mul_pointwise(&mut data, &static_half);
                pending = false;
            }
        } else {
            mul_pointwise(&mut data, &driven);
            pending = false;
        }
        if plan.wants_snapshot(step) && !last {
            let psi = Wavefunction1::new(grid, data.clone())?;
            snapshots.push(snapshot(psi, t)?);
            times.push(t);
        }
        if stopped {
            break;
        }
    }
    if plan.stop.is_some() && !stopped {
        return Err(Error::StopNotReached(t.as_f64()));
    }
    debug_assert!(!pending);
    let final_state = Wavefunction1::new(grid, data)?;
    let last = snapshot(final_state.clone(), t)?;
    diag.steps = step;
    diag.final_energy = last.energy;
    if step > 0 {
        snapshots.push(last);
        times.push(t);
    }
    Ok(Trajectory {
        times,
        snapshots,
        final_state,
        final_time: t,
        diagnostics: diag,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    /// `[com][internal]`, the layout of [`Wavefunction2`].
    ComMajor,
    /// `[internal][com]`.
    InternalMajor,
}

struct Stepper2<T: Real> {
    n: usize,
    m: usize,
    fft_com: RowFft<T>,
    fft_int: RowFft<T>,
    kin_com: Vec<Complex<T>>,
    kin_int: Vec<Complex<T>>,
    half: [Vec<Complex<T>>; 2],
    full: [Vec<Complex<T>>; 2],
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Stepper2<T> {
    fn new(com: &Grid1<T>, int: &Grid1<T>, pot: &[T], dt: T) -> Self {
        let (n, m) = (com.n(), int.n());
        let mut pot_t = vec![T::zero(); n * m];
        transpose(pot, &mut pot_t, n, m);
        let half_dt = dt / T::lit(2.0);
        Self {
            n,
            m,
            fft_com: RowFft::new(n),
            fft_int: RowFft::new(m),
            kin_com: kinetic_factors(com, dt),
            kin_int: kinetic_factors(int, dt),
            half: [phases(pot, half_dt), phases(&pot_t, half_dt)],
            full: [phases(pot, dt), phases(&pot_t, dt)],
            scratch: vec![Complex::new(T::zero(), T::zero()); n * m],
        }
    }

    fn idx(layout: Layout) -> usize {
        match layout {
            Layout::ComMajor => 0,
            Layout::InternalMajor => 1,
        }
    }

    fn kick(&self, data: &mut [Complex<T>], layout: Layout, full: bool) {
        let f = if full { &self.full } else { &self.half };
        mul_pointwise(data, &f[Self::idx(layout)]);
    }

    fn drift_internal(&mut self, data: &mut [Complex<T>]) {
        self.fft_int.forward(data);
        mul_rows(data, &self.kin_int);
        self.fft_int.inverse(data);
    }

    fn drift_com(&mut self, data: &mut [Complex<T>]) {
        self.fft_com.forward(data);
        mul_rows(data, &self.kin_com);
        self.fft_com.inverse(data);
    }

    /// Full kinetic step on both axes with a single transpose; returns the new layout.
    fn drift(&mut self, data: &mut Vec<Complex<T>>, layout: Layout) -> Layout {
        let (n, m) = (self.n, self.m);
        match layout {
            Layout::ComMajor => {
                self.drift_internal(data);
                transpose(data, &mut self.scratch, n, m);
                std::mem::swap(data, &mut self.scratch);
                self.drift_com(data);
                Layout::InternalMajor
            }
            Layout::InternalMajor => {
                self.drift_com(data);
                transpose(data, &mut self.scratch, m, n);
                std::mem::swap(data, &mut self.scratch);
                self.drift_internal(data);
                Layout::ComMajor
            }
        }
    }

    fn com_major(&self, data: &[Complex<T>], layout: Layout) -> Vec<Complex<T>> {
        match layout {
            Layout::ComMajor => data.to_vec(),
            Layout::InternalMajor => {
                let mut out = vec![Complex::new(T::zero(), T::zero()); data.len()];
                transpose(data, &mut out, self.m, self.n);
                out
            }
        }
    }

    /// Un-weighted `Σ|ψ|²` over the first and last `band` lines of each axis.
    fn band_sums(&self, data: &[Complex<T>], layout: Layout, band: (usize, usize)) -> (T, T) {
        let (n, m) = (self.n, self.m);
        let (bc, bi) = band;
        // `outer` lines of length `inner`.
        let lines = |outer: usize, inner: usize, b_outer: usize, b_inner: usize| {
            let mut s_outer = T::zero();
            let mut s_inner = T::zero();
            for o in 0..outer {
                let line = &data[o * inner..(o + 1) * inner];
                if o < b_outer || o >= outer - b_outer {
                    s_outer = s_outer + sum_sq(line);
                }
                s_inner = s_inner + sum_sq(&line[..b_inner]) + sum_sq(&line[inner - b_inner..]);
            }
            (s_outer, s_inner)
        };
        match layout {
            Layout::ComMajor => lines(n, m, bc, bi),
            Layout::InternalMajor => {
                let (s_int, s_com) = lines(m, n, bi, bc);
                (s_com, s_int)
            }
        }
    }

    /// Un-weighted `Σ|ψ|²` over center-of-mass lines in `rows`.
    fn com_window_sum(&self, data: &[Complex<T>], layout: Layout, rows: &[usize]) -> T {
        let (n, m) = (self.n, self.m);
        match layout {
            Layout::ComMajor => rows
                .iter()
                .map(|&i| sum_sq(&data[i * m..(i + 1) * m]))
                .sum(),
            Layout::InternalMajor => (0..m)
                .map(|j| rows.iter().map(|&i| data[j * n + i].norm_sqr()).sum::<T>())
                .sum(),
        }
    }
}

/// Minimum number of internal lattice points across [`internal_width`].
pub const MIN_POINTS_PER_WIDTH: f64 = 16.0;

/// Width of the `±3σ` band of the internal ground state, `σ² = 1/ω`.
pub fn internal_width<T: Real>(u: &HarmonicInternal<T>) -> T {
    T::lit(6.0) / u.omega().sqrt()
}

/// Evolves the joint state under `p_Y²/2 + p_y²/2 + V(Y+y) + V(Y-y) + U(y)`.
///
/// Requires a normalized position-space state and an internal grid with at
/// least [`MIN_POINTS_PER_WIDTH`] points across [`internal_width`].
pub fn evolve_2d<T: Real>(
    psi0: &Wavefunction2<T>,
    v: &ExternalPotential<T>,
    u: &HarmonicInternal<T>,
    plan: &EvolutionPlan<T>,
) -> Result<Trajectory<T, Wavefunction2<T>>> {
    require_position_2d(psi0)?;
    require_normalized(psi0.norm_sq())?;
    let com = *psi0.com_grid();
    let int = *psi0.internal_grid();
    let points_per_width = internal_width(u) / int.dx();
    if points_per_width < T::lit(MIN_POINTS_PER_WIDTH) {
        return Err(Error::InvalidGrid(format!(
            "internal grid resolves the oscillator width with {points_per_width} points; need at least 16"
        )));
    }
    let (n, m) = (com.n(), int.n());
    let cell = com.dx() * int.dx();
    let dt = plan.dt;
    let pot = composite_grid(&com, &int, v, u);

    let warnings = {
        let rho: Vec<T> = psi0.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        let peak = rho.iter().copied().fold(T::zero(), T::max);
        let floor = peak * T::lit(OCCUPIED_FRACTION);
        let max_v = rho
            .iter()
            .zip(&pot)
            .filter(|(&r, _)| r > floor)
            .map(|(_, v)| v.mag())
            .fold(T::zero(), T::max);
        step_size_warnings(
            dt,
            max_v,
            &[(Axis::Com, com.p_max()), (Axis::Internal, int.p_max())],
        )
    };
    let mut diag = Diagnostics::new(energy_2d_with(psi0, &pot)?, warnings);

    let mut stepper = Stepper2::new(&com, &int, &pot, dt);
    let band = (boundary_band(n), boundary_band(m));
    let window: Vec<usize> = match plan.stop {
        Some(s) => (0..n).filter(|&i| com.x(i).mag() < s.half_width).collect(),
        None => Vec::new(),
    };

    let snapshot = |psi: Wavefunction2<T>, t: T| -> Result<Snapshot<T, Wavefunction2<T>>> {
        Ok(Snapshot {
            time: t,
            norm: psi.norm(),
            energy: energy_2d_with(&psi, &pot)?,
            marginals: vec![psi.marginal(Axis::Com), psi.marginal(Axis::Internal)],
            state: plan.capture_states.then_some(psi),
        })
    };

    let mut data = psi0.amplitudes().to_vec();
    let mut layout = Layout::ComMajor;
    let initial_norm = psi0.norm_sq();
    let mut prev_norm = initial_norm;
    let mut times = vec![T::zero()];
    let mut snapshots = vec![snapshot(psi0.clone(), T::zero())?];
    let mut pending = false;
    let mut t = T::zero();
    let mut step = 0;
    let mut stopped = false;
    while step < plan.n_steps {
        stepper.kick(&mut data, layout, pending);
        layout = stepper.drift(&mut data, layout);
        step += 1;
        t = T::count(step) * dt;
        pending = true;

        let norm = sum_sq(&data) * cell;
        diag.track_norm(prev_norm, norm, initial_norm);
        prev_norm = norm;
        let (edge_com, edge_int) = stepper.band_sums(&data, layout, band);
        let (edge_com, edge_int) = (edge_com * cell, edge_int * cell);
        diag.max_boundary_mass = diag.max_boundary_mass.max(edge_com).max(edge_int);
        for (axis, mass) in [("center-of-mass", edge_com), ("internal", edge_int)] {
            if mass > plan.boundary_tol {
                return Err(Error::BoundaryLeak {
                    axis: axis.into(),
                    time: t.as_f64(),
                    mass: mass.as_f64(),
                    tolerance: plan.boundary_tol.as_f64(),
                });
            }
        }
        if let Some(s) = plan.stop {
            if t.mag() >= s.min_time
                && stepper.com_window_sum(&data, layout, &window) * cell < s.threshold
            {
                stopped = true;
            }
        }
        let last = step == plan.n_steps || stopped;
        if plan.wants_snapshot(step) || last {
            stepper.kick(&mut data, layout, false);
            pending = false;
        }
        if plan.wants_snapshot(step) && !last {
            let psi = Wavefunction2::new(com, int, stepper.com_major(&data, layout))?;
            snapshots.push(snapshot(psi, t)?);
            times.push(t);
        }
        if stopped {
            break;
        }
    }
    if pending {
        stepper.kick(&mut data, layout, false);
    }
    if plan.stop.is_some() && !stopped {
        return Err(Error::StopNotReached(t.as_f64()));
    }
    let final_state = Wavefunction2::new(com, int, stepper.com_major(&data, layout))?;
    let last = snapshot(final_state.clone(), t)?;
    diag.steps = step;
    diag.final_energy = last.energy;
    if step > 0 {
        snapshots.push(last);
        times.push(t);
    }
    Ok(Trajectory {
        times,
        snapshots,
        final_state,
        final_time: t,
        diagnostics: diag,
    })
}
