//! Orchestration of the numerical studies: two-branch scattering runs, the
//! `ξ₀` scan, compositeness heatmaps, the Riccati-vs-grid battery and the
//! influence-overlap series along classical paths.
//!
//! Everything here is `f64`; the configuration deserializes from any serde
//! format with every field defaulted, so an empty document is a valid run.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{evolve_1d_parametric, evolve_2d, EvolutionPlan, StopCondition, BOUNDARY_TOL};
use crate::observables::{
    compositeness, impurity, leftward_probability, optimize_theta, partial_trace_internal,
    q_profile, QMode,
};
use crate::parametric::{
    apply_propagator, apply_propagator_converged, classical_path, driven_coefficients,
    DrivingProfile, PathSample, PropagatorCoeffs, TRUNCATION_TOL,
};
use crate::potentials::{
    ExternalPotential, HarmonicInternal, QuadraticExternal, SmoothedWell, SquareWell,
};
use crate::qgrid::{make_gaussian_1d, Grid1, Wavefunction1, Wavefunction2};
use crate::scalar::cis;

/// Version tag written into every CSV header comment.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Largest acceptable per-step norm drift of a valid run.
pub const NORM_DRIFT_PER_STEP_TOL: f64 = 1e-12;
/// Largest acceptable relative energy drift of a valid run.
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Square,
    Smoothed,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    /// Well depth times the constituent mass (unit mass, so the depth itself).
    pub mv0: f64,
    pub width: f64,
    /// Logistic edge scale of the smoothed well.
    pub edge_scale: f64,
    /// `c0 + c1 x + c2 x²` for the quadratic potential.
    pub quadratic: [f64; 3],
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Square,
            mv0: 2.64,
            width: 0.5,
            edge_scale: 0.05,
            quadratic: [0.0, 0.0, 0.0],
        }
    }
}

impl PotentialConfig {
    pub fn build(&self) -> Result<ExternalPotential<f64>> {
        Ok(match self.kind {
            PotentialKind::Square => SquareWell::new(self.mv0, self.width)?.into(),
            PotentialKind::Smoothed => {
                SmoothedWell::new(self.mv0, self.width, self.edge_scale)?.into()
            }
            PotentialKind::Quadratic => {
                let [c0, c1, c2] = self.quadratic;
                QuadraticExternal::new(c0, c1, c2)?.into()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Launch distance: the evolved branch starts at `-y0` moving right.
    pub y0: f64,
    /// `σ_Y²` of the center-of-mass packet `exp(-(Y-Y₀)²/(2σ_Y²))`.
    pub com_width_sq: f64,
    pub p: f64,
    /// Displacement of the internal Gaussian.
    pub xi0: f64,
    pub internal_width_sq: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            y0: 20.0,
            com_width_sq: 25.0,
            p: 1.0,
            xi0: 0.0,
            internal_width_sq: 1.0 / 9.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub com_half_width: f64,
    pub com_points: usize,
    pub internal_half_width: f64,
    pub internal_points: usize,
    pub dt: f64,
    /// Cap on the evolution time; the stop condition normally ends the run earlier.
    pub max_time: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            com_half_width: 240.0,
            com_points: 4096,
            internal_half_width: 3.0,
            internal_points: 64,
            dt: 0.005,
            max_time: 200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub xi0_min: f64,
    pub xi0_max: f64,
    pub xi0_points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            xi0_min: 0.0,
            xi0_max: 1.0,
            xi0_points: 21,
        }
    }
}

/// Which width the wide-well heatmap narrows to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthAxis {
    Com,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositenessConfig {
    pub y0_min: f64,
    pub y0_max: f64,
    pub y0_points: usize,
    pub xi_min: f64,
    pub xi_max: f64,
    pub xi_points: usize,
    pub mode: QMode,
    /// Well width of the wide-well variant.
    pub wide_width: f64,
    pub wide_y0_half_range: f64,
    /// Width set to 1 in the wide-well variant.
    pub wide_narrowed: WidthAxis,
}

impl Default for CompositenessConfig {
    fn default() -> Self {
        Self {
            y0_min: -15.0,
            y0_max: 15.0,
            y0_points: 61,
            xi_min: -1.0,
            xi_max: 1.0,
            xi_points: 41,
            mode: QMode::Exact,
            wide_width: 20.0,
            wide_y0_half_range: 20.0,
            wide_narrowed: WidthAxis::Com,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "compdec-out".into(),
        }
    }
}

/// Full run configuration; the defaults are the standard interference setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialConfig,
    /// Spring constant `k` of `U(y) = 2k y²`.
    pub spring_k: f64,
    pub initial: InitialConfig,
    pub grid: GridConfig,
    pub scan: ScanConfig,
    pub compositeness: CompositenessConfig,
    pub output: OutputConfig,
    /// Seed for sampled validation batteries.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: PotentialConfig::default(),
            spring_k: 20.25,
            initial: InitialConfig::default(),
            grid: GridConfig::default(),
            scan: ScanConfig::default(),
            compositeness: CompositenessConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {x}"
        )));
    }
    Ok(())
}

fn evenly_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.potential.build()?;
        self.spring()?;
        let i = &self.initial;
        positive("initial.y0", i.y0)?;
        positive("initial.com_width_sq", i.com_width_sq)?;
        positive("initial.p", i.p)?;
        positive("initial.internal_width_sq", i.internal_width_sq)?;
        if !i.xi0.is_finite() {
            return Err(Error::InvalidParameter("initial.xi0 must be finite".into()));
        }
        let g = &self.grid;
        positive("grid.dt", g.dt)?;
        positive("grid.max_time", g.max_time)?;
        self.com_grid()?;
        self.internal_grid()?;
        let s = &self.scan;
        if s.xi0_points == 0 || !(s.xi0_max >= s.xi0_min) {
            return Err(Error::InvalidParameter(
                "scan needs xi0_points > 0 and xi0_max >= xi0_min".into(),
            ));
        }
        let reach = s.xi0_min.abs().max(s.xi0_max.abs());
        if reach >= g.internal_half_width {
            return Err(Error::InvalidParameter(format!(
                "xi0 range reaches {reach}, outside the internal grid half-width {}",
                g.internal_half_width
            )));
        }
        let c = &self.compositeness;
        if c.y0_points == 0 || c.xi_points == 0 {
            return Err(Error::InvalidParameter(
                "heatmap axes need at least one point".into(),
            ));
        }
        positive("compositeness.wide_width", c.wide_width)?;
        positive("compositeness.wide_y0_half_range", c.wide_y0_half_range)?;
        Ok(())
    }

    pub fn external(&self) -> Result<ExternalPotential<f64>> {
        self.potential.build()
    }

    pub fn spring(&self) -> Result<HarmonicInternal<f64>> {
        HarmonicInternal::new(self.spring_k)
    }

    pub fn com_grid(&self) -> Result<Grid1<f64>> {
        Grid1::symmetric(self.grid.com_half_width, self.grid.com_points)
    }

    pub fn internal_grid(&self) -> Result<Grid1<f64>> {
        Grid1::symmetric(self.grid.internal_half_width, self.grid.internal_points)
    }

    /// Internal Gaussian displaced by `xi`.
    pub fn internal_state(&self, xi: f64) -> Result<Wavefunction1<f64>> {
        make_gaussian_1d(
            self.internal_grid()?,
            xi,
            self.initial.internal_width_sq,
            0.0,
            0.0,
        )
    }

    /// Center-of-mass packet at `center` with momentum `p`.
    pub fn com_state(&self, center: f64, p: f64) -> Result<Wavefunction1<f64>> {
        make_gaussian_1d(self.com_grid()?, center, self.initial.com_width_sq, p, 0.0)
    }

    pub fn xi0_values(&self) -> Vec<f64> {
        evenly_spaced(self.scan.xi0_min, self.scan.xi0_max, self.scan.xi0_points)
    }

    /// Same configuration with a different internal displacement.
    pub fn with_xi0(&self, xi0: f64) -> Self {
        let mut c = self.clone();
        c.initial.xi0 = xi0;
        c
    }

    /// Wide-well heatmap variant: well width `wide_width`, one of the two
    /// packet widths set to 1 and the `Y₀` range widened to cover both edges.
    pub fn wide_well_variant(&self) -> Self {
        let mut c = self.clone();
        c.potential.width = self.compositeness.wide_width;
        match self.compositeness.wide_narrowed {
            WidthAxis::Com => c.initial.com_width_sq = 1.0,
            WidthAxis::Internal => c.initial.internal_width_sq = 1.0,
        }
        let r = self.compositeness.wide_y0_half_range;
        c.compositeness.y0_min = -r;
        c.compositeness.y0_max = r;
        c.compositeness.y0_points = (4.0 * r).round() as usize + 1;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub final_time: f64,
    pub max_norm_drift_per_step: f64,
    pub norm_drift: f64,
    pub relative_energy_drift: f64,
    pub max_boundary_mass: f64,
    pub cleared: bool,
    pub warnings: Vec<String>,
}

/// One scattering run: echoed inputs, observables, diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub xi0: f64,
    pub y0: f64,
    pub p: f64,
    pub mv0: f64,
    pub width: f64,
    pub spring_k: f64,
    pub impurity: f64,
    pub p_max: f64,
    pub theta_star: f64,
    /// Compositeness of the incoming branch.
    pub m_c: f64,
    pub dt_min: f64,
    pub diagnostics: RunDiagnostics,
    pub valid: bool,
    pub invalid_reasons: Vec<String>,
}

/// Evolves the right-moving branch launched from `-Y₀`; the left-moving
/// branch from `+Y₀` is its mirror image (the Hamiltonian is even in `Y`),
/// so one evolution yields the final state for every relative phase.
pub fn run_scattering(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let v = cfg.external()?;
    if !v.is_even() {
        return Err(Error::InvalidParameter(
            "two-branch runs need an even external potential".into(),
        ));
    }
    let u = cfg.spring()?;
    let init = &cfg.initial;
    let phi = cfg.com_state(-init.y0, init.p)?;
    let psi = cfg.internal_state(init.xi0)?;
    let a0 = Wavefunction2::product(&phi, &psi)?;
    let b0 = a0.mirror_com()?;
    let overlap0 = a0.inner(&b0)?;

    let plan = EvolutionPlan::for_duration(cfg.grid.dt, cfg.grid.max_time)?
        .stop_when(StopCondition::cleared(init.y0, init.p))
        .boundary_tol(f64::INFINITY);
    let traj = evolve_2d(&a0, &v, &u, &plan)?;
    let a = traj.final_state;
    let b = a.mirror_com()?;
    let combined = |theta: f64| -> Result<Wavefunction2<f64>> {
        let w = cis(theta);
        let n = (2.0 + 2.0 * (w * overlap0).re).sqrt();
        Wavefunction2::combine(&a, Complex64::new(1.0 / n, 0.0), &b, w / n)
    };
    let fit = optimize_theta(|theta| Ok(leftward_probability(&combined(theta)?)?.leftward))?;
    let best = combined(fit.theta_star)?;
    let hemispheres = leftward_probability(&best)?;
    let rho = partial_trace_internal(&best.normalized()?)?;

    let q = q_profile(&v, &psi, phi.grid(), QMode::Exact)?;
    let mc = compositeness(&q, &phi)?;

    let d = &traj.diagnostics;
    let diagnostics = RunDiagnostics {
        steps: d.steps,
        final_time: traj.final_time,
        max_norm_drift_per_step: d.max_norm_drift_per_step,
        norm_drift: d.norm_drift,
        relative_energy_drift: d.relative_energy_drift(),
        max_boundary_mass: d.max_boundary_mass,
        cleared: hemispheres.cleared,
        warnings: d.warnings.clone(),
    };
    let mut invalid_reasons = Vec::new();
    if diagnostics.max_boundary_mass > BOUNDARY_TOL {
        invalid_reasons.push(format!(
            "boundary mass {:e} exceeds {BOUNDARY_TOL:e}",
            diagnostics.max_boundary_mass
        ));
    }
    if diagnostics.max_norm_drift_per_step > NORM_DRIFT_PER_STEP_TOL {
        invalid_reasons.push(format!(
            "norm drift per step {:e} exceeds {NORM_DRIFT_PER_STEP_TOL:e}",
            diagnostics.max_norm_drift_per_step
        ));
    }
    if diagnostics.relative_energy_drift > ENERGY_DRIFT_TOL {
        invalid_reasons.push(format!(
            "relative energy drift {:e} exceeds {ENERGY_DRIFT_TOL:e}",
            diagnostics.relative_energy_drift
        ));
    }
    if !diagnostics.cleared {
        invalid_reasons.push("packets had not cleared the well at measurement".into());
    }
    Ok(ExperimentRecord {
        xi0: init.xi0,
        y0: init.y0,
        p: init.p,
        mv0: cfg.potential.mv0,
        width: cfg.potential.width,
        spring_k: cfg.spring_k,
        impurity: impurity(&rho),
        p_max: fit.p_max,
        theta_star: fit.theta_star,
        m_c: mc.m_c,
        dt_min: mc.dt_min,
        valid: invalid_reasons.is_empty(),
        invalid_reasons,
        diagnostics,
    })
}

/// One run per `ξ₀` of the scan range, evaluated concurrently; records come
/// back in `ξ₀` order.
pub fn scan_xi0(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    cfg.xi0_values()
        .into_par_iter()
        .map(|xi0| run_scattering(&cfg.with_xi0(xi0)))
        .collect()
}

fn write_header(out: &mut impl Write, kind: &str) -> Result<()> {
    writeln!(
        out,
        "# compdec {kind} schema v{CSV_SCHEMA_VERSION} (compdec {})",
        env!("CARGO_PKG_VERSION")
    )?;
    Ok(())
}

fn write_csv<R: Serialize>(
    path: &Path,
    kind: &str,
    rows: impl IntoIterator<Item = R>,
) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut file, kind)?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Xi0Row {
    xi0: f64,
    impurity: f64,
    p_max: f64,
    theta_star: f64,
}

/// `xi0,impurity,p_max,theta_star` after a versioned comment line.
pub fn write_xi0_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    write_csv(
        path,
        "scan-xi0",
        records.iter().map(|r| Xi0Row {
            xi0: r.xi0,
            impurity: r.impurity,
            p_max: r.p_max,
            theta_star: r.theta_star,
        }),
    )
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Index of an interior maximum with strictly lower values on both ends
/// (the rise-and-fall shape of a turnover), if any.
pub fn turnover_index(values: &[f64]) -> Option<usize> {
    let (k, &peak) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let first = *values.first()?;
    let last = *values.last()?;
    (k > 0 && k + 1 < values.len() && peak > first && peak > last).then_some(k)
}

/// One heatmap cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McCell {
    #[serde(rename = "Y0")]
    pub y0: f64,
    pub xi: f64,
    pub q_mean: f64,
    pub q_sq_mean: f64,
    pub m_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McScan {
    pub y0: Vec<f64>,
    pub xi: Vec<f64>,
    /// Row-major over `(xi, y0)`.
    pub cells: Vec<McCell>,
}

impl McScan {
    pub fn cell(&self, i_xi: usize, i_y0: usize) -> &McCell {
        &self.cells[i_xi * self.y0.len() + i_y0]
    }

    /// Largest `|M_C(Y₀, ξ) - M_C(-Y₀, ξ)|` and `|M_C(Y₀, ξ) - M_C(Y₀, -ξ)|`
    /// over the grid (exact when both axes are symmetric).
    pub fn parity_defects(&self) -> (f64, f64) {
        let (nx, ny) = (self.xi.len(), self.y0.len());
        let mut dy = 0.0f64;
        let mut dx = 0.0f64;
        for i in 0..nx {
            for j in 0..ny {
                let m = self.cell(i, j).m_c;
                dy = dy.max((m - self.cell(i, ny - 1 - j).m_c).abs());
                dx = dx.max((m - self.cell(nx - 1 - i, j).m_c).abs());
            }
        }
        (dy, dx)
    }
}

/// `⟨Q⟩`, `⟨Q²⟩` and `M_C` on the `(Y₀, ξ)` grid of the configuration; the
/// center-of-mass packet has the configured width, the internal state the
/// configured width displaced by `ξ`. Rows over `ξ` run concurrently.
pub fn scan_compositeness(cfg: &ExperimentConfig) -> Result<McScan> {
    cfg.validate()?;
    let c = &cfg.compositeness;
    let v = cfg.external()?;
    let com = cfg.com_grid()?;
    let y0s = evenly_spaced(c.y0_min, c.y0_max, c.y0_points);
    let xis = evenly_spaced(c.xi_min, c.xi_max, c.xi_points);
    let packets: Vec<Wavefunction1<f64>> = y0s
        .iter()
        .map(|&y0| cfg.com_state(y0, 0.0))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<McCell>> = xis
        .par_iter()
        .map(|&xi| {
            let q = q_profile(&v, &cfg.internal_state(xi)?, &com, c.mode)?;
            y0s.iter()
                .zip(&packets)
                .map(|(&y0, phi)| {
                    let m = compositeness(&q, phi)?;
                    Ok(McCell {
                        y0,
                        xi,
                        q_mean: m.q_mean,
                        q_sq_mean: m.q_sq_mean,
                        m_c: m.m_c,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(McScan {
        y0: y0s,
        xi: xis,
        cells: rows.into_iter().flatten().collect(),
    })
}

/// `Y0,xi,q_mean,q_sq_mean,m_c` after a versioned comment line.
pub fn write_mc_csv(path: &Path, scan: &McScan) -> Result<()> {
    write_csv(path, "scan-mc", scan.cells.iter().copied())
}

/// Internal states of the Riccati battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatteryState {
    Ground,
    Displaced,
    FirstExcited,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossCheckEntry {
    pub profile: String,
    pub state: BatteryState,
    pub fidelity: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub entries: Vec<CrossCheckEntry>,
    pub pass: bool,
    pub n_fock: usize,
    pub dt: f64,
}

impl CrossCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CrossCheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// Driving profiles of the cross-check battery around `ω² = 81` on `[0, 2]`,
/// expressed in the number basis of frequency 9: six fixed shapes followed by
/// `sampled` random two-bump profiles drawn from `seed`.
pub fn riccati_battery(sampled: usize, seed: u64) -> Result<Vec<(DrivingProfile<f64>, f64)>> {
    let horizon = 2.0;
    let nu = 9.0;
    let gauss = |t: f64, c: f64, w: f64| (-(t - c) * (t - c) / (2.0 * w * w)).exp();
    let mut profiles = vec![
        (DrivingProfile::constant(81.0, horizon)?, 1.0 - 1e-8),
        (
            DrivingProfile::new("gaussian-bump", horizon, move |t| {
                81.0 + 10.0 * gauss(t, 1.0, 0.2)
            })?,
            0.999,
        ),
        (
            DrivingProfile::new("resonant", horizon, |t: f64| 81.0 + 20.0 * (18.0 * t).sin())?,
            0.999,
        ),
        (
            DrivingProfile::new("sharp-dip", horizon, move |t| {
                81.0 - 60.0 * gauss(t, 1.0, 0.1)
            })?,
            0.999,
        ),
        (
            DrivingProfile::new("ramp", horizon, |t: f64| 81.0 - 16.0 * t)?,
            0.999,
        ),
        (
            DrivingProfile::new("kick-pair", horizon, move |t| {
                81.0 + 100.0 * gauss(t, 0.6, 0.03) - 100.0 * gauss(t, 1.4, 0.03)
            })?,
            0.999,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..sampled {
        let bumps: Vec<(f64, f64, f64)> = (0..2)
            .map(|_| {
                (
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(0.4..1.6),
                    rng.gen_range(0.1..0.4),
                )
            })
            .collect();
        let w = move |t: f64| {
            81.0 + bumps
                .iter()
                .map(|&(a, c, s)| a * gauss(t, c, s))
                .sum::<f64>()
        };
        profiles.push((
            DrivingProfile::new(format!("sampled-{i}"), horizon, w)?,
            0.999,
        ));
    }
    profiles
        .into_iter()
        .map(|(p, thr)| Ok((p.with_reference(nu)?, thr)))
        .collect()
}

fn battery_state(grid: Grid1<f64>, s: BatteryState) -> Result<Wavefunction1<f64>> {
    match s {
        BatteryState::Ground => make_gaussian_1d(grid, 0.0, 1.0 / 9.0, 0.0, 0.0),
        BatteryState::Displaced => make_gaussian_1d(grid, 0.3, 1.0 / 9.0, 0.0, 0.0),
        BatteryState::FirstExcited => {
            Wavefunction1::from_fn(grid, |y| Complex64::new(y * (-4.5 * y * y).exp(), 0.0))
                .normalized()
        }
    }
}

/// Number-basis propagation versus split-step grid evolution of the same
/// driven oscillator, for every battery profile and state. The constant
/// profile at `w = ν²` has `β ≡ 0` and is held to `1 - 1e-8`, the others to
/// `0.999`.
pub fn riccati_crosscheck(
    n_fock: usize,
    dt: f64,
    sampled: usize,
    seed: u64,
) -> Result<CrossCheckReport> {
    let grid = Grid1::symmetric(10.0, 512)?;
    let states = [
        BatteryState::Ground,
        BatteryState::Displaced,
        BatteryState::FirstExcited,
    ];
    let battery = riccati_battery(sampled, seed)?;
    let mut entries = Vec::new();
    for (profile, threshold) in &battery {
        let coeffs = crate::parametric::propagator_coeffs(profile, dt)?;
        let t_end = coeffs.horizon();
        for &s in &states {
            let psi = battery_state(grid, s)?;
            let fast = apply_propagator(&coeffs, t_end, &psi, n_fock)?;
            let w = profile.clone();
            let plan = EvolutionPlan::for_duration(dt, t_end)?;
            let slow = evolve_1d_parametric(&psi, &move |t| w.w(t), &plan)?.final_state;
            let fidelity = fast.inner(&slow)?.norm_sqr() / (fast.norm_sq() * slow.norm_sq());
            entries.push(CrossCheckEntry {
                profile: profile.label().to_string(),
                state: s,
                fidelity,
                threshold: *threshold,
                pass: fidelity >= *threshold,
            });
        }
    }
    Ok(CrossCheckReport {
        pass: entries.iter().all(|e| e.pass),
        entries,
        n_fock,
        dt,
    })
}

/// Classical path pair through a well: one transmitted path launched from
/// `-start` with momentum `p`, and a partner that retraces it after reaching
/// the entrance edge `-L/2`.
pub fn classical_pair(
    v: &ExternalPotential<f64>,
    start: f64,
    p: f64,
    dt: f64,
    horizon: f64,
) -> Result<(PathSample<f64>, PathSample<f64>)> {
    let n = (horizon / dt).round() as usize;
    let through = classical_path(v, -start, p, dt, n)?;
    let edge = match v {
        ExternalPotential::Square(w) => w.width(),
        ExternalPotential::Smoothed(w) => w.width(),
        ExternalPotential::Quadratic(_) => 0.0,
    } / 2.0;
    let t_r = through.crossing_time(-edge).ok_or_else(|| {
        Error::InvalidParameter(format!("transmitted path never reaches Y = {}", -edge))
    })?;
    let back = through.reversed_after(t_r)?;
    Ok((through, back))
}

/// One row of the influence series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InfluenceRow {
    pub t: f64,
    #[serde(rename = "reE")]
    pub re_e: f64,
    #[serde(rename = "imE")]
    pub im_e: f64,
    #[serde(rename = "reD")]
    pub re_d: f64,
    #[serde(rename = "imD")]
    pub im_d: f64,
    #[serde(rename = "reA")]
    pub re_a: f64,
    #[serde(rename = "imA")]
    pub im_a: f64,
    #[serde(rename = "reF")]
    pub re_f: f64,
    #[serde(rename = "imF")]
    pub im_f: f64,
    pub overlap_abs: f64,
    pub overlap_arg: f64,
}

/// Coefficients along path `a` and the influence overlap of the two paths up
/// to each `stride`-th lattice time (always including the last).
pub fn influence_series(
    psi: &Wavefunction1<f64>,
    a: &PathSample<f64>,
    b: &PathSample<f64>,
    v: &ExternalPotential<f64>,
    u: &HarmonicInternal<f64>,
    stride: usize,
) -> Result<Vec<InfluenceRow>> {
    let ca = driven_coefficients(a, v, u)?;
    let cb = driven_coefficients(b, v, u)?;
    let n = ca.len();
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    if !a.same_lattice(b) {
        return Err(Error::LatticeMismatch(
            "paths are sampled on different lattices".into(),
        ));
    }
    // Running ∫(V(Y_A) - V(Y_B)) by Simpson's rule per lattice cell.
    let h = a.dt();
    let diff = |t: f64| v.value(a.position(t)) - v.value(b.position(t));
    let mut phase_integral = vec![0.0; n];
    for k in 1..n {
        let t0 = ca.times[k - 1];
        phase_integral[k] =
            phase_integral[k - 1] + (diff(t0) + 4.0 * diff(t0 + h / 2.0) + diff(t0 + h)) * h / 6.0;
    }
    idx.into_iter()
        .map(|k| {
            let t = ca.times[k];
            let overlap = if k == 0 {
                Complex64::new(psi.norm_sq(), 0.0)
            } else {
                let sa = apply_propagator_converged(&ca, t, psi, 64, TRUNCATION_TOL)?.state;
                let sb = apply_propagator_converged(&cb, t, psi, 64, TRUNCATION_TOL)?.state;
                cis(-2.0 * phase_integral[k]) * sb.inner(&sa)?
            };
            Ok(row(&ca, k, overlap))
        })
        .collect()
}

fn row(c: &PropagatorCoeffs<f64>, k: usize, overlap: Complex64) -> InfluenceRow {
    InfluenceRow {
        t: c.times[k],
        re_e: c.e[k].re,
        im_e: c.e[k].im,
        re_d: c.d[k].re,
        im_d: c.d[k].im,
        re_a: c.a[k].re,
        im_a: c.a[k].im,
        re_f: c.f[k].re,
        im_f: c.f[k].im,
        overlap_abs: overlap.norm(),
        overlap_arg: overlap.arg(),
    }
}

/// `t,reE,imE,reD,imD,reA,imA,reF,imF,overlap_abs,overlap_arg` after a versioned comment line.
pub fn write_influence_csv(path: &Path, rows: &[InfluenceRow]) -> Result<()> {
    write_csv(path, "influence", rows.iter().copied())
}
