use approx::assert_abs_diff_eq;
use compdec::evolve::{evolve_1d_parametric, EvolutionPlan};
use compdec::parametric::{
    apply_propagator, apply_propagator_converged, apply_with_basis, classical_path,
    constant_drive_e, driven_coefficients, influence_overlap, integrate_adf,
    propagate_coefficients, propagator_coeffs, solve_riccati, DrivingProfile, FockBasis,
    PathSample, PropagatorCoeffs, DEFAULT_N_FOCK, TRUNCATION_TOL,
};
use compdec::potentials::{ExternalPotential, HarmonicInternal, QuadraticExternal, SmoothedWell};
use compdec::qgrid::{make_gaussian_1d, Grid1, Wavefunction1};
use compdec::Error;
use num_complex::Complex64;
use proptest::prelude::*;

const DT: f64 = 5e-4;
const HORIZON: f64 = 2.0;
/// Internal frequency of the default composite: ω² = 4k = 81.
const W0: f64 = 81.0;
const OMEGA: f64 = 9.0;

/// Wide enough for 128 unit-frequency number states.
fn unit_grid() -> Grid1<f64> {
    Grid1::symmetric(32.0, 2048).unwrap()
}

fn battery_grid() -> Grid1<f64> {
    Grid1::symmetric(10.0, 1024).unwrap()
}

fn ground(grid: Grid1<f64>) -> Wavefunction1<f64> {
    make_gaussian_1d(grid, 0.0, 1.0 / 9.0, 0.0, 0.0).unwrap()
}

fn displaced(grid: Grid1<f64>) -> Wavefunction1<f64> {
    make_gaussian_1d(grid, 0.3, 1.0 / 9.0, 0.0, 0.0).unwrap()
}

fn first_excited(grid: Grid1<f64>) -> Wavefunction1<f64> {
    Wavefunction1::from_fn(grid, |y| Complex64::new(y * (-4.5 * y * y).exp(), 0.0))
        .normalized()
        .unwrap()
}

fn fidelity(a: &Wavefunction1<f64>, b: &Wavefunction1<f64>) -> f64 {
    a.inner(b).unwrap().norm() / (a.norm() * b.norm())
}

fn grid_oracle(profile: &DrivingProfile<f64>, psi: &Wavefunction1<f64>) -> Wavefunction1<f64> {
    let plan = EvolutionPlan::for_duration(DT, profile.horizon()).unwrap();
    let w = |t: f64| profile.w(t);
    evolve_1d_parametric(psi, &w, &plan).unwrap().final_state
}

fn battery() -> Vec<DrivingProfile<f64>> {
    vec![
        DrivingProfile::constant(W0, HORIZON).unwrap(),
        DrivingProfile::new("gaussian bump", HORIZON, |t: f64| {
            W0 + 10.0 * (-(t - 1.0).powi(2)).exp()
        })
        .unwrap(),
        DrivingProfile::new("resonant modulation", HORIZON, |t: f64| {
            W0 + 20.0 * (18.0 * t).sin()
        })
        .unwrap(),
        DrivingProfile::new("sharp dip", HORIZON, |t: f64| {
            W0 - 60.0 * (-((t - 1.0) / 0.1).powi(2)).exp()
        })
        .unwrap(),
        DrivingProfile::new("linear ramp", HORIZON, |t: f64| W0 - 16.0 * t).unwrap(),
        DrivingProfile::new("impulsive kick pair", HORIZON, |t: f64| {
            let bump = |c: f64| (-((t - c) / 0.03).powi(2)).exp();
            W0 + 100.0 * bump(0.6) - 100.0 * bump(1.2)
        })
        .unwrap(),
    ]
}

proptest! {
    #[test]
    fn omega_and_beta_differ_by_one(w0 in -200.0f64..200.0, a in -50.0f64..50.0, t in 0.0f64..2.0) {
        let p = DrivingProfile::new("p", 2.0, move |t: f64| w0 + a * (3.0 * t).cos()).unwrap();
        prop_assert!((p.omega(t) - 2.0 * p.beta(t) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_frequency_identity(w in 0.1f64..500.0) {
        let omega = (w + 1.0) / 2.0;
        let beta = (omega - 1.0) / 2.0;
        prop_assert!((omega * omega - 4.0 * beta * beta - w).abs() <= 1e-12 * w.max(1.0));
    }
}

#[test]
fn undriven_unit_oscillator_is_a_pure_rotation() {
    let p = DrivingProfile::constant(1.0, 3.0).unwrap();
    let c = propagator_coeffs(&p, 1e-3).unwrap();
    for k in 0..c.len() {
        let t = c.times[k];
        assert_eq!(c.e[k], Complex64::new(0.0, 0.0));
        assert_eq!(c.a[k], Complex64::new(0.0, 0.0));
        assert_eq!(c.f[k], Complex64::new(0.0, 0.0));
        let expected = Complex64::new(0.0, -t).exp() - 1.0;
        assert!((c.d[k] - expected).norm() < 1e-12, "t = {t}");
        assert!((c.phi[k] - t / 2.0).abs() < 1e-12);
    }
}

#[test]
fn closed_form_satisfies_the_riccati_equation() {
    // Oracle check before use: central difference of the closed form against the RHS.
    let w = W0;
    let omega = (w + 1.0) / 2.0;
    let beta = (omega - 1.0) / 2.0;
    let h = 1e-5;
    for k in 1..200 {
        let t = k as f64 * 0.0123;
        let e = constant_drive_e(w, 1.0, t);
        let de = (constant_drive_e(w, 1.0, t + h) - constant_drive_e(w, 1.0, t - h)) / (2.0 * h);
        let lhs = Complex64::i() * de;
        let rhs = beta + 2.0 * omega * e + 4.0 * beta * e * e;
        assert!(
            (lhs - rhs).norm() < 1e-5 * (1.0 + rhs.norm()),
            "t = {t}: {lhs} vs {rhs}"
        );
    }
    assert_eq!(constant_drive_e(w, 1.0, 0.0), Complex64::new(0.0, 0.0));
}

#[test]
fn riccati_matches_closed_form_over_two_periods() {
    let horizon = 2.0 * std::f64::consts::TAU / 9.0;
    let p = DrivingProfile::constant(W0, horizon).unwrap();
    let sol = solve_riccati(&p, DT).unwrap();
    let err = sol
        .times
        .iter()
        .zip(&sol.e)
        .map(|(&t, &e)| (e - constant_drive_e(W0, 1.0, t)).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "max error {err:e}");
    assert!(sol.richardson_error < 1e-8);
    // Dense output between lattice points.
    for k in 0..50 {
        let t = (k as f64 + 0.37) * horizon / 50.0;
        assert!((sol.e_at(t) - constant_drive_e(W0, 1.0, t)).norm() < 1e-8);
    }
}

#[test]
fn riccati_rejects_coarse_steps() {
    let p = DrivingProfile::constant(W0, 1.0).unwrap();
    assert!(matches!(
        solve_riccati(&p, 0.01),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn inverted_oscillator_blows_up() {
    // Sustained w < 0 squeezes without bound, driving |E| to ½.
    let p = DrivingProfile::constant(-50.0, 20.0).unwrap();
    match solve_riccati(&p, 1e-3) {
        Err(Error::RiccatiBlowUp { time, magnitude }) => {
            assert!(time > 0.0 && time < 20.0);
            assert!(magnitude >= 0.5 - 1e-6);
        }
        other => panic!("expected blow-up, got {other:?}"),
    }
}

/// Independent oracle: RK4 on the full coefficient system
/// `i A' = 2βE`, `i D' = (Ω + 4βE)(1 + D)`, `i E' = β + 2ΩE + 4βE²`, `i F' = β(1 + D)²`.
fn full_system(p: &DrivingProfile<f64>, n: usize) -> Vec<[Complex64; 4]> {
    let h = p.horizon() / n as f64;
    let rhs = |t: f64, y: [Complex64; 4]| -> [Complex64; 4] {
        let (o, b) = (p.omega(t), p.beta(t));
        let mi = -Complex64::i();
        let [_, d, e, _] = y;
        [
            mi * 2.0 * b * e,
            mi * (o + 4.0 * b * e) * (1.0 + d),
            mi * (b + 2.0 * o * e + 4.0 * b * e * e),
            mi * b * (1.0 + d) * (1.0 + d),
        ]
    };
    let add = |y: [Complex64; 4], k: [Complex64; 4], s: f64| {
        [
            y[0] + k[0] * s,
            y[1] + k[1] * s,
            y[2] + k[2] * s,
            y[3] + k[3] * s,
        ]
    };
    let mut y = [Complex64::new(0.0, 0.0); 4];
    let mut out = vec![y];
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = rhs(t, y);
        let k2 = rhs(t + h / 2.0, add(y, k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, add(y, k2, h / 2.0));
        let k4 = rhs(t + h, add(y, k3, h));
        for i in 0..4 {
            y[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
        out.push(y);
    }
    out
}

#[test]
fn quadratures_agree_with_direct_integration_of_the_coefficient_system() {
    for p in battery() {
        let c = propagator_coeffs(&p, DT).unwrap();
        let n = c.len() - 1;
        let refine = 8;
        let reference = full_system(&p, n * refine);
        let mut worst = 0.0f64;
        for k in (0..=n).step_by(50) {
            let r = reference[k * refine];
            for (got, want) in [c.a[k], c.d[k], c.e[k], c.f[k]].iter().zip(r) {
                worst = worst.max((got - want).norm());
            }
        }
        assert!(worst < 1e-6, "{}: max deviation {worst:e}", p.label());
    }
}

#[test]
fn coefficient_system_residual_is_small() {
    // Five-point derivatives of the lattice series against the right-hand sides.
    let p = &battery()[1];
    let c = propagator_coeffs(p, 2.5e-4).unwrap();
    let h = c.dt;
    let deriv = |s: &[Complex64], k: usize| {
        (s[k - 2] - 8.0 * s[k - 1] + 8.0 * s[k + 1] - s[k + 2]) / (12.0 * h)
    };
    for k in (100..c.len() - 100).step_by(997) {
        let t = c.times[k];
        let (o, b) = (p.omega(t), p.beta(t));
        let i = Complex64::i();
        let r_d = i * deriv(&c.d, k) - (o + 4.0 * b * c.e[k]) * (1.0 + c.d[k]);
        let r_f = i * deriv(&c.f, k) - b * (1.0 + c.d[k]) * (1.0 + c.d[k]);
        let r_a = i * deriv(&c.a, k) - 2.0 * b * c.e[k];
        assert!(
            r_d.norm() < 1e-6 && r_f.norm() < 1e-6 && r_a.norm() < 1e-6,
            "t = {t}"
        );
    }
}

#[test]
fn coefficient_bounds_and_unitarity_identity() {
    for p in battery() {
        let c = propagator_coeffs(&p, DT).unwrap();
        assert_eq!(c.a[0], Complex64::new(0.0, 0.0));
        assert_eq!(c.d[0], Complex64::new(0.0, 0.0));
        assert_eq!(c.e[0], Complex64::new(0.0, 0.0));
        assert_eq!(c.f[0], Complex64::new(0.0, 0.0));
        assert!(c.max_abs_e() < 0.5);
        assert!(c.max_rotation_modulus() <= 1.0 + 1e-12, "{}", p.label());
        assert!(
            c.unitarity_defect() < 1e-8,
            "{}: {:e}",
            p.label(),
            c.unitarity_defect()
        );
    }
}

#[test]
fn lattice_mismatch_is_rejected() {
    let p = DrivingProfile::constant(W0, 1.0).unwrap();
    let q = DrivingProfile::constant(W0, 1.5).unwrap();
    let sol = solve_riccati(&p, DT).unwrap();
    assert!(matches!(
        integrate_adf(&sol, &q),
        Err(Error::LatticeMismatch(_))
    ));
    let c = integrate_adf(&sol, &p).unwrap();
    assert!(matches!(c.index_of(0.0003), Err(Error::LatticeMismatch(_))));
    assert_eq!(c.index_of(0.25).unwrap(), 500);
}

#[test]
fn number_states_only_acquire_a_phase_without_squeezing() {
    let grid = unit_grid();
    let basis = FockBasis::new(grid, 16).unwrap();
    let p = DrivingProfile::constant(1.0, 1.7).unwrap();
    let c = propagator_coeffs(&p, DT).unwrap();
    for n in [0, 3, 7] {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 16];
        coeffs[n] = Complex64::new(1.0, 0.0);
        let psi = basis.synthesize(&coeffs);
        let out = apply_with_basis(&basis, &c, 1.7, &psi, 1e-12).unwrap();
        for (a, b) in psi.density().iter().zip(out.density()) {
            assert!((a - b).abs() < 1e-10);
        }
        let expected = Complex64::new(0.0, -(n as f64 + 0.5) * 1.7).exp();
        let got = psi.inner(&out).unwrap();
        assert!(
            (got - expected).norm() < 1e-10,
            "n = {n}: {got} vs {expected}"
        );
    }
}

#[test]
fn internal_ground_state_is_static_under_its_own_frequency() {
    // Unit-frequency basis: the ω = 9 ground state needs about 100 number states.
    let grid = unit_grid();
    let psi = ground(grid);
    let period = std::f64::consts::TAU / OMEGA;
    let n = (period / DT).round() as usize;
    let p = DrivingProfile::constant(W0, n as f64 * DT).unwrap();
    let c = propagator_coeffs(&p, DT).unwrap();
    let rho0 = psi.density();
    for k in (0..=n).step_by(n / 7) {
        let out = apply_propagator(&c, c.times[k], &psi, 128).unwrap();
        let dev = out
            .density()
            .iter()
            .zip(&rho0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-6, "t = {}: {dev:e}", c.times[k]);
    }
}

#[test]
fn truncation_is_reported() {
    let grid = unit_grid();
    let c = propagator_coeffs(&DrivingProfile::constant(W0, 0.1).unwrap(), DT).unwrap();
    let far = make_gaussian_1d(grid, 2.0, 1.0 / 9.0, 0.0, 0.0).unwrap();
    match apply_propagator(&c, 0.1, &far, 8) {
        Err(Error::Truncation {
            n_fock, deficit, ..
        }) => {
            assert_eq!(n_fock, 8);
            assert!(deficit > 1e-8);
        }
        other => panic!("expected truncation error, got {other:?}"),
    }
}

#[test]
fn basis_rejects_grids_that_cannot_hold_it() {
    let small = Grid1::symmetric(5.0, 256).unwrap();
    assert!(matches!(
        FockBasis::new(small, 64),
        Err(Error::InvalidGrid(_))
    ));
}

#[test]
fn propagator_matches_grid_evolution_across_the_battery() {
    let grid = battery_grid();
    let states = [ground(grid), displaced(grid), first_excited(grid)];
    for p in battery() {
        let p = p.with_reference(OMEGA).unwrap();
        let c = propagator_coeffs(&p, DT).unwrap();
        for (label, psi) in ["ground", "displaced", "excited"].iter().zip(&states) {
            let reference = grid_oracle(&p, psi);
            let fock = apply_propagator(&c, c.horizon(), psi, DEFAULT_N_FOCK).unwrap();
            let f = fidelity(&reference, &fock);
            assert!(f >= 0.999, "{} / {label}: fidelity {f}", p.label());
            let converged =
                apply_propagator_converged(&c, c.horizon(), psi, DEFAULT_N_FOCK, TRUNCATION_TOL)
                    .unwrap();
            assert!(fidelity(&reference, &converged.state) >= 0.999);
            let drift = (converged.state.norm_sq() - 1.0).abs();
            assert!(
                drift < 1e-6,
                "{} / {label}: norm drift {drift:e}",
                p.label()
            );
        }
    }
}

#[test]
fn unit_frequency_basis_handles_mild_driving() {
    // With ν = 1 the ω = 9 states sit in a heavily squeezed corner of the basis;
    // 64 number states hold them to ~1e-7, enough for gentle profiles.
    let grid = unit_grid();
    let states = [ground(grid), displaced(grid), first_excited(grid)];
    let basis = FockBasis::new(grid, DEFAULT_N_FOCK).unwrap();
    for i in [0, 1, 4, 5] {
        let p = battery().swap_remove(i);
        let c = propagator_coeffs(&p, DT).unwrap();
        for psi in &states {
            let out = apply_with_basis(&basis, &c, HORIZON, psi, 1e-5).unwrap();
            let f = fidelity(&grid_oracle(&p, psi), &out);
            assert!(f >= 0.999, "{}: {f}", p.label());
        }
    }
}

#[test]
fn zero_beta_rotation_matches_grid_evolution() {
    let grid = battery_grid();
    for (nu, grid) in [(1.0, unit_grid()), (OMEGA, grid)] {
        // β ≡ 0 exactly when w ≡ ν².
        let p = DrivingProfile::constant(nu * nu, HORIZON)
            .unwrap()
            .with_reference(nu)
            .unwrap();
        let c = propagator_coeffs(&p, DT).unwrap();
        assert!(c.e.iter().all(|e| e.norm() == 0.0));
        for psi in [ground(grid), displaced(grid), first_excited(grid)] {
            let reference = grid_oracle(&p, &psi);
            let fock =
                apply_propagator_converged(&c, HORIZON, &psi, DEFAULT_N_FOCK, TRUNCATION_TOL)
                    .unwrap();
            assert!(fidelity(&reference, &fock.state) >= 1.0 - 1e-8, "ν = {nu}");
        }
    }
}

#[test]
fn matched_reference_frequency_leaves_the_spring_ground_state_alone() {
    let p = DrivingProfile::constant(W0, 1.0)
        .unwrap()
        .with_reference(OMEGA)
        .unwrap();
    let c = propagator_coeffs(&p, DT).unwrap();
    assert_eq!(c.max_abs_e(), 0.0);
    let psi = ground(battery_grid());
    let out = apply_propagator(&c, 1.0, &psi, 8).unwrap();
    let expected = Complex64::new(0.0, -OMEGA / 2.0).exp();
    assert!((psi.inner(&out).unwrap() - expected).norm() < 1e-12);
}

#[test]
fn mismatched_basis_frequency_is_rejected() {
    let grid = battery_grid();
    let c = propagator_coeffs(&DrivingProfile::constant(W0, 0.1).unwrap(), DT).unwrap();
    let basis = FockBasis::with_frequency(grid, 16, OMEGA).unwrap();
    assert!(matches!(
        apply_with_basis(&basis, &c, 0.1, &ground(grid), 1e-8),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn coefficient_csv_has_one_row_per_lattice_point() {
    let c: PropagatorCoeffs<f64> =
        propagator_coeffs(&DrivingProfile::constant(W0, 0.01).unwrap(), DT).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,reA,imA,reD,imD,reE,imE,reF,imF");
    assert_eq!(lines.count(), c.len());
}

fn smoothed() -> ExternalPotential<f64> {
    SmoothedWell::new(2.64, 0.5, 0.05).unwrap().into()
}

fn spring() -> HarmonicInternal<f64> {
    HarmonicInternal::new(20.25).unwrap()
}

/// Crossing the well's edges squeezes the internal state strongly; the
/// converged basis reaches 512 states of frequency 9.
fn internal_grid() -> Grid1<f64> {
    Grid1::symmetric(16.0, 4096).unwrap()
}

#[test]
fn classical_path_conserves_energy() {
    let v = smoothed();
    let path = classical_path(&v, -3.0, 1.0, 2.5e-4, 24_000).unwrap();
    let energy = |k: usize| {
        let (y, u) = (path.positions()[k], path.velocities()[k]);
        u * u / 2.0 + 2.0 * v.value(y)
    };
    let e0 = energy(0);
    for k in (0..path.times().len()).step_by(1000) {
        // Velocity Verlet: O(dt²) energy oscillation, no drift.
        assert_abs_diff_eq!(energy(k), e0, epsilon = 1e-4);
    }
    assert!(*path.positions().last().unwrap() > 2.0);
}

#[test]
fn identical_paths_have_unit_influence() {
    let v = smoothed();
    let path = classical_path(&v, -3.0, 1.0, 2.5e-4, 24_000).unwrap();
    let psi = displaced(internal_grid());
    let f = influence_overlap(&psi, &path, &path, &v, &spring()).unwrap();
    assert!((f.magnitude - 1.0).abs() < 1e-10, "{}", f.magnitude);
    assert!((f.value - 1.0).norm() < 1e-10);
}

#[test]
fn quadratic_potential_does_not_decohere() {
    let v: ExternalPotential<f64> = QuadraticExternal::new(0.3, -0.2, 0.7).unwrap().into();
    let a = PathSample::from_fn(1e-3, 3000, |t| -2.0 + t, |_| 1.0).unwrap();
    let b = PathSample::from_fn(
        1e-3,
        3000,
        |t: f64| 1.5 * (2.0 * t).sin(),
        |t: f64| 3.0 * (2.0 * t).cos(),
    )
    .unwrap();
    let psi = first_excited(internal_grid());
    let f = influence_overlap(&psi, &a, &b, &v, &spring()).unwrap();
    assert!((f.magnitude - 1.0).abs() < 1e-8, "{}", f.magnitude);
}

#[test]
fn displaced_internal_state_decoheres_more_than_the_ground_state() {
    let v = smoothed();
    let through = classical_path(&v, -3.0, 1.0, 2.5e-4, 24_000).unwrap();
    // The reflected partner turns back at the entrance edge.
    let t_r = through.crossing_time(-0.25).unwrap();
    let back = through.reversed_after(t_r).unwrap();
    let grid = internal_grid();
    let g = influence_overlap(&ground(grid), &through, &back, &v, &spring()).unwrap();
    let d = influence_overlap(&displaced(grid), &through, &back, &v, &spring()).unwrap();
    assert!(
        d.magnitude < g.magnitude,
        "{} vs {}",
        d.magnitude,
        g.magnitude
    );
    assert!(d.magnitude < 1.0 - 1e-3, "{}", d.magnitude);
}

#[test]
fn reversal_at_the_center_leaves_no_trace() {
    // V'' is even and the transmitted path is symmetric about the center
    // crossing, so a partner turning back there sees the same driving.
    let v = smoothed();
    let through = classical_path(&v, -3.0, 1.0, 2.5e-4, 24_000).unwrap();
    let back = through
        .reversed_after(through.crossing_time(0.0).unwrap())
        .unwrap();
    let f = influence_overlap(&displaced(internal_grid()), &through, &back, &v, &spring()).unwrap();
    assert!((f.magnitude - 1.0).abs() < 1e-8, "{}", f.magnitude);
}

#[test]
fn strong_squeezing_keeps_the_propagated_norm() {
    let v = smoothed();
    let path = classical_path(&v, -3.0, 1.0, 2.5e-4, 24_000).unwrap();
    let c = driven_coefficients(&path, &v, &spring()).unwrap();
    assert!(c.max_abs_e() > 0.45);
    let out =
        apply_propagator_converged(&c, c.horizon(), &ground(internal_grid()), 64, 1e-8).unwrap();
    assert!(
        (out.state.norm() - 1.0).abs() < 1e-8,
        "{}",
        out.state.norm()
    );
}

#[test]
fn square_well_cannot_drive_the_oscillator() {
    let v: ExternalPotential<f64> = compdec::potentials::SquareWell::new(2.64, 0.5)
        .unwrap()
        .into();
    let path = PathSample::from_fn(1e-3, 10, |t| t, |_| 1.0).unwrap();
    assert!(matches!(
        DrivingProfile::from_path(&path, &v, &spring()),
        Err(Error::Distributional)
    ));
}

/// The factorized operator applied literally: `e^{F a²}`, then `(1+D)^{a†a}`,
/// then `e^{E a†²}`, each exponential summed as a terminating series.
fn literal_product(c: &PropagatorCoeffs<f64>, idx: usize, input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut v = input.to_vec();
    let mut term = input.to_vec();
    for k in 1..=n / 2 {
        let mut next = vec![zero; n];
        for m in 0..n.saturating_sub(2) {
            next[m] = term[m + 2] * (((m + 1) * (m + 2)) as f64).sqrt() * c.f[idx] / k as f64;
        }
        term = next;
        v.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
    }
    let r = (-Complex64::i() * c.theta[idx]).exp();
    for (m, vm) in v.iter_mut().enumerate() {
        *vm *= r.powu(m as u32);
    }
    let mut out = v.clone();
    let mut term = v;
    for k in 1..=n / 2 {
        let mut next = vec![zero; n];
        for m in 2..n {
            next[m] = term[m - 2] * ((m * (m - 1)) as f64).sqrt() * c.e[idx] / k as f64;
        }
        term = next;
        out.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
    }
    let global = (c.a[idx] - Complex64::i() * c.phi[idx]).exp();
    out.iter().map(|z| z * global).collect()
}

#[test]
fn matrix_recursion_reproduces_the_literal_operator_product() {
    // Well-conditioned regime (matched reference frequency, low number states),
    // where the literal series is accurate.
    let p = battery().swap_remove(3).with_reference(OMEGA).unwrap();
    let c = propagator_coeffs(&p, DT).unwrap();
    let idx = c.len() - 1;
    let mut input = vec![Complex64::new(0.0, 0.0); 24];
    for (m, z) in input.iter_mut().enumerate().take(8) {
        *z = Complex64::new(1.0 / (1.0 + m as f64), 0.3 * m as f64);
    }
    let fast = propagate_coefficients(&c, idx, &input).unwrap();
    let literal = literal_product(&c, idx, &input);
    for (m, (a, b)) in fast.iter().zip(&literal).enumerate().take(12) {
        assert!((a - b).norm() < 1e-10, "m = {m}: {a} vs {b}");
    }
}
