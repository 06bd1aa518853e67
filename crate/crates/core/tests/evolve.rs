use approx::assert_abs_diff_eq;
use compdec::evolve::{
    energy_1d, energy_2d, evolve_1d_parametric, evolve_1d_static, evolve_2d, sample_potential,
    EvolutionPlan, StopCondition,
};
use compdec::qgrid::{make_gaussian_1d, Wavefunction2};
use compdec::{
    Axis, Error, ExternalPotential, Grid1D, HarmonicInternal, SmoothedWell, SquareWell,
    Wavefunction1D,
};
use nalgebra::{DMatrix, SymmetricEigen};

fn free() -> ExternalPotential {
    SquareWell::new(0.0, 0.5).unwrap().into()
}

fn fidelity(a: &Wavefunction1D, b: &Wavefunction1D) -> f64 {
    a.inner(b).unwrap().norm_sqr() / (a.norm_sq() * b.norm_sq())
}

/// Ground state of `p²/2 + V` with the spectral kinetic matrix on the same lattice.
fn lattice_ground_state(grid: Grid1D, v: &[f64]) -> (f64, Wavefunction1D) {
    let n = grid.n();
    let dx = grid.dx();
    let p = grid.momenta();
    let h = DMatrix::from_fn(n, n, |j, l| {
        let d = (j as f64 - l as f64) * dx;
        let t: f64 = p
            .iter()
            .map(|&pk| (pk * d).cos() * pk * pk / 2.0)
            .sum::<f64>()
            / n as f64;
        t + if j == l { v[j] } else { 0.0 }
    });
    let eig = SymmetricEigen::new(h);
    let (i0, e0) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let vec = eig.eigenvectors.column(i0);
    let psi = Wavefunction1D::from_fn(grid, |x| {
        let j = ((x - grid.x_min()) / dx).round() as usize;
        vec[j].into()
    })
    .normalized()
    .unwrap();
    (*e0, psi)
}

#[test]
fn internal_ground_state_matches_lattice_eigenstate() {
    let grid = Grid1D::new(-3.0, 3.0, 256).unwrap();
    let u = HarmonicInternal::new(20.25).unwrap();
    let v: Vec<f64> = grid.positions().iter().map(|&y| u.value(y)).collect();
    let (e0, ground) = lattice_ground_state(grid, &v);
    assert_abs_diff_eq!(e0, 4.5, epsilon = 1e-6);
    assert_abs_diff_eq!(energy_1d(&ground, &v).unwrap(), e0, epsilon = 1e-9);
    let gauss = make_gaussian_1d(grid, 0.0, 1.0 / 9.0, 0.0, 0.0).unwrap();
    assert!(fidelity(&gauss, &ground).sqrt() >= 1.0 - 1e-8);
    assert_abs_diff_eq!(energy_1d(&gauss, &v).unwrap(), 4.5, epsilon = 1e-6);
}

#[test]
fn moving_packet_kinetic_energy() {
    // ⟨p²⟩/2 for exp(-x²/(2s) + ipx) is p²/2 + 1/(4s).
    let grid = Grid1D::new(-120.0, 120.0, 2048).unwrap();
    let psi = make_gaussian_1d(grid, -20.0, 25.0, 1.0, 0.0).unwrap();
    let zero = vec![0.0; grid.n()];
    assert_abs_diff_eq!(energy_1d(&psi, &zero).unwrap(), 0.51, epsilon = 1e-6);
}

#[test]
fn free_spreading_follows_closed_form() {
    let grid = Grid1D::new(-60.0, 60.0, 1024).unwrap();
    let s = 2.0;
    let psi = make_gaussian_1d(grid, -5.0, s, 0.7, 0.0).unwrap();
    let zero = vec![0.0; grid.n()];
    let plan = EvolutionPlan::new(0.01, 1000)
        .unwrap()
        .record_every(100)
        .capture_states(true);
    let traj = evolve_1d_static(&psi, &zero, &plan).unwrap();
    for snap in &traj.snapshots {
        let t = snap.time;
        let (mean, var) = snap.state.as_ref().unwrap().moments();
        let expect = s / 2.0 + t * t / (2.0 * s);
        assert!(
            ((var - expect) / expect).abs() < 1e-4,
            "t={t}: {var} vs {expect}"
        );
        assert_abs_diff_eq!(mean, -5.0 + 0.7 * t, epsilon = 1e-6);
    }
    let d = &traj.diagnostics;
    assert!(d.max_norm_drift_per_step <= 1e-12);
    assert!((d.final_energy - d.initial_energy).abs() <= 1e-10);
}

#[test]
fn free_spreading_on_both_axes() {
    let com = Grid1D::new(-40.0, 40.0, 256).unwrap();
    let int = Grid1D::new(-16.0, 16.0, 256).unwrap();
    let (sc, si) = (4.0, 0.5);
    let phi = make_gaussian_1d(com, 0.0, sc, 0.0, 0.0).unwrap();
    let psi = make_gaussian_1d(int, 0.0, si, 0.0, 0.0).unwrap();
    let w = Wavefunction2::product(&phi, &psi).unwrap();
    // A negligible spring leaves the internal axis free as well.
    let u = HarmonicInternal::new(1e-8).unwrap();
    let plan = EvolutionPlan::new(0.01, 200).unwrap();
    let traj = evolve_2d(&w, &free(), &u, &plan).unwrap();
    let t = traj.final_time;
    let moments = |marg: &[f64], grid: &Grid1D| {
        let xs = grid.positions();
        let m: f64 = marg.iter().sum();
        let var: f64 = xs.iter().zip(marg).map(|(x, r)| x * x * r).sum::<f64>() / m;
        var
    };
    let last = traj.snapshots.last().unwrap();
    let var_com = moments(&last.marginals[0], &com);
    let expect_com = sc / 2.0 + t * t / (2.0 * sc);
    assert!(((var_com - expect_com) / expect_com).abs() < 1e-4);
    let var_int = moments(&last.marginals[1], &int);
    let expect_int = si / 2.0 + t * t / (2.0 * si);
    assert!(
        ((var_int - expect_int) / expect_int).abs() < 1e-4,
        "{var_int} {expect_int}"
    );
}

#[test]
fn separable_problem_factorizes() {
    // With no external potential the 2D step is the product of the 1D steps.
    let com = Grid1D::new(-30.0, 30.0, 256).unwrap();
    let int = Grid1D::new(-2.5, 2.5, 128).unwrap();
    let u = HarmonicInternal::new(20.25).unwrap();
    let phi = make_gaussian_1d(com, -4.0, 3.0, 1.0, 0.0).unwrap();
    let psi = make_gaussian_1d(int, 0.4, 1.0 / 9.0, 0.0, 0.0).unwrap();
    let w = Wavefunction2::product(&phi, &psi).unwrap();
    let dt = 0.005;
    for steps in [1, 2, 7, 40] {
        let plan = EvolutionPlan::new(dt, steps).unwrap();
        let joint = evolve_2d(&w, &free(), &u, &plan).unwrap().final_state;
        let zero = vec![0.0; com.n()];
        let uv: Vec<f64> = int.positions().iter().map(|&y| u.value(y)).collect();
        let a = evolve_1d_static(&phi, &zero, &plan).unwrap().final_state;
        let b = evolve_1d_static(&psi, &uv, &plan).unwrap().final_state;
        let expect = Wavefunction2::product(&a, &b).unwrap();
        let err = joint
            .amplitudes()
            .iter()
            .zip(expect.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-11, "{steps} steps: {err}");
    }
}

#[test]
fn ground_state_is_stationary_under_constant_drive() {
    let grid = Grid1D::new(-3.0, 3.0, 256).unwrap();
    let psi = make_gaussian_1d(grid, 0.0, 1.0 / 9.0, 0.0, 0.0).unwrap();
    let period = std::f64::consts::TAU / 9.0;
    let plan = EvolutionPlan::for_duration(1e-5, period)
        .unwrap()
        .record_every(7000)
        .capture_states(true);
    let traj = evolve_1d_parametric(&psi, &|_| 81.0, &plan).unwrap();
    let rho0 = psi.density();
    for snap in &traj.snapshots {
        let state = snap.state.as_ref().unwrap();
        let dev = state
            .density()
            .iter()
            .zip(&rho0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-8, "t={}: {dev}", snap.time);
    }
    // Global phase e^{-iωt/2}.
    let t = traj.final_time;
    let ov = psi.inner(&traj.final_state).unwrap();
    let phase = ov.arg();
    let expect =
        (-4.5 * t + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    assert_abs_diff_eq!(phase, expect, epsilon = 1e-6);
}

#[test]
fn displaced_ground_state_oscillates_classically() {
    let grid = Grid1D::new(-4.0, 4.0, 256).unwrap();
    let xi0 = 0.3;
    let psi = make_gaussian_1d(grid, xi0, 1.0 / 9.0, 0.0, 0.0).unwrap();
    let plan = EvolutionPlan::new(1e-3, 2000)
        .unwrap()
        .record_every(50)
        .capture_states(true);
    let traj = evolve_1d_parametric(&psi, &|_| 81.0, &plan).unwrap();
    for snap in &traj.snapshots {
        let (mean, _) = snap.state.as_ref().unwrap().moments();
        assert_abs_diff_eq!(mean, xi0 * (9.0 * snap.time).cos(), epsilon = 1e-4);
    }
}

#[test]
fn decoupled_internal_state_stays_put() {
    let com = Grid1D::new(-60.0, 60.0, 512).unwrap();
    let int = Grid1D::new(-3.0, 3.0, 256).unwrap();
    let u = HarmonicInternal::new(20.25).unwrap();
    let phi = make_gaussian_1d(com, 0.0, 25.0, 0.0, 0.0).unwrap();
    let psi = make_gaussian_1d(int, 0.0, 1.0 / 9.0, 0.0, 0.0).unwrap();
    let w = Wavefunction2::product(&phi, &psi).unwrap();
    // Strang splitting makes the Gaussian breathe with relative amplitude ~(ω dt)²/8.
    let plan = EvolutionPlan::new(0.0025, 4000)
        .unwrap()
        .record_every(500)
        .capture_states(true);
    let traj = evolve_2d(&w, &free(), &u, &plan).unwrap();
    for snap in &traj.snapshots {
        let state = snap.state.as_ref().unwrap();
        // ⟨ψ|ρ_int|ψ⟩ = ∫ dY |∫ dy ψ*(y) Ψ(Y, y)|².
        let m = int.n();
        let f: f64 = (0..com.n())
            .map(|i| {
                let row = state.row(i);
                let a: num_complex::Complex<f64> = row
                    .iter()
                    .zip(psi.amplitudes())
                    .map(|(x, p)| p.conj() * x)
                    .sum::<num_complex::Complex<f64>>()
                    * int.dx();
                a.norm_sqr()
            })
            .sum::<f64>()
            * com.dx();
        assert!(f >= 1.0 - 1e-8, "t={}: {f}", snap.time);
        assert_eq!(state.amplitudes().len(), com.n() * m);
    }
}

#[test]
fn time_reversal_restores_initial_state() {
    let grid = Grid1D::new(-60.0, 60.0, 1024).unwrap();
    let v = sample_potential(&grid, &SquareWell::new(2.64, 0.5).unwrap().into());
    let psi = make_gaussian_1d(grid, -10.0, 4.0, 1.0, 0.0).unwrap();
    let fwd = evolve_1d_static(&psi, &v, &EvolutionPlan::new(0.005, 2000).unwrap()).unwrap();
    let back = evolve_1d_static(
        &fwd.final_state,
        &v,
        &EvolutionPlan::new(-0.005, 2000).unwrap(),
    )
    .unwrap();
    assert!(fidelity(&psi, &back.final_state) >= 1.0 - 1e-10);

    let com = Grid1D::new(-30.0, 30.0, 256).unwrap();
    let int = Grid1D::new(-3.0, 3.0, 64).unwrap();
    let u = HarmonicInternal::new(20.25).unwrap();
    let well: ExternalPotential = SquareWell::new(2.64, 0.5).unwrap().into();
    let w = Wavefunction2::product(
        &make_gaussian_1d(com, -5.0, 2.0, 1.0, 0.0).unwrap(),
        &make_gaussian_1d(int, 0.3, 1.0 / 9.0, 0.0, 0.0).unwrap(),
    )
    .unwrap();
    // Reversibility does not care about wrap-around, so the boundary monitor is off.
    let plan = |dt: f64| EvolutionPlan::new(dt, 1000).unwrap().boundary_tol(1.0);
    let fwd = evolve_2d(&w, &well, &u, &plan(0.005)).unwrap();
    let back = evolve_2d(&fwd.final_state, &well, &u, &plan(-0.005)).unwrap();
    let f = w.inner(&back.final_state).unwrap().norm_sqr();
    assert!(f >= 1.0 - 1e-10, "{f}");
}

/// `‖ψ_dt - ψ_ref‖` at a fixed final time for a packet crossing a smoothed well.
fn convergence_errors() -> Vec<f64> {
    let grid = Grid1D::new(-60.0, 60.0, 1024).unwrap();
    let v = sample_potential(&grid, &SmoothedWell::new(2.64, 0.5, 0.2).unwrap().into());
    let psi = make_gaussian_1d(grid, -6.0, 2.0, 1.0, 0.0).unwrap();
    let t_end = 8.0;
    let run = |dt: f64| {
        evolve_1d_static(&psi, &v, &EvolutionPlan::for_duration(dt, t_end).unwrap())
            .unwrap()
            .final_state
    };
    let reference = run(0.02 / 64.0);
    [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let d = run(dt);
            let diff: Vec<_> = d
                .amplitudes()
                .iter()
                .zip(reference.amplitudes())
                .map(|(a, b)| a - b)
                .collect();
            Wavefunction1D::new(grid, diff).unwrap().norm()
        })
        .collect()
}

#[test]
fn strang_splitting_is_second_order() {
    let e = convergence_errors();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.6..=4.4).contains(&ratio), "errors {e:?}");
    }
}

#[test]
fn energy_is_conserved_through_scattering() {
    let grid = Grid1D::new(-120.0, 120.0, 2048).unwrap();
    let v = sample_potential(&grid, &SquareWell::new(2.64, 0.5).unwrap().into());
    let psi = make_gaussian_1d(grid, -20.0, 25.0, 1.0, 0.0).unwrap();
    let plan = EvolutionPlan::new(0.005, 20_000)
        .unwrap()
        .stop_when(StopCondition::cleared(20.0, 1.0));
    let traj = evolve_1d_static(&psi, &v, &plan).unwrap();
    let d = &traj.diagnostics;
    assert!(
        d.relative_energy_drift() <= 1e-6,
        "{}",
        d.relative_energy_drift()
    );
    assert!(d.max_norm_drift_per_step <= 1e-12);
}

#[test]
fn boundary_leak_aborts() {
    let grid = Grid1D::new(-20.0, 20.0, 256).unwrap();
    let psi = make_gaussian_1d(grid, 8.0, 2.0, 3.0, 0.0).unwrap();
    let zero = vec![0.0; grid.n()];
    let err = evolve_1d_static(&psi, &zero, &EvolutionPlan::new(0.01, 1000).unwrap()).unwrap_err();
    assert!(matches!(err, Error::BoundaryLeak { .. }), "{err:?}");
    assert!(err.is_numerical());
}

#[test]
fn unmet_stop_condition_is_reported() {
    let grid = Grid1D::new(-60.0, 60.0, 512).unwrap();
    let psi = make_gaussian_1d(grid, 0.0, 2.0, 0.0, 0.0).unwrap();
    let zero = vec![0.0; grid.n()];
    let plan = EvolutionPlan::new(0.01, 100)
        .unwrap()
        .stop_when(StopCondition::cleared(0.5, 1.0));
    assert!(matches!(
        evolve_1d_static(&psi, &zero, &plan),
        Err(Error::StopNotReached(_))
    ));
}

#[test]
fn energy_2d_of_product_adds_up() {
    let com = Grid1D::new(-60.0, 60.0, 512).unwrap();
    let int = Grid1D::new(-3.0, 3.0, 256).unwrap();
    let u = HarmonicInternal::new(20.25).unwrap();
    let w = Wavefunction2::product(
        &make_gaussian_1d(com, -20.0, 25.0, 1.0, 0.0).unwrap(),
        &make_gaussian_1d(int, 0.0, 1.0 / 9.0, 0.0, 0.0).unwrap(),
    )
    .unwrap();
    assert_abs_diff_eq!(
        energy_2d(&w, &free(), &u).unwrap(),
        0.51 + 4.5,
        epsilon = 1e-6
    );
    assert_eq!(w.grid(Axis::Com).n(), 512);
}
