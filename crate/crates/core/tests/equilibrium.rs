use mrcie_core::defaults;
use mrcie_core::equilibrium::{linearize, linearize_with_step, modal_analysis, solve_equilibrium, OperatingTargets};
use mrcie_core::models::{dfig_residual, electromagnetic_torque};

fn targets(p_g: f64) -> OperatingTargets {
    OperatingTargets {
        p_g,
        q_g: 0.0,
        v_qs: 1.0,
        v_ds: 0.0,
        wind_speed: defaults::WIND_SPEED,
        omega_s: 1.0,
    }
}

fn within(v: f64, r: f64, tol: f64) -> bool {
    ((v - r) / r).abs() <= tol
}

#[test]
fn operating_point_matches_published_values() {
    let m = defaults::dfig_model();
    let op = solve_equilibrium(&m, &targets(defaults::P_G_TARGET)).unwrap();
    println!("{op:#?}");
    assert!(within(op.state.omega_r, 1.150, 0.02), "{}", op.state.omega_r);
    assert!(within(op.state.psi_ds, 1.015, 0.02), "{}", op.state.psi_ds);
    assert!(within(op.algebraic.i_qr, 0.671, 0.02), "{}", op.algebraic.i_qr);
    assert!(op.algebraic.q_g.abs() < 1e-3);
    assert!(op.max_residual < 1e-8);
    let r = dfig_residual(&op.state, &op.algebraic, &op.inputs, &m, op.aero_scale).unwrap();
    assert!(r.max_abs() < 1e-8);
    let te = electromagnetic_torque(&m, op.state.psi_qs, op.state.psi_ds, op.algebraic.i_qr, op.algebraic.i_dr);
    assert!((te - op.algebraic.t_e).abs() < 1e-10);
    assert!((te - op.algebraic.t_m).abs() < 1e-10);
}

#[test]
fn zero_power_point_has_no_torque() {
    let m = defaults::dfig_model();
    let op = solve_equilibrium(&m, &targets(0.0)).unwrap();
    // Only copper losses remain to be covered by the turbine.
    assert!(op.algebraic.i_qr.abs() < 1e-2, "{}", op.algebraic.i_qr);
    assert!(op.algebraic.t_e.abs() < 1e-2, "{}", op.algebraic.t_e);
}

#[test]
fn slow_modes_and_participation() {
    let m = defaults::dfig_model();
    let op = solve_equilibrium(&m, &targets(defaults::P_G_TARGET)).unwrap();
    let ss = linearize(&m, &op).unwrap();
    let ma = modal_analysis(&ss.a).unwrap();
    for l in &ma.eigenvalues {
        println!("{:.5} {:+.4}i", l.re, l.im);
    }
    let wr = ss.state_index("omega_r").unwrap();
    let (mode, p) = (0..10)
        .map(|k| (k, ma.participation[(wr, k)]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    println!("omega_r mode {} participation {p}", ma.eigenvalues[mode]);
    for (target, got) in [(-0.001, ma.eigenvalues[0].re), (-0.05, ma.eigenvalues[1].re), (-0.26, ma.eigenvalues[2].re)] {
        assert!(within(got, target, 0.10), "{got} vs {target}");
    }
    assert!((p - 0.85).abs() <= 0.05);
    for c in 0..10 {
        let s: f64 = ma.participation.column(c).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn finite_difference_step_halving_is_consistent() {
    let m = defaults::dfig_model();
    let op = solve_equilibrium(&m, &targets(defaults::P_G_TARGET)).unwrap();
    let h = f64::EPSILON.cbrt();
    let a1 = linearize_with_step(&m, &op, h).unwrap().a;
    let a2 = linearize_with_step(&m, &op, h / 2.0).unwrap().a;
    let scale = a1.amax();
    for (x, y) in a1.iter().zip(a2.iter()) {
        assert!((x - y).abs() <= 1e-5 * x.abs().max(1e-3 * scale), "{x} vs {y}");
    }
}
