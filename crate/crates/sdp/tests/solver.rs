use approx::assert_relative_eq;
use lmi_sdp::{solve, verify, LmiBuilder, LmiProblem, Sense, SolveStatus, SolverOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Writes the symmetric variable `P` into diagonal block `b` (no doubling).
fn put_sym(builder: &mut LmiBuilder, p: &lmi_sdp::SymmetricVar, b: usize, scale: f64) {
    let n = p.n();
    for i in 0..n {
        for j in 0..n {
            builder.term(p.at(i, j), b, b, i, j, 0.5 * scale);
        }
    }
}

#[test]
fn trace_minimisation_with_identity_lower_bound() {
    // min tr X  s.t.  X - I > 0  =>  X = I, objective 2.
    let mut p = LmiProblem::new();
    let x = p.add_symmetric("X", 2);
    p.set_objective(x.at(0, 0), 1.0);
    p.set_objective(x.at(1, 1), 1.0);
    let mut b = LmiBuilder::new("X > I", Sense::PositiveDefinite, &[2]);
    put_sym(&mut b, &x, 0, 1.0);
    b.constant_sym(0, &(-DMatrix::identity(2, 2)));
    p.add_constraint(b.build());
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
    assert_relative_eq!(sol.objective, 2.0, epsilon = 1e-5);
    let xv = x.value(&sol.x);
    assert_relative_eq!(xv[(0, 1)], 0.0, epsilon = 1e-5);
}

fn lyapunov_problem(a: &DMatrix<f64>) -> (LmiProblem, lmi_sdp::SymmetricVar) {
    // Find P > I with A^T P + P A < 0.
    let n = a.nrows();
    let mut p = LmiProblem::new();
    let pv = p.add_symmetric("P", n);
    let mut lyap = LmiBuilder::new("lyapunov", Sense::NegativeDefinite, &[n]);
    for r in 0..n {
        for c in 0..n {
            // (A^T P)_{rc} = sum_k A_{kr} P_{kc}; the builder adds the transpose.
            for k in 0..n {
                lyap.term(pv.at(k, c), 0, 0, r, c, a[(k, r)]);
            }
        }
    }
    p.add_constraint(lyap.build());
    let mut pos = LmiBuilder::new("P > I", Sense::PositiveDefinite, &[n]);
    put_sym(&mut pos, &pv, 0, 1.0);
    pos.constant_sym(0, &(-DMatrix::identity(n, n)));
    p.add_constraint(pos.build());
    (p, pv)
}

#[test]
fn lyapunov_certificate_for_stable_matrix() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    let (p, pv) = lyapunov_problem(&a);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
    let pm = pv.value(&sol.x);
    let l = a.transpose() * &pm + &pm * &a;
    let ev = l.symmetric_eigenvalues();
    assert!(ev.max() < 0.0, "{ev}");
    assert!(verify(&p, &sol.x, 1e-7).passed);
}

#[test]
fn unstable_matrix_is_infeasible() {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -1.0]);
    let (p, _) = lyapunov_problem(&a);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
    assert!(sol.infeasibility_bound.unwrap() >= 0.0);
}

#[test]
fn contradictory_scalar_bounds_are_infeasible() {
    // x > 1 and x < 0.
    let mut p = LmiProblem::new();
    let x = p.add_scalar("x");
    let mut a = LmiBuilder::new("x > 1", Sense::PositiveDefinite, &[1]);
    a.term(x, 0, 0, 0, 0, 0.5);
    a.constant(0, 0, 0, 0, -0.5);
    p.add_constraint(a.build());
    let mut b = LmiBuilder::new("x < 0", Sense::NegativeDefinite, &[1]);
    b.term(x, 0, 0, 0, 0, 0.5);
    p.add_constraint(b.build());
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn linear_program_on_scalars() {
    // min x + y  s.t.  diag(x - 1, y - 2) > 0.
    let mut p = LmiProblem::new();
    let x = p.add_scalar("x");
    let y = p.add_scalar("y");
    p.set_objective(x, 1.0);
    p.set_objective(y, 1.0);
    let mut b = LmiBuilder::new("box", Sense::PositiveDefinite, &[1, 1]);
    b.term(x, 0, 0, 0, 0, 0.5);
    b.term(y, 1, 1, 0, 0, 0.5);
    b.constant(0, 0, 0, 0, -0.5);
    b.constant(1, 1, 0, 0, -1.0);
    p.add_constraint(b.build());
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_relative_eq!(sol.objective, 3.0, epsilon = 1e-5);
}

#[test]
fn bounded_real_lemma_recovers_hinf_norm() {
    // G(s) = 1/(s+1): min g s.t. [[-2p, p, 1], [p, -g, 0], [1, 0, -g]] < 0.
    // Optimal g equals the H-infinity norm, 1.
    let mut p = LmiProblem::new();
    let pv = p.add_scalar("p");
    let g = p.add_scalar("g");
    p.set_objective(g, 1.0);
    let mut b = LmiBuilder::new("brl", Sense::NegativeDefinite, &[1, 1, 1]);
    b.term(pv, 0, 0, 0, 0, -1.0);
    b.term(pv, 0, 1, 0, 0, 1.0);
    b.constant(0, 2, 0, 0, 1.0);
    b.term(g, 1, 1, 0, 0, -0.5);
    b.term(g, 2, 2, 0, 0, -0.5);
    p.add_constraint(b.build());
    let mut pos = LmiBuilder::new("p > 0", Sense::PositiveDefinite, &[1]);
    pos.term(pv, 0, 0, 0, 0, 0.5);
    p.add_constraint(pos.build());
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
    assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-4);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
    let (p, _) = lyapunov_problem(&a);
    let s1 = solve(&p, &SolverOptions::default()).unwrap();
    let s2 = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(s1.x, s2.x);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Scaling every constraint by a positive factor does not change feasibility.
    #[test]
    fn feasibility_is_scale_invariant(
        diag in prop::collection::vec(-3.0f64..-0.2, 3),
        upper in prop::collection::vec(-1.0f64..1.0, 3),
        scale in 0.01f64..100.0,
    ) {
        let mut a = DMatrix::zeros(3, 3);
        for i in 0..3 { a[(i, i)] = diag[i]; }
        a[(0, 1)] = upper[0]; a[(0, 2)] = upper[1]; a[(1, 2)] = upper[2];
        let stable = a.clone() * scale;
        let (p1, _) = lyapunov_problem(&a);
        let (p2, _) = lyapunov_problem(&stable);
        let s1 = solve(&p1, &SolverOptions::default()).unwrap();
        let s2 = solve(&p2, &SolverOptions::default()).unwrap();
        prop_assert_eq!(s1.status, SolveStatus::Optimal);
        prop_assert_eq!(s2.status, SolveStatus::Optimal);
    }

    /// Any certified solution passes the independent eigenvalue check.
    #[test]
    fn optimal_solutions_verify(
        entries in prop::collection::vec(-2.0f64..2.0, 4),
        shift in 0.1f64..2.0,
    ) {
        let mut a = DMatrix::from_row_slice(2, 2, &entries);
        let max_re = a.complex_eigenvalues().iter().map(|e| e.re).fold(f64::MIN, f64::max);
        for i in 0..2 { a[(i, i)] -= max_re + shift; }
        let (p, _) = lyapunov_problem(&a);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(verify(&p, &sol.x, 1e-7).passed);
    }
}

#[test]
fn box_bound_keeps_unbounded_feasibility_problem_finite() {
    // Only P > 0 constrains P; without a box the barrier centre is at infinity.
    let mut p = LmiProblem::new();
    let pv = p.add_symmetric("P", 2);
    let mut b = LmiBuilder::new("P > 0", Sense::PositiveDefinite, &[2]);
    put_sym(&mut b, &pv, 0, 1.0);
    p.add_constraint(b.build());
    let opts = SolverOptions {
        box_bound: Some(10.0),
        ..SolverOptions::default()
    };
    let sol = solve(&p, &opts).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.x.iter().all(|v| v.abs() < 10.0));
}

#[test]
fn perturbed_solution_fails_verification() {
    // Lyapunov solution with P shifted by -10 I violates P > I.
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    let (p, pv) = lyapunov_problem(&a);
    let mut sol = solve(&p, &SolverOptions::default()).unwrap();
    for i in 0..2 {
        sol.x[pv.at(i, i)] -= 10.0 + sol.x[pv.at(i, i)];
    }
    let report = verify(&p, &sol.x, 1e-7);
    assert!(!report.passed);
    assert!(!report.constraints[1].passed);
}
