//! Steady state of the DFIG DAE, index-1 linearization and modal analysis.

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::models::{
    currents_from_fluxes, labels, mppt_speed, residual_raw, DfigAlgebraic, DfigInputs, DfigModel,
    DfigState, LinearStateSpace, TorqueClosure, ALGEBRAIC_LABELS, SPEED_VALIDITY, STATE_LABELS,
};

/// Human-readable names of the ten algebraic constraints.
pub const CONSTRAINT_NAMES: [&str; 10] = [
    "q-axis stator flux",
    "d-axis stator flux",
    "q-axis rotor flux",
    "d-axis rotor flux",
    "active power balance",
    "reactive power balance",
    "q-axis rotor voltage control law",
    "d-axis rotor voltage control law",
    "electromagnetic torque",
    "mechanical torque",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingTargets {
    pub p_g: f64,
    #[serde(default)]
    pub q_g: f64,
    #[serde(default = "one")]
    pub v_qs: f64,
    #[serde(default)]
    pub v_ds: f64,
    pub wind_speed: f64,
    #[serde(default = "one")]
    pub omega_s: f64,
}

fn one() -> f64 {
    1.0
}

impl OperatingTargets {
    pub fn inputs(&self) -> DfigInputs {
        DfigInputs {
            u_ie: 0.0,
            q_g_star: self.q_g,
            v_qs: self.v_qs,
            v_ds: self.v_ds,
            omega_s: self.omega_s,
            wind_speed: self.wind_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfigOperatingPoint {
    pub state: DfigState,
    pub algebraic: DfigAlgebraic,
    pub inputs: DfigInputs,
    /// Scale on the power coefficient curve that makes the turbine supply
    /// exactly the equilibrium torque at this point.
    pub aero_scale: f64,
    pub max_residual: f64,
    pub iterations: usize,
}

impl DfigOperatingPoint {
    pub(crate) fn closure(&self) -> TorqueClosure {
        TorqueClosure::Curve {
            scale: self.aero_scale,
        }
    }
}

fn central_jacobian<F>(f: F, z: &[f64], rows: usize, rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut j = DMatrix::zeros(rows, z.len());
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        let h = rel_step * z[i].abs().max(1.0);
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        for r in 0..rows {
            j[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn initial_guess(m: &DfigModel, t: &OperatingTargets) -> Vec<f64> {
    let wr = mppt_speed(t.p_g, m.eta());
    let psi = [0.0, 1.0, 0.0, 1.0];
    let i = currents_from_fluxes(m, psi);
    let te = -t.p_g / wr;
    let x = [psi[0], psi[1], psi[2], psi[3], wr, wr, te, i[3], 0.0, 0.0];
    let a = [i[0], i[1], i[2], i[3], 0.0, 0.0, t.p_g, t.q_g, te, te];
    x.iter().chain(a.iter()).copied().collect()
}

/// Newton solve of derivatives = 0 and algebraic residuals = 0 with `P_g`
/// pinned to its target; the mechanical torque is left free and the
/// aerodynamic curve is then scaled to supply it.
pub fn solve_equilibrium(m: &DfigModel, t: &OperatingTargets) -> Result<DfigOperatingPoint> {
    m.validate()?;
    if !(t.wind_speed > 0.0) {
        return Err(CoreError::validation(format!(
            "operating wind speed {} must be > 0",
            t.wind_speed
        )));
    }
    if !(m.eta() * t.p_g >= 0.0) {
        return Err(CoreError::validation(format!(
            "operating point needs eta*P_g >= 0, got {}",
            m.eta() * t.p_g
        )));
    }
    let inputs = t.inputs();
    let closure = TorqueClosure::PowerTarget(t.p_g);
    let eval = |z: &[f64]| -> Vec<f64> {
        let (d, r) = residual_raw(&z[..10], &z[10..], &inputs, m, closure);
        d.iter().chain(r.iter()).copied().collect()
    };
    let mut z = initial_guess(m, t);
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut f = eval(&z);
    let mut iterations = 0;
    const TOL: f64 = 1e-12;
    while norm(&f) > TOL {
        if iterations >= 60 {
            return Err(CoreError::numeric(format!(
                "equilibrium Newton did not converge in {iterations} iterations, last max residual {:.3e}",
                norm(&f)
            )));
        }
        iterations += 1;
        let j = central_jacobian(eval, &z, 20, 1e-7);
        let rhs = -DVector::from_vec(f.clone());
        let step = match j.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                return Err(CoreError::numeric(format!(
                    "equilibrium Jacobian singular (condition estimate {:.3e})",
                    condition_estimate(&j)
                )))
            }
        };
        let f0 = norm(&f);
        let mut alpha = 1.0;
        let stalled;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
            let ft = eval(&trial);
            if ft.iter().all(|v| v.is_finite()) && (norm(&ft) < f0 || alpha < 1e-3) {
                // Roundoff floor: further steps no longer reduce the residual.
                stalled = norm(&ft) < 1e-10 && norm(&ft) > 0.5 * f0;
                z = trial;
                f = ft;
                break;
            }
            alpha *= 0.5;
        }
        debug!("equilibrium iter {iterations}: residual {:.3e} alpha {alpha}", norm(&f));
        if stalled {
            break;
        }
    }
    let state = DfigState::from_array(&z[..10]);
    let algebraic = DfigAlgebraic::from_array(&z[10..]);
    if !(SPEED_VALIDITY.0..=SPEED_VALIDITY.1).contains(&state.omega_r) {
        return Err(CoreError::validation(format!(
            "equilibrium rotor speed {} p.u. outside validity band",
            state.omega_r
        )));
    }
    let curve = m.aero.torque(state.omega_r, t.wind_speed);
    let aero_scale = if algebraic.t_m.abs() < 1e-12 {
        0.0
    } else if curve > 0.0 {
        -algebraic.t_m / curve
    } else {
        return Err(CoreError::validation(format!(
            "turbine produces no torque at w_r = {:.4}, wind {} m/s: P_g = {} unreachable",
            state.omega_r, t.wind_speed, t.p_g
        )));
    };
    if aero_scale < 0.0 {
        return Err(CoreError::validation(format!(
            "P_g = {} requires motoring torque; not reachable from the wind",
            t.p_g
        )));
    }
    let (d, r) = residual_raw(
        &z[..10],
        &z[10..],
        &inputs,
        m,
        TorqueClosure::Curve { scale: aero_scale },
    );
    let max_residual = d.iter().chain(r.iter()).fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(DfigOperatingPoint {
        state,
        algebraic,
        inputs,
        aero_scale,
        max_residual,
        iterations,
    })
}

/// Index-1 linearization with input `u_ie` and output `dp_g`.
pub fn linearize(m: &DfigModel, op: &DfigOperatingPoint) -> Result<LinearStateSpace> {
    // Cube root of machine epsilon balances truncation and roundoff for
    // central differences.
    linearize_with_step(m, op, f64::EPSILON.cbrt())
}

pub fn linearize_with_step(
    m: &DfigModel,
    op: &DfigOperatingPoint,
    rel_step: f64,
) -> Result<LinearStateSpace> {
    let x0 = op.state.to_array();
    let a0 = op.algebraic.to_array();
    let closure = op.closure();
    let inp = |u: f64| DfigInputs {
        u_ie: u,
        ..op.inputs
    };
    let fx = |x: &[f64]| residual_raw(x, &a0, &inp(0.0), m, closure).0.to_vec();
    let gx = |x: &[f64]| residual_raw(x, &a0, &inp(0.0), m, closure).1.to_vec();
    let fa = |a: &[f64]| residual_raw(&x0, a, &inp(0.0), m, closure).0.to_vec();
    let ga = |a: &[f64]| residual_raw(&x0, a, &inp(0.0), m, closure).1.to_vec();
    let fu = |u: &[f64]| residual_raw(&x0, &a0, &inp(u[0]), m, closure).0.to_vec();
    let gu = |u: &[f64]| residual_raw(&x0, &a0, &inp(u[0]), m, closure).1.to_vec();
    let jxx = central_jacobian(fx, &x0, 10, rel_step);
    let jax = central_jacobian(gx, &x0, 10, rel_step);
    let jxa = central_jacobian(fa, &a0, 10, rel_step);
    let jaa = central_jacobian(ga, &a0, 10, rel_step);
    let jxu = central_jacobian(fu, &[0.0], 10, rel_step);
    let jau = central_jacobian(gu, &[0.0], 10, rel_step);

    let svd = jaa.clone().svd(true, false);
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * svd.singular_values.max() {
        let u = svd.u.unwrap();
        let col = smallest_index(&svd.singular_values);
        let k = (0..u.nrows())
            .max_by(|&i, &j| u[(i, col)].abs().total_cmp(&u[(j, col)].abs()))
            .unwrap_or(0);
        return Err(CoreError::numeric(format!(
            "algebraic Jacobian is singular; offending constraint: {}",
            CONSTRAINT_NAMES[k]
        )));
    }
    let lu = jaa.lu();
    let s_ax = lu.solve(&jax).expect("nonsingular checked above");
    let s_au = lu.solve(&jau).expect("nonsingular checked above");
    let a = &jxx - &jxa * &s_ax;
    let b = &jxu - &jxa * &s_au;
    // dp_g = -(J_aa^-1 (J_ax dx + J_au du)) row of p_g.
    let pg = 6;
    let c = -s_ax.rows(pg, 1).into_owned();
    let d = -s_au.rows(pg, 1).into_owned();
    let ss = LinearStateSpace {
        a,
        b,
        e: DMatrix::zeros(10, 0),
        c,
        d,
        f: DMatrix::zeros(1, 0),
        states: labels(&STATE_LABELS),
        inputs: labels(&["u_ie"]),
        disturbances: vec![],
        outputs: labels(&["dp_g"]),
    };
    ss.validate()?;
    Ok(ss)
}

fn smallest_index(sv: &DVector<f64>) -> usize {
    sv.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Algebraic variables that go with a state near the operating point, used
/// to label the linearized outputs.
pub fn algebraic_labels() -> Vec<String> {
    labels(&ALGEBRAIC_LABELS)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalAnalysis {
    /// Sorted by |Re| ascending; conjugate pairs list +Im first.
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors, one per mode, unit 2-norm.
    pub right: Vec<Vec<Complex64>>,
    /// Left eigenvectors: rows of `V^-1`, so `w_i v_i = 1`.
    pub left: Vec<Vec<Complex64>>,
    /// `participation[state][mode]`; columns sum to 1.
    #[serde(with = "crate::serde_mat")]
    pub participation: DMatrix<f64>,
    pub condition: f64,
}

impl ModalAnalysis {
    pub fn participation_of(&self, state: usize, mode: usize) -> f64 {
        self.participation[(state, mode)]
    }
}

fn sort_modes(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| {
        a.re.abs()
            .total_cmp(&b.re.abs())
            .then(a.im.abs().total_cmp(&b.im.abs()))
            .then(b.im.total_cmp(&a.im))
    });
}

/// Eigen decomposition with participation factors.
pub fn modal_analysis(a: &DMatrix<f64>) -> Result<ModalAnalysis> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(CoreError::validation("modal analysis needs a nonempty square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numeric("matrix has non-finite entries"));
    }
    let mut ev: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    sort_modes(&mut ev);
    let anorm = a.norm().max(1e-300);
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let mut vecs: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for k in 0..n {
        let lam = ev[k];
        // Conjugate of a vector already found.
        if lam.im < 0.0 {
            if let Some(j) = (0..k).find(|&j| (ev[j] - lam.conj()).norm() <= 1e-9 * anorm && ev[j].im > 0.0) {
                let v = vecs[j].map(|c| c.conj());
                vecs.push(v);
                continue;
            }
        }
        let cluster: Vec<usize> = (0..k).filter(|&j| (ev[j] - lam).norm() <= 1e-8 * anorm).collect();
        let shift = lam + Complex64::new(1e-10 * anorm, 1e-10 * anorm);
        let mut m = ac.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let lu = m.lu();
        let mut v = DVector::from_fn(n, |i, _| {
            Complex64::new(1.0 + ((i * 7 + cluster.len() * 3) % 11) as f64 * 0.1, 0.0)
        });
        for _ in 0..4 {
            for &j in &cluster {
                let p = vecs[j].dotc(&v);
                v -= &vecs[j] * p;
            }
            v = lu
                .solve(&v)
                .ok_or_else(|| CoreError::numeric("inverse iteration solve failed"))?;
            let nv = v.norm();
            if !(nv.is_finite() && nv > 0.0) {
                return Err(CoreError::numeric("inverse iteration produced a degenerate vector"));
            }
            v /= Complex64::new(nv, 0.0);
        }
        // Phase so the largest component is real and positive.
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |(bi, bv), (i, c)| {
            if c.norm() > bv {
                (i, c.norm())
            } else {
                (bi, bv)
            }
        });
        let ph = v[imax] / Complex64::new(v[imax].norm(), 0.0);
        v /= ph;
        vecs.push(v);
    }
    let vmat = DMatrix::from_columns(&vecs);
    let w = vmat.clone().try_inverse().ok_or_else(|| {
        CoreError::numeric("eigenvector matrix is singular: A is defective (Jordan block); participation undefined")
    })?;
    let condition = vmat.norm() * w.norm();
    if !(condition < 1e8) {
        return Err(CoreError::numeric(format!(
            "eigenvector matrix condition {condition:.3e}: A is numerically defective, Jordan structure makes participation factors unreliable"
        )));
    }
    for (k, v) in vecs.iter().enumerate() {
        let r = (&ac * v - v * ev[k]).norm();
        if r > 1e-8 * anorm {
            return Err(CoreError::numeric(format!(
                "eigenpair {k} residual {r:.3e} exceeds tolerance"
            )));
        }
    }
    let mut participation = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut total = 0.0;
        for k in 0..n {
            let p = (vmat[(k, i)] * w[(i, k)]).norm();
            participation[(k, i)] = p;
            total += p;
        }
        for k in 0..n {
            participation[(k, i)] /= total;
        }
    }
    let right = vecs.iter().map(|v| v.iter().copied().collect()).collect();
    let left = (0..n).map(|i| w.row(i).iter().copied().collect()).collect();
    Ok(ModalAnalysis {
        eigenvalues: ev,
        right,
        left,
        participation,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_participation_is_identity() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let ma = modal_analysis(&a).unwrap();
        assert!((ma.participation - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert_eq!(ma.eigenvalues[0].re, -1.0);
    }

    #[test]
    fn symmetric_equal_diagonal_splits_evenly() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 0.7, 0.7, -2.0]);
        let ma = modal_analysis(&a).unwrap();
        for v in ma.participation.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_pair_ordering() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 5.0, 0.0, -5.0, -1.0, 0.0, 0.0, 0.0, -0.1]);
        let ma = modal_analysis(&a).unwrap();
        assert!((ma.eigenvalues[0].re + 0.1).abs() < 1e-12);
        assert!(ma.eigenvalues[1].im > 0.0);
        assert!((ma.eigenvalues[1] - ma.eigenvalues[2].conj()).norm() < 1e-12);
    }

    #[test]
    fn defective_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let err = modal_analysis(&a).unwrap_err();
        assert!(err.to_string().contains("defective"), "{err}");
    }
}
