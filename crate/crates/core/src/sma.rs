//! Selective modal analysis: keep one state, fold the rest in through the
//! mode that state dominates.

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::equilibrium::ModalAnalysis;
use crate::error::{CoreError, Result};
use crate::models::LinearStateSpace;

/// `(A, B, C)` permuted so the relevant state comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub relevant: String,
    /// `order[k]` is the original index of permuted state `k`.
    pub order: Vec<usize>,
    pub a11: f64,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub b_r: DMatrix<f64>,
    pub b_z: DMatrix<f64>,
    pub c_r: DMatrix<f64>,
    pub c_z: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Largest real part among eigenvalues of `A22`.
    pub a22_abscissa: f64,
}

impl Partition {
    /// Undo the permutation: returns `(A, B, C)` in the original order.
    pub fn reassemble(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.order.len();
        let m = self.b_r.ncols();
        let q = self.c_r.nrows();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(q, n);
        let ap = |i: usize, j: usize| -> f64 {
            match (i, j) {
                (0, 0) => self.a11,
                (0, j) => self.a12[(0, j - 1)],
                (i, 0) => self.a21[(i - 1, 0)],
                (i, j) => self.a22[(i - 1, j - 1)],
            }
        };
        for i in 0..n {
            for j in 0..n {
                a[(self.order[i], self.order[j])] = ap(i, j);
            }
            for k in 0..m {
                b[(self.order[i], k)] = if i == 0 { self.b_r[(0, k)] } else { self.b_z[(i - 1, k)] };
            }
            for r in 0..q {
                c[(r, self.order[i])] = if i == 0 { self.c_r[(r, 0)] } else { self.c_z[(r, i - 1)] };
            }
        }
        (a, b, c)
    }
}

pub fn partition(ss: &LinearStateSpace, relevant: &str) -> Result<Partition> {
    ss.validate()?;
    let idx = ss.state_index(relevant).ok_or_else(|| {
        CoreError::validation(format!(
            "relevant state `{relevant}` not among {:?}",
            ss.states
        ))
    })?;
    let n = ss.n_states();
    if n < 2 {
        return Err(CoreError::validation("partition needs at least two states"));
    }
    let order: Vec<usize> = std::iter::once(idx).chain((0..n).filter(|&i| i != idx)).collect();
    let a = &ss.a;
    let z = &order[1..];
    let a22 = DMatrix::from_fn(n - 1, n - 1, |i, j| a[(z[i], z[j])]);
    let a22_abscissa = a22
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if a22_abscissa >= 0.0 {
        return Err(CoreError::validation(format!(
            "A22 has an eigenvalue with real part {a22_abscissa:.4e} >= 0; the quasi-static elimination is invalid"
        )));
    }
    Ok(Partition {
        relevant: relevant.to_string(),
        a11: a[(idx, idx)],
        a12: DMatrix::from_fn(1, n - 1, |_, j| a[(idx, z[j])]),
        a21: DMatrix::from_fn(n - 1, 1, |i, _| a[(z[i], idx)]),
        a22,
        b_r: ss.b.rows(idx, 1).into_owned(),
        b_z: DMatrix::from_fn(n - 1, ss.b.ncols(), |i, k| ss.b[(z[i], k)]),
        c_r: ss.c.columns(idx, 1).into_owned(),
        c_z: DMatrix::from_fn(ss.c.nrows(), n - 1, |r, j| ss.c[(r, z[j])]),
        d: ss.d.clone(),
        order,
        a22_abscissa,
    })
}

/// Eigenvalue of the mode in which `state` participates most. Ties go to
/// the mode with smaller |Re|.
pub fn select_relevant_mode(ma: &ModalAnalysis, state: usize) -> Result<f64> {
    let n = ma.eigenvalues.len();
    if state >= n {
        return Err(CoreError::validation(format!("state index {state} out of range")));
    }
    let mut best = 0;
    for k in 1..n {
        let (pk, pb) = (ma.participation[(state, k)], ma.participation[(state, best)]);
        if pk > pb + 1e-12 {
            best = k;
        } else if (pk - pb).abs() <= 1e-12 && ma.eigenvalues[k].re.abs() < ma.eigenvalues[best].re.abs() {
            best = k;
        }
    }
    let ties: Vec<usize> = (0..n)
        .filter(|&k| k != best && (ma.participation[(state, k)] - ma.participation[(state, best)]).abs() <= 1e-12)
        .collect();
    if !ties.is_empty() {
        info!(
            "participation tie for state {state} between modes {best} and {ties:?}; kept {} (smaller |Re|)",
            ma.eigenvalues[best]
        );
    }
    let lam = ma.eigenvalues[best];
    if lam.im.abs() > 1e-9 * (1.0 + lam.re.abs()) {
        return Err(CoreError::validation(format!(
            "most relevant mode {lam} is complex; first-order reduction needs a real mode"
        )));
    }
    Ok(lam.re)
}

/// First-order model `x' = A_rd x + B_rd u`, `y = C_rd x + D_rd u`.
///
/// The quasi-static input map `M = (-A22)^-1 B_z` is uncertain by
/// `+-delta_fraction * M`; `b_delta` and `d_delta` are the shifts of
/// `B_rd` and `D_rd` per unit of that relative perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub relevant_state: String,
    pub lambda_r: f64,
    pub a_rd: f64,
    pub b_rd: f64,
    pub c_rd: f64,
    pub d_rd: f64,
    pub delta_nominal: Vec<f64>,
    pub delta_fraction: f64,
    pub b_delta: f64,
    pub d_delta: f64,
    pub a22_abscissa: f64,
}

impl ReducedModel {
    /// `(B_rd, D_rd)` at relative perturbation `s * delta_fraction`, `s` in [-1, 1].
    pub fn perturbed(&self, s: f64) -> (f64, f64) {
        let k = s * self.delta_fraction;
        (self.b_rd + k * self.b_delta, self.d_rd + k * self.d_delta)
    }

    pub fn with_bd(&self, b_rd: f64, d_rd: f64) -> Self {
        Self {
            b_rd,
            d_rd,
            ..self.clone()
        }
    }
}

pub fn reduce(p: &Partition, lambda_r: f64, delta_fraction: f64) -> Result<ReducedModel> {
    if p.b_r.ncols() != 1 || p.c_r.nrows() != 1 {
        return Err(CoreError::validation(
            "first-order reduction supports one input and one output",
        ));
    }
    if !(0.0..1.0).contains(&delta_fraction) {
        return Err(CoreError::validation(format!(
            "delta_fraction {delta_fraction} must lie in [0, 1)"
        )));
    }
    let nz = p.a22.nrows();
    let mut shifted = -&p.a22;
    for i in 0..nz {
        shifted[(i, i)] += lambda_r;
    }
    let lu = shifted.lu();
    let s = lu.solve(&p.a21).ok_or_else(|| {
        CoreError::numeric(format!("(lambda_r I - A22) is singular at lambda_r = {lambda_r}"))
    })?;
    let m = (-&p.a22)
        .lu()
        .solve(&p.b_z)
        .ok_or_else(|| CoreError::numeric("A22 is singular"))?;
    let a_rd = p.a11 + (&p.a12 * &s)[(0, 0)];
    let c_rd = p.c_r[(0, 0)] + (&p.c_z * &s)[(0, 0)];
    let b_delta = (&p.a12 * &m)[(0, 0)];
    let d_delta = (&p.c_z * &m)[(0, 0)];
    let out = ReducedModel {
        relevant_state: p.relevant.clone(),
        lambda_r,
        a_rd,
        b_rd: p.b_r[(0, 0)] + b_delta,
        c_rd,
        d_rd: p.d[(0, 0)] + d_delta,
        delta_nominal: m.column(0).iter().copied().collect(),
        delta_fraction,
        b_delta,
        d_delta,
        a22_abscissa: p.a22_abscissa,
    };
    if !(out.a_rd < 0.0) {
        return Err(CoreError::numeric(format!(
            "reduced model is not stable: A_rd = {}",
            out.a_rd
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::modal_analysis;
    use crate::models::labels;

    fn ss3() -> LinearStateSpace {
        LinearStateSpace {
            a: DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.2, 0.3, -4.0, 0.1, 0.2, 0.4, -6.0]),
            b: DMatrix::from_column_slice(3, 1, &[1.0, 0.5, -0.3]),
            e: DMatrix::zeros(3, 0),
            c: DMatrix::from_row_slice(1, 3, &[0.7, 0.1, 0.9]),
            d: DMatrix::from_element(1, 1, 0.2),
            f: DMatrix::zeros(1, 0),
            states: labels(&["a", "b", "c"]),
            inputs: labels(&["u"]),
            disturbances: vec![],
            outputs: labels(&["y"]),
        }
    }

    #[test]
    fn partition_round_trip() {
        let ss = ss3();
        let p = partition(&ss, "b").unwrap();
        assert_eq!(p.a22.shape(), (2, 2));
        let (a, b, c) = p.reassemble();
        assert_eq!(a, ss.a);
        assert_eq!(b, ss.b);
        assert_eq!(c, ss.c);
    }

    #[test]
    fn decoupled_case_is_exact() {
        let mut ss = ss3();
        ss.a[(0, 1)] = 0.0;
        ss.a[(0, 2)] = 0.0;
        ss.c[(0, 1)] = 0.0;
        ss.c[(0, 2)] = 0.0;
        let p = partition(&ss, "a").unwrap();
        let r = reduce(&p, -1.0, 0.0).unwrap();
        assert_eq!(r.a_rd, -1.0);
        assert_eq!(r.c_rd, 0.7);
    }

    #[test]
    fn diagonal_selects_own_mode() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, -1.0, -2.0]));
        let ma = modal_analysis(&a).unwrap();
        assert!((select_relevant_mode(&ma, 0).unwrap() + 3.0).abs() < 1e-12);
        assert!((select_relevant_mode(&ma, 2).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_participation_prefers_slower_mode() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let ma = modal_analysis(&a).unwrap();
        assert!((select_relevant_mode(&ma, 0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_mode_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 5.0, -5.0, -1.0]);
        let ma = modal_analysis(&a).unwrap();
        assert!(select_relevant_mode(&ma, 0).is_err());
    }

    #[test]
    fn unstable_fast_block_rejected() {
        let mut ss = ss3();
        ss.a[(2, 2)] = 1.0;
        assert!(partition(&ss, "a").is_err());
    }
}
