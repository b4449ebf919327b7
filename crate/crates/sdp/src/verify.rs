use nalgebra::SymmetricEigen;

use crate::problem::{LmiProblem, Sense};

#[derive(Debug, Clone)]
pub struct ConstraintCertificate {
    pub name: String,
    pub sense: Sense,
    /// Largest eigenvalue for `<` constraints, smallest for `>`.
    pub extreme_eigenvalue: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub constraints: Vec<ConstraintCertificate>,
    pub passed: bool,
}

/// Rechecks every constraint at `x` with a full symmetric eigensolve.
pub fn verify(problem: &LmiProblem, x: &[f64], tol: f64) -> CertificateReport {
    let constraints: Vec<_> = problem
        .constraints()
        .iter()
        .map(|con| {
            let ev = SymmetricEigen::new(con.evaluate(x)).eigenvalues;
            let (extreme, passed) = match con.sense {
                Sense::NegativeDefinite => {
                    let m = ev.max();
                    (m, m < -tol)
                }
                Sense::PositiveDefinite => {
                    let m = ev.min();
                    (m, m > tol)
                }
            };
            ConstraintCertificate {
                name: con.name.clone(),
                sense: con.sense,
                extreme_eigenvalue: extreme,
                passed,
            }
        })
        .collect();
    let passed = constraints.iter().all(|c| c.passed);
    CertificateReport {
        constraints,
        passed,
    }
}
