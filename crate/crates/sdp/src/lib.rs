//! Dense interior-point solver for small linear matrix inequality problems.
//!
//! Problems are posed over a vector of scalar decision variables. Each
//! constraint is an affine symmetric matrix function
//! `F(x) = F0 + sum_i x_i F_i` required to be negative or positive definite.
//! Matrix-valued decision variables are handled by vectorisation, see
//! [`SymmetricIndex`].
//!
//! The solver runs a phase-1 feasibility search followed by primal-dual
//! path following (HKM direction, Mehrotra predictor-corrector). Everything is dense and single threaded;
//! the target scale is a few hundred variables and blocks below 100x100.

mod error;
mod jacobi;
mod problem;
mod solver;
mod symmetric;
mod verify;

pub use error::SdpError;
pub use problem::{FullVar, LmiBuilder, LmiConstraint, LmiProblem, Sense, SymmetricVar, VarId};
pub use solver::{solve, LmiSolution, SolveStatus, SolverOptions};
pub use symmetric::SymmetricIndex;
pub use verify::{verify, CertificateReport, ConstraintCertificate};
