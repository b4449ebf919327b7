//! Model-reference tracking controller synthesis.
//!
//! The plant is the diesel unit plus the reduced wind model; the reference
//! is the SFR model with the scheduled inertia. A delay-dependent
//! bounded-real LMI is solved for a state feedback on the augmented state
//! `[x_p, x_r]`, optionally at every vertex of a parameter polytope.

use std::collections::BTreeMap;

use lmi_sdp::{
    solve, verify, FullVar, LmiBuilder, LmiProblem, Sense, SolveStatus, SolverOptions,
    SymmetricVar, VarId,
};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::models::{reference_state_space, DieselModel, ReferenceModel};
use crate::serde_mat::Mat;
use crate::sma::ReducedModel;

pub const PLANT_STATES: [&str; 4] = ["dw_d", "dp_m", "dp_v", "dw_r"];
pub const REFERENCE_STATES: [&str; 3] = ["dw_ref", "dp_m_ref", "dp_v_ref"];
const N: usize = 7;

/// Diesel unit plus reduced WTG, states `[dw_d, dP_m, dP_v, dw_r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub diesel: DieselModel,
    pub reduced: ReducedModel,
    #[serde(with = "crate::serde_mat")]
    pub a_p: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub b_p: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub e_p: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub c_p: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub d_p: DMatrix<f64>,
}

pub fn assemble_plant(d: &DieselModel, r: &ReducedModel) -> Result<PlantModel> {
    d.validate()?;
    if !(r.a_rd < 0.0) {
        return Err(CoreError::validation(format!(
            "reduced model must be stable, A_rd = {}",
            r.a_rd
        )));
    }
    let f = d.f_bar;
    let k = f / (2.0 * d.h_d);
    #[rustfmt::skip]
    let a_p = DMatrix::from_row_slice(4, 4, &[
        0.0, k, 0.0, k * r.c_rd,
        0.0, -1.0 / d.tau_d, 1.0 / d.tau_d, 0.0,
        -1.0 / (f * d.tau_sm * d.r_d), 0.0, -1.0 / d.tau_sm, 0.0,
        0.0, 0.0, 0.0, r.a_rd,
    ]);
    Ok(PlantModel {
        diesel: d.clone(),
        reduced: r.clone(),
        a_p,
        b_p: DMatrix::from_column_slice(4, 1, &[k * r.d_rd, 0.0, 0.0, r.b_rd]),
        e_p: DMatrix::from_column_slice(4, 1, &[-k, 0.0, 0.0, 0.0]),
        c_p: DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]),
        d_p: DMatrix::zeros(1, 1),
    })
}

/// Closed loop `x' = A x + B~ K x(t - nu) + E w`, `e = C x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSystem {
    #[serde(with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    /// `[B_p; 0]`, the delayed input channel.
    #[serde(with = "crate::serde_mat")]
    pub b_tilde: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub e: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub d_p: DMatrix<f64>,
    pub eta_m: f64,
    pub kappa: f64,
}

impl AugmentedSystem {
    /// `B(K) = B~ K`, the delayed state-feedback matrix.
    pub fn b_bar(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.b_tilde * k
    }

    /// Closed-loop matrix with the delay ignored.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a + self.b_bar(k)
    }
}

pub fn assemble_augmented(
    p: &PlantModel,
    reference: &ReferenceModel,
    eta_m: f64,
    kappa: f64,
) -> Result<AugmentedSystem> {
    if !(eta_m >= 0.0 && kappa >= 0.0) {
        return Err(CoreError::validation(format!(
            "delay bounds must be >= 0, got eta_m = {eta_m}, kappa = {kappa}"
        )));
    }
    if eta_m > kappa {
        return Err(CoreError::validation(format!(
            "eta_m = {eta_m} exceeds kappa = {kappa}"
        )));
    }
    let r = reference_state_space(reference)?;
    let mut a = DMatrix::zeros(N, N);
    a.view_mut((0, 0), (4, 4)).copy_from(&p.a_p);
    a.view_mut((4, 4), (3, 3)).copy_from(&r.a);
    let mut e = DMatrix::zeros(N, 2);
    e.view_mut((0, 0), (4, 1)).copy_from(&p.e_p);
    e.view_mut((4, 1), (3, 1)).copy_from(&r.e);
    let mut c = DMatrix::zeros(1, N);
    c.view_mut((0, 0), (1, 4)).copy_from(&p.c_p);
    c.view_mut((0, 4), (1, 3)).copy_from(&(-&r.c));
    let mut b_tilde = DMatrix::zeros(N, 1);
    b_tilde.view_mut((0, 0), (4, 1)).copy_from(&p.b_p);
    Ok(AugmentedSystem {
        a,
        b_tilde,
        e,
        c,
        d_p: p.d_p.clone(),
        eta_m,
        kappa,
    })
}

/// Relative bounds `[theta_lo, theta_hi]`: the parameter ranges over
/// `nominal * [1 - theta_lo, 1 + theta_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeSpec {
    pub h_d: [f64; 2],
    pub tau_d: [f64; 2],
    pub tau_sm: [f64; 2],
    /// Include the reduction band on `(B_rd, D_rd)` as one joint parameter.
    #[serde(default)]
    pub delta: bool,
}

impl PolytopeSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("h_d", self.h_d), ("tau_d", self.tau_d), ("tau_sm", self.tau_sm)] {
            if !(0.0..1.0).contains(&lo) || !(hi >= 0.0) {
                return Err(CoreError::validation(format!(
                    "polytope.{name} = [{lo}, {hi}]: lower bound must lie in [0, 1), upper >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        3 + usize::from(self.delta)
    }
}

/// One plant per corner, `2^parameter_count` in total. Corner bits are
/// ordered `h_d, tau_d, tau_sm, delta`, low bit first.
pub fn enumerate_vertices(nominal: &PlantModel, spec: &PolytopeSpec) -> Result<Vec<PlantModel>> {
    spec.validate()?;
    let n = spec.parameter_count();
    let corner = |nom: f64, b: [f64; 2], hi: bool| if hi { nom * (1.0 + b[1]) } else { nom * (1.0 - b[0]) };
    let d0 = &nominal.diesel;
    (0..1usize << n)
        .map(|mask| {
            let bit = |i: usize| mask >> i & 1 == 1;
            let d = DieselModel {
                h_d: corner(d0.h_d, spec.h_d, bit(0)),
                tau_d: corner(d0.tau_d, spec.tau_d, bit(1)),
                tau_sm: corner(d0.tau_sm, spec.tau_sm, bit(2)),
                ..d0.clone()
            };
            let r = if spec.delta {
                let s = if bit(3) { 1.0 } else { -1.0 };
                let (b, dd) = nominal.reduced.perturbed(s);
                nominal.reduced.with_bd(b, dd)
            } else {
                nominal.reduced.clone()
            };
            assemble_plant(&d, &r)
        })
        .collect()
}

/// What to do when the LMIs are infeasible at the requested delay bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DelayFallback {
    Fail,
    /// Bisect a common scale on `(eta_m, kappa)` and keep the largest
    /// certified one. The result records the bounds actually certified.
    LargestFeasible { steps: usize },
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub solver: SolverOptions,
    /// Weight on `k_a + k_b` in the objective, `gamma` has weight 1.
    pub gain_weight: f64,
    pub delay_fallback: DelayFallback,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions {
                box_bound: Some(1e4),
                ..SolverOptions::default()
            },
            gain_weight: 1.0,
            delay_fallback: DelayFallback::Fail,
        }
    }
}

/// Handles to the decision variables of an assembled problem.
#[derive(Debug, Clone)]
pub struct LmiVariables {
    pub gamma: VarId,
    pub k_a: VarId,
    pub k_b: VarId,
    pub p: SymmetricVar,
    pub q: Option<SymmetricVar>,
    pub m1: Option<SymmetricVar>,
    pub m2: Option<SymmetricVar>,
    pub u1: Option<FullVar>,
    pub u2: Option<FullVar>,
    pub v1: Option<FullVar>,
    pub v2: Option<FullVar>,
    pub k_bar: FullVar,
}

impl LmiVariables {
    fn delay_free(&self) -> bool {
        self.q.is_none()
    }
}

/// Matrix-valued linear expression `L X R` for a decision matrix `X`.
struct Term<'a> {
    slot: Box<dyn Fn(usize, usize) -> VarId + 'a>,
    rows: usize,
    cols: usize,
}

fn sym(v: &SymmetricVar) -> Term<'_> {
    Term {
        slot: Box::new(move |i, j| v.at(i, j)),
        rows: v.n(),
        cols: v.n(),
    }
}

fn full(v: &FullVar) -> Term<'_> {
    Term {
        slot: Box::new(move |i, j| v.at(i, j)),
        rows: v.rows,
        cols: v.cols,
    }
}

fn full_t(v: &FullVar) -> Term<'_> {
    Term {
        slot: Box::new(move |i, j| v.at(j, i)),
        rows: v.cols,
        cols: v.rows,
    }
}

/// Adds `scale * L X R` to block `(bi, bj)`; `None` stands for identity.
fn put(
    b: &mut LmiBuilder,
    bi: usize,
    bj: usize,
    l: Option<&DMatrix<f64>>,
    x: &Term,
    r: Option<&DMatrix<f64>>,
    scale: f64,
) {
    let rows = l.map_or(x.rows, |l| l.nrows());
    let cols = r.map_or(x.cols, |r| r.ncols());
    let lv = |a: usize, i: usize| l.map_or(if a == i { 1.0 } else { 0.0 }, |l| l[(a, i)]);
    let rv = |j: usize, c: usize| r.map_or(if j == c { 1.0 } else { 0.0 }, |r| r[(j, c)]);
    for a in 0..rows {
        for c in 0..cols {
            for i in 0..x.rows {
                let li = lv(a, i);
                if li == 0.0 {
                    continue;
                }
                for j in 0..x.cols {
                    let w = li * rv(j, c);
                    if w != 0.0 {
                        b.term((x.slot)(i, j), bi, bj, a, c, scale * w);
                    }
                }
            }
        }
    }
}

fn scalar_identity(b: &mut LmiBuilder, var: VarId, blk: usize, n: usize, scale: f64) {
    for i in 0..n {
        b.term(var, blk, blk, i, i, 0.5 * scale);
    }
}

/// Variables shared by all vertices, plus the objective and the
/// positivity and gain-size constraints.
pub fn declare_variables(p: &mut LmiProblem, delay_free: bool, eta_m_positive: bool, gain_weight: f64) -> LmiVariables {
    let gamma = p.add_scalar("gamma");
    let k_a = p.add_scalar("k_a");
    let k_b = p.add_scalar("k_b");
    let pv = p.add_symmetric("P", N);
    let (q, m1, m2, u1, u2, v1, v2) = if delay_free {
        (None, None, None, None, None, None, None)
    } else {
        let q = p.add_symmetric("Q", N);
        let m1 = eta_m_positive.then(|| p.add_symmetric("M1", N));
        let m2 = p.add_symmetric("M2", N);
        (
            Some(q),
            m1,
            Some(m2),
            Some(p.add_full("U1", N, N)),
            Some(p.add_full("U2", N, N)),
            Some(p.add_full("V1", N, N)),
            Some(p.add_full("V2", N, N)),
        )
    };
    let k_bar = p.add_full("Kbar", 1, N);
    p.set_objective(gamma, 1.0);
    p.set_objective(k_a, gain_weight);
    p.set_objective(k_b, gain_weight);

    for (name, v) in [("P > 0", Some(pv)), ("Q > 0", q), ("M1 > 0", m1), ("M2 > 0", m2)] {
        if let Some(v) = v {
            let mut b = LmiBuilder::new(name, Sense::PositiveDefinite, &[N]);
            put(&mut b, 0, 0, None, &sym(&v), None, 0.5);
            p.add_constraint(b.build());
        }
    }
    // [[-k_a I, Kbar^T], [Kbar, -1]] < 0
    let mut b = LmiBuilder::new("gain size k_a", Sense::NegativeDefinite, &[N, 1]);
    scalar_identity(&mut b, k_a, 0, N, -1.0);
    put(&mut b, 0, 1, None, &full_t(&k_bar), None, 1.0);
    b.constant(1, 1, 0, 0, -0.5);
    p.add_constraint(b.build());
    // [[k_b I, I], [I, P]] > 0
    let mut b = LmiBuilder::new("gain size k_b", Sense::PositiveDefinite, &[N, N]);
    scalar_identity(&mut b, k_b, 0, N, 1.0);
    b.constant_block(0, 1, &DMatrix::identity(N, N));
    put(&mut b, 1, 1, None, &sym(&pv), None, 0.5);
    p.add_constraint(b.build());

    LmiVariables {
        gamma,
        k_a,
        k_b,
        p: pv,
        q,
        m1,
        m2,
        u1,
        u2,
        v1,
        v2,
        k_bar,
    }
}

/// Delay-dependent bounded-real LMI for one vertex.
///
/// Block layout `[x, x(t-nu), x(t-kappa), U1-row, U2-row, w, e, M1-row,
/// M2-row]`; the `eta_m` rows are dropped when `eta_m = 0`. Without delay
/// the plain bounded-real lemma `[x, w, e]` is used.
pub fn vertex_constraint(aug: &AugmentedSystem, v: &LmiVariables, name: &str) -> lmi_sdp::LmiConstraint {
    let a = &aug.a;
    let bt = &aug.b_tilde;
    let e = &aug.e;
    let ct = aug.c.transpose();
    let at = a.transpose();
    let p = sym(&v.p);
    let kb = full(&v.k_bar);
    let kbt = full_t(&v.k_bar);
    let dp = aug.d_p[(0, 0)];

    if v.delay_free() {
        let mut b = LmiBuilder::new(name, Sense::NegativeDefinite, &[N, 2, 1]);
        put(&mut b, 0, 0, Some(a), &p, None, 1.0);
        put(&mut b, 0, 0, Some(bt), &kb, None, 1.0);
        b.constant_block(0, 1, e);
        put(&mut b, 0, 2, None, &p, Some(&ct), 1.0);
        put(&mut b, 0, 2, None, &kbt, None, dp);
        scalar_identity(&mut b, v.gamma, 1, 2, -1.0);
        b.constant(2, 2, 0, 0, -0.5);
        return b.build();
    }

    let (q, m2) = (sym(v.q.as_ref().unwrap()), sym(v.m2.as_ref().unwrap()));
    let (u1, u2) = (v.u1.as_ref().unwrap(), v.u2.as_ref().unwrap());
    let (v1, v2) = (v.v1.as_ref().unwrap(), v.v2.as_ref().unwrap());
    let m1 = v.m1.as_ref().map(sym);
    let has_m1 = m1.is_some();
    // Block indices; the eta_m rows shift everything when absent.
    let (x0, x1, x2) = (0, 1, 2);
    let r1 = has_m1.then_some(3);
    let r2 = if has_m1 { 4 } else { 3 };
    let w = r2 + 1;
    let out = w + 1;
    let s1 = has_m1.then_some(out + 1);
    let s2 = out + 1 + usize::from(has_m1);
    let mut sizes = vec![N, N, N];
    if has_m1 {
        sizes.push(N);
    }
    sizes.extend([N, 2, 1]);
    if has_m1 {
        sizes.push(N);
    }
    sizes.push(N);
    let mut b = LmiBuilder::new(name, Sense::NegativeDefinite, &sizes);
    let (eta, kap) = (aug.eta_m, aug.kappa);

    // Theta_11 = A P + P A^T + Q + U1 + U1^T
    put(&mut b, x0, x0, Some(a), &p, None, 1.0);
    put(&mut b, x0, x0, None, &q, None, 0.5);
    put(&mut b, x0, x0, None, &full(u1), None, 1.0);
    put(&mut b, x0, x1, None, &full(u1), None, -1.0);
    put(&mut b, x0, x1, None, &full_t(v1), None, 1.0);
    put(&mut b, x0, x2, Some(bt), &kb, None, 1.0);
    if let Some(r1) = r1 {
        put(&mut b, x0, r1, None, &full(u1), None, 1.0);
    }
    b.constant_block(x0, w, e);
    put(&mut b, x0, out, None, &p, Some(&ct), 1.0);
    if let Some(s1) = s1 {
        put(&mut b, x0, s1, None, &p, Some(&at), 1.0);
    }
    put(&mut b, x0, s2, None, &p, Some(&at), 1.0);

    // Theta_22 = -Q - V1 - V1^T + U2 + U2^T
    put(&mut b, x1, x1, None, &q, None, -0.5);
    put(&mut b, x1, x1, None, &full(v1), None, -1.0);
    put(&mut b, x1, x1, None, &full(u2), None, 1.0);
    put(&mut b, x1, x2, None, &full(u2), None, -1.0);
    put(&mut b, x1, x2, None, &full_t(v2), None, 1.0);
    if let Some(r1) = r1 {
        put(&mut b, x1, r1, None, &full(v1), None, 1.0);
    }
    put(&mut b, x1, r2, None, &full(u2), None, 1.0);

    put(&mut b, x2, x2, None, &full(v2), None, -1.0);
    put(&mut b, x2, r2, None, &full(v2), None, 1.0);
    put(&mut b, x2, out, None, &kbt, None, dp);
    let bt_t = bt.transpose();
    if let Some(s1) = s1 {
        put(&mut b, x2, s1, None, &kbt, Some(&bt_t), 1.0);
    }
    put(&mut b, x2, s2, None, &kbt, Some(&bt_t), 1.0);

    // (M_i - 2P) / delay on the free-weighting rows.
    if let (Some(r1), Some(m1)) = (r1, m1.as_ref()) {
        put(&mut b, r1, r1, None, m1, None, 0.5 / eta);
        put(&mut b, r1, r1, None, &p, None, -1.0 / eta);
    }
    put(&mut b, r2, r2, None, &m2, None, 0.5 / kap);
    put(&mut b, r2, r2, None, &p, None, -1.0 / kap);

    scalar_identity(&mut b, v.gamma, w, 2, -1.0);
    let et = e.transpose();
    if let Some(s1) = s1 {
        b.constant_block(w, s1, &et);
    }
    b.constant_block(w, s2, &et);
    b.constant(out, out, 0, 0, -0.5);

    if let (Some(s1), Some(m1)) = (s1, m1.as_ref()) {
        put(&mut b, s1, s1, None, m1, None, -0.5 / eta);
    }
    put(&mut b, s2, s2, None, &m2, None, -0.5 / kap);
    b.build()
}

/// Assembles the full problem over a set of vertices.
pub fn build_lmi(vertices: &[AugmentedSystem], gain_weight: f64) -> Result<(LmiProblem, LmiVariables)> {
    let first = vertices
        .first()
        .ok_or_else(|| CoreError::validation("at least one vertex is required"))?;
    for v in vertices {
        if v.a.shape() != (N, N) || v.b_tilde.shape() != (N, 1) || v.e.shape() != (N, 2) || v.c.shape() != (1, N) {
            return Err(CoreError::validation("augmented system dimensions must be 7 states, 1 input, 2 disturbances, 1 output"));
        }
        if v.eta_m != first.eta_m || v.kappa != first.kappa {
            return Err(CoreError::validation("all vertices must share the delay bounds"));
        }
    }
    let delay_free = first.kappa == 0.0;
    let mut p = LmiProblem::new();
    let vars = declare_variables(&mut p, delay_free, first.eta_m > 0.0, gain_weight);
    for (i, aug) in vertices.iter().enumerate() {
        let name = if vertices.len() == 1 {
            "tracking".to_string()
        } else {
            format!("tracking vertex {i}")
        };
        p.add_constraint(vertex_constraint(aug, &vars, &name));
    }
    Ok((p, vars))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub constraint: String,
    /// Largest eigenvalue for `< 0`, smallest for `> 0`.
    pub extreme_eigenvalue: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub gamma: f64,
    /// Guaranteed tracking gain `sqrt(gamma)`.
    pub tracking_bound: f64,
    pub k_a: f64,
    pub k_b: f64,
    /// Full gain `[K_p, K_r]`.
    pub k: Vec<f64>,
    pub k_p: Vec<f64>,
    pub k_r: Vec<f64>,
    pub variables: BTreeMap<String, Mat>,
    pub certificates: Vec<Certificate>,
    pub vertex_count: usize,
    /// Delay bounds the certificate holds for.
    pub eta_m: f64,
    pub kappa: f64,
    /// Delay bounds asked for; differ from the above after a fallback.
    pub requested_eta_m: f64,
    pub requested_kappa: f64,
    pub solver_iterations: usize,
    /// False when the LMIs are certified but the duality gap stayed open.
    pub optimal: bool,
    pub solver_message: String,
}

impl SynthesisResult {
    pub fn k_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.k.len(), &self.k)
    }

    /// `Kbar P^-1` from the stored variables.
    pub fn recovered_gain(&self) -> Result<DMatrix<f64>> {
        let p = &self.variables["P"].0;
        let kb = &self.variables["Kbar"].0;
        let pinv = p
            .clone()
            .cholesky()
            .ok_or_else(|| CoreError::numeric("stored P is not positive definite"))?
            .inverse();
        Ok(kb * pinv)
    }

    pub fn certified(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }
}

fn run(vertices: &[AugmentedSystem], opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let (problem, vars) = build_lmi(vertices, opts.gain_weight)?;
    info!(
        "synthesis: {} vertices, {} variables, {} constraints",
        vertices.len(),
        problem.num_vars(),
        problem.constraints().len()
    );
    let sol = solve(&problem, &opts.solver).map_err(|e| CoreError::validation(e.to_string()))?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Feasible => warn!("synthesis: gamma is an upper bound only ({})", sol.message),
        SolveStatus::Infeasible => {
            return Err(CoreError::Infeasible(format!(
                "tracking LMIs are infeasible (phase-1 bound {:.3e}); reduce the gap between the reference inertia and the diesel inertia or relax the delay bounds eta_m/kappa",
                sol.infeasibility_bound.unwrap_or(f64::NAN)
            )))
        }
        SolveStatus::NumericalFailure | SolveStatus::IterationLimit => {
            return Err(CoreError::numeric(format!(
                "LMI solver stopped with {:?}: {}",
                sol.status, sol.message
            )))
        }
    }
    let x = &sol.x;
    let report = verify(&problem, x, opts.solver.certificate_tolerance);
    let certificates: Vec<Certificate> = report
        .constraints
        .iter()
        .map(|c| Certificate {
            constraint: c.name.clone(),
            extreme_eigenvalue: c.extreme_eigenvalue,
            passed: c.passed,
        })
        .collect();
    if !report.passed {
        let bad: Vec<_> = certificates.iter().filter(|c| !c.passed).map(|c| c.constraint.clone()).collect();
        return Err(CoreError::numeric(format!(
            "solver reported optimal but the independent check fails on {bad:?}"
        )));
    }
    let mut variables = BTreeMap::new();
    variables.insert("P".to_string(), Mat(vars.p.value(x)));
    variables.insert("Kbar".to_string(), Mat(vars.k_bar.value(x)));
    for (name, v) in [("Q", vars.q), ("M1", vars.m1), ("M2", vars.m2)] {
        if let Some(v) = v {
            variables.insert(name.to_string(), Mat(v.value(x)));
        }
    }
    for (name, v) in [("U1", vars.u1), ("U2", vars.u2), ("V1", vars.v1), ("V2", vars.v2)] {
        if let Some(v) = v {
            variables.insert(name.to_string(), Mat(v.value(x)));
        }
    }
    let gamma = x[vars.gamma];
    let mut out = SynthesisResult {
        gamma,
        tracking_bound: gamma.max(0.0).sqrt(),
        k_a: x[vars.k_a],
        k_b: x[vars.k_b],
        k: vec![],
        k_p: vec![],
        k_r: vec![],
        variables,
        certificates,
        vertex_count: vertices.len(),
        eta_m: vertices[0].eta_m,
        kappa: vertices[0].kappa,
        requested_eta_m: vertices[0].eta_m,
        requested_kappa: vertices[0].kappa,
        solver_iterations: sol.iterations,
        optimal: sol.status == SolveStatus::Optimal,
        solver_message: sol.message,
    };
    let k = out.recovered_gain()?;
    out.k = k.iter().copied().collect();
    out.k_p = out.k[..4].to_vec();
    out.k_r = out.k[4..].to_vec();
    if out.k.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numeric("recovered gain is not finite"));
    }
    Ok(out)
}

/// Nominal synthesis for a single plant.
pub fn synthesize(aug: &AugmentedSystem, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    with_fallback(std::slice::from_ref(aug), opts, run, run)
}

fn scaled(vertices: &[AugmentedSystem], s: f64) -> Vec<AugmentedSystem> {
    vertices
        .iter()
        .map(|v| AugmentedSystem {
            eta_m: v.eta_m * s,
            kappa: v.kappa * s,
            ..v.clone()
        })
        .collect()
}

fn with_fallback(
    vertices: &[AugmentedSystem],
    opts: &SynthesisOptions,
    first_attempt: impl Fn(&[AugmentedSystem], &SynthesisOptions) -> Result<SynthesisResult>,
    solve_at: impl Fn(&[AugmentedSystem], &SynthesisOptions) -> Result<SynthesisResult>,
) -> Result<SynthesisResult> {
    let first = first_attempt(vertices, opts);
    let steps = match (&first, opts.delay_fallback) {
        (Err(CoreError::Infeasible(_)), DelayFallback::LargestFeasible { steps }) if vertices[0].kappa > 0.0 => steps,
        _ => return first,
    };
    let Err(CoreError::Infeasible(original)) = first else { unreachable!() };
    let (eta, kap) = (vertices[0].eta_m, vertices[0].kappa);
    warn!("infeasible at eta_m = {eta}, kappa = {kap}; searching for the largest certified delay scale");
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = None;
    for _ in 0..steps.max(1) {
        let mid = 0.5 * (lo + hi);
        match solve_at(&scaled(vertices, mid), opts) {
            Ok(r) => {
                lo = mid;
                best = Some(r);
            }
            Err(CoreError::Infeasible(_)) => hi = mid,
            Err(e) => return Err(e),
        }
    }
    let mut r = match best {
        Some(r) => r,
        None => solve_at(&scaled(vertices, 0.0), opts).map_err(|e| match e {
            CoreError::Infeasible(m) => CoreError::Infeasible(format!("{original}; delay-free problem also infeasible: {m}")),
            e => e,
        })?,
    };
    warn!(
        "certified eta_m = {:.4e}, kappa = {:.4e} ({:.1}% of the requested bounds)",
        r.eta_m,
        r.kappa,
        100.0 * lo
    );
    r.requested_eta_m = eta;
    r.requested_kappa = kap;
    r.solver_message = format!(
        "{}; requested delays infeasible, certified at scale {lo:.4} of (eta_m, kappa)",
        r.solver_message
    );
    Ok(r)
}

/// One shared controller for every vertex. Duplicate vertices are solved
/// once. On infeasibility, vertices are added one at a time to find a
/// small jointly infeasible subset.
pub fn synthesize_robust(vertices: &[AugmentedSystem], opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let mut unique: Vec<(usize, AugmentedSystem)> = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        if !unique.iter().any(|(_, u)| u == v) {
            unique.push((i, v.clone()));
        }
    }
    if unique.len() < vertices.len() {
        info!("{} of {} vertices are distinct", unique.len(), vertices.len());
    }
    let systems: Vec<AugmentedSystem> = unique.iter().map(|(_, v)| v.clone()).collect();
    // The subset probe only explains the requested problem; the delay
    // search needs plain feasibility answers.
    with_fallback(&systems, opts, |sys, o| joint(sys, &unique, o), run)
}

fn joint(systems: &[AugmentedSystem], unique: &[(usize, AugmentedSystem)], opts: &SynthesisOptions) -> Result<SynthesisResult> {
    match run(systems, opts) {
        Err(CoreError::Infeasible(msg)) if systems.len() > 1 => {
            warn!("joint problem infeasible, probing vertex subsets");
            let mut subset = Vec::new();
            let scale_to = |v: &AugmentedSystem| AugmentedSystem {
                eta_m: systems[0].eta_m,
                kappa: systems[0].kappa,
                ..v.clone()
            };
            for (i, v) in unique {
                subset.push((*i, scale_to(v)));
                let sys: Vec<_> = subset.iter().map(|(_, v)| v.clone()).collect();
                if let Err(CoreError::Infeasible(_)) = run(&sys, opts) {
                    let ids: Vec<usize> = subset.iter().map(|(i, _)| *i).collect();
                    return Err(CoreError::Infeasible(format!(
                        "{msg}; vertices {ids:?} are already jointly infeasible"
                    )));
                }
            }
            Err(CoreError::Infeasible(msg))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults;

    fn reduced() -> ReducedModel {
        ReducedModel {
            relevant_state: "omega_r".into(),
            lambda_r: -0.26,
            a_rd: -0.27,
            b_rd: 2.52,
            c_rd: 0.26,
            d_rd: -2.41,
            delta_nominal: vec![],
            delta_fraction: 0.1,
            b_delta: 0.3,
            d_delta: -0.2,
            a22_abscissa: -1.0,
        }
    }

    #[test]
    fn plant_entries() {
        let p = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
        assert!((p.a_p[(0, 3)] - 7.8).abs() < 1e-12);
        assert_eq!(p.a_p[(3, 3)], -0.27);
        assert_eq!(p.e_p[(0, 0)], -30.0);
        let mut r = reduced();
        r.d_rd = 0.0;
        let p = assemble_plant(&defaults::diesel(), &r).unwrap();
        assert_eq!(p.b_p[(0, 0)], 0.0);
    }

    #[test]
    fn augmented_blocks() {
        let p = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
        let aug = assemble_augmented(&p, &defaults::reference(3.0, 0.05), 0.05, 0.1).unwrap();
        assert!(aug.a.view((0, 4), (4, 3)).iter().all(|v| *v == 0.0));
        assert!(aug.a.view((4, 0), (3, 4)).iter().all(|v| *v == 0.0));
        assert_eq!((aug.eta_m, aug.kappa), (0.05, 0.1));
        // equal outputs give zero error
        let mut x = DMatrix::zeros(N, 1);
        x[0] = 0.3;
        x[4] = 0.3;
        assert_eq!((&aug.c * x)[0], 0.0);
        assert!(assemble_augmented(&p, &defaults::reference(3.0, 0.05), 0.2, 0.1).is_err());
    }

    #[test]
    fn variable_count_and_block_size() {
        let p = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
        let aug = assemble_augmented(&p, &defaults::reference(3.0, 0.05), 0.05, 0.1).unwrap();
        let (lmi, _) = build_lmi(&[aug], 1.0).unwrap();
        assert_eq!(lmi.num_vars(), 3 + 4 * 28 + 4 * 49 + 7);
        let main = lmi.constraints().iter().find(|c| c.name == "tracking").unwrap();
        assert_eq!(main.dim(), 5 * 7 + 2 + 1 + 2 * 7);
    }

    #[test]
    fn p_enters_first_block_through_a_only() {
        let p = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
        let aug = assemble_augmented(&p, &defaults::reference(3.0, 0.05), 0.05, 0.1).unwrap();
        let (lmi, vars) = build_lmi(std::slice::from_ref(&aug), 1.0).unwrap();
        let main = lmi.constraints().iter().find(|c| c.name == "tracking").unwrap();
        // Coefficient of P[1,2] in block (0,0) is A E12 + E12 A^T with E12 symmetric.
        let coef = main.coefficient(vars.p.at(1, 2));
        let mut e = DMatrix::zeros(N, N);
        e[(1, 2)] = 1.0;
        e[(2, 1)] = 1.0;
        let expect = &aug.a * &e + &e * aug.a.transpose();
        assert!((coef.view((0, 0), (N, N)) - expect).amax() < 1e-12);
    }

    #[test]
    fn vertex_enumeration() {
        let p = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
        let spec = PolytopeSpec {
            h_d: [0.5, 0.5],
            tau_d: [0.9, 0.9],
            tau_sm: [0.9, 0.9],
            delta: false,
        };
        let v = enumerate_vertices(&p, &spec).unwrap();
        assert_eq!(v.len(), 8);
        let mut hd: Vec<f64> = v.iter().map(|p| p.diesel.h_d).collect();
        hd.dedup();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(v.iter().all(|p| close(p.diesel.h_d, 0.5) || close(p.diesel.h_d, 1.5)));
        assert!(v.iter().all(|p| close(p.diesel.tau_d, 0.02) || close(p.diesel.tau_d, 0.38)));
        assert!(v.iter().all(|p| close(p.diesel.tau_sm, 0.01) || close(p.diesel.tau_sm, 0.19)));
        let joint = PolytopeSpec { delta: true, ..spec };
        assert_eq!(enumerate_vertices(&p, &joint).unwrap().len(), 16);
        let zero = PolytopeSpec {
            h_d: [0.0, 0.0],
            tau_d: [0.0, 0.0],
            tau_sm: [0.0, 0.0],
            delta: false,
        };
        assert!(enumerate_vertices(&p, &zero).unwrap().iter().all(|v| *v == p));
    }
}
