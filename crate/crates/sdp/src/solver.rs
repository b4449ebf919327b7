use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::SdpError;
use crate::jacobi::symmetric_eigenvalues;
use crate::problem::{LmiProblem, Sense};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Interior-point iterations per phase.
    pub max_iterations: usize,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)` at which phase 2 stops.
    pub gap_tolerance: f64,
    /// Relative primal and dual residual accepted as feasible.
    pub feasibility_tolerance: f64,
    /// Strictness margin: `F < 0` is imposed as `F <= -(strict + cert) I`.
    pub strict_margin: f64,
    /// Margin an eigenvalue must clear for the solution to be certified.
    pub certificate_tolerance: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    pub max_vars: usize,
    pub max_block: usize,
    /// Optional bound `|x_i| <= box_bound` on every variable. Keeps the
    /// iterates finite when some directions are unconstrained.
    pub box_bound: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gap_tolerance: 1e-8,
            feasibility_tolerance: 1e-9,
            strict_margin: 1e-8,
            certificate_tolerance: 1e-7,
            step_fraction: 0.95,
            max_vars: 500,
            max_block: 100,
            box_bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Certified feasible, but the duality gap did not close.
    Feasible,
    Infeasible,
    NumericalFailure,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Per constraint: largest eigenvalue of `F(x)` for `<` constraints,
    /// smallest for `>` constraints.
    pub margins: Vec<f64>,
    pub iterations: usize,
    /// Lower bound on the phase-1 optimum when the problem was judged
    /// infeasible. Positive values bound how far the constraints must be
    /// relaxed.
    pub infeasibility_bound: Option<f64>,
    pub message: String,
}

/// `S(x) = A0 + sum x_v A_v` that must stay positive semidefinite.
#[derive(Clone)]
struct Block {
    dim: usize,
    a0: DMatrix<f64>,
    vars: Vec<usize>,
    coeffs: Vec<Vec<(usize, usize, f64)>>,
}

impl Block {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut s = self.a0.clone();
        for (k, &v) in self.vars.iter().enumerate() {
            let xv = x[v];
            if xv == 0.0 {
                continue;
            }
            for &(r, c, a) in &self.coeffs[k] {
                s[(r, c)] += xv * a;
                if r != c {
                    s[(c, r)] += xv * a;
                }
            }
        }
        s
    }
}

/// `tr(A G)` for a sparse symmetric `A` given by upper triplets.
fn trace_sparse(entries: &[(usize, usize, f64)], g: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(r, c, a)| if r == c { a * g[(r, r)] } else { a * (g[(c, r)] + g[(r, c)]) })
        .sum()
}

/// Scalar constraint `constant + coef * x[var] >= 0`.
#[derive(Clone, Copy)]
struct Linear {
    var: usize,
    coef: f64,
    constant: f64,
}

/// Cone constraints `S_b(x) >= 0`, `s_l(x) >= 0` of one phase.
struct Cone {
    n: usize,
    blocks: Vec<Block>,
    lin: Vec<Linear>,
}

impl Cone {
    fn nu(&self) -> f64 {
        self.blocks.iter().map(|b| b.dim).sum::<usize>() as f64 + self.lin.len() as f64
    }

    fn lin_eval(&self, x: &[f64]) -> Vec<f64> {
        self.lin.iter().map(|l| l.constant + l.coef * x[l.var]).collect()
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    s: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    sl: Vec<f64>,
    zl: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Progress {
    pobj: f64,
    dobj: f64,
    mu: f64,
    pinf: f64,
    dinf: f64,
    rel_gap: f64,
}

enum Exit {
    Converged,
    EarlyStop,
    IterationLimit,
    Failure(String),
}

/// Largest `a` in `(0, 1]` with `S + a dS >= 0`, given `L L^T = S`.
fn max_step(l: &DMatrix<f64>, ds: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    // W = L^-1 dS L^-T
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let w = &linv * ds * linv.transpose();
    let w = (&w + w.transpose()) * 0.5;
    let lmin = symmetric_eigenvalues(&w)[0];
    if lmin >= 0.0 {
        1.0
    } else {
        (-1.0 / lmin).min(1.0)
    }
}

fn max_step_lin(s: &[f64], ds: &[f64]) -> f64 {
    s.iter()
        .zip(ds)
        .filter(|(_, d)| **d < 0.0)
        .map(|(s, d)| -s / d)
        .fold(1.0, f64::min)
}

/// Largest `a <= a0` from `a0 * 0.8^k` keeping every matrix factorable.
fn interior_step(m: &[DMatrix<f64>], dm: &[DMatrix<f64>], v: &[f64], dv: &[f64], a0: f64) -> Option<f64> {
    let mut a = a0;
    for _ in 0..60 {
        let ok = v.iter().zip(dv).all(|(x, d)| x + a * d > 0.0)
            && m.iter().zip(dm).all(|(x, d)| (x + d * a).cholesky().is_some());
        if ok {
            return Some(a);
        }
        a *= 0.8;
    }
    None
}

/// Solves `M d = rhs` by Cholesky with escalating diagonal shifts, then
/// removes the shift error by iterative refinement against the exact `M`.
fn cholesky_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..10 {
        let mut mr = m.clone();
        if reg > 0.0 {
            for i in 0..mr.nrows() {
                mr[(i, i)] += reg * scale;
            }
        }
        if let Some(ch) = mr.cholesky() {
            let mut d = ch.solve(rhs);
            for _ in 0..4 {
                let r = rhs - m * &d;
                if r.amax() <= 1e-15 * rhs.amax() {
                    break;
                }
                d += ch.solve(&r);
            }
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-15 } else { reg * 100.0 };
    }
    None
}

/// Infeasible-start primal-dual path following with the HKM direction and
/// a Mehrotra predictor-corrector, for `min c^T x` over the cone.
fn interior_point(
    cone: &Cone,
    c: &DVector<f64>,
    it: &mut Iterate,
    opts: &SolverOptions,
    iterations: &mut usize,
    stop: &dyn Fn(&Progress) -> bool,
) -> (Exit, Progress) {
    let n = cone.n;
    let nu = cone.nu();
    let f0_scale = 1.0
        + cone
            .blocks
            .iter()
            .map(|b| b.a0.amax())
            .chain(cone.lin.iter().map(|l| l.constant.abs()))
            .fold(0.0, f64::max);
    let c_scale = 1.0 + c.amax();
    let mut progress = Progress::default();
    let mut stalled = 0;
    for _ in 0..opts.max_iterations {
        // Residuals and objective values.
        let rd: Vec<DMatrix<f64>> = cone.blocks.iter().zip(&it.s).map(|(b, s)| b.eval(&it.x) - s).collect();
        let rl: Vec<f64> = cone.lin_eval(&it.x).iter().zip(&it.sl).map(|(a, b)| a - b).collect();
        let mut rp = c.clone();
        let mut dobj = 0.0;
        let mut comp = 0.0;
        for (bi, b) in cone.blocks.iter().enumerate() {
            let z = &it.z[bi];
            for (k, &v) in b.vars.iter().enumerate() {
                rp[v] -= trace_sparse(&b.coeffs[k], z);
            }
            dobj -= (&b.a0).component_mul(z).sum();
            comp += it.s[bi].component_mul(z).sum();
        }
        for (l, lin) in cone.lin.iter().enumerate() {
            rp[lin.var] -= lin.coef * it.zl[l];
            dobj -= lin.constant * it.zl[l];
            comp += it.sl[l] * it.zl[l];
        }
        let pobj = c.dot(&DVector::from_column_slice(&it.x));
        let mu = comp / nu;
        let pinf = rd
            .iter()
            .map(|m| m.amax())
            .chain(rl.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            / f0_scale;
        let dinf = rp.amax() / c_scale;
        progress = Progress {
            pobj,
            dobj,
            mu,
            pinf,
            dinf,
            rel_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        };
        debug!(
            "ipm it={} p={pobj:.8e} d={dobj:.8e} mu={mu:.2e} pinf={pinf:.1e} dinf={dinf:.1e}",
            *iterations
        );
        if stop(&progress) {
            return (Exit::EarlyStop, progress);
        }
        if progress.rel_gap <= opts.gap_tolerance
            && pinf <= opts.feasibility_tolerance
            && dinf <= opts.feasibility_tolerance
        {
            return (Exit::Converged, progress);
        }
        if !progress.pobj.is_finite() || !progress.dobj.is_finite() {
            return (Exit::Failure("non-finite iterate".into()), progress);
        }
        *iterations += 1;

        // Schur complement M_ik = tr(F_i Z F_k S^-1).
        let mut sinv = Vec::with_capacity(cone.blocks.len());
        let mut chol = Vec::with_capacity(cone.blocks.len());
        for s in &it.s {
            let Some(ch) = s.clone().cholesky() else {
                return (Exit::Failure("slack matrix lost definiteness".into()), progress);
            };
            sinv.push(ch.inverse());
            chol.push(ch.l());
        }
        let mut m = DMatrix::zeros(n, n);
        for (bi, b) in cone.blocks.iter().enumerate() {
            let (z, si) = (&it.z[bi], &sinv[bi]);
            let dim = b.dim;
            for (k, entries) in b.coeffs.iter().enumerate() {
                // G_k = Z F_k S^-1 as a sum of rank-one terms.
                let mut g = DMatrix::zeros(dim, dim);
                for &(r, cc, a) in entries {
                    g.ger(a, &z.column(r), &si.column(cc), 1.0);
                    if r != cc {
                        g.ger(a, &z.column(cc), &si.column(r), 1.0);
                    }
                }
                let vk = b.vars[k];
                for (i, ei) in b.coeffs.iter().enumerate().take(k + 1) {
                    let v = trace_sparse(ei, &g);
                    let vi = b.vars[i];
                    m[(vi, vk)] += v;
                    if vi != vk {
                        m[(vk, vi)] += v;
                    }
                }
            }
        }
        for (l, lin) in cone.lin.iter().enumerate() {
            m[(lin.var, lin.var)] += lin.coef * lin.coef * it.zl[l] / it.sl[l];
        }
        let m = (&m + m.transpose()) * 0.5;

        // Direction for target sigma*mu with optional second-order term.
        let direction = |sigma_mu: f64,
                         corr: Option<(&[DMatrix<f64>], &[DMatrix<f64>], &[f64], &[f64])>|
         -> Option<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<f64>, Vec<f64>)> {
            // T_b = sigma mu S^-1 - (Z R_d + dZa dSa) S^-1
            let mut rhs = -c.clone();
            let mut ts = Vec::with_capacity(cone.blocks.len());
            for (bi, b) in cone.blocks.iter().enumerate() {
                let mut inner = &it.z[bi] * &rd[bi];
                if let Some((dza, dsa, _, _)) = corr {
                    inner += &dza[bi] * &dsa[bi];
                }
                let t = &sinv[bi] * sigma_mu - inner * &sinv[bi];
                for (k, &v) in b.vars.iter().enumerate() {
                    rhs[v] += trace_sparse(&b.coeffs[k], &t);
                }
                ts.push(t);
            }
            for (l, lin) in cone.lin.iter().enumerate() {
                let mut inner = it.zl[l] * rl[l];
                if let Some((_, _, dzl, dsl)) = corr {
                    inner += dzl[l] * dsl[l];
                }
                rhs[lin.var] += lin.coef * (sigma_mu - inner) / it.sl[l];
            }
            let dx = cholesky_solve(&m, &rhs)?;
            let mut ds = Vec::with_capacity(cone.blocks.len());
            let mut dz = Vec::with_capacity(cone.blocks.len());
            for (bi, b) in cone.blocks.iter().enumerate() {
                let mut d = rd[bi].clone();
                for (k, &v) in b.vars.iter().enumerate() {
                    let w = dx[v];
                    if w == 0.0 {
                        continue;
                    }
                    for &(r, cc, a) in &b.coeffs[k] {
                        d[(r, cc)] += w * a;
                        if r != cc {
                            d[(cc, r)] += w * a;
                        }
                    }
                }
                // dZ = T - Z dS_x S^-1 where dS_x = dS - R_d; T already
                // carries the R_d part.
                let dsx = &d - &rd[bi];
                let raw = &ts[bi] - &it.z[bi] * dsx * &sinv[bi] - &it.z[bi];
                dz.push((&raw + raw.transpose()) * 0.5);
                ds.push(d);
            }
            let mut dsl = Vec::with_capacity(cone.lin.len());
            let mut dzl = Vec::with_capacity(cone.lin.len());
            for (l, lin) in cone.lin.iter().enumerate() {
                let d = rl[l] + lin.coef * dx[lin.var];
                let mut inner = it.zl[l] * d;
                if let Some((_, _, dza, dsa)) = corr {
                    inner += dza[l] * dsa[l];
                }
                dzl.push((sigma_mu - inner) / it.sl[l] - it.zl[l]);
                dsl.push(d);
            }
            Some((dx, ds, dz, dsl, dzl))
        };
        let steps = |ds: &[DMatrix<f64>], dz: &[DMatrix<f64>], dsl: &[f64], dzl: &[f64]| -> Option<(f64, f64)> {
            let mut ap = max_step_lin(&it.sl, dsl);
            let mut ad = max_step_lin(&it.zl, dzl);
            for bi in 0..cone.blocks.len() {
                ap = ap.min(max_step(&chol[bi], &ds[bi]));
                let lz = it.z[bi].clone().cholesky()?.l();
                ad = ad.min(max_step(&lz, &dz[bi]));
            }
            ap = ap.max(0.0);
            ad = ad.max(0.0);
            Some((ap, ad))
        };

        let Some((_, dsa, dza, dsla, dzla)) = direction(0.0, None) else {
            return (Exit::Failure("Schur complement is singular".into()), progress);
        };
        let Some((ap, ad)) = steps(&dsa, &dza, &dsla, &dzla) else {
            return (Exit::Failure("dual matrix lost definiteness".into()), progress);
        };
        let mut comp_aff = 0.0;
        for bi in 0..cone.blocks.len() {
            let s = &it.s[bi] + &dsa[bi] * ap;
            let z = &it.z[bi] + &dza[bi] * ad;
            comp_aff += s.component_mul(&z).sum();
        }
        for l in 0..cone.lin.len() {
            comp_aff += (it.sl[l] + ap * dsla[l]) * (it.zl[l] + ad * dzla[l]);
        }
        let sigma = (comp_aff / nu / mu).clamp(0.0, 1.0).powi(3);
        let Some((dx, ds, dz, dsl, dzl)) = direction(sigma * mu, Some((&dza, &dsa, &dzla, &dsla))) else {
            return (Exit::Failure("Schur complement is singular".into()), progress);
        };
        let Some((ap, ad)) = steps(&ds, &dz, &dsl, &dzl) else {
            return (Exit::Failure("dual matrix lost definiteness".into()), progress);
        };
        // Backtrack until the updated matrices factor; the eigenvalue step
        // bound can be off by roundoff near the boundary.
        let Some(ap) = interior_step(&it.s, &ds, &it.sl, &dsl, (opts.step_fraction * ap).min(1.0)) else {
            return (Exit::Failure("primal step collapsed".into()), progress);
        };
        let Some(ad) = interior_step(&it.z, &dz, &it.zl, &dzl, (opts.step_fraction * ad).min(1.0)) else {
            return (Exit::Failure("dual step collapsed".into()), progress);
        };
        for (xi, d) in it.x.iter_mut().zip(dx.iter()) {
            *xi += ap * d;
        }
        for bi in 0..cone.blocks.len() {
            it.s[bi] += &ds[bi] * ap;
            it.z[bi] += &dz[bi] * ad;
        }
        for l in 0..cone.lin.len() {
            it.sl[l] += ap * dsl[l];
            it.zl[l] += ad * dzl[l];
        }
        // Roundoff in the Schur solve caps attainable accuracy; short steps
        // that no longer move the gap mean we are there.
        stalled = if ap.max(ad) < 1e-2 && progress.rel_gap <= 1e-4 { stalled + 1 } else { 0 };
        if stalled >= 3 {
            return (Exit::Failure(format!("stalled (primal step {ap:.1e}, dual step {ad:.1e})")), progress);
        }
        if ap < 1e-12 && ad < 1e-12 {
            return (Exit::Failure(format!("step length collapsed (primal {ap:.1e}, dual {ad:.1e})")), progress);
        }
        progress.mu = mu;
    }
    (Exit::IterationLimit, progress)
}

fn box_constraints(bound: Option<f64>, n: usize) -> Vec<Linear> {
    let Some(r) = bound else { return vec![] };
    (0..n)
        .flat_map(|var| {
            [
                Linear { var, coef: 1.0, constant: r },
                Linear { var, coef: -1.0, constant: r },
            ]
        })
        .collect()
}

/// Starting iterate with `S = S(x)` and `Z = mu S^-1`.
fn start(cone: &Cone, x: Vec<f64>, mu: f64) -> Option<Iterate> {
    let s: Vec<DMatrix<f64>> = cone.blocks.iter().map(|b| b.eval(&x)).collect();
    let mut z = Vec::with_capacity(s.len());
    for m in &s {
        z.push(m.clone().cholesky()?.inverse() * mu);
    }
    let sl = cone.lin_eval(&x);
    if sl.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let zl = sl.iter().map(|v| mu / v).collect();
    Some(Iterate { x, s, z, sl, zl })
}

/// Solves the problem from scratch.
///
/// Phase 1 maximises the common eigenvalue margin `-s` of all constraints;
/// a positive lower bound on `s` proves infeasibility. Phase 2 starts from
/// the phase-1 point with exact primal feasibility.
pub fn solve(problem: &LmiProblem, opts: &SolverOptions) -> Result<LmiSolution, SdpError> {
    problem.validate(opts.max_vars, opts.max_block)?;
    let n = problem.num_vars();
    let margin = opts.strict_margin + opts.certificate_tolerance;

    // S_j(x) = sigma_j F_j(x) - margin I >= 0.
    let mut blocks = Vec::new();
    for con in problem.constraints() {
        let sigma = match con.sense {
            Sense::NegativeDefinite => -1.0,
            Sense::PositiveDefinite => 1.0,
        };
        let dim = con.dim();
        let mut a0 = &con.constant * sigma;
        for i in 0..dim {
            a0[(i, i)] -= margin;
        }
        let mut vars = Vec::new();
        let mut coeffs = Vec::new();
        for (v, entries) in &con.terms {
            vars.push(*v);
            coeffs.push(entries.iter().map(|&(r, c, a)| (r, c, sigma * a)).collect());
        }
        blocks.push(Block { dim, a0, vars, coeffs });
    }
    let mut iterations = 0;

    let x0 = vec![0.0; n];
    let min_eig = blocks
        .iter()
        .map(|b| symmetric_eigenvalues(&b.eval(&x0))[0])
        .fold(f64::INFINITY, f64::min);
    let mut x = x0;
    // A point that is already strictly inside skips phase 1.
    let mut inside = min_eig > 0.0;
    if !inside {
        let s_slot = n;
        let p1 = Cone {
            n: n + 1,
            blocks: blocks
                .iter()
                .map(|b| {
                    let mut b = b.clone();
                    b.vars.push(s_slot);
                    b.coeffs.push((0..b.dim).map(|i| (i, i, 1.0)).collect());
                    b
                })
                .collect(),
            // s >= -1 keeps phase 1 bounded when the constraints are homogeneous.
            lin: box_constraints(opts.box_bound, n)
                .into_iter()
                .chain([Linear { var: s_slot, coef: 1.0, constant: 1.0 }])
                .collect(),
        };
        let mut x1 = vec![0.0; n + 1];
        x1[s_slot] = 1.0 - min_eig;
        let mut it = start(&p1, x1, 1.0).expect("phase-1 start is interior");
        let mut c1 = DVector::zeros(n + 1);
        c1[s_slot] = 1.0;
        // Stop once s is negative and within a factor two of the bound.
        let early = |p: &Progress| {
            p.pobj < 0.0 && p.dinf <= 1e-6 && p.pobj <= 0.5 * p.dobj.min(0.0) && p.pinf <= opts.feasibility_tolerance
        };
        let (exit, prog) = interior_point(&p1, &c1, &mut it, opts, &mut iterations, &early);
        debug!("phase 1 s={:.4e} bound={:.4e}", prog.pobj, prog.dobj);
        let s = it.x[s_slot];
        let infeasible_msg = |bound: f64| {
            let boxed = opts.box_bound.map_or(String::new(), |r| format!(" within |x| <= {r:.1e}"));
            format!("phase 1: eigenvalue margin bounded by {bound:.3e} > 0; constraints cannot be satisfied strictly{boxed}")
        };
        match exit {
            Exit::EarlyStop => inside = true,
            Exit::Converged if s < 0.0 => inside = true,
            Exit::Converged => {
                return Ok(finish(problem, it.x[..n].to_vec(), SolveStatus::Infeasible, iterations, Some(prog.dobj.max(s)), infeasible_msg(prog.dobj.max(s)), opts));
            }
            Exit::IterationLimit | Exit::Failure(_) if s < 0.0 && prog.pinf <= 1e-6 => inside = true,
            Exit::IterationLimit | Exit::Failure(_) if prog.dobj > 0.0 && prog.dinf <= 1e-6 => {
                return Ok(finish(problem, it.x[..n].to_vec(), SolveStatus::Infeasible, iterations, Some(prog.dobj), infeasible_msg(prog.dobj), opts));
            }
            Exit::IterationLimit => {
                return Ok(finish(problem, it.x[..n].to_vec(), SolveStatus::IterationLimit, iterations, None, format!("phase 1 iteration limit at s = {s:.3e}"), opts));
            }
            Exit::Failure(why) => {
                return Ok(finish(problem, it.x[..n].to_vec(), SolveStatus::NumericalFailure, iterations, None, format!("phase 1: {why} at s = {s:.3e}"), opts));
            }
        }
        x = it.x[..n].to_vec();
    }
    debug_assert!(inside);

    let c = DVector::from_column_slice(problem.objective());
    let cone = Cone {
        n,
        blocks,
        lin: box_constraints(opts.box_bound, n),
    };
    if c.amax() == 0.0 {
        return Ok(finish(problem, x, SolveStatus::Optimal, iterations, None, "feasibility problem".into(), opts));
    }
    let Some(mut it) = start(&cone, x.clone(), 1.0) else {
        return Ok(finish(problem, x, SolveStatus::NumericalFailure, iterations, None, "phase-1 point is not interior".into(), opts));
    };
    let never = |_: &Progress| false;
    let (exit, prog) = interior_point(&cone, &c, &mut it, opts, &mut iterations, &never);
    let summary = format!(
        "gap {:.2e}, primal residual {:.1e}, dual residual {:.1e}",
        prog.rel_gap, prog.pinf, prog.dinf
    );
    let (status, msg) = match exit {
        Exit::Converged | Exit::EarlyStop => (SolveStatus::Optimal, summary),
        // A stalled method near the optimum still leaves a usable point.
        Exit::Failure(why) if prog.rel_gap <= 1e3 * opts.gap_tolerance && prog.pinf <= 1e-6 => {
            (SolveStatus::Optimal, format!("{why}; stopped at {summary}"))
        }
        Exit::IterationLimit if prog.pinf <= 1e-6 => (SolveStatus::Feasible, format!("iteration limit: {summary}")),
        Exit::Failure(why) if prog.pinf <= 1e-6 => (SolveStatus::Feasible, format!("{why}; {summary}")),
        Exit::IterationLimit => (SolveStatus::IterationLimit, format!("iteration limit: {summary}")),
        Exit::Failure(why) => (SolveStatus::NumericalFailure, format!("{why}; {summary}")),
    };
    Ok(finish(problem, it.x, status, iterations, None, msg, opts))
}

fn finish(
    problem: &LmiProblem,
    x: Vec<f64>,
    mut status: SolveStatus,
    iterations: usize,
    infeasibility_bound: Option<f64>,
    mut message: String,
    opts: &SolverOptions,
) -> LmiSolution {
    let margins: Vec<f64> = problem
        .constraints()
        .iter()
        .map(|con| {
            let ev = symmetric_eigenvalues(&con.evaluate(&x));
            match con.sense {
                Sense::NegativeDefinite => *ev.last().unwrap(),
                Sense::PositiveDefinite => ev[0],
            }
        })
        .collect();
    if matches!(status, SolveStatus::Optimal | SolveStatus::Feasible) {
        let certified = problem.constraints().iter().zip(&margins).all(|(con, m)| match con.sense {
            Sense::NegativeDefinite => *m < -opts.certificate_tolerance,
            Sense::PositiveDefinite => *m > opts.certificate_tolerance,
        });
        if !certified {
            status = SolveStatus::NumericalFailure;
            message.push_str("; certificate margin not met");
        }
    }
    if let Some(r) = opts.box_bound {
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.99 * r {
            message.push_str(&format!("; variable magnitude {peak:.3e} at the box bound {r:.1e}"));
        }
    }
    let objective = problem.objective().iter().zip(&x).map(|(a, b)| a * b).sum();
    LmiSolution {
        status,
        x,
        objective,
        margins,
        iterations,
        infeasibility_bound,
        message,
    }
}
