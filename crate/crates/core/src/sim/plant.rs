//! Wind turbine models at three fidelities behind one interface.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    linearize, modal_analysis, solve_equilibrium, DfigOperatingPoint, OperatingTargets, CONSTRAINT_NAMES,
};
use crate::error::{CoreError, Result};
use crate::models::{residual_raw, DfigInputs, DfigModel, LinearStateSpace, SPEED_VALIDITY};
use crate::registry::Registry;
use crate::sma::{partition, reduce, select_relevant_mode, ReducedModel};

/// Everything a WTG fidelity may need, built once per operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WtgContext {
    pub model: DfigModel,
    pub operating_point: DfigOperatingPoint,
    pub linear: LinearStateSpace,
    pub reduced: ReducedModel,
}

impl WtgContext {
    /// Equilibrium, linearization and reduction on `relevant` in one go.
    pub fn build(model: &DfigModel, targets: &OperatingTargets, relevant: &str, delta_fraction: f64) -> Result<Self> {
        let op = solve_equilibrium(model, targets)?;
        let linear = linearize(model, &op)?;
        let idx = linear
            .state_index(relevant)
            .ok_or_else(|| CoreError::validation(format!("unknown relevant state `{relevant}`")))?;
        let ma = modal_analysis(&linear.a)?;
        let lambda = select_relevant_mode(&ma, idx)?;
        let reduced = reduce(&partition(&linear, relevant)?, lambda, delta_fraction)?;
        Ok(Self {
            model: model.clone(),
            operating_point: op,
            linear,
            reduced,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WtgOutput {
    /// Active power deviation [p.u. machine base], injection positive.
    pub dp_g: f64,
    /// Rotor speed deviation [p.u.].
    pub dw_r: f64,
}

pub trait WtgPlant: Send {
    fn fidelity(&self) -> &'static str;
    fn n_states(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    /// Rotor speed deviation read straight from the state.
    fn speed_deviation(&self, x: &[f64]) -> f64;
    /// Writes `dx` and returns the outputs for input `u_ie`.
    fn eval(&mut self, x: &[f64], u_ie: f64, dx: &mut [f64]) -> Result<WtgOutput>;
}

pub type PlantRegistry = Registry<dyn WtgPlant, Arc<WtgContext>>;

pub fn plant_registry() -> PlantRegistry {
    let mut r = PlantRegistry::new("plant fidelity");
    r.register("nonlinear", |c: &Arc<WtgContext>| Ok(Box::new(Nonlinear::new(c.clone())?)));
    r.register("linear10", |c: &Arc<WtgContext>| Ok(Box::new(Linear::new(c))));
    r.register("reduced1", |c: &Arc<WtgContext>| Ok(Box::new(Reduced(c.reduced.clone()))));
    r
}

struct Reduced(ReducedModel);

impl WtgPlant for Reduced {
    fn fidelity(&self) -> &'static str {
        "reduced1"
    }

    fn n_states(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn speed_deviation(&self, x: &[f64]) -> f64 {
        x[0]
    }

    fn eval(&mut self, x: &[f64], u: f64, dx: &mut [f64]) -> Result<WtgOutput> {
        let r = &self.0;
        dx[0] = r.a_rd * x[0] + r.b_rd * u;
        Ok(WtgOutput {
            dp_g: r.c_rd * x[0] + r.d_rd * u,
            dw_r: x[0],
        })
    }
}

struct Linear {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    d: f64,
    wr: usize,
}

impl Linear {
    fn new(c: &WtgContext) -> Self {
        let ss = &c.linear;
        Self {
            a: ss.a.clone(),
            b: ss.b.column(0).into_owned(),
            c: ss.c.row(0).transpose(),
            d: ss.d[(0, 0)],
            wr: ss.state_index("omega_r").unwrap_or(4),
        }
    }
}

impl WtgPlant for Linear {
    fn fidelity(&self) -> &'static str {
        "linear10"
    }

    fn n_states(&self) -> usize {
        self.a.nrows()
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.a.nrows()]
    }

    fn speed_deviation(&self, x: &[f64]) -> f64 {
        x[self.wr]
    }

    fn eval(&mut self, x: &[f64], u: f64, dx: &mut [f64]) -> Result<WtgOutput> {
        let n = self.a.nrows();
        for i in 0..n {
            let mut acc = self.b[i] * u;
            for j in 0..n {
                acc += self.a[(i, j)] * x[j];
            }
            dx[i] = acc;
        }
        Ok(WtgOutput {
            dp_g: self.c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.d * u,
            dw_r: x[self.wr],
        })
    }
}

/// Full DAE. The algebraic block is solved by a chord iteration
/// warm-started from the previous call.
struct Nonlinear {
    ctx: Arc<WtgContext>,
    last: [f64; 10],
    lu: LU<f64, Dyn, Dyn>,
}

impl Nonlinear {
    fn new(ctx: Arc<WtgContext>) -> Result<Self> {
        let a0 = ctx.operating_point.algebraic.to_array();
        let x0 = ctx.operating_point.state.to_array();
        let lu = algebraic_jacobian(&ctx.model, &ctx.operating_point, &x0, &a0, 0.0).lu();
        Ok(Self { last: a0, lu, ctx })
    }

    fn inputs(&self, u: f64) -> DfigInputs {
        DfigInputs {
            u_ie: u,
            ..self.ctx.operating_point.inputs
        }
    }

    fn solve_algebraic(&mut self, x: &[f64], u: f64) -> Result<[f64; 10]> {
        let m = &self.ctx.model;
        let op = &self.ctx.operating_point;
        let inp = self.inputs(u);
        let mut a = self.last;
        let mut prev = f64::INFINITY;
        let mut refreshed = false;
        for _ in 0..50 {
            let g = residual_raw(x, &a, &inp, m, op.closure()).1;
            let norm = g.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            if norm < 1e-11 {
                self.last = a;
                return Ok(a);
            }
            if norm > 0.5 * prev {
                if refreshed {
                    let worst = (0..10).max_by(|&i, &j| g[i].abs().total_cmp(&g[j].abs())).unwrap();
                    return Err(CoreError::numeric(format!(
                        "DFIG algebraic solve diverged; largest residual {:.3e} in constraint `{}`",
                        g[worst], CONSTRAINT_NAMES[worst]
                    )));
                }
                self.lu = algebraic_jacobian(m, op, x, &a, u).lu();
                refreshed = true;
            }
            prev = norm;
            let step = self
                .lu
                .solve(&DVector::from_column_slice(&g))
                .ok_or_else(|| CoreError::numeric("DFIG algebraic Jacobian is singular"))?;
            for i in 0..10 {
                a[i] -= step[i];
            }
        }
        Err(CoreError::numeric("DFIG algebraic solve did not converge in 50 iterations"))
    }
}

fn algebraic_jacobian(m: &DfigModel, op: &DfigOperatingPoint, x: &[f64], a: &[f64; 10], u: f64) -> DMatrix<f64> {
    let inp = DfigInputs { u_ie: u, ..op.inputs };
    let mut j = DMatrix::zeros(10, 10);
    let mut ap = *a;
    for c in 0..10 {
        let h = 1e-7 * a[c].abs().max(1.0);
        ap[c] = a[c] + h;
        let gp = residual_raw(x, &ap, &inp, m, op.closure()).1;
        ap[c] = a[c] - h;
        let gm = residual_raw(x, &ap, &inp, m, op.closure()).1;
        ap[c] = a[c];
        for r in 0..10 {
            j[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    j
}

impl WtgPlant for Nonlinear {
    fn fidelity(&self) -> &'static str {
        "nonlinear"
    }

    fn n_states(&self) -> usize {
        10
    }

    fn initial_state(&self) -> Vec<f64> {
        self.ctx.operating_point.state.to_array().to_vec()
    }

    fn speed_deviation(&self, x: &[f64]) -> f64 {
        x[4] - self.ctx.operating_point.state.omega_r
    }

    fn eval(&mut self, x: &[f64], u: f64, dx: &mut [f64]) -> Result<WtgOutput> {
        if !(SPEED_VALIDITY.0..=SPEED_VALIDITY.1).contains(&x[4]) {
            return Err(CoreError::numeric(format!(
                "rotor speed {:.4} p.u. left the model validity band",
                x[4]
            )));
        }
        let a = self.solve_algebraic(x, u)?;
        let op = &self.ctx.operating_point;
        let d = residual_raw(x, &a, &self.inputs(u), &self.ctx.model, op.closure()).0;
        dx.copy_from_slice(&d);
        Ok(WtgOutput {
            dp_g: a[6] - op.algebraic.p_g,
            dw_r: x[4] - op.state.omega_r,
        })
    }
}
