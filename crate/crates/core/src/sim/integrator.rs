//! Adaptive Dormand-Prince 5(4) stepping between fixed output times.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-7,
            atol: 1e-10,
            max_step: 1e-3,
            min_step: 1e-10,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights are row 6 of A; these are fifth minus fourth order.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrator state carried across calls so the step size adapts once.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub control: StepControl,
    h: f64,
    k: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Dopri5 {
    pub fn new(control: StepControl, n: usize) -> Self {
        Self {
            h: control.max_step,
            control,
            k: vec![vec![0.0; n]; 7],
            accepted: 0,
            rejected: 0,
        }
    }

    /// Advances `y` from `t0` to `t1`. `f(t, y, dy)` must be defined on
    /// the whole interval: callers split at discontinuities.
    pub fn advance<F>(&mut self, f: &mut F, t0: f64, t1: f64, y: &mut [f64]) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        let mut t = t0;
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let mut h = self.h.min(self.control.max_step);
        while t < t1 {
            let last = t + h >= t1 - 1e-12 * span.max(1.0);
            let hs = if last { t1 - t } else { h };
            f(t, y, &mut self.k[0])?;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += hs * A[s][j] * self.k[j][i];
                    }
                    ytmp[i] = acc;
                }
                f(t + C[s] * hs, &ytmp, &mut self.k[s])?;
            }
            ynew.copy_from_slice(&ytmp);
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * self.k[s][i];
                }
                let sc = self.control.atol + self.control.rtol * y[i].abs().max(ynew[i].abs());
                err = err.max((hs * e / sc).abs());
            }
            if !err.is_finite() {
                return Err(CoreError::numeric(format!("non-finite state at t = {t:.6}")));
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + hs };
                y.copy_from_slice(&ynew);
                self.accepted += 1;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || hs >= h {
                    h = (hs * grow).min(self.control.max_step);
                }
            } else {
                self.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < self.control.min_step {
                    return Err(CoreError::numeric(format!(
                        "step size underflow at t = {t:.6} (last state {:?})",
                        &y[..n.min(8)]
                    )));
                }
            }
        }
        self.h = h;
        Ok(())
    }
}
