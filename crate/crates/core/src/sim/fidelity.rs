use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Dopri5, PlantRegistry, StepControl, Trajectory, WtgContext};
use crate::error::{CoreError, Result};

/// Open-loop `u_ie` used to compare plant fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpenLoopInput {
    Zero,
    Step { time: f64, amplitude: f64 },
    /// Washout `K s/(T s + 1)` driven by a frequency dip
    /// `-depth (1 - exp(-(t - time)/tau))` in p.u.
    Washout { time: f64, k_ie: f64, t_w: f64, depth: f64, tau: f64 },
}

impl OpenLoopInput {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            OpenLoopInput::Zero => 0.0,
            OpenLoopInput::Step { time, amplitude } => {
                if t >= time {
                    amplitude
                } else {
                    0.0
                }
            }
            OpenLoopInput::Washout { time, k_ie, t_w, depth, tau } => {
                if t < time {
                    return 0.0;
                }
                let s = t - time;
                if (tau - t_w).abs() < 1e-12 {
                    -k_ie * depth * s * (-s / tau).exp() / (tau * tau)
                } else {
                    -k_ie * depth * ((-s / tau).exp() - (-s / t_w).exp()) / (tau - t_w)
                }
            }
        }
    }

    fn switch_time(&self) -> Option<f64> {
        match *self {
            OpenLoopInput::Zero => None,
            OpenLoopInput::Step { time, .. } | OpenLoopInput::Washout { time, .. } => Some(time),
        }
    }
}

/// Runs every named fidelity on the same open-loop input. Columns are
/// `u_ie`, then `{fidelity}.dp_g` and `{fidelity}.dw_r` per fidelity.
pub fn simulate_fidelity_comparison(
    wtg: &Arc<WtgContext>,
    plants: &PlantRegistry,
    fidelities: &[&str],
    input: OpenLoopInput,
    duration: f64,
    sample_rate: f64,
) -> Result<Trajectory> {
    if !(duration > 0.0 && sample_rate > 0.0) {
        return Err(CoreError::validation("comparison needs positive duration and sample rate"));
    }
    let dt = 1.0 / sample_rate;
    let steps = (duration * sample_rate).round() as usize;
    let mut cols = vec!["u_ie".to_string()];
    let mut runs = Vec::new();
    for name in fidelities {
        let mut p = plants.build(name, wtg)?;
        let mut x = p.initial_state();
        let mut ig = Dopri5::new(
            StepControl {
                max_step: dt,
                ..StepControl::default()
            },
            x.len(),
        );
        let mut dx = vec![0.0; x.len()];
        let mut rows = Vec::with_capacity(steps + 1);
        let out = p.eval(&x, input.at(0.0), &mut dx)?;
        rows.push([out.dp_g, out.dw_r]);
        for k in 0..steps {
            let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
            let mut cuts = vec![t0];
            if let Some(ts) = input.switch_time().filter(|&ts| ts > t0 && ts < t1) {
                cuts.push(ts);
            }
            cuts.push(t1);
            for w in cuts.windows(2) {
                // Steps are right-continuous; evaluate inside the segment.
                let seg_u = input.at(0.5 * (w[0] + w[1]));
                let step_input = matches!(input, OpenLoopInput::Step { .. });
                let mut f = |t: f64, y: &[f64], d: &mut [f64]| {
                    let u = if step_input { seg_u } else { input.at(t) };
                    p.eval(y, u, d).map(|_| ())
                };
                ig.advance(&mut f, w[0], w[1], &mut x)
                    .map_err(|e| CoreError::numeric(format!("{name} fidelity: {e}")))?;
            }
            let out = p.eval(&x, input.at(t1), &mut dx)?;
            rows.push([out.dp_g, out.dw_r]);
        }
        cols.push(format!("{name}.dp_g"));
        cols.push(format!("{name}.dw_r"));
        runs.push(rows);
    }
    let mut tr = Trajectory::new(cols);
    let mut row = Vec::new();
    for k in 0..=steps {
        let t = k as f64 * dt;
        row.clear();
        row.push(input.at(t));
        for r in &runs {
            row.extend_from_slice(&r[k]);
        }
        tr.push(t, &row)?;
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn washout_input_matches_filtered_dip() {
        // Integrate the filter numerically and compare with the closed form.
        let inp = OpenLoopInput::Washout { time: 0.0, k_ie: 0.1, t_w: 0.01, depth: 0.01, tau: 0.5 };
        let (mut z, dt) = (0.0, 1e-5);
        let mut u = 0.0;
        for k in 0..100_000 {
            let t = k as f64 * dt;
            let y = -0.01 * (1.0 - (-t / 0.5f64).exp());
            let dz = (y - z) / 0.01;
            u = 0.1 * dz;
            z += dt * dz;
        }
        assert!((u - inp.at(1.0)).abs() < 1e-6, "{u} vs {}", inp.at(1.0));
    }
}
