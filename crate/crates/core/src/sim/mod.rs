//! Closed-loop time-domain simulation of diesel-wind groups.
//!
//! Each group is one diesel unit, its reference model, one or more WTGs
//! and a supplementary controller. Groups share the disturbance schedule
//! but are otherwise independent. The network is reduced to disturbance
//! routing: a load step at a bus the group serves downstream of its POM
//! enters both the diesel and the reference model; a step at an inner bus
//! (between POM and generators) reaches the diesel only.

mod aggregate;
pub mod control;
pub mod delay;
mod fidelity;
pub mod integrator;
pub mod plant;
mod trajectory;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use aggregate::aggregate_wtgs;
pub use control::{controller_registry, Controller, ControllerRegistry, ControllerSpec, Measurements};
pub use delay::{delay_registry, DelayContext, DelayPolicy, DelayRegistry, DelaySpec, History};
pub use fidelity::{simulate_fidelity_comparison, OpenLoopInput};
pub use integrator::{Dopri5, StepControl};
pub use plant::{plant_registry, PlantRegistry, WtgContext, WtgOutput, WtgPlant};
pub use trajectory::Trajectory;

use crate::error::{CoreError, Result};
use crate::models::{diesel_state_space, reference_state_space, DieselModel, ReferenceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Step time [s].
    pub time: f64,
    /// Load increase [p.u.], positive for added load.
    pub magnitude: f64,
    pub bus: String,
    /// Fraction seen by each group id. Empty: equal split among the groups
    /// that route this bus.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub id: String,
    pub diesel: DieselModel,
    pub reference: ReferenceModel,
    #[serde(default = "one")]
    pub wtg_count: usize,
    /// Bus whose line flow is measured and fed to the reference model.
    #[serde(default)]
    pub pom_bus: Option<String>,
    /// Buses beyond the POM; their load changes pass through it.
    #[serde(default)]
    pub served_buses: Vec<String>,
    /// Buses between the POM and the generators.
    #[serde(default)]
    pub inner_buses: Vec<String>,
    pub controller: ControllerSpec,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Horizon [s].
    pub duration: f64,
    /// Output and history sampling [Hz].
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    /// Largest integrator step [s]; defaults to one sample.
    #[serde(default)]
    pub max_step: Option<f64>,
    #[serde(default = "default_fidelity")]
    pub fidelity: String,
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default)]
    pub seed: u64,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
}

fn default_rate() -> f64 {
    1000.0
}

fn default_fidelity() -> String {
    "reduced1".into()
}

/// Per-group signals, in trajectory column order.
pub const GROUP_SIGNALS: [&str; 12] = [
    "dw_d", "dw_ref", "e", "dp_pom", "dp_e", "dp_g", "u_ie", "dp_m", "dp_v", "omega_r", "dw_r", "nu",
];

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(CoreError::validation(format!("scenario.duration = {} must be > 0", self.duration)));
        }
        if !(self.sample_rate > 0.0) {
            return Err(CoreError::validation("scenario.sample_rate must be > 0"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(CoreError::validation("scenario.max_step must be > 0"));
            }
        }
        self.delay.validate()?;
        if self.groups.is_empty() {
            return Err(CoreError::validation("scenario needs at least one group"));
        }
        let mut ids = BTreeSet::new();
        for g in &self.groups {
            if !ids.insert(g.id.as_str()) {
                return Err(CoreError::validation(format!("duplicate group id `{}`", g.id)));
            }
            g.diesel.validate()?;
            g.reference.validate()?;
            let pom = g.pom_bus.as_deref().unwrap_or("");
            if pom.is_empty() {
                return Err(CoreError::validation(format!(
                    "group `{}` has no POM; every MRC group needs exactly one point of measurement",
                    g.id
                )));
            }
            if g.wtg_count == 0 {
                return Err(CoreError::validation(format!("group `{}` has no WTG", g.id)));
            }
            if let Some(b) = g.served_buses.iter().find(|b| g.inner_buses.contains(b)) {
                return Err(CoreError::validation(format!(
                    "group `{}` lists bus {b} both beyond and inside its POM",
                    g.id
                )));
            }
        }
        for d in &self.disturbances {
            if !(d.time >= 0.0 && d.time.is_finite() && d.magnitude.is_finite()) {
                return Err(CoreError::validation(format!("disturbance at bus {} has bad time or magnitude", d.bus)));
            }
            if self.routes(&d.bus).is_empty() && d.shares.is_empty() {
                return Err(CoreError::validation(format!("no group routes disturbance bus {}", d.bus)));
            }
            for k in d.shares.keys() {
                if !ids.contains(k.as_str()) {
                    return Err(CoreError::validation(format!("disturbance share names unknown group `{k}`")));
                }
            }
        }
        Ok(())
    }

    fn routes(&self, bus: &str) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| g.served_buses.iter().chain(&g.inner_buses).any(|b| b == bus))
            .map(|g| g.id.as_str())
            .collect()
    }

    /// `(in-path, inner)` load seen by group `gi` at time `t`.
    fn loads(&self, gi: usize, t: f64) -> (f64, f64) {
        let g = &self.groups[gi];
        let (mut pom, mut inner) = (0.0, 0.0);
        for d in self.disturbances.iter().filter(|d| t >= d.time) {
            let share = if d.shares.is_empty() {
                let r = self.routes(&d.bus);
                if r.contains(&g.id.as_str()) {
                    1.0 / r.len() as f64
                } else {
                    0.0
                }
            } else {
                d.shares.get(&g.id).copied().unwrap_or(0.0)
            };
            if g.inner_buses.contains(&d.bus) {
                inner += share * d.magnitude;
            } else {
                pom += share * d.magnitude;
            }
        }
        (pom, inner)
    }
}

/// Strategy registries used by [`simulate`].
pub struct Registries {
    pub plants: PlantRegistry,
    pub delays: DelayRegistry,
    pub controllers: ControllerRegistry,
}

impl Default for Registries {
    fn default() -> Self {
        Self {
            plants: plant_registry(),
            delays: delay_registry(),
            controllers: controller_registry(),
        }
    }
}

struct Group {
    k_d: DMatrix<f64>,
    e_d: [f64; 3],
    a_r: DMatrix<f64>,
    e_r: [f64; 3],
    f_bar: f64,
    plants: Vec<Box<dyn WtgPlant>>,
    controller: Box<dyn Controller>,
    /// Offsets of `[diesel, reference, wtg..., controller]` in the state.
    base: usize,
    wtg_offsets: Vec<usize>,
    ctrl_offset: usize,
}

/// Values frozen over one integration segment.
#[derive(Debug, Clone, Copy)]
struct Segment<'a> {
    loads: &'a [(f64, f64)],
    nu: f64,
}

struct System {
    groups: Vec<Group>,
    history: History,
    omega_r0: f64,
    scratch: Vec<f64>,
}

impl System {
    /// Right-hand side; with `probe`, also appends the recorded signals.
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64], seg: &Segment, mut probe: Option<&mut Vec<f64>>) -> Result<()> {
        let ng = self.groups.len();
        let mut current = vec![0.0; 7 * ng];
        for (gi, g) in self.groups.iter().enumerate() {
            let b = g.base;
            let dw_r = g
                .plants
                .iter()
                .zip(&g.wtg_offsets)
                .map(|(p, &o)| p.speed_deviation(&y[o..o + p.n_states()]))
                .sum::<f64>()
                / g.plants.len() as f64;
            let c = &mut current[7 * gi..7 * gi + 7];
            c[..3].copy_from_slice(&y[b..b + 3]);
            c[3] = dw_r;
            c[4..7].copy_from_slice(&y[b + 3..b + 6]);
        }
        self.scratch.resize(7 * ng, 0.0);
        let delayed_ok = seg.nu > 0.0 && self.history.at(t - seg.nu, &mut self.scratch).is_some();
        if !delayed_ok {
            self.scratch.copy_from_slice(&current);
        }
        for (gi, g) in self.groups.iter_mut().enumerate() {
            let b = g.base;
            let m = Measurements {
                delayed: &self.scratch[7 * gi..7 * gi + 7],
                current: &current[7 * gi..7 * gi + 7],
                f_bar: g.f_bar,
            };
            let nz = g.controller.n_states();
            let co = g.ctrl_offset;
            let u = g.controller.eval(&m, &y[co..co + nz], &mut dy[co..co + nz]);
            let mut dp_g = 0.0;
            let mut units = Vec::new();
            for (p, &o) in g.plants.iter_mut().zip(&g.wtg_offsets) {
                let n = p.n_states();
                let out = p.eval(&y[o..o + n], u, &mut dy[o..o + n])?;
                dp_g += out.dp_g;
                units.push(out.dp_g);
            }
            let (pom, inner) = seg.loads[gi];
            let dp_e = pom + inner - dp_g;
            for i in 0..3 {
                let mut acc = g.e_d[i] * dp_e;
                let mut accr = g.e_r[i] * pom;
                for j in 0..3 {
                    acc += g.k_d[(i, j)] * y[b + j];
                    accr += g.a_r[(i, j)] * y[b + 3 + j];
                }
                dy[b + i] = acc;
                dy[b + 3 + i] = accr;
            }
            if let Some(rec) = probe.as_deref_mut() {
                let dw_r = current[7 * gi + 3];
                rec.extend_from_slice(&[
                    y[b],
                    y[b + 3],
                    y[b] - y[b + 3],
                    pom,
                    dp_e,
                    dp_g,
                    u,
                    y[b + 1],
                    y[b + 2],
                    self.omega_r0 + dw_r,
                    dw_r,
                    if delayed_ok { seg.nu } else { 0.0 },
                ]);
                rec.extend_from_slice(&units);
            }
        }
        if probe.is_some() {
            self.history.push(&current);
        }
        Ok(())
    }
}

/// Runs a scenario on the WTG models in `wtg`.
pub fn simulate(s: &Scenario, wtg: &Arc<WtgContext>, reg: &Registries) -> Result<Trajectory> {
    s.validate()?;
    let dt = 1.0 / s.sample_rate;
    let mut groups = Vec::new();
    let mut offset = 0;
    let mut columns = vec![];
    for g in &s.groups {
        let d = diesel_state_space(&g.diesel)?;
        let r = reference_state_space(&g.reference)?;
        let base = offset;
        offset += 6;
        let mut plants = Vec::new();
        let mut wtg_offsets = Vec::new();
        for _ in 0..g.wtg_count {
            let p = reg.plants.build(&s.fidelity, wtg)?;
            wtg_offsets.push(offset);
            offset += p.n_states();
            plants.push(p);
        }
        let controller = reg.controllers.build(&g.controller.kind, &g.controller)?;
        let ctrl_offset = offset;
        offset += controller.n_states();
        columns.extend(GROUP_SIGNALS.iter().map(|c| format!("{}.{c}", g.id)));
        columns.extend((1..=g.wtg_count).map(|k| format!("{}.wtg{k}.dp_g", g.id)));
        groups.push(Group {
            k_d: d.a.clone(),
            e_d: [d.e[(0, 0)], d.e[(1, 0)], d.e[(2, 0)]],
            a_r: r.a.clone(),
            e_r: [r.e[(0, 0)], r.e[(1, 0)], r.e[(2, 0)]],
            f_bar: g.diesel.f_bar,
            plants,
            controller,
            base,
            wtg_offsets,
            ctrl_offset,
        });
    }
    let mut y = vec![0.0; offset];
    for g in &groups {
        for (p, &o) in g.plants.iter().zip(&g.wtg_offsets) {
            y[o..o + p.n_states()].copy_from_slice(&p.initial_state());
        }
    }
    let ng = groups.len();
    let mut sys = System {
        groups,
        history: History::new(0.0, dt, 7 * ng),
        omega_r0: wtg.operating_point.state.omega_r,
        scratch: Vec::new(),
    };
    let mut policy = reg.delays.build(
        &s.delay.policy,
        &DelayContext {
            spec: s.delay.clone(),
            seed: s.seed,
        },
    )?;
    let control = StepControl {
        max_step: s.max_step.unwrap_or(dt).min(dt),
        ..StepControl::default()
    };
    let mut ig = Dopri5::new(control, offset);
    let steps = (s.duration * s.sample_rate).round() as usize;
    let mut traj = Trajectory::new(columns);
    let mut dy = vec![0.0; offset];
    let loads_at = |t: f64| -> Vec<(f64, f64)> { (0..ng).map(|gi| s.loads(gi, t)).collect() };
    let mut row = Vec::new();

    // Record the initial point.
    let l0 = loads_at(0.0);
    let nu0 = policy.delay(0.0);
    sys.rhs(0.0, &y, &mut dy, &Segment { loads: &l0, nu: nu0 }, Some(&mut row))?;
    traj.push(0.0, &row)?;

    for k in 0..steps {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let mut cuts: Vec<f64> = s
            .disturbances
            .iter()
            .map(|d| d.time)
            .chain(policy.breakpoints(t0, t1))
            .filter(|&t| t > t0 + 1e-12 && t < t1 - 1e-12)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.push(t1);
        let mut ta = t0;
        for tb in cuts {
            let mid = 0.5 * (ta + tb);
            let loads = loads_at(mid);
            let seg = Segment {
                loads: &loads,
                nu: policy.delay(mid),
            };
            let mut f = |t: f64, yy: &[f64], d: &mut [f64]| sys.rhs(t, yy, d, &seg, None);
            ig.advance(&mut f, ta, tb, &mut y).map_err(|e| match e {
                CoreError::Numeric(m) => CoreError::numeric(format!("{} at t in [{ta:.4}, {tb:.4}]: {m}", s.name)),
                e => e,
            })?;
            ta = tb;
        }
        // Signals at t1 use the inputs in force just after t1.
        let loads = loads_at(t1);
        let seg = Segment {
            loads: &loads,
            nu: policy.delay(t1),
        };
        row.clear();
        sys.rhs(t1, &y, &mut dy, &seg, Some(&mut row))?;
        traj.push(t1, &row)?;
    }
    debug!(
        "{}: {} accepted, {} rejected steps",
        s.name, ig.accepted, ig.rejected
    );
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults;

    pub(crate) fn scenario(groups: Vec<GroupSpec>, dist: Vec<Disturbance>) -> Scenario {
        Scenario {
            name: "t".into(),
            duration: 1.0,
            sample_rate: 1000.0,
            max_step: None,
            fidelity: "reduced1".into(),
            delay: DelaySpec {
                policy: "worst".into(),
                eta_m: 0.05,
                kappa: 0.1,
                resample_interval: 0.05,
            },
            seed: 1,
            groups,
            disturbances: dist,
        }
    }

    pub(crate) fn group(id: &str) -> GroupSpec {
        GroupSpec {
            id: id.into(),
            diesel: defaults::diesel(),
            reference: defaults::reference(3.0, 0.05),
            wtg_count: 1,
            pom_bus: Some("1".into()),
            served_buses: vec!["18".into()],
            inner_buses: vec!["3".into()],
            controller: ControllerSpec::none(),
        }
    }

    fn step(bus: &str, t: f64) -> Disturbance {
        Disturbance {
            time: t,
            magnitude: 0.1,
            bus: bus.into(),
            shares: BTreeMap::new(),
        }
    }

    #[test]
    fn missing_pom_rejected() {
        let mut g = group("a");
        g.pom_bus = None;
        let e = scenario(vec![g], vec![]).validate().unwrap_err().to_string();
        assert!(e.contains("point of measurement"), "{e}");
    }

    #[test]
    fn routing_and_shares() {
        let mut b = group("b");
        b.inner_buses.clear();
        let s = scenario(vec![group("a"), b], vec![step("18", 1.0), step("3", 2.0)]);
        s.validate().unwrap();
        assert_eq!(s.loads(0, 0.5), (0.0, 0.0));
        assert_eq!(s.loads(0, 1.5), (0.05, 0.0));
        assert_eq!(s.loads(0, 2.5), (0.05, 0.1));
        assert_eq!(s.loads(1, 2.5), (0.05, 0.0));
    }

    #[test]
    fn unrouted_bus_rejected() {
        let s = scenario(vec![group("a")], vec![step("30", 1.0)]);
        assert!(s.validate().is_err());
    }
}
