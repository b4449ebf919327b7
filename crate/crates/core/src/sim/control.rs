//! Supplementary WTG controllers selectable by name.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::registry::Registry;

/// Controller section of a scenario group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    /// `mrc`, `washout` or `none`.
    pub kind: String,
    /// `[K_p, K_r]`, 7 entries. The pipeline fills it from synthesis when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<f64>>,
    /// Named design in the config whose synthesized gain to use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_ie: Option<f64>,
    /// Washout filter time constant [s].
    #[serde(default = "default_tw")]
    pub t_w: f64,
}

fn default_tw() -> f64 {
    0.01
}

impl ControllerSpec {
    pub fn none() -> Self {
        Self {
            kind: "none".into(),
            gain: None,
            design: None,
            k_ie: None,
            t_w: default_tw(),
        }
    }

    pub fn mrc(gain: Vec<f64>) -> Self {
        Self {
            kind: "mrc".into(),
            gain: Some(gain),
            ..Self::none()
        }
    }

    pub fn washout(k_ie: f64) -> Self {
        Self {
            kind: "washout".into(),
            k_ie: Some(k_ie),
            ..Self::none()
        }
    }
}

/// Signals available to a controller at one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Measurements<'a> {
    /// `[dw_d (Hz), dp_m, dp_v, dw_r, dw_ref (Hz), dp_m_ref, dp_v_ref]` at
    /// `t - nu(t)`.
    pub delayed: &'a [f64],
    /// The same vector at `t`.
    pub current: &'a [f64],
    pub f_bar: f64,
}

pub trait Controller: Send {
    fn kind(&self) -> &'static str;
    fn n_states(&self) -> usize {
        0
    }
    /// Returns `u_ie` and writes controller state derivatives.
    fn eval(&self, m: &Measurements, z: &[f64], dz: &mut [f64]) -> f64;
}

pub type ControllerRegistry = Registry<dyn Controller, ControllerSpec>;

pub fn controller_registry() -> ControllerRegistry {
    let mut r = ControllerRegistry::new("controller");
    r.register("none", |_: &ControllerSpec| Ok(Box::new(Open)));
    r.register("mrc", |s: &ControllerSpec| {
        let k = s
            .gain
            .clone()
            .ok_or_else(|| CoreError::validation("mrc controller needs `gain` (7 entries) or a synthesis result"))?;
        if k.len() != 7 || k.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::validation(format!(
                "mrc gain must have 7 finite entries [K_p, K_r], got {}",
                k.len()
            )));
        }
        Ok(Box::new(StateFeedback(k)))
    });
    r.register("washout", |s: &ControllerSpec| {
        let k = s
            .k_ie
            .ok_or_else(|| CoreError::validation("washout controller needs `k_ie`"))?;
        if !(s.t_w > 0.0) {
            return Err(CoreError::validation(format!("washout t_w = {} must be > 0", s.t_w)));
        }
        Ok(Box::new(Washout { k, t: s.t_w }))
    });
    r
}

struct Open;

impl Controller for Open {
    fn kind(&self) -> &'static str {
        "none"
    }

    fn eval(&self, _m: &Measurements, _z: &[f64], _dz: &mut [f64]) -> f64 {
        0.0
    }
}

/// `u = K_p x_p(t - nu) + K_r x_r(t - nu)`.
struct StateFeedback(Vec<f64>);

impl Controller for StateFeedback {
    fn kind(&self) -> &'static str {
        "mrc"
    }

    fn eval(&self, m: &Measurements, _z: &[f64], _dz: &mut [f64]) -> f64 {
        self.0.iter().zip(m.delayed).map(|(k, x)| k * x).sum()
    }
}

/// `u = K s / (T s + 1)` on the local frequency deviation in p.u. Local
/// measurement, so no communication delay.
struct Washout {
    k: f64,
    t: f64,
}

impl Controller for Washout {
    fn kind(&self) -> &'static str {
        "washout"
    }

    fn n_states(&self) -> usize {
        1
    }

    fn eval(&self, m: &Measurements, z: &[f64], dz: &mut [f64]) -> f64 {
        let y = m.current[0] / m.f_bar;
        dz[0] = (y - z[0]) / self.t;
        self.k * dz[0]
    }
}
