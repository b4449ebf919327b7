use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// `x' = A x + B u + E w`, `y = C x + D u + F w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStateSpace {
    #[serde(with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub e: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub d: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub f: DMatrix<f64>,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub disturbances: Vec<String>,
    pub outputs: Vec<String>,
}

impl LinearStateSpace {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let m = self.inputs.len();
        let p = self.disturbances.len();
        let q = self.outputs.len();
        let checks = [
            ("A", self.a.shape(), (n, n)),
            ("B", self.b.shape(), (n, m)),
            ("E", self.e.shape(), (n, p)),
            ("C", self.c.shape(), (q, n)),
            ("D", self.d.shape(), (q, m)),
            ("F", self.f.shape(), (q, p)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(CoreError::validation(format!(
                    "state space {name} is {}x{}, labels imply {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        for (axis, labels) in [
            ("state", &self.states),
            ("input", &self.inputs),
            ("disturbance", &self.disturbances),
            ("output", &self.outputs),
        ] {
            let mut seen = HashSet::new();
            for l in labels {
                if !seen.insert(l) {
                    return Err(CoreError::validation(format!("duplicate {axis} label `{l}`")));
                }
            }
        }
        if [&self.a, &self.b, &self.e, &self.c, &self.d, &self.f]
            .iter()
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(CoreError::numeric("state space contains non-finite entries"));
        }
        Ok(())
    }
}

pub(crate) fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
