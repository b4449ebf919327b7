use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::statespace::{labels, LinearStateSpace};
use crate::error::{CoreError, Result};

/// Diesel generator swing, engine and governor chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DieselModel {
    /// Inertia constant [s].
    pub h_d: f64,
    /// Engine time constant [s].
    pub tau_d: f64,
    /// Governor time constant [s].
    pub tau_sm: f64,
    /// Droop [p.u.].
    pub r_d: f64,
    /// Frequency base [Hz].
    pub f_bar: f64,
    /// Rating [MW]; informational.
    #[serde(default = "default_rating")]
    pub rated_power_mw: f64,
}

fn default_rating() -> f64 {
    1.0
}

impl DieselModel {
    pub fn validate(&self) -> Result<()> {
        positive("diesel.h_d", self.h_d)?;
        positive("diesel.tau_d", self.tau_d)?;
        positive("diesel.tau_sm", self.tau_sm)?;
        positive("diesel.r_d", self.r_d)?;
        positive("diesel.f_bar", self.f_bar)
    }
}

/// Reference frequency response the controller makes the diesel follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub h_hat: f64,
    pub tau_d_hat: f64,
    pub tau_sm_hat: f64,
    pub r_hat: f64,
    #[serde(default)]
    pub d_hat: f64,
    pub f_bar: f64,
}

impl ReferenceModel {
    pub fn validate(&self) -> Result<()> {
        positive("reference.h_hat", self.h_hat)?;
        positive("reference.tau_d_hat", self.tau_d_hat)?;
        positive("reference.tau_sm_hat", self.tau_sm_hat)?;
        positive("reference.r_hat", self.r_hat)?;
        positive("reference.f_bar", self.f_bar)?;
        if !(self.d_hat >= 0.0) {
            return Err(CoreError::validation(format!(
                "reference.d_hat = {} must be >= 0",
                self.d_hat
            )));
        }
        Ok(())
    }
}

pub(crate) fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(CoreError::validation(format!("{field} = {v} must be > 0")))
    }
}

fn sfr_matrix(h: f64, d: f64, tau_d: f64, tau_sm: f64, r: f64, f: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[
            -f * d / (2.0 * h),
            f / (2.0 * h),
            0.0,
            0.0,
            -1.0 / tau_d,
            1.0 / tau_d,
            -1.0 / (f * tau_sm * r),
            0.0,
            -1.0 / tau_sm,
        ],
    )
}

/// States `[dw_d (Hz), dP_m, dP_v]`, disturbance `dP_e` [p.u.].
pub fn diesel_state_space(m: &DieselModel) -> Result<LinearStateSpace> {
    m.validate()?;
    let a = sfr_matrix(m.h_d, 0.0, m.tau_d, m.tau_sm, m.r_d, m.f_bar);
    let e = DMatrix::from_column_slice(3, 1, &[-m.f_bar / (2.0 * m.h_d), 0.0, 0.0]);
    Ok(LinearStateSpace {
        a,
        b: DMatrix::zeros(3, 0),
        e,
        c: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        d: DMatrix::zeros(1, 0),
        f: DMatrix::zeros(1, 1),
        states: labels(&["dw_d", "dp_m", "dp_v"]),
        inputs: vec![],
        disturbances: labels(&["dp_e"]),
        outputs: labels(&["dw_d"]),
    })
}

/// States `[dw_ref (Hz), dP_m_ref, dP_v_ref]`, disturbance `dP_pom`.
pub fn reference_state_space(m: &ReferenceModel) -> Result<LinearStateSpace> {
    m.validate()?;
    let a = sfr_matrix(m.h_hat, m.d_hat, m.tau_d_hat, m.tau_sm_hat, m.r_hat, m.f_bar);
    let e = DMatrix::from_column_slice(3, 1, &[-m.f_bar / (2.0 * m.h_hat), 0.0, 0.0]);
    Ok(LinearStateSpace {
        a,
        b: DMatrix::zeros(3, 0),
        e,
        c: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        d: DMatrix::zeros(1, 0),
        f: DMatrix::zeros(1, 1),
        states: labels(&["dw_ref", "dp_m_ref", "dp_v_ref"]),
        inputs: vec![],
        disturbances: labels(&["dp_pom"]),
        outputs: labels(&["dw_ref"]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diesel() -> DieselModel {
        DieselModel {
            h_d: 1.0,
            tau_d: 0.2,
            tau_sm: 0.1,
            r_d: 0.05,
            f_bar: 60.0,
            rated_power_mw: 1.0,
        }
    }

    #[test]
    fn diesel_entries() {
        let ss = diesel_state_space(&diesel()).unwrap();
        assert_eq!(ss.a[(0, 1)], 30.0);
        assert_eq!(ss.a[(1, 1)], -5.0);
        assert!((ss.a[(2, 0)] + 1.0 / 0.3).abs() < 1e-12);
        ss.validate().unwrap();
    }

    #[test]
    fn infinite_droop_removes_primary_response() {
        let mut d = diesel();
        d.r_d = f64::INFINITY;
        let ss = diesel_state_space(&d).unwrap();
        assert_eq!(ss.a[(2, 0)], 0.0);
    }

    #[test]
    fn swing_row_has_no_diagonal() {
        let d = DieselModel {
            h_d: 0.5,
            tau_d: 1.0,
            tau_sm: 1.0,
            r_d: f64::INFINITY,
            f_bar: 1.0,
            rated_power_mw: 1.0,
        };
        let ss = diesel_state_space(&d).unwrap();
        let ev = ss.a.complex_eigenvalues();
        assert!(ev.iter().any(|l| l.norm() < 1e-12));
    }

    #[test]
    fn reference_entries() {
        let r = ReferenceModel {
            h_hat: 3.0,
            tau_d_hat: 0.2,
            tau_sm_hat: 0.1,
            r_hat: 0.05,
            d_hat: 0.0,
            f_bar: 60.0,
        };
        let ss = reference_state_space(&r).unwrap();
        assert_eq!(ss.e[(0, 0)], -10.0);
        assert_eq!(ss.a[(0, 0)], 0.0);
        let r2 = ReferenceModel { h_hat: 2.0, ..r };
        let ss2 = reference_state_space(&r2).unwrap();
        assert!((ss2.a[(2, 0)] + 1.0 / (60.0 * 0.1 * 0.05)).abs() < 1e-12);
    }

    #[test]
    fn reference_matches_diesel_with_same_parameters() {
        let d = diesel();
        let r = ReferenceModel {
            h_hat: d.h_d,
            tau_d_hat: d.tau_d,
            tau_sm_hat: d.tau_sm,
            r_hat: d.r_d,
            d_hat: 0.0,
            f_bar: d.f_bar,
        };
        assert_eq!(
            diesel_state_space(&d).unwrap().a,
            reference_state_space(&r).unwrap().a
        );
    }

    #[test]
    fn rejects_nonpositive_time_constant() {
        let mut d = diesel();
        d.tau_d = -0.2;
        let err = diesel_state_space(&d).unwrap_err();
        assert!(err.to_string().contains("tau_d"));
    }
}
