//! Shipped parameter set. The fixture files carry the same numbers.

use crate::models::{AeroCurve, DfigModel, DieselModel, ReferenceModel};

/// 1.5 MW class averaged DFIG on a 1.1 MVA machine base.
pub fn dfig_model() -> DfigModel {
    DfigModel {
        r_s: 0.023,
        r_r: 0.016,
        l_ls: 0.18,
        l_lr: 0.16,
        l_m: 2.9,
        h_t: 4.0,
        omega_bar: 377.0,
        kp_t: 2.0,
        ki_t: 0.1,
        kp_q: 1.0,
        ki_q: 5.0,
        kp_c: 0.6,
        ki_c: 8.0,
        omega_c: 0.0011,
        eta: Some(1.0 / 1.1),
        s_base_mva: 1.1,
        v_base: 575.0,
        aero: AeroCurve::default(),
    }
}

/// 0.8 MW of output expressed on the 1.1 MVA machine base.
pub const P_G_TARGET: f64 = 0.8 / 1.1;

pub const WIND_SPEED: f64 = 10.0;

pub fn diesel() -> DieselModel {
    DieselModel {
        h_d: 1.0,
        tau_d: 0.2,
        tau_sm: 0.1,
        r_d: 0.05,
        f_bar: 60.0,
        rated_power_mw: 2.0,
    }
}

pub fn reference(h_hat: f64, r_hat: f64) -> ReferenceModel {
    ReferenceModel {
        h_hat,
        tau_d_hat: 0.2,
        tau_sm_hat: 0.1,
        r_hat,
        d_hat: 0.0,
        f_bar: 60.0,
    }
}

pub const ETA_M: f64 = 0.05;
pub const KAPPA: f64 = 0.1;

pub fn operating_targets() -> crate::equilibrium::OperatingTargets {
    crate::equilibrium::OperatingTargets {
        p_g: P_G_TARGET,
        q_g: 0.0,
        v_qs: 1.0,
        v_ds: 0.0,
        wind_speed: WIND_SPEED,
        omega_s: 1.0,
    }
}
