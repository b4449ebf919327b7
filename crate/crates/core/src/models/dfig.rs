use serde::{Deserialize, Serialize};

use super::diesel::positive;
use crate::error::{CoreError, Result};

/// Default machine-base to turbine-base ratio (1.1 MVA machine, 1 MW turbine).
pub const DEFAULT_ETA: f64 = 1.0 / 1.1;

/// Rotor speed band where the DFIG model is considered valid [p.u.].
pub const SPEED_VALIDITY: (f64, f64) = (0.5, 1.5);

pub const STATE_LABELS: [&str; 10] = [
    "psi_qs", "psi_ds", "psi_qr", "psi_dr", "omega_r", "omega_f_star", "x1", "x2", "x3", "x4",
];

pub const ALGEBRAIC_LABELS: [&str; 10] = [
    "i_qs", "i_ds", "i_qr", "i_dr", "v_qr", "v_dr", "p_g", "q_g", "t_e", "t_m",
];

/// Six-coefficient power coefficient curve at zero pitch.
///
/// Tip speed ratio is `lambda_opt * (w_r / base_speed) * (base_wind / v)`, so
/// the curve peaks when the rotor turns at `base_speed` in `base_wind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeroCurve {
    pub lambda_opt: f64,
    pub base_speed: f64,
    pub base_wind: f64,
    pub rated_wind: f64,
}

impl Default for AeroCurve {
    fn default() -> Self {
        Self {
            lambda_opt: 8.1,
            base_speed: 1.2,
            base_wind: 10.0,
            rated_wind: 12.0,
        }
    }
}

impl AeroCurve {
    pub fn cp(lambda: f64) -> f64 {
        let inv_li = 1.0 / lambda - 0.035;
        let li = 1.0 / inv_li;
        0.5176 * (116.0 / li - 5.0) * (-21.0 / li).exp() + 0.0068 * lambda
    }

    pub fn tip_speed_ratio(&self, w_r: f64, wind: f64) -> f64 {
        self.lambda_opt * (w_r / self.base_speed) * (self.base_wind / wind)
    }

    /// Unscaled aerodynamic torque on the rotor, generator convention.
    pub fn torque(&self, w_r: f64, wind: f64) -> f64 {
        let lambda = self.tip_speed_ratio(w_r, wind);
        Self::cp(lambda) * (wind / self.rated_wind).powi(3) / w_r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfigModel {
    pub r_s: f64,
    pub r_r: f64,
    pub l_ls: f64,
    pub l_lr: f64,
    pub l_m: f64,
    /// Lumped turbine and generator inertia [s].
    pub h_t: f64,
    /// Electrical speed base [rad/s].
    pub omega_bar: f64,
    pub kp_t: f64,
    pub ki_t: f64,
    pub kp_q: f64,
    pub ki_q: f64,
    pub kp_c: f64,
    pub ki_c: f64,
    /// Cutoff of the first-order filter on the MPPT speed reference [rad/s].
    pub omega_c: f64,
    /// Machine-base to turbine-base ratio; `None` means [`DEFAULT_ETA`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_s_base")]
    pub s_base_mva: f64,
    #[serde(default = "default_v_base")]
    pub v_base: f64,
    #[serde(default)]
    pub aero: AeroCurve,
}

fn default_s_base() -> f64 {
    1.1
}

fn default_v_base() -> f64 {
    575.0
}

impl DfigModel {
    pub fn l_s(&self) -> f64 {
        self.l_ls + self.l_m
    }

    pub fn l_r(&self) -> f64 {
        self.l_lr + self.l_m
    }

    /// Leakage coefficient `(L_r - L_m^2 / L_s) / L_r`.
    pub fn sigma(&self) -> f64 {
        (self.l_r() - self.l_m * self.l_m / self.l_s()) / self.l_r()
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(DEFAULT_ETA)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dfig.r_s", self.r_s),
            ("dfig.r_r", self.r_r),
            ("dfig.l_ls", self.l_ls),
            ("dfig.l_lr", self.l_lr),
            ("dfig.l_m", self.l_m),
            ("dfig.h_t", self.h_t),
            ("dfig.omega_bar", self.omega_bar),
            ("dfig.kp_t", self.kp_t),
            ("dfig.ki_t", self.ki_t),
            ("dfig.kp_q", self.kp_q),
            ("dfig.ki_q", self.ki_q),
            ("dfig.kp_c", self.kp_c),
            ("dfig.ki_c", self.ki_c),
            ("dfig.omega_c", self.omega_c),
            ("dfig.eta", self.eta()),
            ("dfig.s_base_mva", self.s_base_mva),
        ] {
            positive(name, v)?;
        }
        let sl = self.sigma() * self.l_r();
        if !(sl > 0.0) || !(self.sigma() < 1.0) {
            return Err(CoreError::validation(format!(
                "dfig inductances are nonphysical: sigma*L_r = {sl}, sigma = {}",
                self.sigma()
            )));
        }
        Ok(())
    }
}

/// Differential variables in the fixed order of [`STATE_LABELS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfigState {
    pub psi_qs: f64,
    pub psi_ds: f64,
    pub psi_qr: f64,
    pub psi_dr: f64,
    pub omega_r: f64,
    pub omega_f_star: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl DfigState {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.psi_qs,
            self.psi_ds,
            self.psi_qr,
            self.psi_dr,
            self.omega_r,
            self.omega_f_star,
            self.x1,
            self.x2,
            self.x3,
            self.x4,
        ]
    }

    pub fn from_array(v: &[f64]) -> Self {
        assert_eq!(v.len(), 10, "DFIG state has exactly 10 entries");
        Self {
            psi_qs: v[0],
            psi_ds: v[1],
            psi_qr: v[2],
            psi_dr: v[3],
            omega_r: v[4],
            omega_f_star: v[5],
            x1: v[6],
            x2: v[7],
            x3: v[8],
            x4: v[9],
        }
    }
}

/// Algebraic variables in the fixed order of [`ALGEBRAIC_LABELS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfigAlgebraic {
    pub i_qs: f64,
    pub i_ds: f64,
    pub i_qr: f64,
    pub i_dr: f64,
    pub v_qr: f64,
    pub v_dr: f64,
    pub p_g: f64,
    pub q_g: f64,
    pub t_e: f64,
    pub t_m: f64,
}

impl DfigAlgebraic {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.i_qs, self.i_ds, self.i_qr, self.i_dr, self.v_qr, self.v_dr, self.p_g, self.q_g,
            self.t_e, self.t_m,
        ]
    }

    pub fn from_array(v: &[f64]) -> Self {
        assert_eq!(v.len(), 10, "DFIG algebraic vector has exactly 10 entries");
        Self {
            i_qs: v[0],
            i_ds: v[1],
            i_qr: v[2],
            i_dr: v[3],
            v_qr: v[4],
            v_dr: v[5],
            p_g: v[6],
            q_g: v[7],
            t_e: v[8],
            t_m: v[9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfigInputs {
    pub u_ie: f64,
    pub q_g_star: f64,
    pub v_qs: f64,
    pub v_ds: f64,
    pub omega_s: f64,
    pub wind_speed: f64,
}

impl Default for DfigInputs {
    fn default() -> Self {
        Self {
            u_ie: 0.0,
            q_g_star: 0.0,
            v_qs: 1.0,
            v_ds: 0.0,
            omega_s: 1.0,
            wind_speed: 10.0,
        }
    }
}

/// What closes the last algebraic equation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum TorqueClosure {
    /// `T_m = -scale * aero_torque(w_r, v)` (motor convention).
    Curve { scale: f64 },
    /// `P_g = target`; `T_m` becomes a free unknown (equilibrium search).
    PowerTarget(f64),
}

/// MPPT speed reference polynomial, clamped to its validity band.
pub fn mppt_speed(p_g: f64, eta: f64) -> f64 {
    let p = eta * p_g;
    (-0.67 * p * p + 1.42 * p + 0.51).clamp(0.8, 1.2)
}

/// State derivatives and algebraic residuals of the DFIG under FOC.
///
/// Torques use the motor convention: `T_e` and `T_m` are negative when
/// generating, and the swing equation reads `2 H_T w_r' = T_e - T_m`.
pub(crate) fn residual_raw(
    x: &[f64],
    a: &[f64],
    inp: &DfigInputs,
    m: &DfigModel,
    closure: TorqueClosure,
) -> ([f64; 10], [f64; 10]) {
    let [pqs, pds, pqr, pdr, wr, wf, x1, x2, x3, x4] = <[f64; 10]>::try_from(x).unwrap();
    let [iqs, ids, iqr, idr, vqr, vdr, pg, qg, te, tm] = <[f64; 10]>::try_from(a).unwrap();
    let (ls, lr, lm) = (m.l_s(), m.l_r(), m.l_m);
    let sig_lr = m.sigma() * lr;
    let ws = inp.omega_s;
    let slip = ws - wr;
    let psi_s = pqs.hypot(pds);
    let speed_err = wf - wr + inp.u_ie;
    let q_err = inp.q_g_star - qg;
    let iqr_ref = -ls / (lm * psi_s) * (x1 + m.kp_t * speed_err);
    let idr_ref = x2 + m.kp_q * q_err;
    let wb = m.omega_bar;

    let dx = [
        wb * (inp.v_qs - m.r_s * iqs - ws * pds),
        wb * (inp.v_ds - m.r_s * ids + ws * pqs),
        wb * (vqr - m.r_r * iqr - slip * pdr),
        wb * (vdr - m.r_r * idr + slip * pqr),
        (te - tm) / (2.0 * m.h_t),
        m.omega_c * (mppt_speed(pg, m.eta()) - wf),
        m.ki_t * speed_err,
        m.ki_q * q_err,
        m.ki_c * (iqr_ref - iqr),
        m.ki_c * (idr_ref - idr),
    ];
    let last = match closure {
        TorqueClosure::Curve { scale } => tm + scale * m.aero.torque(wr, inp.wind_speed),
        TorqueClosure::PowerTarget(p) => pg - p,
    };
    let r = [
        -pqs + ls * iqs + lm * iqr,
        -pds + ls * ids + lm * idr,
        -pqr + lr * iqr + lm * iqs,
        -pdr + lr * idr + lm * ids,
        pg + (inp.v_qs * iqs + inp.v_ds * ids) + (vqr * iqr + vdr * idr),
        qg + (inp.v_qs * ids - inp.v_ds * iqs) + (vqr * idr - vdr * iqr),
        -vqr + x3 + m.kp_c * (iqr_ref - iqr) + slip * (sig_lr * idr + psi_s * lm / ls),
        -vdr + x4 + m.kp_c * (idr_ref - idr) - slip * sig_lr * iqr,
        -te + lm / ls * (pqs * idr - pds * iqr),
        last,
    ];
    (dx, r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfigResidual {
    pub derivatives: [f64; 10],
    pub algebraic: [f64; 10],
}

impl DfigResidual {
    pub fn max_abs(&self) -> f64 {
        self.derivatives
            .iter()
            .chain(self.algebraic.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Evaluates the DAE with `T_m` from the calibrated aerodynamic curve.
pub fn dfig_residual(
    s: &DfigState,
    a: &DfigAlgebraic,
    inputs: &DfigInputs,
    m: &DfigModel,
    aero_scale: f64,
) -> Result<DfigResidual> {
    let sl = m.sigma() * m.l_r();
    if !(sl > 0.0) {
        return Err(CoreError::validation(format!(
            "nonphysical inductances: sigma*L_r = {sl}"
        )));
    }
    if !(SPEED_VALIDITY.0..=SPEED_VALIDITY.1).contains(&s.omega_r) {
        return Err(CoreError::validation(format!(
            "rotor speed {} p.u. outside the model validity band [{}, {}]",
            s.omega_r, SPEED_VALIDITY.0, SPEED_VALIDITY.1
        )));
    }
    let (d, r) = residual_raw(
        &s.to_array(),
        &a.to_array(),
        inputs,
        m,
        TorqueClosure::Curve { scale: aero_scale },
    );
    Ok(DfigResidual {
        derivatives: d,
        algebraic: r,
    })
}

/// Electromagnetic torque from fluxes and rotor currents.
pub fn electromagnetic_torque(m: &DfigModel, psi_qs: f64, psi_ds: f64, i_qr: f64, i_dr: f64) -> f64 {
    m.l_m / m.l_s() * (psi_qs * i_dr - psi_ds * i_qr)
}

/// Currents from fluxes through the inverse inductance matrix,
/// returned as `[i_qs, i_ds, i_qr, i_dr]`.
pub fn currents_from_fluxes(m: &DfigModel, psi: [f64; 4]) -> [f64; 4] {
    let (ls, lr, lm) = (m.l_s(), m.l_r(), m.l_m);
    let det = ls * lr - lm * lm;
    let [pqs, pds, pqr, pdr] = psi;
    [
        (lr * pqs - lm * pqr) / det,
        (lr * pds - lm * pdr) / det,
        (ls * pqr - lm * pqs) / det,
        (ls * pdr - lm * pds) / det,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn model() -> DfigModel {
        crate::defaults::dfig_model()
    }

    #[test]
    fn mppt_polynomial_and_clamp() {
        assert_eq!(mppt_speed(0.0, 1.0), 0.8);
        let w = mppt_speed(0.8, 1.0 / 1.1);
        let p: f64 = 0.8 / 1.1;
        let raw = -0.67 * p * p + 1.42 * p + 0.51;
        assert!((w - raw).abs() < 1e-15);
        assert!((w - 1.188).abs() < 0.01);
        assert_eq!(mppt_speed(1.3, 1.0), 1.2);
    }

    #[test]
    fn cp_peak() {
        let (mut best, mut arg) = (0.0, 0.0);
        for k in 0..2000 {
            let l = 4.0 + k as f64 * 0.004;
            let c = AeroCurve::cp(l);
            if c > best {
                best = c;
                arg = l;
            }
        }
        assert!((arg - 8.1).abs() < 0.05, "{arg}");
        assert!((best - 0.48).abs() < 0.005, "{best}");
    }

    #[test]
    fn zero_fluxes_give_zero_torque() {
        let m = model();
        assert_eq!(electromagnetic_torque(&m, 0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn flux_current_round_trip() {
        let m = model();
        let i = [0.3, -0.7, 1.1, 0.2];
        let psi = [
            m.l_s() * i[0] + m.l_m * i[2],
            m.l_s() * i[1] + m.l_m * i[3],
            m.l_r() * i[2] + m.l_m * i[0],
            m.l_r() * i[3] + m.l_m * i[1],
        ];
        let back = currents_from_fluxes(&m, psi);
        for k in 0..4 {
            assert!((back[k] - i[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn leakage_coefficient_in_unit_interval() {
        let m = model();
        assert!(m.sigma() > 0.0 && m.sigma() < 1.0);
        m.validate().unwrap();
    }

    #[test]
    fn nonphysical_inductance_rejected() {
        let mut m = model();
        m.l_lr = -m.l_m;
        assert!(m.validate().is_err());
    }
}
