//! Evaluation quantities computed from trajectories and closed-loop models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::sim::Trajectory;

/// Derivative by a local least-squares quadratic over `2 half_width + 1`
/// samples; the window is shifted inward near the ends.
pub fn savgol_derivative(y: &[f64], dt: f64, half_width: usize) -> Vec<f64> {
    let n = y.len();
    let h = half_width.max(1);
    if n < 3 {
        return vec![0.0; n];
    }
    let width = (2 * h + 1).min(n);
    let interior = width / 2;
    let central: f64 = (1..=interior).map(|k| (k * k) as f64).sum::<f64>() * 2.0;
    let mut out = vec![0.0; n];
    for i in 0..n {
        if i >= interior && i + interior < n {
            let mut acc = 0.0;
            for k in 1..=interior {
                acc += k as f64 * (y[i + k] - y[i - k]);
            }
            out[i] = acc / (central * dt);
        } else {
            let start = i.saturating_sub(interior).min(n - width);
            out[i] = edge_slope(&y[start..start + width], i - start) / dt;
        }
    }
    out
}

/// Slope at sample `at` of the quadratic fitted to `y` on a unit grid.
fn edge_slope(y: &[f64], at: usize) -> f64 {
    let mut m = DMatrix::<f64>::zeros(3, 3);
    let mut r = DVector::<f64>::zeros(3);
    for (j, v) in y.iter().enumerate() {
        let s = j as f64 - at as f64;
        let p = [1.0, s, s * s];
        for a in 0..3 {
            r[a] += p[a] * v;
            for b in 0..3 {
                m[(a, b)] += p[a] * p[b];
            }
        }
    }
    m.lu().solve(&r).map(|c| c[1]).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaFit {
    /// `None` when the frequency derivative carries too little energy.
    pub h_ie: Option<f64>,
    /// RMS of the fit error relative to RMS of the power deviation.
    pub residual: Option<f64>,
    pub window: [f64; 2],
    pub status: String,
}

/// Fits `dP_g ~ -2 H_ie d(dw)/dt` over `window`, with `dw` in p.u.
/// Injection is positive, so support during a falling frequency gives a
/// positive `H_ie`.
pub fn fit_emulated_inertia(
    time: &[f64],
    dw_pu: &[f64],
    dp_g: &[f64],
    window: [f64; 2],
    half_width: usize,
) -> Result<InertiaFit> {
    if time.len() != dw_pu.len() || time.len() != dp_g.len() || time.len() < 3 {
        return Err(CoreError::validation("inertia fit needs equal-length series of at least 3 samples"));
    }
    let (t0, t1) = (time[0], time[time.len() - 1]);
    if !(window[0] < window[1]) || window[0] < t0 - 1e-9 || window[1] > t1 + 1e-9 {
        return Err(CoreError::validation(format!(
            "fit window [{}, {}] is not inside the trajectory [{t0}, {t1}]",
            window[0], window[1]
        )));
    }
    let dt = (t1 - t0) / (time.len() - 1) as f64;
    let d = savgol_derivative(dw_pu, dt, half_width);
    let idx: Vec<usize> = (0..time.len())
        .filter(|&i| time[i] >= window[0] - 1e-9 && time[i] <= window[1] + 1e-9)
        .collect();
    let dd: f64 = idx.iter().map(|&i| d[i] * d[i]).sum();
    let pd: f64 = idx.iter().map(|&i| dp_g[i] * d[i]).sum();
    let pp: f64 = idx.iter().map(|&i| dp_g[i] * dp_g[i]).sum();
    let energy = (dd / idx.len().max(1) as f64).sqrt();
    if energy < 1e-9 {
        return Ok(InertiaFit {
            h_ie: None,
            residual: None,
            window,
            status: "unidentifiable".into(),
        });
    }
    let h = -pd / (2.0 * dd);
    let err: f64 = idx
        .iter()
        .map(|&i| (dp_g[i] + 2.0 * h * d[i]).powi(2))
        .sum();
    Ok(InertiaFit {
        h_ie: Some(h),
        residual: Some(if pp > 0.0 { (err / pp).sqrt() } else { 0.0 }),
        window,
        status: "ok".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub nadir_hz: f64,
    pub nadir_time: f64,
    pub max_rocof: f64,
    pub steady_state_hz: f64,
}

/// `dw_hz` is the deviation in Hz. RoCoF is the largest absolute mean slope
/// over any `window`-long span.
pub fn frequency_metrics(time: &[f64], dw_hz: &[f64], f_bar: f64, window: f64) -> FrequencyMetrics {
    let n = time.len();
    if n == 0 {
        return FrequencyMetrics {
            nadir_hz: f_bar,
            nadir_time: 0.0,
            max_rocof: 0.0,
            steady_state_hz: 0.0,
        };
    }
    let (mut k_min, mut v_min) = (0, f64::INFINITY);
    for (k, v) in dw_hz.iter().enumerate() {
        if *v < v_min {
            v_min = *v;
            k_min = k;
        }
    }
    let dt = if n > 1 { (time[n - 1] - time[0]) / (n - 1) as f64 } else { 0.0 };
    let mut rocof = 0.0f64;
    if dt > 0.0 {
        let lag = ((window / dt).round() as usize).clamp(1, n - 1);
        for k in lag..n {
            let s = (dw_hz[k] - dw_hz[k - lag]) / (time[k] - time[k - lag]);
            rocof = rocof.max(s.abs());
        }
    }
    let tail = (n / 10).max(1);
    let steady = dw_hz[n - tail..].iter().sum::<f64>() / tail as f64;
    FrequencyMetrics {
        nadir_hz: f_bar + v_min.min(0.0),
        nadir_time: time[k_min],
        max_rocof: rocof,
        steady_state_hz: steady,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub rms: f64,
    pub peak: f64,
    /// Peak `|dw_ref|`, for relative error statements.
    pub reference_peak: f64,
}

pub fn tracking_metrics(e: &[f64], dw_ref: &[f64]) -> TrackingMetrics {
    let n = e.len().max(1) as f64;
    TrackingMetrics {
        rms: (e.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        peak: e.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        reference_peak: dw_ref.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Finite-horizon `||e||_2 / ||w||_2`.
    pub ratio: f64,
    pub sqrt_gamma: f64,
    pub satisfied: bool,
}

/// Trapezoid L2 norms; `w` holds the plant and reference disturbance
/// channels.
pub fn bound_check(time: &[f64], e: &[f64], w: &[&[f64]], gamma: f64) -> BoundCheck {
    let l2 = |f: &dyn Fn(usize) -> f64| -> f64 {
        (1..time.len())
            .map(|k| 0.5 * (time[k] - time[k - 1]) * (f(k) + f(k - 1)))
            .sum::<f64>()
            .sqrt()
    };
    let ne = l2(&|k| e[k] * e[k]);
    let nw = l2(&|k| w.iter().map(|c| c[k] * c[k]).sum());
    let ratio = if nw > 0.0 { ne / nw } else { 0.0 };
    let sqrt_gamma = gamma.sqrt();
    BoundCheck {
        ratio,
        sqrt_gamma,
        satisfied: ratio <= sqrt_gamma,
    }
}

/// Everything reported for one group of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub group: String,
    pub frequency: FrequencyMetrics,
    pub tracking: TrackingMetrics,
    pub inertia: InertiaFit,
    /// Peak `|dP_g|` per WTG unit [p.u.].
    pub wtg_peak_dp_g: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub f_bar: f64,
    pub rocof_window: f64,
    /// Start of the inertia fit; the first disturbance if absent.
    pub fit_start: Option<f64>,
    pub fit_length: f64,
    pub savgol_half_width: usize,
    /// Synthesis `gamma`, enabling the bound check.
    pub gamma: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            f_bar: 60.0,
            rocof_window: 0.1,
            fit_start: None,
            fit_length: 2.0,
            savgol_half_width: 10,
            gamma: None,
        }
    }
}

/// Reports every group found in `tr`.
pub fn scenario_report(name: &str, tr: &Trajectory, opts: &ReportOptions) -> Result<Vec<ScenarioReport>> {
    let groups = tr.groups();
    if groups.is_empty() {
        return Err(CoreError::validation("trajectory has no `<group>.dw_d` column"));
    }
    let t = &tr.time;
    let mut out = Vec::new();
    for g in groups {
        let col = |s: &str| tr.require(&format!("{g}.{s}"));
        let dw = col("dw_d")?;
        let dw_ref = col("dw_ref")?;
        let e = col("e")?;
        let dp_g = col("dp_g")?;
        let pom = col("dp_pom")?;
        let start = match opts.fit_start {
            Some(s) => s,
            None => first_change(t, pom).unwrap_or(t[0]),
        };
        let end = (start + opts.fit_length).min(t[t.len() - 1]);
        let dw_pu: Vec<f64> = dw.iter().map(|v| v / opts.f_bar).collect();
        let inertia = if end > start {
            fit_emulated_inertia(t, &dw_pu, dp_g, [start, end], opts.savgol_half_width)?
        } else {
            InertiaFit {
                h_ie: None,
                residual: None,
                window: [start, end],
                status: "unidentifiable".into(),
            }
        };
        let mut wtg_peak_dp_g = Vec::new();
        for k in 1.. {
            match tr.column(&format!("{g}.wtg{k}.dp_g")) {
                Some(c) => wtg_peak_dp_g.push(c.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
                None => break,
            }
        }
        let bound = match opts.gamma {
            Some(gamma) => {
                let plant_w: Vec<f64> = col("dp_e")?.iter().zip(dp_g).map(|(a, b)| a + b).collect();
                Some(bound_check(t, e, &[&plant_w, pom], gamma))
            }
            None => None,
        };
        out.push(ScenarioReport {
            scenario: name.to_string(),
            group: g.clone(),
            frequency: frequency_metrics(t, dw, opts.f_bar, opts.rocof_window),
            tracking: tracking_metrics(e, dw_ref),
            inertia,
            wtg_peak_dp_g,
            bound,
        });
    }
    Ok(out)
}

fn first_change(t: &[f64], v: &[f64]) -> Option<f64> {
    v.iter().position(|x| *x != v[0]).map(|k| t[k])
}

fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Bisection tolerance or grid spacing in log10 decades.
    pub resolution: f64,
    pub note: String,
}

/// H-infinity norm of `C (sI - A)^-1 B + D` by bisection on the
/// Hamiltonian imaginary-axis test.
pub fn hinf_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, rel_tol: f64) -> Result<NormEstimate> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.shape() != (c.nrows(), b.ncols()) {
        return Err(CoreError::validation("hinf_norm: inconsistent dimensions"));
    }
    if spectral_abscissa(a) >= 0.0 {
        return Err(CoreError::numeric("hinf_norm: A is not Hurwitz"));
    }
    let sv = |m: &DMatrix<f64>| m.clone().svd(false, false).singular_values.max();
    let d_norm = if d.is_empty() { 0.0 } else { sv(d) };
    let dc = c * a.clone().try_inverse().ok_or_else(|| CoreError::numeric("A is singular"))? * b;
    let mut lo = d_norm.max(sv(&(d - dc)));
    // Peak of a sampled frequency response gives a tighter lower bound.
    for k in 0..=60 {
        let w = 10f64.powf(-3.0 + 6.0 * k as f64 / 60.0);
        lo = lo.max(gain_at(a, None, b, c, d, w, 0.0)?);
    }
    let mut hi = 2.0 * lo.max(1e-12);
    let mut note = String::from("bisection");
    let mut widen = 0;
    while has_imaginary_eig(a, b, c, d, hi)? {
        hi *= 2.0;
        widen += 1;
        if widen > 60 {
            return Err(CoreError::numeric("hinf_norm: could not bracket the norm"));
        }
    }
    if widen > 0 {
        note = format!("bisection; upper bracket widened {widen} times");
    }
    if lo == 0.0 {
        return Ok(NormEstimate { value: 0.0, resolution: 0.0, note });
    }
    while hi - lo > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if has_imaginary_eig(a, b, c, d, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NormEstimate {
        value: 0.5 * (lo + hi),
        resolution: hi - lo,
        note,
    })
}

fn has_imaginary_eig(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, g: f64) -> Result<bool> {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    let r = DMatrix::<f64>::identity(m, m) * (g * g) - d.transpose() * d;
    let ri = r.try_inverse().ok_or_else(|| CoreError::numeric("hinf_norm: gamma at a singular value of D"))?;
    let a_h = a + b * &ri * d.transpose() * c;
    let s = DMatrix::<f64>::identity(p, p) + d * &ri * d.transpose();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_h);
    h.view_mut((0, n), (n, n)).copy_from(&(b * &ri * b.transpose()));
    h.view_mut((n, 0), (n, n)).copy_from(&(-(c.transpose() * s * c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a_h.transpose()));
    let scale = h.amax().max(1.0);
    Ok(h
        .complex_eigenvalues()
        .iter()
        .any(|l| l.re.abs() < 1e-9 * scale.max(l.im.abs())))
}

/// Largest singular value of `C (jw I - A - A_d e^{-jw tau})^-1 B + D`.
fn gain_at(
    a: &DMatrix<f64>,
    a_d: Option<&DMatrix<f64>>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    w: f64,
    tau: f64,
) -> Result<f64> {
    let n = a.nrows();
    let cx = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let mut s = DMatrix::<Complex64>::identity(n, n) * Complex64::new(0.0, w) - cx(a);
    if let Some(ad) = a_d {
        let phase = Complex64::from_polar(1.0, -w * tau);
        s -= cx(ad) * phase;
    }
    let x = s
        .lu()
        .solve(&cx(b))
        .ok_or_else(|| CoreError::numeric(format!("singular frequency response at w = {w}")))?;
    let g = cx(c) * x + cx(d);
    Ok(g.svd(false, false).singular_values.max())
}

/// Peak gain of the delayed loop `x' = A x + A_d x(t - tau) + B w`,
/// `z = C x + D w` over `points` log-spaced frequencies in
/// `[10^lo, 10^hi]` rad/s.
#[allow(clippy::too_many_arguments)]
pub fn delayed_gain_grid(
    a: &DMatrix<f64>,
    a_d: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tau: f64,
    decades: (f64, f64),
    points: usize,
) -> Result<NormEstimate> {
    if points < 2 {
        return Err(CoreError::validation("frequency grid needs at least 2 points"));
    }
    let step = (decades.1 - decades.0) / (points - 1) as f64;
    let mut best = gain_at(a, Some(a_d), b, c, d, 0.0, tau)?;
    for k in 0..points {
        let w = 10f64.powf(decades.0 + step * k as f64);
        best = best.max(gain_at(a, Some(a_d), b, c, d, w, tau)?);
    }
    Ok(NormEstimate {
        value: best,
        resolution: step,
        note: format!("{points}-point grid over 1e{} to 1e{} rad/s", decades.0, decades.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_norm_is_one() {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let r = hinf_norm(&m(-1.0), &m(1.0), &m(1.0), &m(0.0), 1e-9).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn pure_gain_norm() {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let r = hinf_norm(&m(-1.0), &m(0.0), &m(0.0), &m(3.5), 1e-9).unwrap();
        assert!((r.value - 3.5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn lightly_damped_peak() {
        // 1/(s^2 + 2 z s + 1) peaks at 1/(2 z sqrt(1 - z^2)).
        let z: f64 = 0.05;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0 * z]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let r = hinf_norm(&a, &b, &c, &DMatrix::zeros(1, 1), 1e-10).unwrap();
        let want = 1.0 / (2.0 * z * (1.0 - z * z).sqrt());
        assert!((r.value - want).abs() < 1e-6 * want, "{} vs {want}", r.value);
    }

    #[test]
    fn flat_trajectory_metrics() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        let m = frequency_metrics(&t, &vec![0.0; 100], 60.0, 0.1);
        assert_eq!((m.nadir_hz, m.max_rocof, m.steady_state_hz), (60.0, 0.0, 0.0));
    }

    #[test]
    fn quadratic_derivative_is_exact_everywhere() {
        let dt = 1e-3;
        let y: Vec<f64> = (0..200).map(|k| {
            let t = k as f64 * dt;
            3.0 - 2.0 * t + 0.7 * t * t
        }).collect();
        let d = savgol_derivative(&y, dt, 5);
        for (k, v) in d.iter().enumerate() {
            let want = -2.0 + 1.4 * k as f64 * dt;
            assert!((v - want).abs() < 1e-8, "{k}: {v} vs {want}");
        }
    }

    #[test]
    fn flat_signal_is_unidentifiable() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        let f = fit_emulated_inertia(&t, &vec![0.0; 100], &vec![0.1; 100], [0.0, 0.9], 3).unwrap();
        assert_eq!(f.h_ie, None);
        assert_eq!(f.status, "unidentifiable");
    }
}
