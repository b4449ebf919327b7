use mrcie_core::metrics::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * dt).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Smooth sums of slow exponentials and sines; the power is built from
    // the analytic derivative. Sampled at 10 kHz so truncation stays small.
    #[test]
    fn inertia_fit_recovers_constructed_identity(
        h in 0.1f64..10.0,
        a in -0.02f64..0.02,
        b in -0.02f64..0.02,
        w in 0.2f64..1.5,
        tau in 0.5f64..3.0,
    ) {
        prop_assume!(a.abs() + b.abs() > 1e-3);
        let t = grid(30_001, 1e-4);
        let dw: Vec<f64> = t.iter().map(|t| a * (1.0 - (-t / tau).exp()) + b * (w * t).sin()).collect();
        let ddw: Vec<f64> = t.iter().map(|t| a * (-t / tau).exp() / tau + b * w * (w * t).cos()).collect();
        let p: Vec<f64> = ddw.iter().map(|d| -2.0 * h * d).collect();
        let f = fit_emulated_inertia(&t, &dw, &p, [0.5, 2.5], 2).unwrap();
        let got = f.h_ie.unwrap();
        prop_assert!((got - h).abs() <= 1e-6, "{} vs {}", got, h);
    }

    #[test]
    fn nadir_is_stable_under_grid_refinement(a in 0.001f64..0.02, tau in 0.3f64..3.0, z in 0.1f64..0.6) {
        // Underdamped dip so the nadir lies between samples.
        let f = |t: f64| {
            let wd = (1.0 - z * z).sqrt() / tau;
            -60.0 * a * (1.0 - (-z * t / tau).exp() * ((wd * t).cos() + z / (1.0 - z * z).sqrt() * (wd * t).sin()))
        };
        let coarse = grid(10_001, 1e-3);
        let fine = grid(20_001, 5e-4);
        let yc: Vec<f64> = coarse.iter().map(|t| f(*t)).collect();
        let yf: Vec<f64> = fine.iter().map(|t| f(*t)).collect();
        let mc = frequency_metrics(&coarse, &yc, 60.0, 0.1);
        let mf = frequency_metrics(&fine, &yf, 60.0, 0.1);
        prop_assert!((mc.nadir_hz - mf.nadir_hz).abs() < 1e-4);
        prop_assert!(mc.nadir_hz <= 60.0);
    }

    #[test]
    fn hinf_of_first_order_is_dc_gain(p in 0.1f64..50.0, g in 0.1f64..10.0) {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let r = hinf_norm(&m(-p), &m(g), &m(1.0), &m(0.0), 1e-10).unwrap();
        prop_assert!((r.value - g / p).abs() < 1e-6 * (g / p));
    }
}

#[test]
fn exponential_dip_metrics() {
    let (a, tau) = (0.01, 0.5);
    let t = grid(20_001, 1e-3);
    let y: Vec<f64> = t.iter().map(|t| -60.0 * a * (1.0 - (-t / tau).exp())).collect();
    let m = frequency_metrics(&t, &y, 60.0, 0.001);
    assert!((m.nadir_hz - (60.0 - 60.0 * a)).abs() < 1e-6);
    assert!((m.steady_state_hz + 60.0 * a).abs() < 1e-6);
    assert!((m.max_rocof - 60.0 * a / tau).abs() < 1e-3 * 60.0 * a / tau);
}

#[test]
fn delayed_grid_converges_and_matches_undelayed_case() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -1.0]);
    let ad = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -0.5, -0.2]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let d = DMatrix::zeros(1, 1);
    let g1 = delayed_gain_grid(&a, &ad, &b, &c, &d, 0.1, (-3.0, 3.0), 2000).unwrap();
    let g2 = delayed_gain_grid(&a, &ad, &b, &c, &d, 0.1, (-3.0, 3.0), 4000).unwrap();
    assert!((g1.value - g2.value).abs() < 5e-3 * g2.value);
    let g0 = delayed_gain_grid(&a, &ad, &b, &c, &d, 0.0, (-3.0, 3.0), 4000).unwrap();
    let h = hinf_norm(&(&a + &ad), &b, &c, &d, 1e-10).unwrap();
    assert!((g0.value - h.value).abs() < 5e-3 * h.value, "{} vs {}", g0.value, h.value);
}
