use std::collections::BTreeMap;
use std::sync::Arc;

use mrcie_core::defaults;
use mrcie_core::sim::*;

fn ctx() -> Arc<WtgContext> {
    Arc::new(WtgContext::build(&defaults::dfig_model(), &defaults::operating_targets(), "omega_r", 0.1).unwrap())
}

fn group(id: &str, controller: ControllerSpec) -> GroupSpec {
    GroupSpec {
        id: id.into(),
        diesel: defaults::diesel(),
        reference: defaults::reference(3.0, 0.05),
        wtg_count: 1,
        pom_bus: Some("1".into()),
        served_buses: vec!["18".into()],
        inner_buses: vec!["3".into()],
        controller,
    }
}

fn scenario(fidelity: &str, duration: f64, groups: Vec<GroupSpec>, dist: Vec<Disturbance>) -> Scenario {
    Scenario {
        name: "test".into(),
        duration,
        sample_rate: 1000.0,
        max_step: None,
        fidelity: fidelity.into(),
        delay: DelaySpec {
            policy: "worst".into(),
            eta_m: defaults::ETA_M,
            kappa: defaults::KAPPA,
            resample_interval: 0.05,
        },
        seed: 11,
        groups,
        disturbances: dist,
    }
}

fn load(bus: &str, time: f64, magnitude: f64) -> Disturbance {
    Disturbance {
        time,
        magnitude,
        bus: bus.into(),
        shares: BTreeMap::new(),
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    rms(&d)
}

#[test]
fn equilibrium_holds_at_every_fidelity() {
    let c = ctx();
    let reg = Registries::default();
    for fid in ["nonlinear", "linear10", "reduced1"] {
        let s = scenario(fid, 10.0, vec![group("a", ControllerSpec::none())], vec![]);
        let tr = simulate(&s, &c, &reg).unwrap();
        assert_eq!(tr.len(), 10_001);
        for name in ["a.dw_d", "a.dw_ref", "a.dp_g", "a.dw_r", "a.e"] {
            let peak = tr.require(name).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak < 1e-6, "{fid} {name} drifted to {peak:e}");
        }
    }
}

#[test]
fn zero_input_comparison_is_flat() {
    let tr = simulate_fidelity_comparison(
        &ctx(),
        &plant_registry(),
        &["nonlinear", "linear10", "reduced1"],
        OpenLoopInput::Zero,
        1.0,
        1000.0,
    )
    .unwrap();
    for c in &tr.data {
        assert!(c.iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn fidelities_agree_on_small_inputs() {
    let c = ctx();
    let reg = plant_registry();
    let inputs = [
        OpenLoopInput::Step { time: 0.1, amplitude: 0.01 },
        OpenLoopInput::Washout { time: 0.1, k_ie: 0.1, t_w: 0.01, depth: 0.005, tau: 0.5 },
    ];
    for inp in inputs {
        let tr = simulate_fidelity_comparison(&c, &reg, &["nonlinear", "linear10", "reduced1"], inp, 5.0, 1000.0).unwrap();
        let lin = tr.require("linear10.dp_g").unwrap();
        let red = rms_diff(tr.require("reduced1.dp_g").unwrap(), lin) / rms(lin);
        let nl = rms_diff(tr.require("nonlinear.dp_g").unwrap(), lin) / rms(lin);
        println!("{inp:?}: reduced {red:.4} nonlinear {nl:.4}");
        assert!(nl < 0.1, "nonlinear vs linear {nl}");
        assert!(red < 0.1, "reduced vs linear {red}");
    }
}

#[test]
fn power_bookkeeping_is_exact() {
    let s = scenario(
        "linear10",
        3.0,
        vec![group("a", ControllerSpec::washout(0.1))],
        vec![load("18", 1.0, 0.1)],
    );
    let tr = simulate(&s, &ctx(), &Registries::default()).unwrap();
    let (pom, dg, de) = (
        tr.require("a.dp_pom").unwrap(),
        tr.require("a.dp_g").unwrap(),
        tr.require("a.dp_e").unwrap(),
    );
    for k in 0..tr.len() {
        assert!((pom[k] - dg[k] - de[k]).abs() < 1e-15);
    }
    assert_eq!(pom[999], 0.0);
    assert_eq!(pom[1000], 0.1);
}

#[test]
fn step_halving_converges() {
    let c = ctx();
    let reg = Registries::default();
    let g = group("a", ControllerSpec::mrc(vec![0.08, 0.25, 0.07, 1.0, -0.09, -0.08, -0.02]));
    let mut coarse = scenario("reduced1", 4.0, vec![g.clone()], vec![load("18", 1.0, 0.1)]);
    coarse.max_step = Some(1e-3);
    let mut fine = coarse.clone();
    fine.max_step = Some(5e-4);
    let a = simulate(&coarse, &c, &reg).unwrap();
    let b = simulate(&fine, &c, &reg).unwrap();
    let f = defaults::diesel().f_bar;
    let worst = a
        .require("a.dw_d")
        .unwrap()
        .iter()
        .zip(b.require("a.dw_d").unwrap())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / f));
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn random_delay_is_reproducible_and_seed_dependent() {
    let c = ctx();
    let reg = Registries::default();
    let g = group("a", ControllerSpec::mrc(vec![0.08, 0.25, 0.07, 1.0, -0.09, -0.08, -0.02]));
    let mut s = scenario("reduced1", 2.0, vec![g], vec![load("18", 0.5, 0.1)]);
    s.delay.policy = "random".into();
    let a = simulate(&s, &c, &reg).unwrap();
    let b = simulate(&s, &c, &reg).unwrap();
    assert_eq!(a, b);
    let nu = a.require("a.nu").unwrap();
    assert!(nu[200..].iter().all(|v| (defaults::ETA_M..=defaults::KAPPA).contains(v)));
    s.seed += 1;
    let d = simulate(&s, &c, &reg).unwrap();
    assert_ne!(a.require("a.nu").unwrap(), d.require("a.nu").unwrap());
}

#[test]
fn unknown_strategy_names_list_alternatives() {
    let s = scenario("quadratic", 1.0, vec![group("a", ControllerSpec::none())], vec![]);
    let e = simulate(&s, &ctx(), &Registries::default()).unwrap_err();
    assert!(e.to_string().contains("linear10"), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn washout_gain_orders_nadir() {
    let c = ctx();
    let reg = Registries::default();
    let nadir = |k: Option<f64>| {
        let ctl = k.map(ControllerSpec::washout).unwrap_or_else(ControllerSpec::none);
        let s = scenario("reduced1", 6.0, vec![group("a", ctl)], vec![load("18", 1.0, 0.1)]);
        let tr = simulate(&s, &c, &reg).unwrap();
        tr.require("a.dw_d").unwrap().iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (n0, n1, n2) = (nadir(None), nadir(Some(0.03)), nadir(Some(0.1)));
    println!("nadir deviations: none {n0:.4} K=0.03 {n1:.4} K=0.1 {n2:.4}");
    assert!(n0 < n1 && n1 < n2);
}

#[test]
fn identical_units_aggregate_by_duplication() {
    let r = ctx().reduced.clone();
    let two = aggregate_wtgs(&[r.clone(), r.clone()], &[1.1, 1.1]).unwrap();
    assert!((two.c_rd - 2.0 * r.c_rd).abs() < 1e-12);
    assert!((two.d_rd - 2.0 * r.d_rd).abs() < 1e-12);
    assert_eq!((two.a_rd, two.b_rd), (r.a_rd, r.b_rd));
    assert_eq!(aggregate_wtgs(&[r.clone()], &[1.1]).unwrap(), r);
    let mut far = r.clone();
    far.a_rd *= 1.5;
    assert!(aggregate_wtgs(&[r, far], &[1.1, 1.1]).is_err());
}

#[test]
fn two_units_match_their_aggregate() {
    // Two broadcast-driven units behave like one aggregated model.
    let c = ctx();
    let reg = Registries::default();
    let mut g = group("a", ControllerSpec::washout(0.1));
    g.wtg_count = 2;
    let s = scenario("reduced1", 3.0, vec![g], vec![load("18", 1.0, 0.1)]);
    let two = simulate(&s, &c, &reg).unwrap();
    let mut agg = (*c).clone();
    agg.reduced = aggregate_wtgs(&[c.reduced.clone(), c.reduced.clone()], &[1.1, 1.1]).unwrap();
    let mut s1 = s.clone();
    s1.groups[0].wtg_count = 1;
    let one = simulate(&s1, &Arc::new(agg), &reg).unwrap();
    let d = rms_diff(two.require("a.dw_d").unwrap(), one.require("a.dw_d").unwrap());
    assert!(d < 1e-9, "{d:e}");
    assert_eq!(two.require("a.wtg1.dp_g").unwrap(), two.require("a.wtg2.dp_g").unwrap());
}
