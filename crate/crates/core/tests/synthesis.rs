use mrcie_core::defaults;
use mrcie_core::equilibrium::{linearize, modal_analysis, solve_equilibrium, OperatingTargets};
use mrcie_core::models::ReferenceModel;
use mrcie_core::sma::{partition, reduce, select_relevant_mode, ReducedModel};
use mrcie_core::synthesis::*;
use mrcie_core::CoreError;
use nalgebra::DMatrix;

fn reduced() -> ReducedModel {
    let m = defaults::dfig_model();
    let t = OperatingTargets {
        p_g: defaults::P_G_TARGET,
        q_g: 0.0,
        v_qs: 1.0,
        v_ds: 0.0,
        wind_speed: defaults::WIND_SPEED,
        omega_s: 1.0,
    };
    let op = solve_equilibrium(&m, &t).unwrap();
    let ss = linearize(&m, &op).unwrap();
    let ma = modal_analysis(&ss.a).unwrap();
    let lam = select_relevant_mode(&ma, ss.state_index("omega_r").unwrap()).unwrap();
    reduce(&partition(&ss, "omega_r").unwrap(), lam, 0.1).unwrap()
}

fn reference() -> ReferenceModel {
    defaults::reference(3.0, 0.05)
}

fn augmented(eta: f64, kap: f64) -> AugmentedSystem {
    let p = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
    assemble_augmented(&p, &reference(), eta, kap).unwrap()
}

fn abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.re).fold(f64::MIN, f64::max)
}

#[test]
fn delay_free_design_is_stabilising_and_consistent() {
    let aug = augmented(0.0, 0.0);
    let r = synthesize(&aug, &SynthesisOptions::default()).unwrap();
    println!("gamma {:.4} K {:.4?} {}", r.gamma, r.k, r.solver_message);
    assert!(r.certified());
    assert!(r.gamma > 0.0);
    assert!((r.tracking_bound - r.gamma.sqrt()).abs() < 1e-12);
    let kc = r.k_matrix();
    assert!(abscissa(&aug.closed_loop(&kc)) < 0.0);
    let kr = r.recovered_gain().unwrap();
    assert!((&kr - &kc).amax() < 1e-8);
    assert!(kc.norm() <= r.k_a.sqrt() * r.k_b * (1.0 + 1e-9));
    assert_eq!(r.k_p.len() + r.k_r.len(), 7);
}

#[test]
fn small_delays_are_certified() {
    let r = synthesize(&augmented(0.005, 0.01), &SynthesisOptions::default()).unwrap();
    assert!(r.certified());
    assert_eq!((r.eta_m, r.kappa), (0.005, 0.01));
    assert_eq!((r.requested_eta_m, r.requested_kappa), (0.005, 0.01));
}

#[test]
fn default_delays_infeasible_without_fallback() {
    let err = synthesize(&augmented(defaults::ETA_M, defaults::KAPPA), &SynthesisOptions::default()).unwrap_err();
    assert!(matches!(err, CoreError::Infeasible(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn fallback_certifies_a_fraction_of_the_requested_delays() {
    let opts = SynthesisOptions {
        delay_fallback: DelayFallback::LargestFeasible { steps: 5 },
        ..SynthesisOptions::default()
    };
    let r = synthesize(&augmented(defaults::ETA_M, defaults::KAPPA), &opts).unwrap();
    println!("certified eta_m {} kappa {} gamma {}", r.eta_m, r.kappa, r.gamma);
    assert!(r.certified());
    assert_eq!((r.requested_eta_m, r.requested_kappa), (defaults::ETA_M, defaults::KAPPA));
    assert!(r.kappa > 0.0 && r.kappa < defaults::KAPPA);
    assert!((r.eta_m / r.kappa - 0.5).abs() < 1e-12);
}

#[test]
fn single_vertex_robust_matches_nominal() {
    let aug = augmented(0.0, 0.0);
    let a = synthesize(&aug, &SynthesisOptions::default()).unwrap();
    let b = synthesize_robust(&[aug.clone(), aug], &SynthesisOptions::default()).unwrap();
    assert_eq!(a.k, b.k);
    assert_eq!(a.gamma, b.gamma);
}

#[test]
fn wider_polytope_never_lowers_gamma() {
    let nominal = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
    let spec = |w: f64| PolytopeSpec {
        h_d: [w, w],
        tau_d: [0.0, 0.0],
        tau_sm: [0.0, 0.0],
        delta: false,
    };
    let mut last = 0.0;
    for w in [0.0, 0.1, 0.2] {
        let vs: Vec<_> = enumerate_vertices(&nominal, &spec(w))
            .unwrap()
            .iter()
            .map(|p| assemble_augmented(p, &reference(), 0.0, 0.0).unwrap())
            .collect();
        assert_eq!(vs.len(), 8);
        let r = synthesize_robust(&vs, &SynthesisOptions::default()).unwrap();
        println!("width {w} gamma {:.5} optimal {}", r.gamma, r.optimal);
        assert!(r.gamma >= last * (1.0 - 1e-4), "{} < {last}", r.gamma);
        last = r.gamma;
        for v in &vs {
            assert!(abscissa(&v.closed_loop(&r.k_matrix())) < 0.0);
        }
    }
}

#[test]
fn full_polytope_has_sixteen_vertices() {
    let nominal = assemble_plant(&defaults::diesel(), &reduced()).unwrap();
    let spec = PolytopeSpec {
        h_d: [0.1, 0.1],
        tau_d: [0.1, 0.1],
        tau_sm: [0.1, 0.1],
        delta: true,
    };
    let vs = enumerate_vertices(&nominal, &spec).unwrap();
    assert_eq!(vs.len(), 16);
    let aug: Vec<_> = vs.iter().map(|p| assemble_augmented(p, &reference(), 0.05, 0.1).unwrap()).collect();
    let (lmi, _) = build_lmi(&aug, 1.0).unwrap();
    assert_eq!(lmi.num_vars(), 318);
}
