use heatctl::gains::{
    design_controller_gain, design_gains, design_observer_gain, reduced_matrices, synthesize_state_feedback, verify_gains,
    GainSet,
};
use heatctl::modal::{select_n0, ModalModel, OutputWeightSpec};
use heatctl::sdp::OracleRegistry;
use proptest::prelude::*;

fn model(q: f64) -> ModalModel {
    ModalModel::new(q, &OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, 20).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesized_gains_verify(q in 0.5f64..40.0, delta in 0.0f64..3.0) {
        let m = model(q);
        let n0 = select_n0(q, delta).unwrap();
        let oracle = OracleRegistry::with_defaults().get("ipm").unwrap();
        let g = design_gains(&m, n0, delta, oracle.as_ref()).unwrap();
        let margins = verify_gains(&g, &m).unwrap();
        prop_assert!(margins.passed(), "{margins:?}");
        prop_assert!(margins.controller.max_eigenvalue < 0.0 && margins.observer.max_eigenvalue < 0.0);
        if n0 == 0 {
            // 1×1 plant q: stable iff q + b₀K₀ < −δ and q − c₀L₀ < −δ
            prop_assert!(g.k0[0] < -(q + delta));
            prop_assert!(g.l0[0] > (q + delta) / 0.6);
        }
    }

    #[test]
    fn pinned_round_trip(k in -30.0f64..-8.0, l in 15.0f64..40.0) {
        let m = model(3.0);
        let g = GainSet::pinned(&m, 0, vec![k], vec![l], 4.0).unwrap();
        prop_assert!(verify_gains(&g, &m).unwrap().passed());
        let text = serde_json::to_string(&g).unwrap();
        prop_assert_eq!(serde_json::from_str::<GainSet>(&text).unwrap(), g);
    }
}

#[test]
fn observer_is_dual_controller() {
    let oracle = OracleRegistry::with_defaults().get("ipm").unwrap();
    for (q, delta) in [(3.0, 0.5), (15.0, 1.0), (45.0, 2.0)] {
        let m = model(q);
        let n0 = select_n0(q, delta).unwrap();
        let (a0, _, c0) = reduced_matrices(&m, n0).unwrap();
        let (k, _) = synthesize_state_feedback(&a0.transpose(), &c0.transpose(), delta, oracle.as_ref()).unwrap();
        let (l, _) = design_observer_gain(&m, n0, delta, oracle.as_ref()).unwrap();
        for (li, ki) in l.iter().zip(k.iter()) {
            assert!((li + ki).abs() <= 1e-9 * (1.0 + ki.abs()), "q={q}: L={l:?} K={k}");
        }
    }
}

#[test]
fn two_mode_design_stabilises() {
    // q = 15 leaves modes 0 and 1 unstable
    let m = model(15.0);
    let n0 = select_n0(15.0, 0.5).unwrap();
    assert_eq!(n0, 1);
    let oracle = OracleRegistry::with_defaults().get("ipm").unwrap();
    let (k, _) = design_controller_gain(&m, n0, 0.5, oracle.as_ref()).unwrap();
    let (a0, b0, _) = reduced_matrices(&m, n0).unwrap();
    let kr = nalgebra::DMatrix::from_row_slice(1, 2, &k);
    let eig = (&a0 + &b0 * kr).complex_eigenvalues();
    assert!(eig.iter().all(|e| e.re < -0.5), "{eig}");
}

#[test]
fn bad_inputs_rejected() {
    let m = model(3.0);
    assert!(GainSet::pinned(&m, 0, vec![-5.5, 1.0], vec![5.5], 0.0).is_err());
    assert!(GainSet::pinned(&m, 0, vec![-2.0], vec![5.5], 0.0).is_err());
    assert!(GainSet::pinned(&m, 0, vec![-5.5], vec![5.5], 0.5).is_err(), "observer pole −0.3 cannot meet δ=0.5");
    let oracle = OracleRegistry::with_defaults().get("ipm").unwrap();
    assert!(design_controller_gain(&m, 0, -1.0, oracle.as_ref()).is_err());
}
