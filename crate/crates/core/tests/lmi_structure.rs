use heatctl::gains::GainSet;
use heatctl::lmi::{
    assemble_augmented, check_feasibility, CheckSettings, DelayBounds, FamilyParams, FamilyRegistry, LmiInstance, Sense,
};
use heatctl::modal::{ModalModel, OutputWeightSpec};
use heatctl::sdp::OracleRegistry;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn model() -> ModalModel {
    ModalModel::new(3.0, &OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, 40).unwrap()
}

fn gains(m: &ModalModel) -> GainSet {
    GainSet::pinned(m, 0, vec![-5.5], vec![5.5], 0.0).unwrap()
}

fn instance(theorem: &str, n: usize) -> LmiInstance {
    let m = model();
    let g = gains(&m);
    let params = if theorem == "thm1" {
        FamilyParams::delay_free(0.1)
    } else {
        FamilyParams::delayed(0.1, 2.0, DelayBounds { r: 0.1, theta_m: 0.01, tau_m: 0.01 })
    };
    FamilyRegistry::with_defaults().get(theorem).unwrap().assemble(&m, &g, n, &params).unwrap()
}

#[test]
fn closed_loop_blocks_of_scalar_design() {
    let m = model();
    let aug = assemble_augmented(&m, &gains(&m), 4, 0.0).unwrap();
    // 3 − 5.5, L₀c₀ = 5.5·0.6, 3 − 3.3
    let expect = DMatrix::from_row_slice(2, 2, &[-2.5, 3.3, 0.0, -0.3]);
    assert!((&aug.f0 - &expect).amax() < 1e-12, "{}", aug.f0);
    assert_eq!(aug.bar_f0, aug.f0);
    let aug = assemble_augmented(&m, &gains(&m), 4, 0.2).unwrap();
    assert!((aug.bar_f0[(0, 1)] - 3.3 * (0.6f64).exp()).abs() < 1e-12);
    assert_eq!(aug.bar_f.shape(), (6, 6));
    // tail modes decay at 3 − n²π²
    for i in 0..4 {
        let n = (i + 1) as f64;
        assert!((aug.a1[(i, i)] - (3.0 - n * n * std::f64::consts::PI.powi(2))).abs() < 1e-9);
    }
}

#[test]
fn constraint_orders() {
    for (theorem, n, main) in [("thm1", 5, 4), ("thm2", 5, 10), ("thm3", 9, 10), ("thm4", 5, 3 * 7 + 4), ("thm4", 30, 100)] {
        let inst = instance(theorem, n);
        let order = inst.constraints.iter().find(|c| c.name == "main").unwrap().order();
        assert_eq!(order, main, "{theorem} N={n}");
        assert_eq!(inst.meta.n, n);
    }
}

#[test]
fn assembly_rejects_bad_dimensions() {
    let m = model();
    let g = gains(&m);
    let fam = FamilyRegistry::with_defaults();
    let p = FamilyParams::delayed(0.1, 2.0, DelayBounds { r: 0.1, theta_m: 0.01, tau_m: 0.01 });
    assert!(fam.get("thm2").unwrap().assemble(&m, &g, 0, &p).is_err());
    assert!(fam.get("thm2").unwrap().assemble(&m, &g, 41, &p).is_err());
    let neg = FamilyParams::delayed(0.1, 2.0, DelayBounds { r: -0.1, theta_m: 0.01, tau_m: 0.01 });
    assert!(fam.get("thm3").unwrap().assemble(&m, &g, 5, &neg).is_err());
    assert!(fam.get("thm9").is_err());
}

fn point(inst: &LmiInstance, raw: &[f64]) -> Vec<f64> {
    (0..inst.num_unknowns()).map(|i| raw[i % raw.len()] * (1.0 + (i % 7) as f64)).collect()
}

fn audit(theorem: &str, n: usize, a: &[f64], b: &[f64]) -> Result<(), TestCaseError> {
    let inst = instance(theorem, n);
    let (x1, x2) = (point(&inst, a), point(&inst, b));
    let mid: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| 0.5 * (p + q)).collect();
    let values = |x: &[f64]| inst.values(x);
    for c in &inst.constraints {
        let (e1, e2, em) = (c.evaluate(&values(&x1)), c.evaluate(&values(&x2)), c.evaluate(&values(&mid)));
        prop_assert!(e1 == e1.transpose(), "{} not symmetric", c.name);
        let avg = (&e1 + &e2) * 0.5;
        let scale = 1.0 + e1.amax().max(e2.amax());
        prop_assert!((&em - &avg).amax() <= 1e-12 * scale, "{}: affinity gap {:e}", c.name, (&em - &avg).amax());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn thm1_is_affine(a in prop::collection::vec(-1.0f64..1.0, 13), b in prop::collection::vec(-1.0f64..1.0, 13)) {
        audit("thm1", 6, &a, &b)?;
    }

    #[test]
    fn thm2_is_affine(a in prop::collection::vec(-1.0f64..1.0, 13), b in prop::collection::vec(-1.0f64..1.0, 13)) {
        audit("thm2", 6, &a, &b)?;
    }

    #[test]
    fn thm3_is_affine(a in prop::collection::vec(-1.0f64..1.0, 13), b in prop::collection::vec(-1.0f64..1.0, 13)) {
        audit("thm3", 6, &a, &b)?;
    }

    #[test]
    fn thm4_is_affine(a in prop::collection::vec(-1.0f64..1.0, 13), b in prop::collection::vec(-1.0f64..1.0, 13)) {
        audit("thm4", 6, &a, &b)?;
    }
}

/// Eigenvalues by nalgebra's symmetric QR, independent of the solver.
fn extreme(m: &DMatrix<f64>) -> (f64, f64) {
    let e = m.clone().symmetric_eigen().eigenvalues;
    (e.min(), e.max())
}

#[test]
fn feasible_reports_reverify() {
    let oracle = OracleRegistry::with_defaults().get("ipm").unwrap();
    let mut feasible = 0;
    let m = model();
    let g = gains(&m);
    let fam = FamilyRegistry::with_defaults();
    for (theorem, n) in [("thm1", 4), ("thm2", 12), ("thm3", 12), ("thm4", 16)] {
        let found = [1.0, 2.0, 3.0, 5.0, 8.0].iter().find_map(|&d0| {
            let params = if theorem == "thm1" {
                FamilyParams::delay_free(0.1)
            } else {
                FamilyParams::delayed(0.0, d0, DelayBounds { r: 0.1, theta_m: 0.01, tau_m: 0.01 })
            };
            let inst = fam.get(theorem).unwrap().assemble(&m, &g, n, &params).unwrap();
            let report = check_feasibility(&inst, oracle.as_ref(), &CheckSettings::default()).unwrap();
            report.is_feasible().then_some((inst, report))
        });
        let Some((inst, report)) = found else {
            eprintln!("{theorem} N={n}: no certificate");
            continue;
        };
        feasible += 1;
        let vars = report.variables.as_ref().unwrap();
        let values: Vec<DMatrix<f64>> = inst
            .vars
            .iter()
            .map(|v| {
                let rows = &vars[&v.name];
                DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
            })
            .collect();
        for c in &inst.constraints {
            let m = c.evaluate_symmetric(&values);
            let (lo, hi) = extreme(&m);
            match c.sense {
                Sense::NegativeDefinite => {
                    let eps = inst.strictness * (1.0 + c.constant.norm());
                    assert!(hi <= -0.5 * eps, "{theorem} {}: {hi:e}", c.name);
                }
                Sense::PositiveSemidefinite => assert!(lo >= 0.0, "{theorem} {}: {lo:e}", c.name),
            }
        }
        for (v, value) in inst.vars.iter().zip(&values).filter(|(v, _)| v.positive) {
            assert!(extreme(value).0 >= 0.5 * inst.strictness, "{theorem} {} not positive", v.name);
        }
    }
    assert_eq!(feasible, 4, "every sample family should have a certificate");
}

#[test]
fn infeasible_for_tiny_observer() {
    let inst = instance("thm2", 1);
    let oracle = OracleRegistry::with_defaults().get("ipm").unwrap();
    let report = check_feasibility(&inst, oracle.as_ref(), &CheckSettings::default()).unwrap();
    assert!(!report.is_feasible());
    assert!(report.variables.is_none());
}
