//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! the verdicts always reach the test log; a FAIL is reported, not hidden.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use heatctl::gains::GainSet;
use heatctl::halanay::{solve_decay_rate, RateSpec};
use heatctl::lmi::search::{NCheck, Probe};
use heatctl::lmi::{DelayBounds, FamilyParams, FamilyRegistry, LmiInstance, Sense};
use heatctl::modal::{eigenfunction, input_coeff, output_coeffs, tail_input_bound, InitialCondition, ModalModel, OutputWeightSpec};
use heatctl::quad::CompositeRule;
use heatctl::reproduce::{self, finding_probe, Finding, ReproduceOptions, Row, TABLE1, TABLE2, TABLE3};
use heatctl::sim::{fit_log_slope, simulate, DelaySpec, SimConfig, SimTrace, DIVERGENCE_FACTOR};
use nalgebra::DMatrix;
use rand::{rngs::StdRng, Rng, SeedableRng};

// criterion 1
const T1_N_TOL: usize = 1;
const T1_BUDGET: Duration = Duration::from_secs(60);
// criterion 2
const T2_N_TOL: usize = 2;
const T2_BUDGET: Duration = Duration::from_secs(15 * 60);
const T2_DASH_N_MAX: usize = 30;
// criterion 3
const T3_R_TOL: f64 = 0.02;
const T3_BOUNDARY_R_TOL: f64 = 0.03;
const T3_THM4_N_MAX: usize = 22;
// criterion 5
const HALANAY_REL_RESIDUAL: f64 = 1e-12;
const HALANAY_GRID: usize = 100;
// criterion 6
const SIM_STEP: f64 = 1e-4;
const SIM_HORIZON: f64 = 8.0;
const SIM_BUDGET: Duration = Duration::from_secs(30);
const UNSTABLE_R: f64 = 0.22;
const UNSTABLE_N: usize = 30;
// criterion 7
const ORTHO_TOL: f64 = 1e-10;
const COEFF_TOL: f64 = 1e-10;
const MIN_ORDER: f64 = 3.5;
const AFFINE_POINTS: usize = 100;
const AFFINE_TOL: f64 = 1e-12;

struct Verdict {
    id: u8,
    pass: bool,
    lines: Vec<String>,
}

fn report(v: &Verdict) {
    println!("criterion {}: {}", v.id, if v.pass { "PASS" } else { "FAIL" });
    for l in &v.lines {
        println!("    {l}");
    }
}

fn n_str(n: Option<usize>) -> String {
    n.map_or("-".into(), |n| n.to_string())
}

fn criterion1(opts: &ReproduceOptions) -> (Verdict, Vec<Row>) {
    let start = Instant::now();
    let rows = reproduce::table1(opts).expect("table 1 runs");
    let took = start.elapsed();
    let mut pass = took < T1_BUDGET;
    let mut lines = Vec::new();
    for (row, &(delta, _, _, paper)) in rows.iter().zip(&TABLE1) {
        let ok = row.n_computed.is_some_and(|n| n.abs_diff(paper) <= T1_N_TOL);
        pass &= ok;
        lines.push(format!("delta={delta}: N={} published {paper} (±{T1_N_TOL}) {}", n_str(row.n_computed), ok_str(ok)));
    }
    lines.push(format!("runtime {took:.2?} (budget {T1_BUDGET:?})"));
    (Verdict { id: 1, pass, lines }, rows)
}

fn ok_str(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

fn criterion2(opts: &ReproduceOptions) -> (Verdict, Vec<Row>) {
    let start = Instant::now();
    let rows = reproduce::table2(&ReproduceOptions { n_max: T2_DASH_N_MAX, ..opts.clone() }).expect("table 2 runs");
    let took = start.elapsed();
    let mut pass = took < T2_BUDGET;
    let mut lines = Vec::new();
    let expected: Vec<Option<usize>> = TABLE2.iter().flat_map(|&(_, plain, pred)| [plain, pred]).collect();
    for (row, paper) in rows.iter().zip(expected) {
        let ok = match paper {
            Some(p) => row.n_computed.is_some_and(|n| n.abs_diff(p) <= T2_N_TOL),
            None => row.n_computed.is_none(),
        };
        pass &= ok;
        lines.push(format!(
            "thm {} r={}: N={} published {} {}",
            row.theorem,
            row.r_paper.unwrap_or(f64::NAN),
            n_str(row.n_computed),
            n_str(paper),
            ok_str(ok)
        ));
    }
    lines.push(format!("runtime {took:.2?} (budget {T2_BUDGET:?})"));
    (Verdict { id: 2, pass, lines }, rows)
}

fn criterion3(opts: &ReproduceOptions) -> (Verdict, Vec<Row>) {
    let which: Vec<_> = TABLE3.iter().copied().filter(|&(tau, _, _)| tau == 0.01 || tau < 1e-3).collect();
    let start = Instant::now();
    let rows = reproduce::table3(opts, &which).expect("table 3 runs");
    let mut pass = true;
    let mut lines = Vec::new();
    for (row, &(tau, theorem, paper)) in rows.iter().zip(&which) {
        let (rp, _) = paper.expect("criterion rows have published values");
        let tol = if tau < 1e-3 { T3_BOUNDARY_R_TOL } else { T3_R_TOL };
        let mut ok = row.r_computed.is_some_and(|r| (r - rp).abs() <= tol + 1e-12);
        if theorem == 4 && tau == 0.01 {
            ok &= row.n_computed.is_some_and(|n| n <= T3_THM4_N_MAX);
        }
        pass &= ok;
        lines.push(format!(
            "thm {theorem} tau={tau}: r_max={} (N={}) published {rp} ±{tol} {}",
            row.r_computed.map_or("-".into(), |r| format!("{r:.2}")),
            n_str(row.n_computed),
            ok_str(ok)
        ));
    }
    lines.push(format!("runtime {:.2?}", start.elapsed()));
    (Verdict { id: 3, pass, lines }, rows)
}

/// Certificate at `N` and at `N + 1` for one finding.
struct Successor {
    finding: Finding,
    probe: Probe,
    at_n: NCheck,
    at_next: NCheck,
}

fn criterion4(opts: &ReproduceOptions, findings: &[Finding]) -> (Verdict, Vec<Successor>) {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut out = Vec::new();
    for &f in findings {
        let probe = finding_probe(&f, opts, 1).expect("probe");
        let at_n = probe.check(f.n).expect("check at N");
        let at_next = probe.check(f.n + 1).expect("check at N+1");
        let ok = at_next.is_feasible();
        let counted = f.theorem <= 3;
        if counted && !ok {
            pass = false;
        }
        if !ok || !at_n.is_feasible() {
            lines.push(format!(
                "thm {} param={} r={} N={}: at N {:?}, at N+1 {:?}{}",
                f.theorem,
                f.param,
                f.r,
                f.n,
                at_n.status,
                at_next.status,
                if counted { "" } else { " (reported only)" }
            ));
        }
        out.push(Successor { finding: f, probe, at_n, at_next });
    }
    let violations = out.iter().filter(|s| s.finding.theorem <= 3 && !s.at_next.is_feasible()).count();
    lines.insert(0, format!("{} findings checked at N+1, {violations} violations for theorems 1-3", findings.len()));
    (Verdict { id: 4, pass, lines }, out)
}

fn criterion5() -> Verdict {
    let mut worst = 0.0_f64;
    let side = (HALANAY_GRID as f64).sqrt() as usize;
    for i in 0..side {
        for j in 0..side {
            let d0 = 0.25 + 0.85 * i as f64;
            let d1 = d0 * (0.02 + 0.1 * j as f64);
            let tau = 1e-3 * (1.0 + (i * side + j) as f64);
            let spec = RateSpec::new(d0, d1, tau).expect("valid spec");
            let x = solve_decay_rate(&spec).expect("root");
            worst = worst.max(spec.residual(x).abs() / d0);
        }
    }
    let mut closed = 0.0_f64;
    for &(d0, d1, tau) in &[(2.0, 0.0, 0.5), (7.5, 0.0, 0.01), (2.0, 1.5, 0.0), (1.0, 0.999, 0.0)] {
        let x = solve_decay_rate(&RateSpec::new(d0, d1, tau).unwrap()).unwrap();
        closed = closed.max((x - (d0 - d1)).abs());
    }
    let pass = worst < HALANAY_REL_RESIDUAL && closed <= 1e-12;
    Verdict {
        id: 5,
        pass,
        lines: vec![
            format!("max |residual|/delta0 over {} points: {worst:e} (limit {HALANAY_REL_RESIDUAL:e})", side * side),
            format!("closed-form error: {closed:e}"),
        ],
    }
}

fn scenario(controller: &str, r: f64, tau: f64, n: usize) -> SimConfig {
    let model = ModalModel::new(3.0, &OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, 50).unwrap();
    let gains = GainSet::pinned(&model, 0, vec![-5.5], vec![5.5], 0.0).unwrap();
    SimConfig {
        initial: InitialCondition::bump().project(50),
        model,
        gains,
        n,
        delays: DelaySpec::oscillating(r, tau, tau, 120.0),
        controller: controller.into(),
        step: SIM_STEP,
        horizon: SIM_HORIZON,
        record_every: 100,
    }
}

fn combined_rate(tr: &SimTrace) -> Option<f64> {
    fit_log_slope(&tr.times, &tr.combined_norm(), (SIM_HORIZON / 2.0, SIM_HORIZON)).ok()
}

fn criterion6(table3: &[Row]) -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for row in table3 {
        let theorem: u8 = row.theorem.parse().unwrap_or(0);
        let (Some(r), Some(n)) = (row.r_computed, row.n_computed) else { continue };
        if !(theorem == 2 || theorem == 3) {
            continue;
        }
        let controller = if theorem == 2 { "static" } else { "predictor" };
        let start = Instant::now();
        let tr = simulate(&scenario(controller, r, row.param, n)).expect("simulation runs");
        let took = start.elapsed();
        let rate = combined_rate(&tr);
        let ok = !tr.diverged() && tr.completed() && rate.is_some_and(|k| k > 0.0) && took < SIM_BUDGET;
        pass &= ok;
        lines.push(format!(
            "(a) {controller} r={r:.2} tau={} N={n}: diverged={} decay rate {} in {took:.1?} {}",
            row.param,
            tr.diverged(),
            rate.map_or("-".into(), |k| format!("{k:.3}")),
            ok_str(ok)
        ));
    }
    let start = Instant::now();
    let tr = simulate(&scenario("static", UNSTABLE_R, 0.01, UNSTABLE_N)).expect("simulation runs");
    let took = start.elapsed();
    let ok = tr.diverged() && took < SIM_BUDGET;
    pass &= ok;
    let growth = combined_rate(&tr).map(|k| -k);
    let z0 = tr.norm_z[0];
    let last = *tr.norm_z.last().unwrap();
    let projected = growth
        .filter(|g| *g > 0.0)
        .map(|g| SIM_HORIZON + (DIVERGENCE_FACTOR * z0 / last).ln() / g);
    lines.push(format!(
        "(b) static r={UNSTABLE_R} N={UNSTABLE_N}: diverged={} by T={SIM_HORIZON}, growth rate {}, |z(T)|/|z(0)| = {:.3}, threshold crossing projected at t = {} in {took:.1?} {}",
        tr.diverged(),
        growth.map_or("-".into(), |g| format!("{g:.3}")),
        last / z0,
        projected.map_or("-".into(), |t| format!("{t:.0}")),
        ok_str(ok)
    ));
    Verdict { id: 6, pass, lines }
}

fn phi(n: usize, x: f64) -> f64 {
    eigenfunction(n, x).unwrap()
}

fn step_order() -> f64 {
    let steps = [1e-4, 5e-5, 2.5e-5];
    let v: Vec<f64> = steps
        .iter()
        .map(|&h| {
            let mut cfg = scenario("static", 0.14, 0.01, 30);
            cfg.step = h;
            cfg.horizon = 2.0;
            cfg.record_every = 1000;
            *simulate(&cfg).unwrap().norm_z.last().unwrap()
        })
        .collect();
    ((v[0] - v[1]).abs() / (v[1] - v[2]).abs()).log2()
}

fn instance_for(probe: &Probe, check: &NCheck) -> LmiInstance {
    let params = FamilyParams { delta0: check.delta0.unwrap_or(probe.params.delta0), ..probe.params };
    probe.family.assemble(&probe.model, &probe.gains, check.n, &params).unwrap()
}

/// Eigenvalue check of a reported certificate, independent of the solver.
fn reverify(inst: &LmiInstance, check: &NCheck) -> bool {
    let Some(vars) = &check.report.variables else { return false };
    let values: Vec<DMatrix<f64>> = inst
        .vars
        .iter()
        .map(|v| {
            let rows = &vars[&v.name];
            DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
        })
        .collect();
    let constraints_ok = inst.constraints.iter().all(|c| {
        let e = c.evaluate_symmetric(&values).symmetric_eigen().eigenvalues;
        match c.sense {
            Sense::NegativeDefinite => e.max() <= -0.5 * inst.strictness * (1.0 + c.constant.norm()),
            Sense::PositiveSemidefinite => e.min() >= 0.0,
        }
    });
    let positive_ok = inst
        .vars
        .iter()
        .zip(&values)
        .filter(|(v, _)| v.positive)
        .all(|(_, m)| ((m + m.transpose()) * 0.5).symmetric_eigen().eigenvalues.min() >= 0.5 * inst.strictness);
    constraints_ok && positive_ok
}

fn affinity_audit(rng: &mut StdRng) -> (usize, f64) {
    let model = ModalModel::new(3.0, &OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, 20).unwrap();
    let gains = GainSet::pinned(&model, 0, vec![-5.5], vec![5.5], 0.0).unwrap();
    let families = FamilyRegistry::with_defaults();
    let mut failures = 0;
    let mut worst = 0.0_f64;
    for id in ["thm1", "thm2", "thm3", "thm4"] {
        let params = if id == "thm1" {
            FamilyParams::delay_free(0.1)
        } else {
            FamilyParams::delayed(0.1, 2.0, DelayBounds { r: 0.14, theta_m: 0.01, tau_m: 0.01 })
        };
        let inst = families.get(id).unwrap().assemble(&model, &gains, 6, &params).unwrap();
        let k = inst.num_unknowns();
        for _ in 0..AFFINE_POINTS {
            let x1: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let x2: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 0.5 * (a + b)).collect();
            let (v1, v2, vm) = (inst.values(&x1), inst.values(&x2), inst.values(&mid));
            for c in &inst.constraints {
                let (e1, e2, em) = (c.evaluate(&v1), c.evaluate(&v2), c.evaluate(&vm));
                let gap = (&em - (&e1 + &e2) * 0.5).amax() / (1.0 + e1.amax().max(e2.amax()));
                worst = worst.max(gap);
                if gap > AFFINE_TOL || e1 != e1.transpose() {
                    failures += 1;
                }
            }
        }
    }
    (failures, worst)
}

fn criterion7(successors: &[Successor]) -> Verdict {
    let mut lines = Vec::new();
    let rule = CompositeRule::new(&[0.0, 1.0], 32, 0.05);
    let mut ortho = 0.0_f64;
    for n in 0..=20 {
        for m in 0..=20 {
            let ip = rule.integrate(|x| phi(n, x) * phi(m, x));
            ortho = ortho.max((ip - if n == m { 1.0 } else { 0.0 }).abs());
        }
    }
    lines.push(format!("orthonormality error {ortho:e} (limit {ORTHO_TOL:e})"));

    let c = output_coeffs(&OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, 50).unwrap();
    let sub = CompositeRule::new(&[0.3, 0.9], 32, 0.05);
    let coeff = (0..=50).map(|n| (c[n] - sub.integrate(|x| phi(n, x))).abs()).fold(0.0, f64::max);
    lines.push(format!("closed-form vs quadrature c_n, n<=50: {coeff:e} (limit {COEFF_TOL:e})"));

    // Σ_{n>N} bₙ²/λₙ from an exact suffix sum plus a bound on the remainder
    const K: usize = 2_000_000;
    let term = |n: usize| input_coeff(n).powi(2) / ((n * n) as f64 * PI * PI);
    let mut acc: f64 = (101..=K).rev().map(term).sum::<f64>() + 2.0 / (PI * PI * K as f64);
    let mut tail_violations = 0;
    for n in (1..=100).rev() {
        if acc > tail_input_bound(n).unwrap() {
            tail_violations += 1;
        }
        acc += term(n);
    }
    lines.push(format!("input tail bound violations for N=1..100: {tail_violations}"));

    let order = step_order();
    lines.push(format!("step-halving order {order:.2} (minimum {MIN_ORDER})"));

    let mut certificates = 0;
    let mut bad_certificates = 0;
    for s in successors {
        for chk in [&s.at_n, &s.at_next] {
            if chk.is_feasible() {
                certificates += 1;
                if !reverify(&instance_for(&s.probe, chk), chk) {
                    bad_certificates += 1;
                }
            }
        }
    }
    lines.push(format!("re-verified {certificates} feasible reports, {bad_certificates} failed"));

    let (affine_failures, worst) = affinity_audit(&mut StdRng::seed_from_u64(7));
    lines.push(format!(
        "affinity audit: {AFFINE_POINTS} points x 4 families, {affine_failures} failures, worst relative gap {worst:e}"
    ));

    let pass = ortho < ORTHO_TOL
        && coeff < COEFF_TOL
        && tail_violations == 0
        && order >= MIN_ORDER
        && bad_certificates == 0
        && certificates > 0
        && affine_failures == 0;
    Verdict { id: 7, pass, lines }
}

fn main() {
    // `cargo test -- <filter>` passes arguments; this target has no sub-tests
    if std::env::args().skip(1).any(|a| !a.starts_with('-') && a != "acceptance") {
        return;
    }
    let started = Instant::now();
    let opts = ReproduceOptions { n_max: T2_DASH_N_MAX, ..ReproduceOptions::default() };
    let (v1, rows1) = criterion1(&opts);
    report(&v1);
    let (v2, rows2) = criterion2(&opts);
    report(&v2);
    let (v3, rows3) = criterion3(&opts);
    report(&v3);
    let findings: Vec<Finding> = rows1.iter().chain(&rows2).chain(&rows3).flat_map(|r| r.feasible.clone()).collect();
    let (v4, successors) = criterion4(&opts, &findings);
    report(&v4);
    let v5 = criterion5();
    report(&v5);
    let v6 = criterion6(&rows3);
    report(&v6);
    let v7 = criterion7(&successors);
    report(&v7);
    let passed = [&v1, &v2, &v3, &v4, &v5, &v6, &v7].iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/7 criteria pass ({:.0?})", started.elapsed());
}
