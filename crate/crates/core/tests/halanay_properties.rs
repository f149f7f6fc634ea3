use heatctl::halanay::{solve_decay_rate, RateSpec};
use proptest::prelude::*;

/// Principal branch of Lambert W for y ≥ 0 by Newton (Halley would do too).
fn lambert_w(y: f64) -> f64 {
    let mut w = if y < 1.0 { y } else { y.ln() - y.ln().ln().max(0.0) };
    for _ in 0..100 {
        let e = w.exp();
        let step = (w * e - y) / (e * (w + 1.0));
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(1e-300) {
            break;
        }
    }
    w
}

/// x = δ₀ − δ₁e^{2xτ} rearranges to x = δ₀ − W(2τδ₁e^{2τδ₀})/(2τ).
fn closed_form(d0: f64, d1: f64, tau: f64) -> f64 {
    d0 - lambert_w(2.0 * tau * d1 * (2.0 * tau * d0).exp()) / (2.0 * tau)
}

#[test]
fn residual_on_grid() {
    let mut worst = 0.0_f64;
    for i in 0..10 {
        for j in 0..10 {
            let d0 = 0.5 + i as f64;
            let d1 = d0 * (0.05 + 0.09 * j as f64);
            let tau = 0.001 * (1 + i * j) as f64;
            let spec = RateSpec::new(d0, d1, tau).unwrap();
            let x = solve_decay_rate(&spec).unwrap();
            worst = worst.max(spec.residual(x).abs() / d0);
        }
    }
    assert!(worst < 1e-12, "worst relative residual {worst:e}");
}

#[test]
fn agrees_with_lambert_form() {
    for (d0, d1, tau) in [(2.0, 1.0, 0.1), (1.0, 0.9, 0.01), (8.0, 7.9, 0.01), (5.0, 1.0, 1.0)] {
        let x = solve_decay_rate(&RateSpec::new(d0, d1, tau).unwrap()).unwrap();
        let w = closed_form(d0, d1, tau);
        assert!((x - w).abs() < 1e-10 * d0, "{d0} {d1} {tau}: {x} vs {w}");
    }
}

#[test]
fn degenerate_cases_are_exact() {
    for (d0, d1, tau) in [(2.0, 0.0, 0.3), (7.0, 0.0, 0.0), (3.0, 1.25, 0.0), (1e-3, 5e-4, 0.0)] {
        let x = solve_decay_rate(&RateSpec::new(d0, d1, tau).unwrap()).unwrap();
        assert!((x - (d0 - d1)).abs() <= 1e-12 * d0);
    }
}

proptest! {
    #[test]
    fn root_is_bracketed(d0 in 0.01f64..20.0, frac in 0.0f64..0.999, tau in 0.0f64..1.0) {
        let d1 = d0 * frac;
        let x = solve_decay_rate(&RateSpec::new(d0, d1, tau).unwrap()).unwrap();
        prop_assert!(x > 0.0);
        prop_assert!(x <= d0 - d1);
        if tau * d1 > 0.0 {
            prop_assert!(x < d0 - d1);
        }
    }

    #[test]
    fn monotone_in_each_argument(d0 in 0.1f64..10.0, frac in 0.05f64..0.9, tau in 0.001f64..0.5, k in 1.01f64..2.0) {
        let d1 = d0 * frac;
        let rate = |a: f64, b: f64, t: f64| solve_decay_rate(&RateSpec::new(a, b, t).unwrap()).unwrap();
        let base = rate(d0, d1, tau);
        prop_assert!(rate(d0, d1, tau * k) < base);
        prop_assert!(rate(d0 * k, d1, tau) > base);
        let d1_up = (d1 * k).min(0.5 * (d1 + d0));
        prop_assert!(rate(d0, d1_up, tau) < base);
    }
}
