use std::f64::consts::{PI, SQRT_2};

use heatctl::modal::{
    eigenfunction, input_coeff, output_coeffs, project_initial, tail_input_bound, tail_norm_sq, OutputWeightSpec,
};
use proptest::prelude::*;

/// Adaptive Simpson, written here so the crate's Gauss rules are not
/// checked against themselves.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // pre-split so periodic integrands cannot alias the first estimates
    const PANELS: usize = 64;
    let w = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let m = 0.5 * (lo + hi);
            let (fa, fm, fb) = (f(lo), f(m), f(hi));
            rec(f, lo, hi, fa, fm, fb, (hi - lo) / 6.0 * (fa + 4.0 * fm + fb), tol / PANELS as f64, 40)
        })
        .sum()
}

fn phi(n: usize, x: f64) -> f64 {
    eigenfunction(n, x).unwrap()
}

#[test]
fn eigenfunctions_are_orthonormal() {
    for n in 0..=20 {
        for m in n..=20 {
            let ip = simpson(&|x| phi(n, x) * phi(m, x), 0.0, 1.0, 1e-13);
            let expect = if n == m { 1.0 } else { 0.0 };
            assert!((ip - expect).abs() < 1e-10, "<phi_{n}, phi_{m}> = {ip}");
        }
    }
}

#[test]
fn indicator_coefficients_match_quadrature() {
    let spec = OutputWeightSpec::Indicator { a: 0.3, b: 0.9 };
    let c = output_coeffs(&spec, 50).unwrap();
    for (n, cn) in c.iter().enumerate() {
        let q = simpson(&|x| phi(n, x), 0.3, 0.9, 1e-14);
        assert!((cn - q).abs() < 1e-10, "c_{n}: {cn} vs {q}");
    }
}

#[test]
fn input_weights_are_boundary_values() {
    for n in 0..40 {
        assert!((input_coeff(n) - phi(n, 1.0)).abs() < 1e-12);
    }
}

#[test]
fn tail_norm_decreases_to_zero() {
    let spec = OutputWeightSpec::Indicator { a: 0.3, b: 0.9 };
    let tails: Vec<f64> = (0..=200).map(|n| tail_norm_sq(&spec, n).unwrap()).collect();
    assert!(tails.windows(2).all(|w| w[1] <= w[0]), "tail norm not monotone");
    // ‖c‖²_N ~ Σ_{n>N} 2·(2/(nπ))² = O(1/N)
    assert!(tails[200] < 8.0 / (PI * PI * 200.0));
}

#[test]
fn input_tail_bound_holds() {
    // Σ_{n>N} bₙ²/λₙ = (2/π²) Σ_{n>N} 1/n², summed far enough that the
    // remainder (< 2/(π²K)) cannot hide a violation
    const K: usize = 2_000_000;
    let mut suffix = vec![0.0; 101];
    let mut acc = 0.0;
    for n in (101..=K).rev() {
        acc += input_coeff(n).powi(2) / (n as f64 * n as f64 * PI * PI);
    }
    for n in (1..=100).rev() {
        suffix[n] = acc;
        acc += input_coeff(n).powi(2) / (n as f64 * n as f64 * PI * PI);
    }
    for (n, &s) in suffix.iter().enumerate().skip(1) {
        let bound = tail_input_bound(n).unwrap();
        assert!(s + 2.0 / (PI * PI * K as f64) <= bound, "N={n}: {s} > {bound}");
    }
}

#[test]
fn bump_projection_closed_form() {
    // ∫ 10x²(1−x)² √2 cos(nπx) dx = −120√2 (1 + (−1)ⁿ) / (nπ)⁴ for n ≥ 1
    let p = project_initial(|x| 10.0 * x * x * (1.0 - x) * (1.0 - x), 12);
    assert!((p[0] - 1.0 / 3.0).abs() < 1e-13);
    for (n, v) in p.iter().enumerate().skip(1) {
        let k = n as f64 * PI;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let exact = -120.0 * SQRT_2 * (1.0 + sign) / k.powi(4);
        assert!((v - exact).abs() < 1e-12, "n={n}: {v} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indicator_parseval(a in 0.0f64..0.9, len in 0.05f64..0.5) {
        let b = (a + len).min(1.0);
        let spec = OutputWeightSpec::Indicator { a, b };
        let c = output_coeffs(&spec, 400).unwrap();
        let head: f64 = c.iter().map(|v| v * v).sum();
        // remaining energy is O(1/M)
        prop_assert!(head <= b - a + 1e-12);
        prop_assert!(b - a - head < 4.0 / (PI * PI * 400.0));
        prop_assert!((tail_norm_sq(&spec, 400).unwrap() - (b - a - head)).abs() < 1e-12);
    }

    #[test]
    fn indicator_coefficients_random(a in 0.0f64..0.8, len in 0.05f64..0.2, n in 0usize..60) {
        let b = a + len;
        let c = output_coeffs(&OutputWeightSpec::Indicator { a, b }, n).unwrap();
        let q = simpson(&|x| phi(n, x), a, b, 1e-14);
        prop_assert!((c[n] - q).abs() < 1e-10);
    }
}
