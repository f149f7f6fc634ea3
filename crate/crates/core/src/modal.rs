//! Cosine eigenbasis of the Neumann Laplacian on [0, 1] and the modal
//! projection of the controlled heat equation.
//!
//! Mode `n` has eigenvalue `n²π²` and eigenfunction `1` (n = 0) or
//! `√2 cos(nπx)`. Neumann actuation at `x = 1` enters mode `n` with weight
//! `φₙ(1)`, and the non-local measurement `y = ⟨c, z⟩` sees mode `n` through
//! `cₙ = ⟨c, φₙ⟩`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{CompositeRule, MAX_PANEL_WIDTH, NODES_PER_PANEL};

/// Round-off allowance before a negative tail norm is reported.
const TAIL_CLAMP_WARN: f64 = 1e-12;

/// Measurement weight `c ∈ L²(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputWeightSpec {
    /// Indicator function of `[a, b]`.
    Indicator { a: f64, b: f64 },
    /// Piecewise-linear weight through `(position, value)` samples, zero
    /// outside the sampled range.
    Table {
        samples: Vec<(f64, f64)>,
        /// Exact `‖c‖²` when known; otherwise computed by quadrature.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm_sq: Option<f64>,
    },
    /// Weight given directly by its modal coefficients `c₀, c₁, …`.
    Coeffs { values: Vec<f64> },
}

impl OutputWeightSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Indicator { a, b } => {
                if !(0.0 <= *a && a < b && *b <= 1.0) {
                    return Err(Error::Validation(format!(
                        "indicator weight needs 0 <= a < b <= 1, got a={a}, b={b}"
                    )));
                }
            }
            Self::Table { samples, norm_sq } => {
                if samples.len() < 2 {
                    return Err(Error::Validation(
                        "table weight needs at least two samples".into(),
                    ));
                }
                for (x, v) in samples {
                    if !(0.0..=1.0).contains(x) || !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "table sample ({x}, {v}) outside [0,1] or not finite"
                        )));
                    }
                }
                if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Validation(
                        "table samples must be strictly increasing in position".into(),
                    ));
                }
                if let Some(n) = norm_sq {
                    if !(n.is_finite() && *n >= 0.0) {
                        return Err(Error::Validation(format!("norm override {n} is invalid")));
                    }
                }
            }
            Self::Coeffs { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("coefficient list has non-finite entries".into()));
                }
            }
        }
        Ok(())
    }

    /// Pointwise value of a tabulated weight (linear interpolation).
    fn table_value(samples: &[(f64, f64)], x: f64) -> f64 {
        let first = samples[0].0;
        let last = samples[samples.len() - 1].0;
        if x < first || x > last {
            return 0.0;
        }
        let k = samples.partition_point(|s| s.0 <= x).clamp(1, samples.len() - 1);
        let (x0, v0) = samples[k - 1];
        let (x1, v1) = samples[k];
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }

    fn table_rule(samples: &[(f64, f64)]) -> CompositeRule {
        let breaks: Vec<f64> = samples.iter().map(|s| s.0).collect();
        CompositeRule::new(&breaks, NODES_PER_PANEL, MAX_PANEL_WIDTH)
    }

    /// `‖c‖²`.
    pub fn norm_sq(&self) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            Self::Indicator { a, b } => b - a,
            Self::Table { samples, norm_sq } => match norm_sq {
                Some(n) => *n,
                None => {
                    let rule = Self::table_rule(samples);
                    rule.integrate(|x| Self::table_value(samples, x).powi(2))
                }
            },
            Self::Coeffs { values } => values.iter().map(|v| v * v).sum(),
        })
    }
}

/// `λₙ = n²π²`.
pub fn eigenvalue(n: usize) -> f64 {
    let k = n as f64 * PI;
    k * k
}

/// `φₙ(x)`; the domain is the closed unit interval.
pub fn eigenfunction(n: usize, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("position {x} outside [0, 1]")));
    }
    Ok(if n == 0 { 1.0 } else { SQRT_2 * (n as f64 * PI * x).cos() })
}

/// Input coefficient `bₙ = φₙ(1)`: `1` for n = 0, `(−1)ⁿ√2` otherwise.
pub fn input_coeff(n: usize) -> f64 {
    match n {
        0 => 1.0,
        n if n % 2 == 0 => SQRT_2,
        _ => -SQRT_2,
    }
}

/// Output coefficients `c₀ … c_M`.
pub fn output_coeffs(spec: &OutputWeightSpec, m: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(match spec {
        OutputWeightSpec::Indicator { a, b } => (0..=m)
            .map(|n| {
                if n == 0 {
                    b - a
                } else {
                    let k = n as f64 * PI;
                    SQRT_2 * ((k * b).sin() - (k * a).sin()) / k
                }
            })
            .collect(),
        OutputWeightSpec::Table { samples, .. } => {
            let rule = OutputWeightSpec::table_rule(samples);
            (0..=m)
                .map(|n| {
                    rule.integrate(|x| {
                        OutputWeightSpec::table_value(samples, x) * basis(n, x)
                    })
                })
                .collect()
        }
        OutputWeightSpec::Coeffs { values } => (0..=m)
            .map(|n| values.get(n).copied().unwrap_or(0.0))
            .collect(),
    })
}

fn basis(n: usize, x: f64) -> f64 {
    if n == 0 {
        1.0
    } else {
        SQRT_2 * (n as f64 * PI * x).cos()
    }
}

/// `‖c‖²_N = ‖c‖² − Σ_{n≤N} cₙ²`, clamped at zero.
pub fn tail_norm_sq(spec: &OutputWeightSpec, n: usize) -> Result<f64> {
    let total = spec.norm_sq()?;
    let head: f64 = output_coeffs(spec, n)?.iter().map(|c| c * c).sum();
    Ok(clamp_tail(total - head))
}

fn clamp_tail(raw: f64) -> f64 {
    if raw < 0.0 {
        if raw < -TAIL_CLAMP_WARN {
            log::warn!("tail norm {raw:e} is negative beyond round-off; clamped to 0");
        }
        0.0
    } else {
        raw
    }
}

/// Upper bound `2/(π²N)` on `Σ_{n>N} bₙ²/λₙ`.
pub fn tail_input_bound(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("tail input bound needs N >= 1".into()));
    }
    Ok(2.0 / (PI * PI * n as f64))
}

/// Smallest `N₀` with `λ_{N₀+1} > q + δ`, so every mode above `N₀` decays
/// faster than `δ` in open loop.
pub fn select_n0(q: f64, delta: f64) -> Result<usize> {
    if delta < 0.0 || !delta.is_finite() || !q.is_finite() {
        return Err(Error::Domain(format!("select_n0 needs finite q and delta >= 0, got q={q}, delta={delta}")));
    }
    let mut n0 = 0;
    while eigenvalue(n0 + 1) <= q + delta {
        n0 += 1;
    }
    Ok(n0)
}

/// Initial state description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `z₀(x) = Σ coeffs[k] xᵏ`.
    Polynomial { coeffs: Vec<f64> },
    /// Modal amplitudes given directly.
    Modal { values: Vec<f64> },
}

impl InitialCondition {
    /// `10x²(1−x)²`, the rod profile used in the reference scenario.
    pub fn bump() -> Self {
        Self::Polynomial { coeffs: vec![0.0, 0.0, 10.0, -20.0, 10.0] }
    }

    pub fn project(&self, m: usize) -> Vec<f64> {
        match self {
            Self::Polynomial { coeffs } => {
                let c = coeffs.clone();
                project_initial(move |x| c.iter().rev().fold(0.0, |acc, a| acc * x + a), m)
            }
            Self::Modal { values } => (0..=m).map(|n| values.get(n).copied().unwrap_or(0.0)).collect(),
        }
    }
}

/// `zₙ(0) = ⟨z₀, φₙ⟩` for n = 0..=M.
pub fn project_initial(z0: impl Fn(f64) -> f64, m: usize) -> Vec<f64> {
    let rule = CompositeRule::unit();
    let samples: Vec<f64> = rule.nodes.iter().map(|&x| z0(x)).collect();
    (0..=m)
        .map(|n| {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .zip(&samples)
                .map(|((&x, &w), &v)| w * v * basis(n, x))
                .sum()
        })
        .collect()
}

/// Modal description of the plant truncated at mode `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalModel {
    pub q: f64,
    pub lambdas: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub c_norm_sq: f64,
    pub truncation: usize,
}

impl ModalModel {
    pub fn new(q: f64, weight: &OutputWeightSpec, truncation: usize) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::Validation(format!("reaction coefficient {q} is not finite")));
        }
        let c = output_coeffs(weight, truncation)?;
        let c_norm_sq = weight.norm_sq()?;
        Ok(Self {
            q,
            lambdas: (0..=truncation).map(eigenvalue).collect(),
            b: (0..=truncation).map(input_coeff).collect(),
            c,
            c_norm_sq,
            truncation,
        })
    }

    /// `λₙ` for any index, including modes above the truncation.
    pub fn lambda(&self, n: usize) -> f64 {
        eigenvalue(n)
    }

    /// Open-loop rate `−λₙ + q`.
    pub fn open_loop_rate(&self, n: usize) -> f64 {
        self.q - eigenvalue(n)
    }

    /// `‖c‖²_N` from the stored coefficients (requires `N ≤ M`).
    pub fn tail_norm_sq(&self, n: usize) -> Result<f64> {
        if n > self.truncation {
            return Err(Error::Domain(format!(
                "tail norm at N={n} needs coefficients beyond truncation M={}",
                self.truncation
            )));
        }
        let head: f64 = self.c[..=n].iter().map(|c| c * c).sum();
        Ok(clamp_tail(self.c_norm_sq - head))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_weight() -> OutputWeightSpec {
        OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(eigenvalue(0), 0.0);
        assert_relative_eq!(eigenvalue(1), 9.869_604_401_089_358, epsilon = 1e-12);
        assert_relative_eq!(eigenvalue(3), 9.0 * PI * PI, epsilon = 1e-12);
        assert_relative_eq!(eigenvalue(3), 88.826_439_609_804_22, epsilon = 1e-10);
    }

    #[test]
    fn eigenfunction_values_and_domain() {
        assert_eq!(eigenfunction(0, 0.7).unwrap(), 1.0);
        assert_relative_eq!(eigenfunction(1, 0.0).unwrap(), SQRT_2);
        assert_relative_eq!(eigenfunction(2, 0.5).unwrap(), -SQRT_2, epsilon = 1e-15);
        assert!(matches!(eigenfunction(1, 1.2), Err(Error::Domain(_))));
        assert!(matches!(eigenfunction(1, -1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn input_coefficients_alternate() {
        assert_eq!(input_coeff(0), 1.0);
        assert_eq!(input_coeff(1), -SQRT_2);
        assert_eq!(input_coeff(2), SQRT_2);
        assert!((0..100).all(|n| input_coeff(n) != 0.0));
    }

    #[test]
    fn indicator_coefficients() {
        let c = output_coeffs(&sample_weight(), 2).unwrap();
        assert_relative_eq!(c[0], 0.6, epsilon = 1e-15);
        // √2 (sin 0.9π − sin 0.3π)/π
        assert_relative_eq!(c[1], -0.225_079_079_039_276_5, epsilon = 1e-12);
        let full = output_coeffs(&OutputWeightSpec::Indicator { a: 0.0, b: 1.0 }, 3).unwrap();
        assert_relative_eq!(full[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_weights_rejected() {
        let bad = [
            OutputWeightSpec::Indicator { a: 0.5, b: 0.5 },
            OutputWeightSpec::Indicator { a: -0.1, b: 0.5 },
            OutputWeightSpec::Table { samples: vec![(0.2, 1.0), (0.1, 1.0)], norm_sq: None },
            OutputWeightSpec::Table { samples: vec![(0.2, 1.0), (1.1, 1.0)], norm_sq: None },
        ];
        for spec in bad {
            assert!(matches!(output_coeffs(&spec, 3), Err(Error::Validation(_))), "{spec:?}");
        }
    }

    #[test]
    fn tail_norms() {
        assert_relative_eq!(tail_norm_sq(&sample_weight(), 0).unwrap(), 0.24, epsilon = 1e-14);
        let t10 = tail_norm_sq(&sample_weight(), 10).unwrap();
        assert!(t10 > 0.0 && t10 < 0.24);
        let rank_one = OutputWeightSpec::Coeffs { values: vec![1.0] };
        assert_eq!(tail_norm_sq(&rank_one, 5).unwrap(), 0.0);
    }

    #[test]
    fn tail_input_bound_values() {
        assert_relative_eq!(tail_input_bound(10).unwrap(), 0.020_264_236_728_467_55, epsilon = 1e-15);
        assert_relative_eq!(tail_input_bound(1).unwrap(), 2.0 / (PI * PI));
        assert!(tail_input_bound(0).is_err());
    }

    #[test]
    fn n0_selection() {
        assert_eq!(select_n0(3.0, 0.0).unwrap(), 0);
        assert_eq!(select_n0(3.0, 5.0).unwrap(), 0);
        assert_eq!(select_n0(15.0, 0.0).unwrap(), 1);
        // q + δ = 10.5 exceeds λ₁
        assert_eq!(select_n0(3.0, 7.5).unwrap(), 1);
        assert!(select_n0(3.0, -1.0).is_err());
    }

    #[test]
    fn projections() {
        let p = InitialCondition::bump().project(4);
        assert_relative_eq!(p[0], 1.0 / 3.0, epsilon = 1e-13);
        let phi2 = project_initial(|x| basis(2, x), 6);
        for (n, v) in phi2.iter().enumerate() {
            let expect = if n == 2 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-10, "n={n} v={v}");
        }
        assert!(project_initial(|_| 0.0, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn table_weight_matches_indicator_shape() {
        // A narrow ramp approximating the indicator of [0.3, 0.9].
        let spec = OutputWeightSpec::Table {
            samples: vec![(0.3, 1.0), (0.9, 1.0)],
            norm_sq: None,
        };
        let exact = output_coeffs(&sample_weight(), 20).unwrap();
        let quad = output_coeffs(&spec, 20).unwrap();
        for (a, b) in exact.iter().zip(&quad) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_relative_eq!(spec.norm_sq().unwrap(), 0.6, epsilon = 1e-13);
    }

    #[test]
    fn model_layout() {
        let m = ModalModel::new(3.0, &sample_weight(), 10).unwrap();
        assert_eq!(m.lambdas.len(), 11);
        assert!(m.lambdas.windows(2).all(|w| w[1] > w[0]));
        let head: f64 = m.c.iter().map(|c| c * c).sum();
        assert!(m.c_norm_sq >= head);
        assert_relative_eq!(m.tail_norm_sq(0).unwrap(), 0.24, epsilon = 1e-14);
        assert!(m.tail_norm_sq(11).is_err());
    }
}
