//! Decay rate delivered by Halanay's inequality.
//!
//! If `Ẇ + 2δ₀W − 2δ₁ sup_{[t−τ_M, t]} W ≤ 0` with `0 ≤ δ₁ < δ₀`, then `W`
//! decays like `e^{−2δ_τ t}` where `δ_τ` is the unique positive root of
//! `δ_τ = δ₀ − δ₁ e^{2 δ_τ τ_M}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub delta0: f64,
    pub delta1: f64,
    pub tau_m: f64,
}

impl RateSpec {
    pub fn new(delta0: f64, delta1: f64, tau_m: f64) -> Result<Self> {
        let spec = Self { delta0, delta1, tau_m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { delta0, delta1, tau_m } = *self;
        if !(delta0.is_finite() && delta1.is_finite() && tau_m.is_finite()) {
            return Err(Error::Domain("rate spec entries must be finite".into()));
        }
        if delta0 <= 0.0 || delta1 < 0.0 || delta1 >= delta0 {
            return Err(Error::Domain(format!(
                "need 0 <= delta1 < delta0, got delta0={delta0}, delta1={delta1}"
            )));
        }
        if tau_m < 0.0 {
            return Err(Error::Domain(format!("tau_M must be nonnegative, got {tau_m}")));
        }
        Ok(())
    }

    /// `δ₀ − δ₁e^{2xτ_M} − x`, strictly decreasing in `x`.
    pub fn residual(&self, x: f64) -> f64 {
        self.delta0 - self.delta1 * (2.0 * x * self.tau_m).exp() - x
    }
}

/// Unique positive root of the Halanay rate equation, by bisection on
/// `[0, δ₀ − δ₁]`.
pub fn solve_decay_rate(spec: &RateSpec) -> Result<f64> {
    spec.validate()?;
    let upper = spec.delta0 - spec.delta1;
    if spec.delta1 == 0.0 || spec.tau_m == 0.0 {
        return Ok(upper);
    }
    let (mut lo, mut hi) = (0.0_f64, upper);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spec.residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever bracket end has the smaller residual
    Ok(if spec.residual(lo).abs() <= spec.residual(hi).abs() { lo } else { hi })
}
