//! Control laws acting on the observer head `ẑ^{N₀}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gains::GainSet;

use super::history::History;

/// What a control law sees at grid node `t`.
pub struct ControlContext<'a> {
    pub t: f64,
    /// `ẑ₀..ẑ_{N₀}` at `t`.
    pub zhat_head: &'a [f64],
    pub gains: &'a GainSet,
    /// Diagonal of `A₀`.
    pub a0: &'a [f64],
    pub b0: &'a [f64],
    pub r: f64,
    /// Past inputs, newest node strictly before `t`.
    pub inputs: &'a History,
}

pub trait ControllerMode: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn control(&self, ctx: &ControlContext<'_>) -> Result<f64>;
}

/// `u = K₀ẑ^{N₀}(t)`.
pub struct StaticFeedback;

/// `u = K₀z̄(t)` with the `r`-ahead forecast of the observer head.
pub struct Predictor;

impl ControllerMode for StaticFeedback {
    fn name(&self) -> &'static str {
        "static"
    }
    fn description(&self) -> &'static str {
        "observer-based state feedback"
    }
    fn control(&self, ctx: &ControlContext<'_>) -> Result<f64> {
        Ok(dot(&ctx.gains.k0, ctx.zhat_head))
    }
}

impl ControllerMode for Predictor {
    fn name(&self) -> &'static str {
        "predictor"
    }
    fn description(&self) -> &'static str {
        "observer-based predictor compensating the constant input delay"
    }
    fn control(&self, ctx: &ControlContext<'_>) -> Result<f64> {
        // z̄ is affine in u(t) through the endpoint trapezoid weight; solve for it.
        let (zbar, w) = forecast(ctx.inputs, ctx.t, ctx.zhat_head, ctx.a0, ctx.b0, ctx.r, None)?;
        let kb = dot(&ctx.gains.k0, ctx.b0);
        let denom = 1.0 - w * kb;
        if denom.abs() < 1e-12 {
            return Err(Error::Internal("predictor endpoint equation is singular".into()));
        }
        Ok(dot(&ctx.gains.k0, &zbar) / denom)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `z̄(t) = e^{A₀r}ẑ^{N₀}(t) + ∫_{t−r}^{t} e^{A₀(t−s)}B₀u(s) ds`.
///
/// `inputs` must hold a node at `t`; the integral is the composite
/// trapezoid over the history nodes inside `(t − r, t]` plus the
/// interpolated start point.
pub fn predictor_state(inputs: &History, t: f64, zhat_head: &[f64], a0: &[f64], b0: &[f64], r: f64) -> Result<Vec<f64>> {
    let h = inputs.step();
    let k = (t / h).round();
    if (k * h - t).abs() > 1e-9 * h.max(t.abs()) || inputs.last_time().is_none_or(|last| last < t - 1e-9 * h) {
        return Err(Error::Internal(format!("predictor needs an input sample at t={t}")));
    }
    let u_t = inputs.node(k as usize);
    Ok(forecast(inputs, t, zhat_head, a0, b0, r, Some(u_t))?.0)
}

/// Forecast with the endpoint input `u(t)` supplied (or zero), plus the
/// trapezoid weight carried by that endpoint.
fn forecast(
    inputs: &History,
    t: f64,
    zhat_head: &[f64],
    a0: &[f64],
    b0: &[f64],
    r: f64,
    u_t: Option<f64>,
) -> Result<(Vec<f64>, f64)> {
    if zhat_head.len() != a0.len() || a0.len() != b0.len() {
        return Err(Error::Dimension("predictor head, A0 and B0 lengths differ".into()));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("predictor horizon must be nonnegative, got {r}")));
    }
    let mut out: Vec<f64> = zhat_head.iter().zip(a0).map(|(z, a)| (a * r).exp() * z).collect();
    if r == 0.0 {
        return Ok((out, 0.0));
    }
    let h = inputs.step();
    // Inputs vanish before zero, so the integral starts at max(t − r, 0).
    let start = (t - r).max(0.0);
    if start >= t {
        return Ok((out, 0.0));
    }
    let k_end = (t / h).round() as i64;
    let mut k = (start / h).floor() as i64 + 1;
    if (k as f64) * h <= start {
        k += 1;
    }
    let mut points: Vec<(f64, f64)> = vec![(start, inputs.at(start)?)];
    while k <= k_end {
        let s = k as f64 * h;
        let v = if k == k_end { u_t.unwrap_or(0.0) } else { inputs.node(k as usize) };
        points.push((s, v));
        k += 1;
    }
    let w_end = points.len().checked_sub(2).map_or(0.0, |i| 0.5 * (points[i + 1].0 - points[i].0));
    for ((ai, bi), oi) in a0.iter().zip(b0).zip(out.iter_mut()) {
        let f = |(s, v): (f64, f64)| (ai * (t - s)).exp() * bi * v;
        let mut acc = 0.0;
        for w in points.windows(2) {
            acc += 0.5 * (w[1].0 - w[0].0) * (f(w[0]) + f(w[1]));
        }
        *oi += acc;
    }
    Ok((out, w_end))
}

#[derive(Clone)]
pub struct ControllerRegistry {
    modes: BTreeMap<&'static str, Arc<dyn ControllerMode>>,
}

impl ControllerRegistry {
    pub fn with_defaults() -> Self {
        let mut reg = Self { modes: BTreeMap::new() };
        reg.register(Arc::new(StaticFeedback));
        reg.register(Arc::new(Predictor));
        reg
    }

    pub fn register(&mut self, mode: Arc<dyn ControllerMode>) {
        self.modes.insert(mode.name(), mode);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ControllerMode>> {
        self.modes
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: "controller mode", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.modes.keys().copied().collect()
    }
}
