//! Time-varying delays: a unit shape `s(ωt) ∈ [0, 1]` stretched over the
//! declared interval.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking a sampled delay against its interval.
pub const BOUND_SLACK: f64 = 1e-12;

/// Unit-range waveform used to build a delay profile.
pub trait DelayShape: Send + Sync {
    fn name(&self) -> &'static str;
    /// Value at phase `ωt`; expected in `[0, 1]`.
    fn value(&self, phase: f64) -> f64;
}

struct SinSquared;
struct CosSquared;
struct Upper;
struct Lower;

impl DelayShape for SinSquared {
    fn name(&self) -> &'static str {
        "sin2"
    }
    fn value(&self, phase: f64) -> f64 {
        phase.sin().powi(2)
    }
}

impl DelayShape for CosSquared {
    fn name(&self) -> &'static str {
        "cos2"
    }
    fn value(&self, phase: f64) -> f64 {
        phase.cos().powi(2)
    }
}

/// Constant at the top of the interval.
impl DelayShape for Upper {
    fn name(&self) -> &'static str {
        "upper"
    }
    fn value(&self, _: f64) -> f64 {
        1.0
    }
}

/// Constant at the bottom of the interval.
impl DelayShape for Lower {
    fn name(&self) -> &'static str {
        "lower"
    }
    fn value(&self, _: f64) -> f64 {
        0.0
    }
}

#[derive(Clone)]
pub struct ShapeRegistry {
    shapes: BTreeMap<&'static str, Arc<dyn DelayShape>>,
}

impl ShapeRegistry {
    pub fn with_defaults() -> Self {
        let mut reg = Self { shapes: BTreeMap::new() };
        reg.register(Arc::new(SinSquared));
        reg.register(Arc::new(CosSquared));
        reg.register(Arc::new(Upper));
        reg.register(Arc::new(Lower));
        reg
    }

    pub fn register(&mut self, shape: Arc<dyn DelayShape>) {
        self.shapes.insert(shape.name(), shape);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn DelayShape>> {
        self.shapes
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: "delay shape", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.shapes.keys().copied().collect()
    }
}

/// Named shape with its angular frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub shape: String,
    #[serde(default)]
    pub omega: f64,
}

impl ProfileSpec {
    pub fn new(shape: &str, omega: f64) -> Self {
        Self { shape: shape.to_string(), omega }
    }

    /// Shortest oscillation period, if the shape actually moves.
    pub fn period(&self) -> Option<f64> {
        match self.shape.as_str() {
            "sin2" | "cos2" if self.omega > 0.0 => Some(std::f64::consts::PI / self.omega),
            _ => None,
        }
    }
}

/// Delay bounds and the profiles realising them.
///
/// `τ_u(t) = r + θ_M s_u(ωt)` and `τ_y(t) = τ_m + (τ_M − τ_m) s_y(ωt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub r: f64,
    pub theta_m: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// When false the observer feeds `u(t − r)` instead of `u(t − τ_u)`.
    pub input_known: bool,
    pub tau_u_profile: ProfileSpec,
    pub tau_y_profile: ProfileSpec,
}

impl DelaySpec {
    /// `τ_u = r + θ sin²(ωt)`, `τ_y = τ cos²(ωt)`.
    pub fn oscillating(r: f64, theta_m: f64, tau_max: f64, omega: f64) -> Self {
        Self {
            r,
            theta_m,
            tau_min: 0.0,
            tau_max,
            input_known: true,
            tau_u_profile: ProfileSpec::new("sin2", omega),
            tau_y_profile: ProfileSpec::new("cos2", omega),
        }
    }

    /// No delay anywhere.
    pub fn none() -> Self {
        Self {
            r: 0.0,
            theta_m: 0.0,
            tau_min: 0.0,
            tau_max: 0.0,
            input_known: true,
            tau_u_profile: ProfileSpec::new("lower", 0.0),
            tau_y_profile: ProfileSpec::new("lower", 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.r, self.theta_m, self.tau_min, self.tau_max, self.tau_u_profile.omega, self.tau_y_profile.omega];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "delay bounds and frequencies must be finite and nonnegative: r={}, theta_M={}, tau_m={}, tau_M={}",
                self.r, self.theta_m, self.tau_min, self.tau_max
            )));
        }
        if self.tau_min > self.tau_max {
            return Err(Error::Validation(format!(
                "need tau_m <= tau_M, got {} > {}",
                self.tau_min, self.tau_max
            )));
        }
        Ok(())
    }

    /// Largest look-back the history must serve.
    pub fn max_lag(&self) -> f64 {
        self.tau_max.max(self.r + self.theta_m)
    }

    pub fn resolve(&self, shapes: &ShapeRegistry) -> Result<DelayProfiles> {
        self.validate()?;
        Ok(DelayProfiles {
            spec: self.clone(),
            u_shape: shapes.get(&self.tau_u_profile.shape)?,
            y_shape: shapes.get(&self.tau_y_profile.shape)?,
        })
    }
}

/// Which delay left its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayChannel {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub channel: DelayChannel,
    pub t: f64,
    pub value: f64,
}

/// Evaluable delay pair.
#[derive(Clone)]
pub struct DelayProfiles {
    pub spec: DelaySpec,
    u_shape: Arc<dyn DelayShape>,
    y_shape: Arc<dyn DelayShape>,
}

impl DelayProfiles {
    pub fn tau_u(&self, t: f64) -> f64 {
        let s = &self.spec;
        s.r + s.theta_m * self.u_shape.value(s.tau_u_profile.omega * t)
    }

    pub fn tau_y(&self, t: f64) -> f64 {
        let s = &self.spec;
        s.tau_min + (s.tau_max - s.tau_min) * self.y_shape.value(s.tau_y_profile.omega * t)
    }

    /// Both delays at `t`, or the first one found outside its interval.
    pub fn sample(&self, t: f64) -> std::result::Result<(f64, f64), BoundViolation> {
        let s = &self.spec;
        let (tu, ty) = (self.tau_u(t), self.tau_y(t));
        let inside = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo - BOUND_SLACK && v <= hi + BOUND_SLACK;
        if !inside(tu, s.r, s.r + s.theta_m) {
            return Err(BoundViolation { channel: DelayChannel::Input, t, value: tu });
        }
        if !inside(ty, s.tau_min, s.tau_max) {
            return Err(BoundViolation { channel: DelayChannel::Output, t, value: ty });
        }
        Ok((tu, ty))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillating_profiles_stay_inside() {
        let p = DelaySpec::oscillating(0.14, 0.01, 0.01, 120.0).resolve(&ShapeRegistry::with_defaults()).unwrap();
        for k in 0..5000 {
            let t = k as f64 * 1.3e-3;
            let (tu, ty) = p.sample(t).unwrap();
            assert!((tu - 0.14 - 0.01 * (120.0 * t).sin().powi(2)).abs() < 1e-15);
            assert!((0.0..=0.01).contains(&ty));
        }
    }

    #[test]
    fn escaping_shape_is_reported() {
        struct Wild;
        impl DelayShape for Wild {
            fn name(&self) -> &'static str {
                "wild"
            }
            fn value(&self, phase: f64) -> f64 {
                1.0 + phase
            }
        }
        let mut reg = ShapeRegistry::with_defaults();
        reg.register(Arc::new(Wild));
        let mut spec = DelaySpec::oscillating(0.1, 0.01, 0.01, 1.0);
        spec.tau_u_profile.shape = "wild".into();
        let p = spec.resolve(&reg).unwrap();
        assert!(p.sample(0.0).is_ok());
        let v = p.sample(0.5).unwrap_err();
        assert_eq!(v.channel, DelayChannel::Input);
    }

    #[test]
    fn unknown_shape_and_bad_bounds() {
        let mut spec = DelaySpec::oscillating(0.1, 0.01, 0.01, 1.0);
        spec.tau_y_profile.shape = "square".into();
        assert!(spec.resolve(&ShapeRegistry::with_defaults()).is_err());
        let mut spec = DelaySpec::none();
        spec.tau_min = 0.2;
        assert!(spec.validate().is_err());
    }
}
