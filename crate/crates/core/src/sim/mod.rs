//! Closed-loop simulation of the truncated modal system with time-varying
//! input and output delays.
//!
//! Every mode obeys `ẋ = aₙx + f(t)` with `aₙ = q − λₙ` and a forcing that
//! only reads delayed signals. The linear part is integrated exactly and the
//! forcing by RK4 in Lawson form, which for history-driven forcing reduces
//! to Simpson's rule on the variation-of-constants integral. Stiff tail
//! modes therefore never limit the step.

mod controller;
mod delay;
mod history;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainSet;
use crate::modal::ModalModel;

pub use controller::{predictor_state, ControlContext, ControllerMode, ControllerRegistry, Predictor, StaticFeedback};
pub use delay::{
    BoundViolation, DelayChannel, DelayProfiles, DelayShape, DelaySpec, ProfileSpec, ShapeRegistry, BOUND_SLACK,
};
pub use history::History;

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 8.0;
pub const DEFAULT_TRUNCATION: usize = 50;
/// `‖z‖` beyond this multiple of `‖z(0)‖` counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Minimum number of steps per delay oscillation period.
pub const STEPS_PER_PERIOD: f64 = 50.0;
/// Norms below this are treated as underflow by the decay fit.
pub const NORM_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Plant model; its truncation is the simulated mode count `M`.
    pub model: ModalModel,
    pub gains: GainSet,
    /// Observer dimension.
    pub n: usize,
    pub delays: DelaySpec,
    pub controller: String,
    /// `z₀(0)..z_M(0)`.
    pub initial: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
    /// Store one trace row every this many steps.
    pub record_every: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.model.truncation;
        if !(self.n > self.gains.n0 && self.n <= m) {
            return Err(Error::Validation(format!(
                "need N0+1 <= N <= M, got N0={}, N={}, M={m}",
                self.gains.n0, self.n
            )));
        }
        if self.initial.len() != m + 1 {
            return Err(Error::Validation(format!(
                "initial state has {} modes, expected M+1={}",
                self.initial.len(),
                m + 1
            )));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("initial state is not finite".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite() && self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!(
                "step and horizon must be positive, got h={}, T={}",
                self.step, self.horizon
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Validation("record_every must be at least 1".into()));
        }
        self.delays.validate()?;
        if self.delays.tau_min > 0.0 && self.step > self.delays.tau_min / 10.0 {
            return Err(Error::Validation(format!(
                "step {} exceeds tau_m/10 = {}",
                self.step,
                self.delays.tau_min / 10.0
            )));
        }
        for p in [&self.delays.tau_u_profile, &self.delays.tau_y_profile] {
            if let Some(period) = p.period() {
                if self.step * STEPS_PER_PERIOD > period {
                    return Err(Error::Validation(format!(
                        "step {} resolves the {} delay period {period} with fewer than {STEPS_PER_PERIOD} steps",
                        self.step, p.shape
                    )));
                }
            }
        }
        if self.gains.k0.len() != self.gains.n0 + 1 || self.gains.l0.len() != self.gains.n0 + 1 {
            return Err(Error::Validation("gain lengths do not match N0+1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    DelayBound(BoundViolation),
    /// Non-finite state; integration stopped.
    Overflow { t: f64 },
    /// `‖z‖` crossed the divergence threshold; integration stopped.
    Divergence { t: f64, norm: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub zhat: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub norm_z: Vec<f64>,
    pub norm_err: Vec<f64>,
    pub events: Vec<SimEvent>,
}

impl SimTrace {
    pub fn diverged(&self) -> bool {
        self.events.iter().any(|e| matches!(e, SimEvent::Divergence { .. } | SimEvent::Overflow { .. }))
    }

    pub fn divergence_time(&self) -> Option<f64> {
        self.events.iter().find_map(|e| match e {
            SimEvent::Divergence { t, .. } | SimEvent::Overflow { t } => Some(*t),
            _ => None,
        })
    }

    /// Reached the end of the horizon without aborting.
    pub fn completed(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `‖z‖ + ‖z − ẑ‖` per stored row.
    pub fn combined_norm(&self) -> Vec<f64> {
        self.norm_z.iter().zip(&self.norm_err).map(|(a, b)| a + b).collect()
    }

    /// CSV with header `t,u,norm_z,norm_err,z0..zM,zhat0..zhatN`; 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.z.first().map_or(0, Vec::len);
        let n = self.zhat.first().map_or(0, Vec::len);
        let mut header: Vec<String> = ["t", "u", "norm_z", "norm_err"].iter().map(|s| s.to_string()).collect();
        header.extend((0..m).map(|i| format!("z{i}")));
        header.extend((0..n).map(|i| format!("zhat{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[i]), fmt17(self.u[i]), fmt17(self.norm_z[i]), fmt17(self.norm_err[i])];
            row.extend(self.z[i].iter().map(|v| fmt17(*v)));
            row.extend(self.zhat[i].iter().map(|v| fmt17(*v)));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Round-trip formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn error_norm(z: &[f64], zhat: &[f64]) -> f64 {
    z.iter()
        .enumerate()
        .map(|(i, zi)| {
            let d = zi - zhat.get(i).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Integrates plant and observer from `z(0)`, `ẑ(0) = 0`, `u ≡ 0` before zero.
pub fn simulate(cfg: &SimConfig) -> Result<SimTrace> {
    simulate_with(cfg, &ShapeRegistry::with_defaults(), &ControllerRegistry::with_defaults())
}

pub fn simulate_with(cfg: &SimConfig, shapes: &ShapeRegistry, modes: &ControllerRegistry) -> Result<SimTrace> {
    cfg.validate()?;
    let profiles = cfg.delays.resolve(shapes)?;
    let law = modes.get(&cfg.controller)?;
    let model = &cfg.model;
    let (m, n, n0) = (model.truncation, cfg.n, cfg.gains.n0);
    let h = cfg.step;
    let steps = (cfg.horizon / h).round() as usize;

    let rates: Vec<f64> = (0..=m).map(|k| model.open_loop_rate(k)).collect();
    let full: Vec<f64> = rates.iter().map(|a| (a * h).exp()).collect();
    let half: Vec<f64> = rates.iter().map(|a| (0.5 * a * h).exp()).collect();
    let b = &model.b;
    let c = &model.c;
    let l: Vec<f64> = (0..=n).map(|k| if k <= n0 { cfg.gains.l0[k] } else { 0.0 }).collect();
    let a0: Vec<f64> = rates[..=n0].to_vec();
    let b0: Vec<f64> = b[..=n0].to_vec();

    let mut z = cfg.initial.clone();
    let mut zhat = vec![0.0; n + 1];
    let y0: f64 = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum();
    // Innovation signal d = Σ_{k≤N} c_k ẑ_k − Σ_{k≤M} c_k z_k, and the input.
    let mut innov = History::with_capacity(h, -y0, steps + 1);
    let mut inputs = History::with_capacity(h, 0.0, steps + 1);
    innov.push(-y0);
    let norm0 = norm(&z);
    let threshold = DIVERGENCE_FACTOR * norm0.max(f64::MIN_POSITIVE);

    let mut trace = SimTrace::default();
    let u0 = law.control(&ControlContext {
        t: 0.0,
        zhat_head: &zhat[..=n0],
        gains: &cfg.gains,
        a0: &a0,
        b0: &b0,
        r: cfg.delays.r,
        inputs: &inputs,
    })?;
    inputs.push(u0);
    record(&mut trace, 0.0, u0, &z, &zhat);

    // Forcing pieces at time s: (plant input, observer input, innovation).
    type Pieces = std::result::Result<(f64, f64, f64), BoundViolation>;
    let forcing = |s: f64, inputs: &History, innov: &History| -> Result<Pieces> {
        let (tu, ty) = match profiles.sample(s) {
            Ok(v) => v,
            Err(v) => return Ok(Err(v)),
        };
        let plant_u = inputs.at(s - tu)?;
        let obs_u = if cfg.delays.input_known { plant_u } else { inputs.at(s - cfg.delays.r)? };
        let d = innov.at(s - ty)?;
        Ok(Ok((plant_u, obs_u, d)))
    };

    'steps: for step in 0..steps {
        let t = step as f64 * h;
        let mut f = [(0.0, 0.0, 0.0); 3];
        for (slot, s) in f.iter_mut().zip([t, t + 0.5 * h, t + h]) {
            match forcing(s, &inputs, &innov)? {
                Ok(v) => *slot = v,
                Err(v) => {
                    trace.events.push(SimEvent::DelayBound(v));
                    break 'steps;
                }
            }
        }
        let [(pu0, ou0, d0), (pu1, ou1, d1), (pu2, ou2, d2)] = f;
        let w = h / 6.0;
        for k in 0..=m {
            z[k] = full[k] * z[k] + w * b[k] * (full[k] * pu0 + 4.0 * half[k] * pu1 + pu2);
        }
        for k in 0..=n {
            let g = |u: f64, d: f64| b[k] * u - l[k] * d;
            zhat[k] = full[k] * zhat[k] + w * (full[k] * g(ou0, d0) + 4.0 * half[k] * g(ou1, d1) + g(ou2, d2));
        }
        let t_next = (step + 1) as f64 * h;
        let u_next = law.control(&ControlContext {
            t: t_next,
            zhat_head: &zhat[..=n0],
            gains: &cfg.gains,
            a0: &a0,
            b0: &b0,
            r: cfg.delays.r,
            inputs: &inputs,
        })?;
        let yhat: f64 = c[..=n].iter().zip(&zhat).map(|(ci, zi)| ci * zi).sum();
        let y: f64 = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum();
        innov.push(yhat - y);
        inputs.push(u_next);

        let nz = norm(&z);
        let finite = nz.is_finite() && u_next.is_finite() && zhat.iter().all(|v| v.is_finite());
        let last = step + 1 == steps;
        if !finite {
            record(&mut trace, t_next, u_next, &z, &zhat);
            trace.events.push(SimEvent::Overflow { t: t_next });
            break;
        }
        if nz > threshold {
            record(&mut trace, t_next, u_next, &z, &zhat);
            trace.events.push(SimEvent::Divergence { t: t_next, norm: nz });
            break;
        }
        if (step + 1) % cfg.record_every == 0 || last {
            record(&mut trace, t_next, u_next, &z, &zhat);
        }
    }
    Ok(trace)
}

fn record(trace: &mut SimTrace, t: f64, u: f64, z: &[f64], zhat: &[f64]) {
    trace.times.push(t);
    trace.u.push(u);
    trace.norm_z.push(norm(z));
    trace.norm_err.push(error_norm(z, zhat));
    trace.z.push(z.to_vec());
    trace.zhat.push(zhat.to_vec());
}

/// Least-squares slope of `−ln‖z‖` over `window`; positive means decay.
///
/// Rows after the norm first drops below [`NORM_FLOOR`] are ignored.
pub fn fit_decay_rate(trace: &SimTrace, window: (f64, f64)) -> Result<f64> {
    fit_log_slope(&trace.times, &trace.norm_z, window)
}

/// Same fit on an arbitrary positive series.
pub fn fit_log_slope(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    let (ta, tb) = window;
    if !(ta < tb) {
        return Err(Error::Domain(format!("empty fit window ({ta}, {tb})")));
    }
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < ta || t > tb {
            continue;
        }
        if !(v >= NORM_FLOOR) {
            break;
        }
        pts.push((t, -v.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::Domain(format!(
            "decay fit needs two rows with positive norm in ({ta}, {tb}), found {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::OutputWeightSpec;

    fn synthetic(f: impl Fn(f64) -> f64) -> SimTrace {
        let mut tr = SimTrace::default();
        for k in 0..=100 {
            let t = k as f64 * 0.05;
            tr.times.push(t);
            tr.norm_z.push(f(t));
        }
        tr
    }

    #[test]
    fn fit_recovers_exponential_rates() {
        let tr = synthetic(|t| 5.0 * (-2.0 * t).exp());
        assert!((fit_decay_rate(&tr, (0.0, 5.0)).unwrap() - 2.0).abs() < 1e-9);
        let tr = synthetic(|t| t.exp());
        assert!((fit_decay_rate(&tr, (1.0, 4.0)).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_stops_at_underflow() {
        let tr = synthetic(|t| if t < 2.0 { (-3.0 * t).exp() } else { 0.0 });
        assert!((fit_decay_rate(&tr, (0.0, 5.0)).unwrap() - 3.0).abs() < 1e-9);
        assert!(fit_decay_rate(&tr, (3.0, 5.0)).is_err());
    }

    fn open_loop_config() -> SimConfig {
        let model = ModalModel::new(3.0, &OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, 5).unwrap();
        let gains = GainSet { n0: 0, k0: vec![0.0], l0: vec![0.0], delta: 0.0, pc: vec![], po: vec![] };
        let mut initial = vec![0.0; 6];
        initial[0] = 1.0;
        SimConfig {
            model,
            gains,
            n: 2,
            delays: DelaySpec::none(),
            controller: "static".into(),
            initial,
            step: 1e-3,
            horizon: 1.0,
            record_every: 1,
        }
    }

    #[test]
    fn uncontrolled_mode_grows_exponentially() {
        let tr = simulate(&open_loop_config()).unwrap();
        let last = tr.z.last().unwrap()[0];
        assert!((last / 3f64.exp() - 1.0).abs() < 1e-6);
        assert!(tr.completed());
    }

    #[test]
    fn norms_match_amplitudes() {
        let tr = simulate(&open_loop_config()).unwrap();
        for i in 0..tr.len() {
            assert!((tr.norm_z[i] - norm(&tr.z[i])).abs() <= 1e-15 * tr.norm_z[i]);
        }
    }

    #[test]
    fn bad_configs_rejected() {
        let mut c = open_loop_config();
        c.n = 0;
        assert!(simulate(&c).is_err());
        let mut c = open_loop_config();
        c.initial.pop();
        assert!(simulate(&c).is_err());
        let mut c = open_loop_config();
        c.delays = DelaySpec::oscillating(0.1, 0.01, 0.01, 120.0);
        c.step = 1e-3;
        assert!(simulate(&c).is_err(), "too coarse for the delay oscillation");
        let mut c = open_loop_config();
        c.controller = "bang-bang".into();
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut c = open_loop_config();
        c.horizon = 0.002;
        let tr = simulate(&c).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,u,norm_z,norm_err,z0,z1,z2,z3,z4,z5,zhat0,zhat1,zhat2");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 13);
        assert_eq!(row[4], 1.0);
    }
}
