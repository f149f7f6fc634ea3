//! Uniformly sampled scalar signal with cubic read-back.

use crate::error::{Error, Result};

/// Samples `x(kh)`, k = 0, 1, …, and a constant value for `t < 0`.
///
/// Reads use four-point Lagrange interpolation on nodes at or after zero,
/// so the kink at `t = 0` never enters a stencil. Reads up to one step past
/// the newest node extrapolate from the last four nodes; that is how
/// vanishing delays are served inside an explicit step.
#[derive(Debug, Clone)]
pub struct History {
    h: f64,
    before: f64,
    values: Vec<f64>,
}

impl History {
    pub fn new(h: f64, before: f64) -> Self {
        Self { h, before, values: Vec::new() }
    }

    pub fn with_capacity(h: f64, before: f64, n: usize) -> Self {
        Self { h, before, values: Vec::with_capacity(n) }
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of the newest node.
    pub fn last_time(&self) -> Option<f64> {
        self.values.len().checked_sub(1).map(|k| k as f64 * self.h)
    }

    pub fn node(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(self.before);
        }
        let len = self.values.len();
        if len == 0 {
            return Err(Error::Internal(format!("history read at t={t} before any sample")));
        }
        let last = (len - 1) as f64 * self.h;
        if t > last + self.h * (1.0 + 1e-9) {
            return Err(Error::Internal(format!(
                "history read at t={t} beyond newest sample {last} plus one step"
            )));
        }
        let u = t / self.h;
        let width = len.min(4);
        let base = (u.floor() as isize - 1).clamp(0, (len - width) as isize) as usize;
        let mut acc = 0.0;
        for i in 0..width {
            let xi = (base + i) as f64;
            let mut w = 1.0;
            for j in 0..width {
                if j != i {
                    let xj = (base + j) as f64;
                    w *= (u - xj) / (xi - xj);
                }
            }
            acc += w * self.values[base + i];
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_reproduced() {
        let h = 0.1;
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - t.powi(3);
        let mut hist = History::new(h, 7.0);
        for k in 0..20 {
            hist.push(f(k as f64 * h));
        }
        for &t in &[0.0, 0.03, 0.55, 1.234, 1.9, 1.95, 2.0] {
            assert!((hist.at(t).unwrap() - f(t)).abs() < 1e-12, "t={t}");
        }
        assert_eq!(hist.at(-0.01).unwrap(), 7.0);
        assert!(hist.at(2.2).is_err());
    }

    #[test]
    fn short_history_degrades_gracefully() {
        let mut hist = History::new(0.5, 0.0);
        assert!(hist.at(0.1).is_err());
        hist.push(2.0);
        assert_eq!(hist.at(0.3).unwrap(), 2.0);
        hist.push(3.0);
        assert!((hist.at(0.25).unwrap() - 2.5).abs() < 1e-15);
    }
}
