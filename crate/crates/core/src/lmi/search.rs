//! Searches over the observer dimension `N` and the input delay `r`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainSet;
use crate::modal::ModalModel;
use crate::parallel::parallel_map;
use crate::sdp::FeasibilityOracle;

use super::instance::{check_feasibility, CheckSettings, FeasibilityReport, FeasibilityStatus};
use super::theorems::{FamilyParams, LmiFamily};

/// Everything needed to decide feasibility at one `(N, r)`.
#[derive(Clone)]
pub struct Probe {
    pub family: Arc<dyn LmiFamily>,
    pub model: ModalModel,
    pub gains: GainSet,
    pub params: FamilyParams,
    /// Candidate `δ₀` values tried in order for the delayed families; the
    /// first feasible one wins. Empty means `params.delta0` alone.
    pub delta0_grid: Vec<f64>,
    pub oracle: Arc<dyn FeasibilityOracle>,
    pub settings: CheckSettings,
}

/// Outcome at one `N` (and the probe's `r`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NCheck {
    pub n: usize,
    pub r: f64,
    pub status: FeasibilityStatus,
    /// `δ₀` that produced the reported status.
    pub delta0: Option<f64>,
    pub report: FeasibilityReport,
}

impl NCheck {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

impl Probe {
    pub fn with_r(&self, r: f64) -> Self {
        let mut p = self.clone();
        p.params.delays.r = r;
        p
    }

    fn delta0_candidates(&self) -> Vec<f64> {
        if !self.family.is_delayed() || self.delta0_grid.is_empty() {
            vec![self.params.delta0]
        } else {
            self.delta0_grid.clone()
        }
    }

    /// Feasible if any `δ₀` candidate is; solver failure only when no
    /// candidate was feasible and at least one broke down.
    pub fn check(&self, n: usize) -> Result<NCheck> {
        let mut last: Option<NCheck> = None;
        let mut failure: Option<NCheck> = None;
        for delta0 in self.delta0_candidates() {
            let params = FamilyParams { delta0, ..self.params };
            let inst = self.family.assemble(&self.model, &self.gains, n, &params)?;
            let report = check_feasibility(&inst, self.oracle.as_ref(), &self.settings)?;
            let status = report.status;
            let entry = NCheck {
                n,
                r: self.params.delays.r,
                status,
                delta0: self.family.is_delayed().then_some(delta0),
                report,
            };
            match status {
                FeasibilityStatus::Feasible => return Ok(entry),
                FeasibilityStatus::SolverFailure => failure = Some(entry),
                FeasibilityStatus::Infeasible => last = Some(entry),
            }
        }
        failure
            .or(last)
            .ok_or_else(|| Error::Validation("empty delta0 candidate list".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinNResult {
    pub n: Option<usize>,
    pub checks: Vec<NCheck>,
}

/// Strategy for the smallest feasible `N` in `[lo, hi]`.
pub trait MinNStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn search(&self, probe: &Probe, lo: usize, hi: usize, jobs: usize) -> Result<MinNResult>;
}

/// Upward scan; with `jobs > 1` evaluates `jobs` consecutive values at a
/// time and stops after the first batch containing a feasible `N`.
pub struct Scan;

/// Bisection on `[lo, hi]`, relying on feasibility being monotone in `N`.
/// Checks `hi` first and returns none when it is infeasible.
pub struct Bisect;

fn warn_failure(c: &NCheck) {
    if c.status == FeasibilityStatus::SolverFailure {
        log::warn!(
            "{} N={} r={}: solver failure treated as not feasible: {}",
            c.report.meta.theorem,
            c.n,
            c.r,
            c.report.diagnostics.message
        );
    }
}

impl MinNStrategy for Scan {
    fn name(&self) -> &'static str {
        "scan"
    }

    fn search(&self, probe: &Probe, lo: usize, hi: usize, jobs: usize) -> Result<MinNResult> {
        let jobs = jobs.max(1);
        let mut checks = Vec::new();
        let mut n = lo;
        while n <= hi {
            let batch: Vec<usize> = (n..=hi.min(n + jobs - 1)).collect();
            let results = parallel_map(&batch, jobs, |&k| probe.check(k));
            for res in results {
                let c = res?;
                warn_failure(&c);
                checks.push(c);
            }
            if let Some(found) = checks.iter().find(|c| c.is_feasible()) {
                let found = found.n;
                checks.retain(|c| c.n <= found);
                return Ok(MinNResult { n: Some(found), checks });
            }
            n += batch.len();
        }
        Ok(MinNResult { n: None, checks })
    }
}

impl MinNStrategy for Bisect {
    fn name(&self) -> &'static str {
        "bisect"
    }

    fn search(&self, probe: &Probe, lo: usize, hi: usize, _jobs: usize) -> Result<MinNResult> {
        let mut checks = Vec::new();
        if lo > hi {
            return Ok(MinNResult { n: None, checks });
        }
        let top = probe.check(hi)?;
        warn_failure(&top);
        let top_ok = top.is_feasible();
        checks.push(top);
        if !top_ok {
            return Ok(MinNResult { n: None, checks });
        }
        // invariant: hi feasible, everything below `low` infeasible
        let (mut low, mut high) = (lo, hi);
        while low < high {
            let mid = low + (high - low) / 2;
            let c = probe.check(mid)?;
            warn_failure(&c);
            let ok = c.is_feasible();
            checks.push(c);
            if ok {
                high = mid;
            } else {
                low = mid + 1;
            }
        }
        checks.sort_by_key(|c| c.n);
        Ok(MinNResult { n: Some(high), checks })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxRResult {
    pub r: Option<f64>,
    pub n: Option<usize>,
    /// Checks at `N_max` per probed `r`.
    pub r_checks: Vec<NCheck>,
    /// Minimal-`N` search at the selected `r`.
    pub n_search: Option<MinNResult>,
}

/// Strategy for the largest grid `r` feasible at some `N ≤ N_max`.
///
/// Feasibility at some `N ≤ N_max` is decided at `N_max` itself, which is
/// exact whenever feasibility is monotone in `N`.
pub trait MaxRStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Index of the selected grid point and the checks made.
    fn select(&self, probe: &Probe, grid: &[f64], n_max: usize, jobs: usize) -> Result<(Option<usize>, Vec<NCheck>)>;
}

/// Walks the grid from the top down.
pub struct Descending;

/// Bisection over the grid, relying on feasibility degrading with `r`.
pub struct BisectR;

impl MaxRStrategy for Descending {
    fn name(&self) -> &'static str {
        "descending"
    }

    fn select(&self, probe: &Probe, grid: &[f64], n_max: usize, jobs: usize) -> Result<(Option<usize>, Vec<NCheck>)> {
        let jobs = jobs.max(1);
        let mut checks = Vec::new();
        let mut end = grid.len();
        while end > 0 {
            let start = end.saturating_sub(jobs);
            let idx: Vec<usize> = (start..end).rev().collect();
            let results = parallel_map(&idx, jobs, |&i| probe.with_r(grid[i]).check(n_max));
            let mut hit = None;
            for (&i, res) in idx.iter().zip(results) {
                let c = res?;
                warn_failure(&c);
                if c.is_feasible() && hit.is_none() {
                    hit = Some(i);
                }
                checks.push(c);
            }
            if hit.is_some() {
                return Ok((hit, checks));
            }
            end = start;
        }
        Ok((None, checks))
    }
}

impl MaxRStrategy for BisectR {
    fn name(&self) -> &'static str {
        "bisect"
    }

    fn select(&self, probe: &Probe, grid: &[f64], n_max: usize, _jobs: usize) -> Result<(Option<usize>, Vec<NCheck>)> {
        let mut checks = Vec::new();
        let feasible_at = |i: usize, checks: &mut Vec<NCheck>| -> Result<bool> {
            let c = probe.with_r(grid[i]).check(n_max)?;
            warn_failure(&c);
            let ok = c.is_feasible();
            checks.push(c);
            Ok(ok)
        };
        if grid.is_empty() || !feasible_at(0, &mut checks)? {
            return Ok((None, checks));
        }
        let last = grid.len() - 1;
        if feasible_at(last, &mut checks)? {
            return Ok((Some(last), checks));
        }
        // invariant: grid[low] feasible, grid[high] infeasible
        let (mut low, mut high) = (0, last);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if feasible_at(mid, &mut checks)? {
                low = mid;
            } else {
                high = mid;
            }
        }
        Ok((Some(low), checks))
    }
}

/// Smallest feasible `N` in `[N₀+1, n_max]`.
pub fn min_feasible_n(probe: &Probe, n_max: usize, strategy: &dyn MinNStrategy, jobs: usize) -> Result<MinNResult> {
    let lo = probe.gains.n0 + 1;
    if n_max < lo {
        return Err(Error::Domain(format!("N_max={n_max} must be at least N0+1={lo}")));
    }
    strategy.search(probe, lo, n_max, jobs)
}

/// Largest grid `r` feasible at some `N ≤ n_max`, with its minimal `N`.
pub fn max_feasible_r(
    probe: &Probe,
    r_grid: &[f64],
    n_max: usize,
    r_strategy: &dyn MaxRStrategy,
    n_strategy: &dyn MinNStrategy,
    jobs: usize,
) -> Result<MaxRResult> {
    if r_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("r grid must be strictly ascending".into()));
    }
    let (idx, r_checks) = r_strategy.select(probe, r_grid, n_max, jobs)?;
    let Some(i) = idx else {
        return Ok(MaxRResult { r: None, n: None, r_checks, n_search: None });
    };
    let r = r_grid[i];
    let search = min_feasible_n(&probe.with_r(r), n_max, n_strategy, jobs)?;
    Ok(MaxRResult { r: Some(r), n: search.n, r_checks, n_search: Some(search) })
}

/// Feasibility at every `N` in `[lo, hi]`, evaluated in parallel.
pub fn sweep_n(probe: &Probe, lo: usize, hi: usize, jobs: usize) -> Result<Vec<NCheck>> {
    let ns: Vec<usize> = (lo..=hi).collect();
    parallel_map(&ns, jobs, |&n| probe.check(n)).into_iter().collect()
}

/// Feasibility at a fixed `N` for every `r` in the grid.
pub fn sweep_r(probe: &Probe, grid: &[f64], n: usize, jobs: usize) -> Result<Vec<NCheck>> {
    parallel_map(grid, jobs, |&r| probe.with_r(r).check(n)).into_iter().collect()
}

/// `r` grid `start, start+step, …` up to `stop` inclusive, rounded to the
/// step's decimal resolution.
pub fn r_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !(start.is_finite() && stop.is_finite()) {
        return Err(Error::Validation(format!("bad r grid start={start} stop={stop} step={step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    let digits = (-step.log10()).ceil().max(0.0) as i32 + 2;
    let scale = 10f64.powi(digits);
    Ok((0..=count).map(|k| ((start + k as f64 * step) * scale).round() / scale).collect())
}

/// Named search strategies.
#[derive(Clone)]
pub struct SearchRegistry {
    min_n: BTreeMap<String, Arc<dyn MinNStrategy>>,
    max_r: BTreeMap<String, Arc<dyn MaxRStrategy>>,
}

pub const DEFAULT_MIN_N: &str = "scan";
pub const DEFAULT_MAX_R: &str = "descending";

impl SearchRegistry {
    pub fn with_defaults() -> Self {
        let mut reg = Self { min_n: BTreeMap::new(), max_r: BTreeMap::new() };
        reg.register_min_n(Arc::new(Scan));
        reg.register_min_n(Arc::new(Bisect));
        reg.register_max_r(Arc::new(Descending));
        reg.register_max_r(Arc::new(BisectR));
        reg
    }

    pub fn register_min_n(&mut self, s: Arc<dyn MinNStrategy>) {
        self.min_n.insert(s.name().to_string(), s);
    }

    pub fn register_max_r(&mut self, s: Arc<dyn MaxRStrategy>) {
        self.max_r.insert(s.name().to_string(), s);
    }

    pub fn min_n(&self, name: &str) -> Result<Arc<dyn MinNStrategy>> {
        self.min_n
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: "N search", name: name.to_string() })
    }

    pub fn max_r(&self, name: &str) -> Result<Arc<dyn MaxRStrategy>> {
        self.max_r
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: "r search", name: name.to_string() })
    }

    pub fn min_n_names(&self) -> Vec<String> {
        self.min_n.keys().cloned().collect()
    }

    pub fn max_r_names(&self) -> Vec<String> {
        self.max_r.keys().cloned().collect()
    }
}

impl Default for SearchRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
