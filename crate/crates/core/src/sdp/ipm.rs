//! Infeasible-primal, feasible-dual path-following method (HKM direction,
//! Mehrotra predictor–corrector) for
//!
//! ```text
//! maximise bᵀy  subject to  Z = C − Σ yᵢAᵢ ⪰ 0,
//! ```
//!
//! with block-diagonal `C`, `Aᵢ` (dense blocks plus a diagonal LP block).
//! Iterates start and stay dual feasible, so every dual iterate is an
//! exact (up to round-off) witness.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use super::schur::SchurAssembler;
use super::{
    constraint_scale, max_eigenvalue, AffineTerm, FeasibilityProblem, OracleDiagnostics, OracleOutcome,
    OracleStatus, SolverSettings, VarLayout, VarShape,
};
use crate::error::{Error, Result};

/// Dense semidefinite block `C_j − Σ yᵢ A_{ij}`.
#[derive(Debug, Clone)]
pub struct DualBlock {
    pub c: DMatrix<f64>,
    pub terms: Vec<AffineTerm>,
}

/// Scalar inequality `c − coeff·y[index] ≥ 0`.
#[derive(Debug, Clone, Copy)]
pub struct LpRow {
    pub c: f64,
    pub index: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone)]
pub struct DualProblem {
    pub layout: VarLayout,
    pub position_maps: Vec<Vec<usize>>,
    pub blocks: Vec<DualBlock>,
    pub lp: Vec<LpRow>,
    pub b: DVector<f64>,
}

impl DualProblem {
    pub fn new(layout: VarLayout, blocks: Vec<DualBlock>, lp: Vec<LpRow>, b: DVector<f64>) -> Self {
        let position_maps = layout.shapes.iter().map(VarShape::position_map).collect();
        Self { layout, position_maps, blocks, lp, b }
    }

    fn total_order(&self) -> usize {
        self.blocks.iter().map(|b| b.c.nrows()).sum::<usize>() + self.lp.len()
    }

    /// `A(G)ᵢ = Σ_j ⟨A_{ij}, G_j⟩ + Σ_lp coeff·g`, for symmetric `G_j`.
    fn apply(&self, g: &[DMatrix<f64>], g_lp: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.total);
        for (block, gj) in self.blocks.iter().zip(g) {
            for t in &block.terms {
                match t {
                    AffineTerm::Congruence { var, scale, left, right } => {
                        let h = left * gj * right.transpose();
                        let (map, off) = (&self.position_maps[*var], self.layout.offsets[*var]);
                        let kb = right.nrows();
                        for a in 0..left.nrows() {
                            for b in 0..kb {
                                out[off + map[a * kb + b]] += 2.0 * scale * h[(a, b)];
                            }
                        }
                    }
                    AffineTerm::Scaled { var, matrix } => {
                        out[self.layout.offsets[*var]] += matrix.component_mul(gj).sum();
                    }
                }
            }
        }
        for (row, gv) in self.lp.iter().zip(g_lp) {
            out[row.index] += row.coeff * gv;
        }
        out
    }

    /// `Σ yᵢ Aᵢ` block by block.
    fn adjoint(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let values: Vec<DMatrix<f64>> = (0..self.layout.shapes.len())
            .map(|v| self.layout.value(v, y.as_slice()))
            .collect();
        let blocks = self
            .blocks
            .iter()
            .map(|block| {
                let d = block.c.nrows();
                let mut m = DMatrix::zeros(d, d);
                for t in &block.terms {
                    m += t.eval(&values[t.var()]);
                }
                m
            })
            .collect();
        let lp = self.lp.iter().map(|r| r.coeff * y[r.index]).collect();
        (blocks, lp)
    }

    fn slack(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let (ay, ay_lp) = self.adjoint(y);
        let z = self.blocks.iter().zip(ay).map(|(b, a)| &b.c - a).collect();
        let z_lp = self.lp.iter().zip(ay_lp).map(|(r, a)| r.c - a).collect();
        (z, z_lp)
    }

    fn primal_objective(&self, x: &[DMatrix<f64>], x_lp: &[f64]) -> f64 {
        let sdp: f64 = self.blocks.iter().zip(x).map(|(b, xj)| b.c.dot(xj)).sum();
        let lp: f64 = self.lp.iter().zip(x_lp).map(|(r, v)| r.c * v).sum();
        sdp + lp
    }

    /// Every coefficient matrix of block `j`, indexed by unknown.
    pub fn expanded_coefficients(&self, j: usize) -> Vec<Option<DMatrix<f64>>> {
        let block = &self.blocks[j];
        let d = block.c.nrows();
        let mut out: Vec<Option<DMatrix<f64>>> = vec![None; self.layout.total];
        for t in &block.terms {
            let var = t.var();
            let shape = self.layout.shapes[var];
            let off = self.layout.offsets[var];
            for local in 0..shape.len() {
                let mut unit = vec![0.0; shape.len()];
                unit[local] = 1.0;
                let contrib = t.eval(&shape.unpack(&unit));
                let slot = out[off + local].get_or_insert_with(|| DMatrix::zeros(d, d));
                *slot += contrib;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self { max_iterations: 120, tolerance: 1e-9, step_fraction: 0.95 }
    }
}

/// Snapshot handed to the monitor after each iteration.
pub struct IterState<'a> {
    pub iteration: usize,
    pub y: &'a DVector<f64>,
    /// `b − A(X)`.
    pub primal_residual: &'a DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
}

pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    Stopped,
    IterationLimit,
    Breakdown(String),
}

pub struct RunResult {
    pub status: RunStatus,
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: DVector<f64>,
    pub primal_objective: f64,
    pub relative_gap: f64,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Largest `α ≤ ∞` with `M + αΔ ⪰ 0`, for `M ≻ 0`.
fn max_step(m: &DMatrix<f64>, delta: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let half = l.solve_lower_triangular(delta)?;
    let full = l.solve_lower_triangular(&half.transpose())?;
    let lmin = sym(&full).symmetric_eigenvalues().min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lp(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(f64::INFINITY, f64::min)
}

fn dot_blocks(a: &[DMatrix<f64>], b: &[DMatrix<f64>], a_lp: &[f64], b_lp: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum::<f64>() + a_lp.iter().zip(b_lp).map(|(x, y)| x * y).sum::<f64>()
}

struct Factor(faer::linalg::solvers::Llt<f64>);

impl Factor {
    fn new(m: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let fm = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
        fm.llt(Side::Lower).ok().map(Factor)
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = rhs.len();
        let r = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let s = self.0.solve(&r);
        DVector::from_fn(n, |i, _| s[(i, 0)])
    }
}

struct Direction {
    dy: DVector<f64>,
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dx_lp: Vec<f64>,
    dz_lp: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn direction(
    p: &DualProblem,
    factor: &Factor,
    x: &[DMatrix<f64>],
    zinv: &[DMatrix<f64>],
    x_lp: &[f64],
    z_lp: &[f64],
    g: &[DMatrix<f64>],
    g_lp: &[f64],
) -> Direction {
    let rhs = &p.b - p.apply(g, g_lp);
    let dy = factor.solve(&rhs);
    let (ady, ady_lp) = p.adjoint(&dy);
    let dz: Vec<DMatrix<f64>> = ady.into_iter().map(|m| -m).collect();
    let dz_lp: Vec<f64> = ady_lp.into_iter().map(|v| -v).collect();
    let dx = (0..x.len())
        .map(|j| sym(&(&g[j] - &x[j] - &x[j] * &dz[j] * &zinv[j])))
        .collect();
    let dx_lp = (0..x_lp.len())
        .map(|i| g_lp[i] - x_lp[i] - x_lp[i] * dz_lp[i] / z_lp[i])
        .collect();
    Direction { dy, dx, dz, dx_lp, dz_lp }
}

fn step_lengths(
    x: &[DMatrix<f64>],
    z: &[DMatrix<f64>],
    x_lp: &[f64],
    z_lp: &[f64],
    d: &Direction,
) -> Option<(f64, f64)> {
    let mut ap = max_step_lp(x_lp, &d.dx_lp);
    let mut ad = max_step_lp(z_lp, &d.dz_lp);
    for j in 0..x.len() {
        ap = ap.min(max_step(&x[j], &d.dx[j])?);
        ad = ad.min(max_step(&z[j], &d.dz[j])?);
    }
    Some((ap, ad))
}

/// Run the method from a strictly dual-feasible `y0`.
pub fn run(
    p: &DualProblem,
    y0: DVector<f64>,
    settings: &IpmSettings,
    schur: &dyn SchurAssembler,
    mut monitor: impl FnMut(&IterState) -> Control,
) -> Result<RunResult> {
    let n_total = p.total_order() as f64;
    let mut y = y0;
    let (mut z, mut z_lp) = p.slack(&y);
    if z.iter().any(|zj| zj.clone().cholesky().is_none()) || z_lp.iter().any(|v| *v <= 0.0) {
        return Err(Error::Internal("interior-point start is not strictly dual feasible".into()));
    }
    let mut x: Vec<DMatrix<f64>> = p.blocks.iter().map(|b| DMatrix::identity(b.c.nrows(), b.c.nrows())).collect();
    let sdp_order: usize = p.blocks.iter().map(|b| b.c.nrows()).sum();
    let mu0 = if sdp_order > 0 { z.iter().map(|zj| zj.trace()).sum::<f64>() / sdp_order as f64 } else { 1.0 };
    let mut x_lp: Vec<f64> = z_lp.iter().map(|v| mu0 / v).collect();

    let mut last = None;
    for iteration in 0..=settings.max_iterations {
        let zinv: Vec<DMatrix<f64>> = match z.iter().map(inverse_spd).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => return Ok(finish(p, RunStatus::Breakdown("dual slack lost definiteness".into()), y, iteration, &x, &x_lp, &z, &z_lp)),
        };
        let rp = &p.b - p.apply(&x, &x_lp);
        let pobj = p.primal_objective(&x, &x_lp);
        let dobj = p.b.dot(&y);
        let gap = dot_blocks(&x, &z, &x_lp, &z_lp);
        let state = IterState {
            iteration,
            y: &y,
            primal_residual: &rp,
            primal_objective: pobj,
            dual_objective: dobj,
            gap,
        };
        if let Control::Stop = monitor(&state) {
            return Ok(finish(p, RunStatus::Stopped, y, iteration, &x, &x_lp, &z, &z_lp));
        }
        let rel_gap = gap / (1.0 + pobj.abs() + dobj.abs());
        let rel_p = rp.norm() / (1.0 + p.b.norm());
        if rel_gap < settings.tolerance && rel_p < settings.tolerance {
            return Ok(finish(p, RunStatus::Converged, y, iteration, &x, &x_lp, &z, &z_lp));
        }
        if iteration == settings.max_iterations {
            break;
        }
        let mu = gap / n_total;

        let mut m = schur.assemble(p, &x, &zinv);
        for (row, (xv, zv)) in p.lp.iter().zip(x_lp.iter().zip(&z_lp)) {
            m[(row.index, row.index)] += row.coeff * row.coeff * xv / zv;
        }
        let factor = match Factor::new(&m) {
            Some(f) => f,
            None => {
                let bump = 1e-13 * m.diagonal().amax().max(1.0);
                for i in 0..m.nrows() {
                    m[(i, i)] += bump;
                }
                match Factor::new(&m) {
                    Some(f) => f,
                    None => {
                        return Ok(finish(p, RunStatus::Breakdown("Schur complement is not positive definite".into()), y, iteration, &x, &x_lp, &z, &z_lp))
                    }
                }
            }
        };

        // predictor
        let zeros: Vec<DMatrix<f64>> = x.iter().map(|xj| DMatrix::zeros(xj.nrows(), xj.ncols())).collect();
        let zeros_lp = vec![0.0; x_lp.len()];
        let aff = direction(p, &factor, &x, &zinv, &x_lp, &z_lp, &zeros, &zeros_lp);
        let Some((ap, ad)) = step_lengths(&x, &z, &x_lp, &z_lp, &aff) else {
            return Ok(finish(p, RunStatus::Breakdown("step length computation failed".into()), y, iteration, &x, &x_lp, &z, &z_lp));
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xa: Vec<DMatrix<f64>> = x.iter().zip(&aff.dx).map(|(a, d)| a + d * ap).collect();
        let za: Vec<DMatrix<f64>> = z.iter().zip(&aff.dz).map(|(a, d)| a + d * ad).collect();
        let xa_lp: Vec<f64> = x_lp.iter().zip(&aff.dx_lp).map(|(a, d)| a + ap * d).collect();
        let za_lp: Vec<f64> = z_lp.iter().zip(&aff.dz_lp).map(|(a, d)| a + ad * d).collect();
        let mu_aff = dot_blocks(&xa, &za, &xa_lp, &za_lp) / n_total;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let g: Vec<DMatrix<f64>> = (0..x.len())
            .map(|j| sym(&(&zinv[j] * (sigma * mu) - &aff.dx[j] * &aff.dz[j] * &zinv[j])))
            .collect();
        let g_lp: Vec<f64> = (0..x_lp.len())
            .map(|i| (sigma * mu - aff.dx_lp[i] * aff.dz_lp[i]) / z_lp[i])
            .collect();
        let dir = direction(p, &factor, &x, &zinv, &x_lp, &z_lp, &g, &g_lp);
        let Some((ap, ad)) = step_lengths(&x, &z, &x_lp, &z_lp, &dir) else {
            return Ok(finish(p, RunStatus::Breakdown("step length computation failed".into()), y, iteration, &x, &x_lp, &z, &z_lp));
        };
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            return Ok(finish(p, RunStatus::Breakdown("step lengths collapsed".into()), y, iteration, &x, &x_lp, &z, &z_lp));
        }
        for j in 0..x.len() {
            x[j] += &dir.dx[j] * ap;
            z[j] += &dir.dz[j] * ad;
        }
        for i in 0..x_lp.len() {
            x_lp[i] += ap * dir.dx_lp[i];
            z_lp[i] += ad * dir.dz_lp[i];
        }
        y += &dir.dy * ad;
        last = Some(iteration);
    }
    let iters = last.map_or(0, |i| i + 1);
    Ok(finish(p, RunStatus::IterationLimit, y, iters, &x, &x_lp, &z, &z_lp))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &DualProblem,
    status: RunStatus,
    y: DVector<f64>,
    iterations: usize,
    x: &[DMatrix<f64>],
    x_lp: &[f64],
    z: &[DMatrix<f64>],
    z_lp: &[f64],
) -> RunResult {
    let rp = &p.b - p.apply(x, x_lp);
    let pobj = p.primal_objective(x, x_lp);
    let dobj = p.b.dot(&y);
    let gap = dot_blocks(x, z, x_lp, z_lp);
    RunResult {
        status,
        y,
        iterations,
        primal_residual: rp,
        primal_objective: pobj,
        relative_gap: gap / (1.0 + pobj.abs() + dobj.abs()),
    }
}

/// Lower bound on the optimal common slack `t*` implied by the primal
/// iterate: `t* ≥ −(⟨C,X⟩ + B‖r_x‖₁)/s`, with `s` normalising the `t` row.
fn slack_lower_bound(rp: &DVector<f64>, pobj: f64, t_index: usize, bound: f64) -> Option<f64> {
    let s = 1.0 + rp[t_index];
    if !(s > 0.0) {
        return None;
    }
    let r1: f64 = rp.iter().enumerate().filter(|(i, _)| *i != t_index).map(|(_, v)| v.abs()).sum();
    Some(-(pobj + bound * r1) / s)
}

/// Solve `min t` subject to `w_j(M_j(x) + ε_j I) ⪯ tI`, `|x_i| ≤ B`, and
/// classify the problem by the sign of `t`.
pub fn solve_feasibility(
    problem: &FeasibilityProblem,
    settings: &SolverSettings,
    schur: &dyn SchurAssembler,
) -> Result<OracleOutcome> {
    let n_x = problem.layout.total;
    let mut shapes = problem.layout.shapes.clone();
    shapes.push(VarShape::Scalar);
    let t_var = shapes.len() - 1;
    let layout = VarLayout::new(shapes);
    let t_index = n_x;

    let mut blocks = Vec::with_capacity(problem.constraints.len());
    let mut t0 = f64::NEG_INFINITY;
    for c in &problem.constraints {
        let d = c.order();
        let w = constraint_scale(c);
        let shifted = (&c.constant + DMatrix::<f64>::identity(d, d) * c.margin) * w;
        t0 = t0.max(max_eigenvalue(&shifted));
        let mut terms: Vec<AffineTerm> = c.terms.iter().map(|t| t.scaled_by(w)).collect();
        terms.push(AffineTerm::Scaled { var: t_var, matrix: -DMatrix::<f64>::identity(d, d) });
        blocks.push(DualBlock { c: -shifted, terms });
    }
    let mut lp = Vec::with_capacity(2 * n_x);
    for i in 0..n_x {
        lp.push(LpRow { c: problem.bound, index: i, coeff: 1.0 });
        lp.push(LpRow { c: problem.bound, index: i, coeff: -1.0 });
    }
    let mut b = DVector::zeros(n_x + 1);
    b[t_index] = -1.0;
    let dual = DualProblem::new(layout, blocks, lp, b);

    let mut y0 = DVector::zeros(n_x + 1);
    y0[t_index] = if t0.is_finite() { t0 + 1.0 } else { 1.0 };

    let ipm_settings = IpmSettings {
        max_iterations: settings.max_iterations,
        tolerance: settings.tolerance,
        ..IpmSettings::default()
    };
    let mut certified: Option<f64> = None;
    let optimize = settings.optimize;
    let bound = problem.bound;
    let started = std::time::Instant::now();
    let mut timed_out = false;
    let run = run(&dual, y0, &ipm_settings, schur, |s| {
        if settings.time_limit.is_some_and(|limit| started.elapsed().as_secs_f64() > limit) {
            timed_out = true;
            return Control::Stop;
        }
        if !optimize && s.y[t_index] < 0.0 {
            return Control::Stop;
        }
        if let Some(lb) = slack_lower_bound(s.primal_residual, s.primal_objective, t_index, bound) {
            if lb > 0.0 {
                certified = Some(certified.map_or(lb, |c: f64| c.max(lb)));
                if !optimize {
                    return Control::Stop;
                }
            }
        }
        Control::Continue
    })?;

    let t = run.y[t_index];
    let rel_p = run.primal_residual.norm() / 2.0;
    let soft_lb = {
        let s = 1.0 + run.primal_residual[t_index];
        if s > 0.0 { -run.primal_objective / s } else { f64::NAN }
    };
    let (status, message) = if t < 0.0 {
        (OracleStatus::Feasible, "strictly feasible point found".to_string())
    } else if timed_out {
        (OracleStatus::SolverFailure, format!("time limit reached at t = {t:e}"))
    } else if let Some(lb) = certified {
        (OracleStatus::Infeasible, format!("primal certificate: t* >= {lb:e}"))
    } else {
        match &run.status {
            RunStatus::Converged => (OracleStatus::Infeasible, format!("converged with t* = {t:e} >= 0")),
            other => {
                if soft_lb > 0.0 && rel_p < 1e-6 {
                    (OracleStatus::Infeasible, format!("stopped ({other:?}) with t >= {soft_lb:e} up to residual {rel_p:e}"))
                } else {
                    (OracleStatus::SolverFailure, format!("{other:?} at t = {t:e}, residual {rel_p:e}"))
                }
            }
        }
    };
    let x = (status == OracleStatus::Feasible).then(|| DVector::from_iterator(n_x, run.y.iter().take(n_x).copied()));
    Ok(OracleOutcome {
        status,
        x,
        diagnostics: OracleDiagnostics {
            oracle: String::new(),
            iterations: run.iterations,
            t,
            t_lower_bound: certified,
            relative_gap: run.relative_gap,
            primal_infeasibility: rel_p,
            message,
        },
    })
}
