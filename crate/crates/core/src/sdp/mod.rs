//! Semidefinite feasibility oracles.
//!
//! A problem is a list of matrix inequalities `M_j(x) ⪯ −ε_j I`, each
//! affine in a vector of decision variables, plus an entrywise bound
//! `|x_i| ≤ B`. Oracles are registered by name and selected at runtime.

mod ipm;
mod schur;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ipm::{IpmSettings, IterState};
pub use schur::{DenseSchur, SchurAssembler, StructuredSchur};

/// Shape of a matrix decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum VarShape {
    Symmetric { order: usize },
    Full { rows: usize, cols: usize },
    Scalar,
}

impl VarShape {
    /// Number of scalar unknowns.
    pub fn len(&self) -> usize {
        match *self {
            Self::Symmetric { order } => order * (order + 1) / 2,
            Self::Full { rows, cols } => rows * cols,
            Self::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)` of the matrix value.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Self::Symmetric { order } => (order, order),
            Self::Full { rows, cols } => (rows, cols),
            Self::Scalar => (1, 1),
        }
    }

    /// Local unknown index of every matrix position, row-major.
    pub fn position_map(&self) -> Vec<usize> {
        match *self {
            Self::Symmetric { order } => {
                let mut map = vec![0; order * order];
                let mut k = 0;
                for a in 0..order {
                    for b in a..order {
                        map[a * order + b] = k;
                        map[b * order + a] = k;
                        k += 1;
                    }
                }
                map
            }
            Self::Full { rows, cols } => (0..rows * cols).collect(),
            Self::Scalar => vec![0],
        }
    }

    /// Matrix value from the variable's slice of the decision vector.
    pub fn unpack(&self, x: &[f64]) -> DMatrix<f64> {
        let (r, c) = self.dims();
        let map = self.position_map();
        DMatrix::from_fn(r, c, |a, b| x[map[a * c + b]])
    }
}

/// One affine contribution to a constraint of order `d`.
///
/// `Congruence` adds `s(LᵀVR + RᵀVᵀL)` with `L: k₁×d`, `R: k₂×d` and `V`
/// the `k₁×k₂` value of the variable; `Scaled` adds `v·S` for a scalar
/// variable `v` and a constant symmetric `S`.
#[derive(Debug, Clone, PartialEq)]
pub enum AffineTerm {
    Congruence { var: usize, scale: f64, left: DMatrix<f64>, right: DMatrix<f64> },
    Scaled { var: usize, matrix: DMatrix<f64> },
}

impl AffineTerm {
    pub fn var(&self) -> usize {
        match self {
            Self::Congruence { var, .. } | Self::Scaled { var, .. } => *var,
        }
    }

    /// Contribution evaluated at a variable value.
    pub fn eval(&self, value: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Congruence { scale, left, right, .. } => {
                let h = left.transpose() * value * right;
                (&h + h.transpose()) * *scale
            }
            Self::Scaled { matrix, .. } => matrix * value[(0, 0)],
        }
    }

    /// Multiply the contribution by a constant.
    pub fn scaled_by(&self, w: f64) -> Self {
        match self {
            Self::Congruence { var, scale, left, right } => Self::Congruence {
                var: *var,
                scale: scale * w,
                left: left.clone(),
                right: right.clone(),
            },
            Self::Scaled { var, matrix } => Self::Scaled { var: *var, matrix: matrix * w },
        }
    }

    fn frobenius_bound(&self) -> f64 {
        match self {
            Self::Congruence { scale, left, right, .. } => 2.0 * scale.abs() * left.norm() * right.norm(),
            Self::Scaled { matrix, .. } => matrix.norm(),
        }
    }
}

/// `constant + Σ terms ⪯ −margin·I`.
#[derive(Debug, Clone)]
pub struct MatrixInequality {
    pub name: String,
    pub constant: DMatrix<f64>,
    pub terms: Vec<AffineTerm>,
    pub margin: f64,
}

impl MatrixInequality {
    pub fn order(&self) -> usize {
        self.constant.nrows()
    }
}

/// Variables laid out consecutively in one decision vector.
#[derive(Debug, Clone, Default)]
pub struct VarLayout {
    pub shapes: Vec<VarShape>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl VarLayout {
    pub fn new(shapes: Vec<VarShape>) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for s in &shapes {
            offsets.push(total);
            total += s.len();
        }
        Self { shapes, offsets, total }
    }

    pub fn value(&self, var: usize, x: &[f64]) -> DMatrix<f64> {
        let off = self.offsets[var];
        self.shapes[var].unpack(&x[off..off + self.shapes[var].len()])
    }
}

/// Strict feasibility problem handed to an oracle.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    pub layout: VarLayout,
    pub constraints: Vec<MatrixInequality>,
    /// Entrywise bound on every decision variable.
    pub bound: f64,
}

impl FeasibilityProblem {
    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            let d = c.order();
            if c.constant.ncols() != d {
                return Err(Error::Dimension(format!("constraint '{}' constant is not square", c.name)));
            }
            for t in &c.terms {
                let var = t.var();
                if var >= self.layout.shapes.len() {
                    return Err(Error::Dimension(format!("constraint '{}' references unknown variable {var}", c.name)));
                }
                let (r, k) = self.layout.shapes[var].dims();
                let ok = match t {
                    AffineTerm::Congruence { left, right, .. } => {
                        left.nrows() == r && right.nrows() == k && left.ncols() == d && right.ncols() == d
                    }
                    AffineTerm::Scaled { matrix, .. } => {
                        self.layout.shapes[var] == VarShape::Scalar && matrix.nrows() == d && matrix.ncols() == d
                    }
                };
                if !ok {
                    return Err(Error::Dimension(format!(
                        "term on variable {var} does not fit constraint '{}' of order {d}",
                        c.name
                    )));
                }
            }
        }
        if !(self.bound > 0.0) {
            return Err(Error::Validation("variable bound must be positive".into()));
        }
        Ok(())
    }

    /// `M_j(x)` for every constraint.
    pub fn evaluate(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let values: Vec<DMatrix<f64>> =
            (0..self.layout.shapes.len()).map(|v| self.layout.value(v, x)).collect();
        self.constraints
            .iter()
            .map(|c| {
                let mut m = c.constant.clone();
                for t in &c.terms {
                    m += t.eval(&values[t.var()]);
                }
                m
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Feasible,
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleDiagnostics {
    pub oracle: String,
    pub iterations: usize,
    /// Common slack variable `t` at termination (negative means feasible).
    pub t: f64,
    /// Lower bound on the optimal `t` from the primal iterate, if certified.
    pub t_lower_bound: Option<f64>,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub status: OracleStatus,
    pub x: Option<DVector<f64>>,
    pub diagnostics: OracleDiagnostics,
}

/// Settings shared by all oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Keep iterating after the first feasible point to maximise the margin.
    pub optimize: bool,
    /// Wall-clock budget in seconds; exceeding it is a solver failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iterations: 120, tolerance: 1e-9, optimize: false, time_limit: None }
    }
}

/// A pluggable strict-LMI feasibility oracle.
pub trait FeasibilityOracle: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &FeasibilityProblem, settings: &SolverSettings) -> Result<OracleOutcome>;
}

/// Primal–dual interior-point oracle with a pluggable Schur-complement
/// assembler.
pub struct InteriorPoint<S: SchurAssembler> {
    name: String,
    schur: S,
}

impl<S: SchurAssembler> InteriorPoint<S> {
    pub fn new(name: impl Into<String>, schur: S) -> Self {
        Self { name: name.into(), schur }
    }
}

impl<S: SchurAssembler + Send + Sync> FeasibilityOracle for InteriorPoint<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, problem: &FeasibilityProblem, settings: &SolverSettings) -> Result<OracleOutcome> {
        problem.validate()?;
        let mut out = ipm::solve_feasibility(problem, settings, &self.schur)?;
        out.diagnostics.oracle = self.name.clone();
        Ok(out)
    }
}

/// Name-indexed oracle registry.
#[derive(Clone)]
pub struct OracleRegistry {
    oracles: BTreeMap<String, Arc<dyn FeasibilityOracle>>,
}

pub const DEFAULT_ORACLE: &str = "ipm";

impl OracleRegistry {
    pub fn empty() -> Self {
        Self { oracles: BTreeMap::new() }
    }

    /// `ipm` (structured Schur assembly) and `ipm-dense` (reference assembly
    /// from expanded coefficient matrices, for small problems).
    pub fn with_defaults() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(InteriorPoint::new(DEFAULT_ORACLE, StructuredSchur)));
        reg.register(Arc::new(InteriorPoint::new("ipm-dense", DenseSchur)));
        reg
    }

    pub fn register(&mut self, oracle: Arc<dyn FeasibilityOracle>) {
        self.oracles.insert(oracle.name().to_string(), oracle);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn FeasibilityOracle>> {
        self.oracles
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: "oracle", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<String> {
        self.oracles.keys().cloned().collect()
    }
}

impl Default for OracleRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

pub(crate) fn constraint_scale(c: &MatrixInequality) -> f64 {
    let data = c.constant.norm() + c.terms.iter().map(AffineTerm::frobenius_bound).sum::<f64>();
    1.0 / data.max(1e-12)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}
