use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdp::{
    max_eigenvalue, min_eigenvalue, AffineTerm, FeasibilityOracle, FeasibilityProblem, MatrixInequality,
    OracleDiagnostics, OracleStatus, SolverSettings, VarLayout, VarShape,
};

/// Default relative strictness: `ε = 1e−7·(1 + ‖constant part‖_F)`.
pub const DEFAULT_STRICTNESS: f64 = 1e-7;
/// Default entrywise bound on decision variables.
pub const DEFAULT_VARIABLE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVar {
    pub name: String,
    pub shape: VarShape,
    /// Declared positive definite (positive for scalars).
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `expression ≺ 0`.
    NegativeDefinite,
    /// `expression ⪰ 0`.
    PositiveSemidefinite,
}

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub sense: Sense,
    pub constant: DMatrix<f64>,
    pub terms: Vec<AffineTerm>,
}

impl LmiConstraint {
    pub fn order(&self) -> usize {
        self.constant.nrows()
    }

    /// Constraint expression at the given variable values.
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for t in &self.terms {
            m += t.eval(&values[t.var()]);
        }
        m
    }

    /// Expression with its lower triangle mirrored from the upper, which
    /// makes symmetry exact regardless of accumulation order.
    pub fn evaluate_symmetric(&self, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut m = self.evaluate(values);
        for i in 0..m.nrows() {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        m
    }
}

/// Problem parameters recorded alongside an instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub theorem: String,
    pub n: usize,
    pub n0: usize,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_m: Option<f64>,
    /// The ζ row was rescaled by this factor for conditioning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta_scaling: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LmiInstance {
    pub vars: Vec<DecisionVar>,
    pub constraints: Vec<LmiConstraint>,
    /// Relative strictness factor for strict constraints.
    pub strictness: f64,
    pub meta: InstanceMeta,
}

impl LmiInstance {
    pub fn layout(&self) -> VarLayout {
        VarLayout::new(self.vars.iter().map(|v| v.shape).collect())
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn num_unknowns(&self) -> usize {
        self.vars.iter().map(|v| v.shape.len()).sum()
    }

    /// Margin `ε` applied to a strict constraint with the given constant part.
    pub fn margin_for(&self, constant: &DMatrix<f64>) -> f64 {
        self.strictness * (1.0 + constant.norm())
    }

    fn positivity_margin(&self) -> f64 {
        self.strictness
    }

    pub fn values(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let layout = self.layout();
        (0..self.vars.len()).map(|v| layout.value(v, x)).collect()
    }

    /// Every constraint expression at `x` (symmetrised by mirroring).
    pub fn evaluate(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let values = self.values(x);
        self.constraints.iter().map(|c| c.evaluate_symmetric(&values)).collect()
    }

    /// Convert to the oracle form `M_j(x) ⪯ −ε_j I`.
    pub fn to_problem(&self, bound: f64) -> FeasibilityProblem {
        let mut out = Vec::new();
        for c in &self.constraints {
            match c.sense {
                Sense::NegativeDefinite => out.push(MatrixInequality {
                    name: c.name.clone(),
                    constant: c.constant.clone(),
                    terms: c.terms.clone(),
                    margin: self.margin_for(&c.constant),
                }),
                Sense::PositiveSemidefinite => out.push(MatrixInequality {
                    name: c.name.clone(),
                    constant: -&c.constant,
                    terms: c.terms.iter().map(|t| t.scaled_by(-1.0)).collect(),
                    margin: 0.0,
                }),
            }
        }
        for (i, v) in self.vars.iter().enumerate().filter(|(_, v)| v.positive) {
            let (r, _) = v.shape.dims();
            let term = match v.shape {
                VarShape::Scalar => AffineTerm::Scaled { var: i, matrix: DMatrix::from_element(1, 1, -1.0) },
                _ => AffineTerm::Congruence {
                    var: i,
                    scale: -0.5,
                    left: DMatrix::identity(r, r),
                    right: DMatrix::identity(r, r),
                },
            };
            out.push(MatrixInequality {
                name: format!("{} > 0", v.name),
                constant: DMatrix::zeros(r, r),
                terms: vec![term],
                margin: self.positivity_margin(),
            });
        }
        FeasibilityProblem { layout: self.layout(), constraints: out, bound }
    }

    /// Independent eigenvalue check: strict constraints need
    /// `λ_max ≤ −ε/2`, semidefinite ones `λ_min ≥ 0`, positive variables
    /// `λ_min ≥ ε/2`. Returns the smallest slack (≥ 0 means pass).
    pub fn verify(&self, x: &[f64]) -> Verification {
        let values = self.values(x);
        let mut entries = Vec::new();
        for c in &self.constraints {
            let m = c.evaluate_symmetric(&values);
            let (slack, eig) = match c.sense {
                Sense::NegativeDefinite => {
                    let lmax = max_eigenvalue(&m);
                    (-lmax - 0.5 * self.margin_for(&c.constant), lmax)
                }
                Sense::PositiveSemidefinite => {
                    let lmin = min_eigenvalue(&m);
                    (lmin, lmin)
                }
            };
            entries.push(VerificationEntry { name: c.name.clone(), extreme_eigenvalue: eig, slack });
        }
        for (v, value) in self.vars.iter().zip(&values).filter(|(v, _)| v.positive) {
            let sym = match v.shape {
                VarShape::Scalar => value.clone(),
                _ => (value + value.transpose()) * 0.5,
            };
            let lmin = min_eigenvalue(&sym);
            entries.push(VerificationEntry {
                name: format!("{} > 0", v.name),
                extreme_eigenvalue: lmin,
                slack: lmin - 0.5 * self.positivity_margin(),
            });
        }
        let margin = entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min);
        Verification { margin, entries }
    }

    /// Plain JSON dump: variable registry, and for each constraint its dense
    /// constant matrix and one dense coefficient matrix per unknown.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let layout = self.layout();
        let constraints: Vec<serde_json::Value> = self
            .constraints
            .iter()
            .map(|c| {
                let mut coeffs = BTreeMap::new();
                for t in &c.terms {
                    let var = t.var();
                    let shape = layout.shapes[var];
                    for local in 0..shape.len() {
                        let mut unit = vec![0.0; shape.len()];
                        unit[local] = 1.0;
                        let m = t.eval(&shape.unpack(&unit));
                        let key = format!("{}[{}]", self.vars[var].name, local);
                        coeffs
                            .entry(key)
                            .and_modify(|acc: &mut DMatrix<f64>| *acc += &m)
                            .or_insert(m);
                    }
                }
                let coeffs: BTreeMap<String, Vec<Vec<f64>>> =
                    coeffs.into_iter().map(|(k, m)| (k, matrix_rows(&m))).collect();
                serde_json::json!({
                    "name": c.name,
                    "sense": c.sense,
                    "order": c.order(),
                    "margin": match c.sense {
                        Sense::NegativeDefinite => self.margin_for(&c.constant),
                        Sense::PositiveSemidefinite => 0.0,
                    },
                    "constant": matrix_rows(&c.constant),
                    "coefficients": coeffs,
                })
            })
            .collect();
        serde_json::json!({
            "meta": self.meta,
            "strictness": self.strictness,
            "variables": self.vars,
            "constraints": constraints,
        })
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationEntry {
    pub name: String,
    pub extreme_eigenvalue: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verification {
    pub margin: f64,
    pub entries: Vec<VerificationEntry>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub status: FeasibilityStatus,
    /// Most binding slack of the independent re-verification.
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variables: Option<BTreeMap<String, Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    pub diagnostics: OracleDiagnostics,
    pub meta: InstanceMeta,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

/// Solver configuration for feasibility checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckSettings {
    pub oracle: String,
    pub bound: f64,
    pub solver: SolverSettings,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            oracle: crate::sdp::DEFAULT_ORACLE.to_string(),
            bound: DEFAULT_VARIABLE_BOUND,
            solver: SolverSettings::default(),
        }
    }
}

/// Solve and, on success, re-verify every constraint by eigenvalues.
pub fn check_feasibility(
    inst: &LmiInstance,
    oracle: &dyn FeasibilityOracle,
    settings: &CheckSettings,
) -> Result<FeasibilityReport> {
    if !(inst.strictness >= 0.0 && inst.strictness.is_finite()) {
        return Err(Error::Validation(format!("strictness {} is invalid", inst.strictness)));
    }
    let problem = inst.to_problem(settings.bound);
    let outcome = oracle.solve(&problem, &settings.solver)?;
    let mut diagnostics = outcome.diagnostics;
    let (status, margin, variables, verification) = match (outcome.status, outcome.x) {
        (OracleStatus::Feasible, Some(x)) => {
            let check = inst.verify(x.as_slice());
            if check.passed() {
                let vars = named_values(inst, &x);
                (FeasibilityStatus::Feasible, Some(check.margin), Some(vars), Some(check))
            } else {
                diagnostics.message = format!(
                    "oracle reported feasible but re-verification failed (margin {:e})",
                    check.margin
                );
                (FeasibilityStatus::SolverFailure, Some(check.margin), None, Some(check))
            }
        }
        (OracleStatus::Feasible, None) => {
            diagnostics.message = "oracle reported feasible without a point".into();
            (FeasibilityStatus::SolverFailure, None, None, None)
        }
        (OracleStatus::Infeasible, _) => (FeasibilityStatus::Infeasible, None, None, None),
        (OracleStatus::SolverFailure, _) => (FeasibilityStatus::SolverFailure, None, None, None),
    };
    if status == FeasibilityStatus::SolverFailure {
        log::warn!("{} N={}: solver failure: {}", inst.meta.theorem, inst.meta.n, diagnostics.message);
    }
    Ok(FeasibilityReport { status, margin, variables, verification, diagnostics, meta: inst.meta.clone() })
}

fn named_values(inst: &LmiInstance, x: &DVector<f64>) -> BTreeMap<String, Vec<Vec<f64>>> {
    let values = inst.values(x.as_slice());
    inst.vars.iter().zip(values).map(|(v, m)| (v.name.clone(), matrix_rows(&m))).collect()
}
