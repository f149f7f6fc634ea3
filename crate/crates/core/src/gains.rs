//! Controller and observer gains for the first `N₀+1` modes, with Lyapunov
//! certificates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::matrix_rows;
use crate::modal::ModalModel;
use crate::sdp::{
    max_eigenvalue, min_eigenvalue, AffineTerm, FeasibilityOracle, FeasibilityProblem, MatrixInequality,
    OracleStatus, SolverSettings, VarLayout, VarShape,
};

/// Relative strictness for the Lyapunov inequalities: pass iff
/// `λ_max(LHS) < −1e−6·‖LHS‖_F`.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-6;

/// Entrywise box on `(Q, Y)` during synthesis. Several unstable modes with
/// a weakly observed one need gains in the hundreds.
const SYNTHESIS_BOX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub n0: usize,
    pub k0: Vec<f64>,
    pub l0: Vec<f64>,
    pub delta: f64,
    pub pc: Vec<Vec<f64>>,
    pub po: Vec<Vec<f64>>,
}

impl GainSet {
    /// Gains supplied by the user; certificates come from Lyapunov equations.
    pub fn pinned(model: &ModalModel, n0: usize, k0: Vec<f64>, l0: Vec<f64>, delta: f64) -> Result<Self> {
        check_dims(model, n0, k0.len(), l0.len())?;
        let (a0, b0, c0) = reduced_matrices(model, n0)?;
        let kr = DMatrix::from_row_slice(1, n0 + 1, &k0);
        let lc = DMatrix::from_column_slice(n0 + 1, 1, &l0);
        let pc = lyapunov_certificate(&(&a0 + &b0 * &kr), delta)?;
        let po = lyapunov_certificate(&(&a0 - &lc * &c0), delta)?;
        Ok(Self { n0, k0, l0, delta, pc: matrix_rows(&pc), po: matrix_rows(&po) })
    }

    pub fn k_row(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.k0.len(), &self.k0)
    }

    pub fn l_col(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.l0.len(), 1, &self.l0)
    }

    pub fn pc_matrix(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.pc)
    }

    pub fn po_matrix(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.po)
    }
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn check_dims(model: &ModalModel, n0: usize, k: usize, l: usize) -> Result<()> {
    if k != n0 + 1 || l != n0 + 1 {
        return Err(Error::Dimension(format!("gains need length N0+1 = {}, got K0: {k}, L0: {l}", n0 + 1)));
    }
    if model.truncation < n0 {
        return Err(Error::Dimension(format!("model truncation {} below N0 = {n0}", model.truncation)));
    }
    Ok(())
}

/// `(A₀, B₀, C₀)` over modes `0..=N₀`.
pub fn reduced_matrices(model: &ModalModel, n0: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if model.truncation < n0 {
        return Err(Error::Dimension(format!("model truncation {} below N0 = {n0}", model.truncation)));
    }
    let n = n0 + 1;
    let a0 = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| model.open_loop_rate(i)));
    let b0 = DMatrix::from_fn(n, 1, |i, _| model.b[i]);
    let c0 = DMatrix::from_fn(1, n, |_, j| model.c[j]);
    Ok((a0, b0, c0))
}

/// Solve `(A+δI)ᵀP + P(A+δI) = −I`; errors when the solution is not
/// positive definite, i.e. `A+δI` is not Hurwitz.
pub fn lyapunov_certificate(a: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let shifted = a + DMatrix::identity(n, n) * delta;
    // vec(AᵀP + PA) = (I⊗Aᵀ + Aᵀ⊗I) vec(P), column-major vec.
    let at = shifted.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("closed loop has eigenvalues symmetric about -delta".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    if min_eigenvalue(&p) <= 0.0 {
        return Err(Error::Domain(format!("closed loop is not stable with margin delta = {delta}")));
    }
    Ok(p)
}

/// `PA + AᵀP + 2δP`.
pub fn lyapunov_lhs(p: &DMatrix<f64>, a: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let m = p * a;
    &m + m.transpose() + p * (2.0 * delta)
}

/// Find `K` and `Q ≻ 0` with `(A+BK)Q + Q(A+BK)ᵀ + 2δQ ≺ 0`, through
/// `Y = KQ`. Maximises the common margin inside an entrywise box, with
/// `Q ⪰ I` fixing the scale.
pub fn synthesize_state_feedback(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    delta: f64,
    oracle: &dyn FeasibilityOracle,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    let eye = DMatrix::<f64>::identity(n, n);
    let shifted_t = (a + &eye * delta).transpose();
    let layout = VarLayout::new(vec![VarShape::Symmetric { order: n }, VarShape::Full { rows: m, cols: n }]);
    let lyap = MatrixInequality {
        name: "closed-loop Lyapunov".into(),
        constant: DMatrix::zeros(n, n),
        terms: vec![
            AffineTerm::Congruence { var: 0, scale: 1.0, left: eye.clone(), right: shifted_t },
            AffineTerm::Congruence { var: 1, scale: 1.0, left: b.transpose(), right: eye.clone() },
        ],
        margin: 0.0,
    };
    let scale = MatrixInequality {
        name: "Q >= I".into(),
        constant: eye.clone(),
        terms: vec![AffineTerm::Congruence { var: 0, scale: -0.5, left: eye.clone(), right: eye.clone() }],
        margin: 0.0,
    };
    let problem = FeasibilityProblem { layout: layout.clone(), constraints: vec![lyap, scale], bound: SYNTHESIS_BOX };
    let settings = SolverSettings { optimize: true, ..SolverSettings::default() };
    let out = oracle.solve(&problem, &settings)?;
    let x = match (out.status, out.x) {
        (OracleStatus::Feasible, Some(x)) => x,
        (status, _) => {
            return Err(Error::Internal(format!(
                "gain synthesis returned {status:?}: {} (t = {:e})",
                out.diagnostics.message, out.diagnostics.t
            )))
        }
    };
    let q = layout.value(0, x.as_slice());
    let y = layout.value(1, x.as_slice());
    let q_inv = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("synthesized Q is not positive definite".into()))?
        .inverse();
    Ok((y * q_inv, q))
}

/// `K₀` and `Pc` such that `A₀+B₀K₀` decays with rate `δ`.
pub fn design_controller_gain(
    model: &ModalModel,
    n0: usize,
    delta: f64,
    oracle: &dyn FeasibilityOracle,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_delta(delta)?;
    let (a0, b0, _) = reduced_matrices(model, n0)?;
    let (k, _) = synthesize_state_feedback(&a0, &b0, delta, oracle)?;
    // Q⁻¹ is a valid certificate but badly conditioned once the margin
    // pushes Q to the box; the Lyapunov equation gives a clean one
    let pc = lyapunov_certificate(&(&a0 + &b0 * &k), delta)?;
    let margin = lyapunov_margin(&pc, &(&a0 + &b0 * &k), delta);
    if !margin.passed() {
        return Err(Error::Internal(format!("synthesized controller gain fails verification: {margin:?}")));
    }
    Ok((k.iter().copied().collect(), pc))
}

/// `L₀` and `Po` such that `A₀−L₀C₀` decays with rate `δ`, obtained by
/// duality from the controller problem on `(A₀ᵀ, C₀ᵀ)`.
pub fn design_observer_gain(
    model: &ModalModel,
    n0: usize,
    delta: f64,
    oracle: &dyn FeasibilityOracle,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_delta(delta)?;
    let (a0, _, c0) = reduced_matrices(model, n0)?;
    if let Some(index) = (0..=n0).find(|&i| model.c[i].abs() < 1e-14) {
        return Err(Error::ZeroOutputCoefficient { index });
    }
    let (k, _) = synthesize_state_feedback(&a0.transpose(), &c0.transpose(), delta, oracle)?;
    let l = -k.transpose();
    let po = lyapunov_certificate(&(&a0 - &l * &c0), delta)?;
    let margin = lyapunov_margin(&po, &(&a0 - &l * &c0), delta);
    if !margin.passed() {
        return Err(Error::Internal(format!("synthesized observer gain fails verification: {margin:?}")));
    }
    Ok((l.iter().copied().collect(), po))
}

/// Both gains synthesized, packed as a `GainSet`.
pub fn design_gains(model: &ModalModel, n0: usize, delta: f64, oracle: &dyn FeasibilityOracle) -> Result<GainSet> {
    let (k0, pc) = design_controller_gain(model, n0, delta, oracle)?;
    let (l0, po) = design_observer_gain(model, n0, delta, oracle)?;
    Ok(GainSet { n0, k0, l0, delta, pc: matrix_rows(&pc), po: matrix_rows(&po) })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Validation(format!("decay rate must be finite and nonnegative, got {delta}")));
    }
    Ok(())
}

/// Largest eigenvalue of a Lyapunov expression and the pass threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovMargin {
    pub max_eigenvalue: f64,
    pub threshold: f64,
}

impl LyapunovMargin {
    pub fn passed(&self) -> bool {
        self.max_eigenvalue < self.threshold
    }
}

pub fn lyapunov_margin(p: &DMatrix<f64>, a_cl: &DMatrix<f64>, delta: f64) -> LyapunovMargin {
    let lhs = lyapunov_lhs(p, a_cl, delta);
    LyapunovMargin { max_eigenvalue: max_eigenvalue(&lhs), threshold: -LYAPUNOV_TOLERANCE * lhs.norm() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMargins {
    pub controller: LyapunovMargin,
    pub observer: LyapunovMargin,
}

impl GainMargins {
    pub fn passed(&self) -> bool {
        self.controller.passed() && self.observer.passed()
    }
}

/// Recompute both Lyapunov expressions from the stored certificates.
pub fn verify_gains(gains: &GainSet, model: &ModalModel) -> Result<GainMargins> {
    check_dims(model, gains.n0, gains.k0.len(), gains.l0.len())?;
    let n = gains.n0 + 1;
    let pc = gains.pc_matrix()?;
    let po = gains.po_matrix()?;
    if pc.shape() != (n, n) || po.shape() != (n, n) {
        return Err(Error::Dimension(format!("certificates must be {n}x{n}")));
    }
    let (a0, b0, c0) = reduced_matrices(model, gains.n0)?;
    Ok(GainMargins {
        controller: lyapunov_margin(&pc, &(&a0 + &b0 * gains.k_row()), gains.delta),
        observer: lyapunov_margin(&po, &(&a0 - gains.l_col() * &c0), gains.delta),
    })
}
