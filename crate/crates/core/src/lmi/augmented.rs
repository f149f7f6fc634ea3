//! Closed-loop matrices of the observer-based design in modal coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gains::{reduced_matrices, GainSet};
use crate::modal::ModalModel;

/// Everything the four LMI families are built from.
///
/// Naming: `f0`/`cal_*0` act on `(x̂^{N₀}, e^{N₀})`; `bar_*0` are the
/// predictor variants; `bar_f`, `bar_cal_l`, `cal_c`, `bar_cal_b` act on
/// `(z̄, e^{N₀}, e^{N−N₀})`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMatrices {
    pub n0: usize,
    pub n: usize,
    pub a0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub exp_a0r: DMatrix<f64>,
    pub f0: DMatrix<f64>,
    pub bar_f0: DMatrix<f64>,
    pub bar_f: DMatrix<f64>,
    pub cal_l0: DMatrix<f64>,
    pub bar_cal_l0: DMatrix<f64>,
    pub bar_cal_l: DMatrix<f64>,
    /// `[K₀, 0]`, order `2N₀+2`.
    pub cal_k0: DMatrix<f64>,
    /// `[K₀, 0, 0]`, order `N+N₀+2`.
    pub cal_k: DMatrix<f64>,
    pub cal_b0: DMatrix<f64>,
    pub bar_cal_b0: DMatrix<f64>,
    pub bar_cal_b: DMatrix<f64>,
    pub cal_c0: DMatrix<f64>,
    pub cal_c: DMatrix<f64>,
}

pub fn assemble_augmented(model: &ModalModel, gains: &GainSet, n: usize, r: f64) -> Result<AugmentedMatrices> {
    let n0 = gains.n0;
    if n <= n0 {
        return Err(Error::Domain(format!("observer dimension N={n} must exceed N0={n0}")));
    }
    if model.truncation < n {
        return Err(Error::Domain(format!("model truncation M={} below N={n}", model.truncation)));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("input delay r={r} must be finite and nonnegative")));
    }
    if gains.k0.len() != n0 + 1 || gains.l0.len() != n0 + 1 {
        return Err(Error::Dimension("gain lengths do not match N0".into()));
    }
    let k = n0 + 1;
    let t = n - n0;
    let (a0, b0, c0) = reduced_matrices(model, n0)?;
    let a1 = DMatrix::from_diagonal(&DVector::from_fn(t, |i, _| model.open_loop_rate(k + i)));
    let b1 = DMatrix::from_fn(t, 1, |i, _| model.b[k + i]);
    let c1 = DMatrix::from_fn(1, t, |_, j| model.c[k + j]);
    let exp_a0r = DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| (model.open_loop_rate(i) * r).exp()));
    let kr = gains.k_row();
    let lc = gains.l_col();

    let a_cl = &a0 + &b0 * &kr;
    let a_obs = &a0 - &lc * &c0;
    let lc0 = &lc * &c0;
    let elc0 = &exp_a0r * &lc0;

    let mut f0 = DMatrix::zeros(2 * k, 2 * k);
    f0.view_mut((0, 0), (k, k)).copy_from(&a_cl);
    f0.view_mut((0, k), (k, k)).copy_from(&lc0);
    f0.view_mut((k, k), (k, k)).copy_from(&a_obs);
    let mut bar_f0 = f0.clone();
    bar_f0.view_mut((0, k), (k, k)).copy_from(&elc0);

    let n4 = n + n0 + 2;
    let mut bar_f = DMatrix::zeros(n4, n4);
    bar_f.view_mut((0, 0), (k, k)).copy_from(&a_cl);
    bar_f.view_mut((0, k), (k, k)).copy_from(&elc0);
    bar_f.view_mut((0, 2 * k), (k, t)).copy_from(&(&exp_a0r * &lc * &c1));
    bar_f.view_mut((k, k), (k, k)).copy_from(&a_obs);
    bar_f.view_mut((k, 2 * k), (k, t)).copy_from(&(-&lc * &c1));
    bar_f.view_mut((2 * k, 2 * k), (t, t)).copy_from(&a1);

    let el = &exp_a0r * &lc;
    let cal_l0 = stack(&[&lc, &(-&lc)]);
    let bar_cal_l0 = stack(&[&el, &(-&lc)]);
    let bar_cal_l = stack(&[&el, &(-&lc), &DMatrix::zeros(t, 1)]);

    let mut cal_k0 = DMatrix::zeros(1, 2 * k);
    cal_k0.view_mut((0, 0), (1, k)).copy_from(&kr);
    let mut cal_k = DMatrix::zeros(1, n4);
    cal_k.view_mut((0, 0), (1, k)).copy_from(&kr);

    let cal_b0 = stack(&[&b0, &DMatrix::zeros(k, 1)]);
    let bar_cal_b0 = stack(&[&(&exp_a0r * &b0), &DMatrix::zeros(k, 1)]);
    let bar_cal_b = stack(&[&DMatrix::zeros(k, 1), &b0, &b1]);

    let mut cal_c0 = DMatrix::zeros(1, 2 * k);
    cal_c0.view_mut((0, k), (1, k)).copy_from(&c0);
    let mut cal_c = DMatrix::zeros(1, n4);
    cal_c.view_mut((0, k), (1, k)).copy_from(&c0);
    cal_c.view_mut((0, 2 * k), (1, t)).copy_from(&c1);

    Ok(AugmentedMatrices {
        n0,
        n,
        a0,
        b0,
        c0,
        a1,
        b1,
        c1,
        exp_a0r,
        f0,
        bar_f0,
        bar_f,
        cal_l0,
        bar_cal_l0,
        bar_cal_l,
        cal_k0,
        cal_k,
        cal_b0,
        bar_cal_b0,
        bar_cal_b,
        cal_c0,
        cal_c,
    })
}

fn stack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let cols = parts[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    out
}
