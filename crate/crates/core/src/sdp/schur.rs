//! Schur-complement assembly `M_ik = Σ_j tr(A_i X_j A_k Z_j⁻¹)` for the
//! HKM search direction.

use nalgebra::DMatrix;

use super::ipm::DualProblem;
use super::AffineTerm;

pub trait SchurAssembler {
    /// Semidefinite-block part of the Schur matrix; `x` holds the primal
    /// blocks and `zinv` the inverses of the dual slack blocks.
    fn assemble(&self, problem: &DualProblem, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64>;
}

/// Exploits the low-rank congruence structure of every term: each Schur
/// entry becomes a sum of four products of small projected matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuredSchur;

/// Reference assembly from expanded dense coefficient matrices. Cost grows
/// like `m²d³`; intended for small problems and cross-checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseSchur;

enum Projected {
    Congruence { xl: DMatrix<f64>, xr: DMatrix<f64>, yl: DMatrix<f64>, yr: DMatrix<f64> },
    Scaled { w: DMatrix<f64> },
}

impl SchurAssembler for StructuredSchur {
    fn assemble(&self, p: &DualProblem, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = p.layout.total;
        // Off-diagonal term pairs land once in `acc`; same-term pairs are
        // halved so that `acc + accᵀ` restores them.
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for (j, block) in p.blocks.iter().enumerate() {
            let (xj, yj) = (&x[j], &zinv[j]);
            let pre: Vec<Projected> = block
                .terms
                .iter()
                .map(|t| match t {
                    AffineTerm::Congruence { left, right, .. } => Projected::Congruence {
                        xl: xj * left.transpose(),
                        xr: xj * right.transpose(),
                        yl: yj * left.transpose(),
                        yr: yj * right.transpose(),
                    },
                    AffineTerm::Scaled { matrix, .. } => Projected::Scaled { w: xj * matrix * yj },
                })
                .collect();
            for i1 in 0..block.terms.len() {
                for i2 in i1..block.terms.len() {
                    let weight = if i1 == i2 { 0.5 } else { 1.0 };
                    pair(p, &block.terms[i1], &pre[i1], &block.terms[i2], &pre[i2], weight, &mut acc);
                }
            }
        }
        &acc + acc.transpose()
    }
}

fn pair(
    p: &DualProblem,
    t1: &AffineTerm,
    p1: &Projected,
    t2: &AffineTerm,
    p2: &Projected,
    weight: f64,
    acc: &mut DMatrix<f64>,
) {
    match (t1, t2) {
        (
            AffineTerm::Congruence { var: v1, scale: s1, left: l1, right: r1 },
            AffineTerm::Congruence { var: v2, scale: s2, left: l2, right: r2 },
        ) => {
            let (Projected::Congruence { yl: yl1, yr: yr1, .. }, Projected::Congruence { xl: xl2, xr: xr2, .. }) = (p1, p2)
            else {
                unreachable!("projection kind follows the term kind")
            };
            let rxl = r1 * xl2;
            let rxr = r1 * xr2;
            let lxl = l1 * xl2;
            let lxr = l1 * xr2;
            let ryl = r2 * yl1;
            let lyl = l2 * yl1;
            let ryr = r2 * yr1;
            let lyr = l2 * yr1;
            let (k1a, k1b) = (l1.nrows(), r1.nrows());
            let (k2a, k2b) = (l2.nrows(), r2.nrows());
            let (map1, off1) = (&p.position_maps[*v1], p.layout.offsets[*v1]);
            let (map2, off2) = (&p.position_maps[*v2], p.layout.offsets[*v2]);
            let s = s1 * s2 * weight;
            for a in 0..k1a {
                for b in 0..k1b {
                    let i = off1 + map1[a * k1b + b];
                    for c in 0..k2a {
                        let (rxl_bc, lxl_ac, lyl_ca, lyr_cb) = (rxl[(b, c)], lxl[(a, c)], lyl[(c, a)], lyr[(c, b)]);
                        for e in 0..k2b {
                            let k = off2 + map2[c * k2b + e];
                            let v = rxl_bc * ryl[(e, a)]
                                + rxr[(b, e)] * lyl_ca
                                + lxl_ac * ryr[(e, b)]
                                + lxr[(a, e)] * lyr_cb;
                            acc[(i, k)] += s * v;
                        }
                    }
                }
            }
        }
        (AffineTerm::Congruence { .. }, AffineTerm::Scaled { var: v2, .. }) => {
            let Projected::Scaled { w } = p2 else { unreachable!("projection kind follows the term kind") };
            congruence_scaled(p, t1, w, p.layout.offsets[*v2], weight, acc);
        }
        (AffineTerm::Scaled { var: v1, .. }, AffineTerm::Congruence { .. }) => {
            let Projected::Scaled { w } = p1 else { unreachable!("projection kind follows the term kind") };
            congruence_scaled(p, t2, w, p.layout.offsets[*v1], weight, acc);
        }
        (AffineTerm::Scaled { var: v1, matrix: s1 }, AffineTerm::Scaled { var: v2, .. }) => {
            let Projected::Scaled { w } = p2 else { unreachable!("projection kind follows the term kind") };
            let v = s1.component_mul(&w.transpose()).sum();
            acc[(p.layout.offsets[*v1], p.layout.offsets[*v2])] += weight * v;
        }
    }
}

fn congruence_scaled(p: &DualProblem, t: &AffineTerm, w: &DMatrix<f64>, k: usize, weight: f64, acc: &mut DMatrix<f64>) {
    let AffineTerm::Congruence { var, scale, left, right } = t else { unreachable!("caller passes a congruence term") };
    let rw = right * w;
    let lw = left * w;
    let rwl = &rw * left.transpose();
    let lwr = &lw * right.transpose();
    let (ka, kb) = (left.nrows(), right.nrows());
    let (map, off) = (&p.position_maps[*var], p.layout.offsets[*var]);
    for a in 0..ka {
        for b in 0..kb {
            let i = off + map[a * kb + b];
            acc[(i, k)] += weight * scale * (rwl[(b, a)] + lwr[(a, b)]);
        }
    }
}

impl SchurAssembler for DenseSchur {
    fn assemble(&self, p: &DualProblem, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = p.layout.total;
        let mut out = DMatrix::<f64>::zeros(m, m);
        for (j, block) in p.blocks.iter().enumerate() {
            let coeffs = p.expanded_coefficients(j);
            let d = block.c.nrows();
            let xa: Vec<Option<DMatrix<f64>>> =
                coeffs.iter().map(|a| a.as_ref().map(|a| &x[j] * a)).collect();
            let ya: Vec<Option<DMatrix<f64>>> =
                coeffs.iter().map(|a| a.as_ref().map(|a| &zinv[j] * a)).collect();
            for i in 0..m {
                let Some(yai) = &ya[i] else { continue };
                for k in 0..m {
                    let Some(xak) = &xa[k] else { continue };
                    // tr(A_i X A_k Y) = tr((X A_k)(Y A_i))
                    let mut v = 0.0;
                    for r in 0..d {
                        for c in 0..d {
                            v += xak[(r, c)] * yai[(c, r)];
                        }
                    }
                    out[(i, k)] += v;
                }
            }
        }
        out
    }
}
