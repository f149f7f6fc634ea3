//! Block-structured assembly of one symmetric affine constraint.

use nalgebra::DMatrix;

use crate::sdp::AffineTerm;

use super::instance::{LmiConstraint, Sense};

/// Accumulates `constant + Σ terms` over a fixed block partition.
///
/// Every placement at block `(p, q)` also fills the mirrored block, so the
/// result is symmetric by construction. Variables only ever enter through
/// a constant left factor and a constant right factor, which keeps the map
/// affine.
pub struct BlockBuilder {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    order: usize,
    constant: DMatrix<f64>,
    terms: Vec<AffineTerm>,
}

impl BlockBuilder {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut order = 0;
        for s in sizes {
            offsets.push(order);
            order += s;
        }
        Self { sizes: sizes.to_vec(), offsets, order, constant: DMatrix::zeros(order, order), terms: Vec::new() }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    fn embed(&self, block: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.ncols(), self.sizes[block], "factor width must match block {block}");
        let mut out = DMatrix::zeros(m.nrows(), self.order);
        out.view_mut((0, self.offsets[block]), (m.nrows(), m.ncols())).copy_from(m);
        out
    }

    /// Constant `m` at block `(p, q)` (and `mᵀ` at `(q, p)`); diagonal
    /// placements are symmetrised.
    pub fn constant(&mut self, p: usize, q: usize, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.sizes[p], self.sizes[q]), "constant shape at block ({p},{q})");
        let (op, oq) = (self.offsets[p], self.offsets[q]);
        if p == q {
            let sym = (m + m.transpose()) * 0.5;
            let mut v = self.constant.view_mut((op, op), (m.nrows(), m.ncols()));
            v += sym;
        } else {
            {
                let mut v = self.constant.view_mut((op, oq), (m.nrows(), m.ncols()));
                v += m;
            }
            let mut v = self.constant.view_mut((oq, op), (m.ncols(), m.nrows()));
            v += m.transpose();
        }
    }

    pub fn constant_scalar(&mut self, p: usize, q: usize, value: f64) {
        self.constant(p, q, &DMatrix::from_element(self.sizes[p], self.sizes[q], value));
    }

    /// `s·aᵀVb` at block `(p, q)`, for a matrix variable `V`. On the
    /// diagonal this contributes `s(aᵀVb + bᵀVᵀa)`.
    pub fn var(&mut self, var: usize, scale: f64, p: usize, a: &DMatrix<f64>, q: usize, b: &DMatrix<f64>) {
        let left = self.embed(p, a);
        let right = self.embed(q, b) * scale;
        self.push_congruence(var, left, right);
    }

    /// `s·V` on diagonal block `p` (square `V` of the block's size).
    pub fn var_diag(&mut self, var: usize, scale: f64, p: usize) {
        let eye = DMatrix::identity(self.sizes[p], self.sizes[p]);
        self.var(var, 0.5 * scale, p, &eye, p, &eye);
    }

    /// `s·V` at off-diagonal block `(p, q)` (both blocks of `V`'s size).
    pub fn var_identity(&mut self, var: usize, scale: f64, p: usize, q: usize) {
        let a = DMatrix::identity(self.sizes[p], self.sizes[p]);
        let b = DMatrix::identity(self.sizes[q], self.sizes[q]);
        if p == q {
            self.var(var, 0.5 * scale, p, &a, q, &b);
        } else {
            self.var(var, scale, p, &a, q, &b);
        }
    }

    /// `s·(ΛᵀVΛ)` with `Λ` spanning all blocks.
    pub fn var_quadratic(&mut self, var: usize, scale: f64, lambda: &DMatrix<f64>) {
        assert_eq!(lambda.ncols(), self.order);
        self.push_congruence(var, lambda.clone(), lambda * (0.5 * scale));
    }

    fn push_congruence(&mut self, var: usize, left: DMatrix<f64>, right: DMatrix<f64>) {
        for t in &mut self.terms {
            if let AffineTerm::Congruence { var: v, left: l, right: r, .. } = t {
                if *v == var && *l == left {
                    *r += &right;
                    return;
                }
            }
        }
        self.terms.push(AffineTerm::Congruence { var, scale: 1.0, left, right });
    }

    /// Scalar variable `v` times `m` at block `(p, q)` (mirrored).
    pub fn scalar(&mut self, var: usize, p: usize, q: usize, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.sizes[p], self.sizes[q]), "scalar coefficient shape at block ({p},{q})");
        let mut full = DMatrix::zeros(self.order, self.order);
        let (op, oq) = (self.offsets[p], self.offsets[q]);
        if p == q {
            full.view_mut((op, op), m.shape()).copy_from(&((m + m.transpose()) * 0.5));
        } else {
            full.view_mut((op, oq), m.shape()).copy_from(m);
            full.view_mut((oq, op), (m.ncols(), m.nrows())).copy_from(&m.transpose());
        }
        self.scalar_full(var, &full);
    }

    pub fn scalar_value(&mut self, var: usize, p: usize, q: usize, value: f64) {
        self.scalar(var, p, q, &DMatrix::from_element(self.sizes[p], self.sizes[q], value));
    }

    /// Scalar variable times a full symmetric matrix.
    pub fn scalar_full(&mut self, var: usize, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.order, self.order));
        for t in &mut self.terms {
            if let AffineTerm::Scaled { var: v, matrix } = t {
                if *v == var {
                    *matrix += m;
                    return;
                }
            }
        }
        self.terms.push(AffineTerm::Scaled { var, matrix: m.clone() });
    }

    /// Congruence `D(·)D` with `D = diag(1,…,s·I_block,…,1)`.
    pub fn rescale_block(&mut self, block: usize, s: f64) {
        let mut d = DMatrix::<f64>::identity(self.order, self.order);
        for i in 0..self.sizes[block] {
            let k = self.offsets[block] + i;
            d[(k, k)] = s;
        }
        self.constant = &d * &self.constant * &d;
        for t in &mut self.terms {
            match t {
                AffineTerm::Congruence { left, right, .. } => {
                    *left = &*left * &d;
                    *right = &*right * &d;
                }
                AffineTerm::Scaled { matrix, .. } => *matrix = &d * &*matrix * &d,
            }
        }
    }

    pub fn finish(self, name: impl Into<String>, sense: Sense) -> LmiConstraint {
        LmiConstraint { name: name.into(), sense, constant: self.constant, terms: self.terms }
    }
}
