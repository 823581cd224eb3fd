use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Handle to a variable registered in an [`LmiProblem`](super::LmiProblem).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
}

impl MatrixVar {
    /// Number of free scalars.
    pub fn n_scalars(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

/// One variable-dependent summand of an [`AffineMatrixExpr`].
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Contributes `L op(V) R + (L op(V) R)'` where `op` is the identity or
    /// the transpose. `left` is `dim x rows(op(V))`, `right` is
    /// `cols(op(V)) x dim`, both already embedded in the full expression.
    Product {
        var: VarId,
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        transpose: bool,
    },
    /// Contributes `v * coef` for a scalar variable `v`; `coef` is symmetric.
    Scaled { var: VarId, coef: DMatrix<f64> },
}

impl Term {
    pub fn var(&self) -> VarId {
        match self {
            Term::Product { var, .. } | Term::Scaled { var, .. } => *var,
        }
    }

    /// Value of the summand with `value` substituted for the variable.
    pub fn evaluate(&self, value: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Term::Product {
                left,
                right,
                transpose,
                ..
            } => {
                let p = if *transpose {
                    left * value.transpose() * right
                } else {
                    left * value * right
                };
                let pt = p.transpose();
                p + pt
            }
            Term::Scaled { coef, .. } => coef * value[(0, 0)],
        }
    }
}

/// Symmetric matrix affine in the problem variables, with a block
/// partition used during assembly.
///
/// Every placement is mirrored: putting `M` at block `(i, j)` also puts
/// `M'` at `(j, i)`. On a diagonal block a [`Term::Product`] therefore adds
/// `L V R + (L V R)'`; constants and scaled terms on diagonal blocks are
/// added once and must be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpr {
    blocks: Vec<usize>,
    offsets: Vec<usize>,
    constant: DMatrix<f64>,
    terms: Vec<Term>,
}

impl AffineMatrixExpr {
    pub fn new(block_sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(block_sizes.len());
        let mut acc = 0;
        for b in block_sizes {
            offsets.push(acc);
            acc += b;
        }
        Self {
            blocks: block_sizes.to_vec(),
            offsets,
            constant: DMatrix::zeros(acc, acc),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.blocks
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    fn block_range(&self, b: usize) -> (usize, usize) {
        assert!(
            b < self.blocks.len(),
            "block {b} out of range ({} blocks)",
            self.blocks.len()
        );
        (self.offsets[b], self.blocks[b])
    }

    /// Adds `m` at block `(bi, bj)` (and `m'` at `(bj, bi)`).
    pub fn add_constant(&mut self, bi: usize, bj: usize, m: &DMatrix<f64>) -> &mut Self {
        let (ri, ni) = self.block_range(bi);
        let (cj, nj) = self.block_range(bj);
        assert_eq!(m.shape(), (ni, nj), "constant block ({bi},{bj}) shape");
        if bi == bj {
            let sym = (m + m.transpose()) * 0.5;
            let mut v = self.constant.view_mut((ri, cj), (ni, nj));
            v += sym;
        } else {
            {
                let mut v = self.constant.view_mut((ri, cj), (ni, nj));
                v += m;
            }
            let mut v = self.constant.view_mut((cj, ri), (nj, ni));
            v += m.transpose();
        }
        self
    }

    /// Adds `c * I` on diagonal block `b`.
    pub fn add_identity(&mut self, b: usize, c: f64) -> &mut Self {
        let (_, n) = self.block_range(b);
        self.add_constant(b, b, &(DMatrix::identity(n, n) * c))
    }

    /// Adds `left * op(var) * right` at block `(bi, bj)`, mirrored.
    ///
    /// `shape` is the shape of the variable.
    pub fn add_product(
        &mut self,
        bi: usize,
        bj: usize,
        left: &DMatrix<f64>,
        var: VarId,
        shape: (usize, usize),
        right: &DMatrix<f64>,
        transpose: bool,
    ) -> &mut Self {
        let (ri, ni) = self.block_range(bi);
        let (cj, nj) = self.block_range(bj);
        let (vr, vc) = if transpose { (shape.1, shape.0) } else { shape };
        assert_eq!(left.shape(), (ni, vr), "left factor shape at ({bi},{bj})");
        assert_eq!(right.shape(), (vc, nj), "right factor shape at ({bi},{bj})");
        let d = self.dim();
        let mut lg = DMatrix::zeros(d, vr);
        lg.view_mut((ri, 0), (ni, vr)).copy_from(left);
        let mut rg = DMatrix::zeros(vc, d);
        rg.view_mut((0, cj), (vc, nj)).copy_from(right);
        self.terms.push(Term::Product {
            var,
            left: lg,
            right: rg,
            transpose,
        });
        self
    }

    /// Adds `coef * V` on diagonal block `b` for a symmetric variable `V`.
    pub fn add_symmetric_var(
        &mut self,
        b: usize,
        coef: f64,
        var: VarId,
        n: usize,
    ) -> &mut Self {
        let (_, nb) = self.block_range(b);
        assert_eq!(nb, n, "symmetric variable size on block {b}");
        let half = DMatrix::identity(n, n) * (0.5 * coef);
        self.add_product(b, b, &half, var, (n, n), &DMatrix::identity(n, n), false)
    }

    /// Adds `v * coef` at block `(bi, bj)` for a scalar variable `v`, mirrored.
    pub fn add_scaled(
        &mut self,
        bi: usize,
        bj: usize,
        var: VarId,
        coef: &DMatrix<f64>,
    ) -> &mut Self {
        let (ri, ni) = self.block_range(bi);
        let (cj, nj) = self.block_range(bj);
        assert_eq!(coef.shape(), (ni, nj), "scaled block ({bi},{bj}) shape");
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        if bi == bj {
            g.view_mut((ri, cj), (ni, nj))
                .copy_from(&((coef + coef.transpose()) * 0.5));
        } else {
            g.view_mut((ri, cj), (ni, nj)).copy_from(coef);
            g.view_mut((cj, ri), (nj, ni)).copy_from(&coef.transpose());
        }
        self.terms.push(Term::Scaled { var, coef: g });
        self
    }

    pub(crate) fn constant_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.constant
    }

    pub(crate) fn push_term(&mut self, t: Term) {
        self.terms.push(t);
    }

    pub(crate) fn retain_terms(&mut self, keep: impl FnMut(&Term) -> bool) {
        self.terms.retain(keep);
    }

    pub(crate) fn remap_vars(&mut self, map: impl Fn(VarId) -> VarId) {
        for t in &mut self.terms {
            match t {
                Term::Product { var, .. } | Term::Scaled { var, .. } => *var = map(*var),
            }
        }
    }

    /// Numeric value for a full variable assignment indexed by [`VarId`].
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            out += t.evaluate(&values[t.var().0]);
        }
        out
    }
}
