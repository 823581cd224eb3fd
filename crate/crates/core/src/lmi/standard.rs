//! Lowering of an [`LmiProblem`] to the vectorized conic form
//! `min c'x  s.t.  b_k - A_k x in K_k`.
//!
//! Symmetric matrices are vectorized by their upper triangle, column by
//! column, with off-diagonal entries scaled by `sqrt(2)` so that the
//! Frobenius inner product is preserved.

use std::f64::consts::SQRT_2;
use std::io::{self, Write};

use nalgebra::DMatrix;

use super::expr::VarId;
use super::problem::{LmiProblem, Sense, VarValues};

/// Position of scalar `(i, j)` (with `i <= j`) in the vectorized triangle.
pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * (n + 1) / 2];
    for j in 0..n {
        for i in 0..=j {
            out[svec_index(i, j)] = if i == j { m[(i, j)] } else { SQRT_2 * m[(i, j)] };
        }
    }
    out
}

/// Inverse of [`svec`]. Panics if `v` is not a triangular number long.
pub fn smat(v: &[f64]) -> DMatrix<f64> {
    let n = (((8 * v.len() + 1) as f64).sqrt() as usize - 1) / 2;
    assert_eq!(n * (n + 1) / 2, v.len(), "length {} is not triangular", v.len());
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / SQRT_2;
                m[(j, i)] = x / SQRT_2;
            }
        }
    }
    m
}

/// Which matrix entry a scalar decision variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarSlot {
    pub var: VarId,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Nonnegative,
    /// Semidefinite cone of the given matrix side.
    Psd(usize),
}

impl ConeKind {
    pub fn len(self) -> usize {
        match self {
            ConeKind::Nonnegative => 1,
            ConeKind::Psd(d) => d * (d + 1) / 2,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// `b - A x` must lie in the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub name: String,
    pub kind: ConeKind,
    /// `(row within block, scalar variable, value)`.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    /// Minimization objective; a maximization problem is negated.
    pub c: Vec<f64>,
    /// `+1` for minimize, `-1` for maximize: original objective = sign * c'x.
    pub sign: f64,
    pub blocks: Vec<ConeBlock>,
    pub slots: Vec<ScalarSlot>,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.slots.len()
    }

    pub fn cone_dims(&self) -> Vec<ConeKind> {
        self.blocks.iter().map(|b| b.kind).collect()
    }

    /// Objective of the original problem at `x`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.sign * self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Rebuilds named matrices from a scalar solution vector.
    pub fn unpack(&self, problem: &LmiProblem, x: &[f64]) -> VarValues {
        let mut mats: Vec<DMatrix<f64>> = problem
            .vars()
            .iter()
            .map(|v| DMatrix::zeros(v.rows, v.cols))
            .collect();
        for (slot, val) in self.slots.iter().zip(x) {
            let info = problem.var_info(slot.var);
            let m = &mut mats[slot.var.0];
            if info.symmetric && slot.row != slot.col {
                m[(slot.row, slot.col)] = val / SQRT_2;
                m[(slot.col, slot.row)] = val / SQRT_2;
            } else {
                m[(slot.row, slot.col)] = *val;
            }
        }
        problem
            .vars()
            .iter()
            .zip(mats)
            .map(|(v, m)| (v.name.clone(), m))
            .collect()
    }

    /// Writes the program as text: objective coefficients, then per block
    /// the `i j value` triplets of `A` and the `i value` entries of `b`
    /// (all indices 0-based).
    pub fn write_triplets(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "# objective n_vars={} sign={}", self.n_vars(), self.sign)?;
        for (j, c) in self.c.iter().enumerate() {
            if *c != 0.0 {
                writeln!(w, "{j} {c:.17e}")?;
            }
        }
        for (k, blk) in self.blocks.iter().enumerate() {
            let kind = match blk.kind {
                ConeKind::Nonnegative => "nonneg 1".to_string(),
                ConeKind::Psd(d) => format!("psd {d}"),
            };
            writeln!(w, "# block {k} {} {kind}", blk.name)?;
            for (i, j, v) in &blk.a {
                writeln!(w, "{i} {j} {v:.17e}")?;
            }
            writeln!(w, "# rhs {k}")?;
            for (i, v) in blk.b.iter().enumerate() {
                if *v != 0.0 {
                    writeln!(w, "{i} {v:.17e}")?;
                }
            }
        }
        Ok(())
    }
}

fn basis(rows: usize, cols: usize, symmetric: bool, i: usize, j: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(rows, cols);
    if symmetric && i != j {
        b[(i, j)] = 1.0 / SQRT_2;
        b[(j, i)] = 1.0 / SQRT_2;
    } else {
        b[(i, j)] = 1.0;
    }
    b
}

pub fn to_standard_form(p: &LmiProblem) -> ConicProgram {
    let mut slots = Vec::new();
    let mut first_slot = Vec::with_capacity(p.vars().len());
    for (k, v) in p.vars().iter().enumerate() {
        first_slot.push(slots.len());
        if v.symmetric {
            for j in 0..v.cols {
                for i in 0..=j {
                    slots.push(ScalarSlot {
                        var: VarId(k),
                        row: i,
                        col: j,
                    });
                }
            }
        } else {
            for j in 0..v.cols {
                for i in 0..v.rows {
                    slots.push(ScalarSlot {
                        var: VarId(k),
                        row: i,
                        col: j,
                    });
                }
            }
        }
    }
    let slot_range = |var: VarId| {
        let start = first_slot[var.0];
        start..start + p.var_info(var).n_scalars()
    };

    let sign = match p.objective().sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut c = vec![0.0; slots.len()];
    for (var, coef) in &p.objective().terms {
        let info = p.var_info(*var);
        for s in slot_range(*var) {
            let sl = slots[s];
            let bm = basis(info.rows, info.cols, info.symmetric, sl.row, sl.col);
            c[s] += sign * coef.component_mul(&bm).sum();
        }
    }

    let mut blocks = Vec::with_capacity(p.constraints().len());
    for con in p.constraints() {
        let d = con.expr.dim();
        let mut f0 = con.expr.constant().clone();
        for i in 0..d {
            f0[(i, i)] -= con.margin;
        }
        let kind = if d == 1 {
            ConeKind::Nonnegative
        } else {
            ConeKind::Psd(d)
        };
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut col_ids: Vec<usize> = Vec::new();
        for t in con.expr.terms() {
            let info = p.var_info(t.var());
            for s in slot_range(t.var()) {
                let sl = slots[s];
                let fk = t.evaluate(&basis(info.rows, info.cols, info.symmetric, sl.row, sl.col));
                let v = svec(&fk);
                match col_ids.iter().position(|c| *c == s) {
                    Some(pos) => {
                        for (acc, x) in cols[pos].iter_mut().zip(&v) {
                            *acc += x;
                        }
                    }
                    None => {
                        col_ids.push(s);
                        cols.push(v);
                    }
                }
            }
        }
        let mut a = Vec::new();
        let mut order: Vec<usize> = (0..col_ids.len()).collect();
        order.sort_by_key(|k| col_ids[*k]);
        for k in order {
            for (i, v) in cols[k].iter().enumerate() {
                if *v != 0.0 {
                    a.push((i, col_ids[k], -v));
                }
            }
        }
        blocks.push(ConeBlock {
            name: con.name.clone(),
            kind,
            a,
            b: svec(&f0),
        });
    }
    ConicProgram {
        c,
        sign,
        blocks,
        slots,
    }
}
