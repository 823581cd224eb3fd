use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expr::{AffineMatrixExpr, MatrixVar, Term, VarId};
use super::LmiError;

/// Solved or candidate variable values keyed by name.
pub type VarValues = BTreeMap<String, DMatrix<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemMode {
    Analysis,
    Synthesis,
    Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub mode: ProblemMode,
    pub stealthy: bool,
}

/// `expr >= margin * I` in the semidefinite order.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub name: String,
    pub expr: AffineMatrixExpr,
    pub margin: f64,
}

/// Linear objective `sum_k <C_k, V_k>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: Sense,
    pub terms: Vec<(VarId, DMatrix<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    vars: Vec<MatrixVar>,
    constraints: Vec<PsdConstraint>,
    objective: Objective,
    meta: ProblemMeta,
}

impl LmiProblem {
    pub fn new(meta: ProblemMeta) -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Objective {
                sense: Sense::Minimize,
                terms: Vec::new(),
            },
            meta,
        }
    }

    pub fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    pub fn vars(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn constraints(&self) -> &[PsdConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn var_info(&self, id: VarId) -> &MatrixVar {
        &self.vars[id.0]
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn add_var(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        symmetric: bool,
    ) -> Result<VarId, LmiError> {
        if self.var(name).is_some() {
            return Err(LmiError::DuplicateVariable(name.to_string()));
        }
        if symmetric && rows != cols {
            return Err(LmiError::Dimension(format!(
                "symmetric variable {name} must be square, got {rows}x{cols}"
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(LmiError::Dimension(format!("variable {name} is empty")));
        }
        self.vars.push(MatrixVar {
            name: name.to_string(),
            rows,
            cols,
            symmetric,
        });
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> Result<VarId, LmiError> {
        self.add_var(name, n, n, true)
    }

    pub fn add_full(&mut self, name: &str, rows: usize, cols: usize) -> Result<VarId, LmiError> {
        self.add_var(name, rows, cols, false)
    }

    pub fn add_scalar(&mut self, name: &str) -> Result<VarId, LmiError> {
        self.add_var(name, 1, 1, true)
    }

    fn check_term(&self, t: &Term, dim: usize) -> Result<(), LmiError> {
        let v = self
            .vars
            .get(t.var().0)
            .ok_or_else(|| LmiError::UnknownVariable(format!("#{}", t.var().0)))?;
        let ok = match t {
            Term::Product {
                left,
                right,
                transpose,
                ..
            } => {
                let (r, c) = if *transpose {
                    (v.cols, v.rows)
                } else {
                    (v.rows, v.cols)
                };
                left.shape() == (dim, r) && right.shape() == (c, dim)
            }
            Term::Scaled { coef, .. } => v.is_scalar() && coef.shape() == (dim, dim),
        };
        if ok {
            Ok(())
        } else {
            Err(LmiError::Dimension(format!(
                "term on variable {} does not fit a {dim}x{dim} expression",
                v.name
            )))
        }
    }

    pub fn add_constraint(
        &mut self,
        name: &str,
        expr: AffineMatrixExpr,
        margin: f64,
    ) -> Result<(), LmiError> {
        for t in expr.terms() {
            self.check_term(t, expr.dim())?;
        }
        self.constraints.push(PsdConstraint {
            name: name.to_string(),
            expr,
            margin,
        });
        Ok(())
    }

    /// `v >= 0` for a scalar variable.
    pub fn add_nonnegative(&mut self, var: VarId) -> Result<(), LmiError> {
        let name = format!("{}>=0", self.vars[var.0].name);
        let mut e = AffineMatrixExpr::new(&[1]);
        e.add_scaled(0, 0, var, &DMatrix::identity(1, 1));
        self.add_constraint(&name, e, 0.0)
    }

    pub fn set_objective(
        &mut self,
        sense: Sense,
        terms: Vec<(VarId, DMatrix<f64>)>,
    ) -> Result<(), LmiError> {
        for (v, c) in &terms {
            let info = self
                .vars
                .get(v.0)
                .ok_or_else(|| LmiError::UnknownVariable(format!("#{}", v.0)))?;
            if c.shape() != (info.rows, info.cols) {
                return Err(LmiError::Dimension(format!(
                    "objective coefficient for {} is {:?}",
                    info.name,
                    c.shape()
                )));
            }
        }
        self.objective = Objective { sense, terms };
        Ok(())
    }

    /// `sense trace(V)`.
    pub fn set_trace_objective(&mut self, sense: Sense, var: VarId) -> Result<(), LmiError> {
        let v = &self.vars[var.0];
        let n = v.rows;
        self.set_objective(sense, vec![(var, DMatrix::identity(n, n))])
    }

    fn ordered_values(&self, values: &VarValues) -> Result<Vec<DMatrix<f64>>, LmiError> {
        self.vars
            .iter()
            .map(|v| {
                let m = values
                    .get(&v.name)
                    .ok_or_else(|| LmiError::UnknownVariable(v.name.clone()))?;
                if m.shape() != (v.rows, v.cols) {
                    return Err(LmiError::Dimension(format!(
                        "value for {} is {:?}, expected ({}, {})",
                        v.name,
                        m.shape(),
                        v.rows,
                        v.cols
                    )));
                }
                Ok(m.clone())
            })
            .collect()
    }

    /// Each constraint matrix minus its margin, at the given assignment.
    pub fn evaluate_constraints(
        &self,
        values: &VarValues,
    ) -> Result<Vec<(String, DMatrix<f64>)>, LmiError> {
        let vals = self.ordered_values(values)?;
        Ok(self
            .constraints
            .iter()
            .map(|c| {
                let mut m = c.expr.evaluate(&vals);
                for i in 0..m.nrows() {
                    m[(i, i)] -= c.margin;
                }
                (c.name.clone(), m)
            })
            .collect())
    }

    /// Smallest eigenvalue of each margin-shifted constraint matrix.
    pub fn constraint_min_eigenvalues(
        &self,
        values: &VarValues,
    ) -> Result<Vec<(String, f64)>, LmiError> {
        Ok(self
            .evaluate_constraints(values)?
            .into_iter()
            .map(|(n, m)| (n, min_eigenvalue(&m)))
            .collect())
    }

    pub fn objective_value(&self, values: &VarValues) -> Result<f64, LmiError> {
        let vals = self.ordered_values(values)?;
        Ok(self
            .objective
            .terms
            .iter()
            .map(|(v, c)| c.component_mul(&vals[v.0]).sum())
            .sum())
    }

    /// Substitutes a numeric value for a variable and removes it.
    ///
    /// Constraints left without any variable are checked and dropped; a
    /// violated one is reported as [`LmiError::FixedInfeasible`].
    pub fn fix_variable(&self, name: &str, value: &DMatrix<f64>) -> Result<LmiProblem, LmiError> {
        let id = self
            .var(name)
            .ok_or_else(|| LmiError::UnknownVariable(name.to_string()))?;
        let info = &self.vars[id.0];
        if value.shape() != (info.rows, info.cols) {
            return Err(LmiError::Dimension(format!(
                "value for {name} is {:?}, expected ({}, {})",
                value.shape(),
                info.rows,
                info.cols
            )));
        }
        if info.symmetric && (value - value.transpose()).amax() > 1e-12 * value.amax().max(1.0) {
            return Err(LmiError::Dimension(format!("value for {name} is not symmetric")));
        }
        let remap = |v: VarId| {
            if v.0 > id.0 {
                VarId(v.0 - 1)
            } else {
                v
            }
        };
        let mut out = LmiProblem::new(self.meta.clone());
        out.vars = self
            .vars
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id.0)
            .map(|(_, v)| v.clone())
            .collect();
        for c in &self.constraints {
            let mut expr = c.expr.clone();
            let mut fixed_part = DMatrix::zeros(expr.dim(), expr.dim());
            for t in expr.terms().iter().filter(|t| t.var() == id) {
                fixed_part += t.evaluate(value);
            }
            *expr.constant_mut() += fixed_part;
            expr.retain_terms(|t| t.var() != id);
            expr.remap_vars(remap);
            let touched_other = expr.terms().iter().next().is_some();
            if !touched_other {
                let mut m = expr.constant().clone();
                for i in 0..m.nrows() {
                    m[(i, i)] -= c.margin;
                }
                let lo = min_eigenvalue(&m);
                if lo < -1e-12 * m.amax().max(1.0) {
                    return Err(LmiError::FixedInfeasible {
                        constraint: c.name.clone(),
                        min_eigenvalue: lo,
                    });
                }
                continue;
            }
            out.constraints.push(PsdConstraint {
                name: c.name.clone(),
                expr,
                margin: c.margin,
            });
        }
        out.objective = Objective {
            sense: self.objective.sense,
            terms: self
                .objective
                .terms
                .iter()
                .filter(|(v, _)| *v != id)
                .map(|(v, c)| (remap(*v), c.clone()))
                .collect(),
        };
        Ok(out)
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ProblemMeta {
        ProblemMeta {
            mode: ProblemMode::Analysis,
            stealthy: false,
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = LmiProblem::new(meta());
        p.add_symmetric("Q", 2).unwrap();
        assert!(matches!(p.add_scalar("Q"), Err(LmiError::DuplicateVariable(_))));
        assert!(p.add_var("Z", 2, 3, true).is_err());
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut p = LmiProblem::new(meta());
        let mut e = AffineMatrixExpr::new(&[1]);
        e.add_scaled(0, 0, VarId(3), &DMatrix::identity(1, 1));
        assert!(matches!(p.add_constraint("c", e, 0.0), Err(LmiError::UnknownVariable(_))));
    }

    #[test]
    fn fixing_moves_terms_into_constant() {
        let mut p = LmiProblem::new(meta());
        let q = p.add_symmetric("Q", 2).unwrap();
        let t = p.add_scalar("t").unwrap();
        let mut e = AffineMatrixExpr::new(&[2]);
        e.add_symmetric_var(0, 1.0, q, 2);
        e.add_scaled(0, 0, t, &DMatrix::identity(2, 2));
        p.add_constraint("c", e, 0.0).unwrap();
        p.add_nonnegative(t).unwrap();
        let fixed = p.fix_variable("t", &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(fixed.vars().len(), 1);
        assert_eq!(fixed.constraints().len(), 1);
        assert_eq!(fixed.constraints()[0].expr.constant(), &(DMatrix::identity(2, 2) * 2.0));
        let err = p.fix_variable("t", &DMatrix::from_element(1, 1, -1.0)).unwrap_err();
        assert!(matches!(err, LmiError::FixedInfeasible { .. }));
    }
}
