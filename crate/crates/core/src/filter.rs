use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lti::LtiError;
use crate::serde_mat::fix_empty;

/// LTI input filter `(A_f, B_f, C_f, D_f)` with channel selection.
///
/// `u_p = G_c u_c + G_f u_f`: channels with a 1 on the diagonal of
/// `gamma_f` go through the filter, the rest bypass it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FilterRepr", into = "FilterRepr")]
pub struct FilterRealization {
    a_f: DMatrix<f64>,
    b_f: DMatrix<f64>,
    c_f: DMatrix<f64>,
    d_f: DMatrix<f64>,
    gamma_f: DMatrix<f64>,
    gamma_c: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct FilterRepr {
    #[serde(with = "crate::serde_mat::matrix")]
    a_f: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    b_f: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    c_f: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    d_f: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    gamma_f: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    gamma_c: DMatrix<f64>,
}

impl TryFrom<FilterRepr> for FilterRealization {
    type Error = LtiError;

    fn try_from(r: FilterRepr) -> Result<Self, LtiError> {
        let nf = r.a_f.nrows();
        let m = r.d_f.nrows();
        Self::new(
            fix_empty(r.a_f, nf, nf),
            fix_empty(r.b_f, nf, m),
            fix_empty(r.c_f, m, nf),
            r.d_f,
            r.gamma_f,
            r.gamma_c,
        )
    }
}

impl From<FilterRealization> for FilterRepr {
    fn from(f: FilterRealization) -> Self {
        Self {
            a_f: f.a_f,
            b_f: f.b_f,
            c_f: f.c_f,
            d_f: f.d_f,
            gamma_f: f.gamma_f,
            gamma_c: f.gamma_c,
        }
    }
}

impl FilterRealization {
    pub fn new(
        a_f: DMatrix<f64>,
        b_f: DMatrix<f64>,
        c_f: DMatrix<f64>,
        d_f: DMatrix<f64>,
        gamma_f: DMatrix<f64>,
        gamma_c: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let nf = a_f.nrows();
        let m = d_f.nrows();
        let dims_ok = a_f.ncols() == nf
            && b_f.shape() == (nf, m)
            && c_f.shape() == (m, nf)
            && d_f.shape() == (m, m)
            && gamma_f.shape() == (m, m)
            && gamma_c.shape() == (m, m);
        if !dims_ok {
            return Err(LtiError::Dimension(format!(
                "filter matrices inconsistent: A_f {:?}, B_f {:?}, C_f {:?}, D_f {:?}, G_f {:?}, G_c {:?}",
                a_f.shape(),
                b_f.shape(),
                c_f.shape(),
                d_f.shape(),
                gamma_f.shape(),
                gamma_c.shape()
            )));
        }
        for (m, name) in [
            (&a_f, "A_f"),
            (&b_f, "B_f"),
            (&c_f, "C_f"),
            (&d_f, "D_f"),
        ] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(LtiError::NonFinite(name));
            }
        }
        let f = Self {
            a_f,
            b_f,
            c_f,
            d_f,
            gamma_f,
            gamma_c,
        };
        f.check_selection()?;
        Ok(f)
    }

    /// No filter state, `D_f = I`, every channel routed through it.
    pub fn passthrough(m: usize) -> Self {
        Self {
            a_f: DMatrix::zeros(0, 0),
            b_f: DMatrix::zeros(0, m),
            c_f: DMatrix::zeros(m, 0),
            d_f: DMatrix::identity(m, m),
            gamma_f: DMatrix::identity(m, m),
            gamma_c: DMatrix::zeros(m, m),
        }
    }

    /// Diagonal selection matrices from a 0/1 mask of filtered channels.
    pub fn selection_from_mask(filtered: &[bool]) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = filtered.len();
        let mut gf = DMatrix::zeros(m, m);
        let mut gc = DMatrix::zeros(m, m);
        for (i, f) in filtered.iter().enumerate() {
            if *f {
                gf[(i, i)] = 1.0;
            } else {
                gc[(i, i)] = 1.0;
            }
        }
        (gf, gc)
    }

    /// Diagonal 0/1 matrices summing to the identity.
    pub fn check_selection(&self) -> Result<(), LtiError> {
        check_selection(&self.gamma_f, &self.gamma_c)
    }

    pub fn order(&self) -> usize {
        self.a_f.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.d_f.nrows()
    }

    pub fn a_f(&self) -> &DMatrix<f64> {
        &self.a_f
    }

    pub fn b_f(&self) -> &DMatrix<f64> {
        &self.b_f
    }

    pub fn c_f(&self) -> &DMatrix<f64> {
        &self.c_f
    }

    pub fn d_f(&self) -> &DMatrix<f64> {
        &self.d_f
    }

    pub fn gamma_f(&self) -> &DMatrix<f64> {
        &self.gamma_f
    }

    pub fn gamma_c(&self) -> &DMatrix<f64> {
        &self.gamma_c
    }
}

pub(crate) fn check_selection(
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
) -> Result<(), LtiError> {
    if gamma_f.shape() != gamma_c.shape() || !gamma_f.is_square() {
        return Err(LtiError::Dimension(format!(
            "selection matrices {:?} and {:?}",
            gamma_f.shape(),
            gamma_c.shape()
        )));
    }
    let m = gamma_f.nrows();
    for i in 0..m {
        for j in 0..m {
            let (f, c) = (gamma_f[(i, j)], gamma_c[(i, j)]);
            let sum = f + c;
            let want = if i == j { 1.0 } else { 0.0 };
            let binary = (f == 0.0 || f == 1.0) && (c == 0.0 || c == 1.0);
            if sum != want || !binary || (i != j && (f != 0.0 || c != 0.0)) {
                return Err(LtiError::Selection { row: i, col: j, sum });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_must_partition_identity() {
        let gf = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        let gc = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        let err = check_selection(&gf, &gc).unwrap_err();
        assert!(matches!(err, LtiError::Selection { row: 0, col: 0, .. }));
        let (gf, gc) = FilterRealization::selection_from_mask(&[true, false]);
        assert!(check_selection(&gf, &gc).is_ok());
    }

    #[test]
    fn fractional_selection_rejected() {
        let gf = DMatrix::identity(2, 2) * 0.5;
        let gc = DMatrix::identity(2, 2) * 0.5;
        assert!(check_selection(&gf, &gc).is_err());
    }

    #[test]
    fn passthrough_shape() {
        let f = FilterRealization::passthrough(3);
        assert_eq!(f.order(), 0);
        assert_eq!(f.n_channels(), 3);
        assert!(f.check_selection().is_ok());
    }
}
