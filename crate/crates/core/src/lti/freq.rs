use nalgebra::{Complex, DMatrix};

use super::{LtiError, StateSpaceModel};

pub(crate) fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// `G(jw) = C (jwI - A)^{-1} B + D` at a single frequency.
pub(crate) fn response_at(
    sys: &StateSpaceModel,
    omega: f64,
) -> Result<DMatrix<Complex<f64>>, LtiError> {
    let n = sys.n_states();
    let d = complexify(sys.d());
    if n == 0 {
        return Ok(d);
    }
    let mut resolvent = complexify(sys.a()).map(|v| -v);
    for i in 0..n {
        resolvent[(i, i)] += Complex::new(0.0, omega);
    }
    let lu = resolvent.lu();
    let x = lu
        .solve(&complexify(sys.b()))
        .ok_or(LtiError::SingularResolvent { omega })?;
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(LtiError::SingularResolvent { omega });
    }
    Ok(complexify(sys.c()) * x + d)
}

pub fn frequency_response(
    sys: &StateSpaceModel,
    omegas: &[f64],
) -> Result<Vec<DMatrix<Complex<f64>>>, LtiError> {
    omegas.iter().map(|w| response_at(sys, *w)).collect()
}

/// Largest singular value of `G(jw)`.
pub(crate) fn gain_at(sys: &StateSpaceModel, omega: f64) -> Result<f64, LtiError> {
    let g = response_at(sys, omega)?;
    if g.is_empty() {
        return Ok(0.0);
    }
    Ok(g.singular_values().max())
}

/// `-C A^{-1} B + D`.
pub fn dc_gain(sys: &StateSpaceModel) -> Result<DMatrix<f64>, LtiError> {
    if sys.n_states() == 0 {
        return Ok(sys.d().clone());
    }
    let x = sys
        .a()
        .clone()
        .lu()
        .solve(sys.b())
        .ok_or(LtiError::SingularResolvent { omega: 0.0 })?;
    Ok(sys.d() - sys.c() * x)
}

/// `count` log-spaced samples from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use approx::assert_relative_eq;

    #[test]
    fn plant_dc_gains() {
        let g = frequency_response(&demo::plant(), &[0.0]).unwrap();
        // u1 -> x2: 100 / 150
        assert_relative_eq!(g[0][(1, 0)].re, 2.0 / 3.0, epsilon = 1e-12);
        // u1 -> x1: (10 x2 + 10 x3) / 10 with x3 = 0
        assert_relative_eq!(g[0][(0, 0)].re, 2.0 / 3.0, epsilon = 1e-12);
        assert!(g[0][(2, 0)].norm() < 1e-14);
    }

    #[test]
    fn high_frequency_limit_is_feedthrough() {
        let sys = StateSpaceModel::new(
            demo::plant_a(),
            demo::plant_b(),
            DMatrix::identity(3, 3),
            DMatrix::from_element(3, 2, 0.3),
        )
        .unwrap();
        let g = frequency_response(&sys, &[1e12]).unwrap();
        for v in g[0].iter() {
            assert!((v.re - 0.3).abs() < 1e-8 && v.im.abs() < 1e-8);
        }
    }

    #[test]
    fn zero_frequency_matches_dc_gain() {
        let plant = demo::plant();
        let g = frequency_response(&plant, &[0.0]).unwrap();
        let dc = dc_gain(&plant).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((g[0][(i, j)].re - dc[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_resolvent_reports_frequency() {
        let sys = StateSpaceModel::with_state_output(
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let err = frequency_response(&sys, &[1.0, 2.0]).unwrap_err();
        assert_eq!(err, LtiError::SingularResolvent { omega: 2.0 });
    }

    #[test]
    fn log_space_endpoints() {
        let w = log_space(1e-1, 1e4, 400);
        assert_eq!(w.len(), 400);
        assert_relative_eq!(w[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(w[399], 1e4, max_relative = 1e-14);
    }
}
