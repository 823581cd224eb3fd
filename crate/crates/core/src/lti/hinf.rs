//! H∞ norm by bisection on the imaginary-axis eigenvalues of the
//! associated Hamiltonian matrix.
//!
//! For `gamma > sigma_max(D)` the Hamiltonian
//!
//! ```text
//! H = [ A + B R^-1 D' C          B R^-1 B'             ]
//!     [ -C' (I + D R^-1 D') C    -(A + B R^-1 D' C)'   ],  R = gamma^2 I - D'D
//! ```
//!
//! has an eigenvalue `jw` iff `gamma` is a singular value of `G(jw)`. The
//! lower bound is only ever raised to gains actually evaluated on the
//! imaginary axis, so spurious near-axis eigenvalues cannot inflate it.

use nalgebra::DMatrix;

use super::freq::gain_at;
use super::{is_hurwitz, LtiError, StateSpaceModel, DEFAULT_HURWITZ_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfOptions {
    /// Relative gap `(upper - lower) / lower` at which bisection stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HinfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Frequency (rad/s) at which `lower` was attained.
    pub peak_omega: f64,
    pub iterations: usize,
}

/// `||C (sI - A)^{-1} B + D||_inf` within relative tolerance `tol`.
pub fn hinf_norm(sys: &StateSpaceModel, tol: f64) -> Result<f64, LtiError> {
    hinf_norm_with(
        sys,
        HinfOptions {
            tol,
            ..HinfOptions::default()
        },
    )
    .map(|e| e.value)
}

pub fn hinf_norm_with(sys: &StateSpaceModel, opts: HinfOptions) -> Result<HinfEstimate, LtiError> {
    if !(opts.tol > 0.0) {
        return Err(LtiError::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let a = sys.a();
    if !is_hurwitz(a, DEFAULT_HURWITZ_TOL)? {
        return Err(LtiError::Unstable {
            abscissa: super::spectral_abscissa(a)?,
        });
    }
    let d_norm = if sys.d().is_empty() {
        0.0
    } else {
        sys.d().singular_values().max()
    };
    let mut lower = d_norm;
    let mut peak_omega = f64::INFINITY;
    let probe = |w: f64, lower: &mut f64, peak: &mut f64| -> Result<(), LtiError> {
        let g = gain_at(sys, w)?;
        if g > *lower {
            *lower = g;
            *peak = w;
        }
        Ok(())
    };

    let n = sys.n_states();
    let dynamic_part_zero = n == 0
        || sys.b().iter().all(|v| *v == 0.0)
        || sys.c().iter().all(|v| *v == 0.0);
    if dynamic_part_zero {
        return Ok(HinfEstimate {
            value: d_norm,
            lower: d_norm,
            upper: d_norm,
            peak_omega,
            iterations: 0,
        });
    }

    probe(0.0, &mut lower, &mut peak_omega)?;
    let eigs = a.complex_eigenvalues();
    for l in eigs.iter() {
        probe(l.norm(), &mut lower, &mut peak_omega)?;
        probe(l.im.abs(), &mut lower, &mut peak_omega)?;
    }
    if lower == 0.0 {
        let scale = eigs.iter().map(|l| l.norm()).fold(1e-3, f64::max);
        for k in 0..=40 {
            let w = scale * 10f64.powf(-4.0 + 8.0 * k as f64 / 40.0);
            probe(w, &mut lower, &mut peak_omega)?;
        }
        if lower == 0.0 {
            return Ok(HinfEstimate {
                value: 0.0,
                lower: 0.0,
                upper: 0.0,
                peak_omega: 0.0,
                iterations: 0,
            });
        }
    }

    let mut iterations = 0;
    let mut upper = lower * 2.0;
    loop {
        iterations += 1;
        if iterations > opts.max_iter {
            break;
        }
        match crossing(sys, upper, d_norm)? {
            Some((g, w)) => {
                if g > lower {
                    lower = g;
                    peak_omega = w;
                }
                upper = upper.max(lower) * 2.0;
            }
            None => break,
        }
    }

    while upper - lower > opts.tol * lower && iterations < opts.max_iter {
        iterations += 1;
        let gamma = 0.5 * (lower + upper);
        match crossing(sys, gamma, d_norm)? {
            Some((g, w)) => {
                if g > lower {
                    lower = g;
                    peak_omega = w;
                }
                if lower >= upper {
                    upper = lower;
                }
            }
            None => upper = gamma,
        }
    }
    Ok(HinfEstimate {
        value: 0.5 * (lower + upper),
        lower,
        upper,
        peak_omega,
        iterations,
    })
}

/// Returns the best gain found at candidate crossing frequencies when the
/// level `gamma` is exceeded somewhere on the imaginary axis.
fn crossing(
    sys: &StateSpaceModel,
    gamma: f64,
    d_norm: f64,
) -> Result<Option<(f64, f64)>, LtiError> {
    if gamma <= d_norm {
        return Ok(Some((d_norm, f64::INFINITY)));
    }
    let h = hamiltonian(sys, gamma);
    let scale = h.norm().max(1.0);
    let mut omegas: Vec<f64> = h
        .complex_eigenvalues()
        .iter()
        .filter(|l| l.re.abs() <= 1e-7 * scale.max(l.norm()))
        .map(|l| l.im.abs())
        .collect();
    if omegas.is_empty() {
        return Ok(None);
    }
    omegas.sort_by(|x, y| x.partial_cmp(y).unwrap());
    omegas.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * x.abs().max(1.0));
    let mut candidates = omegas.clone();
    for pair in omegas.windows(2) {
        candidates.push(0.5 * (pair[0] + pair[1]));
        candidates.push((pair[0] * pair[1]).sqrt());
    }
    let mut best = (0.0f64, 0.0f64);
    for w in candidates {
        let g = gain_at(sys, w)?;
        if g > best.0 {
            best = (g, w);
        }
    }
    if best.0 >= gamma * (1.0 - 1e-9) {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

fn hamiltonian(sys: &StateSpaceModel, gamma: f64) -> DMatrix<f64> {
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    let r = DMatrix::identity(m, m) * (gamma * gamma) - d.transpose() * d;
    let r_inv = r
        .cholesky()
        .expect("gamma above sigma_max(D) makes R positive definite")
        .inverse();
    let a_cl = a + b * &r_inv * d.transpose() * c;
    let top_right = b * &r_inv * b.transpose();
    let q = DMatrix::identity(p, p) + d * &r_inv * d.transpose();
    let bottom_left = -(c.transpose() * q * c);
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_cl);
    h.view_mut((0, n), (n, n)).copy_from(&top_right);
    h.view_mut((n, 0), (n, n)).copy_from(&bottom_left);
    h.view_mut((n, n), (n, n)).copy_from(&(-a_cl.transpose()));
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_transfer_has_zero_norm() {
        let sys = StateSpaceModel::new(
            DMatrix::from_diagonal_element(2, 2, -1.0),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_eq!(hinf_norm(&sys, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn first_order_lag() {
        for a in [0.5, 2.0, 150.0] {
            let sys = StateSpaceModel::with_state_output(
                DMatrix::from_element(1, 1, -a),
                DMatrix::from_element(1, 1, 1.0),
            )
            .unwrap();
            assert_relative_eq!(hinf_norm(&sys, 1e-9).unwrap(), 1.0 / a, max_relative = 1e-8);
        }
    }

    #[test]
    fn resonant_peak() {
        // w_n = 1, zeta = 0.05: peak 1 / (2 zeta sqrt(1 - zeta^2))
        let z: f64 = 0.05;
        let sys = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0 * z]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let want = 1.0 / (2.0 * z * (1.0 - z * z).sqrt());
        let est = hinf_norm_with(&sys, HinfOptions::default()).unwrap();
        assert_relative_eq!(est.value, want, max_relative = 1e-6);
        assert_relative_eq!(est.peak_omega, (1.0 - 2.0 * z * z).sqrt(), max_relative = 1e-3);
    }

    #[test]
    fn feedthrough_only() {
        let sys = StateSpaceModel::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]),
        )
        .unwrap();
        assert_eq!(hinf_norm(&sys, 1e-6).unwrap(), 4.0);
    }

    #[test]
    fn unstable_rejected() {
        let sys = StateSpaceModel::with_state_output(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!(matches!(hinf_norm(&sys, 1e-6), Err(LtiError::Unstable { .. })));
    }
}
