//! Run configuration: JSON with row-major matrices and flat vectors.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use filtersafe::ellipsoid::Ellipsoid;
use filtersafe::lmi::{SafetySets, SolverOptions, SynthesisScalars};
use filtersafe::lti::StateSpaceModel;
use filtersafe::serde_mat::{matrix, vector};
use filtersafe::synthesis::SynthesisConfig;
use filtersafe::verify::SimSettings;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A", with = "matrix")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "matrix")]
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSetSection {
    #[serde(rename = "R", with = "matrix")]
    pub r: DMatrix<f64>,
    #[serde(with = "vector")]
    pub u_bar: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeSetSection {
    #[serde(rename = "Psi", with = "matrix")]
    pub psi: DMatrix<f64>,
    #[serde(with = "vector")]
    pub psi_bar: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSetSection {
    #[serde(rename = "Xi_p", with = "matrix")]
    pub xi_p: DMatrix<f64>,
    #[serde(with = "vector")]
    pub xi_bar_p: DVector<f64>,
}

/// Diagonals of the selection matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub gamma_f: Vec<f64>,
    pub gamma_c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> u32 {
    200
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
}

fn default_dt() -> f64 {
    1e-4
}

fn default_t_end() -> f64 {
    5.0
}

fn default_runs() -> usize {
    1
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_end: default_t_end(),
            seed: 0,
            n_runs: default_runs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    pub input_set: InputSetSection,
    pub safe_set: SafeSetSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_set: Option<NormalSetSection>,
    pub selection: SelectionSection,
    pub scalars: SynthesisScalars,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
}

/// Checked, ready-to-use form of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Problem {
    pub plant: StateSpaceModel,
    pub sets: SafetySets,
    pub gamma_f: DMatrix<f64>,
    pub gamma_c: DMatrix<f64>,
    pub scalars: SynthesisScalars,
    pub solver: SolverOptions,
    pub sim: SimSettings,
}

impl Problem {
    pub fn stealthy(&self) -> bool {
        self.sets.normal.is_some()
    }

    pub fn synthesis_config(&self, beta: Option<f64>) -> SynthesisConfig {
        SynthesisConfig {
            beta,
            solver: self.solver,
            ..SynthesisConfig::new(self.scalars, self.stealthy())
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn check_finite_nonneg(field: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a finite non-negative number, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<Problem, CliError> {
        let plant = StateSpaceModel::with_state_output(self.plant.a.clone(), self.plant.b.clone())
            .map_err(|e| invalid("plant", e))?;
        let (n, m) = (plant.n_states(), plant.n_inputs());

        if self.input_set.r.shape() != (m, m) {
            return Err(invalid("input_set.R", format!("must be {m}x{m}")));
        }
        let input = Ellipsoid::pd(self.input_set.r.clone(), self.input_set.u_bar.clone())
            .map_err(|e| invalid("input_set", e))?;
        if self.safe_set.psi.shape() != (n, n) {
            return Err(invalid("safe_set.Psi", format!("must be {n}x{n}")));
        }
        let safe = Ellipsoid::pd(self.safe_set.psi.clone(), self.safe_set.psi_bar.clone())
            .map_err(|e| invalid("safe_set", e))?;
        let normal = match &self.normal_set {
            Some(ns) => {
                if ns.xi_p.shape() != (n, n) {
                    return Err(invalid("normal_set.Xi_p", format!("must be {n}x{n}")));
                }
                Some(
                    Ellipsoid::pd(ns.xi_p.clone(), ns.xi_bar_p.clone())
                        .map_err(|e| invalid("normal_set", e))?,
                )
            }
            None => None,
        };

        let sel = &self.selection;
        for (field, v) in [("selection.gamma_f", &sel.gamma_f), ("selection.gamma_c", &sel.gamma_c)] {
            if v.len() != m {
                return Err(invalid(field, format!("must have {m} entries")));
            }
            if v.iter().any(|x| *x != 0.0 && *x != 1.0) {
                return Err(invalid(field, "entries must be 0 or 1"));
            }
        }
        if let Some(i) = (0..m).find(|&i| sel.gamma_f[i] + sel.gamma_c[i] != 1.0) {
            return Err(invalid(
                "selection",
                format!("gamma_f + gamma_c must be 1 on every channel (channel {} sums to {})", i + 1, sel.gamma_f[i] + sel.gamma_c[i]),
            ));
        }
        let gamma_f = DMatrix::from_diagonal(&DVector::from_column_slice(&sel.gamma_f));
        let gamma_c = DMatrix::from_diagonal(&DVector::from_column_slice(&sel.gamma_c));

        let s = &self.scalars;
        for (field, v) in [
            ("scalars.alpha", s.alpha),
            ("scalars.lambda", s.lambda),
            ("scalars.delta", s.delta),
            ("scalars.gamma", s.gamma),
            ("scalars.epsilon", s.epsilon),
        ] {
            check_finite_nonneg(field, v)?;
        }
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            return Err(invalid("sim.dt", "must be positive"));
        }
        check_finite_nonneg("sim.t_end", self.sim.t_end)?;
        if self.sim.n_runs == 0 {
            return Err(invalid("sim.n_runs", "must be positive"));
        }

        Ok(Problem {
            plant,
            sets: SafetySets { input, safe, normal },
            gamma_f,
            gamma_c,
            scalars: *s,
            solver: SolverOptions {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
                ..SolverOptions::default()
            },
            sim: SimSettings {
                t_end: self.sim.t_end,
                dt: self.sim.dt,
                n_runs: self.sim.n_runs,
                seed: self.sim.seed,
            },
        })
    }
}

/// Reads a JSON file; parse errors carry line and column.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn load_config(path: &Path) -> Result<Problem, CliError> {
    read_json::<RunConfig>(path)?.validate()
}
