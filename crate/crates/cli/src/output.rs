//! Artifact writing: every file lands via a temporary file and a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use filtersafe::ellipsoid::Ellipsoid;

use crate::CliError;

pub const BOUNDARY_POINTS: usize = 720;

pub fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.path(name);
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.0).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        self.write(name, csv_bytes(header, rows)?.as_slice())
    }
}

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Matrix as CSV with header `c1..cn`.
pub fn matrix_csv(m: &DMatrix<f64>) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("c{j}")).collect();
    let rows: Vec<Vec<String>> = m
        .row_iter()
        .map(|r| r.iter().map(|v| fmt(*v)).collect())
        .collect();
    csv_bytes(&header, &rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let cols = r.headers().map_err(|e| bad(e.to_string()))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for f in rec.iter() {
            data.push(f.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", rows + 1)))?);
        }
        rows += 1;
    }
    if data.len() != rows * cols {
        return Err(bad("ragged rows".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Shadow of `e` on coordinates `(i, j)`.
fn planar_shadow(e: &Ellipsoid, i: usize, j: usize) -> Result<Ellipsoid, CliError> {
    let d = e.dim();
    if d == 2 {
        return Ok(e.clone());
    }
    let mut order = vec![i, j];
    order.extend((0..d).filter(|&k| k != i && k != j));
    let q = e.shape();
    let c = e.center();
    let shape = DMatrix::from_fn(d, d, |r, s| q[(order[r], order[s])]);
    let center = DVector::from_fn(d, |r, _| c[order[r]]);
    Ellipsoid::new(shape, center, e.rank_mode())
        .and_then(|p| p.project(2))
        .map_err(|err| CliError::Numerical(format!("projection onto ({}, {}): {err}", i + 1, j + 1)))
}

/// Boundary points of the 2-D shadows of each named set on every
/// coordinate pair, `BOUNDARY_POINTS` per pair, at uniform angles.
pub fn boundary_rows(sets: &[(&str, &Ellipsoid)]) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::new();
    for (name, e) in sets {
        let d = e.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                let p = planar_shadow(e, i, j)?;
                let l = p
                    .shape()
                    .clone()
                    .cholesky()
                    .ok_or_else(|| CliError::Numerical(format!("{name}: shadow not positive definite")))?
                    .l();
                let map = l
                    .transpose()
                    .try_inverse()
                    .ok_or_else(|| CliError::Numerical(format!("{name}: singular shadow")))?;
                for k in 0..BOUNDARY_POINTS {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / BOUNDARY_POINTS as f64;
                    let x = p.center() + &map * DVector::from_vec(vec![th.cos(), th.sin()]);
                    rows.push(vec![
                        name.to_string(),
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        k.to_string(),
                        fmt(x[0]),
                        fmt(x[1]),
                    ]);
                }
            }
        }
    }
    Ok(rows)
}

pub fn boundary_header() -> Vec<String> {
    ["set", "i", "j", "k", "x_i", "x_j"].iter().map(|s| s.to_string()).collect()
}
