//! CSV and JSON files. Reals are written with 17 significant digits so that
//! every emitted CSV parses back to the same bits.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimateResult;
use crate::experiment::{ConvergenceRow, ConvergenceSummary};
use crate::histogram::HistogramData;
use crate::rmt::SpectralDensity;

pub const EIGENVALUE_HEADER: &str = "eigenvalue";
pub const DENSITY_HEADER: &str = "x,density";
pub const HISTOGRAM_HEADER: &str = "bin_center,frequency";
pub const CONVERGENCE_HEADER: &str =
    "dim,samples,seed,converged,iterations,abs_error,rel_error,gamma";
pub const SUMMARY_HEADER: &str =
    "dim,samples,converged,total,median,lower_quartile,upper_quartile,rel_median";

/// Scientific notation with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Io(format!("line {line}: {field:?} is not a number")))
}

fn parse_int<T: std::str::FromStr>(field: &str, line: usize) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Io(format!("line {line}: {field:?} is not an integer")))
}

/// Data lines of a CSV document after checking its header.
fn body<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(Error::Io(format!(
                "expected header {header:?}, found {h:?}"
            )))
        }
        None => return Err(Error::Io(format!("empty file, expected header {header:?}"))),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| (k + 1, l.split(',').collect())))
}

fn expect_fields(fields: &[&str], count: usize, line: usize) -> Result<()> {
    if fields.len() != count {
        return Err(Error::Io(format!(
            "line {line}: expected {count} fields, found {}",
            fields.len()
        )));
    }
    Ok(())
}

pub fn eigenvalues_csv(values: &[f64]) -> String {
    let mut out = String::from(EIGENVALUE_HEADER);
    out.push('\n');
    for &v in values {
        out.push_str(&fmt_real(v));
        out.push('\n');
    }
    out
}

pub fn parse_eigenvalues_csv(text: &str) -> Result<Vec<f64>> {
    body(text, EIGENVALUE_HEADER)?
        .map(|(line, f)| {
            expect_fields(&f, 1, line)?;
            parse_real(f[0], line)
        })
        .collect()
}

fn pairs_csv(header: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (&x, &y) in xs.iter().zip(ys) {
        out.push_str(&format!("{},{}\n", fmt_real(x), fmt_real(y)));
    }
    out
}

fn parse_pairs_csv(text: &str, header: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, f) in body(text, header)? {
        expect_fields(&f, 2, line)?;
        xs.push(parse_real(f[0], line)?);
        ys.push(parse_real(f[1], line)?);
    }
    Ok((xs, ys))
}

pub fn density_csv(density: &SpectralDensity) -> String {
    pairs_csv(DENSITY_HEADER, &density.grid, &density.values)
}

/// Grid and density values.
pub fn parse_density_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    parse_pairs_csv(text, DENSITY_HEADER)
}

pub fn histogram_csv(h: &HistogramData) -> String {
    pairs_csv(HISTOGRAM_HEADER, &h.bin_centers, &h.frequencies)
}

/// Bin centres and frequencies.
pub fn parse_histogram_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    parse_pairs_csv(text, HISTOGRAM_HEADER)
}

/// Data matrix with one sample per column; the first row holds the `tau_i`.
pub fn samples_csv(taus: &[f64], x: &DMatrix<f64>) -> String {
    let row =
        |vals: &mut dyn Iterator<Item = f64>| vals.map(fmt_real).collect::<Vec<_>>().join(",");
    let mut out = row(&mut taus.iter().copied());
    out.push('\n');
    for i in 0..x.nrows() {
        out.push_str(&row(&mut x.row(i).iter().copied()));
        out.push('\n');
    }
    out
}

/// Inverse of [`samples_csv`].
pub fn parse_samples_csv(text: &str) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|f| parse_real(f, k + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            expect_fields(&vec![""; row.len()], first.len(), k + 1)?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Io("empty sample file".into()));
    }
    let taus = rows.remove(0);
    let x = DMatrix::from_fn(rows.len(), taus.len(), |i, j| rows[i][j]);
    Ok((taus, x))
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dim,
            r.samples,
            r.seed,
            r.converged,
            r.iterations,
            fmt_real(r.abs_error),
            fmt_real(r.rel_error),
            fmt_real(r.gamma)
        ));
    }
    out
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<ConvergenceRow>> {
    body(text, CONVERGENCE_HEADER)?
        .map(|(line, f)| {
            expect_fields(&f, 8, line)?;
            Ok(ConvergenceRow {
                dim: parse_int(f[0], line)?,
                samples: parse_int(f[1], line)?,
                seed: parse_int(f[2], line)?,
                converged: parse_int(f[3], line)?,
                iterations: parse_int(f[4], line)?,
                abs_error: parse_real(f[5], line)?,
                rel_error: parse_real(f[6], line)?,
                gamma: parse_real(f[7], line)?,
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[ConvergenceSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dim,
            r.samples,
            r.converged,
            r.total,
            fmt_real(r.median),
            fmt_real(r.lower_quartile),
            fmt_real(r.upper_quartile),
            fmt_real(r.rel_median)
        ));
    }
    out
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<ConvergenceSummary>> {
    body(text, SUMMARY_HEADER)?
        .map(|(line, f)| {
            expect_fields(&f, 8, line)?;
            Ok(ConvergenceSummary {
                dim: parse_int(f[0], line)?,
                samples: parse_int(f[1], line)?,
                converged: parse_int(f[2], line)?,
                total: parse_int(f[3], line)?,
                median: parse_real(f[4], line)?,
                lower_quartile: parse_real(f[5], line)?,
                upper_quartile: parse_real(f[6], line)?,
                rel_median: parse_real(f[7], line)?,
            })
        })
        .collect()
}

/// JSON view of an [`EstimateResult`]; the matrix is stored row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub dim: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub route_gap: Option<f64>,
    pub history: Vec<f64>,
    pub d: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub c_hat: Vec<Vec<f64>>,
}

impl EstimateRecord {
    pub fn new(r: &EstimateResult) -> Self {
        let n = r.c_hat.nrows();
        Self {
            dim: n,
            converged: r.converged,
            iterations: r.iterations,
            residual: r.residual,
            route_gap: r.route_gap,
            history: r.history.clone(),
            d: r.d.clone(),
            eigenvalues: crate::linalg::sym_eigenvalues(&r.c_hat),
            c_hat: (0..n)
                .map(|i| r.c_hat.row(i).iter().copied().collect())
                .collect(),
        }
    }

    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        if self.c_hat.len() != self.dim || self.c_hat.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Io(format!("matrix is not {0}x{0}", self.dim)));
        }
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            self.c_hat[i][j]
        }))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
}

pub fn save(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
