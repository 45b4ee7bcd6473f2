//! Batch experiments: convergence of the estimator to its deterministic
//! equivalent, spectra of single runs, and the three-cluster figures.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimateResult};
use crate::histogram::{histogram, ks_distance, Bins, HistogramData};
use crate::io;
use crate::linalg;
use crate::par;
use crate::rmt::{self, DensityOptions, SpectralDensity, SpectralInputs};
use crate::sampling::{sample, ModelSpec, SampleSet, ScatterModel};
use crate::weights::WeightFunction;

const GAMMA_TOL: f64 = 1e-13;
pub const HISTOGRAM_BINS: usize = 100;

/// One `(size, seed)` cell of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    /// `|C_hat - S_hat|` in spectral norm; NaN when the cell failed.
    pub abs_error: f64,
    /// `abs_error / |C_hat|`.
    pub rel_error: f64,
    pub gamma: f64,
}

/// Order statistics of the converged cells of one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub dim: usize,
    pub samples: usize,
    pub converged: usize,
    pub total: usize,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub rel_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<ConvergenceSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `reps` seeds: the configured ones, continued upwards from the largest.
pub fn rep_seeds(seeds: &[u64], reps: usize) -> Vec<u64> {
    let mut out: Vec<u64> = seeds.iter().copied().take(reps).collect();
    let mut next = seeds.iter().copied().max().map_or(0, |m| m + 1);
    while out.len() < reps {
        out.push(next);
        next += 1;
    }
    out
}

/// Everything computed for one realisation.
pub struct Realisation {
    pub samples: SampleSet,
    pub weight: WeightFunction,
    pub estimate: EstimateResult,
    pub gamma: f64,
    pub equivalent: nalgebra::DMatrix<f64>,
}

/// Draws a sample, runs the estimator, and builds the equivalent matrix.
pub fn realise(cfg: &ExperimentConfig, spec: ModelSpec, seed: u64) -> Result<Realisation> {
    let model = Arc::new(ScatterModel::new(spec)?);
    let samples = sample(&model, seed);
    let weight = WeightFunction::new(cfg.weight.clone(), model.aspect_ratio())?;
    let estimate = estimate(&samples, &weight, &cfg.estimator)?;
    let gamma = rmt::solve_gamma(&samples.taus, weight.c(), &weight, GAMMA_TOL)?.gamma;
    let equivalent = rmt::build_equivalent(&samples, gamma, &weight)?;
    Ok(Realisation {
        samples,
        weight,
        estimate,
        gamma,
        equivalent,
    })
}

fn convergence_cell(
    cfg: &ExperimentConfig,
    dim: usize,
    samples: usize,
    seed: u64,
) -> ConvergenceRow {
    let failed = |iterations| ConvergenceRow {
        dim,
        samples,
        seed,
        converged: false,
        iterations,
        abs_error: f64::NAN,
        rel_error: f64::NAN,
        gamma: f64::NAN,
    };
    let run = cfg
        .model
        .resized(dim, samples)
        .and_then(|spec| realise(cfg, spec, seed));
    match run {
        Ok(r) if r.estimate.converged => {
            let abs_error = linalg::sym_spectral_norm(&(&r.estimate.c_hat - &r.equivalent));
            ConvergenceRow {
                dim,
                samples,
                seed,
                converged: true,
                iterations: r.estimate.iterations,
                abs_error,
                rel_error: abs_error / linalg::sym_spectral_norm(&r.estimate.c_hat),
                gamma: r.gamma,
            }
        }
        Ok(r) => failed(r.estimate.iterations),
        Err(_) => failed(0),
    }
}

/// Measures `|C_hat - S_hat|` over `sizes x reps` cells. Failed cells are
/// recorded with `converged = false` and excluded from the summary.
pub fn run_convergence_experiment(
    cfg: &ExperimentConfig,
    sizes: &[(usize, usize)],
    reps: usize,
) -> Result<ConvergenceTable> {
    if sizes.is_empty() || reps == 0 {
        return Err(Error::Config(
            "need at least one size and one repetition".into(),
        ));
    }
    let c0 = sizes[0].0 as f64 / sizes[0].1 as f64;
    for &(dim, samples) in sizes {
        if dim == 0 || samples <= dim || (dim as f64 / samples as f64 - c0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "size ({dim}, {samples}) does not share c = {c0}"
            )));
        }
    }
    let seeds = rep_seeds(&cfg.seeds, reps);
    let cells: Vec<(usize, usize, u64)> = sizes
        .iter()
        .flat_map(|&(d, n)| seeds.iter().map(move |&s| (d, n, s)))
        .collect();
    let rows = par::map_slice(&cells, |&(d, n, s)| convergence_cell(cfg, d, n, s));
    let summary = sizes
        .iter()
        .map(|&(dim, samples)| {
            let cell: Vec<&ConvergenceRow> = rows
                .iter()
                .filter(|r| r.dim == dim && r.samples == samples)
                .collect();
            let mut abs: Vec<f64> = cell
                .iter()
                .filter(|r| r.converged)
                .map(|r| r.abs_error)
                .collect();
            let mut rel: Vec<f64> = cell
                .iter()
                .filter(|r| r.converged)
                .map(|r| r.rel_error)
                .collect();
            abs.sort_by(f64::total_cmp);
            rel.sort_by(f64::total_cmp);
            ConvergenceSummary {
                dim,
                samples,
                converged: abs.len(),
                total: cell.len(),
                median: quantile(&abs, 0.5),
                lower_quartile: quantile(&abs, 0.25),
                upper_quartile: quantile(&abs, 0.75),
                rel_median: quantile(&rel, 0.5),
            }
        })
        .collect();
    Ok(ConvergenceTable { rows, summary })
}

/// Model density of one realisation together with its support.
pub fn model_density(
    taus: &[f64],
    gamma: f64,
    scatter_eigenvalues: &[f64],
    weight: &WeightFunction,
    opts: &DensityOptions,
) -> Result<SpectralDensity> {
    let inputs = SpectralInputs::new(taus, gamma, scatter_eigenvalues, weight)?;
    let mut density = rmt::density_on_grid(&inputs, opts)?;
    rmt::detect_support(&inputs, &mut density, opts)?;
    Ok(density)
}

/// Density of the model spectrum for the sample drawn with `seed`.
pub fn spectrum(cfg: &ExperimentConfig, seed: u64) -> Result<SpectralDensity> {
    let model = Arc::new(ScatterModel::new(cfg.model.clone())?);
    let samples = sample(&model, seed);
    let weight = WeightFunction::new(cfg.weight.clone(), model.aspect_ratio())?;
    let gamma = rmt::solve_gamma(&samples.taus, weight.c(), &weight, GAMMA_TOL)?.gamma;
    model_density(
        &samples.taus,
        gamma,
        model.scatter_eigenvalues(),
        &weight,
        &cfg.density,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    /// Robust estimator against the model density.
    Estimator = 1,
    /// Equivalent matrix against the model density.
    Equivalent = 2,
    /// Sample covariance alone.
    SampleCovariance = 3,
}

impl TryFrom<u8> for Figure {
    type Error = Error;
    fn try_from(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Figure::Estimator),
            2 => Ok(Figure::Equivalent),
            3 => Ok(Figure::SampleCovariance),
            other => Err(Error::Config(format!(
                "figure must be 1, 2 or 3, got {other}"
            ))),
        }
    }
}

/// Summary written next to the data files of a figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub figure: u8,
    pub seed: u64,
    pub dim: usize,
    pub samples: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub gamma: f64,
    /// Largest eigenvalue of the plotted matrix.
    pub lambda_max: f64,
    /// Largest eigenvalue of the robust estimate of the same sample.
    pub lambda_max_estimator: f64,
    pub ks_distance: Option<f64>,
    pub density_mass: Option<f64>,
    pub support: Vec<(f64, f64)>,
    pub note: String,
    pub files: Vec<PathBuf>,
}

/// Writes eigenvalues, histogram, model density (figures 1 and 2) and a
/// JSON report for one figure into `out_dir`.
pub fn reproduce_figure(
    cfg: &ExperimentConfig,
    which: u8,
    seed: u64,
    out_dir: &Path,
) -> Result<FigureReport> {
    let figure = Figure::try_from(which)?;
    std::fs::create_dir_all(out_dir)?;
    let r = realise(cfg, cfg.model.clone(), seed)?;
    let lambda_max_estimator = linalg::sym_spectral_norm(&r.estimate.c_hat);
    let eigenvalues = match figure {
        Figure::Estimator => linalg::sym_eigenvalues(&r.estimate.c_hat),
        Figure::Equivalent => linalg::sym_eigenvalues(&r.equivalent),
        Figure::SampleCovariance => linalg::sym_eigenvalues(&r.samples.sample_covariance()),
    };
    let lambda_max = eigenvalues.last().copied().unwrap_or(f64::NAN);
    let stem = format!("figure{which}");
    let mut files = Vec::new();

    let path = out_dir.join(format!("{stem}_eigenvalues.csv"));
    io::save(&path, &io::eigenvalues_csv(&eigenvalues))?;
    files.push(path);
    let hist: HistogramData = histogram(&eigenvalues, &Bins::Count(HISTOGRAM_BINS))?;
    let path = out_dir.join(format!("{stem}_histogram.csv"));
    io::save(&path, &io::histogram_csv(&hist))?;
    files.push(path);

    let (ks, mass, support, note) = match figure {
        Figure::SampleCovariance => (
            None,
            None,
            Vec::new(),
            "empirical histogram only; no model density is drawn for the sample covariance"
                .to_string(),
        ),
        _ => {
            let density = model_density(
                &r.samples.taus,
                r.gamma,
                r.samples.model.scatter_eigenvalues(),
                &r.weight,
                &cfg.density,
            )?;
            let path = out_dir.join(format!("{stem}_density.csv"));
            io::save(&path, &io::density_csv(&density))?;
            files.push(path);
            let ks = ks_distance(&eigenvalues, &density)?;
            (Some(ks), Some(density.mass), density.support, String::new())
        }
    };

    let report = FigureReport {
        figure: which,
        seed,
        dim: r.samples.dim(),
        samples: r.samples.len(),
        converged: r.estimate.converged,
        iterations: r.estimate.iterations,
        residual: r.estimate.residual,
        gamma: r.gamma,
        lambda_max,
        lambda_max_estimator,
        ks_distance: ks,
        density_mass: mass,
        support,
        note,
        files: files.clone(),
    };
    let path = out_dir.join(format!("{stem}_metadata.json"));
    io::save(&path, &io::to_json(&report)?)?;
    let mut report = report;
    report.files.push(path);
    Ok(report)
}
