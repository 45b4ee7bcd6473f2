//! Limiting spectral density on a grid and detection of its support.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::stieltjes::{solve_stieltjes, SpectralInputs};
use crate::error::{Error, Result};
use crate::par;

/// Grid and regularisation used to evaluate the density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityOptions {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Imaginary part of the evaluation points.
    pub eta: f64,
    /// Smaller imaginary part used to resolve points of low density.
    pub refine_eta: f64,
    /// Density below which a point counts as outside the support.
    pub support_threshold: f64,
    /// Points with density below this are re-evaluated at `refine_eta`.
    pub refine_below: f64,
    pub tol: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 2.5,
            step: 0.005,
            eta: 1e-4,
            refine_eta: 1e-6,
            support_threshold: 1e-3,
            refine_below: 0.1,
            tol: 1e-12,
        }
    }
}

impl DensityOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.hi > self.lo
            && self.step > 0.0
            && self.eta > 0.0
            && self.refine_eta > 0.0
            && self.support_threshold >= 0.0
            && self.tol > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid density options {self:?}")));
        }
        if (self.hi - self.lo) / self.step > 1e7 {
            return Err(Error::Config(
                "density grid has more than 1e7 points".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub eta: f64,
    /// Trapezoid integral of `values` over the grid.
    pub mass: f64,
    /// Support intervals, empty until [`detect_support`] runs.
    pub support: Vec<(f64, f64)>,
}

impl SpectralDensity {
    /// Cumulative distribution on the grid, normalised to end at one.
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.grid.len() {
            acc += 0.5 * (self.values[k] + self.values[k - 1]) * (self.grid[k] - self.grid[k - 1]);
            out.push(acc);
        }
        if acc > 0.0 {
            out.iter_mut().for_each(|v| *v /= acc);
        }
        out
    }

    /// Linear interpolation of [`Self::cdf`] at `x`.
    pub fn cdf_at(&self, cdf: &[f64], x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let k = g.partition_point(|&v| v <= x);
        let (x0, x1) = (g[k - 1], g[k]);
        let t = (x - x0) / (x1 - x0);
        cdf[k - 1] + t * (cdf[k] - cdf[k - 1])
    }
}

const BLOCK: usize = 32;

fn densities_at(inputs: &SpectralInputs, xs: &[f64], eta: f64, tol: f64) -> Result<Vec<f64>> {
    let blocks = par::chunk_ranges(xs.len(), BLOCK);
    let parts = par::map_slice(&blocks, |range| -> Result<Vec<f64>> {
        let mut warm = None;
        let mut out = Vec::with_capacity(range.len());
        for &x in &xs[range.clone()] {
            let sol = solve_stieltjes(Complex64::new(x, eta), inputs, tol, warm)?;
            warm = Some((sol.delta, sol.delta_t));
            out.push((sol.m.im / std::f64::consts::PI).max(0.0));
        }
        Ok(out)
    });
    let mut values = Vec::with_capacity(xs.len());
    for p in parts {
        values.extend(p?);
    }
    Ok(values)
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Evaluates `Im m(x + i eta) / pi` on the grid of `opts`.
pub fn density_on_grid(inputs: &SpectralInputs, opts: &DensityOptions) -> Result<SpectralDensity> {
    opts.validate()?;
    let grid = opts.grid();
    let values = densities_at(inputs, &grid, opts.eta, opts.tol)?;
    let mass = trapezoid(&grid, &values);
    Ok(SpectralDensity {
        grid,
        values,
        eta: opts.eta,
        mass,
        support: Vec::new(),
    })
}

/// Splits the grid into support intervals. Points whose density is below
/// `refine_below` are re-evaluated at `refine_eta` so that narrow gaps are not
/// filled in by the regularisation; gaps shorter than two grid steps are
/// merged.
pub fn detect_support(
    inputs: &SpectralInputs,
    density: &mut SpectralDensity,
    opts: &DensityOptions,
) -> Result<Vec<(f64, f64)>> {
    opts.validate()?;
    let low: Vec<usize> = (0..density.grid.len())
        .filter(|&k| density.values[k] < opts.refine_below)
        .collect();
    let xs: Vec<f64> = low.iter().map(|&k| density.grid[k]).collect();
    let refined = densities_at(inputs, &xs, opts.refine_eta, opts.tol)?;
    let mut inside: Vec<bool> = density.values.iter().map(|_| true).collect();
    for (&k, &v) in low.iter().zip(&refined) {
        inside[k] = v >= opts.support_threshold;
    }
    let support = intervals(&density.grid, &inside, 2.0 * opts.step);
    density.support = support.clone();
    Ok(support)
}

fn intervals(grid: &[f64], inside: &[bool], min_gap: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut start = None;
    for (k, &flag) in inside.iter().enumerate() {
        match (flag, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((grid[s], grid[k - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s], grid[grid.len() - 1]));
    }
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in out {
        match merged.last_mut() {
            Some(last) if iv.0 - last.1 <= min_gap + 1e-12 => last.1 = iv.1,
            _ => merged.push(iv),
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmt::solve_gamma;
    use crate::weights::{WeightFunction, WeightSpec};

    fn identity_inputs(c: f64, n: usize) -> SpectralInputs {
        let dim = (c * n as f64) as usize;
        let w = WeightFunction::new(WeightSpec::student(0.1), c).unwrap();
        let taus = vec![1.0; n];
        let gamma = solve_gamma(&taus, c, &w, 1e-14).unwrap().gamma;
        SpectralInputs::new(&taus, gamma, &vec![1.0; dim], &w).unwrap()
    }

    #[test]
    fn constant_tau_gives_marchenko_pastur() {
        // tau = 1 makes every weight equal, so the law is a scaled MP law
        let inputs = identity_inputs(0.2, 500);
        let s = inputs.weights[0];
        let c: f64 = 0.2;
        let opts = DensityOptions {
            lo: 0.0,
            hi: 3.0 * s,
            step: s / 200.0,
            eta: 1e-7,
            ..Default::default()
        };
        let d = density_on_grid(&inputs, &opts).unwrap();
        let (a, b) = (s * (1.0 - c.sqrt()).powi(2), s * (1.0 + c.sqrt()).powi(2));
        for (&x, &v) in d.grid.iter().zip(&d.values) {
            let mp = if x > a && x < b {
                ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * c * s * x)
            } else {
                0.0
            };
            if (x - a).abs() > 0.02 * s && (x - b).abs() > 0.02 * s {
                assert!((v - mp).abs() < 1e-3 * (1.0 + mp), "x={x} {v} vs {mp}");
            }
        }
        assert!((d.mass - 1.0).abs() < 5e-3);
    }

    #[test]
    fn support_of_single_bulk() {
        let inputs = identity_inputs(0.2, 500);
        let s = inputs.weights[0];
        let opts = DensityOptions {
            lo: 0.0,
            hi: 3.0 * s,
            step: s / 100.0,
            ..Default::default()
        };
        let mut d = density_on_grid(&inputs, &opts).unwrap();
        let sup = detect_support(&inputs, &mut d, &opts).unwrap();
        assert_eq!(sup.len(), 1);
        let c: f64 = 0.2;
        assert!((sup[0].0 - s * (1.0 - c.sqrt()).powi(2)).abs() < 0.03 * s);
        assert!((sup[0].1 - s * (1.0 + c.sqrt()).powi(2)).abs() < 0.03 * s);
    }

    #[test]
    fn support_stays_below_ceiling() {
        use crate::sampling::TauDistribution;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let c = 0.2;
        let w = WeightFunction::new(WeightSpec::student(0.1), c).unwrap();
        for law in [
            TauDistribution::Gamma {
                shape: 0.5,
                scale: 2.0,
            },
            TauDistribution::InverseChiSquare { dof: 5.0 },
            TauDistribution::Constant { value: 1.0 },
        ] {
            let taus = law.normalized().unwrap().draw_n(n, &mut rng);
            let gamma = solve_gamma(&taus, c, &w, 1e-13).unwrap().gamma;
            let eig: Vec<f64> = (0..80).map(|i| [1.0, 3.0, 10.0][i * 3 / 80]).collect();
            let inputs = SpectralInputs::new(&taus, gamma, &eig, &w).unwrap();
            let ceiling = inputs.support_ceiling(&w);
            let opts = DensityOptions {
                lo: 0.0,
                hi: 2.0 * ceiling,
                step: ceiling / 200.0,
                ..Default::default()
            };
            let mut d = density_on_grid(&inputs, &opts).unwrap();
            let sup = detect_support(&inputs, &mut d, &opts).unwrap();
            let edge = sup.last().unwrap().1;
            assert!(edge <= ceiling, "{law:?}: {edge} > {ceiling}");
        }
    }

    #[test]
    fn interval_merging() {
        let grid: Vec<f64> = (0..10).map(f64::from).collect();
        let inside = [
            false, true, true, false, true, true, false, false, false, true,
        ];
        assert_eq!(intervals(&grid, &inside, 2.0), vec![(1.0, 5.0), (9.0, 9.0)]);
        assert_eq!(
            intervals(&grid, &inside, 1.0),
            vec![(1.0, 2.0), (4.0, 5.0), (9.0, 9.0)]
        );
    }

    #[test]
    fn cdf_is_monotone_and_normalised() {
        let d = SpectralDensity {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 1.0, 0.0],
            eta: 1e-3,
            mass: 1.0,
            support: vec![],
        };
        let cdf = d.cdf();
        assert_eq!(cdf, vec![0.0, 0.5, 1.0]);
        assert!((d.cdf_at(&cdf, 0.5) - 0.25).abs() < 1e-15);
        assert_eq!(d.cdf_at(&cdf, 5.0), 1.0);
    }

    #[test]
    fn rejects_bad_grid() {
        let opts = DensityOptions {
            hi: -1.0,
            ..Default::default()
        };
        assert!(opts.validate().is_err());
    }
}
