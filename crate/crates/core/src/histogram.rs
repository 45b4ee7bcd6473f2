//! Empirical spectral histograms and distances to a model density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rmt::SpectralDensity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub bin_centers: Vec<f64>,
    /// Bar heights; `sum(frequencies) * bin_width == 1`.
    pub frequencies: Vec<f64>,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl HistogramData {
    pub fn edges(&self) -> Vec<f64> {
        let lo = self.bin_centers[0] - 0.5 * self.bin_width;
        (0..=self.bin_centers.len())
            .map(|k| lo + k as f64 * self.bin_width)
            .collect()
    }
}

/// Binning: a bin count over the data range, or equally spaced edges.
#[derive(Clone, Debug, PartialEq)]
pub enum Bins {
    Count(usize),
    Edges { lo: f64, hi: f64, count: usize },
}

/// Density-normalised histogram. With explicit edges, values outside
/// `[lo, hi]` are dropped before normalising.
pub fn histogram(values: &[f64], bins: &Bins) -> Result<HistogramData> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("histogram of an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite value in histogram input".into(),
        ));
    }
    let (lo, hi, count) = match *bins {
        Bins::Count(count) => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi, count)
            } else {
                (lo - 0.5, lo + 0.5, count)
            }
        }
        Bins::Edges { lo, hi, count } => (lo, hi, count),
    };
    if count == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bad histogram range [{lo}, {hi}] with {count} bins"
        )));
    }
    let width = (hi - lo) / count as f64;
    let mut counts = vec![0usize; count];
    let mut kept = 0usize;
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let k = (((v - lo) / width) as usize).min(count - 1);
        counts[k] += 1;
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::InvalidArgument(
            "no values inside the histogram range".into(),
        ));
    }
    let frequencies = counts
        .iter()
        .map(|&c| c as f64 / (kept as f64 * width))
        .collect();
    let bin_centers = (0..count).map(|k| lo + (k as f64 + 0.5) * width).collect();
    Ok(HistogramData {
        bin_centers,
        frequencies,
        bin_width: width,
        counts,
    })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `values` and the distribution whose density is tabulated in `density`.
pub fn ks_distance(values: &[f64], density: &SpectralDensity) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values for KS distance".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite value in KS input".into(),
        ));
    }
    if !(0.9..=1.1).contains(&density.mass) {
        return Err(Error::InvalidArgument(format!(
            "density mass {} outside [0.9, 1.1]",
            density.mass
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let cdf = density.cdf();
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = density.cdf_at(&cdf, x);
        worst = worst
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn uniform_density() -> SpectralDensity {
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        SpectralDensity {
            values: vec![1.0; grid.len()],
            grid,
            eta: 0.0,
            mass: 1.0,
            support: vec![(0.0, 1.0)],
        }
    }

    #[test]
    fn constant_values_single_bar() {
        let h = histogram(&[1.0; 4], &Bins::Count(1)).unwrap();
        assert_eq!(h.frequencies, vec![1.0 / h.bin_width]);
    }

    #[test]
    fn explicit_edges() {
        let h = histogram(
            &[0.1, 0.3, 0.3, 1.0, 2.0],
            &Bins::Edges {
                lo: 0.0,
                hi: 1.0,
                count: 4,
            },
        )
        .unwrap();
        assert_eq!(h.counts, vec![1, 2, 0, 1]);
        assert_eq!(h.bin_centers[0], 0.125);
        assert!((h.frequencies[1] - 2.0 / (4.0 * 0.25)).abs() < 1e-15);
        assert_eq!(h.edges(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn uniform_draws_are_flat() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let h = histogram(
            &xs,
            &Bins::Edges {
                lo: 0.0,
                hi: 1.0,
                count: 20,
            },
        )
        .unwrap();
        assert!(h.frequencies.iter().all(|f| (f - 1.0).abs() < 0.05));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(histogram(&[], &Bins::Count(3)).is_err());
        assert!(histogram(&[1.0], &Bins::Count(0)).is_err());
        assert!(histogram(
            &[1.0],
            &Bins::Edges {
                lo: 1.0,
                hi: 0.0,
                count: 3
            }
        )
        .is_err());
        assert!(ks_distance(&[], &uniform_density()).is_err());
        let mut light = uniform_density();
        light.mass = 0.5;
        assert!(ks_distance(&[0.5], &light).is_err());
    }

    #[test]
    fn ks_of_exact_quantiles_is_half_step() {
        let n = 500;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&xs, &uniform_density()).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_of_inverse_sampled_draws() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        assert!(ks_distance(&xs, &uniform_density()).unwrap() < 0.08);
    }

    #[test]
    fn ks_of_disjoint_support_is_one() {
        assert_eq!(ks_distance(&[3.0, 4.0], &uniform_density()).unwrap(), 1.0);
        assert!((ks_distance(&[0.9; 10], &uniform_density()).unwrap() - 0.9).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn unit_mass(values in prop::collection::vec(-1.0f64..3.0, 1..200), bins in 1usize..40) {
            let h = histogram(&values, &Bins::Count(bins)).unwrap();
            let mass: f64 = h.frequencies.iter().sum::<f64>() * h.bin_width;
            prop_assert!((mass - 1.0).abs() < 1e-12);
            prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        }

        #[test]
        fn ks_in_unit_interval(values in prop::collection::vec(-1.0f64..3.0, 1..200)) {
            let d = ks_distance(&values, &uniform_density()).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
