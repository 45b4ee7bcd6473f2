use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::quadrature;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::{SampleSet, TauDistribution};
use crate::weights::WeightFunction;

const GAMMA_MAX_ITER: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub gamma: f64,
    pub iterations: usize,
    /// `|1 - (1/n) sum psi(tau_i gamma) / (1 + c psi(tau_i gamma))|`.
    pub residual: f64,
}

fn check_c(c: f64, w: &WeightFunction) -> Result<()> {
    if (c - w.c()).abs() > 1e-12 * c.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "weight function is bound to c = {}, got c = {c}",
            w.c()
        )));
    }
    Ok(())
}

fn mean_ratio(taus: &[f64], gamma: f64, w: &WeightFunction) -> f64 {
    let c = w.c();
    taus.iter()
        .map(|&t| {
            let p = w.psi(t * gamma);
            p / (1.0 + c * p)
        })
        .sum::<f64>()
        / taus.len() as f64
}

/// `h(gamma)`; at `gamma = 0` the limit `1 / (v(0) mean(tau))`.
pub fn h_map(taus: &[f64], gamma: f64, w: &WeightFunction) -> f64 {
    if gamma == 0.0 {
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        return 1.0 / (w.v(0.0) * mean);
    }
    gamma / mean_ratio(taus, gamma, w)
}

/// `|1 - (1/n) sum psi(tau_i gamma) / (1 + c psi(tau_i gamma))|`.
pub fn gamma_residual(taus: &[f64], gamma: f64, w: &WeightFunction) -> f64 {
    (1.0 - mean_ratio(taus, gamma, w)).abs()
}

/// Fixed point of `gamma <- h(gamma)` started at `gamma = 1`.
pub fn solve_gamma(taus: &[f64], c: f64, w: &WeightFunction, tol: f64) -> Result<GammaSolution> {
    check_c(c, w)?;
    if taus.is_empty() || taus.iter().all(|&t| t == 0.0) {
        return Err(Error::InvalidArgument(
            "at least one tau must be positive".into(),
        ));
    }
    if taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(
            "tau values must be finite and nonnegative".into(),
        ));
    }
    let mut gamma = 1.0;
    let mut change = f64::INFINITY;
    for it in 1..=GAMMA_MAX_ITER {
        let next = h_map(taus, gamma, w);
        change = (next - gamma).abs() / gamma;
        gamma = next;
        if change <= tol {
            return Ok(GammaSolution {
                gamma,
                iterations: it,
                residual: gamma_residual(taus, gamma, w),
            });
        }
    }
    Err(Error::NoConvergence {
        what: "gamma fixed point",
        iterations: GAMMA_MAX_ITER,
        last_change: change,
    })
}

/// `S = (1/n) sum_i v(tau_i gamma) x_i x_i^T`.
pub fn build_equivalent(s: &SampleSet, gamma: f64, w: &WeightFunction) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let weights: Vec<f64> = s.taus.iter().map(|&t| w.v(t * gamma)).collect();
    Ok(linalg::weighted_gram_chunked(&s.x, &weights))
}

/// Root of `1 = E[psi(t gamma) / (1 + c psi(t gamma))]` for `t` drawn from
/// `tau_law`, by bisection on `gamma`.
pub fn limiting_gamma(
    tau_law: &TauDistribution,
    c: f64,
    w: &WeightFunction,
    tol: f64,
) -> Result<f64> {
    check_c(c, w)?;
    let law = tau_law.normalized()?;
    let rule = quadrature::gauss_legendre(quadrature::DEFAULT_NODES)?;
    let f = |gamma: f64| -> Result<f64> {
        quadrature::expectation(
            &law,
            |t| {
                let p = if t.is_infinite() {
                    w.psi_inf()
                } else {
                    w.psi(t * gamma)
                };
                p / (1.0 + c * p)
            },
            &rule,
        )
        .map(|v| v - 1.0)
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while f(lo)? > 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::InvalidArgument(
                "no bracket for limiting gamma".into(),
            ));
        }
    }
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::InvalidArgument(
                "no bracket for limiting gamma".into(),
            ));
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
