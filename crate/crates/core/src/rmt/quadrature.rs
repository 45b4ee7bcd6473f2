//! Gauss-Legendre rules and expectations under a texture law.

use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::sampling::TauDistribution;

/// Default number of Gauss-Legendre nodes.
pub const DEFAULT_NODES: usize = 512;
/// Probability mass left outside the integration range.
pub const TRUNCATED_MASS: f64 = 1e-13;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        let mut ok = false;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                ok = true;
                break;
            }
        }
        if !ok {
            // recompute the derivative at the final point
            dp = legendre(n, x).1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with the given rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// `E[f(tau)]` for a gamma law, renormalized by the captured mass.
fn gamma_expectation(
    f: &dyn Fn(f64) -> f64,
    shape: f64,
    scale: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<f64> {
    let law = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::InvalidArgument(format!("gamma law: {e}")))?;
    let hi = law.inverse_cdf(1.0 - TRUNCATED_MASS);
    let (num, den) = if shape < 1.0 {
        // t = s^(1/k) removes the t^(k-1) singularity at the origin
        let k = shape;
        let jac = |s: f64| {
            let t = s.powf(1.0 / k);
            if s == 0.0 {
                return (t, 0.0);
            }
            (t, law.pdf(t) * t / (k * s))
        };
        let smax = hi.powf(k);
        (
            integrate(
                |s| {
                    let (t, j) = jac(s);
                    f(t) * j
                },
                0.0,
                smax,
                rule,
            ),
            integrate(|s| jac(s).1, 0.0, smax, rule),
        )
    } else {
        let lo = law.inverse_cdf(TRUNCATED_MASS);
        (
            integrate(|t| f(t) * law.pdf(t), lo, hi, rule),
            integrate(|t| law.pdf(t), lo, hi, rule),
        )
    };
    if !(num.is_finite() && den > 0.0) || (den - 1.0).abs() > 1e-4 {
        return Err(Error::NoConvergence {
            what: "gamma-law quadrature",
            iterations: rule.0.len(),
            last_change: (den - 1.0).abs(),
        });
    }
    Ok(num / den)
}

/// `E[f(tau)]` under `law` (used as stored, so pass a normalized law).
pub fn expectation(
    law: &TauDistribution,
    f: impl Fn(f64) -> f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<f64> {
    match law {
        TauDistribution::Constant { value } => Ok(f(*value)),
        TauDistribution::Empirical { values } => {
            Ok(values.iter().map(|&t| f(t)).sum::<f64>() / values.len() as f64)
        }
        TauDistribution::Gamma { shape, scale } => gamma_expectation(&f, *shape, *scale, rule),
        TauDistribution::InverseChiSquare { dof } => {
            // tau = (dof - 2) / w with w ~ Gamma(dof / 2, 2)
            let g = |w: f64| {
                if w > 0.0 {
                    f((dof - 2.0) / w)
                } else {
                    f(f64::INFINITY)
                }
            };
            gamma_expectation(&g, dof / 2.0, 2.0, rule)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8).unwrap();
        let s: f64 = rule.1.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 15 is exact for 8 nodes
        let v = integrate(|x| x.powi(14) + x.powi(3), -1.0, 1.0, &rule);
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn large_rule_is_accurate() {
        let rule = gauss_legendre(DEFAULT_NODES).unwrap();
        let s: f64 = rule.1.iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, &rule);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_moments() {
        let rule = gauss_legendre(DEFAULT_NODES).unwrap();
        let law = TauDistribution::Gamma {
            shape: 0.5,
            scale: 2.0,
        };
        let m1 = expectation(&law, |t| t, &rule).unwrap();
        let m2 = expectation(&law, |t| t * t, &rule).unwrap();
        assert!((m1 - 1.0).abs() < 1e-7, "{m1}");
        // E[t^2] = k (k + 1) theta^2 = 3
        assert!((m2 - 3.0).abs() < 1e-5, "{m2}");
        let law = TauDistribution::Gamma {
            shape: 3.0,
            scale: 1.0 / 3.0,
        };
        assert!((expectation(&law, |t| t, &rule).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn inverse_chi_square_mean() {
        let rule = gauss_legendre(DEFAULT_NODES).unwrap();
        let law = TauDistribution::InverseChiSquare { dof: 8.0 };
        // bounded test function: E[t/(1+t)] against Monte Carlo is not needed,
        // E[1/tau] = E[w]/(dof-2) = dof/(dof-2) is exact
        let m = expectation(&law, |t| 1.0 / t, &rule).unwrap();
        assert!((m - 8.0 / 6.0).abs() < 1e-7, "{m}");
    }
}
