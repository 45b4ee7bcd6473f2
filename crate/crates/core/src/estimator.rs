//! Fixed-point computation of the robust scatter M-estimator
//! `C = (1/n) sum_i u(x_i^T C^{-1} x_i / N) x_i x_i^T`.
//!
//! Two independent routes are provided: the plain matrix iteration
//! `Z <- rhs(Z)` and an iteration on the leave-one-out quadratic forms
//! `d_j = z_j^T C_(j)^{-1} z_j / N`, which is a standard interference
//! function in `d`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::SampleSet;
use crate::weights::WeightFunction;

/// Below this value the rank-one downdate denominator is considered unsafe
/// and the leave-one-out matrix is factorized directly.
const DOWNDATE_GUARD: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Init {
    #[default]
    Identity,
    SampleCovariance,
    #[serde(skip)]
    Custom(DMatrix<f64>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    #[default]
    Matrix,
    DVector,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Relative residual (matrix route) or relative `d` change (d route) at
    /// which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub route: Route,
    /// Rescale every matrix iterate so that `(1/n) sum_i phi(q_i) = 1`, which
    /// holds at the fixed point. Removes the slowly contracting scale mode.
    pub scale_step: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 500,
            init: Init::Identity,
            route: Route::Matrix,
            scale_step: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol = {} must be positive",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if let Init::Custom(m) = &self.init {
            if m.shape() != (dim, dim) {
                return Err(Error::InvalidArgument(format!(
                    "custom init must be {dim}x{dim}"
                )));
            }
            if m.clone().cholesky().is_none() {
                return Err(Error::InvalidArgument("custom init is not SPD".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub c_hat: DMatrix<f64>,
    /// Leave-one-out forms `d_i = z_i^T C_(i)^{-1} z_i / N`.
    pub d: Vec<f64>,
    pub iterations: usize,
    /// `|C - rhs(C)| / |C|` in spectral norm.
    pub residual: f64,
    pub converged: bool,
    /// Per-iteration convergence measure of the route that produced the result.
    pub history: Vec<f64>,
    /// Relative spectral gap to the other route when both were run.
    pub route_gap: Option<f64>,
}

fn nonzero_guard(s: &SampleSet) -> Result<()> {
    let nonzero = s.x.column_iter().filter(|c| c.norm_squared() > 0.0).count();
    if nonzero <= s.dim() {
        return Err(Error::InsufficientSamples {
            nonzero,
            dim: s.dim(),
        });
    }
    Ok(())
}

fn rhs_at(
    z: &DMatrix<f64>,
    s: &SampleSet,
    w: &WeightFunction,
    iteration: usize,
) -> Result<DMatrix<f64>> {
    let q =
        linalg::quadratic_forms(z, &s.x, s.dim() as f64).ok_or(Error::Singular { iteration })?;
    let weights: Vec<f64> = q.iter().map(|&t| w.u(t)).collect();
    Ok(linalg::weighted_gram_chunked(&s.x, &weights))
}

/// Scale `t > 0` with `(1/n) sum_i phi(q_i / t) = 1`. The left side decreases
/// in `t` from `phi_inf * (nonzero fraction)` to 0.
fn trace_scale(q: &[f64], w: &WeightFunction) -> Option<f64> {
    let n = q.len() as f64;
    decreasing_root(|t| q.iter().map(|&qi| w.phi(qi / t)).sum::<f64>() / n - 1.0)
}

/// Scale `t > 0` with `(1/n) sum_i psi(t e_i) / (1 + c psi(t e_i)) = 1` where
/// `e_i = tau_i d_i`; the trace identity of the fixed point in `d` form.
fn d_scale(taus: &[f64], d: &[f64], w: &WeightFunction) -> Option<f64> {
    let n = d.len() as f64;
    let c = w.c();
    let e: Vec<f64> = taus.iter().zip(d).map(|(t, di)| t * di).collect();
    decreasing_root(|t| {
        1.0 - e
            .iter()
            .map(|&ei| {
                let p = w.psi(ei * t);
                p / (1.0 + c * p)
            })
            .sum::<f64>()
            / n
    })
}

/// Root of a function decreasing on `(0, inf)`, by bracketing and bisection.
fn decreasing_root(f: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut lo, mut hi) = (1.0, 1.0);
    let mut guard = 0;
    while f(lo) < 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 2000 {
            return None;
        }
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return None;
        }
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `(1/n) sum_i u(x_i^T Z^{-1} x_i / N) x_i x_i^T`.
pub fn rhs(z: &DMatrix<f64>, s: &SampleSet, w: &WeightFunction) -> Result<DMatrix<f64>> {
    rhs_at(z, s, w, 0)
}

/// `|Z - rhs(Z)|_2 / |Z|_2`.
pub fn residual(z: &DMatrix<f64>, s: &SampleSet, w: &WeightFunction) -> Result<f64> {
    let r = rhs(z, s, w)?;
    Ok(linalg::sym_spectral_norm(&(z - r)) / linalg::sym_spectral_norm(z))
}

fn initial_matrix(cfg: &EstimatorConfig, s: &SampleSet) -> DMatrix<f64> {
    match &cfg.init {
        Init::Identity => DMatrix::identity(s.dim(), s.dim()),
        Init::SampleCovariance => s.sample_covariance(),
        Init::Custom(m) => m.clone(),
    }
}

/// Iterates `Z <- rhs(Z)` from `cfg.init`, optionally rescaling each iterate
/// first (see [`EstimatorConfig::scale_step`]).
///
/// Non-convergence is reported through `converged = false`; the returned
/// matrix is then the last iterate.
pub fn estimate_matrix_iteration(
    s: &SampleSet,
    w: &WeightFunction,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    cfg.validate(s.dim())?;
    nonzero_guard(s)?;
    let mut z = initial_matrix(cfg, s);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let dim = s.dim() as f64;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let mut q =
            linalg::quadratic_forms(&z, &s.x, dim).ok_or(Error::Singular { iteration: it })?;
        if cfg.scale_step {
            let t = trace_scale(&q, w).ok_or(Error::Singular { iteration: it })?;
            z *= t;
            q.iter_mut().for_each(|v| *v /= t);
        }
        let weights: Vec<f64> = q.iter().map(|&t| w.u(t)).collect();
        let next = linalg::weighted_gram_chunked(&s.x, &weights);
        residual = linalg::sym_spectral_norm(&(&z - &next)) / linalg::sym_spectral_norm(&z);
        history.push(residual);
        if residual <= cfg.tol {
            converged = true;
            break;
        }
        z = next;
    }
    let d = extract_di(&z, s, w)?;
    Ok(EstimateResult {
        c_hat: z,
        d,
        iterations,
        residual,
        converged,
        history,
        route_gap: None,
    })
}

/// One sweep of the interference map: returns `h(d)` and the matrix
/// `B(d) = (1/n) sum_i tau_i v(tau_i d_i) z_i z_i^T` it was computed from.
///
/// Leave-one-out forms come from one factorization of `B` through
/// `z^T B_(j)^{-1} z = s_j / (1 - w_j s_j / n)` with `s_j = z_j^T B^{-1} z_j`.
pub fn interference(
    s: &SampleSet,
    w: &WeightFunction,
    d: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    interference_at(s, w, d, 0)
}

fn interference_at(
    s: &SampleSet,
    w: &WeightFunction,
    d: &[f64],
    iteration: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (dim, n) = (s.dim(), s.len());
    if d.len() != n {
        return Err(Error::InvalidArgument(format!(
            "d has length {}, expected {n}",
            d.len()
        )));
    }
    let weights: Vec<f64> = s
        .taus
        .iter()
        .zip(d)
        .map(|(&t, &di)| if t == 0.0 { 0.0 } else { t * w.v(t * di) })
        .collect();
    let b = linalg::weighted_gram_chunked(&s.z, &weights);
    let full = linalg::quadratic_forms(&b, &s.z, 1.0).ok_or(Error::Singular { iteration })?;
    let nf = n as f64;
    let mut h = Vec::with_capacity(n);
    for j in 0..n {
        let denom = 1.0 - weights[j] * full[j] / nf;
        let loo = if denom >= DOWNDATE_GUARD {
            full[j] / denom
        } else {
            let zj = s.z.column(j);
            let mut bj = &b - (zj * zj.transpose()) * (weights[j] / nf);
            linalg::symmetrize(&mut bj);
            let zj_owned = DMatrix::from_column_slice(dim, 1, zj.as_slice());
            linalg::quadratic_forms(&bj, &zj_owned, 1.0).ok_or(Error::Singular { iteration })?[0]
        };
        h.push(loo / dim as f64);
    }
    Ok((h, b))
}

/// Iterates `d <- h(d)` from `d = 1` and assembles the estimator from the limit.
/// With [`EstimatorConfig::scale_step`] each `d` is first rescaled to satisfy
/// the fixed point's trace identity.
pub fn estimate_d_iteration(
    s: &SampleSet,
    w: &WeightFunction,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    estimate_d_iteration_from(s, w, cfg, &vec![1.0; s.len()])
}

/// [`estimate_d_iteration`] from a caller-chosen starting vector.
pub fn estimate_d_iteration_from(
    s: &SampleSet,
    w: &WeightFunction,
    cfg: &EstimatorConfig,
    d0: &[f64],
) -> Result<EstimateResult> {
    cfg.validate(s.dim())?;
    nonzero_guard(s)?;
    if d0.len() != s.len() || d0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "d0 must be positive with one entry per sample".into(),
        ));
    }
    let mut d = d0.to_vec();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        if cfg.scale_step {
            let t = d_scale(&s.taus, &d, w).ok_or(Error::Singular { iteration: it })?;
            d.iter_mut().for_each(|v| *v *= t);
        }
        let (next, _) = interference_at(s, w, &d, it)?;
        let change = d
            .iter()
            .zip(&next)
            .map(|(a, b)| (b - a).abs() / a)
            .fold(0.0_f64, f64::max);
        history.push(change);
        d = next;
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    let c_hat = assemble_from_d(s, w, &d);
    let residual = residual(&c_hat, s, w)?;
    Ok(EstimateResult {
        c_hat,
        d,
        iterations,
        residual,
        converged,
        history,
        route_gap: None,
    })
}

/// Runs the route(s) selected in `cfg`. With [`Route::Both`] the matrix-route
/// result is returned and `route_gap` holds the relative distance between
/// the two estimates.
pub fn estimate(
    s: &SampleSet,
    w: &WeightFunction,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    match cfg.route {
        Route::Matrix => estimate_matrix_iteration(s, w, cfg),
        Route::DVector => estimate_d_iteration(s, w, cfg),
        Route::Both => {
            let mut m = estimate_matrix_iteration(s, w, cfg)?;
            let d = estimate_d_iteration(s, w, cfg)?;
            m.route_gap = Some(linalg::relative_spectral_distance(&m.c_hat, &d.c_hat));
            m.converged &= d.converged;
            Ok(m)
        }
    }
}

/// Recovers `d_i` from a fixed point: `d_i = g(q_i) / tau_i` with
/// `q_i = x_i^T C^{-1} x_i / N`, or `z_i^T C^{-1} z_i / N` when `tau_i = 0`.
pub fn extract_di(c_hat: &DMatrix<f64>, s: &SampleSet, w: &WeightFunction) -> Result<Vec<f64>> {
    let dim = s.dim() as f64;
    let qz = linalg::quadratic_forms(c_hat, &s.z, dim).ok_or(Error::Singular { iteration: 0 })?;
    Ok(qz
        .iter()
        .zip(&s.taus)
        .map(|(&q, &t)| if t == 0.0 { q } else { w.g(t * q) / t })
        .collect())
}

/// Rebuilds `(1/n) sum_i tau_i v(tau_i d_i) z_i z_i^T` from a `d` vector.
pub fn assemble_from_d(s: &SampleSet, w: &WeightFunction, d: &[f64]) -> DMatrix<f64> {
    let weights: Vec<f64> = s
        .taus
        .iter()
        .zip(d)
        .map(|(&t, &di)| if t == 0.0 { 0.0 } else { t * w.v(t * di) })
        .collect();
    linalg::weighted_gram_chunked(&s.z, &weights)
}
