//! Stieltjes transform of the limiting spectral measure.
//!
//! For `z` in the upper half plane the pair `(delta, delta_t)` solves
//!
//! ```text
//! delta_t = -(1/z) (1/n) sum_i w_i / (1 + w_i delta),       w_i = psi(tau_i gamma) / gamma
//! delta   = -(1/z) (1/n) sum_k lambda_k / (1 + lambda_k delta_t)
//! m       = -(1/z) (1/N) sum_k 1 / (1 + lambda_k delta_t)
//! ```
//!
//! with `lambda_k` the eigenvalues of `C`. The solver alternates the two
//! updates and finishes with Newton's method on the composed scalar map.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::weights::WeightFunction;

const ALTERNATION_WARMUP: usize = 25;
const NEWTON_MAX_ITER: usize = 100;
const ALTERNATION_MAX_ITER: usize = 200_000;
const OSCILLATION_WINDOW: usize = 10;
const MAX_RESTARTS: usize = 3;

/// Precomputed ingredients of the fixed-point system.
#[derive(Clone, Debug)]
pub struct SpectralInputs {
    /// `psi(tau_i gamma) / gamma`, one per sample.
    pub weights: Vec<f64>,
    /// Distinct eigenvalues of `C` with multiplicities.
    pub eigen: Vec<(f64, usize)>,
    /// Dimension `N`.
    pub dim: usize,
    /// Sample count `n`.
    pub samples: usize,
    pub gamma: f64,
}

impl SpectralInputs {
    pub fn new(taus: &[f64], gamma: f64, eig_c: &[f64], w: &WeightFunction) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma = {gamma} must be positive"
            )));
        }
        if taus.is_empty() || eig_c.is_empty() {
            return Err(Error::InvalidArgument(
                "taus and eigenvalues must be nonempty".into(),
            ));
        }
        if eig_c.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidArgument(
                "eigenvalues of C must be positive".into(),
            ));
        }
        let weights = taus.iter().map(|&t| w.psi(t * gamma) / gamma).collect();
        let mut sorted = eig_c.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut eigen: Vec<(f64, usize)> = Vec::new();
        for l in sorted {
            match eigen.last_mut() {
                Some((v, m)) if (*v - l).abs() <= 1e-14 * l => *m += 1,
                _ => eigen.push((l, 1)),
            }
        }
        Ok(Self {
            weights,
            eigen,
            dim: eig_c.len(),
            samples: taus.len(),
            gamma,
        })
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen.last().map(|e| e.0).unwrap_or(0.0)
    }

    /// Sanity ceiling for the right edge of the support:
    /// `1.1 (1 + sqrt(c))^2 psi_inf / gamma * max eig(C)`.
    pub fn support_ceiling(&self, w: &WeightFunction) -> f64 {
        let c = self.dim as f64 / self.samples as f64;
        1.1 * (1.0 + c.sqrt()).powi(2) * w.psi_inf() / self.gamma * self.max_eigenvalue()
    }

    /// `delta_t` update and its derivative in `delta`.
    fn tilde_update(&self, z: Complex64, delta: Complex64) -> (Complex64, Complex64) {
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = Complex64::new(0.0, 0.0);
        for &w in &self.weights {
            let r = 1.0 / (1.0 + w * delta);
            s += w * r;
            ds += w * w * r * r;
        }
        let scale = -1.0 / (z * self.samples as f64);
        (s * scale, -ds * scale)
    }

    /// `delta` update and its derivative in `delta_t`.
    fn delta_update(&self, z: Complex64, delta_t: Complex64) -> (Complex64, Complex64) {
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = Complex64::new(0.0, 0.0);
        for &(l, mult) in &self.eigen {
            let r = 1.0 / (1.0 + l * delta_t);
            s += mult as f64 * l * r;
            ds += mult as f64 * l * l * r * r;
        }
        let scale = -1.0 / (z * self.samples as f64);
        (s * scale, -ds * scale)
    }

    fn m_of(&self, z: Complex64, delta_t: Complex64) -> Complex64 {
        let s: Complex64 = self
            .eigen
            .iter()
            .map(|&(l, mult)| mult as f64 / (1.0 + l * delta_t))
            .sum();
        -s / (z * self.dim as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StieltjesSolution {
    pub m: Complex64,
    pub delta: Complex64,
    pub delta_t: Complex64,
    pub iterations: usize,
}

fn finite(c: Complex64) -> bool {
    c.re.is_finite() && c.im.is_finite()
}

fn rel_change(new: Complex64, old: Complex64) -> f64 {
    (new - old).norm() / new.norm().max(1e-300)
}

/// Solves the coupled system at `z` (with `Im z > 0`). `warm` optionally
/// supplies a starting `(delta, delta_t)`, e.g. from a neighbouring point.
pub fn solve_stieltjes(
    z: Complex64,
    inputs: &SpectralInputs,
    tol: f64,
    warm: Option<(Complex64, Complex64)>,
) -> Result<StieltjesSolution> {
    if !(z.im > 0.0) {
        return Err(stieltjes_err(
            z,
            "z must lie in the upper half plane".into(),
        ));
    }
    let cold = (-1.0 / z, -1.0 / z);
    let mut start = warm
        .filter(|(d, dt)| finite(*d) && finite(*dt) && d.im > 0.0 && dt.im > 0.0)
        .unwrap_or(cold);
    let mut damping = 1.0;
    for _ in 0..=MAX_RESTARTS {
        match solve_once(z, inputs, tol, start, damping) {
            Ok(sol) => return Ok(sol),
            Err(SolveFailure::Breakdown) => {
                start = cold;
                damping *= 0.5;
            }
            Err(SolveFailure::Stalled { change, delta_t }) => {
                return Err(stieltjes_err(
                    z,
                    format!("no convergence, last delta_t {delta_t}, relative change {change:e}"),
                ))
            }
        }
    }
    Err(stieltjes_err(
        z,
        "zero denominators after damped restarts".into(),
    ))
}

fn stieltjes_err(z: Complex64, reason: String) -> Error {
    Error::Stieltjes {
        re: z.re,
        im: z.im,
        reason,
    }
}

enum SolveFailure {
    Breakdown,
    Stalled { change: f64, delta_t: Complex64 },
}

fn accept(
    z: Complex64,
    inputs: &SpectralInputs,
    delta_t: Complex64,
    iterations: usize,
) -> Option<StieltjesSolution> {
    let (delta, _) = inputs.delta_update(z, delta_t);
    let m = inputs.m_of(z, delta_t);
    let ok = finite(m) && delta_t.im > 0.0 && delta.im > 0.0 && m.im > -1e-14 * m.norm();
    ok.then_some(StieltjesSolution {
        m,
        delta,
        delta_t,
        iterations,
    })
}

fn solve_once(
    z: Complex64,
    inputs: &SpectralInputs,
    tol: f64,
    start: (Complex64, Complex64),
    damping: f64,
) -> std::result::Result<StieltjesSolution, SolveFailure> {
    let (mut delta, mut delta_t) = start;
    let mut iterations = 0;

    // Alternation warm-up keeps the iterate inside the upper half plane.
    for _ in 0..ALTERNATION_WARMUP {
        iterations += 1;
        let (dt_new, _) = inputs.tilde_update(z, delta);
        let dt_new = delta_t + damping * (dt_new - delta_t);
        let (d_new, _) = inputs.delta_update(z, dt_new);
        if !finite(dt_new) || !finite(d_new) {
            return Err(SolveFailure::Breakdown);
        }
        let change = rel_change(dt_new, delta_t).max(rel_change(d_new, delta));
        delta = d_new;
        delta_t = dt_new;
        if change <= tol {
            if let Some(sol) = accept(z, inputs, delta_t, iterations) {
                return Ok(sol);
            }
        }
    }

    // Newton on F(dt) = dt - T(D(dt)).
    let residual = |dt: Complex64| {
        let (d, dd) = inputs.delta_update(z, dt);
        let (t, dtd) = inputs.tilde_update(z, d);
        (dt - t, 1.0 - dtd * dd)
    };
    let mut x = delta_t;
    let (mut f, mut df) = residual(x);
    for _ in 0..NEWTON_MAX_ITER {
        iterations += 1;
        if !finite(f) || !finite(df) || df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = x - step * lambda;
            let (d_c, _) = inputs.delta_update(z, cand);
            if cand.im > 0.0 && d_c.im > 0.0 {
                let (fc, dfc) = residual(cand);
                if finite(fc) && fc.norm() < f.norm() {
                    x = cand;
                    f = fc;
                    df = dfc;
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
        if (step * lambda).norm() <= tol * x.norm() {
            if let Some(sol) = accept(z, inputs, x, iterations) {
                return Ok(sol);
            }
            break;
        }
    }

    // Fallback: long alternation with damping on oscillation.
    let mut delta_t = if x.im > 0.0 && finite(x) { x } else { delta_t };
    let mut delta = inputs.delta_update(z, delta_t).0;
    let mut damping = damping;
    let mut last_step = Complex64::new(0.0, 0.0);
    let mut flips = 0;
    let mut change = f64::INFINITY;
    for _ in 0..ALTERNATION_MAX_ITER {
        iterations += 1;
        let (target, _) = inputs.tilde_update(z, delta);
        let step = target - delta_t;
        let dt_new = delta_t + damping * step;
        let (d_new, _) = inputs.delta_update(z, dt_new);
        if !finite(dt_new) || !finite(d_new) {
            return Err(SolveFailure::Breakdown);
        }
        if step.re * last_step.re + step.im * last_step.im < 0.0 {
            flips += 1;
            if flips >= OSCILLATION_WINDOW {
                damping *= 0.5;
                flips = 0;
            }
        } else {
            flips = 0;
        }
        last_step = step;
        change = rel_change(dt_new, delta_t).max(rel_change(d_new, delta));
        delta = d_new;
        delta_t = dt_new;
        if change <= tol {
            if let Some(sol) = accept(z, inputs, delta_t, iterations) {
                return Ok(sol);
            }
        }
    }
    Err(SolveFailure::Stalled { change, delta_t })
}

/// Scalar equation for `C = I`:
/// `m = 1 / (-z + (1/n) sum_i w_i / (1 + c w_i m))`, `w_i = psi(tau_i gamma) / gamma`,
/// solved by fixed-point iteration followed by Newton's method.
pub fn identity_case_m(
    z: Complex64,
    taus: &[f64],
    gamma: f64,
    c: f64,
    w: &WeightFunction,
    tol: f64,
) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(stieltjes_err(
            z,
            "z must lie in the upper half plane".into(),
        ));
    }
    if !(gamma > 0.0) || taus.is_empty() {
        return Err(Error::InvalidArgument(
            "gamma must be positive and taus nonempty".into(),
        ));
    }
    let inv_gamma = 1.0 / gamma;
    let psis: Vec<f64> = taus.iter().map(|&t| w.psi(t * gamma)).collect();
    let n = taus.len() as f64;
    // map G(m) and its derivative
    let g = |m: Complex64| -> (Complex64, Complex64) {
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = Complex64::new(0.0, 0.0);
        for &p in &psis {
            let r = 1.0 / (1.0 + c * inv_gamma * p * m);
            s += p * r;
            ds += c * inv_gamma * p * p * r * r;
        }
        let denom = -z + inv_gamma * s / n;
        let dd = -inv_gamma * ds / n;
        let val = 1.0 / denom;
        (val, -dd * val * val)
    };
    let mut m = -1.0 / z;
    for _ in 0..ALTERNATION_WARMUP {
        let (next, _) = g(m);
        if !finite(next) {
            return Err(stieltjes_err(
                z,
                "breakdown in identity-case iteration".into(),
            ));
        }
        let change = rel_change(next, m);
        m = next;
        if change <= tol {
            return Ok(m);
        }
    }
    for _ in 0..NEWTON_MAX_ITER {
        let (gm, dg) = g(m);
        let f = m - gm;
        let df = 1.0 - dg;
        let step = f / df;
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = m - step * lambda;
            if cand.im > 0.0 && finite(cand) {
                let (gc, _) = g(cand);
                if (cand - gc).norm() < f.norm() {
                    m = cand;
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
        if (step * lambda).norm() <= tol * m.norm() {
            return Ok(m);
        }
    }
    // slow but safe fallback
    let mut change = f64::INFINITY;
    for _ in 0..ALTERNATION_MAX_ITER {
        let (next, _) = g(m);
        change = rel_change(next, m);
        m = next;
        if change <= tol {
            return Ok(m);
        }
    }
    Err(stieltjes_err(
        z,
        format!("identity-case equation did not converge ({change:e})"),
    ))
}
