//! The weight function `u` and its derived transforms.
//!
//! Besides `u` itself the estimator theory needs
//!
//! * `phi(x) = x u(x)`, increasing with supremum `phi_inf`,
//! * `g(x) = x / (1 - c phi(x))`, a bijection of `[0, inf)`,
//! * `v = u o g^{-1}` and `psi(x) = x v(x)`, with supremum
//!   `psi_inf = phi_inf / (1 - c phi_inf)`.
//!
//! `c` is the aspect ratio `N / n` of the data the weight is used with; a
//! [`WeightFunction`] is bound to one aspect ratio.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative bracket width at which the inversion of `g` stops.
pub const G_INV_REL_TOL: f64 = 1e-12;
const G_INV_MAX_ITER: usize = 200;

/// Number of log-spaced points used to sample-check a custom `u`.
const CUSTOM_CHECK_POINTS: usize = 1024;
/// Abscissa at which a declared `phi_inf` is compared with `phi`.
const PHI_INF_PROBE: f64 = 1e9;

type UFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A caller-supplied weight function together with its declared `phi_inf`.
#[derive(Clone)]
pub struct CustomWeight {
    pub name: String,
    pub u: UFn,
    pub phi_inf: f64,
}

impl CustomWeight {
    pub fn new<F>(name: impl Into<String>, phi_inf: f64, u: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            u: Arc::new(u),
            phi_inf,
        }
    }
}

impl fmt::Debug for CustomWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomWeight")
            .field("name", &self.name)
            .field("phi_inf", &self.phi_inf)
            .finish_non_exhaustive()
    }
}

/// Description of a weight function `u`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `u(t) = (1 + alpha) / (alpha + t)`.
    StudentType { alpha: f64 },
    #[serde(skip)]
    Custom(CustomWeight),
}

/// Custom weights compare equal only when they share the same closure.
impl PartialEq for WeightSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (WeightSpec::StudentType { alpha: a }, WeightSpec::StudentType { alpha: b }) => a == b,
            (WeightSpec::Custom(a), WeightSpec::Custom(b)) => {
                a.name == b.name && a.phi_inf == b.phi_inf && Arc::ptr_eq(&a.u, &b.u)
            }
            _ => false,
        }
    }
}

impl WeightSpec {
    pub fn student(alpha: f64) -> Self {
        WeightSpec::StudentType { alpha }
    }
}

/// A validated weight function bound to an aspect ratio `c`.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    spec: WeightSpec,
    c: f64,
    phi_inf: f64,
    psi_inf: f64,
}

impl WeightFunction {
    /// Validates `spec` against the aspect ratio `c` and builds the transforms.
    pub fn new(spec: WeightSpec, c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidWeight(format!(
                "aspect ratio c = {c} must lie in (0, 1)"
            )));
        }
        let phi_inf = match &spec {
            WeightSpec::StudentType { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidWeight(format!(
                        "alpha = {alpha} must be positive"
                    )));
                }
                1.0 + alpha
            }
            WeightSpec::Custom(cw) => {
                check_custom(cw)?;
                cw.phi_inf
            }
        };
        if !(phi_inf > 1.0) {
            return Err(Error::InvalidWeight(format!(
                "phi_inf = {phi_inf} must exceed 1"
            )));
        }
        if !(phi_inf < 1.0 / c) {
            return Err(Error::InvalidWeight(format!(
                "phi_inf = {phi_inf} must be below 1/c = {}",
                1.0 / c
            )));
        }
        let psi_inf = phi_inf / (1.0 - c * phi_inf);
        Ok(Self {
            spec,
            c,
            phi_inf,
            psi_inf,
        })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn phi_inf(&self) -> f64 {
        self.phi_inf
    }

    pub fn psi_inf(&self) -> f64 {
        self.psi_inf
    }

    /// Same weight family bound to a different aspect ratio.
    pub fn with_aspect_ratio(&self, c: f64) -> Result<Self> {
        Self::new(self.spec.clone(), c)
    }

    #[inline]
    pub fn u(&self, t: f64) -> f64 {
        match &self.spec {
            WeightSpec::StudentType { alpha } => (1.0 + alpha) / (alpha + t),
            WeightSpec::Custom(cw) => (cw.u)(t),
        }
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        match &self.spec {
            // written to stay finite as x -> inf
            WeightSpec::StudentType { alpha } => (1.0 + alpha) * x / (alpha + x),
            WeightSpec::Custom(cw) => x * (cw.u)(x),
        }
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        x / (1.0 - self.c * self.phi(x))
    }

    /// Inverse of `g` by bracketed bisection.
    pub fn g_inv(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y.is_infinite() {
            return f64::INFINITY;
        }
        // g(x) >= x, so the root lies below y; g(x) <= x / (1 - c phi_inf)
        // gives a lower bracket.
        let mut lo = y * (1.0 - self.c * self.phi_inf);
        let mut hi = y;
        if self.g(lo) > y {
            lo = 0.0;
        }
        while self.g(hi) < y {
            lo = hi;
            hi *= 2.0;
        }
        // Illinois-modified false position; falls back to bisection when the
        // secant point leaves the bracket.
        let mut f_lo = self.g(lo) - y;
        let mut f_hi = self.g(hi) - y;
        let mut side = 0i8;
        let mut best = 0.5 * (lo + hi);
        for _ in 0..G_INV_MAX_ITER {
            if hi - lo <= G_INV_REL_TOL * hi {
                break;
            }
            let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            best = x;
            let fx = self.g(x) - y;
            if fx == 0.0 {
                return x;
            }
            if fx < 0.0 {
                lo = x;
                f_lo = fx;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = x;
                f_hi = fx;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        if hi - lo <= G_INV_REL_TOL * hi {
            best.clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        }
    }

    #[inline]
    pub fn v(&self, x: f64) -> f64 {
        self.u(self.g_inv(x))
    }

    #[inline]
    pub fn psi(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        x * self.v(x)
    }

    /// `psi` through `phi(g^{-1}(x)) / (1 - c phi(g^{-1}(x)))`.
    pub fn psi_via_phi(&self, x: f64) -> f64 {
        let p = self.phi(self.g_inv(x));
        p / (1.0 - self.c * p)
    }
}

fn check_custom(cw: &CustomWeight) -> Result<()> {
    if !(cw.phi_inf.is_finite()) {
        return Err(Error::InvalidWeight(format!(
            "{}: declared phi_inf must be finite",
            cw.name
        )));
    }
    let u0 = (cw.u)(0.0);
    if !(u0 > 0.0 && u0.is_finite()) {
        return Err(Error::InvalidWeight(format!(
            "{}: u(0) = {u0} must be positive and finite",
            cw.name
        )));
    }
    let (lo, hi) = (1e-6_f64.ln(), PHI_INF_PROBE.ln());
    let mut prev_u = u0;
    let mut prev_phi = 0.0;
    for k in 0..CUSTOM_CHECK_POINTS {
        let t = (lo + (hi - lo) * k as f64 / (CUSTOM_CHECK_POINTS - 1) as f64).exp();
        let u = (cw.u)(t);
        let phi = t * u;
        if !(u > 0.0) || u > prev_u {
            return Err(Error::InvalidWeight(format!(
                "{}: u must be positive and non-increasing (fails at t = {t:e})",
                cw.name
            )));
        }
        if !(phi > prev_phi) {
            return Err(Error::InvalidWeight(format!(
                "{}: phi must be strictly increasing (fails at t = {t:e})",
                cw.name
            )));
        }
        prev_u = u;
        prev_phi = phi;
    }
    let probe = PHI_INF_PROBE * (cw.u)(PHI_INF_PROBE);
    if !(probe <= cw.phi_inf && cw.phi_inf <= probe * (1.0 + 1e-3)) {
        return Err(Error::InvalidWeight(format!(
            "{}: declared phi_inf = {} inconsistent with phi(1e9) = {probe}",
            cw.name, cw.phi_inf
        )));
    }
    Ok(())
}
