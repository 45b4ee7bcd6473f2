//! Robust scatter M-estimation for elliptical samples and the deterministic
//! large-dimensional description of its spectrum.
//!
//! * [`weights`]: the weight function `u` and the transforms `phi`, `g`, `v`, `psi`.
//! * [`sampling`]: elliptical data `x_i = sqrt(tau_i) A y_i`.
//! * [`estimator`]: the fixed-point estimator, by two independent routes.
//! * [`rmt`]: `gamma_N`, the equivalent matrix `S_N` and the limiting density.
//! * [`histogram`], [`experiment`], [`config`], [`io`]: batch front-end pieces.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod histogram;
pub mod io;
pub mod linalg;
pub mod par;
pub mod rmt;
pub mod sampling;
pub mod weights;

pub use error::{Error, Result};
pub use estimator::{EstimateResult, EstimatorConfig, Init, Route};
pub use sampling::{ModelSpec, SampleSet, ScatterModel, ScatterSpec, TauDistribution};
pub use weights::{CustomWeight, WeightFunction, WeightSpec};
