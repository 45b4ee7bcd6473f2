//! Deterministic large-dimensional quantities: the scalar `gamma_N`, the
//! equivalent matrix `S_N`, and the limiting spectral density of both.

mod density;
mod gamma;
pub mod quadrature;
mod stieltjes;

pub use density::{density_on_grid, detect_support, DensityOptions, SpectralDensity};
pub use gamma::{
    build_equivalent, gamma_residual, h_map, limiting_gamma, solve_gamma, GammaSolution,
};
pub use stieltjes::{identity_case_m, solve_stieltjes, SpectralInputs, StieltjesSolution};
