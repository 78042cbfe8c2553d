//! Nonlinear least squares and Poisson estimators.

mod linalg;
mod models;
mod nlls;
mod poisson;

pub use linalg::{cholesky_solve, invert_spd};
pub use models::{
    g2_model, g2_two_level_model, linear_model, lorentzian, lorentzian_model, saturation_model,
};
pub use nlls::{finite_difference_jacobian, fit_nlls, fit_nlls_with, FitOptions, ModelSpec};
pub use poisson::{poisson_lsq, poisson_mle, ztp_lambda_from_mean, ztp_mean, ztp_mle, PoissonFit};
