//! Maximum-likelihood and LASSO-penalized estimation.

mod fit;
mod objective;
mod quasi_newton;

pub use fit::{fit, fit_from, FitResult};
pub use objective::{discrepancy, gradient, penalized_discrepancy, ObjectiveConfig, Penalty};
