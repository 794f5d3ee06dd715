//! Gaussian covariance-structure models whose latent or residual covariance
//! matrices are parameterized as Gaussian graphical models.
//!
//! The crate covers confirmatory fitting of CFA/SEM, GGM, latent network
//! (LNM) and residual network (RNM) models, stepwise and LASSO network
//! search, fit measures, and the simulation harness used to study edge
//! recovery.

pub mod error;
pub mod estimator;
pub mod io;
pub mod measures;
pub mod model;
pub mod moments;
pub mod search;
pub mod simulation;

pub use error::{Error, Result};
pub use estimator::{fit, fit_from, FitResult, ObjectiveConfig, Penalty};
pub use measures::{compute_measures, FitMeasures};
pub use model::{Edge, EdgeSet, MatrixId, ModelSpec, NetworkTarget, ParameterState};
pub use moments::SampleMoments;
