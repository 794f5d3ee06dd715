//! Model algebra: matrix patterns, parameter vectors and implied covariances
//! for CFA, SEM, GGM, latent network (LNM) and residual network (RNM) models.

mod edge;
mod implied;
mod matrix;
mod network;
mod params;
mod spec;

pub use edge::{all_slots, slot_count, Edge, EdgeSet};
pub use implied::{implied_covariance, AssembledBlock, Assembly, SINGULAR_CONDITION};
pub use matrix::{Entry, MatrixSpec, Symmetry};
pub use network::{network_to_covariance, network_to_partial_correlations, precision_to_network};
pub use params::{free_slots, BlockValues, ModelMatrices, ParameterState, Slot};
pub use spec::{unique_moments, Block, MatrixId, ModelSpec, NetworkTarget};
