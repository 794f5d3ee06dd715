//! Simulated populations, data and edge-recovery scoring for the four
//! simulation-study designs.

mod generator;
mod study;

pub use generator::{
    alternating_ring, cov_to_cor, generate_network, ring, sample_data, sample_from_covariance, sample_raw,
    score_network, GeneratedNetwork, NetworkGeneratorConfig, NetworkScore, Structure, WeightDistribution,
};
pub use study::{
    replication_rng, run_study, simulate_cell, true_model, ConditionSummary, Study, StudyConfig, StudyResult,
    StudyRow, TrueModel, TrueModelParams,
};
