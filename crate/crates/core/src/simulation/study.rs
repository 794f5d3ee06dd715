use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{
    alternating_ring, generate_network, ring, sample_from_covariance, score_network, NetworkGeneratorConfig,
    Structure, WeightDistribution,
};
use crate::error::{Error, Result};
use crate::estimator::{ObjectiveConfig, FitResult};
use crate::measures::{InformationCriterion, DEFAULT_EBIC_GAMMA};
use crate::model::{slot_count, EdgeSet, ModelSpec, NetworkTarget};
use crate::moments::SampleMoments;
use crate::search::{
    lasso_path, log_spaced, refit_selected, select_from_path, stepwise_search, LassoPathConfig, SearchConfig,
    SearchCriterion,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    LnmStepwise,
    RnmStepwise,
    LnmLasso,
    RnmLasso,
}

impl Study {
    pub fn number(self) -> u8 {
        match self {
            Study::LnmStepwise => 1,
            Study::RnmStepwise => 2,
            Study::LnmLasso => 3,
            Study::RnmLasso => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Study::LnmStepwise),
            2 => Some(Study::RnmStepwise),
            3 => Some(Study::LnmLasso),
            4 => Some(Study::RnmLasso),
            _ => None,
        }
    }

    pub fn target(self) -> NetworkTarget {
        match self {
            Study::LnmStepwise | Study::LnmLasso => NetworkTarget::Psi,
            Study::RnmStepwise | Study::RnmLasso => NetworkTarget::Theta,
        }
    }

    pub fn is_lasso(self) -> bool {
        matches!(self, Study::LnmLasso | Study::RnmLasso)
    }

    /// `(factors, indicators per factor)`.
    pub fn shape(self) -> (usize, usize) {
        match self {
            Study::LnmStepwise => (4, 3),
            Study::RnmStepwise => (2, 5),
            Study::LnmLasso => (8, 3),
            Study::RnmLasso => (4, 5),
        }
    }

    /// Edges of the true network.
    ///
    /// Latent networks are a ring over the factors. Residual networks pair
    /// consecutive factors and run a ring that alternates between their
    /// indicators, so every residual links to two indicators of the other factor.
    pub fn true_edges(self) -> EdgeSet {
        let (m, k) = self.shape();
        match self.target() {
            NetworkTarget::Psi => ring(&(0..m).collect::<Vec<_>>()),
            NetworkTarget::Theta => (0..m / 2)
                .flat_map(|pair| {
                    let a: Vec<usize> = (0..k).map(|i| 2 * pair * k + i).collect();
                    let b: Vec<usize> = (0..k).map(|i| (2 * pair + 1) * k + i).collect();
                    alternating_ring(&a, &b)
                })
                .collect(),
        }
    }

    pub fn nodes(self) -> usize {
        let (m, k) = self.shape();
        match self.target() {
            NetworkTarget::Psi => m,
            NetworkTarget::Theta => m * k,
        }
    }

    pub fn observed_labels(self) -> Vec<String> {
        let (m, k) = self.shape();
        (1..=m * k).map(|i| format!("y{i}")).collect()
    }

    /// The model fitted to each simulated dataset, before search.
    pub fn template(self) -> Result<ModelSpec> {
        let (m, k) = self.shape();
        let latent = (1..=m).map(|i| format!("f{i}")).collect();
        let assignment: Vec<usize> = (0..m * k).map(|i| i / k).collect();
        let cfa = ModelSpec::cfa(self.observed_labels(), latent, &assignment)?;
        match self.target() {
            NetworkTarget::Psi => cfa.with_latent_network(&crate::model::all_slots(m).collect()),
            NetworkTarget::Theta => cfa.with_residual_network(&EdgeSet::new()),
        }
    }
}

/// Population values shared by all studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModelParams {
    pub loading: f64,
    pub residual_variance: f64,
    pub latent_variance: f64,
    /// Factor covariance in residual-network studies.
    pub factor_covariance: f64,
}

impl Default for TrueModelParams {
    fn default() -> Self {
        TrueModelParams {
            loading: 1.0,
            residual_variance: 1.0,
            latent_variance: 1.0,
            factor_covariance: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: Study,
    pub n_grid: Vec<usize>,
    pub criteria: Vec<SearchCriterion>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub truth: TrueModelParams,
    #[serde(default)]
    pub weights: WeightDistribution,
    /// Penalty grid for LASSO studies.
    #[serde(default = "default_nu_grid")]
    pub nu_sequence: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_nu_grid() -> Vec<f64> {
    log_spaced(0.01, 1.0, 20)
}

fn default_epsilon() -> f64 {
    1e-4
}

const FULL_REPLICATIONS: usize = 1000;
const DESK_REPLICATIONS: usize = 100;

impl StudyConfig {
    /// Desk-scale design: the full sample-size grid with 100 replications.
    pub fn desk(study: Study, seed: u64) -> Self {
        let ebic = InformationCriterion::Ebic {
            gamma: DEFAULT_EBIC_GAMMA,
        };
        let mut criteria = vec![
            SearchCriterion::Information(InformationCriterion::Aic),
            SearchCriterion::Information(InformationCriterion::Bic),
            SearchCriterion::Information(ebic),
        ];
        if !study.is_lasso() {
            criteria.insert(0, SearchCriterion::ChiSquare { alpha: 0.05 });
        }
        let n_grid = if study.is_lasso() {
            vec![100, 250, 500, 1000, 2500]
        } else {
            vec![50, 100, 250, 500, 1000]
        };
        StudyConfig {
            study,
            n_grid,
            criteria,
            replications: DESK_REPLICATIONS,
            seed,
            truth: TrueModelParams::default(),
            weights: WeightDistribution::default(),
            nu_sequence: default_nu_grid(),
            epsilon: default_epsilon(),
        }
    }

    /// Design with the replication count of the original studies.
    pub fn full(study: Study, seed: u64) -> Self {
        StudyConfig {
            replications: FULL_REPLICATIONS,
            ..Self::desk(study, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("sample sizes must be at least 2".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::InvalidConfig("no criteria given".into()));
        }
        for c in &self.criteria {
            match c {
                SearchCriterion::ChiSquare { alpha } => {
                    if self.study.is_lasso() {
                        return Err(Error::InvalidConfig(
                            "chi-square selection is not available for LASSO studies".into(),
                        ));
                    }
                    if !(*alpha > 0.0 && *alpha < 1.0) {
                        return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
                    }
                }
                SearchCriterion::Information(_) => {}
            }
        }
        self.weights.validate()?;
        self.lasso_config().validate()
    }

    fn lasso_config(&self) -> LassoPathConfig {
        LassoPathConfig {
            target: self.study.target(),
            nu_sequence: self.nu_sequence.clone(),
            epsilon: self.epsilon,
            criterion: InformationCriterion::Aic,
            objective: ObjectiveConfig::default(),
        }
    }
}

/// One simulated population.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub sigma: DMatrix<f64>,
    pub edges: EdgeSet,
    /// True partial correlations of the target network.
    pub omega: DMatrix<f64>,
    pub generator_retries: u64,
}

/// Builds the population covariance of `study` around a freshly generated network.
pub fn true_model(config: &StudyConfig, network_seed: u64) -> Result<TrueModel> {
    let study = config.study;
    let (m, k) = study.shape();
    let p = m * k;
    let net = generate_network(&NetworkGeneratorConfig {
        structure: Structure::Given {
            nodes: study.nodes(),
            edges: study.true_edges(),
        },
        weights: config.weights.clone(),
        seed: network_seed,
    })?;
    // unit-diagonal precision with a unit scaling matrix: the block is K^-1
    let network_cov = net
        .precision
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { what: "generated precision matrix" })?
        .inverse();
    let t = &config.truth;
    let lambda = DMatrix::from_fn(p, m, |i, j| if i / k == j { t.loading } else { 0.0 });
    let (psi, theta) = match study.target() {
        NetworkTarget::Psi => (network_cov * t.latent_variance, DMatrix::identity(p, p) * t.residual_variance),
        NetworkTarget::Theta => (
            DMatrix::from_fn(m, m, |i, j| if i == j { t.latent_variance } else { t.factor_covariance }),
            network_cov * t.residual_variance,
        ),
    };
    let sigma = &lambda * psi * lambda.transpose() + theta;
    Ok(TrueModel {
        sigma,
        edges: net.edges,
        omega: net.omega,
        generator_retries: net.retries,
    })
}

/// Generator for one `(sample size index, replication)` cell, independent of
/// every other cell and of evaluation order.
pub fn replication_rng(seed: u64, n_index: usize, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n_index as u64) << 32) | replication as u64);
    rng
}

/// Population and data of one study cell.
pub fn simulate_cell(config: &StudyConfig, n_index: usize, replication: usize) -> Result<(TrueModel, SampleMoments)> {
    let mut rng = replication_rng(config.seed, n_index, replication);
    let network_seed = rng.next_u64();
    let data_seed = rng.next_u64();
    let truth = true_model(config, network_seed)?;
    let n = config.n_grid[n_index];
    let (_, moments) = sample_from_covariance(&truth.sigma, config.study.observed_labels(), n, data_seed)?;
    Ok((truth, moments))
}

/// Outcome of one criterion on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub replication: usize,
    pub n: usize,
    pub criterion: String,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub estimated_edges: Option<usize>,
    pub converged: bool,
    /// Error that prevented an estimate, if any.
    pub failure: Option<String>,
    pub generator_retries: u64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
}

/// Runs every `(sample size, replication)` cell of a study. Failures are
/// recorded per row and never abort the study.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let template = config.study.template()?;
    let cells: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|ni| (0..config.replications).map(move |r| (ni, r)))
        .collect();
    let rows: Vec<Vec<StudyRow>> = cells
        .par_iter()
        .map(|&(ni, rep)| run_cell(config, &template, ni, rep))
        .collect();
    Ok(StudyResult {
        config: config.clone(),
        rows: rows.into_iter().flatten().collect(),
    })
}

fn run_cell(config: &StudyConfig, template: &ModelSpec, n_index: usize, replication: usize) -> Vec<StudyRow> {
    let n = config.n_grid[n_index];
    let start = Instant::now();
    let failed = |criterion: String, message: String, retries: u64, ms: f64| StudyRow {
        replication,
        n,
        criterion,
        sensitivity: None,
        specificity: None,
        estimated_edges: None,
        converged: false,
        failure: Some(message),
        generator_retries: retries,
        runtime_ms: ms,
    };
    let (truth, moments) = match simulate_cell(config, n_index, replication) {
        Ok(v) => v,
        Err(e) => {
            let ms = start.elapsed().as_secs_f64() * 1e3;
            return config
                .criteria
                .iter()
                .map(|c| failed(c.label(), e.to_string(), 0, ms))
                .collect();
        }
    };
    let slots = slot_count(config.study.nodes());
    let target = config.study.target();
    let row = |criterion: String, outcome: Result<(EdgeSet, FitResult)>, ms: f64| match outcome {
        Ok((edges, fit)) => {
            let score = score_network(&edges, &truth.edges, slots);
            StudyRow {
                replication,
                n,
                criterion,
                sensitivity: score.sensitivity,
                specificity: score.specificity,
                estimated_edges: Some(edges.len()),
                converged: fit.converged,
                failure: None,
                generator_retries: truth.generator_retries,
                runtime_ms: ms,
            }
        }
        Err(e) => failed(criterion, e.to_string(), truth.generator_retries, ms),
    };

    if config.study.is_lasso() {
        let path_start = Instant::now();
        let lasso = config.lasso_config();
        let path = lasso_path(template, &moments, &lasso);
        let path_ms = path_start.elapsed().as_secs_f64() * 1e3;
        config
            .criteria
            .iter()
            .map(|c| {
                let t = Instant::now();
                let SearchCriterion::Information(ic) = *c else {
                    unreachable!("validated");
                };
                let outcome = path.as_ref().map_err(clone_error).and_then(|points| {
                    let i = select_from_path(points, ic, &moments)?;
                    let (_, refit) = refit_selected(template, &moments, &lasso, &points[i])?;
                    Ok((points[i].edges.clone(), refit))
                });
                row(c.label(), outcome, path_ms + t.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    } else {
        config
            .criteria
            .iter()
            .map(|c| {
                let t = Instant::now();
                let search = SearchConfig::new(target, *c);
                let outcome = stepwise_search(template, &moments, &search).map(|trace| {
                    let edges = trace.final_edges(target);
                    (edges, trace.final_fit)
                });
                row(c.label(), outcome, t.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    }
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::EmptyModelSpace => Error::EmptyModelSpace,
        Error::AllPathsFailed => Error::AllPathsFailed,
        other => Error::InvalidConfig(other.to_string()),
    }
}

/// Aggregate over the replications of one `(n, criterion)` condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub n: usize,
    pub criterion: String,
    pub replications: usize,
    /// Rows without any estimate.
    pub failed: usize,
    /// Rows with an estimate whose final fit did not converge.
    pub nonconverged: usize,
    /// Means over every row with an estimate.
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// Means over converged rows only.
    pub sensitivity_converged: Option<f64>,
    pub specificity_converged: Option<f64>,
    pub median_sensitivity: Option<f64>,
    pub median_specificity: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}

impl StudyResult {
    /// One summary per `(n, criterion)`, in grid and criterion order.
    pub fn summary(&self) -> Vec<ConditionSummary> {
        let mut out = Vec::new();
        for &n in &self.config.n_grid {
            for c in &self.config.criteria {
                let label = c.label();
                let rows: Vec<&StudyRow> = self.rows.iter().filter(|r| r.n == n && r.criterion == label).collect();
                let collect = |f: &dyn Fn(&StudyRow) -> Option<f64>, converged_only: bool| -> Vec<f64> {
                    rows.iter()
                        .filter(|r| r.failure.is_none() && (!converged_only || r.converged))
                        .filter_map(|r| f(r))
                        .collect()
                };
                let sens = collect(&|r| r.sensitivity, false);
                let spec = collect(&|r| r.specificity, false);
                out.push(ConditionSummary {
                    n,
                    criterion: label,
                    replications: rows.len(),
                    failed: rows.iter().filter(|r| r.failure.is_some()).count(),
                    nonconverged: rows.iter().filter(|r| r.failure.is_none() && !r.converged).count(),
                    sensitivity: mean(&sens),
                    specificity: mean(&spec),
                    sensitivity_converged: mean(&collect(&|r| r.sensitivity, true)),
                    specificity_converged: mean(&collect(&|r| r.specificity, true)),
                    median_sensitivity: median(&sens),
                    median_specificity: median(&spec),
                });
            }
        }
        out
    }

    /// Condition summary for one `(n, criterion label)`.
    pub fn condition(&self, n: usize, criterion: &str) -> Option<ConditionSummary> {
        self.summary().into_iter().find(|s| s.n == n && s.criterion == criterion)
    }

    /// Per-replication table, tab separated. Runtimes are left out so that
    /// reruns produce identical bytes.
    pub fn rows_tsv(&self) -> String {
        let mut s = String::from(
            "study\treplication\tn\tcriterion\tsensitivity\tspecificity\testimated_edges\tconverged\tgenerator_retries\tfailure\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                self.config.study.number(),
                r.replication,
                r.n,
                r.criterion,
                opt(r.sensitivity),
                opt(r.specificity),
                r.estimated_edges.map_or("NA".into(), |v| v.to_string()),
                r.converged,
                r.generator_retries,
                r.failure.as_deref().unwrap_or("").replace(['\t', '\n'], " "),
            );
        }
        s
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from(
            "study\tn\tcriterion\treplications\tfailed\tnonconverged\tmean_sensitivity\tmean_specificity\t\
             mean_sensitivity_converged\tmean_specificity_converged\tmedian_sensitivity\tmedian_specificity\n",
        );
        for c in self.summary() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                self.config.study.number(),
                c.n,
                c.criterion,
                c.replications,
                c.failed,
                c.nonconverged,
                opt(c.sensitivity),
                opt(c.specificity),
                opt(c.sensitivity_converged),
                opt(c.specificity_converged),
                opt(c.median_sensitivity),
                opt(c.median_specificity),
            );
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| format!("{x:.6}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn designs_have_expected_sizes() {
        assert_eq!(Study::LnmStepwise.true_edges().len(), 4);
        assert_eq!(Study::LnmLasso.true_edges().len(), 8);
        assert_eq!(Study::RnmStepwise.true_edges().len(), 10);
        assert_eq!(Study::RnmLasso.true_edges().len(), 20);
        for s in [Study::LnmStepwise, Study::RnmStepwise, Study::LnmLasso, Study::RnmLasso] {
            assert!(s.true_edges().iter().all(|e| e.high() < s.nodes()));
            assert!(s.template().is_ok());
        }
    }

    #[test]
    fn residual_ring_links_each_residual_to_two_of_the_other_factor() {
        let edges = Study::RnmStepwise.true_edges();
        for node in 0..10 {
            let nbrs: Vec<usize> = edges
                .iter()
                .filter_map(|e| {
                    if e.low() == node {
                        Some(e.high())
                    } else if e.high() == node {
                        Some(e.low())
                    } else {
                        None
                    }
                })
                .collect();
            assert_eq!(nbrs.len(), 2);
            assert!(nbrs.iter().all(|&j| (j < 5) != (node < 5)));
        }
    }

    #[test]
    fn residual_network_study_has_fully_populated_theta_correlations() {
        let config = StudyConfig::desk(Study::RnmStepwise, 1);
        let t = true_model(&config, 9).unwrap();
        // within-factor residual pairs are correlated through the ring
        let k = t.sigma.clone().cholesky().unwrap().inverse();
        assert!(k.iter().all(|v| v.abs() > 0.0));
        let theta_cov = &t.sigma
            - DMatrix::from_fn(10, 10, |i, j| if i / 5 == j / 5 { 1.0 } else { 0.25 });
        assert!(theta_cov.iter().all(|v| v.abs() > 1e-8));
    }

    #[test]
    fn cells_are_reproducible() {
        let config = StudyConfig::desk(Study::LnmStepwise, 42);
        let (_, a) = simulate_cell(&config, 1, 3).unwrap();
        let (_, b) = simulate_cell(&config, 1, 3).unwrap();
        let (_, c) = simulate_cell(&config, 1, 4).unwrap();
        assert_eq!(a.s(), b.s());
        assert_ne!(a.s(), c.s());
    }

    #[test]
    fn tiny_study_runs_and_is_deterministic() {
        let mut config = StudyConfig::desk(Study::LnmStepwise, 5);
        config.n_grid = vec![300];
        config.replications = 2;
        let a = run_study(&config).unwrap();
        let b = run_study(&config).unwrap();
        assert_eq!(a.rows.len(), 2 * 4);
        assert_eq!(a.summary_tsv(), b.summary_tsv());
        assert_eq!(a.rows_tsv(), b.rows_tsv());
        for r in &a.rows {
            if let Some(s) = r.sensitivity {
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = StudyConfig::desk(Study::LnmLasso, 1);
        c.criteria.push(SearchCriterion::ChiSquare { alpha: 0.05 });
        assert!(c.validate().is_err());
        let mut c = StudyConfig::desk(Study::LnmStepwise, 1);
        c.replications = 0;
        assert!(c.validate().is_err());
    }
}
