use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_from, FitResult, ObjectiveConfig, Penalty};
use crate::measures::{InformationCriterion, DEFAULT_EBIC_GAMMA};
use crate::model::{all_slots, Edge, EdgeSet, ModelSpec, NetworkTarget, ParameterState};
use crate::moments::SampleMoments;

/// `n` points spaced evenly on the log scale from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPathConfig {
    pub target: NetworkTarget,
    /// Strictly increasing penalty weights.
    pub nu_sequence: Vec<f64>,
    /// Partial correlations at or below this magnitude count as absent.
    pub epsilon: f64,
    pub criterion: InformationCriterion,
    /// Optimizer settings; the penalty field is overwritten along the path.
    #[serde(default)]
    pub objective: ObjectiveConfig,
}

impl LassoPathConfig {
    pub fn new(target: NetworkTarget) -> Self {
        LassoPathConfig {
            target,
            nu_sequence: log_spaced(0.01, 1.0, 20),
            epsilon: 1e-4,
            criterion: InformationCriterion::Ebic {
                gamma: DEFAULT_EBIC_GAMMA,
            },
            objective: ObjectiveConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu_sequence.is_empty() {
            return Err(Error::InvalidConfig("nu sequence is empty".into()));
        }
        if self.nu_sequence.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.nu_sequence.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig(
                "nu sequence must be non-negative and strictly increasing".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        self.objective.validate()
    }
}

/// Penalized fit at one point of the path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub nu: f64,
    /// `None` when the fit failed or did not converge.
    pub fit: Option<FitResult>,
    pub edges: EdgeSet,
    /// Free parameters outside the target plus retained target edges.
    pub k: usize,
}

/// Serializable summary of a path point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub nu: f64,
    pub converged: bool,
    #[serde(with = "crate::io::nullable_f64")]
    pub f_min: f64,
    pub k: usize,
    pub edges: usize,
    #[serde(with = "crate::io::nullable_f64")]
    pub criterion: f64,
}

#[derive(Debug, Clone)]
pub struct LassoResult {
    pub best_nu: f64,
    pub selected: EdgeSet,
    pub refit_spec: ModelSpec,
    /// Unpenalized refit of the selected network.
    pub refit: FitResult,
    pub path: Vec<PathRecord>,
}

/// Fits the penalized model along `config.nu_sequence`, each fit warm-started
/// from the previous solution.
pub fn lasso_path(spec: &ModelSpec, moments: &SampleMoments, config: &LassoPathConfig) -> Result<Vec<PathPoint>> {
    config.validate()?;
    let omega_id = config.target.omega();
    let nodes = spec
        .matrix(omega_id)
        .ok_or_else(|| Error::InvalidSpec(format!("spec has no {} matrix", omega_id.name())))?
        .rows();
    if nodes < 2 {
        return Err(Error::EmptyModelSpace);
    }
    let full = spec.with_network_edges(config.target, &all_slots(nodes).collect())?;
    let network_k = full.matrix(omega_id).unwrap().free_count();
    let other_k = full.free_parameters() - network_k;

    let mut start = ParameterState::from_starts(&full);
    let mut points = Vec::with_capacity(config.nu_sequence.len());
    for &nu in &config.nu_sequence {
        let objective = ObjectiveConfig {
            penalty: Penalty::Lasso {
                nu,
                target: omega_id,
                smoothing_tau: 1e-8,
            },
            ..config.objective.clone()
        };
        let fit = fit_from(&full, moments, &objective, &start).ok().filter(|f| f.converged);
        let (edges, k) = match &fit {
            Some(f) => {
                start = f.params.clone();
                let edges = retained_edges(&f.params, omega_id, config.epsilon);
                let k = other_k + edges.len();
                (edges, k)
            }
            None => (EdgeSet::new(), 0),
        };
        points.push(PathPoint { nu, fit, edges, k });
    }
    Ok(points)
}

fn retained_edges(params: &ParameterState, omega: crate::model::MatrixId, epsilon: f64) -> EdgeSet {
    params
        .slots()
        .iter()
        .zip(params.values())
        .filter(|(s, v)| s.matrix == omega && v.abs() > epsilon)
        .map(|(s, _)| Edge::new(s.row, s.col))
        .collect()
}

/// Index of the path point minimizing `criterion`; the first one on ties.
pub fn select_from_path(points: &[PathPoint], criterion: InformationCriterion, moments: &SampleMoments) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, point) in points.iter().enumerate() {
        let Some(fit) = &point.fit else { continue };
        let value = criterion.evaluate(fit.f_min, point.k, moments);
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((i, value));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::AllPathsFailed)
}

/// Refits the network selected at `points[index]` without penalty.
pub fn refit_selected(
    spec: &ModelSpec,
    moments: &SampleMoments,
    config: &LassoPathConfig,
    point: &PathPoint,
) -> Result<(ModelSpec, FitResult)> {
    let refit_spec = spec.with_network_edges(config.target, &point.edges)?;
    let start = match &point.fit {
        Some(f) => {
            let full = spec.with_network_edges(
                config.target,
                &all_slots(spec.matrix(config.target.omega()).unwrap().rows()).collect(),
            )?;
            ParameterState::from_matrices(&refit_spec, &f.params.to_matrices(&full))
        }
        None => ParameterState::from_starts(&refit_spec),
    };
    let objective = ObjectiveConfig {
        penalty: Penalty::None,
        ..config.objective.clone()
    };
    let refit = fit_from(&refit_spec, moments, &objective, &start)?;
    Ok((refit_spec, refit))
}

/// Penalized path, selection of the best penalty by `config.criterion`, and
/// an unpenalized refit of the selected network.
pub fn lasso_search(spec: &ModelSpec, moments: &SampleMoments, config: &LassoPathConfig) -> Result<LassoResult> {
    let points = lasso_path(spec, moments, config)?;
    let index = select_from_path(&points, config.criterion, moments)?;
    let (refit_spec, refit) = refit_selected(spec, moments, config, &points[index])?;
    let path = points
        .iter()
        .map(|pt| PathRecord {
            nu: pt.nu,
            converged: pt.fit.is_some(),
            f_min: pt.fit.as_ref().map_or(f64::NAN, |f| f.f_min),
            k: pt.k,
            edges: pt.edges.len(),
            criterion: pt
                .fit
                .as_ref()
                .map_or(f64::NAN, |f| config.criterion.evaluate(f.f_min, pt.k, moments)),
        })
        .collect();
    Ok(LassoResult {
        best_nu: points[index].nu,
        selected: points[index].edges.clone(),
        refit_spec,
        refit,
        path,
    })
}
