use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_from, FitResult, ObjectiveConfig};
use crate::measures::{lr_test, InformationCriterion};
use crate::model::{all_slots, Edge, EdgeSet, ModelSpec, NetworkTarget, ParameterState};
use crate::moments::SampleMoments;

/// Rule for accepting a single edge toggle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchCriterion {
    /// Likelihood-ratio tests at level `alpha`.
    ChiSquare { alpha: f64 },
    Information(InformationCriterion),
}

impl SearchCriterion {
    pub fn label(&self) -> String {
        match self {
            SearchCriterion::ChiSquare { .. } => "chisq".into(),
            SearchCriterion::Information(ic) => ic.label().to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialNetwork {
    Empty,
    Full,
    Given(EdgeSet),
}

impl InitialNetwork {
    /// Starting network appropriate for a target: full for a latent
    /// network, empty for a residual network.
    pub fn recommended(target: NetworkTarget) -> Self {
        match target {
            NetworkTarget::Psi => InitialNetwork::Full,
            NetworkTarget::Theta => InitialNetwork::Empty,
        }
    }

    fn edges(&self, nodes: usize) -> EdgeSet {
        match self {
            InitialNetwork::Empty => EdgeSet::new(),
            InitialNetwork::Full => all_slots(nodes).collect(),
            InitialNetwork::Given(e) => e.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub target: NetworkTarget,
    pub criterion: SearchCriterion,
    pub initial: InitialNetwork,
    pub max_steps: usize,
    #[serde(default)]
    pub objective: ObjectiveConfig,
}

impl SearchConfig {
    pub fn new(target: NetworkTarget, criterion: SearchCriterion) -> Self {
        SearchConfig {
            target,
            criterion,
            initial: InitialNetwork::recommended(target),
            max_steps: 1000,
            objective: ObjectiveConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SearchCriterion::ChiSquare { alpha } = self.criterion {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        self.objective.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Add,
    Remove,
}

/// One evaluated toggle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub edge: Edge,
    /// Candidate information criterion, or the LRT chi-square difference in
    /// chi-square mode. `NaN` when the candidate fit failed.
    #[serde(with = "crate::io::nullable_f64")]
    pub criterion_value: f64,
    /// LRT p-value (chi-square mode only).
    pub p_value: Option<f64>,
    pub converged: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct SearchTrace {
    pub steps: Vec<StepRecord>,
    pub final_spec: ModelSpec,
    pub final_fit: FitResult,
    /// Criterion of the starting model followed by that of every accepted model.
    pub criterion_path: Vec<f64>,
}

impl SearchTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.accepted)
    }

    pub fn final_edges(&self, target: NetworkTarget) -> EdgeSet {
        self.final_spec.network_edges(target).unwrap_or_default()
    }
}

struct Candidate {
    action: Action,
    edge: Edge,
    spec: ModelSpec,
    fit: Option<FitResult>,
}

/// Stepwise network search by likelihood-ratio tests or by an information criterion.
///
/// Each step refits the model with every slot of the target network toggled
/// and applies the single best qualifying toggle. In chi-square mode an
/// addition that significantly improves fit takes priority over a removal
/// that does not significantly worsen it. Ties go to the lowest edge.
pub fn stepwise_search(
    spec: &ModelSpec,
    moments: &SampleMoments,
    config: &SearchConfig,
) -> Result<SearchTrace> {
    config.validate()?;
    let omega = spec.matrix(config.target.omega()).ok_or_else(|| {
        Error::InvalidSpec(format!("spec has no {} matrix", config.target.omega().name()))
    })?;
    let nodes = omega.rows();
    if nodes < 2 {
        return Err(Error::EmptyModelSpace);
    }

    let mut current_spec = spec.with_network_edges(config.target, &config.initial.edges(nodes))?;
    let mut current = fit_from(
        &current_spec,
        moments,
        &config.objective,
        &ParameterState::from_starts(&current_spec),
    )?;
    let score = |fit: &FitResult| match config.criterion {
        SearchCriterion::Information(ic) => ic.evaluate(fit.f_min, fit.k(), moments),
        SearchCriterion::ChiSquare { .. } => crate::measures::chisq(fit.f_min, moments.n()),
    };
    let mut criterion_path = vec![score(&current)];
    let mut steps = Vec::new();

    for step in 0..config.max_steps {
        let edges = current_spec.network_edges(config.target).unwrap();
        let mats = current.params.to_matrices(&current_spec);
        let slots: Vec<Edge> = all_slots(nodes).collect();
        let candidates: Vec<Candidate> = slots
            .par_iter()
            .map(|&edge| {
                let present = edges.contains(&edge);
                let action = if present { Action::Remove } else { Action::Add };
                let spec = current_spec
                    .with_edge(config.target, edge, !present)
                    .expect("slot lies inside the target network");
                let start = ParameterState::from_matrices(&spec, &mats);
                let fit = fit_from(&spec, moments, &config.objective, &start)
                    .ok()
                    .filter(|f| f.converged);
                Candidate {
                    action,
                    edge,
                    spec,
                    fit,
                }
            })
            .collect();

        let mut records: Vec<StepRecord> = Vec::with_capacity(candidates.len());
        let chosen = match config.criterion {
            SearchCriterion::Information(_) => {
                let current_score = score(&current);
                let mut best: Option<(usize, f64)> = None;
                for (i, c) in candidates.iter().enumerate() {
                    let value = c.fit.as_ref().map_or(f64::NAN, score);
                    records.push(record(step, c, value, None));
                    if value < current_score && best.is_none_or(|(_, b)| value < b) {
                        best = Some((i, value));
                    }
                }
                best.map(|(i, _)| i)
            }
            SearchCriterion::ChiSquare { alpha } => {
                let mut best_add: Option<(usize, f64)> = None;
                let mut best_remove: Option<(usize, f64)> = None;
                for (i, c) in candidates.iter().enumerate() {
                    let test = c.fit.as_ref().and_then(|f| match c.action {
                        Action::Add => lr_test(&current, f, moments).ok(),
                        Action::Remove => lr_test(f, &current, moments).ok(),
                    });
                    let (value, p) = test.map_or((f64::NAN, None), |t| (t.delta_chisq, Some(t.p_value)));
                    records.push(record(step, c, value, p));
                    let Some(p) = p else { continue };
                    match c.action {
                        Action::Add if p < alpha => {
                            if best_add.is_none_or(|(_, b)| value > b) {
                                best_add = Some((i, value));
                            }
                        }
                        Action::Remove if p >= alpha => {
                            if best_remove.is_none_or(|(_, b)| value < b) {
                                best_remove = Some((i, value));
                            }
                        }
                        _ => {}
                    }
                }
                best_add.or(best_remove).map(|(i, _)| i)
            }
        };

        let Some(index) = chosen else {
            steps.extend(records);
            break;
        };
        records[index].accepted = true;
        steps.extend(records);
        let winner = candidates.into_iter().nth(index).unwrap();
        current_spec = winner.spec;
        current = winner.fit.unwrap();
        criterion_path.push(score(&current));
    }

    Ok(SearchTrace {
        steps,
        final_spec: current_spec,
        final_fit: current,
        criterion_path,
    })
}

fn record(step: usize, c: &Candidate, value: f64, p_value: Option<f64>) -> StepRecord {
    StepRecord {
        step,
        action: c.action,
        edge: c.edge,
        criterion_value: value,
        p_value,
        converged: c.fit.is_some(),
        accepted: false,
    }
}
