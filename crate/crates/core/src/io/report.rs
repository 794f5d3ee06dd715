use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::estimator::{fit_from, FitResult, ObjectiveConfig};
use crate::measures::{compute_measures, FitMeasures, DEFAULT_EBIC_GAMMA};
use crate::model::{free_slots, Block, Edge, MatrixId, ModelSpec, NetworkTarget, ParameterState};
use crate::moments::SampleMoments;
use crate::search::{lasso_search, stepwise_search, LassoPathConfig, PathRecord, SearchConfig, StepRecord};

/// Everything needed to recompute a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Fit {
        spec: ModelSpec,
        moments: SampleMoments,
        #[serde(default)]
        objective: ObjectiveConfig,
        #[serde(default = "default_gamma")]
        ebic_gamma: f64,
    },
    Search {
        spec: ModelSpec,
        moments: SampleMoments,
        config: SearchConfig,
        #[serde(default = "default_gamma")]
        ebic_gamma: f64,
    },
    Lasso {
        spec: ModelSpec,
        moments: SampleMoments,
        config: LassoPathConfig,
        #[serde(default = "default_gamma")]
        ebic_gamma: f64,
    },
}

fn default_gamma() -> f64 {
    DEFAULT_EBIC_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub job: Job,
}

/// One free parameter estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub matrix: MatrixId,
    pub row: usize,
    pub col: usize,
    pub row_name: String,
    pub col_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub value: f64,
}

/// Estimated partial-correlation network of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEstimate {
    pub target: NetworkTarget,
    pub nodes: Vec<String>,
    /// Row-major partial correlations.
    pub omega: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSummary {
    pub best_nu: f64,
    pub selected: Vec<Edge>,
    pub path: Vec<PathRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    /// Final model: the input spec for `fit`, the selected model for searches.
    pub spec: ModelSpec,
    pub converged: bool,
    pub estimates: Vec<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<FitMeasures>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub networks: Vec<NetworkEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_trace: Option<Vec<StepRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lasso: Option<LassoSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

fn names(spec: &ModelSpec, id: MatrixId) -> (&[String], &[String]) {
    match id {
        MatrixId::Lambda => (spec.observed(), spec.latent()),
        MatrixId::Theta | MatrixId::OmegaTheta | MatrixId::DeltaTheta => (spec.observed(), spec.observed()),
        _ => (spec.latent(), spec.latent()),
    }
}

fn estimates(spec: &ModelSpec, params: &ParameterState) -> Vec<Estimate> {
    free_slots(spec)
        .into_iter()
        .zip(params.values())
        .map(|(slot, &value)| {
            let (rows, cols) = names(spec, slot.matrix);
            let label = match spec.matrix(slot.matrix).map(|m| m.get(slot.row, slot.col)) {
                Some(crate::model::Entry::Free { label, .. }) => label.clone(),
                _ => None,
            };
            Estimate {
                matrix: slot.matrix,
                row: slot.row,
                col: slot.col,
                row_name: rows[slot.row].clone(),
                col_name: cols[slot.col].clone(),
                label,
                value,
            }
        })
        .collect()
}

fn networks(spec: &ModelSpec, params: &ParameterState) -> Vec<NetworkEstimate> {
    let mats = params.to_matrices(spec);
    [NetworkTarget::Psi, NetworkTarget::Theta]
        .into_iter()
        .filter_map(|target| {
            let block = match target {
                NetworkTarget::Psi => spec.psi(),
                NetworkTarget::Theta => spec.theta(),
            };
            let Block::Network { .. } = block else { return None };
            let omega = mats.get(target.omega())?;
            let nodes = match target {
                NetworkTarget::Psi => spec.latent().to_vec(),
                NetworkTarget::Theta => spec.observed().to_vec(),
            };
            if nodes.is_empty() {
                return None;
            }
            Some(NetworkEstimate {
                target,
                nodes,
                omega: omega.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
        })
        .collect()
}

fn finish(spec: ModelSpec, fit: &FitResult, moments: &SampleMoments, gamma: f64, job: Job) -> Report {
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!(
            "optimizer did not converge (gradient norm {:e} after {} iterations)",
            fit.gradient_norm, fit.iterations
        ));
    }
    if !fit.admissible {
        warnings.push("estimated covariance blocks are not positive definite".into());
    }
    let measures = match compute_measures(fit, &spec, moments, gamma) {
        Ok(m) => {
            if m.df < 0 {
                warnings.push(format!("model has negative degrees of freedom ({})", m.df));
            }
            Some(m)
        }
        Err(e) => {
            warnings.push(format!("fit measures unavailable: {e}"));
            None
        }
    };
    Report {
        format_version: FORMAT_VERSION,
        estimates: estimates(&spec, &fit.params),
        networks: networks(&spec, &fit.params),
        converged: fit.converged,
        measures,
        search_trace: None,
        lasso: None,
        warnings,
        spec,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job,
        },
    }
}

/// Runs a job. The result depends on nothing but the job itself.
pub fn run_job(job: &Job) -> Result<Report> {
    match job {
        Job::Fit {
            spec,
            moments,
            objective,
            ebic_gamma,
        } => {
            let fit = fit_from(spec, moments, objective, &ParameterState::from_starts(spec))?;
            Ok(finish(spec.clone(), &fit, moments, *ebic_gamma, job.clone()))
        }
        Job::Search {
            spec,
            moments,
            config,
            ebic_gamma,
        } => {
            let trace = stepwise_search(spec, moments, config)?;
            let mut report = finish(trace.final_spec.clone(), &trace.final_fit, moments, *ebic_gamma, job.clone());
            report.search_trace = Some(trace.steps);
            Ok(report)
        }
        Job::Lasso {
            spec,
            moments,
            config,
            ebic_gamma,
        } => {
            let result = lasso_search(spec, moments, config)?;
            let mut report = finish(result.refit_spec.clone(), &result.refit, moments, *ebic_gamma, job.clone());
            report.lasso = Some(LassoSummary {
                best_nu: result.best_nu,
                selected: result.selected.into_iter().collect(),
                path: result.path,
            });
            Ok(report)
        }
    }
}

/// Recomputes a report from its provenance block.
pub fn rerun(report: &Report) -> Result<Report> {
    run_job(&report.provenance.job)
}

pub fn report_to_string(report: &Report) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn report_from_str(text: &str) -> Result<Report> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    super::check_version(&value)?;
    Ok(serde_json::from_value(value)?)
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    std::fs::write(path, report_to_string(report)? + "\n")?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report> {
    report_from_str(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFormat {
    /// One `from to weight` line per edge.
    EdgeList,
    /// Graphviz-style undirected graph.
    Dot,
}

/// Weighted edges of a reported network, omitting entries with
/// `|weight| <= epsilon`. Without `target` the first reported network is used.
pub fn export_network(
    report: &Report,
    target: Option<NetworkTarget>,
    format: NetworkFormat,
    epsilon: f64,
) -> Result<String> {
    let net = report
        .networks
        .iter()
        .find(|n| target.is_none_or(|t| t == n.target))
        .ok_or(Error::NoNetworkInReport)?;
    let mut out = String::new();
    if format == NetworkFormat::Dot {
        out.push_str("graph network {\n");
        for name in &net.nodes {
            let _ = writeln!(out, "  \"{name}\";");
        }
    }
    for i in 0..net.nodes.len() {
        for j in (i + 1)..net.nodes.len() {
            let w = net.omega[i][j];
            if w.abs() <= epsilon {
                continue;
            }
            let (a, b) = (&net.nodes[i], &net.nodes[j]);
            match format {
                NetworkFormat::EdgeList => {
                    let _ = writeln!(out, "{a} {b} {w}");
                }
                NetworkFormat::Dot => {
                    let _ = writeln!(out, "  \"{a}\" -- \"{b}\" [weight={w}];");
                }
            }
        }
    }
    if format == NetworkFormat::Dot {
        out.push_str("}\n");
    }
    Ok(out)
}
