use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    free_slots, AssembledBlock, Assembly, BlockValues, MatrixId, ModelSpec, ParameterState, Slot,
    Symmetry,
};
use crate::moments::SampleMoments;

/// Penalty added to the ML discrepancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    None,
    /// `nu * sum |x|` over the free entries of `target`, each symmetric pair
    /// counted once. Smooth evaluations use `sqrt(x^2 + smoothing_tau)` for `|x|`.
    Lasso {
        nu: f64,
        target: MatrixId,
        smoothing_tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub penalty: Penalty,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Slope of the barrier that replaces the objective at inadmissible points.
    pub barrier_scale: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            penalty: Penalty::None,
            max_iterations: 10_000,
            gradient_tolerance: 1e-6,
            barrier_scale: 1e3,
        }
    }
}

impl ObjectiveConfig {
    pub fn lasso(nu: f64, target: MatrixId) -> Self {
        ObjectiveConfig {
            penalty: Penalty::Lasso {
                nu,
                target,
                smoothing_tau: 1e-8,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) || !(self.barrier_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "gradient tolerance and barrier scale must be positive".into(),
            ));
        }
        if let Penalty::Lasso { nu, smoothing_tau, .. } = self.penalty {
            if !(nu >= 0.0) || !(smoothing_tau > 0.0) {
                return Err(Error::InvalidConfig(
                    "lasso needs nu >= 0 and smoothing tau > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Per-parameter L1 weights (zero for unpenalized slots).
    pub(crate) fn l1_weights(&self, slots: &[Slot]) -> Vec<f64> {
        match self.penalty {
            Penalty::None => vec![0.0; slots.len()],
            Penalty::Lasso { nu, target, .. } => slots
                .iter()
                .map(|s| if s.matrix == target { nu } else { 0.0 })
                .collect(),
        }
    }
}

/// Why a point could not be evaluated, with a violation size for the barrier.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Inadmissible {
    pub magnitude: f64,
}

/// The ML discrepancy of one spec against one set of moments, evaluated on
/// raw parameter vectors.
pub(crate) struct Discrepancy<'a> {
    spec: &'a ModelSpec,
    moments: &'a SampleMoments,
    slots: Vec<Slot>,
    log_det_s: f64,
}

pub(crate) struct Evaluation {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub sigma: DMatrix<f64>,
}

impl<'a> Discrepancy<'a> {
    pub fn new(spec: &'a ModelSpec, moments: &'a SampleMoments) -> Result<Self> {
        if spec.p() != moments.p() {
            return Err(Error::InvalidConfig(format!(
                "model has {} observed variables but data has {}",
                spec.p(),
                moments.p()
            )));
        }
        let log_det_s = moments
            .log_det()
            .ok_or(Error::NotPositiveDefinite { what: "sample covariance" })?;
        Ok(Discrepancy {
            spec,
            moments,
            slots: free_slots(spec),
            log_det_s,
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    fn assemble(&self, values: &[f64]) -> Result<Assembly, Inadmissible> {
        let state = ParameterState::with_values(self.spec, values.to_vec())
            .expect("value vector matches slot count");
        let assembly = Assembly::new(state.to_matrices(self.spec))
            .map_err(|_| Inadmissible { magnitude: 1.0 })?;
        for (values, block) in [
            (&assembly.mats.psi, &assembly.psi),
            (&assembly.mats.theta, &assembly.theta),
        ] {
            if let (BlockValues::Network { omega, .. }, Some(_)) = (values, &block.inverse) {
                let n = omega.nrows();
                let k = DMatrix::identity(n, n) - omega;
                if k.clone().cholesky().is_none() {
                    return Err(Inadmissible {
                        magnitude: negative_part(&k),
                    });
                }
            }
        }
        Ok(assembly)
    }

    pub fn evaluate(&self, values: &[f64], with_gradient: bool) -> Result<Evaluation, Inadmissible> {
        let assembly = self.assemble(values)?;
        let sigma = &assembly.sigma;
        let chol = match sigma.clone().cholesky() {
            Some(c) => c,
            None => {
                return Err(Inadmissible {
                    magnitude: negative_part(sigma),
                })
            }
        };
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let sigma_inv = chol.inverse();
        let s = self.moments.s();
        let trace = s.component_mul(&sigma_inv).sum();
        let value = log_det + trace - self.log_det_s - self.moments.p() as f64;
        if !value.is_finite() {
            return Err(Inadmissible { magnitude: 1.0 });
        }
        let gradient = with_gradient.then(|| {
            let w = &sigma_inv - &sigma_inv * s * &sigma_inv;
            self.slot_gradient(&assembly, &w)
        });
        Ok(Evaluation {
            value,
            gradient,
            sigma: assembly.sigma,
        })
    }

    /// Chain rule from `dF/dSigma = W` to every free slot.
    fn slot_gradient(&self, a: &Assembly, w: &DMatrix<f64>) -> Vec<f64> {
        let mut grads: Vec<(MatrixId, DMatrix<f64>)> = Vec::with_capacity(6);
        block_gradient(&a.mats.theta, &a.theta, w, MatrixId::Theta, &mut grads);

        if a.loadings.ncols() > 0 {
            let wl = w * &a.loadings;
            let g_psi = a.loadings.transpose() * &wl;
            let wl_psi = &wl * &a.psi.cov;
            let g_lambda = match &a.structural {
                Some(inv) => 2.0 * &wl_psi * inv.transpose(),
                None => 2.0 * &wl_psi,
            };
            grads.push((MatrixId::Lambda, g_lambda));
            if let Some(inv) = &a.structural {
                let g_a = 2.0 * a.mats.lambda.transpose() * &wl_psi;
                grads.push((MatrixId::Beta, inv.transpose() * g_a * inv.transpose()));
            }
            block_gradient(&a.mats.psi, &a.psi, &g_psi, MatrixId::Psi, &mut grads);
        }

        self.slots
            .iter()
            .map(|slot| {
                let g = &grads
                    .iter()
                    .find(|(id, _)| *id == slot.matrix)
                    .expect("gradient for every matrix with free slots")
                    .1;
                let symmetric = self.spec.matrix(slot.matrix).unwrap().symmetry() != Symmetry::None;
                if symmetric && slot.row != slot.col {
                    g[(slot.row, slot.col)] + g[(slot.col, slot.row)]
                } else {
                    g[(slot.row, slot.col)]
                }
            })
            .collect()
    }

    /// Admissibility of the covariance blocks at a point.
    pub fn blocks_positive_definite(&self, values: &[f64]) -> bool {
        let Ok(a) = self.assemble(values) else {
            return false;
        };
        let pd = |c: &DMatrix<f64>| c.nrows() == 0 || c.clone().cholesky().is_some();
        pd(&a.psi.cov) && pd(&a.theta.cov)
    }
}

/// Gradient with respect to the matrices of one block, given the gradient
/// `g` with respect to the assembled block covariance.
fn block_gradient(
    values: &BlockValues,
    block: &AssembledBlock,
    g: &DMatrix<f64>,
    cov_id: MatrixId,
    out: &mut Vec<(MatrixId, DMatrix<f64>)>,
) {
    let (omega_id, delta_id) = match cov_id {
        MatrixId::Psi => (MatrixId::OmegaPsi, MatrixId::DeltaPsi),
        _ => (MatrixId::OmegaTheta, MatrixId::DeltaTheta),
    };
    match (values, &block.inverse) {
        (BlockValues::Network { delta, .. }, Some(r)) => {
            let rdg = r * delta * g;
            let n = delta.nrows();
            let g_delta =
                DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * rdg[(i, i)] } else { 0.0 });
            let g_omega = &rdg * delta * r;
            out.push((omega_id, g_omega));
            out.push((delta_id, g_delta));
        }
        _ => out.push((cov_id, g.clone())),
    }
}

/// Magnitude of the most negative eigenvalue (0 when there is none).
fn negative_part(m: &DMatrix<f64>) -> f64 {
    let min = m.clone().symmetric_eigen().eigenvalues.min();
    if min.is_finite() {
        (-min).max(0.0) + 1e-12
    } else {
        1.0
    }
}

/// Smoothed absolute value used by the differentiable penalty.
pub(crate) fn smooth_abs(x: f64, tau: f64) -> f64 {
    (x * x + tau).sqrt()
}

/// ML discrepancy `log det Sigma + tr(S Sigma^-1) - log det S - P`.
pub fn discrepancy(spec: &ModelSpec, params: &ParameterState, moments: &SampleMoments) -> Result<f64> {
    let d = Discrepancy::new(spec, moments)?;
    d.evaluate(params.values(), false)
        .map(|e| e.value)
        .map_err(|_| Error::NotPositiveDefinite { what: "implied covariance" })
}

fn penalty_value(config: &ObjectiveConfig, slots: &[Slot], values: &[f64]) -> f64 {
    match config.penalty {
        Penalty::None => 0.0,
        Penalty::Lasso { nu, target, smoothing_tau } => {
            nu * slots
                .iter()
                .zip(values)
                .filter(|(s, _)| s.matrix == target)
                .map(|(_, &v)| smooth_abs(v, smoothing_tau))
                .sum::<f64>()
        }
    }
}

/// Discrepancy plus the smoothed LASSO penalty.
pub fn penalized_discrepancy(
    spec: &ModelSpec,
    params: &ParameterState,
    moments: &SampleMoments,
    config: &ObjectiveConfig,
) -> Result<f64> {
    config.validate()?;
    let f = discrepancy(spec, params, moments)?;
    Ok(f + penalty_value(config, params.slots(), params.values()))
}

/// Analytic gradient of the (smoothly) penalized discrepancy with respect to
/// the raw parameter vector.
pub fn gradient(
    spec: &ModelSpec,
    params: &ParameterState,
    moments: &SampleMoments,
    config: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let d = Discrepancy::new(spec, moments)?;
    let mut g = d
        .evaluate(params.values(), true)
        .map_err(|_| Error::NotPositiveDefinite { what: "implied covariance" })?
        .gradient
        .unwrap();
    if let Penalty::Lasso { nu, target, smoothing_tau } = config.penalty {
        for ((gi, s), &v) in g.iter_mut().zip(params.slots()).zip(params.values()) {
            if s.matrix == target {
                *gi += nu * v / smooth_abs(v, smoothing_tau);
            }
        }
    }
    Ok(g)
}
