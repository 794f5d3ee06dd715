use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{Discrepancy, ObjectiveConfig, Penalty};
use super::quasi_newton::{minimize, Settings, Smooth};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParameterState};
use crate::moments::SampleMoments;

const JITTER_RETRIES: u64 = 10;
const JITTER_WIDTH: f64 = 0.01;
const JITTER_SEED: u64 = 0x6c76_6e65_7473_6565;

/// Outcome of minimizing the (penalized) discrepancy.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ParameterState,
    /// Unpenalized discrepancy at the estimates.
    pub f_min: f64,
    /// Minimized objective: `f_min` plus the exact L1 penalty, if any.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub implied: DMatrix<f64>,
    /// Infinity norm of the optimizer-space (pseudo-)gradient at the estimates.
    pub gradient_norm: f64,
    /// All covariance blocks are positive definite.
    pub admissible: bool,
}

impl FitResult {
    /// Number of free parameters of the fitted spec.
    pub fn k(&self) -> usize {
        self.params.len()
    }
}

/// Discrepancy in optimizer coordinates: scale slots live on the log scale.
struct LogScaled<'a> {
    inner: Discrepancy<'a>,
    log_slots: Vec<bool>,
}

impl LogScaled<'_> {
    fn natural(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.log_slots)
            .map(|(&v, &log)| if log { v.exp() } else { v })
            .collect()
    }

    fn optimizer(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.log_slots)
            .map(|(&v, &log)| if log { v.ln() } else { v })
            .collect()
    }
}

impl Smooth for LogScaled<'_> {
    fn value(&self, u: &[f64]) -> Result<f64, f64> {
        self.inner
            .evaluate(&self.natural(u), false)
            .map(|e| e.value)
            .map_err(|bad| bad.magnitude)
    }

    fn value_gradient(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let x = self.natural(u);
        let eval = self.inner.evaluate(&x, true).ok()?;
        let mut g = eval.gradient.unwrap();
        for ((gi, &xi), &log) in g.iter_mut().zip(&x).zip(&self.log_slots) {
            if log {
                *gi *= xi;
            }
        }
        Some((eval.value, g))
    }
}

/// Fits `spec` from the starting values it declares.
pub fn fit(spec: &ModelSpec, moments: &SampleMoments, config: &ObjectiveConfig) -> Result<FitResult> {
    fit_from(spec, moments, config, &ParameterState::from_starts(spec))
}

/// Fits `spec` from `start`, falling back to the spec's own starts and then
/// to jittered starts when `start` is inadmissible.
pub fn fit_from(
    spec: &ModelSpec,
    moments: &SampleMoments,
    config: &ObjectiveConfig,
    start: &ParameterState,
) -> Result<FitResult> {
    config.validate()?;
    spec.validate()?;
    let inner = Discrepancy::new(spec, moments)?;
    if start.slots() != inner.slots() {
        return Err(Error::InvalidConfig("starting values do not match the spec".into()));
    }
    let log_slots = inner.slots().iter().map(|s| s.is_scale()).collect();
    let problem = LogScaled { inner, log_slots };

    let x0 = admissible_start(&problem, spec, start)?;
    let weights = config.l1_weights(problem.inner.slots());
    let settings = Settings {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        barrier_scale: config.barrier_scale,
    };
    let out = minimize(&problem, problem.optimizer(&x0), &weights, &settings)
        .ok_or(Error::StartInadmissible)?;

    let x = problem.natural(&out.x);
    let eval = problem
        .inner
        .evaluate(&x, false)
        .map_err(|_| Error::NotPositiveDefinite { what: "implied covariance" })?;
    let penalty: f64 = match config.penalty {
        Penalty::None => 0.0,
        Penalty::Lasso { .. } => x.iter().zip(&weights).map(|(v, w)| v.abs() * w).sum(),
    };
    let admissible = problem.inner.blocks_positive_definite(&x);
    Ok(FitResult {
        params: ParameterState::with_values(spec, x)?,
        f_min: eval.value,
        objective: eval.value + penalty,
        converged: out.converged,
        iterations: out.iterations,
        implied: eval.sigma,
        gradient_norm: out.gradient_norm,
        admissible,
    })
}

fn admissible_start(problem: &LogScaled<'_>, spec: &ModelSpec, start: &ParameterState) -> Result<Vec<f64>> {
    let ok = |x: &[f64]| x.iter().all(|v| v.is_finite()) && problem.inner.evaluate(x, false).is_ok();
    let is_positive = |x: &[f64]| {
        x.iter()
            .zip(&problem.log_slots)
            .all(|(&v, &log)| !log || v > 0.0)
    };
    if is_positive(start.values()) && ok(start.values()) {
        return Ok(start.values().to_vec());
    }
    let declared = ParameterState::from_starts(spec);
    if is_positive(declared.values()) && ok(declared.values()) {
        return Ok(declared.values().to_vec());
    }
    for retry in 0..JITTER_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED.wrapping_add(retry));
        let jittered: Vec<f64> = declared
            .values()
            .iter()
            .map(|v| v + rng.random_range(-JITTER_WIDTH..=JITTER_WIDTH))
            .collect();
        if is_positive(&jittered) && ok(&jittered) {
            return Ok(jittered);
        }
    }
    Err(Error::StartInadmissible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeSet, Edge, MatrixId};
    use nalgebra::dmatrix;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("y{i}")).collect()
    }

    fn sample() -> SampleMoments {
        let s = dmatrix![
            2.0, 0.8, 0.5, 0.3;
            0.8, 1.5, 0.6, 0.2;
            0.5, 0.6, 1.2, 0.4;
            0.3, 0.2, 0.4, 1.0
        ];
        SampleMoments::new(s, 200, labels(4)).unwrap()
    }

    #[test]
    fn saturated_ggm_fits_exactly() {
        let m = sample();
        let spec = ModelSpec::saturated_ggm(labels(4)).unwrap();
        let fit = fit(&spec, &m, &ObjectiveConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.f_min < 1e-7, "{}", fit.f_min);
        assert!((&fit.implied - m.s()).amax() < 1e-5);
        assert!(fit.admissible);
    }

    #[test]
    fn sparse_ggm_has_positive_misfit() {
        let m = sample();
        let edges: EdgeSet = [Edge::new(0, 1), Edge::new(1, 2), Edge::new(2, 3)].into();
        let spec = ModelSpec::ggm(labels(4), &edges).unwrap();
        let fit = fit(&spec, &m, &ObjectiveConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.f_min > 1e-3);
    }

    #[test]
    fn large_penalty_empties_network() {
        let m = sample();
        let spec = ModelSpec::saturated_ggm(labels(4)).unwrap();
        let fit = fit(&spec, &m, &ObjectiveConfig::lasso(10.0, MatrixId::OmegaTheta)).unwrap();
        assert!(fit.converged);
        for (s, v) in fit.params.slots().iter().zip(fit.params.values()) {
            if s.matrix == MatrixId::OmegaTheta {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn deterministic() {
        let m = sample();
        let spec = ModelSpec::cfa(labels(4), vec!["f".into()], &[0, 0, 0, 0]).unwrap();
        let a = fit(&spec, &m, &ObjectiveConfig::default()).unwrap();
        let b = fit(&spec, &m, &ObjectiveConfig::default()).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.converged);
    }
}
