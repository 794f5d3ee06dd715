//! Chi-square statistics, information criteria and fit indices.
//!
//! Everything here is a function of the minimized discrepancy `F`, the
//! number of free parameters `K` and the sample size `N`, with `chi2 =
//! (N - 1) F`. Information criteria are reported on the chi-square scale
//! (`chi2 + 2K` etc.) and, for comparison with software that reports
//! likelihood-based values, on the `-2 log L` scale. Differences between
//! models are identical on both scales.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::model::{unique_moments, EdgeSet, ModelSpec, ParameterState};
use crate::moments::SampleMoments;

/// Default EBIC tuning parameter.
pub const DEFAULT_EBIC_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum InformationCriterion {
    Aic,
    Bic,
    Ebic { gamma: f64 },
}

impl InformationCriterion {
    pub fn label(&self) -> String {
        match self {
            InformationCriterion::Aic => "AIC".into(),
            InformationCriterion::Bic => "BIC".into(),
            InformationCriterion::Ebic { .. } => "EBIC".into(),
        }
    }

    /// Criterion on the chi-square scale.
    pub fn evaluate(&self, f_min: f64, k: usize, moments: &SampleMoments) -> f64 {
        let chisq = chisq(f_min, moments.n());
        let k = k as f64;
        let n = moments.n() as f64;
        match *self {
            InformationCriterion::Aic => chisq + 2.0 * k,
            InformationCriterion::Bic => chisq + k * n.ln(),
            InformationCriterion::Ebic { gamma } => {
                chisq + k * n.ln() + 2.0 * gamma * k * (unique_moments(moments.p()) as f64).ln()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeasures {
    pub chisq: f64,
    pub df: i64,
    #[serde(with = "crate::io::nullable_f64")]
    pub p_value: f64,
    pub aic: f64,
    pub bic: f64,
    pub ebic: f64,
    pub ebic_gamma: f64,
    /// `-2 log L` of the fitted model, including the saturated constant.
    pub minus_two_log_likelihood: f64,
    pub aic_log_likelihood: f64,
    pub bic_log_likelihood: f64,
    pub ebic_log_likelihood: f64,
    #[serde(with = "crate::io::nullable_f64")]
    pub rmsea: f64,
    /// `df == 0`: RMSEA, TLI and the p-value are conventions, not tests.
    pub saturated: bool,
    #[serde(with = "crate::io::nullable_f64")]
    pub cfi: f64,
    #[serde(with = "crate::io::nullable_f64")]
    pub tli: f64,
    pub baseline_chisq: f64,
    pub baseline_df: i64,
    pub f_min: f64,
    pub k: usize,
    pub n: usize,
}

pub fn chisq(f_min: f64, n: usize) -> f64 {
    (n as f64 - 1.0) * f_min
}

/// Upper tail probability of a chi-square variate.
pub fn chisq_upper_tail(x: f64, df: i64) -> f64 {
    if df < 0 || x.is_nan() {
        return f64::NAN;
    }
    if df == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64)
        .map(|d| d.sf(x))
        .unwrap_or(f64::NAN)
}

fn rmsea(chisq: f64, df: i64, n: usize) -> f64 {
    match df {
        d if d < 0 => f64::NAN,
        0 => 0.0,
        d => ((chisq - d as f64).max(0.0) / (d as f64 * (n as f64 - 1.0))).sqrt(),
    }
}

fn cfi(chisq: f64, df: i64, base_chisq: f64, base_df: i64) -> f64 {
    let d = (chisq - df as f64).max(0.0);
    let d_base = (base_chisq - base_df as f64).max(0.0);
    let denom = d.max(d_base);
    if denom == 0.0 {
        1.0
    } else {
        1.0 - d / denom
    }
}

fn tli(chisq: f64, df: i64, base_chisq: f64, base_df: i64) -> f64 {
    if df <= 0 || base_df <= 0 {
        return 1.0;
    }
    let base_ratio = base_chisq / base_df as f64;
    if base_ratio == 1.0 {
        return 1.0;
    }
    (base_ratio - chisq / df as f64) / (base_ratio - 1.0)
}

/// Fit measures of a converged fit. `gamma` tunes the EBIC.
pub fn compute_measures(
    fit: &FitResult,
    spec: &ModelSpec,
    moments: &SampleMoments,
    gamma: f64,
) -> Result<FitMeasures> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidConfig("EBIC gamma must lie in [0, 1]".into()));
    }
    let baseline = independence_baseline(moments)?;
    let (k, df) = spec.count_free_parameters();
    let (n, p) = (moments.n(), moments.p());
    let x2 = chisq(fit.f_min, n);
    let base_df = (unique_moments(p) - p) as i64;
    let base_x2 = chisq(baseline.f_min, n);

    let log_det_s = moments
        .log_det()
        .ok_or(Error::NotPositiveDefinite { what: "sample covariance" })?;
    let constant =
        n as f64 * p as f64 * (2.0 * PI).ln() + (n as f64 - 1.0) * (log_det_s + p as f64);
    let m2ll = x2 + constant;

    let aic = InformationCriterion::Aic.evaluate(fit.f_min, k, moments);
    let bic = InformationCriterion::Bic.evaluate(fit.f_min, k, moments);
    let ebic = InformationCriterion::Ebic { gamma }.evaluate(fit.f_min, k, moments);
    Ok(FitMeasures {
        chisq: x2,
        df,
        p_value: chisq_upper_tail(x2, df),
        aic,
        bic,
        ebic,
        ebic_gamma: gamma,
        minus_two_log_likelihood: m2ll,
        aic_log_likelihood: aic + constant,
        bic_log_likelihood: bic + constant,
        ebic_log_likelihood: ebic + constant,
        rmsea: rmsea(x2, df, n),
        saturated: df == 0,
        cfi: cfi(x2, df, base_x2, base_df),
        tli: tli(x2, df, base_x2, base_df),
        baseline_chisq: base_x2,
        baseline_df: base_df,
        f_min: fit.f_min,
        k,
        n,
    })
}

/// Closed-form fit of the independence model `Sigma = diag(S)`.
pub fn independence_baseline(moments: &SampleMoments) -> Result<FitResult> {
    let s = moments.s();
    let p = moments.p();
    if (0..p).any(|j| !(s[(j, j)] > 0.0)) {
        return Err(Error::DegenerateBaseline("sample variances must be positive".into()));
    }
    let log_det_s = moments
        .log_det()
        .ok_or_else(|| Error::DegenerateBaseline("sample covariance is singular".into()))?;
    let spec = ModelSpec::ggm(moments.labels().to_vec(), &EdgeSet::new())?;
    let deltas = (0..p).map(|j| s[(j, j)].sqrt()).collect();
    let f_min = (0..p).map(|j| s[(j, j)].ln()).sum::<f64>() - log_det_s;
    Ok(FitResult {
        params: ParameterState::with_values(&spec, deltas)?,
        f_min: f_min.max(0.0),
        objective: f_min.max(0.0),
        converged: true,
        iterations: 0,
        implied: DMatrix::from_diagonal(&s.diagonal()),
        gradient_norm: 0.0,
        admissible: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub delta_chisq: f64,
    pub delta_df: i64,
    #[serde(with = "crate::io::nullable_f64")]
    pub p_value: f64,
}

/// Likelihood-ratio test of a restricted model against the model it is nested in.
pub fn lr_test(restricted: &FitResult, full: &FitResult, moments: &SampleMoments) -> Result<LrTest> {
    let delta_df = full.k() as i64 - restricted.k() as i64;
    let delta_chisq = (chisq(restricted.f_min, moments.n()) - chisq(full.f_min, moments.n())).max(0.0);
    if delta_df < 0 || (delta_df == 0 && restricted.params.slots() != full.params.slots()) {
        return Err(Error::NotNested(delta_df));
    }
    Ok(LrTest {
        delta_chisq,
        delta_df,
        p_value: chisq_upper_tail(delta_chisq, delta_df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, ObjectiveConfig};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("y{i}")).collect()
    }

    fn fake_fit(f_min: f64, k: usize) -> FitResult {
        let spec = ModelSpec::ggm(labels(k), &EdgeSet::new()).unwrap();
        FitResult {
            params: ParameterState::from_starts(&spec),
            f_min,
            objective: f_min,
            converged: true,
            iterations: 0,
            implied: DMatrix::identity(1, 1),
            gradient_norm: 0.0,
            admissible: true,
        }
    }

    #[test]
    fn hand_evaluated_rmsea() {
        let x2 = chisq(0.5, 101);
        assert_eq!(x2, 50.0);
        assert_relative_eq!(rmsea(x2, 10, 101), 0.2, epsilon = 1e-15);
        assert_eq!(rmsea(0.0, 0, 101), 0.0);
    }

    #[test]
    fn ebic_reduces_to_bic() {
        let s = dmatrix![1.0, 0.2; 0.2, 1.0];
        let m = SampleMoments::new(s, 300, labels(2)).unwrap();
        let bic = InformationCriterion::Bic.evaluate(0.1, 3, &m);
        let ebic0 = InformationCriterion::Ebic { gamma: 0.0 }.evaluate(0.1, 3, &m);
        assert_eq!(bic, ebic0);
        let ebic1 = InformationCriterion::Ebic { gamma: 0.5 }.evaluate(0.1, 3, &m);
        assert!(ebic1 >= ebic0);
    }

    #[test]
    fn saturated_measures() {
        let s = dmatrix![2.0, 0.5, 0.1; 0.5, 1.0, 0.3; 0.1, 0.3, 1.5];
        let m = SampleMoments::new(s, 150, labels(3)).unwrap();
        let spec = ModelSpec::saturated_ggm(labels(3)).unwrap();
        let fit = fit(&spec, &m, &ObjectiveConfig::default()).unwrap();
        let fm = compute_measures(&fit, &spec, &m, 0.5).unwrap();
        assert!(fm.chisq < 1e-4);
        assert_eq!(fm.df, 0);
        assert_eq!(fm.rmsea, 0.0);
        assert!(fm.saturated);
        assert_relative_eq!(fm.cfi, 1.0, epsilon = 1e-6);
        assert_eq!(fm.baseline_df, 3);
    }

    #[test]
    fn baseline_of_identity_is_perfect() {
        let m = SampleMoments::new(DMatrix::identity(3, 3), 50, labels(3)).unwrap();
        let b = independence_baseline(&m).unwrap();
        assert_eq!(b.f_min, 0.0);
    }

    #[test]
    fn baseline_equals_minus_log_det_correlation() {
        let s = dmatrix![4.0, 1.2, 0.6; 1.2, 1.0, -0.3; 0.6, -0.3, 2.25];
        let m = SampleMoments::new(s.clone(), 50, labels(3)).unwrap();
        let b = independence_baseline(&m).unwrap();
        let d = DMatrix::from_diagonal(&s.diagonal().map(|v| 1.0 / v.sqrt()));
        let r = &d * &s * &d;
        assert_relative_eq!(b.f_min, -r.determinant().ln(), epsilon = 1e-12);
        // also agrees with the general-purpose discrepancy
        let spec = ModelSpec::ggm(labels(3), &EdgeSet::new()).unwrap();
        let f = crate::estimator::discrepancy(&spec, &b.params, &m).unwrap();
        assert_relative_eq!(b.f_min, f, epsilon = 1e-12);
    }

    #[test]
    fn identical_models_have_null_lrt() {
        let s = dmatrix![1.0, 0.2; 0.2, 1.0];
        let m = SampleMoments::new(s, 300, labels(2)).unwrap();
        let a = fake_fit(0.3, 2);
        let t = lr_test(&a, &a, &m).unwrap();
        assert_eq!(t.delta_chisq, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn lrt_rejects_non_nested() {
        let s = dmatrix![1.0, 0.2; 0.2, 1.0];
        let m = SampleMoments::new(s, 300, labels(2)).unwrap();
        let small = fake_fit(0.3, 2);
        let big = fake_fit(0.1, 3);
        assert!(matches!(lr_test(&big, &small, &m), Err(Error::NotNested(-1))));
        let t = lr_test(&small, &big, &m).unwrap();
        assert_relative_eq!(t.delta_chisq, 299.0 * 0.2, epsilon = 1e-9);
        assert_eq!(t.delta_df, 1);
    }

    #[test]
    fn upper_tail_reference_values() {
        // qchisq(0.95, 1) = 3.841459
        assert_relative_eq!(chisq_upper_tail(3.841_458_820_694_124, 1), 0.05, epsilon = 1e-9);
        assert_relative_eq!(chisq_upper_tail(18.307_038_053_275_146, 10), 0.05, epsilon = 1e-9);
    }

    #[test]
    fn cfi_bounds_and_tli() {
        assert_eq!(cfi(10.0, 10, 500.0, 45), 1.0);
        let c = cfi(60.0, 10, 500.0, 45);
        assert!((0.0..=1.0).contains(&c));
        assert_relative_eq!(c, 1.0 - 50.0 / 455.0, epsilon = 1e-12);
        assert!(tli(5.0, 10, 500.0, 45) > 1.0);
    }
}
