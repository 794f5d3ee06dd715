use nalgebra::DMatrix;
use proptest::prelude::*;

use netsem::io::{ingest_data, write_raw_csv, DataKind};
use netsem::measures::InformationCriterion;
use netsem::model::{free_slots, ModelSpec};
use netsem::search::{
    lasso_path, lasso_search, stepwise_search, Action, InitialNetwork, LassoPathConfig, SearchConfig,
    SearchCriterion,
};
use netsem::simulation::{sample_from_covariance, true_model, Study, StudyConfig};
use netsem::{Edge, EdgeSet, NetworkTarget, ObjectiveConfig, SampleMoments};

fn labels(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("y{i}")).collect()
}

fn cfa(p: usize) -> ModelSpec {
    let assignment: Vec<usize> = (0..p).map(|i| i * 2 / p).collect();
    ModelSpec::cfa(labels(p), vec!["a".into(), "b".into()], &assignment).unwrap()
}

fn rnm(p: usize) -> ModelSpec {
    cfa(p).with_residual_network(&EdgeSet::new()).unwrap()
}

/// Two correlated factors over six indicators with residual partial
/// correlations on the given pairs.
fn population(residual_edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let lambda = DMatrix::from_fn(6, 2, |i, j| if i / 3 == j { 1.0 } else { 0.0 });
    let psi = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
    let mut k = DMatrix::identity(6, 6);
    for &(a, b, w) in residual_edges {
        k[(a, b)] = -w;
        k[(b, a)] = -w;
    }
    &lambda * psi * lambda.transpose() + k.try_inverse().unwrap()
}

fn sample(sigma: &DMatrix<f64>, n: usize, seed: u64) -> SampleMoments {
    sample_from_covariance(sigma, labels(sigma.nrows()), n, seed).unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn accepted_steps_strictly_decrease_the_criterion(seed in any::<u64>(), which in 0usize..3) {
        let ic = [InformationCriterion::Aic, InformationCriterion::Bic, InformationCriterion::Ebic { gamma: 0.5 }][which];
        let data = sample(&population(&[(0, 4, 0.4), (2, 3, 0.3)]), 400, seed);
        let config = SearchConfig::new(NetworkTarget::Theta, SearchCriterion::Information(ic));
        let trace = stepwise_search(&rnm(6), &data, &config).unwrap();
        prop_assert_eq!(trace.criterion_path.len(), trace.accepted().count() + 1);
        for w in trace.criterion_path.windows(2) {
            prop_assert!(w[1] < w[0], "{:?}", trace.criterion_path);
        }
    }

    #[test]
    fn penalty_path_shrinks_network_weight(seed in any::<u64>()) {
        let data = sample(&population(&[(0, 4, 0.4), (1, 5, 0.25)]), 300, seed);
        let mut config = LassoPathConfig::new(NetworkTarget::Theta);
        config.nu_sequence = vec![0.01, 0.03, 0.1, 0.3];
        let points = lasso_path(&rnm(6), &data, &config).unwrap();
        let l1: Vec<f64> = points
            .iter()
            .filter_map(|pt| pt.fit.as_ref())
            .map(|f| {
                f.params
                    .slots()
                    .iter()
                    .zip(f.params.values())
                    .filter(|(s, _)| s.matrix == NetworkTarget::Theta.omega())
                    .map(|(_, v)| v.abs())
                    .sum()
            })
            .collect();
        prop_assert_eq!(l1.len(), 4);
        for w in l1.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-6, "{l1:?}");
        }
    }

    #[test]
    fn raw_csv_round_trip_is_exact(seed in any::<u64>(), n in 5usize..60) {
        let (raw, moments) = sample_from_covariance(&population(&[(0, 1, 0.3)]), labels(6), n, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        write_raw_csv(&path, &raw, &labels(6)).unwrap();
        let back = ingest_data(&path, DataKind::RawCsv).unwrap().moments;
        prop_assert_eq!(back.s(), moments.s());
        prop_assert_eq!(back.n(), n);
    }
}

#[test]
fn lasso_selection_is_deterministic_and_refit_counts_retained_edges() {
    let data = sample(&population(&[(0, 4, 0.4), (2, 3, 0.3)]), 800, 21);
    let spec = rnm(6);
    let mut config = LassoPathConfig::new(NetworkTarget::Theta);
    config.nu_sequence = netsem::search::log_spaced(0.01, 0.5, 8);
    let a = lasso_search(&spec, &data, &config).unwrap();
    let b = lasso_search(&spec, &data, &config).unwrap();
    assert_eq!(a.selected, b.selected);
    assert_eq!(a.best_nu, b.best_nu);
    assert!(a.selected.contains(&Edge::new(0, 4)));

    let non_network = free_slots(&spec)
        .iter()
        .filter(|s| s.matrix != NetworkTarget::Theta.omega())
        .count();
    assert_eq!(a.refit.k(), a.selected.len() + non_network);
    assert_eq!(a.refit_spec.network_edges(NetworkTarget::Theta).unwrap(), a.selected);
}

#[test]
fn heavy_penalty_on_unstructured_data_selects_nothing() {
    let data = sample(&DMatrix::identity(6, 6), 100, 4);
    let mut config = LassoPathConfig::new(NetworkTarget::Theta);
    config.nu_sequence = vec![1.0];
    let points = lasso_path(&rnm(6), &data, &config).unwrap();
    assert!(points[0].fit.is_some());
    assert!(points[0].edges.is_empty());
}

#[test]
fn chi_square_search_prefers_significant_addition_over_removal() {
    // The start contains a null edge (y2, y3) whose removal is not significant,
    // and lacks the strong edge (y1, y5) whose addition is.
    let data = sample(&population(&[(0, 4, 0.45)]), 1000, 8);
    let start: EdgeSet = [Edge::new(1, 2)].into();
    let mut config = SearchConfig::new(NetworkTarget::Theta, SearchCriterion::ChiSquare { alpha: 0.05 });
    config.initial = InitialNetwork::Given(start);
    let trace = stepwise_search(&rnm(6), &data, &config).unwrap();
    let first = trace.accepted().next().expect("a step is taken");
    assert_eq!(first.action, Action::Add);
    assert_eq!(first.edge, Edge::new(0, 4));
    assert!(first.p_value.unwrap() < 0.05);
}

#[test]
fn study_one_truth_is_a_four_edge_ring() {
    let config = StudyConfig::desk(Study::LnmStepwise, 1);
    for seed in 0..5 {
        let truth = true_model(&config, seed).unwrap();
        assert_eq!(truth.edges.len(), 4);
        let mut nonzero = 0;
        for i in 0..4 {
            for j in 0..i {
                if truth.omega[(i, j)].abs() > 1e-4 {
                    nonzero += 1;
                }
            }
        }
        assert_eq!(nonzero, 4);
        for e in &truth.edges {
            assert!(truth.omega[(e.high(), e.low())].abs() > 1e-4);
        }
    }
}

#[test]
fn default_objective_fits_are_unpenalized() {
    let data = sample(&population(&[]), 300, 2);
    let r = netsem::fit(&cfa(6), &data, &ObjectiveConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.objective, r.f_min);
}
