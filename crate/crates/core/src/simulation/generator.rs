use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{implied_covariance, precision_to_network, Edge, EdgeSet, ModelSpec, ParameterState};
use crate::moments::SampleMoments;

const MAX_RETRIES: u64 = 1000;

/// Topology of a generated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// Closed chain `0 - 1 - ... - (n-1) - 0`. Two nodes give a single edge.
    Chain { nodes: usize },
    Given { nodes: usize, edges: EdgeSet },
}

impl Structure {
    pub fn nodes(&self) -> usize {
        match self {
            Structure::Chain { nodes } | Structure::Given { nodes, .. } => *nodes,
        }
    }

    pub fn edges(&self) -> EdgeSet {
        match self {
            Structure::Chain { nodes } => ring(&(0..*nodes).collect::<Vec<_>>()),
            Structure::Given { edges, .. } => edges.clone(),
        }
    }
}

/// Edges joining consecutive entries of `order`, closed back to the first.
pub fn ring(order: &[usize]) -> EdgeSet {
    let n = order.len();
    match n {
        0 | 1 => EdgeSet::new(),
        2 => [Edge::new(order[0], order[1])].into(),
        _ => (0..n).map(|i| Edge::new(order[i], order[(i + 1) % n])).collect(),
    }
}

/// Ring alternating between two equally sized groups:
/// `a0 - b0 - a1 - b1 - ... - a_last - b_last - a0`.
pub fn alternating_ring(a: &[usize], b: &[usize]) -> EdgeSet {
    assert_eq!(a.len(), b.len(), "groups must have equal size");
    let order: Vec<usize> = a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect();
    ring(&order)
}

/// Distribution of generated edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDistribution {
    pub weight_low: f64,
    pub weight_high: f64,
    pub negative_prob: f64,
    pub diagonal_factor: f64,
}

impl Default for WeightDistribution {
    fn default() -> Self {
        WeightDistribution {
            weight_low: 0.5,
            weight_high: 1.0,
            negative_prob: 0.5,
            diagonal_factor: 1.5,
        }
    }
}

impl WeightDistribution {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_low < self.weight_high) || !(self.weight_low >= 0.0) {
            return Err(Error::InvalidConfig("need 0 <= weight_low < weight_high".into()));
        }
        if !(0.0..=1.0).contains(&self.negative_prob) {
            return Err(Error::InvalidConfig("negative_prob must lie in [0, 1]".into()));
        }
        if !(self.diagonal_factor > 0.0) {
            return Err(Error::InvalidConfig("diagonal_factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeneratorConfig {
    pub structure: Structure,
    #[serde(flatten)]
    pub weights: WeightDistribution,
    pub seed: u64,
}

impl NetworkGeneratorConfig {
    pub fn chain(nodes: usize, seed: u64) -> Self {
        NetworkGeneratorConfig {
            structure: Structure::Chain { nodes },
            weights: WeightDistribution::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    /// Unit-diagonal precision matrix.
    pub precision: DMatrix<f64>,
    /// Partial correlations implied by `precision`.
    pub omega: DMatrix<f64>,
    pub edges: EdgeSet,
    /// Draws rejected for not being positive definite.
    pub retries: u64,
}

/// Draws a precision matrix on the configured structure. Draws that are not
/// positive definite are redrawn from a stream derived from the seed and
/// the retry index.
pub fn generate_network(config: &NetworkGeneratorConfig) -> Result<GeneratedNetwork> {
    config.weights.validate()?;
    let edges = config.structure.edges();
    let nodes = config.structure.nodes();
    if edges.iter().any(|e| e.high() >= nodes) {
        return Err(Error::InvalidConfig("edge outside the node set".into()));
    }
    for retry in 0..MAX_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(retry);
        let k = draw_precision(nodes, &edges, &config.weights, &mut rng);
        if let Ok((omega, _)) = precision_to_network(&k) {
            if retry > 0 {
                log::debug!("network generator needed {retry} retries");
            }
            return Ok(GeneratedNetwork {
                precision: k,
                omega,
                edges,
                retries: retry,
            });
        }
    }
    Err(Error::NotPositiveDefinite { what: "generated precision matrix" })
}

fn draw_precision<R: Rng>(nodes: usize, edges: &EdgeSet, w: &WeightDistribution, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(nodes, nodes);
    for e in edges {
        let mut v = rng.random_range(w.weight_low..w.weight_high);
        if rng.random_bool(w.negative_prob) {
            v = -v;
        }
        a[(e.low(), e.high())] = v;
        a[(e.high(), e.low())] = v;
    }
    for i in 0..nodes {
        let sum: f64 = a.row(i).iter().map(|v| v.abs()).sum();
        a[(i, i)] = if sum == 0.0 { 1.0 } else { w.diagonal_factor * sum };
    }
    for i in 0..nodes {
        let d = a[(i, i)];
        a.row_mut(i).iter_mut().for_each(|v| *v /= d);
    }
    DMatrix::from_fn(nodes, nodes, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Rescales a covariance matrix to unit diagonal.
pub fn cov_to_cor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let sd: Vec<f64> = sigma.diagonal().iter().map(|v| v.sqrt()).collect();
    DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            sigma[(i, j)] / (sd[i] * sd[j])
        }
    })
}

/// `n x p` matrix of draws from `N(0, sigma)`.
pub fn sample_raw<R: Rng>(sigma: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let l = sigma
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { what: "population covariance" })?
        .unpack();
    let p = sigma.nrows();
    let z = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    Ok(z * l.transpose())
}

/// Sample moments of `n` draws from `N(0, sigma)`, with the raw data.
pub fn sample_from_covariance(
    sigma: &DMatrix<f64>,
    labels: Vec<String>,
    n: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, SampleMoments)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = sample_raw(sigma, n, &mut rng)?;
    let moments = SampleMoments::from_raw(&raw, labels)?;
    Ok((raw, moments))
}

/// Sample moments of `n` draws from the covariance implied by `spec` at `params`.
pub fn sample_data(spec: &ModelSpec, params: &ParameterState, n: usize, seed: u64) -> Result<SampleMoments> {
    let sigma = implied_covariance(spec, params)?;
    Ok(sample_from_covariance(&sigma, spec.observed().to_vec(), n, seed)?.1)
}

/// Sensitivity and specificity of an estimated edge set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// `None` when the truth has no edges.
    pub sensitivity: Option<f64>,
    /// `None` when the truth has no absent slots.
    pub specificity: Option<f64>,
}

/// Scores `estimated` against `truth` over `slot_count` candidate slots.
pub fn score_network(estimated: &EdgeSet, truth: &EdgeSet, slot_count: usize) -> NetworkScore {
    let tp = estimated.intersection(truth).count();
    let fp = estimated.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = slot_count.saturating_sub(tp + fp + fn_);
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    NetworkScore {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        sensitivity: ratio(tp, fn_),
        specificity: ratio(tn, fp),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_structure_gives_identity() {
        let cfg = NetworkGeneratorConfig {
            structure: Structure::Given {
                nodes: 3,
                edges: EdgeSet::new(),
            },
            weights: WeightDistribution::default(),
            seed: 7,
        };
        let g = generate_network(&cfg).unwrap();
        assert_eq!(g.precision, DMatrix::identity(3, 3));
        assert_eq!(g.omega, DMatrix::zeros(3, 3));
    }

    #[test]
    fn generated_precision_is_unit_diagonal_and_symmetric() {
        for seed in 0..50 {
            let g = generate_network(&NetworkGeneratorConfig::chain(6, seed)).unwrap();
            for i in 0..6 {
                assert_eq!(g.precision[(i, i)], 1.0);
                for j in 0..6 {
                    assert_eq!(g.precision[(i, j)], g.precision[(j, i)]);
                    let edge = i != j && g.edges.contains(&Edge::new(i, j));
                    assert_eq!(g.precision[(i, j)] != 0.0, edge || i == j);
                }
            }
        }
    }

    #[test]
    fn weights_respect_bounds_before_scaling() {
        // with one edge each row sum is |w|, so k_12 = w / (1.5 |w|) = +-2/3
        let cfg = NetworkGeneratorConfig {
            structure: Structure::Chain { nodes: 2 },
            weights: WeightDistribution::default(),
            seed: 3,
        };
        let g = generate_network(&cfg).unwrap();
        assert!((g.precision[(0, 1)].abs() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ring_topologies() {
        assert_eq!(ring(&[0, 1, 2, 3]).len(), 4);
        let alt = alternating_ring(&[0, 1, 2], &[3, 4, 5]);
        let expected: EdgeSet = [(0, 3), (3, 1), (1, 4), (4, 2), (2, 5), (5, 0)]
            .iter()
            .map(|&(a, b)| Edge::new(a, b))
            .collect();
        assert_eq!(alt, expected);
    }

    #[test]
    fn scoring_examples() {
        let truth = ring(&[0, 1, 2, 3]);
        let s = score_network(&truth, &truth, 6);
        assert_eq!((s.sensitivity, s.specificity), (Some(1.0), Some(1.0)));

        let s = score_network(&EdgeSet::new(), &truth, 6);
        assert_eq!((s.sensitivity, s.specificity), (Some(0.0), Some(1.0)));

        // 4 true edges on 12 slots: drop one, add one false edge
        let truth: EdgeSet = [(0, 1), (1, 2), (2, 3), (3, 4)].iter().map(|&(a, b)| Edge::new(a, b)).collect();
        let est: EdgeSet = [(0, 1), (1, 2), (2, 3), (5, 6)].iter().map(|&(a, b)| Edge::new(a, b)).collect();
        let s = score_network(&est, &truth, 12);
        assert_eq!(s.sensitivity, Some(0.75));
        assert_eq!(s.specificity, Some(7.0 / 8.0));

        let s = score_network(&EdgeSet::new(), &EdgeSet::new(), 3);
        assert_eq!(s.sensitivity, None);
        assert_eq!(s.specificity, Some(1.0));
    }

    #[test]
    fn large_sample_recovers_identity() {
        let (_, m) = sample_from_covariance(&DMatrix::identity(3, 3), vec!["a".into(), "b".into(), "c".into()], 100_000, 11)
            .unwrap();
        assert!((m.s() - DMatrix::<f64>::identity(3, 3)).amax() < 0.05);
    }

    #[test]
    fn sampling_is_deterministic() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let labels = vec!["a".to_string(), "b".to_string()];
        let a = sample_from_covariance(&sigma, labels.clone(), 50, 5).unwrap().1;
        let b = sample_from_covariance(&sigma, labels, 50, 5).unwrap().1;
        assert_eq!(a.s(), b.s());
    }
}
