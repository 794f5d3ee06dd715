use serde::{Deserialize, Serialize};

use super::edge::{Edge, EdgeSet};
use super::matrix::{Entry, MatrixSpec, Symmetry};
use crate::error::{Error, Result};

/// Identifies one model matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixId {
    Lambda,
    Beta,
    Psi,
    OmegaPsi,
    DeltaPsi,
    Theta,
    OmegaTheta,
    DeltaTheta,
}

impl MatrixId {
    pub const ALL: [MatrixId; 8] = [
        MatrixId::Lambda,
        MatrixId::Beta,
        MatrixId::Psi,
        MatrixId::OmegaPsi,
        MatrixId::DeltaPsi,
        MatrixId::Theta,
        MatrixId::OmegaTheta,
        MatrixId::DeltaTheta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixId::Lambda => "lambda",
            MatrixId::Beta => "beta",
            MatrixId::Psi => "psi",
            MatrixId::OmegaPsi => "omega_psi",
            MatrixId::DeltaPsi => "delta_psi",
            MatrixId::Theta => "theta",
            MatrixId::OmegaTheta => "omega_theta",
            MatrixId::DeltaTheta => "delta_theta",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == name)
    }
}

/// Which network an exploratory search operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkTarget {
    /// The latent network (LNM).
    Psi,
    /// The residual network (RNM).
    Theta,
}

impl NetworkTarget {
    pub fn omega(self) -> MatrixId {
        match self {
            NetworkTarget::Psi => MatrixId::OmegaPsi,
            NetworkTarget::Theta => MatrixId::OmegaTheta,
        }
    }
}

/// A covariance block, modeled either directly or as a Gaussian graphical
/// model `delta (I - omega)^-1 delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Block {
    Covariance { matrix: MatrixSpec },
    Network { omega: MatrixSpec, delta: MatrixSpec },
}

impl Block {
    fn dim(&self) -> usize {
        match self {
            Block::Covariance { matrix } => matrix.rows(),
            Block::Network { omega, .. } => omega.rows(),
        }
    }

    fn validate(&self, n: usize, name: &str) -> Result<()> {
        match self {
            Block::Covariance { matrix } => {
                check_shape(matrix, n, n, name)?;
                if !matrix.symmetry().is_symmetric()
                    || matrix.symmetry() == Symmetry::SymmetricZeroDiagonal
                {
                    return Err(Error::InvalidSpec(format!(
                        "{name} must be symmetric or diagonal"
                    )));
                }
            }
            Block::Network { omega, delta } => {
                check_shape(omega, n, n, name)?;
                check_shape(delta, n, n, name)?;
                if omega.symmetry() != Symmetry::SymmetricZeroDiagonal {
                    return Err(Error::InvalidSpec(format!(
                        "omega of {name} must be symmetric with zero diagonal"
                    )));
                }
                if delta.symmetry() != Symmetry::Diagonal {
                    return Err(Error::InvalidSpec(format!("delta of {name} must be diagonal")));
                }
                for i in 0..n {
                    if delta.get(i, i).value() <= 0.0 {
                        return Err(Error::InvalidSpec(format!(
                            "delta of {name} needs positive diagonal values"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_shape(m: &MatrixSpec, rows: usize, cols: usize, name: &str) -> Result<()> {
    m.validate()?;
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::InvalidSpec(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Declarative description of a covariance structure model:
///
/// `Sigma = Lambda (I - B)^-1 Psi (I - B)^-T Lambda^T + Theta`
///
/// where either of `Psi` and `Theta` may be replaced by a network block.
/// With no latent variables `Lambda` is `p x 0` and `Theta` carries the whole
/// model, which gives a plain GGM (network mode) or a covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    observed: Vec<String>,
    latent: Vec<String>,
    lambda: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<MatrixSpec>,
    psi: Block,
    theta: Block,
}

impl ModelSpec {
    pub fn new(
        observed: Vec<String>,
        latent: Vec<String>,
        lambda: MatrixSpec,
        beta: Option<MatrixSpec>,
        psi: Block,
        theta: Block,
    ) -> Result<Self> {
        let spec = ModelSpec {
            observed,
            latent,
            lambda,
            beta,
            psi,
            theta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m) = (self.p(), self.m());
        if p == 0 {
            return Err(Error::InvalidSpec("model needs at least one variable".into()));
        }
        check_shape(&self.lambda, p, m, "lambda")?;
        if let Some(beta) = &self.beta {
            check_shape(beta, m, m, "beta")?;
            for i in 0..m {
                if beta.get(i, i) != &Entry::Fixed(0.0) {
                    return Err(Error::InvalidSpec("beta must have a zero diagonal".into()));
                }
            }
        }
        if self.psi.dim() != m {
            return Err(Error::InvalidSpec(format!("psi must be {m}x{m}")));
        }
        self.psi.validate(m, "psi")?;
        self.theta.validate(p, "theta")?;
        Ok(())
    }

    /// Pure Gaussian graphical model on `observed` with the given edges free.
    pub fn ggm(observed: Vec<String>, edges: &EdgeSet) -> Result<Self> {
        let p = observed.len();
        ModelSpec::new(
            observed,
            Vec::new(),
            MatrixSpec::zeros(p, 0, Symmetry::None),
            None,
            Block::Covariance {
                matrix: MatrixSpec::zeros(0, 0, Symmetry::Symmetric),
            },
            Block::Network {
                omega: network_pattern(p, edges)?,
                delta: MatrixSpec::free_diagonal(p, 1.0),
            },
        )
    }

    /// Saturated GGM: every edge free.
    pub fn saturated_ggm(observed: Vec<String>) -> Result<Self> {
        let p = observed.len();
        let edges = super::edge::all_slots(p).collect();
        Self::ggm(observed, &edges)
    }

    /// Simple-structure CFA: indicator `i` loads on factor `assignment[i]`.
    ///
    /// The first indicator of each factor has its loading fixed to 1; the
    /// latent covariance matrix is fully free and residuals are uncorrelated.
    pub fn cfa(observed: Vec<String>, latent: Vec<String>, assignment: &[usize]) -> Result<Self> {
        let (p, m) = (observed.len(), latent.len());
        if assignment.len() != p || assignment.iter().any(|&f| f >= m) {
            return Err(Error::InvalidSpec(
                "factor assignment must name a latent for every indicator".into(),
            ));
        }
        let mut lambda = MatrixSpec::zeros(p, m, Symmetry::None);
        let mut seen = vec![false; m];
        for (i, &f) in assignment.iter().enumerate() {
            let entry = if seen[f] {
                Entry::free(1.0)
            } else {
                seen[f] = true;
                Entry::Fixed(1.0)
            };
            lambda.set(i, f, entry)?;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidSpec("every latent needs an indicator".into()));
        }
        ModelSpec::new(
            observed,
            latent,
            lambda,
            None,
            Block::Covariance {
                matrix: MatrixSpec::free_symmetric(m, 1.0, 0.0),
            },
            Block::Covariance {
                matrix: MatrixSpec::free_diagonal(p, 1.0),
            },
        )
    }

    /// Replaces the latent covariance block by a latent network (LNM).
    pub fn with_latent_network(mut self, edges: &EdgeSet) -> Result<Self> {
        let m = self.m();
        self.psi = Block::Network {
            omega: network_pattern(m, edges)?,
            delta: MatrixSpec::free_diagonal(m, 1.0),
        };
        self.validate()?;
        Ok(self)
    }

    /// Replaces the residual covariance block by a residual network (RNM).
    pub fn with_residual_network(mut self, edges: &EdgeSet) -> Result<Self> {
        let p = self.p();
        self.theta = Block::Network {
            omega: network_pattern(p, edges)?,
            delta: MatrixSpec::free_diagonal(p, 1.0),
        };
        self.validate()?;
        Ok(self)
    }

    /// Adds structural regressions; each pair is `(outcome, predictor)`.
    pub fn with_regressions(mut self, paths: &[(usize, usize)]) -> Result<Self> {
        let m = self.m();
        let mut beta = self
            .beta
            .take()
            .unwrap_or_else(|| MatrixSpec::zeros(m, m, Symmetry::None));
        for &(to, from) in paths {
            if to == from {
                return Err(Error::InvalidSpec("beta must have a zero diagonal".into()));
            }
            beta.set(to, from, Entry::free(0.0))?;
        }
        self.beta = Some(beta);
        self.validate()?;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.observed.len()
    }

    pub fn m(&self) -> usize {
        self.latent.len()
    }

    pub fn observed(&self) -> &[String] {
        &self.observed
    }

    pub fn latent(&self) -> &[String] {
        &self.latent
    }

    pub fn psi(&self) -> &Block {
        &self.psi
    }

    pub fn theta(&self) -> &Block {
        &self.theta
    }

    pub fn matrix(&self, id: MatrixId) -> Option<&MatrixSpec> {
        match (id, &self.psi, &self.theta) {
            (MatrixId::Lambda, _, _) => Some(&self.lambda),
            (MatrixId::Beta, _, _) => self.beta.as_ref(),
            (MatrixId::Psi, Block::Covariance { matrix }, _) => Some(matrix),
            (MatrixId::OmegaPsi, Block::Network { omega, .. }, _) => Some(omega),
            (MatrixId::DeltaPsi, Block::Network { delta, .. }, _) => Some(delta),
            (MatrixId::Theta, _, Block::Covariance { matrix }) => Some(matrix),
            (MatrixId::OmegaTheta, _, Block::Network { omega, .. }) => Some(omega),
            (MatrixId::DeltaTheta, _, Block::Network { delta, .. }) => Some(delta),
            _ => None,
        }
    }

    /// Mutable access to a matrix. Callers must keep the spec valid.
    pub(crate) fn matrix_mut(&mut self, id: MatrixId) -> Option<&mut MatrixSpec> {
        match (id, &mut self.psi, &mut self.theta) {
            (MatrixId::Lambda, _, _) => Some(&mut self.lambda),
            (MatrixId::Beta, _, _) => self.beta.as_mut(),
            (MatrixId::Psi, Block::Covariance { matrix }, _) => Some(matrix),
            (MatrixId::OmegaPsi, Block::Network { omega, .. }, _) => Some(omega),
            (MatrixId::DeltaPsi, Block::Network { delta, .. }, _) => Some(delta),
            (MatrixId::Theta, _, Block::Covariance { matrix }) => Some(matrix),
            (MatrixId::OmegaTheta, _, Block::Network { omega, .. }) => Some(omega),
            (MatrixId::DeltaTheta, _, Block::Network { delta, .. }) => Some(delta),
            _ => None,
        }
    }

    /// Matrices present in this spec, in canonical order.
    pub fn matrices(&self) -> impl Iterator<Item = (MatrixId, &MatrixSpec)> {
        MatrixId::ALL
            .into_iter()
            .filter_map(move |id| self.matrix(id).map(|m| (id, m)))
    }

    /// Number of distinct free parameters `K`.
    pub fn free_parameters(&self) -> usize {
        self.matrices().map(|(_, m)| m.free_count()).sum()
    }

    /// `(K, df)` with `df = P(P+1)/2 - K`. A negative `df` flags an
    /// over-parameterized (non-identified) spec.
    pub fn count_free_parameters(&self) -> (usize, i64) {
        let k = self.free_parameters();
        (k, unique_moments(self.p()) as i64 - k as i64)
    }

    /// Edges of a network matrix: slots that are free or fixed to a non-zero value.
    pub fn network_edges(&self, target: NetworkTarget) -> Option<EdgeSet> {
        let omega = self.matrix(target.omega())?;
        Some(
            super::edge::all_slots(omega.rows())
                .filter(|e| {
                    let entry = omega.get(e.low(), e.high());
                    entry.is_free() || entry.value() != 0.0
                })
                .collect(),
        )
    }

    /// Copy of this spec with the target network's free pattern replaced by `edges`.
    pub fn with_network_edges(&self, target: NetworkTarget, edges: &EdgeSet) -> Result<Self> {
        let mut spec = self.clone();
        let omega = spec.matrix_mut(target.omega()).ok_or_else(|| {
            Error::InvalidSpec(format!("spec has no {} matrix", target.omega().name()))
        })?;
        *omega = network_pattern(omega.rows(), edges)?;
        Ok(spec)
    }

    /// Copy with one network slot freed (`present = true`) or fixed to zero.
    pub fn with_edge(&self, target: NetworkTarget, edge: Edge, present: bool) -> Result<Self> {
        let mut spec = self.clone();
        let omega = spec.matrix_mut(target.omega()).ok_or_else(|| {
            Error::InvalidSpec(format!("spec has no {} matrix", target.omega().name()))
        })?;
        let entry = if present { Entry::free(0.0) } else { Entry::Fixed(0.0) };
        omega.set(edge.low(), edge.high(), entry)?;
        Ok(spec)
    }
}

/// Number of unique elements of a `p x p` covariance matrix.
pub fn unique_moments(p: usize) -> usize {
    p * (p + 1) / 2
}

fn network_pattern(n: usize, edges: &EdgeSet) -> Result<MatrixSpec> {
    let mut omega = MatrixSpec::zeros(n, n, Symmetry::SymmetricZeroDiagonal);
    for e in edges {
        omega.set(e.low(), e.high(), Entry::free(0.0))?;
    }
    Ok(omega)
}
