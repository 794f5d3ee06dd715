use nalgebra::DMatrix;

use super::params::{BlockValues, ModelMatrices, ParameterState};
use super::spec::ModelSpec;
use crate::error::{Error, Result};

/// Condition number above which `I - B` or `I - Omega` counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Implied covariance matrix of `spec` at `params`.
pub fn implied_covariance(spec: &ModelSpec, params: &ParameterState) -> Result<DMatrix<f64>> {
    Ok(Assembly::new(params.to_matrices(spec))?.sigma)
}

/// A covariance block after assembly, with the inverse needed for gradients
/// kept when the block is a network.
#[derive(Debug, Clone)]
pub struct AssembledBlock {
    pub cov: DMatrix<f64>,
    /// `(I - Omega)^-1` for network blocks.
    pub inverse: Option<DMatrix<f64>>,
}

impl AssembledBlock {
    fn new(values: &BlockValues, what: &'static str) -> Result<Self> {
        match values {
            BlockValues::Covariance(m) => Ok(AssembledBlock {
                cov: m.clone(),
                inverse: None,
            }),
            BlockValues::Network { omega, delta } => {
                let n = omega.nrows();
                let r = checked_inverse(DMatrix::identity(n, n) - omega, what)?;
                let cov = scale_both_sides(&r, delta);
                Ok(AssembledBlock {
                    cov: symmetrize(cov),
                    inverse: Some(r),
                })
            }
        }
    }
}

/// All intermediate products of the implied covariance.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub mats: ModelMatrices,
    /// `(I - B)^-1`, when B is present.
    pub structural: Option<DMatrix<f64>>,
    pub psi: AssembledBlock,
    pub theta: AssembledBlock,
    /// `Lambda (I - B)^-1`.
    pub loadings: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl Assembly {
    pub fn new(mats: ModelMatrices) -> Result<Self> {
        let structural = match &mats.beta {
            Some(b) => {
                let m = b.nrows();
                Some(checked_inverse(DMatrix::identity(m, m) - b, "I - B")?)
            }
            None => None,
        };
        let psi = AssembledBlock::new(&mats.psi, "I - omega_psi")?;
        let theta = AssembledBlock::new(&mats.theta, "I - omega_theta")?;
        let loadings = match &structural {
            Some(a) => &mats.lambda * a,
            None => mats.lambda.clone(),
        };
        let mut sigma = theta.cov.clone();
        if loadings.ncols() > 0 {
            sigma += &loadings * &psi.cov * loadings.transpose();
        }
        Ok(Assembly {
            mats,
            structural,
            psi,
            theta,
            loadings,
            sigma: symmetrize(sigma),
        })
    }
}

/// `D M D` for diagonal `D`.
pub(crate) fn scale_both_sides(m: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[(i, i)] * m[(i, j)] * d[(j, j)])
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a structural matrix, rejecting numerically singular inputs.
pub(crate) fn checked_inverse(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m);
    }
    let norm = one_norm(&m);
    let inv = m
        .lu()
        .try_inverse()
        .ok_or(Error::SingularStructuralMatrix { matrix: what })?;
    let cond = norm * one_norm(&inv);
    if !cond.is_finite() || cond > SINGULAR_CONDITION {
        return Err(Error::SingularStructuralMatrix { matrix: what });
    }
    Ok(inv)
}
