use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::matrix::Symmetry;
use super::spec::{Block, MatrixId, ModelSpec};
use crate::error::{Error, Result};

/// Location of one free parameter. Symmetric pairs are addressed by their
/// lower-triangle position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub matrix: MatrixId,
    pub row: usize,
    pub col: usize,
}

impl Slot {
    /// Variance-like slots that must stay positive: scaling entries of a
    /// network block and diagonals of a covariance block.
    pub fn is_scale(&self) -> bool {
        match self.matrix {
            MatrixId::DeltaPsi | MatrixId::DeltaTheta => true,
            MatrixId::Psi | MatrixId::Theta => self.row == self.col,
            _ => false,
        }
    }
}

/// Free parameter slots of a spec, in canonical order (matrix, row, col).
pub fn free_slots(spec: &ModelSpec) -> Vec<Slot> {
    spec.matrices()
        .flat_map(|(id, m)| {
            m.canonical_positions()
                .filter(move |&(i, j)| m.get(i, j).is_free())
                .map(move |(row, col)| Slot {
                    matrix: id,
                    row,
                    col,
                })
        })
        .collect()
}

/// Flat vector of free parameters together with their slot mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    values: Vec<f64>,
    slots: Vec<Slot>,
}

impl ParameterState {
    /// Starting values declared in the spec.
    pub fn from_starts(spec: &ModelSpec) -> Self {
        let slots = free_slots(spec);
        let values = slots
            .iter()
            .map(|s| {
                spec.matrix(s.matrix)
                    .expect("slot refers to a present matrix")
                    .get(s.row, s.col)
                    .value()
            })
            .collect();
        ParameterState { values, slots }
    }

    /// Reads the spec's free slots out of already-populated matrices, falling
    /// back to the spec's starts where `source` lacks a matrix. Used to carry
    /// estimates across neighbouring models.
    pub fn from_matrices(spec: &ModelSpec, source: &ModelMatrices) -> Self {
        let mut state = Self::from_starts(spec);
        for (v, s) in state.values.iter_mut().zip(&state.slots) {
            if let Some(m) = source.get(s.matrix) {
                if m.shape() == spec.matrix(s.matrix).map(|x| (x.rows(), x.cols())).unwrap() {
                    *v = m[(s.row, s.col)];
                }
            }
        }
        state
    }

    pub fn with_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        let slots = free_slots(spec);
        if slots.len() != values.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} parameter values, got {}",
                slots.len(),
                values.len()
            )));
        }
        Ok(ParameterState { values, slots })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_of(&self, slot: &Slot) -> Option<f64> {
        self.slots
            .iter()
            .position(|s| s == slot)
            .map(|k| self.values[k])
    }

    /// Dense matrices with the free values written in.
    pub fn to_matrices(&self, spec: &ModelSpec) -> ModelMatrices {
        let mut mats = ModelMatrices::from_spec(spec);
        for (&v, s) in self.values.iter().zip(&self.slots) {
            let symmetric = spec.matrix(s.matrix).unwrap().symmetry() != Symmetry::None;
            let m = mats.get_mut(s.matrix).unwrap();
            m[(s.row, s.col)] = v;
            if symmetric {
                m[(s.col, s.row)] = v;
            }
        }
        mats
    }

    /// Reads the vector back out of matrices built by [`Self::to_matrices`].
    pub fn read_back(&self, mats: &ModelMatrices) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| mats.get(s.matrix).unwrap()[(s.row, s.col)])
            .collect()
    }
}

/// Numeric values of a covariance block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValues {
    Covariance(DMatrix<f64>),
    Network { omega: DMatrix<f64>, delta: DMatrix<f64> },
}

impl BlockValues {
    fn from_block(block: &Block) -> Self {
        match block {
            Block::Covariance { matrix } => BlockValues::Covariance(matrix.start_values()),
            Block::Network { omega, delta } => BlockValues::Network {
                omega: omega.start_values(),
                delta: delta.start_values(),
            },
        }
    }
}

/// Dense values of every matrix of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub lambda: DMatrix<f64>,
    pub beta: Option<DMatrix<f64>>,
    pub psi: BlockValues,
    pub theta: BlockValues,
}

impl ModelMatrices {
    /// Fixed values plus starting values of the free entries.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        ModelMatrices {
            lambda: spec.matrix(MatrixId::Lambda).unwrap().start_values(),
            beta: spec.matrix(MatrixId::Beta).map(|b| b.start_values()),
            psi: BlockValues::from_block(spec.psi()),
            theta: BlockValues::from_block(spec.theta()),
        }
    }

    pub fn get(&self, id: MatrixId) -> Option<&DMatrix<f64>> {
        match (id, &self.psi, &self.theta) {
            (MatrixId::Lambda, _, _) => Some(&self.lambda),
            (MatrixId::Beta, _, _) => self.beta.as_ref(),
            (MatrixId::Psi, BlockValues::Covariance(m), _) => Some(m),
            (MatrixId::OmegaPsi, BlockValues::Network { omega, .. }, _) => Some(omega),
            (MatrixId::DeltaPsi, BlockValues::Network { delta, .. }, _) => Some(delta),
            (MatrixId::Theta, _, BlockValues::Covariance(m)) => Some(m),
            (MatrixId::OmegaTheta, _, BlockValues::Network { omega, .. }) => Some(omega),
            (MatrixId::DeltaTheta, _, BlockValues::Network { delta, .. }) => Some(delta),
            _ => None,
        }
    }

    fn get_mut(&mut self, id: MatrixId) -> Option<&mut DMatrix<f64>> {
        match (id, &mut self.psi, &mut self.theta) {
            (MatrixId::Lambda, _, _) => Some(&mut self.lambda),
            (MatrixId::Beta, _, _) => self.beta.as_mut(),
            (MatrixId::Psi, BlockValues::Covariance(m), _) => Some(m),
            (MatrixId::OmegaPsi, BlockValues::Network { omega, .. }, _) => Some(omega),
            (MatrixId::DeltaPsi, BlockValues::Network { delta, .. }, _) => Some(delta),
            (MatrixId::Theta, _, BlockValues::Covariance(m)) => Some(m),
            (MatrixId::OmegaTheta, _, BlockValues::Network { omega, .. }) => Some(omega),
            (MatrixId::DeltaTheta, _, BlockValues::Network { delta, .. }) => Some(delta),
            _ => None,
        }
    }
}
