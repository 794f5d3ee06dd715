use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Status of a single model-matrix element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Fixed(f64),
    Free {
        start: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl Entry {
    pub fn free(start: f64) -> Self {
        Entry::Free { start, label: None }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Entry::Free { .. })
    }

    /// Fixed value, or the starting value of a free element.
    pub fn value(&self) -> f64 {
        match self {
            Entry::Fixed(v) => *v,
            Entry::Free { start, .. } => *start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    None,
    Symmetric,
    SymmetricZeroDiagonal,
    Diagonal,
}

impl Symmetry {
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Symmetry::None)
    }
}

/// Free/fixed pattern of one model matrix.
///
/// Entries are stored row-major. For symmetric kinds both triangles are kept
/// and every mutation goes through [`MatrixSpec::set`], which mirrors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrixSpec", into = "RawMatrixSpec")]
pub struct MatrixSpec {
    rows: usize,
    cols: usize,
    symmetry: Symmetry,
    entries: Vec<Entry>,
}

impl MatrixSpec {
    /// All entries fixed to zero.
    pub fn zeros(rows: usize, cols: usize, symmetry: Symmetry) -> Self {
        MatrixSpec {
            rows,
            cols,
            symmetry,
            entries: vec![Entry::Fixed(0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut spec = Self::zeros(n, n, Symmetry::Diagonal);
        for i in 0..n {
            spec.entries[i * n + i] = Entry::Fixed(1.0);
        }
        spec
    }

    /// Diagonal matrix with every diagonal element free.
    pub fn free_diagonal(n: usize, start: f64) -> Self {
        let mut spec = Self::zeros(n, n, Symmetry::Diagonal);
        for i in 0..n {
            spec.entries[i * n + i] = Entry::free(start);
        }
        spec
    }

    /// Symmetric matrix with every element free: `diag_start` on the
    /// diagonal, `off_start` elsewhere.
    pub fn free_symmetric(n: usize, diag_start: f64, off_start: f64) -> Self {
        let mut spec = Self::zeros(n, n, Symmetry::Symmetric);
        for i in 0..n {
            for j in 0..n {
                let start = if i == j { diag_start } else { off_start };
                spec.entries[i * n + j] = Entry::free(start);
            }
        }
        spec
    }

    /// Symmetric zero-diagonal matrix (a network) with every off-diagonal
    /// element free at zero.
    pub fn full_network(n: usize) -> Self {
        let mut spec = Self::zeros(n, n, Symmetry::SymmetricZeroDiagonal);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    spec.entries[i * n + j] = Entry::free(0.0);
                }
            }
        }
        spec
    }

    /// Fixed matrix holding exactly `values`.
    pub fn fixed(values: &DMatrix<f64>, symmetry: Symmetry) -> Result<Self> {
        let (rows, cols) = values.shape();
        let entries = (0..rows * cols)
            .map(|k| Entry::Fixed(values[(k / cols, k % cols)]))
            .collect();
        let spec = MatrixSpec {
            rows,
            cols,
            symmetry,
            entries,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn get(&self, i: usize, j: usize) -> &Entry {
        &self.entries[i * self.cols + j]
    }

    /// Sets element `(i, j)`, mirroring to `(j, i)` for symmetric kinds.
    ///
    /// Writes that would break the symmetry kind (a free diagonal of a
    /// network, an off-diagonal of a diagonal matrix) are rejected.
    pub fn set(&mut self, i: usize, j: usize, entry: Entry) -> Result<()> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::InvalidSpec(format!(
                "index ({i}, {j}) out of bounds for {}x{} matrix",
                self.rows, self.cols
            )));
        }
        match self.symmetry {
            Symmetry::SymmetricZeroDiagonal if i == j && entry != Entry::Fixed(0.0) => {
                return Err(Error::InvalidSpec(
                    "network matrices must keep a zero diagonal".into(),
                ));
            }
            Symmetry::Diagonal if i != j && entry != Entry::Fixed(0.0) => {
                return Err(Error::InvalidSpec(
                    "diagonal matrices must keep zero off-diagonals".into(),
                ));
            }
            _ => {}
        }
        if self.symmetry.is_symmetric() {
            self.entries[j * self.cols + i] = entry.clone();
        }
        self.entries[i * self.cols + j] = entry;
        Ok(())
    }

    /// Fixed values and free starting values as a dense matrix.
    pub fn start_values(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).value())
    }

    pub fn free_count(&self) -> usize {
        self.canonical_positions()
            .filter(|&(i, j)| self.get(i, j).is_free())
            .count()
    }

    /// Positions that own a parameter slot: the lower triangle (diagonal
    /// included) for symmetric kinds, everything otherwise.
    pub fn canonical_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let symmetric = self.symmetry.is_symmetric();
        (0..self.rows).flat_map(move |i| {
            let upper = if symmetric { i + 1 } else { self.cols };
            (0..upper).map(move |j| (i, j))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.rows * self.cols {
            return Err(Error::InvalidSpec("entry count does not match shape".into()));
        }
        for e in &self.entries {
            if !e.value().is_finite() {
                return Err(Error::InvalidSpec("non-finite matrix entry".into()));
            }
        }
        if self.symmetry.is_symmetric() && self.rows != self.cols {
            return Err(Error::InvalidSpec("symmetric matrix must be square".into()));
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                let e = self.get(i, j);
                if self.symmetry.is_symmetric() && e != self.get(j, i) {
                    return Err(Error::InvalidSpec(format!(
                        "symmetric matrix differs at ({i}, {j}) and ({j}, {i})"
                    )));
                }
                match self.symmetry {
                    Symmetry::SymmetricZeroDiagonal if i == j && *e != Entry::Fixed(0.0) => {
                        return Err(Error::InvalidSpec(
                            "network matrix has a non-zero diagonal".into(),
                        ));
                    }
                    Symmetry::Diagonal if i != j && *e != Entry::Fixed(0.0) => {
                        return Err(Error::InvalidSpec(
                            "diagonal matrix has a non-zero off-diagonal".into(),
                        ));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Serialized form: nested rows instead of a flat entry vector.
#[derive(Serialize, Deserialize)]
struct RawMatrixSpec {
    symmetry: Symmetry,
    rows: usize,
    cols: usize,
    entries: Vec<Vec<Entry>>,
}

impl TryFrom<RawMatrixSpec> for MatrixSpec {
    type Error = Error;

    fn try_from(raw: RawMatrixSpec) -> Result<Self> {
        if raw.entries.len() != raw.rows || raw.entries.iter().any(|r| r.len() != raw.cols) {
            return Err(Error::InvalidSpec(format!(
                "matrix entries are not {}x{}",
                raw.rows, raw.cols
            )));
        }
        let spec = MatrixSpec {
            rows: raw.rows,
            cols: raw.cols,
            symmetry: raw.symmetry,
            entries: raw.entries.into_iter().flatten().collect(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<MatrixSpec> for RawMatrixSpec {
    fn from(spec: MatrixSpec) -> Self {
        let cols = spec.cols.max(1);
        let entries = if spec.cols == 0 {
            vec![Vec::new(); spec.rows]
        } else {
            spec.entries.chunks(cols).map(<[Entry]>::to_vec).collect()
        };
        RawMatrixSpec {
            symmetry: spec.symmetry,
            rows: spec.rows,
            cols: spec.cols,
            entries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_mirrors_symmetric_entries() {
        let mut m = MatrixSpec::zeros(3, 3, Symmetry::SymmetricZeroDiagonal);
        m.set(2, 0, Entry::free(0.1)).unwrap();
        assert_eq!(m.get(0, 2), &Entry::free(0.1));
        assert_eq!(m.free_count(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn network_diagonal_cannot_be_freed() {
        let mut m = MatrixSpec::full_network(3);
        assert!(m.set(1, 1, Entry::free(0.0)).is_err());
        assert_eq!(m.free_count(), 3);
    }

    #[test]
    fn diagonal_rejects_off_diagonal() {
        let mut m = MatrixSpec::free_diagonal(2, 1.0);
        assert!(m.set(0, 1, Entry::Fixed(0.3)).is_err());
        assert_eq!(m.free_count(), 2);
    }

    #[test]
    fn rejects_asymmetric_on_deserialize() {
        let json = r#"{"symmetry":"symmetric","rows":2,"cols":2,
            "entries":[[1.0, 0.5],[0.4, 1.0]]}"#;
        assert!(serde_json::from_str::<MatrixSpec>(json).is_err());
    }

    #[test]
    fn entry_serialization_is_compact() {
        let mut m = MatrixSpec::zeros(1, 2, Symmetry::None);
        m.set(0, 1, Entry::Free { start: 1.0, label: Some("l1".into()) }).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"{"symmetry":"none","rows":1,"cols":2,"entries":[[0.0,{"start":1.0,"label":"l1"}]]}"#
        );
        let back: MatrixSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
