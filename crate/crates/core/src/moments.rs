use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample covariance matrix together with its sample size and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMoments", into = "RawMoments")]
pub struct SampleMoments {
    s: DMatrix<f64>,
    n: usize,
    labels: Vec<String>,
    log_det: Option<f64>,
}

impl SampleMoments {
    /// Validates `s` (symmetric within 1e-12, positive semi-definite) and `n >= 2`.
    pub fn new(s: DMatrix<f64>, n: usize, labels: Vec<String>) -> Result<Self> {
        let p = s.nrows();
        if !s.is_square() || labels.len() != p || p == 0 {
            return Err(Error::InvalidConfig(format!(
                "covariance must be square with one label per variable ({}x{}, {} labels)",
                s.nrows(),
                s.ncols(),
                labels.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidConfig("sample size must be at least 2".into()));
        }
        let asym = asymmetry(&s);
        if asym > 1e-12 * s.amax().max(1.0) {
            return Err(Error::NonSymmetric(asym));
        }
        let eig = s.clone().symmetric_eigen();
        let largest = eig.eigenvalues.max();
        if eig.eigenvalues.min() < -1e-8 * largest.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite { what: "sample covariance" });
        }
        let log_det = s
            .clone()
            .cholesky()
            .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
            .filter(|v| v.is_finite());
        Ok(SampleMoments { s, n, labels, log_det })
    }

    /// Centers the columns of an `N x P` data matrix and forms `Y'Y / (N - 1)`.
    pub fn from_raw(data: &DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 {
            return Err(Error::InvalidConfig("need at least two observations".into()));
        }
        let mut centered = data.clone();
        for j in 0..p {
            let mean = data.column(j).iter().sum::<f64>() / n as f64;
            centered.column_mut(j).iter_mut().for_each(|v| *v -= mean);
        }
        let mut s = centered.tr_mul(&centered) / (n - 1) as f64;
        for i in 0..p {
            for j in 0..i {
                s[(j, i)] = s[(i, j)];
            }
        }
        Self::new(s, n, labels)
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.s.nrows()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// `log det S`, or `None` when `S` is singular.
    pub fn log_det(&self) -> Option<f64> {
        self.log_det
    }

    /// Same moments under a different sample size.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.s.clone(), n, self.labels.clone())
    }
}

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

#[derive(Serialize, Deserialize)]
struct RawMoments {
    n: usize,
    labels: Vec<String>,
    s: Vec<Vec<f64>>,
}

impl TryFrom<RawMoments> for SampleMoments {
    type Error = Error;

    fn try_from(raw: RawMoments) -> Result<Self> {
        let p = raw.s.len();
        if raw.s.iter().any(|r| r.len() != p) {
            return Err(Error::MalformedFile("covariance rows have unequal length".into()));
        }
        let s = DMatrix::from_fn(p, p, |i, j| raw.s[i][j]);
        SampleMoments::new(s, raw.n, raw.labels)
    }
}

impl From<SampleMoments> for RawMoments {
    fn from(m: SampleMoments) -> Self {
        RawMoments {
            n: m.n,
            s: m.s.row_iter().map(|r| r.iter().copied().collect()).collect(),
            labels: m.labels,
        }
    }
}
