use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::{asymmetry, SampleMoments};

/// Input tolerance for covariance files.
pub const COVARIANCE_SYMMETRY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    /// Observations in rows, variables in columns, with a header row.
    RawCsv,
    /// Square covariance matrix with a header row of variable names.
    Covariance { n: Option<usize> },
}

/// Sample moments with non-fatal findings about the input.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub moments: SampleMoments,
    pub warnings: Vec<String>,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") || f == "."
}

fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::MalformedFile(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().any(|h| h.is_empty()) {
        return Err(Error::MalformedFile("header row needs a name for every column".into()));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedFile(e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::MalformedFile(format!(
                "row {} has {} fields, expected {}",
                r + 1,
                record.len(),
                header.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                if is_missing(field) {
                    return Err(Error::MissingValues { row: r + 1, col: c + 1 });
                }
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::MalformedFile(format!("row {}, column {}: '{field}' is not a number", r + 1, c + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Parses data held in memory; see [`ingest_data`].
pub fn ingest_str(text: &str, kind: DataKind) -> Result<Ingested> {
    let (labels, rows) = read_table(text)?;
    let p = labels.len();
    let mut warnings = Vec::new();
    let moments = match kind {
        DataKind::RawCsv => {
            if rows.len() < 2 {
                return Err(Error::MalformedFile("need at least two observations".into()));
            }
            let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
            SampleMoments::from_raw(&data, labels)?
        }
        DataKind::Covariance { n } => {
            let n = n.ok_or(Error::MissingN)?;
            if rows.len() != p {
                return Err(Error::MalformedFile(format!(
                    "covariance matrix has {} rows for {p} variables",
                    rows.len()
                )));
            }
            let s = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
            let asym = asymmetry(&s);
            if asym > COVARIANCE_SYMMETRY_TOLERANCE {
                return Err(Error::NonSymmetric(asym));
            }
            let s = (&s + s.transpose()) * 0.5;
            SampleMoments::new(s, n, labels)?
        }
    };
    if moments.log_det().is_none() {
        warnings.push("sample covariance matrix is rank deficient; fits will fail".to_string());
    }
    Ok(Ingested { moments, warnings })
}

/// Reads raw observations or a covariance matrix from a CSV file.
pub fn ingest_data(path: &Path, kind: DataKind) -> Result<Ingested> {
    let text = std::fs::read_to_string(path)?;
    ingest_str(&text, kind)
}

/// Writes observations with a header row. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_raw_csv(path: &Path, data: &DMatrix<f64>, labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::MalformedFile(e.to_string()))?;
    write_rows(&mut w, labels, data)?;
    w.flush()?;
    Ok(())
}

/// Writes a covariance matrix with a header row of variable names.
pub fn write_covariance_csv(path: &Path, moments: &SampleMoments) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::MalformedFile(e.to_string()))?;
    write_rows(&mut w, moments.labels(), moments.s())?;
    w.flush()?;
    Ok(())
}

fn write_rows<W: std::io::Write>(w: &mut csv::Writer<W>, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    let err = |e: csv::Error| Error::MalformedFile(e.to_string());
    w.write_record(labels).map_err(err)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    Ok(())
}

/// Reorders moments to the variable order `observed`.
pub fn align_moments(moments: &SampleMoments, observed: &[String]) -> Result<SampleMoments> {
    if moments.labels() == observed {
        return Ok(moments.clone());
    }
    let index: Vec<usize> = observed
        .iter()
        .map(|name| {
            moments
                .labels()
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::InvalidSpec(format!("variable '{name}' is not in the data")))
        })
        .collect::<Result<_>>()?;
    let s = DMatrix::from_fn(index.len(), index.len(), |i, j| moments.s()[(index[i], index[j])]);
    SampleMoments::new(s, moments.n(), observed.to_vec())
}
