//! Long-format observation data: CSV ingestion, label indexing, and the
//! C1×C2 cell structure with per-cell unit counts.
//!
//! CSV contract: UTF-8, comma separator, `.` decimal point, mandatory header
//! row. Cluster label columns are compared byte-exact; numeric columns must
//! parse as finite decimal reals. Columns not declared in the schema are
//! ignored. Missing values are rejected, not imputed.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};

/// Declares which columns to read and how to treat them.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Columns kept as raw strings (cluster labels).
    pub cluster_columns: Vec<String>,
    /// Columns parsed as finite decimal reals.
    pub numeric_columns: Vec<String>,
}

impl CsvSchema {
    pub fn new<S: Into<String>>(
        cluster_columns: impl IntoIterator<Item = S>,
        numeric_columns: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            cluster_columns: cluster_columns.into_iter().map(Into::into).collect(),
            numeric_columns: numeric_columns.into_iter().map(Into::into).collect(),
        }
    }
}

/// A parsed observation table: cluster labels as strings, numeric fields as
/// reals, one record per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    cluster_columns: Vec<String>,
    numeric_columns: Vec<String>,
    cluster_values: Vec<Vec<String>>,
    numeric_values: Vec<Vec<f64>>,
}

/// Parses CSV bytes according to `schema`.
///
/// Errors: a declared column missing from the header is a schema error
/// naming the column; a non-numeric or non-finite value in a numeric column
/// is a parse error carrying the 1-based data row number; a file without
/// data rows is an input error.
pub fn ingest_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<ObservationTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidInput(format!("cannot read CSV header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::InvalidInput("empty CSV input".into()));
    }
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let cluster_pos: Vec<usize> = schema
        .cluster_columns
        .iter()
        .map(|c| position(c))
        .collect::<Result<_>>()?;
    let numeric_pos: Vec<usize> = schema
        .numeric_columns
        .iter()
        .map(|c| position(c))
        .collect::<Result<_>>()?;

    let mut cluster_values = Vec::new();
    let mut numeric_values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record =
            record.map_err(|e| Error::InvalidInput(format!("cannot read CSV row {row}: {e}")))?;
        let labels: Vec<String> = cluster_pos
            .iter()
            .map(|&p| record.get(p).unwrap_or_default().to_string())
            .collect();
        let mut nums = Vec::with_capacity(numeric_pos.len());
        for (&p, name) in numeric_pos.iter().zip(&schema.numeric_columns) {
            let raw = record.get(p).unwrap_or_default();
            let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                });
            }
            nums.push(value);
        }
        cluster_values.push(labels);
        numeric_values.push(nums);
    }
    if cluster_values.is_empty() {
        return Err(Error::InvalidInput(
            "CSV has a header but no data rows".into(),
        ));
    }
    Ok(ObservationTable {
        cluster_columns: schema.cluster_columns.clone(),
        numeric_columns: schema.numeric_columns.clone(),
        cluster_values,
        numeric_values,
    })
}

impl ObservationTable {
    pub fn n_rows(&self) -> usize {
        self.cluster_values.len()
    }

    pub fn n_columns(&self) -> usize {
        self.cluster_columns.len() + self.numeric_columns.len()
    }

    pub fn cluster_columns(&self) -> &[String] {
        &self.cluster_columns
    }

    pub fn numeric_columns(&self) -> &[String] {
        &self.numeric_columns
    }

    /// Emits the table in canonical form: declared columns in order (cluster
    /// columns first), `.` decimal point, shortest round-trip float
    /// formatting, no quoting unless a label requires it.
    pub fn to_canonical_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header: Vec<&str> = self
            .cluster_columns
            .iter()
            .chain(self.numeric_columns.iter())
            .map(String::as_str)
            .collect();
        w.write_record(&header).expect("in-memory write");
        for (labels, nums) in self.cluster_values.iter().zip(&self.numeric_values) {
            let mut rec: Vec<String> = labels.clone();
            rec.extend(nums.iter().map(|v| format!("{v}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("valid UTF-8")
    }
}

/// Observations organized on the C1×C2 grid of cluster cells.
///
/// `C1` and `C2` count the *observed* distinct labels per dimension, indexed
/// in first-appearance order. Cells with no observations are retained with
/// `N_ij = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSample {
    c1: usize,
    c2: usize,
    labels1: Vec<String>,
    labels2: Vec<String>,
    numeric_columns: Vec<String>,
    /// Row-major `(i, j)` → unit records (each a numeric field vector).
    cells: Vec<Vec<Vec<f64>>>,
    counts: Vec<usize>,
}

/// Groups `table` by the two cluster columns `g1_col` and `g2_col`.
pub fn build_sample(
    table: &ObservationTable,
    g1_col: &str,
    g2_col: &str,
) -> Result<ClusteredSample> {
    let gpos = |name: &str| -> Result<usize> {
        table
            .cluster_columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let p1 = gpos(g1_col)?;
    let p2 = gpos(g2_col)?;

    let mut labels1: Vec<String> = Vec::new();
    let mut labels2: Vec<String> = Vec::new();
    let mut index1: HashMap<String, usize> = HashMap::new();
    let mut index2: HashMap<String, usize> = HashMap::new();
    let mut assignments = Vec::with_capacity(table.n_rows());
    for labels in &table.cluster_values {
        let i = *index1.entry(labels[p1].clone()).or_insert_with(|| {
            labels1.push(labels[p1].clone());
            labels1.len() - 1
        });
        let j = *index2.entry(labels[p2].clone()).or_insert_with(|| {
            labels2.push(labels[p2].clone());
            labels2.len() - 1
        });
        assignments.push((i, j));
    }

    let c1 = labels1.len();
    let c2 = labels2.len();
    let mut cells: Vec<Vec<Vec<f64>>> = vec![Vec::new(); c1 * c2];
    let mut counts = vec![0usize; c1 * c2];
    for ((i, j), nums) in assignments.into_iter().zip(&table.numeric_values) {
        cells[i * c2 + j].push(nums.clone());
        counts[i * c2 + j] += 1;
    }

    Ok(ClusteredSample {
        c1,
        c2,
        labels1,
        labels2,
        numeric_columns: table.numeric_columns.clone(),
        cells,
        counts,
    })
}

impl ClusteredSample {
    /// Builds a sample directly from per-cell unit records (used by the
    /// simulation DGPs); labels are the 1-based indices as strings.
    pub fn from_cells(
        c1: usize,
        c2: usize,
        numeric_columns: Vec<String>,
        cells: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if c1 == 0 || c2 == 0 {
            return Err(Error::InvalidInput("C1 and C2 must be positive".into()));
        }
        if cells.len() != c1 * c2 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells, got {}",
                c1 * c2,
                cells.len()
            )));
        }
        let width = numeric_columns.len();
        if cells
            .iter()
            .flatten()
            .any(|rec| rec.len() != width || rec.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidInput(
                "unit records must have the declared arity and finite entries".into(),
            ));
        }
        let counts = cells.iter().map(Vec::len).collect();
        Ok(Self {
            c1,
            c2,
            labels1: (1..=c1).map(|i| i.to_string()).collect(),
            labels2: (1..=c2).map(|j| j.to_string()).collect(),
            numeric_columns,
            cells,
            counts,
        })
    }

    pub fn c1(&self) -> usize {
        self.c1
    }

    pub fn c2(&self) -> usize {
        self.c2
    }

    pub fn n_cells(&self) -> usize {
        self.c1 * self.c2
    }

    pub fn labels1(&self) -> &[String] {
        &self.labels1
    }

    pub fn labels2(&self) -> &[String] {
        &self.labels2
    }

    pub fn numeric_columns(&self) -> &[String] {
        &self.numeric_columns
    }

    /// Position of a numeric column by name.
    pub fn numeric_column_index(&self, name: &str) -> Result<usize> {
        self.numeric_columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    }

    /// Unit records of cell `(i, j)`; empty for unobserved cells.
    pub fn cell(&self, i: usize, j: usize) -> &[Vec<f64>] {
        &self.cells[i * self.c2 + j]
    }

    /// Per-cell unit count `N_ij`.
    pub fn count(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.c2 + j]
    }

    /// Total number of unit records.
    pub fn n_units(&self) -> usize {
        self.counts.iter().sum()
    }
}
