//! Tabular data with causal role annotations.
//!
//! Values are stored column-major as `f64`. Binary columns hold 0/1 after
//! ingestion, but derived tables (warped features, soft labels) may carry
//! fractional values in the same columns.

mod recipe;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use recipe::{apply_recipe, apply_recipe_counted, Recipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Binary,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pa,
    Confounder,
    Feature,
    Target,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: Role,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: Role) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            role,
        }
    }
}

#[derive(Deserialize)]
struct SpecEntry {
    kind: ColumnKind,
    role: Role,
}

/// Parses a column spec document: a JSON object mapping each column name to
/// `{"kind": "binary"|"numeric", "role": "pa"|"confounder"|"feature"|"target"|"ignore"}`.
///
/// The returned specs are sorted by name; table column order always comes
/// from the CSV header.
pub fn parse_column_specs(json: &str) -> Result<Vec<ColumnSpec>> {
    let map: std::collections::BTreeMap<String, SpecEntry> = serde_json::from_str(json)?;
    let specs: Vec<ColumnSpec> = map
        .into_iter()
        .map(|(name, e)| ColumnSpec::new(name, e.kind, e.role))
        .collect();
    check_roles(&specs)?;
    Ok(specs)
}

pub fn load_column_specs(path: impl AsRef<Path>) -> Result<Vec<ColumnSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_column_specs(&text)
}

fn check_roles(specs: &[ColumnSpec]) -> Result<()> {
    let count = |role| specs.iter().filter(|s| s.role == role).count();
    if count(Role::Pa) != 1 {
        return Err(Error::Schema(format!(
            "exactly one column must have role 'pa', found {}",
            count(Role::Pa)
        )));
    }
    if count(Role::Target) != 1 {
        return Err(Error::Schema(format!(
            "exactly one column must have role 'target', found {}",
            count(Role::Target)
        )));
    }
    for s in specs {
        if matches!(s.role, Role::Pa | Role::Target) && s.kind != ColumnKind::Binary {
            return Err(Error::Schema(format!(
                "column '{}' has role {:?} and must be binary",
                s.name, s.role
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for s in specs {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column '{}'", s.name)));
        }
    }
    Ok(())
}

/// Character cells with a header; the input of encoding recipes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    found: rec.len(),
                    expected: header.len(),
                });
            }
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        Ok(RawTable { header, rows })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    columns: Vec<ColumnSpec>,
    data: Vec<Vec<f64>>,
    advantaged_level: f64,
}

impl DatasetTable {
    /// Builds a table from column-major data. Checks structure and roles but
    /// not binary membership, since warped tables hold fractional values.
    pub fn from_columns(
        columns: Vec<ColumnSpec>,
        data: Vec<Vec<f64>>,
        advantaged_level: f64,
    ) -> Result<Self> {
        check_roles(&columns)?;
        if columns.len() != data.len() {
            return Err(Error::Schema(format!(
                "{} column specs for {} data columns",
                columns.len(),
                data.len()
            )));
        }
        let n = data.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::Empty("table has no rows".into()));
        }
        if let Some((spec, col)) = columns.iter().zip(&data).find(|(_, c)| c.len() != n) {
            return Err(Error::Schema(format!(
                "column '{}' has {} values, expected {}",
                spec.name,
                col.len(),
                n
            )));
        }
        for (spec, col) in columns.iter().zip(&data) {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Missing {
                    row: i + 1,
                    column: spec.name.clone(),
                });
            }
        }
        Ok(DatasetTable {
            columns,
            data,
            advantaged_level,
        })
    }

    /// Like [`DatasetTable::from_columns`], additionally requiring binary
    /// columns to hold only 0 and 1.
    pub fn from_columns_strict(
        columns: Vec<ColumnSpec>,
        data: Vec<Vec<f64>>,
        advantaged_level: f64,
    ) -> Result<Self> {
        let table = Self::from_columns(columns, data, advantaged_level)?;
        table.check_binary()?;
        Ok(table)
    }

    pub fn check_binary(&self) -> Result<()> {
        for (spec, col) in self.columns.iter().zip(&self.data) {
            if spec.kind != ColumnKind::Binary {
                continue;
            }
            if let Some(i) = col.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinary {
                    row: i + 1,
                    column: spec.name.clone(),
                    value: col[i].to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.data[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn advantaged_level(&self) -> f64 {
        self.advantaged_level
    }

    pub fn with_advantaged_level(mut self, level: f64) -> Self {
        self.advantaged_level = level;
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    pub fn column(&self, idx: usize) -> &[f64] {
        &self.data[idx]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.data[self.require_column(name)?])
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[col][row]
    }

    /// One record in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn pa_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == Role::Pa)
            .unwrap()
    }

    pub fn target_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == Role::Target)
            .unwrap()
    }

    /// Model inputs: the PA, confounders and features, in column order.
    pub fn predictor_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.role, Role::Pa | Role::Confounder | Role::Feature))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> DatasetTable {
        DatasetTable {
            columns: self.columns.clone(),
            data: self
                .data
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            advantaged_level: self.advantaged_level,
        }
    }

    pub fn replace_column(&mut self, idx: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows());
        self.data[idx] = values;
    }

    pub fn from_rows(
        columns: Vec<ColumnSpec>,
        rows: &[Vec<f64>],
        advantaged_level: f64,
    ) -> Result<Self> {
        let p = columns.len();
        let mut data = vec![Vec::with_capacity(rows.len()); p];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    found: r.len(),
                    expected: p,
                });
            }
            for (c, v) in data.iter_mut().zip(r) {
                c.push(*v);
            }
        }
        Self::from_columns(columns, data, advantaged_level)
    }

    /// Reads a CSV whose header names exactly the columns in `specs`.
    pub fn from_csv_reader<R: Read>(reader: R, specs: &[ColumnSpec]) -> Result<Self> {
        check_roles(specs)?;
        let raw = RawTable::from_reader(reader)?;
        let by_name: HashMap<&str, &ColumnSpec> =
            specs.iter().map(|s| (s.name.as_str(), s)).collect();
        let mut columns = Vec::with_capacity(raw.header.len());
        for h in &raw.header {
            match by_name.get(h.as_str()) {
                Some(s) => columns.push((*s).clone()),
                None => return Err(Error::UnknownColumn(h.clone())),
            }
        }
        if let Some(s) = specs.iter().find(|s| raw.column_index(&s.name).is_none()) {
            return Err(Error::Schema(format!(
                "column '{}' is declared but absent from the header",
                s.name
            )));
        }
        if raw.rows.is_empty() {
            return Err(Error::Empty("csv has no data rows".into()));
        }
        let mut data = vec![Vec::with_capacity(raw.rows.len()); columns.len()];
        for (r, rec) in raw.rows.iter().enumerate() {
            for ((cell, spec), col) in rec.iter().zip(&columns).zip(data.iter_mut()) {
                col.push(parse_cell(cell, r + 1, spec)?);
            }
        }
        let strict = DatasetTable {
            columns,
            data,
            advantaged_level: 1.0,
        };
        strict.check_binary()?;
        Ok(strict)
    }

    pub fn load_csv(path: impl AsRef<Path>, specs: &[ColumnSpec]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(std::io::BufReader::new(file), specs)
    }

    /// Writes the header and all rows; numbers use the shortest decimal form
    /// that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for i in 0..self.n_rows() {
            w.write_record(self.data.iter().map(|c| format_number(c[i])))?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_raw(&self) -> RawTable {
        RawTable {
            header: self.columns.iter().map(|c| c.name.clone()).collect(),
            rows: self
                .rows()
                .map(|r| r.into_iter().map(format_number).collect())
                .collect(),
        }
    }
}

pub(crate) fn format_number(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

fn parse_cell(cell: &str, row: usize, spec: &ColumnSpec) -> Result<f64> {
    if is_missing(cell) {
        return Err(Error::Missing {
            row,
            column: spec.name.clone(),
        });
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        row,
        column: spec.name.clone(),
        value: cell.to_owned(),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: spec.name.clone(),
            value: cell.to_owned(),
        });
    }
    if spec.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
        return Err(Error::NonBinary {
            row,
            column: spec.name.clone(),
            value: cell.to_owned(),
        });
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Uniform random train/test partition; both index lists are sorted.
pub fn split(table: &DatasetTable, fraction: f64, seed: u64) -> Result<SplitIndices> {
    split_n(table.n_rows(), fraction, seed)
}

pub fn split_n(n: usize, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} row(s) into train and test"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}
