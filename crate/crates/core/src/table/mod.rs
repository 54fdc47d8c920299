//! Typed columnar table keyed by country code.

mod name;
mod snapshot;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use name::{ColumnName, Dtype, Mape, MetaColumn, NameError};
pub use snapshot::{read_snapshot, read_snapshot_as, schema_path, write_snapshot, SchemaEntry};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("duplicate row key {0:?}")]
    DuplicateRow(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("column {name:?} has {got} cells, table has {expected} rows")]
    LengthMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("cell {value} not allowed in {dtype} column {name:?}")]
    InvalidCell {
        name: String,
        dtype: Dtype,
        value: String,
    },
    #[error("no column named {0:?}")]
    UnknownColumn(String),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("snapshot file name {0:?} does not carry a version (expected v1..v5)")]
    UnknownVersion(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TableError> = std::result::Result<T, E>;

/// Dataset version produced by each pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Version {
    V1,
    V2,
    V3,
    V4,
    V5,
}

impl Version {
    pub const ALL: [Version; 5] = [
        Version::V1,
        Version::V2,
        Version::V3,
        Version::V4,
        Version::V5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Version::V1 => "v1",
            Version::V2 => "v2",
            Version::V3 => "v3",
            Version::V4 => "v4",
            Version::V5 => "v5",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Version> {
        Version::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Missing,
    Number(f64),
    Text(String),
    Label(String),
    Binary(bool),
}

impl CellValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, CellValue::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(v) => Some(*v),
            CellValue::Binary(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            CellValue::Text(s) | CellValue::Label(s) => Some(s),
            _ => None,
        }
    }

    fn fits(&self, dtype: Dtype) -> bool {
        match self {
            CellValue::Missing => true,
            CellValue::Number(v) => dtype.is_numeric() && v.is_finite(),
            CellValue::Text(s) => dtype == Dtype::Txt && !s.is_empty(),
            CellValue::Label(s) => dtype == Dtype::Lbl && !s.is_empty(),
            CellValue::Binary(_) => dtype == Dtype::Enc,
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Missing => f.write_str("<missing>"),
            CellValue::Number(v) => write!(f, "{v}"),
            CellValue::Text(s) => write!(f, "text {s:?}"),
            CellValue::Label(s) => write!(f, "label {s:?}"),
            CellValue::Binary(b) => write!(f, "binary {}", u8::from(*b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: ColumnName,
    key: String,
    cells: Vec<CellValue>,
}

impl Column {
    pub fn name(&self) -> &ColumnName {
        &self.name
    }

    /// Formatted name; the uniqueness key.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn dtype(&self) -> Dtype {
        self.name.dtype
    }

    pub fn cells(&self) -> &[CellValue] {
        &self.cells
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_missing()).count()
    }

    pub fn filled_count(&self) -> usize {
        self.cells.len() - self.missing_count()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| !c.is_missing())
    }
}

/// Rows are country codes; the "Country Code" column is the row index and is
/// not stored among `columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    version: Version,
    rows: Vec<String>,
    columns: Vec<Column>,
    lookup: HashMap<String, usize>,
}

impl Table {
    pub fn new(version: Version, rows: Vec<String>) -> Result<Table> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if !seen.insert(r.as_str()) {
                return Err(TableError::DuplicateRow(r.clone()));
            }
        }
        Ok(Table {
            version,
            rows,
            columns: Vec::new(),
            lookup: HashMap::new(),
        })
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn with_version(mut self, version: Version) -> Table {
        self.version = version;
        self
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_index(&self, code: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == code)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, key: &str) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn column(&self, key: &str) -> Option<&Column> {
        self.column_index(key).map(|i| &self.columns[i])
    }

    pub fn contains(&self, key: &str) -> bool {
        self.lookup.contains_key(key)
    }

    fn validate(&self, name: &ColumnName, key: &str, cells: &[CellValue]) -> Result<()> {
        if cells.len() != self.rows.len() {
            return Err(TableError::LengthMismatch {
                name: key.to_string(),
                expected: self.rows.len(),
                got: cells.len(),
            });
        }
        if let Some(bad) = cells.iter().find(|c| !c.fits(name.dtype)) {
            return Err(TableError::InvalidCell {
                name: key.to_string(),
                dtype: name.dtype,
                value: bad.to_string(),
            });
        }
        Ok(())
    }

    /// Appends a column; names must be unique.
    pub fn with_column(mut self, name: ColumnName, cells: Vec<CellValue>) -> Result<Table> {
        let key = name.to_string();
        if self.lookup.contains_key(&key) || name.meta_kind() == Some(MetaColumn::CountryCode) {
            return Err(TableError::DuplicateColumn(key));
        }
        self.validate(&name, &key, &cells)?;
        self.lookup.insert(key.clone(), self.columns.len());
        self.columns.push(Column { name, key, cells });
        Ok(self)
    }

    pub fn with_columns<I>(self, cols: I) -> Result<Table>
    where
        I: IntoIterator<Item = (ColumnName, Vec<CellValue>)>,
    {
        cols.into_iter()
            .try_fold(self, |t, (name, cells)| t.with_column(name, cells))
    }

    pub fn replace_cells(mut self, key: &str, cells: Vec<CellValue>) -> Result<Table> {
        let idx = self
            .column_index(key)
            .ok_or_else(|| TableError::UnknownColumn(key.to_string()))?;
        let name = self.columns[idx].name.clone();
        self.validate(&name, key, &cells)?;
        self.columns[idx].cells = cells;
        Ok(self)
    }

    pub fn rename_column(mut self, key: &str, new_name: ColumnName) -> Result<Table> {
        let idx = self
            .column_index(key)
            .ok_or_else(|| TableError::UnknownColumn(key.to_string()))?;
        let new_key = new_name.to_string();
        if new_key != key && self.lookup.contains_key(&new_key) {
            return Err(TableError::DuplicateColumn(new_key));
        }
        let cells = std::mem::take(&mut self.columns[idx].cells);
        self.validate(&new_name, &new_key, &cells)?;
        self.lookup.remove(key);
        self.lookup.insert(new_key.clone(), idx);
        self.columns[idx] = Column {
            name: new_name,
            key: new_key,
            cells,
        };
        Ok(self)
    }

    pub fn without_columns<F>(mut self, mut drop: F) -> Table
    where
        F: FnMut(&Column) -> bool,
    {
        self.columns.retain(|c| !drop(c));
        self.reindex();
        self
    }

    pub fn retain_rows<F>(mut self, mut keep: F) -> Table
    where
        F: FnMut(usize, &str) -> bool,
    {
        let mask: Vec<bool> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| keep(i, r))
            .collect();
        retain_mask(&mut self.rows, &mask);
        for c in &mut self.columns {
            retain_mask(&mut c.cells, &mask);
        }
        self
    }

    fn reindex(&mut self) {
        self.lookup = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.key.clone(), i))
            .collect();
    }

    pub fn missing_stats(&self) -> MissingStats {
        MissingStats::of(self)
    }
}

fn retain_mask<T>(v: &mut Vec<T>, mask: &[bool]) {
    let mut i = 0;
    v.retain(|_| {
        let keep = mask[i];
        i += 1;
        keep
    });
}

/// Cell accounting over every stored column (metadata columns included,
/// the row index excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MissingStats {
    pub total_cells: usize,
    pub empty_cells: usize,
    pub filled_cells: usize,
}

impl MissingStats {
    pub fn of(t: &Table) -> MissingStats {
        let empty: usize = t.columns.iter().map(Column::missing_count).sum();
        let total = t.row_count() * t.column_count();
        MissingStats {
            total_cells: total,
            empty_cells: empty,
            filled_cells: total - empty,
        }
    }

    pub fn empty_fraction(&self) -> f64 {
        if self.total_cells == 0 {
            0.0
        } else {
            self.empty_cells as f64 / self.total_cells as f64
        }
    }
}

pub fn missing_stats(t: &Table) -> MissingStats {
    MissingStats::of(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn stats_count_missing() {
        let t = Table::new(Version::V1, codes(2))
            .unwrap()
            .with_column(
                ColumnName::new(Dtype::Num, "a", None),
                vec![CellValue::Number(1.0), CellValue::Missing],
            )
            .unwrap()
            .with_column(
                ColumnName::new(Dtype::Txt, "b", None),
                vec![CellValue::Text("x".into()), CellValue::Text("y".into())],
            )
            .unwrap();
        assert_eq!(
            t.missing_stats(),
            MissingStats {
                total_cells: 4,
                empty_cells: 1,
                filled_cells: 3
            }
        );
    }

    #[test]
    fn stats_all_missing() {
        let mut t = Table::new(Version::V1, codes(3)).unwrap();
        for n in ["a", "b", "c"] {
            t = t
                .with_column(
                    ColumnName::new(Dtype::Num, n, None),
                    vec![CellValue::Missing; 3],
                )
                .unwrap();
        }
        assert_eq!(
            missing_stats(&t),
            MissingStats {
                total_cells: 9,
                empty_cells: 9,
                filled_cells: 0
            }
        );
    }

    #[test]
    fn rejects_bad_cells_and_duplicates() {
        let t = Table::new(Version::V1, codes(1)).unwrap();
        let err = t
            .clone()
            .with_column(
                ColumnName::new(Dtype::Enc, "a", None),
                vec![CellValue::Number(1.0)],
            )
            .unwrap_err();
        assert!(matches!(err, TableError::InvalidCell { .. }));
        let err = t
            .clone()
            .with_column(
                ColumnName::new(Dtype::Num, "a", None),
                vec![CellValue::Number(f64::NAN)],
            )
            .unwrap_err();
        assert!(matches!(err, TableError::InvalidCell { .. }));
        let err = t
            .clone()
            .with_column(
                ColumnName::new(Dtype::Txt, "a", None),
                vec![CellValue::Text(String::new())],
            )
            .unwrap_err();
        assert!(matches!(err, TableError::InvalidCell { .. }));
        let t = t
            .with_column(
                ColumnName::new(Dtype::Num, "a", None),
                vec![CellValue::Missing],
            )
            .unwrap();
        let err = t
            .with_column(
                ColumnName::new(Dtype::Num, "a", None),
                vec![CellValue::Missing],
            )
            .unwrap_err();
        assert!(matches!(err, TableError::DuplicateColumn(_)));
        assert!(matches!(
            Table::new(Version::V1, vec!["aa".into(), "aa".into()]),
            Err(TableError::DuplicateRow(_))
        ));
    }

    #[test]
    fn retain_rows_and_drop_columns() {
        let t = Table::new(Version::V1, codes(3))
            .unwrap()
            .with_column(
                ColumnName::new(Dtype::Num, "a", None),
                vec![
                    CellValue::Number(1.0),
                    CellValue::Number(2.0),
                    CellValue::Number(3.0),
                ],
            )
            .unwrap()
            .with_column(
                ColumnName::new(Dtype::Num, "b", None),
                vec![CellValue::Missing; 3],
            )
            .unwrap();
        let t = t
            .retain_rows(|i, _| i != 1)
            .without_columns(|c| c.key() == "num b");
        assert_eq!(t.rows(), ["c0", "c2"]);
        assert_eq!(t.column_count(), 1);
        assert_eq!(
            t.column("num a").unwrap().cells(),
            [CellValue::Number(1.0), CellValue::Number(3.0)]
        );
        assert!(t.column("num b").is_none());
    }
}
