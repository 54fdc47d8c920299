//! One-hot encoding of every lbl column (v3 -> v4).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::table::{CellValue, Column, ColumnName, Dtype, NameError, Table, TableError, Version};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("label column {column:?} has a Missing cell in row {row:?}")]
    MissingLabelCell { column: String, row: String },
    #[error("encoded name for {column:?} label {label:?}: {source}")]
    Name {
        column: String,
        label: String,
        source: NameError,
    },
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub source: String,
    /// Distinct labels, sorted.
    pub labels: Vec<String>,
    /// Generated column names, parallel to `labels`.
    pub generated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub columns: Vec<PlanEntry>,
}

impl EncodingPlan {
    pub fn generated_count(&self) -> usize {
        self.columns.iter().map(|c| c.generated.len()).sum()
    }
}

/// "enc <source without its tag>_<label>" in canonical parsed form.
pub fn encoded_name(source: &ColumnName, label: &str) -> Result<ColumnName, NameError> {
    let formatted = source.to_string();
    let untagged = match source.meta_kind() {
        Some(_) => formatted
            .rsplit(' ')
            .next()
            .unwrap_or(&formatted)
            .to_string(),
        None => formatted
            .split_once(' ')
            .map(|(_, rest)| rest.to_string())
            .unwrap_or_default(),
    };
    ColumnName::parse(&format!("{} {untagged}_{label}", Dtype::Enc.tag()))
}

type Encoded = (PlanEntry, Vec<(ColumnName, Vec<CellValue>)>);

fn encode_column(col: &Column, rows: &[String]) -> Result<Encoded, EncodeError> {
    let mut values: Vec<&str> = Vec::with_capacity(rows.len());
    for (cell, row) in col.cells().iter().zip(rows) {
        match cell {
            CellValue::Label(s) => values.push(s),
            _ => {
                return Err(EncodeError::MissingLabelCell {
                    column: col.key().to_string(),
                    row: row.clone(),
                })
            }
        }
    }
    let mut labels: Vec<String> = values.iter().map(|s| s.to_string()).collect();
    labels.sort();
    labels.dedup();
    let mut generated = Vec::with_capacity(labels.len());
    let mut columns = Vec::with_capacity(labels.len());
    for label in &labels {
        let name = encoded_name(col.name(), label).map_err(|source| EncodeError::Name {
            column: col.key().to_string(),
            label: label.clone(),
            source,
        })?;
        generated.push(name.to_string());
        let cells = values
            .iter()
            .map(|v| CellValue::Binary(v == label))
            .collect();
        columns.push((name, cells));
    }
    let entry = PlanEntry {
        source: col.key().to_string(),
        labels,
        generated,
    };
    Ok((entry, columns))
}

/// Appends one Binary column per (lbl column, label), label columns kept.
pub fn one_hot(t: Table, mode: ExecMode) -> Result<(Table, EncodingPlan), EncodeError> {
    let sources: Vec<&Column> = t
        .columns()
        .iter()
        .filter(|c| c.dtype() == Dtype::Lbl)
        .collect();
    let encoded = mode.map(&sources, |c| encode_column(c, t.rows()));
    let mut plan = EncodingPlan::default();
    let mut additions = Vec::new();
    for result in encoded {
        let (entry, cols) = result?;
        plan.columns.push(entry);
        additions.extend(cols);
    }
    let t = t.with_columns(additions)?.with_version(Version::V4);
    Ok((t, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::MetaColumn;

    fn lbl(s: &str) -> CellValue {
        CellValue::Label(s.into())
    }

    fn v3() -> Table {
        Table::new(Version::V3, vec!["aa".into(), "bb".into(), "cc".into()])
            .unwrap()
            .with_column(
                ColumnName::meta(MetaColumn::Region),
                vec![lbl("europe"), lbl("africa"), lbl("europe")],
            )
            .unwrap()
            .with_column(
                ColumnName::parse(
                    "lbl people-and-society-major-infectious-diseases degree of risk",
                )
                .unwrap(),
                vec![lbl("high"), lbl("None/NA"), lbl("high")],
            )
            .unwrap()
            .with_column(
                ColumnName::parse("lbl x-y").unwrap(),
                vec![lbl("a"), lbl("b"), lbl("a")],
            )
            .unwrap()
    }

    #[test]
    fn indicator_columns() {
        let (v4, plan) = one_hot(v3(), ExecMode::Sequential).unwrap();
        assert_eq!(v4.version(), Version::V4);
        let b = |v: bool| CellValue::Binary(v);
        assert_eq!(
            v4.column("enc x-y_a").unwrap().cells(),
            [b(true), b(false), b(true)]
        );
        assert_eq!(
            v4.column("enc x-y_b").unwrap().cells(),
            [b(false), b(true), b(false)]
        );
        assert!(v4.contains("enc Region_africa"));
        assert!(v4.contains("enc people-and-society-major-infectious-diseases degree of risk_high"));
        assert!(
            v4.contains("enc people-and-society-major-infectious-diseases degree of risk_None/NA")
        );
        assert!(v4.contains("lbl x-y"));
        assert_eq!(plan.columns[0].labels, ["africa", "europe"]);
        assert_eq!(plan.generated_count(), 6);
    }

    #[test]
    fn single_label_and_missing_label() {
        let t = Table::new(Version::V3, vec!["aa".into(), "bb".into()])
            .unwrap()
            .with_column(
                ColumnName::parse("lbl x-y").unwrap(),
                vec![lbl("a"), lbl("a")],
            )
            .unwrap();
        let (v4, _) = one_hot(t, ExecMode::Sequential).unwrap();
        assert_eq!(
            v4.column("enc x-y_a").unwrap().cells(),
            [CellValue::Binary(true), CellValue::Binary(true)]
        );

        let t = Table::new(Version::V3, vec!["aa".into()])
            .unwrap()
            .with_column(
                ColumnName::parse("lbl x-y").unwrap(),
                vec![CellValue::Missing],
            )
            .unwrap();
        assert!(matches!(
            one_hot(t, ExecMode::Sequential),
            Err(EncodeError::MissingLabelCell { .. })
        ));
    }

    #[test]
    fn reencoding_is_bit_identical() {
        let (v4, _) = one_hot(v3(), ExecMode::Parallel).unwrap();
        let stripped = v4
            .clone()
            .without_columns(|c| c.dtype() == Dtype::Enc)
            .with_version(Version::V3);
        let (again, _) = one_hot(stripped, ExecMode::Sequential).unwrap();
        assert_eq!(again, v4);
    }
}
