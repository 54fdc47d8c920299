//! Snapshot persistence: `<name>.csv` plus a `<name>.schema.json` sidecar.
//!
//! The CSV's first column is "Country Code", the header row carries the
//! formatted column names, and an empty field means Missing. The sidecar
//! lists `{name, dtype, hist, mape}` for every column after the row index so
//! that enc cells come back as Binary rather than Number.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellValue, ColumnName, Dtype, MetaColumn, Result, Table, TableError, Version};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    pub dtype: Dtype,
    pub hist: bool,
    pub mape: Option<f64>,
}

/// `dir/v1.csv` -> `dir/v1.schema.json`.
pub fn schema_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.schema.json"))
}

fn encode_cell(cell: &CellValue) -> String {
    match cell {
        CellValue::Missing => String::new(),
        CellValue::Number(v) => format!("{v}"),
        CellValue::Text(s) | CellValue::Label(s) => s.clone(),
        CellValue::Binary(b) => if *b { "1" } else { "0" }.to_string(),
    }
}

fn decode_cell(field: &str, dtype: Dtype, column: &str) -> Result<CellValue> {
    if field.is_empty() {
        return Ok(CellValue::Missing);
    }
    let bad = || {
        TableError::SchemaMismatch(format!(
            "column {column:?}: cannot read {field:?} as {dtype}"
        ))
    };
    Ok(match dtype {
        Dtype::Txt => CellValue::Text(field.to_string()),
        Dtype::Lbl => CellValue::Label(field.to_string()),
        Dtype::Enc => match field {
            "0" => CellValue::Binary(false),
            "1" => CellValue::Binary(true),
            _ => return Err(bad()),
        },
        Dtype::Num | Dtype::Sum | Dtype::Amount => {
            CellValue::Number(field.parse::<f64>().map_err(|_| bad())?)
        }
    })
}

pub fn write_snapshot(t: &Table, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_path(path)?;
    let mut header = Vec::with_capacity(t.column_count() + 1);
    header.push(MetaColumn::CountryCode.as_str().to_string());
    header.extend(t.columns().iter().map(|c| c.key().to_string()));
    wtr.write_record(&header)?;
    for (r, code) in t.rows().iter().enumerate() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(code.clone());
        rec.extend(t.columns().iter().map(|c| encode_cell(&c.cells()[r])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;

    let schema: Vec<SchemaEntry> = t
        .columns()
        .iter()
        .map(|c| SchemaEntry {
            name: c.key().to_string(),
            dtype: c.dtype(),
            hist: c.name().hist,
            mape: c.name().mape.as_ref().map(|m| m.percent()),
        })
        .collect();
    let mut f = fs::File::create(schema_path(path))?;
    serde_json::to_writer_pretty(&mut f, &schema)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Reads a snapshot whose file stem names its version (`v3.csv`).
pub fn read_snapshot(path: &Path) -> Result<Table> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let version = Version::from_str_opt(&stem).ok_or(TableError::UnknownVersion(stem))?;
    read_snapshot_as(path, version)
}

pub fn read_snapshot_as(path: &Path, version: Version) -> Result<Table> {
    let schema: Vec<SchemaEntry> = serde_json::from_slice(&fs::read(schema_path(path))?)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some(MetaColumn::CountryCode.as_str()) {
        return Err(TableError::SchemaMismatch(
            "first column must be \"Country Code\"".into(),
        ));
    }
    if header.len() - 1 != schema.len() {
        return Err(TableError::SchemaMismatch(format!(
            "data has {} columns, sidecar lists {}",
            header.len() - 1,
            schema.len()
        )));
    }
    let mut names = Vec::with_capacity(schema.len());
    for (h, entry) in header.iter().skip(1).zip(&schema) {
        if h != entry.name {
            return Err(TableError::SchemaMismatch(format!(
                "header {h:?} differs from sidecar {:?}",
                entry.name
            )));
        }
        let name = ColumnName::parse(h)?;
        if name.dtype != entry.dtype || name.hist != entry.hist {
            return Err(TableError::SchemaMismatch(format!(
                "column {h:?}: sidecar says {} (hist {}), name says {} (hist {})",
                entry.dtype, entry.hist, name.dtype, name.hist
            )));
        }
        names.push(name);
    }

    let mut rows = Vec::new();
    let mut cols: Vec<Vec<CellValue>> = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.get(0).unwrap_or_default().to_string());
        for (i, name) in names.iter().enumerate() {
            let field = rec.get(i + 1).unwrap_or_default();
            cols[i].push(decode_cell(field, name.dtype, &schema[i].name)?);
        }
    }
    Table::new(version, rows)?.with_columns(names.into_iter().zip(cols))
}
