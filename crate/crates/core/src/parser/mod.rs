//! Extraction of per-entity Factbook pages into the v1 table.

mod markers;
mod values;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::exec::ExecMode;
use crate::table::{CellValue, ColumnName, Dtype, MetaColumn, Table, TableError, Version};

pub use markers::{
    detect_subfields, split_categories, split_fields, SubfieldKind, SubfieldRecord,
    CATEGORY_MARKER, FIELD_MARKER,
};
pub(crate) use values::number_tokens;
pub use values::{
    clean_text, clean_title, is_na_token, latest_historical, normalize_na, scrub_number, slugify,
    split_grouped, strip_note,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("no readable entity files in {0}")]
    EmptyDirectory(PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// One entity file: its page HTML (lowercased on load) plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEntityDocument {
    pub country_code: String,
    pub name: Option<String>,
    pub region: Option<String>,
    pub raw_html: String,
    pub source_path: PathBuf,
}

#[derive(Deserialize)]
struct EntityFile {
    #[serde(default)]
    code: Option<String>,
    #[serde(default, alias = "country", alias = "title")]
    name: Option<String>,
    #[serde(default)]
    region: Option<String>,
    #[serde(alias = "content", alias = "page")]
    html: String,
}

impl RawEntityDocument {
    pub fn from_json(source_path: &Path, json: &str) -> Result<RawEntityDocument, String> {
        let file: EntityFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let stem = source_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let code = file.code.unwrap_or(stem).trim().to_lowercase();
        if code.is_empty() {
            return Err("entity has no country code".into());
        }
        let meta = |v: Option<String>| {
            v.map(|s| s.trim().to_lowercase())
                .filter(|s| !s.is_empty() && !is_na_token(s))
        };
        Ok(RawEntityDocument {
            country_code: code,
            name: meta(file.name),
            region: meta(file.region),
            raw_html: file.html.to_lowercase(),
            source_path: source_path.to_path_buf(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub path: PathBuf,
    pub reason: String,
}

/// Loads every `*.json` entity file in `dir` (sorted by file name).
/// Unreadable files are skipped with a warning.
pub fn ingest_directory(
    dir: &Path,
) -> Result<(Vec<RawEntityDocument>, Vec<IngestWarning>), ParseError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.is_file())
        .collect();
    paths.sort();
    let mut docs = Vec::with_capacity(paths.len());
    let mut warnings = Vec::new();
    for path in paths {
        let loaded = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|s| RawEntityDocument::from_json(&path, &s));
        match loaded {
            Ok(doc) => docs.push(doc),
            Err(reason) => {
                warn!(path = %path.display(), %reason, "skipping unreadable entity file");
                warnings.push(IngestWarning { path, reason });
            }
        }
    }
    if docs.is_empty() {
        return Err(ParseError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok((docs, warnings))
}

/// A cell that degraded to Missing during extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub entity: String,
    pub column: String,
    pub reason: String,
    pub raw: String,
}

/// Links a filled v1 cell to the record it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub entity: String,
    pub column: String,
    pub record: usize,
}

#[derive(Debug, Clone)]
pub struct ParseOutput {
    pub table: Table,
    pub records: Vec<SubfieldRecord>,
    pub provenance: Vec<Provenance>,
    pub audit: Vec<AuditEntry>,
}

struct EntityExtract {
    code: String,
    name: Option<String>,
    region: Option<String>,
    cells: Vec<(ColumnName, CellValue, usize)>,
    records: Vec<SubfieldRecord>,
    audit: Vec<AuditEntry>,
}

fn unique_name(name: ColumnName, seen: &mut HashSet<String>) -> ColumnName {
    if seen.insert(name.to_string()) {
        return name;
    }
    for n in 2.. {
        let mut candidate = name.clone();
        candidate.subfield = Some(match &name.subfield {
            Some(s) => format!("{s} #{n}"),
            None => format!("#{n}"),
        });
        if seen.insert(candidate.to_string()) {
            return candidate;
        }
    }
    unreachable!()
}

fn extract_entity(doc: &RawEntityDocument) -> EntityExtract {
    let code = doc.country_code.clone();
    let mut cells = Vec::new();
    let mut records = Vec::new();
    let mut audit = Vec::new();
    let mut seen = HashSet::new();

    for (category, cat_frag) in split_categories(&doc.raw_html) {
        for (field, field_frag) in split_fields(&cat_frag) {
            let body = format!("{}-{}", slugify(&category), slugify(&field));
            for rec in detect_subfields(&code, &category, &field, &field_frag) {
                let rec_idx = records.len();
                let subfield = (!rec.adopted).then(|| rec.subfield_title.clone());
                let mut emit = |name: ColumnName, value: CellValue, reason: &str, raw: &str| {
                    let name = unique_name(name, &mut seen);
                    if value.is_missing() {
                        audit.push(AuditEntry {
                            entity: code.clone(),
                            column: name.to_string(),
                            reason: reason.to_string(),
                            raw: raw.to_string(),
                        });
                    }
                    cells.push((name, value, rec_idx));
                };
                match rec.kind {
                    SubfieldKind::Textual => {
                        let text = clean_text(&rec.payload);
                        let (value, reason) = if text.is_empty() {
                            (CellValue::Missing, "empty-text")
                        } else {
                            (normalize_na(CellValue::Text(text.clone())), "na-token")
                        };
                        emit(
                            ColumnName::new(Dtype::Txt, body.clone(), subfield),
                            value,
                            reason,
                            &text,
                        );
                    }
                    SubfieldKind::Numerical => {
                        let text = clean_text(&rec.payload);
                        let value = scrub_number(&text);
                        let reason = if is_na_token(strip_note(&text)) {
                            "na-token"
                        } else {
                            "no-number"
                        };
                        emit(
                            ColumnName::new(Dtype::Num, body.clone(), subfield),
                            value,
                            reason,
                            &text,
                        );
                    }
                    SubfieldKind::Historical => {
                        let text = clean_text(&rec.payload);
                        let value = latest_historical(&text);
                        emit(
                            ColumnName::new(Dtype::Num, body.clone(), subfield).with_hist(true),
                            value,
                            "no-historical-value",
                            &text,
                        );
                    }
                    SubfieldKind::Grouped => {
                        for (group, value) in split_grouped(&rec.payload) {
                            emit(
                                ColumnName::new(Dtype::Num, body.clone(), Some(group)),
                                value,
                                "unparseable-group-value",
                                &clean_text(&rec.payload),
                            );
                        }
                    }
                }
                records.push(rec);
            }
        }
    }
    EntityExtract {
        code,
        name: doc.name.clone(),
        region: doc.region.clone(),
        cells,
        records,
        audit,
    }
}

/// Runs the marker cascade over every document and assembles v1. Entities
/// are ordered by country code; columns by first appearance. Columns with no
/// data at all are dropped.
pub fn build_table_v1(
    docs: &[RawEntityDocument],
    exec: ExecMode,
) -> Result<ParseOutput, ParseError> {
    if docs.is_empty() {
        return Err(ParseError::EmptyDirectory(PathBuf::new()));
    }
    let mut extracts = exec.map(docs, extract_entity);
    extracts.sort_by(|a, b| a.code.cmp(&b.code));

    let rows: Vec<String> = extracts.iter().map(|e| e.code.clone()).collect();
    let n = rows.len();
    let mut order: Vec<ColumnName> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut grid: Vec<Vec<CellValue>> = Vec::new();
    let mut origin: Vec<Vec<Option<usize>>> = Vec::new();
    let mut records = Vec::new();
    let mut audit = Vec::new();

    for (r, e) in extracts.iter().enumerate() {
        let offset = records.len();
        for (name, value, rec) in &e.cells {
            let key = name.to_string();
            let c = *index.entry(key).or_insert_with(|| {
                order.push(name.clone());
                grid.push(vec![CellValue::Missing; n]);
                origin.push(vec![None; n]);
                grid.len() - 1
            });
            grid[c][r] = value.clone();
            origin[c][r] = (!value.is_missing()).then_some(offset + rec);
        }
        records.extend(e.records.iter().cloned());
        audit.extend(e.audit.iter().cloned());
    }

    let meta = |f: fn(&EntityExtract) -> &Option<String>, wrap: fn(String) -> CellValue| {
        extracts
            .iter()
            .map(|e| f(e).clone().map(wrap).unwrap_or(CellValue::Missing))
            .collect::<Vec<_>>()
    };
    let mut table = Table::new(Version::V1, rows.clone())?
        .with_column(
            ColumnName::meta(MetaColumn::CountryName),
            meta(|e| &e.name, CellValue::Text),
        )?
        .with_column(
            ColumnName::meta(MetaColumn::Region),
            meta(|e| &e.region, CellValue::Label),
        )?;

    let mut provenance = Vec::new();
    for ((name, cells), origins) in order.into_iter().zip(grid).zip(origin) {
        if cells.iter().all(CellValue::is_missing) {
            continue;
        }
        let key = name.to_string();
        for (r, o) in origins.iter().enumerate() {
            if let Some(record) = o {
                provenance.push(Provenance {
                    entity: rows[r].clone(),
                    column: key.clone(),
                    record: *record,
                });
            }
        }
        table = table.with_column(name, cells)?;
    }
    Ok(ParseOutput {
        table,
        records,
        provenance,
        audit,
    })
}

/// Convenience: ingest a directory and build v1.
pub fn parse_directory(
    dir: &Path,
    exec: ExecMode,
) -> Result<(ParseOutput, Vec<IngestWarning>), ParseError> {
    let (docs, warnings) = ingest_directory(dir)?;
    Ok((build_table_v1(&docs, exec)?, warnings))
}

pub fn write_audit_jsonl<T: Serialize>(path: &Path, entries: &[T]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(code: &str, html: &str) -> RawEntityDocument {
        RawEntityDocument::from_json(
            Path::new(&format!("{code}.json")),
            &serde_json::json!({"name": code.to_uppercase(), "region": "Europe", "html": html})
                .to_string(),
        )
        .unwrap()
    }

    const PAGE: &str = r#"<div class="category sas_light">Geography ::</div>
<div id="field-anchor-geography-area" class="field-title">Area:</div>
<div class='category_data subfield numeric'><span class="subfield-title">total:</span> 180 sq km <span class="subfield-title">total:</span> 90</div>
<div id="field-anchor-geography-climate" class="field-title">Climate:</div>
<div class='category_data subfield text'>NA</div>"#;

    #[test]
    fn lowercases_once_and_reads_metadata() {
        let d = doc("AA", "<P>X</P>");
        assert_eq!(d.country_code, "aa");
        assert_eq!(d.raw_html, "<p>x</p>");
        assert_eq!(d.name.as_deref(), Some("aa"));
        assert_eq!(d.region.as_deref(), Some("europe"));
    }

    #[test]
    fn duplicate_titles_get_suffix_and_na_text_drops_column() {
        let out = build_table_v1(&[doc("aa", PAGE)], ExecMode::Sequential).unwrap();
        let keys: Vec<_> = out
            .table
            .columns()
            .iter()
            .map(|c| c.key().to_string())
            .collect();
        assert_eq!(
            keys,
            [
                "txt Country Name",
                "lbl Region",
                "num geography-area total",
                "num geography-area total #2"
            ]
        );
        assert_eq!(out.audit.len(), 1);
        assert_eq!(out.audit[0].column, "txt geography-climate");
        assert_eq!(out.audit[0].reason, "na-token");
    }

    #[test]
    fn entity_order_is_sorted_and_deterministic() {
        let docs = vec![doc("zz", PAGE), doc("ab", PAGE)];
        let a = build_table_v1(&docs, ExecMode::Parallel).unwrap();
        let b = build_table_v1(&docs, ExecMode::Sequential).unwrap();
        assert_eq!(a.table.rows(), ["ab", "zz"]);
        assert_eq!(a.table, b.table);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            build_table_v1(&[], ExecMode::Sequential),
            Err(ParseError::EmptyDirectory(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest_directory(dir.path()),
            Err(ParseError::EmptyDirectory(_))
        ));
    }

    #[test]
    fn corrupt_file_is_skipped_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("aa.json"),
            r#"{"name":"a","region":"r","html":"x"}"#,
        )
        .unwrap();
        fs::write(dir.path().join("ab.json"), "{not json").unwrap();
        fs::write(dir.path().join("readme.txt"), "ignored").unwrap();
        let (docs, warnings) = ingest_directory(dir.path()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].path.ends_with("ab.json"));
    }
}
