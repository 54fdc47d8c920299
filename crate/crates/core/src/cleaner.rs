//! Size reduction of v1 into v2: non-state row removal, family
//! concatenation, MNAR filling and sparse-column removal, in that order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::table::{
    CellValue, Column, ColumnName, Dtype, MissingStats, Table, TableError, Version,
};

const DEFAULT_DROPLIST: &str = include_str!("../config/droplist.json");
const DEFAULT_MANIFEST: &str = include_str!("../config/mnar_manifest.json");
const DEFAULT_FAMILIES: &str = include_str!("../config/concat_families.json");

pub const DEFAULT_SPARSE_THRESHOLD: f64 = 0.95;

#[derive(Debug, Error)]
pub enum CleanError {
    #[error("MNAR fill {fill:?} does not fit column {column:?}")]
    TypeMismatch { column: String, fill: MnarFill },
    #[error("sparse threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("config {name}: {message}")]
    Config { name: String, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
}

fn config_err(name: &str, e: impl std::fmt::Display) -> CleanError {
    CleanError::Config {
        name: name.to_string(),
        message: e.to_string(),
    }
}

fn load_json<T: for<'de> Deserialize<'de>>(name: &str, text: &str) -> Result<T, CleanError> {
    serde_json::from_str(text).map_err(|e| config_err(name, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CleanError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| config_err(&name, e))?;
    load_json(&name, &text)
}

/// Codes of entities that are not states, with a readable reason each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Droplist {
    pub population_column: String,
    pub codes: BTreeMap<String, String>,
}

impl Droplist {
    pub fn from_path(path: &Path) -> Result<Droplist, CleanError> {
        read_json(path)
    }
}

impl Default for Droplist {
    fn default() -> Self {
        load_json("droplist.json", DEFAULT_DROPLIST).expect("bundled droplist is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConcatStyle {
    /// Joins the subfield titles of the members present in the row.
    Titles,
    /// Joins "title: value" for the members present in the row.
    Values,
}

/// Columns sharing `body` (and, when given, a subfield prefix) that are
/// folded into the single text column `new_name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatFamily {
    pub body: String,
    #[serde(default)]
    pub subfield_prefix: Option<String>,
    pub new_name: String,
    pub style: ConcatStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatConfig {
    pub delimiter: String,
    pub families: Vec<ConcatFamily>,
}

impl ConcatConfig {
    pub fn from_path(path: &Path) -> Result<ConcatConfig, CleanError> {
        read_json(path)
    }
}

impl Default for ConcatConfig {
    fn default() -> Self {
        load_json("concat_families.json", DEFAULT_FAMILIES).expect("bundled families are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MnarFill {
    Number(f64),
    Label(String),
    Text(String),
}

impl MnarFill {
    pub fn for_dtype(dtype: Dtype) -> Option<MnarFill> {
        match dtype {
            Dtype::Num | Dtype::Sum | Dtype::Amount => Some(MnarFill::Number(0.0)),
            Dtype::Lbl => Some(MnarFill::Label("None/NA".into())),
            Dtype::Txt => Some(MnarFill::Text("none".into())),
            Dtype::Enc => None,
        }
    }

    fn cell(&self) -> CellValue {
        match self {
            MnarFill::Number(v) => CellValue::Number(*v),
            MnarFill::Label(s) => CellValue::Label(s.clone()),
            MnarFill::Text(s) => CellValue::Text(s.clone()),
        }
    }

    fn fits(&self, dtype: Dtype) -> bool {
        matches!(
            (self, dtype),
            (MnarFill::Number(_), Dtype::Num | Dtype::Sum | Dtype::Amount)
                | (MnarFill::Label(_), Dtype::Lbl)
                | (MnarFill::Text(_), Dtype::Txt)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestEntryRepr {
    Name(String),
    Explicit { pattern: String, fill: MnarFill },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnarEntry {
    pub pattern: String,
    /// `None` means the fill follows the matched column's dtype.
    pub fill: Option<MnarFill>,
}

impl MnarEntry {
    /// Entries for sum/amount columns describe constructor output; they are
    /// never matched during cleaning.
    pub fn is_generated(&self) -> bool {
        ColumnName::parse(&self.pattern)
            .map(|n| matches!(n.dtype, Dtype::Sum | Dtype::Amount))
            .unwrap_or(false)
    }
}

/// Columns whose absence means zero / none. Duplicate patterns collapse to
/// their first occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct MnarManifest {
    pub entries: Vec<MnarEntry>,
}

#[derive(Deserialize)]
struct ManifestFile {
    columns: Vec<ManifestEntryRepr>,
}

impl MnarManifest {
    pub fn from_json(name: &str, text: &str) -> Result<MnarManifest, CleanError> {
        let file: ManifestFile = load_json(name, text)?;
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for repr in file.columns {
            let entry = match repr {
                ManifestEntryRepr::Name(pattern) => MnarEntry {
                    pattern,
                    fill: None,
                },
                ManifestEntryRepr::Explicit { pattern, fill } => MnarEntry {
                    pattern,
                    fill: Some(fill),
                },
            };
            if seen.insert(entry.pattern.clone()) {
                entries.push(entry);
            }
        }
        Ok(MnarManifest { entries })
    }

    pub fn from_path(path: &Path) -> Result<MnarManifest, CleanError> {
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| config_err(&name, e))?;
        MnarManifest::from_json(&name, &text)
    }

    pub fn from_names<I, S>(names: I) -> MnarManifest
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MnarManifest {
            entries: names
                .into_iter()
                .map(|n| MnarEntry {
                    pattern: n.into(),
                    fill: None,
                })
                .collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.pattern == name)
    }
}

impl Default for MnarManifest {
    fn default() -> Self {
        MnarManifest::from_json("mnar_manifest.json", DEFAULT_MANIFEST)
            .expect("bundled manifest is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanerConfig {
    pub droplist: Droplist,
    pub concat: ConcatConfig,
    pub manifest: MnarManifest,
    pub sparse_threshold: f64,
}

impl Default for CleanerConfig {
    fn default() -> Self {
        CleanerConfig {
            droplist: Droplist::default(),
            concat: ConcatConfig::default(),
            manifest: MnarManifest::default(),
            sparse_threshold: DEFAULT_SPARSE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub code: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatSummary {
    pub new_name: String,
    pub source_count: usize,
    pub source_filled: usize,
    pub result_filled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanStep {
    DropRows,
    Concatenate,
    FillMnar,
    DropSparse,
}

impl CleanStep {
    pub const ORDER: [CleanStep; 4] = [
        CleanStep::DropRows,
        CleanStep::Concatenate,
        CleanStep::FillMnar,
        CleanStep::DropSparse,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: CleanStep,
    pub after: MissingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_dropped: Vec<DroppedRow>,
    pub filled_lost_to_row_drops: usize,
    pub columns_concatenated: Vec<ConcatSummary>,
    pub mnar_cells_filled: usize,
    pub mnar_stale_patterns: Vec<String>,
    pub columns_dropped: Vec<String>,
    pub filled_lost_to_column_drops: usize,
    pub steps: Vec<StepStats>,
    pub stats_before: MissingStats,
    pub stats_after: MissingStats,
    pub warnings: Vec<String>,
}

impl CleaningReport {
    fn new(stats_before: MissingStats) -> CleaningReport {
        CleaningReport {
            rows_dropped: Vec::new(),
            filled_lost_to_row_drops: 0,
            columns_concatenated: Vec::new(),
            mnar_cells_filled: 0,
            mnar_stale_patterns: Vec::new(),
            columns_dropped: Vec::new(),
            filled_lost_to_column_drops: 0,
            steps: Vec::new(),
            stats_before,
            stats_after: stats_before,
            warnings: Vec::new(),
        }
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Net change in filled cells caused by concatenation.
    pub fn concat_delta(&self) -> i64 {
        self.columns_concatenated
            .iter()
            .map(|c| c.result_filled as i64 - c.source_filled as i64)
            .sum()
    }

    /// Filled cells after cleaning as predicted from the per-step counts.
    pub fn expected_filled_after(&self) -> i64 {
        self.stats_before.filled_cells as i64
            - self.filled_lost_to_row_drops as i64
            - self.filled_lost_to_column_drops as i64
            + self.mnar_cells_filled as i64
            + self.concat_delta()
    }

    pub fn accounting_holds(&self) -> bool {
        self.expected_filled_after() == self.stats_after.filled_cells as i64
    }

    pub fn empty_reduction(&self) -> f64 {
        let before = self.stats_before.empty_cells as f64;
        if before == 0.0 {
            0.0
        } else {
            1.0 - self.stats_after.empty_cells as f64 / before
        }
    }

    pub fn filled_loss(&self) -> f64 {
        let before = self.stats_before.filled_cells as f64;
        if before == 0.0 {
            0.0
        } else {
            1.0 - self.stats_after.filled_cells as f64 / before
        }
    }
}

fn filled_in_row(t: &Table, row: usize) -> usize {
    t.columns()
        .iter()
        .filter(|c| !c.cells()[row].is_missing())
        .count()
}

/// Drops droplisted codes and rows without a numeric population figure.
pub fn drop_nonstate_rows(t: Table, droplist: &Droplist, report: &mut CleaningReport) -> Table {
    for code in droplist.codes.keys() {
        if t.row_index(code).is_none() {
            report.warn(format!("droplist code {code:?} not present in table"));
        }
    }
    let population = t
        .column(&droplist.population_column)
        .map(|c| c.cells().to_vec());
    if population.is_none() {
        report.warn(format!(
            "population column {:?} absent; population rule skipped",
            droplist.population_column
        ));
    }
    let mut drops: Vec<(usize, DroppedRow)> = Vec::new();
    for (i, code) in t.rows().iter().enumerate() {
        let reason = if let Some(name) = droplist.codes.get(code) {
            Some(format!("non-state entity ({name})"))
        } else if population
            .as_ref()
            .is_some_and(|p| p[i].as_number().is_none())
        {
            Some("no population figure".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            drops.push((
                i,
                DroppedRow {
                    code: code.clone(),
                    reason,
                },
            ));
        }
    }
    report.filled_lost_to_row_drops += drops
        .iter()
        .map(|(i, _)| filled_in_row(&t, *i))
        .sum::<usize>();
    let dropped: HashSet<usize> = drops.iter().map(|(i, _)| *i).collect();
    report
        .rows_dropped
        .extend(drops.into_iter().map(|(_, d)| d));
    t.retain_rows(|i, _| !dropped.contains(&i))
}

fn family_members<'a>(t: &'a Table, fam: &ConcatFamily) -> Vec<&'a Column> {
    let mut members: Vec<&Column> = t
        .columns()
        .iter()
        .filter(|c| {
            let n = c.name();
            if c.key() == fam.new_name {
                return true;
            }
            !n.is_meta()
                && n.body == fam.body
                && match (&n.subfield, &fam.subfield_prefix) {
                    (Some(sub), Some(prefix)) => sub.starts_with(prefix.as_str()),
                    (Some(_), None) => true,
                    (None, _) => false,
                }
        })
        .collect();
    members.sort_by(|a, b| member_title(a).cmp(member_title(b)));
    members
}

fn member_title(c: &Column) -> &str {
    c.name()
        .subfield
        .as_deref()
        .unwrap_or(c.name().body.as_str())
}

fn cell_text(cell: &CellValue) -> Option<String> {
    match cell {
        CellValue::Missing => None,
        CellValue::Number(v) => Some(format!("{v}")),
        CellValue::Text(s) | CellValue::Label(s) => Some(s.clone()),
        CellValue::Binary(b) => Some(if *b { "1" } else { "0" }.into()),
    }
}

/// Replaces one family with a single text column appended at the end.
/// A pre-existing column already carrying `new_name` joins the family and
/// contributes its value.
pub fn concat_group_columns(
    t: Table,
    fam: &ConcatFamily,
    delimiter: &str,
    report: &mut CleaningReport,
) -> Result<Table, CleanError> {
    let new_name = ColumnName::parse(&fam.new_name).map_err(TableError::from)?;
    let members = family_members(&t, fam);
    if members.is_empty() {
        report.warn(format!(
            "concatenation family for {:?} is empty",
            fam.new_name
        ));
        return Ok(t);
    }
    if members.len() == 1 && members[0].key() == fam.new_name {
        return Ok(t);
    }
    let mut cells = Vec::with_capacity(t.row_count());
    for r in 0..t.row_count() {
        let parts: Vec<String> = members
            .iter()
            .filter_map(|c| {
                let value = cell_text(&c.cells()[r])?;
                let title = member_title(c);
                Some(if c.key() == fam.new_name {
                    value
                } else {
                    match fam.style {
                        ConcatStyle::Titles => title.to_string(),
                        ConcatStyle::Values => format!("{title}: {value}"),
                    }
                })
            })
            .collect();
        cells.push(if parts.is_empty() {
            CellValue::Missing
        } else {
            CellValue::Text(parts.join(delimiter))
        });
    }
    let source_filled: usize = members.iter().map(|c| c.filled_count()).sum();
    let result_filled = cells.iter().filter(|c| !c.is_missing()).count();
    let keys: HashSet<String> = members.iter().map(|c| c.key().to_string()).collect();
    report.columns_concatenated.push(ConcatSummary {
        new_name: fam.new_name.clone(),
        source_count: keys.len(),
        source_filled,
        result_filled,
    });
    let t = t.without_columns(|c| keys.contains(c.key()));
    Ok(t.with_column(new_name, cells)?)
}

fn matching_columns<'a>(t: &'a Table, pattern: &str) -> Vec<&'a Column> {
    let exact: Vec<&Column> = t.columns().iter().filter(|c| c.key() == pattern).collect();
    if !exact.is_empty() {
        return exact;
    }
    let prefix = format!("{pattern} ");
    t.columns()
        .iter()
        .filter(|c| !c.name().is_meta() && c.key().starts_with(&prefix))
        .collect()
}

/// Fills Missing cells of manifest columns. Patterns matching nothing are
/// reported as stale; sum/amount patterns wait for the constructor.
pub fn fill_mnar(
    t: Table,
    manifest: &MnarManifest,
    report: &mut CleaningReport,
) -> Result<Table, CleanError> {
    let mut plan: Vec<(String, MnarFill)> = Vec::new();
    let mut planned = HashSet::new();
    for entry in &manifest.entries {
        if entry.is_generated() {
            continue;
        }
        let cols = matching_columns(&t, &entry.pattern);
        if cols.is_empty() {
            report.mnar_stale_patterns.push(entry.pattern.clone());
            continue;
        }
        for col in cols {
            let fill = match &entry.fill {
                Some(f) if f.fits(col.dtype()) => f.clone(),
                Some(f) => {
                    return Err(CleanError::TypeMismatch {
                        column: col.key().to_string(),
                        fill: f.clone(),
                    })
                }
                None => {
                    MnarFill::for_dtype(col.dtype()).ok_or_else(|| CleanError::TypeMismatch {
                        column: col.key().to_string(),
                        fill: MnarFill::Number(0.0),
                    })?
                }
            };
            if planned.insert(col.key().to_string()) {
                plan.push((col.key().to_string(), fill));
            }
        }
    }
    let mut t = t;
    for (key, fill) in plan {
        let col = t.column(&key).expect("planned column exists");
        let mut filled = 0;
        let cells: Vec<CellValue> = col
            .cells()
            .iter()
            .map(|c| {
                if c.is_missing() {
                    filled += 1;
                    fill.cell()
                } else {
                    c.clone()
                }
            })
            .collect();
        if filled > 0 {
            report.mnar_cells_filled += filled;
            t = t.replace_cells(&key, cells)?;
        }
    }
    Ok(t)
}

/// Removes non-metadata columns whose Missing fraction exceeds `threshold`.
pub fn drop_sparse_columns(
    t: Table,
    threshold: f64,
    report: &mut CleaningReport,
) -> Result<Table, CleanError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CleanError::InvalidThreshold(threshold));
    }
    let rows = t.row_count();
    if rows == 0 {
        return Ok(t);
    }
    let mut lost = 0;
    let mut names = Vec::new();
    let t = t.without_columns(|c| {
        let sparse = !c.name().is_meta() && c.missing_count() as f64 / rows as f64 > threshold;
        if sparse {
            lost += c.filled_count();
            names.push(c.key().to_string());
        }
        sparse
    });
    report.filled_lost_to_column_drops += lost;
    report.columns_dropped.extend(names);
    Ok(t)
}

/// Runs the given steps in the given order. [`clean`] uses
/// [`CleanStep::ORDER`]; other orders exist for comparison.
pub fn clean_steps(
    t: Table,
    cfg: &CleanerConfig,
    steps: &[CleanStep],
) -> Result<(Table, CleaningReport), CleanError> {
    if !(cfg.sparse_threshold > 0.0 && cfg.sparse_threshold <= 1.0) {
        return Err(CleanError::InvalidThreshold(cfg.sparse_threshold));
    }
    let mut report = CleaningReport::new(t.missing_stats());
    let mut t = t;
    for &step in steps {
        t = match step {
            CleanStep::DropRows => drop_nonstate_rows(t, &cfg.droplist, &mut report),
            CleanStep::Concatenate => {
                for fam in &cfg.concat.families {
                    t = concat_group_columns(t, fam, &cfg.concat.delimiter, &mut report)?;
                }
                t
            }
            CleanStep::FillMnar => fill_mnar(t, &cfg.manifest, &mut report)?,
            CleanStep::DropSparse => drop_sparse_columns(t, cfg.sparse_threshold, &mut report)?,
        };
        report.steps.push(StepStats {
            step,
            after: t.missing_stats(),
        });
    }
    report.stats_after = t.missing_stats();
    Ok((t.with_version(Version::V2), report))
}

pub fn clean(t: Table, cfg: &CleanerConfig) -> Result<(Table, CleaningReport), CleanError> {
    clean_steps(t, cfg, &CleanStep::ORDER)
}
