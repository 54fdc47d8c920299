//! Feature construction (v2 -> v3): label, amount and sum columns derived
//! from selected text columns. Sources are kept; generated columns are
//! appended in rule order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::parser::{number_tokens, scrub_number, strip_note};
use crate::table::{CellValue, Column, ColumnName, Dtype, Table, TableError, Version};

const DEFAULT_RULES: &str = include_str!("../config/transform_rules.json");

pub const NONE_LABEL: &str = "None/NA";

static PARENS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^()]*\)").unwrap());
static DIGIT_COMMA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d),(\d{3})").unwrap());
static AGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{1,2})(?:\s*-\s*\d{1,2})?\s+years?\s+of\s+age").unwrap());
static PIPE_CLAUSE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+(?:\.\d+)?)\s*(km|m)\b\s*(.*?)\s*$").unwrap());
static INNER_PARENS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("rules {name}: {message}")]
    Config { name: String, message: String },
    #[error("rule for {source_column:?}: {message}")]
    InvalidRule {
        source_column: String,
        message: String,
    },
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleGroup {
    Label,
    Amount,
    Sum,
    Special,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialId {
    Climate,
    Pipelines,
    ServiceAge,
    Branches,
    Dependency,
    GovernmentType,
    LegalSystem,
    Suffrage,
    ExecutiveHead,
    PortsTeus,
    Unimproved,
}

/// Keywords that all map to one output label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordEntry(pub Vec<String>, pub String);

fn default_delimiters() -> Vec<String> {
    vec![";".into(), ",".into()]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRule {
    pub source: String,
    pub group: RuleGroup,
    #[serde(default)]
    pub special: Option<SpecialId>,
    #[serde(default)]
    pub keywords: Vec<KeywordEntry>,
    #[serde(default = "default_delimiters")]
    pub item_delimiters: Vec<String>,
    /// Overrides the generated name of the rule's main output.
    #[serde(default)]
    pub output: Option<String>,
    /// Missing source cells count as "nothing" (0 / "None/NA").
    #[serde(default = "default_true")]
    pub mnar: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub version: String,
    pub climate_split_order: Vec<String>,
    /// Ordered (keyword, climate class); the first keyword found wins.
    pub koppen: Vec<(String, String)>,
    /// (canonical type, raw spellings).
    pub pipeline_types: Vec<(String, Vec<String>)>,
    pub rules: Vec<TransformRule>,
}

impl RuleSet {
    pub fn from_json(name: &str, text: &str) -> Result<RuleSet, ConstructError> {
        let set: RuleSet = serde_json::from_str(text).map_err(|e| ConstructError::Config {
            name: name.to_string(),
            message: e.to_string(),
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn from_path(path: &Path) -> Result<RuleSet, ConstructError> {
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| ConstructError::Config {
            name: name.clone(),
            message: e.to_string(),
        })?;
        RuleSet::from_json(&name, &text)
    }

    pub fn empty() -> RuleSet {
        RuleSet {
            rules: Vec::new(),
            ..RuleSet::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConstructError> {
        for rule in &self.rules {
            let bad = |message: &str| ConstructError::InvalidRule {
                source_column: rule.source.clone(),
                message: message.to_string(),
            };
            let name = ColumnName::parse(&rule.source).map_err(|e| bad(&e.to_string()))?;
            if name.dtype != Dtype::Txt {
                return Err(bad("source must be a txt column"));
            }
            match (rule.group, rule.special) {
                (RuleGroup::Special, None) => return Err(bad("special rule without special id")),
                (RuleGroup::Label, _) if rule.keywords.is_empty() => {
                    return Err(bad("label rule without keywords"))
                }
                (RuleGroup::Special, Some(id))
                    if matches!(
                        id,
                        SpecialId::GovernmentType
                            | SpecialId::LegalSystem
                            | SpecialId::ExecutiveHead
                    ) && rule.keywords.is_empty() =>
                {
                    return Err(bad("special rule needs keywords"))
                }
                _ => {}
            }
            if let Some(out) = &rule.output {
                ColumnName::parse(out).map_err(|e| bad(&e.to_string()))?;
            }
        }
        Ok(())
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::from_json("transform_rules.json", DEFAULT_RULES).expect("bundled rules are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructAuditEntry {
    pub rule: String,
    pub entity: Option<String>,
    pub reason: String,
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructReport {
    pub generated: Vec<String>,
    pub skipped_rules: Vec<String>,
    pub audit: Vec<ConstructAuditEntry>,
}

/// Source text with MNAR placeholders folded into "nothing there".
fn present(text: Option<&str>) -> Option<String> {
    let t = text?.trim().to_lowercase();
    (!t.is_empty() && t != "none").then_some(t)
}

/// Byte offset of the first whole-word occurrence of `kw` in `text`.
fn find_word(text: &str, kw: &str) -> Option<usize> {
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    text.match_indices(kw).map(|(i, _)| i).find(|&i| {
        boundary(text[..i].chars().next_back()) && boundary(text[i + kw.len()..].chars().next())
    })
}

/// Keyword map lookup: longest keyword first, config order among equals.
pub fn match_keywords(text: &str, keywords: &[KeywordEntry]) -> Option<String> {
    let mut flat: Vec<(&str, &str, usize)> = Vec::new();
    for (order, KeywordEntry(kws, label)) in keywords.iter().enumerate() {
        for kw in kws {
            flat.push((kw.as_str(), label.as_str(), order));
        }
    }
    flat.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.2.cmp(&b.2)));
    flat.into_iter()
        .find(|(kw, _, _)| find_word(text, kw).is_some())
        .map(|(_, label, _)| label.to_string())
}

/// Label from a keyword map. `Err` carries "None/NA" when text was present
/// but nothing matched.
pub fn to_label(text: Option<&str>, keywords: &[KeywordEntry]) -> Result<String, String> {
    match present(text) {
        None => Ok(NONE_LABEL.to_string()),
        Some(t) => match_keywords(&t, keywords).ok_or_else(|| NONE_LABEL.to_string()),
    }
}

fn strip_parentheticals(text: &str) -> String {
    let mut s = text.to_string();
    loop {
        let next = PARENS.replace_all(&s, " ").into_owned();
        if next == s {
            return s;
        }
        s = next;
    }
}

fn remove_digit_commas(text: &str) -> String {
    let mut s = text.to_string();
    loop {
        let next = DIGIT_COMMA.replace_all(&s, "$1$2").into_owned();
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Number of delimiter-separated items, ignoring parentheticals and note
/// clauses. Missing, empty and "none" count as zero.
pub fn count_items(text: Option<&str>, delimiters: &[String]) -> f64 {
    let Some(t) = present(text) else { return 0.0 };
    let t = remove_digit_commas(&strip_parentheticals(strip_note(&t)));
    let mut pieces = vec![t];
    for d in delimiters {
        pieces = pieces
            .iter()
            .flat_map(|p| p.split(d.as_str()))
            .map(str::to_string)
            .collect();
    }
    pieces
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty() && *p != "none" && *p != "and")
        .count() as f64
}

/// Sum of every number in the text; a range "a-b" contributes its larger
/// end. Parentheticals and note clauses are ignored.
pub fn sum_items(text: Option<&str>) -> f64 {
    let Some(t) = present(text) else { return 0.0 };
    let t = strip_parentheticals(strip_note(&t));
    let tokens = number_tokens(&t);
    let bytes = t.as_bytes();
    let mut total = 0.0;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        let ranged = tokens
            .get(i + 1)
            .filter(|next| next.start == tok.end && bytes.get(tok.end) == Some(&b'-'));
        match ranged {
            Some(next) => {
                total += tok.value.max(next.value.abs());
                i += 2;
            }
            None => {
                total += tok.value;
                i += 1;
            }
        }
    }
    total
}

/// Climate class of the leading clause: split at the first delimiter kind
/// present (in priority order), keep the left part, then first keyword hit.
pub fn climate_label(text: Option<&str>, rules: &RuleSet) -> Option<String> {
    let t = present(text)?;
    let head = rules
        .climate_split_order
        .iter()
        .find(|d| t.contains(d.as_str()))
        .and_then(|d| t.split(d.as_str()).next())
        .unwrap_or(&t);
    rules
        .koppen
        .iter()
        .find(|(kw, _)| find_word(head, kw).is_some())
        .map(|(_, label)| label.clone())
}

/// Kilometres per canonical pipeline type (in config order) plus the raw
/// type strings that had no mapping and went to "oil/gas/water".
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineLengths {
    pub by_type: Vec<(String, f64)>,
    pub unknown: Vec<String>,
}

impl PipelineLengths {
    pub fn total(&self) -> f64 {
        self.by_type.iter().map(|(_, v)| v).sum()
    }

    pub fn get(&self, kind: &str) -> f64 {
        self.by_type
            .iter()
            .find(|(k, _)| k == kind)
            .map_or(0.0, |(_, v)| *v)
    }
}

const FALLBACK_PIPELINE: &str = "oil/gas/water";

pub fn pipeline_columns(text: Option<&str>, rules: &RuleSet) -> PipelineLengths {
    let mut by_type: Vec<(String, f64)> = rules
        .pipeline_types
        .iter()
        .map(|(k, _)| (k.clone(), 0.0))
        .collect();
    let mut unknown = Vec::new();
    if let Some(t) = present(text) {
        let t = remove_digit_commas(&strip_parentheticals(strip_note(&t)));
        for clause in t.split([',', ';']) {
            let Some(cap) = PIPE_CLAUSE.captures(clause) else {
                continue;
            };
            let mut length: f64 = cap[1].parse().unwrap_or(0.0);
            if &cap[2] == "m" {
                length /= 1000.0;
            }
            let raw = cap[3].trim().to_string();
            let kind = rules
                .pipeline_types
                .iter()
                .find(|(_, aliases)| aliases.contains(&raw))
                .map(|(k, _)| k.as_str());
            let kind = match kind {
                Some(k) => k,
                None => {
                    unknown.push(raw);
                    FALLBACK_PIPELINE
                }
            };
            if let Some(slot) = by_type.iter_mut().find(|(k, _)| k == kind) {
                slot.1 += length;
            }
        }
    }
    PipelineLengths { by_type, unknown }
}

fn min_age(text: &str) -> Option<u32> {
    AGE.captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .min()
}

/// (conscription, service age) labels. Conscription is "yes" for compulsory
/// service and "no" when explicitly absent or voluntary; an age under 15
/// makes the service-age label "none".
pub fn service_age_and_conscription(text: Option<&str>) -> (String, String) {
    let Some(t) = present(text) else {
        return (NONE_LABEL.into(), NONE_LABEL.into());
    };
    let conscription =
        if find_word(&t, "no conscription").is_some() || find_word(&t, "no compulsory").is_some() {
            "no"
        } else if ["compulsory", "conscription", "conscript", "conscripted"]
            .iter()
            .any(|k| find_word(&t, k).is_some())
        {
            "yes"
        } else if find_word(&t, "voluntary").is_some() {
            "no"
        } else {
            NONE_LABEL
        };
    let age = match min_age(&t) {
        Some(a) if a < 15 => "none".to_string(),
        Some(a) => a.to_string(),
        None => NONE_LABEL.to_string(),
    };
    (conscription.to_string(), age)
}

fn leading_clause(text: &str) -> &str {
    text.split(';').next().unwrap_or(text)
}

/// Minimum voting age of the leading clause.
pub fn suffrage_label(text: Option<&str>) -> Option<String> {
    let t = present(text)?;
    min_age(leading_clause(&t)).map(|a| a.to_string())
}

/// Earliest-occurring office keyword in the leading clause.
pub fn executive_head_label(text: Option<&str>, keywords: &[KeywordEntry]) -> Option<String> {
    let t = present(text)?;
    let head = leading_clause(&t);
    keywords
        .iter()
        .flat_map(|KeywordEntry(kws, label)| kws.iter().map(move |k| (k, label)))
        .filter_map(|(k, label)| {
            find_word(head, k).map(|pos| (pos, std::cmp::Reverse(k.len()), label))
        })
        .min_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)))
        .map(|(_, _, label)| label.clone())
}

/// "self-sovereign" when no dependency status is given, else "dependent".
pub fn dependency_label(text: Option<&str>) -> String {
    match present(text) {
        None => "self-sovereign".into(),
        Some(_) => "dependent".into(),
    }
}

/// Government form; a mention of totalitarian rule or dictatorship anywhere
/// in the text, comments included, takes precedence.
pub fn government_type_label(text: Option<&str>, keywords: &[KeywordEntry]) -> Option<String> {
    let t = present(text)?;
    for over in ["totalitarian", "dictatorship"] {
        if find_word(&t, over).is_some() {
            return Some(over.to_string());
        }
    }
    match_keywords(&t, keywords)
}

/// (port count, summed TEUs) for "name (teus), name (teus)" lists.
pub fn ports_teus(text: Option<&str>) -> (f64, f64) {
    let Some(t) = present(text) else {
        return (0.0, 0.0);
    };
    let count = count_items(Some(&t), &default_delimiters());
    let teus = INNER_PARENS
        .captures_iter(&t)
        .filter_map(|c| scrub_number(&c[1]).as_number())
        .sum();
    (count, teus)
}

/// The "total" figure of an unimproved-access breakdown, else its last number.
pub fn unimproved_value(text: Option<&str>) -> Option<f64> {
    let t = present(text)?;
    if let Some(pos) = t.find("total:") {
        if let Some(v) = scrub_number(&t[pos + "total:".len()..]).as_number() {
            return Some(v);
        }
    }
    let t = strip_parentheticals(strip_note(&t));
    number_tokens(&t).last().map(|tok| tok.value)
}

type Generated = Vec<(ColumnName, Vec<CellValue>)>;

struct RuleOutput {
    columns: Generated,
    audit: Vec<ConstructAuditEntry>,
}

fn output_name(rule: &TransformRule, src: &ColumnName, dtype: Dtype) -> ColumnName {
    match &rule.output {
        Some(o) => ColumnName::parse(o).expect("validated"),
        None => src.clone().with_dtype(dtype),
    }
}

fn retag(dtype: Dtype, body: &str, subfield: Option<&str>) -> ColumnName {
    ColumnName::new(dtype, body, subfield.map(str::to_string))
}

fn apply_rule(rule: &TransformRule, rules: &RuleSet, col: &Column, rows: &[String]) -> RuleOutput {
    let src = col.name();
    let texts: Vec<Option<&str>> = col.cells().iter().map(CellValue::as_str).collect();
    let mut audit = Vec::new();
    let mut note = |i: usize, reason: &str| {
        audit.push(ConstructAuditEntry {
            rule: rule.source.clone(),
            entity: Some(rows[i].clone()),
            reason: reason.to_string(),
            raw: texts[i].map(str::to_string),
        })
    };
    let number = |v: f64, i: usize| {
        if texts[i].is_none() && !rule.mnar {
            CellValue::Missing
        } else {
            CellValue::Number(v)
        }
    };
    let label = |s: String| CellValue::Label(s);
    let mut columns: Generated = Vec::new();

    let special = if rule.group == RuleGroup::Special {
        rule.special
    } else {
        None
    };
    match (rule.group, special) {
        (RuleGroup::Label, _) | (RuleGroup::Special, Some(SpecialId::LegalSystem)) => {
            let cells = (0..rows.len())
                .map(|i| {
                    label(to_label(texts[i], &rule.keywords).unwrap_or_else(|l| {
                        note(i, "no-keyword-match");
                        l
                    }))
                })
                .collect();
            columns.push((output_name(rule, src, Dtype::Lbl), cells));
        }
        (RuleGroup::Amount, _) => {
            let cells = (0..rows.len())
                .map(|i| number(count_items(texts[i], &rule.item_delimiters), i))
                .collect();
            columns.push((output_name(rule, src, Dtype::Amount), cells));
        }
        (RuleGroup::Sum, _) => {
            let cells = (0..rows.len())
                .map(|i| number(sum_items(texts[i]), i))
                .collect();
            columns.push((output_name(rule, src, Dtype::Sum), cells));
        }
        (RuleGroup::Special, Some(SpecialId::Climate)) => {
            let cells = (0..rows.len())
                .map(|i| {
                    label(climate_label(texts[i], rules).unwrap_or_else(|| {
                        if present(texts[i]).is_some() {
                            note(i, "no-climate-keyword");
                        }
                        NONE_LABEL.into()
                    }))
                })
                .collect();
            columns.push((output_name(rule, src, Dtype::Lbl), cells));
        }
        (RuleGroup::Special, Some(SpecialId::Dependency)) => {
            let cells = texts.iter().map(|t| label(dependency_label(*t))).collect();
            columns.push((output_name(rule, src, Dtype::Lbl), cells));
        }
        (RuleGroup::Special, Some(SpecialId::GovernmentType)) => {
            let cells = (0..rows.len())
                .map(|i| {
                    label(
                        government_type_label(texts[i], &rule.keywords).unwrap_or_else(|| {
                            if present(texts[i]).is_some() {
                                note(i, "no-keyword-match");
                            }
                            NONE_LABEL.into()
                        }),
                    )
                })
                .collect();
            columns.push((output_name(rule, src, Dtype::Lbl), cells));
        }
        (RuleGroup::Special, Some(SpecialId::ExecutiveHead)) => {
            let cells = (0..rows.len())
                .map(|i| {
                    label(
                        executive_head_label(texts[i], &rule.keywords).unwrap_or_else(|| {
                            if present(texts[i]).is_some() {
                                note(i, "no-keyword-match");
                            }
                            NONE_LABEL.into()
                        }),
                    )
                })
                .collect();
            columns.push((output_name(rule, src, Dtype::Lbl), cells));
        }
        (RuleGroup::Special, Some(SpecialId::Suffrage)) => {
            let cells = texts
                .iter()
                .map(|t| label(suffrage_label(*t).unwrap_or_else(|| NONE_LABEL.into())))
                .collect();
            columns.push((output_name(rule, src, Dtype::Lbl), cells));
        }
        (RuleGroup::Special, Some(SpecialId::ServiceAge)) => {
            let pairs: Vec<(String, String)> = texts
                .iter()
                .map(|t| service_age_and_conscription(*t))
                .collect();
            let category = src
                .body
                .strip_suffix("-military-service-age-and-obligation")
                .unwrap_or("military-and-security");
            columns.push((
                retag(Dtype::Lbl, &format!("{category}-conscription"), None),
                pairs.iter().map(|p| label(p.0.clone())).collect(),
            ));
            columns.push((
                retag(
                    Dtype::Lbl,
                    &format!("{category}-military-service-age"),
                    None,
                ),
                pairs.iter().map(|p| label(p.1.clone())).collect(),
            ));
        }
        (RuleGroup::Special, Some(SpecialId::Branches)) => {
            let cells = (0..rows.len())
                .map(|i| {
                    let v = match present(texts[i]) {
                        Some(t) if t.contains("no regular") => 0.0,
                        _ => count_items(texts[i], &rule.item_delimiters),
                    };
                    number(v, i)
                })
                .collect();
            columns.push((output_name(rule, src, Dtype::Amount), cells));
        }
        (RuleGroup::Special, Some(SpecialId::Pipelines)) => {
            let parsed: Vec<PipelineLengths> =
                texts.iter().map(|t| pipeline_columns(*t, rules)).collect();
            for (i, p) in parsed.iter().enumerate() {
                for raw in &p.unknown {
                    audit.push(ConstructAuditEntry {
                        rule: rule.source.clone(),
                        entity: Some(rows[i].clone()),
                        reason: "unknown-pipeline-type".into(),
                        raw: Some(raw.clone()),
                    });
                }
            }
            columns.push((
                output_name(rule, src, Dtype::Sum),
                parsed
                    .iter()
                    .enumerate()
                    .map(|(i, p)| number(p.total(), i))
                    .collect(),
            ));
            for (kind, _) in &rules.pipeline_types {
                columns.push((
                    retag(Dtype::Sum, &src.body, Some(kind)),
                    parsed
                        .iter()
                        .enumerate()
                        .map(|(i, p)| number(p.get(kind), i))
                        .collect(),
                ));
            }
        }
        (RuleGroup::Special, Some(SpecialId::PortsTeus)) => {
            let pairs: Vec<(f64, f64)> = texts.iter().map(|t| ports_teus(*t)).collect();
            columns.push((
                output_name(rule, src, Dtype::Amount),
                pairs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| number(p.0, i))
                    .collect(),
            ));
            columns.push((
                src.clone().with_dtype(Dtype::Sum),
                pairs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| number(p.1, i))
                    .collect(),
            ));
        }
        (RuleGroup::Special, Some(SpecialId::Unimproved)) => {
            let cells = texts
                .iter()
                .map(|t| match unimproved_value(*t) {
                    Some(v) => CellValue::Number(v),
                    None if rule.mnar => CellValue::Number(0.0),
                    None => CellValue::Missing,
                })
                .collect();
            columns.push((output_name(rule, src, Dtype::Sum), cells));
        }
        (RuleGroup::Special, None) => unreachable!("validated"),
    }
    RuleOutput { columns, audit }
}

/// Appends every rule's generated columns to `t`. Rules whose source column
/// is absent, or whose output would collide with an existing column, are
/// skipped and audited.
pub fn construct(
    t: Table,
    rules: &RuleSet,
    mode: ExecMode,
) -> Result<(Table, ConstructReport), ConstructError> {
    rules.validate()?;
    let mut report = ConstructReport {
        generated: Vec::new(),
        skipped_rules: Vec::new(),
        audit: Vec::new(),
    };
    let applicable: Vec<(&TransformRule, &Column)> = rules
        .rules
        .iter()
        .filter_map(|r| match t.column(&r.source) {
            Some(c) => Some((r, c)),
            None => {
                report.skipped_rules.push(r.source.clone());
                report.audit.push(ConstructAuditEntry {
                    rule: r.source.clone(),
                    entity: None,
                    reason: "source-column-absent".into(),
                    raw: None,
                });
                None
            }
        })
        .collect();
    let outputs = mode.map(&applicable, |(rule, col)| {
        apply_rule(rule, rules, col, t.rows())
    });

    let mut taken: HashSet<String> = t.columns().iter().map(|c| c.key().to_string()).collect();
    let mut additions: Generated = Vec::new();
    for ((rule, _), out) in applicable.iter().zip(outputs) {
        let keys: Vec<String> = out.columns.iter().map(|(n, _)| n.to_string()).collect();
        let distinct: HashSet<&String> = keys.iter().collect();
        if distinct.len() != keys.len() || keys.iter().any(|k| taken.contains(k)) {
            report.skipped_rules.push(rule.source.clone());
            report.audit.push(ConstructAuditEntry {
                rule: rule.source.clone(),
                entity: None,
                reason: "output-name-collision".into(),
                raw: Some(keys.join(" | ")),
            });
            continue;
        }
        taken.extend(keys.iter().cloned());
        report.generated.extend(keys);
        report.audit.extend(out.audit);
        additions.extend(out.columns);
    }
    let t = t.with_columns(additions)?.with_version(Version::V3);
    Ok((t, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(pairs: &[(&[&str], &str)]) -> Vec<KeywordEntry> {
        pairs
            .iter()
            .map(|(k, l)| KeywordEntry(k.iter().map(|s| s.to_string()).collect(), l.to_string()))
            .collect()
    }

    fn rule_for(source: &str) -> TransformRule {
        RuleSet::default()
            .rules
            .into_iter()
            .find(|r| r.source == source)
            .unwrap()
    }

    #[test]
    fn labels_from_keywords() {
        let gov = rule_for("txt government-government-type").keywords;
        assert_eq!(
            government_type_label(Some("unresolved; in dispute"), &gov).unwrap(),
            "in transition"
        );
        assert_eq!(
            government_type_label(Some("semi-presidential republic"), &gov).unwrap(),
            "semi-presidential republic"
        );
        assert_eq!(
            government_type_label(Some("communist state; note - a totalitarian regime"), &gov)
                .unwrap(),
            "totalitarian"
        );
        assert_eq!(to_label(None, &gov).unwrap(), NONE_LABEL);
        assert_eq!(to_label(Some("xyz"), &gov), Err(NONE_LABEL.to_string()));
        assert_eq!(
            dependency_label(Some("overseas territory of the uk")),
            "dependent"
        );
        assert_eq!(dependency_label(Some("none")), "self-sovereign");
        let legal = rule_for("txt government-legal-system").keywords;
        assert_eq!(
            to_label(Some("local tradition"), &legal).unwrap(),
            "customary"
        );
        assert_eq!(to_label(Some("islamic law"), &legal).unwrap(), "religious");
    }

    #[test]
    fn longest_keyword_wins() {
        let k = kw(&[(&["high"], "high"), (&["very high"], "very high")]);
        assert_eq!(match_keywords("very high", &k).unwrap(), "very high");
        assert_eq!(match_keywords("highway", &k), None);
    }

    #[test]
    fn item_counts() {
        let d = default_delimiters();
        assert_eq!(count_items(Some("army; navy; air force"), &d), 3.0);
        assert_eq!(count_items(Some(""), &d), 0.0);
        assert_eq!(count_items(None, &d), 0.0);
        assert_eq!(count_items(Some("none"), &d), 0.0);
        assert_eq!(
            count_items(
                Some("border countries (3): belize 276 km, guatemala 958 km, us 3,155 km"),
                &d
            ),
            3.0
        );
        let branches = rule_for("txt military-and-security-military-branches");
        let col = Table::new(Version::V2, vec!["aa".into()])
            .unwrap()
            .with_column(
                ColumnName::parse(&branches.source).unwrap(),
                vec![CellValue::Text(
                    "no regular military forces; defense is by x".into(),
                )],
            )
            .unwrap();
        let out = apply_rule(
            &branches,
            &RuleSet::default(),
            &col.columns()[0],
            col.rows(),
        );
        assert_eq!(out.columns[0].1, [CellValue::Number(0.0)]);
    }

    #[test]
    fn item_sums() {
        assert_eq!(sum_items(Some("refugees 2.5-3.0 (2017)")), 3.0);
        assert_eq!(sum_items(Some("1,200 km gas; 300 km oil")), 1500.0);
        assert_eq!(sum_items(Some("no river ports")), 0.0);
        assert_eq!(
            sum_items(Some("15,000 (somalia); 9,000 (eritrea) (2018)")),
            24000.0
        );
        assert_eq!(
            sum_items(Some("bulk carrier 2, container ship 1, other 12")),
            15.0
        );
    }

    #[test]
    fn climate_examples() {
        let rules = RuleSet::default();
        let uk =
            "temperate; moderated by prevailing southwest winds over the north atlantic current";
        assert_eq!(climate_label(Some(uk), &rules).unwrap(), "temperate");
        assert_eq!(
            climate_label(Some("tropical marine, little seasonal variation"), &rules).unwrap(),
            "tropical"
        );
        assert_eq!(
            climate_label(Some("mostly semiarid; subtropical along coast"), &rules).unwrap(),
            "semiarid"
        );
        assert_eq!(
            climate_label(Some("desert: hot, dry"), &rules).unwrap(),
            "arid"
        );
        assert_eq!(climate_label(None, &rules), None);
        // Only the leading clause is searched.
        assert_eq!(
            climate_label(Some("varies; tropical in south"), &rules),
            None
        );
    }

    #[test]
    fn pipelines_grouped() {
        let rules = RuleSet::default();
        let p = pipeline_columns(Some("120 km condensate/gas"), &rules);
        assert_eq!(p.get("condensate"), 120.0);
        assert_eq!(p.total(), 120.0);
        let p = pipeline_columns(Some("50 km crude oil; 70 km extra heavy crude"), &rules);
        assert_eq!(p.get("oil"), 120.0);
        let p = pipeline_columns(None, &rules);
        assert!(p.by_type.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(p.by_type.len(), 7);
        let p = pipeline_columns(Some("3 km slurry, 500 m water (2013)"), &rules);
        assert_eq!(p.unknown, ["slurry"]);
        assert_eq!(p.get("oil/gas/water"), 3.5);
    }

    #[test]
    fn conscription_and_age() {
        let (c, _) = service_age_and_conscription(Some(
            "18-70 years of age; universal and compulsory; 16-17 years of age - optional",
        ));
        assert_eq!(c, "yes");
        let (c, a) = service_age_and_conscription(Some(
            "18 years of age for voluntary service; no conscription",
        ));
        assert_eq!((c.as_str(), a.as_str()), ("no", "18"));
        let (_, a) = service_age_and_conscription(Some("14 years of age for voluntary service"));
        assert_eq!(a, "none");
        let (c, a) = service_age_and_conscription(None);
        assert_eq!((c.as_str(), a.as_str()), (NONE_LABEL, NONE_LABEL));
    }

    #[test]
    fn other_specials() {
        let exec = rule_for("txt government-executive-branch head of government").keywords;
        assert_eq!(
            executive_head_label(Some("president x (since 2013); the president is both chief of state and head of government"), &exec).unwrap(),
            "president"
        );
        assert_eq!(
            executive_head_label(Some("head of government x"), &exec).unwrap(),
            "prime minister"
        );
        assert_eq!(
            suffrage_label(Some("18 years of age; universal")).unwrap(),
            "18"
        );
        assert_eq!(
            ports_teus(Some("manzanillo (2,830,370), veracruz (965,880)")),
            (2.0, 3_796_250.0)
        );
        assert_eq!(
            unimproved_value(Some("urban: 0.5% of population rural: 1.2% of population total: 0.7% of population (2015 est.)")),
            Some(0.7)
        );
    }

    fn v2() -> Table {
        Table::new(Version::V2, vec!["aa".into(), "bb".into()])
            .unwrap()
            .with_column(
                ColumnName::parse("txt transportation-pipelines").unwrap(),
                vec![CellValue::Text("10 km gas".into()), CellValue::Missing],
            )
            .unwrap()
            .with_column(
                ColumnName::parse("txt military-and-security-military-service-age-and-obligation")
                    .unwrap(),
                vec![
                    CellValue::Text("18 years of age; no conscription".into()),
                    CellValue::Missing,
                ],
            )
            .unwrap()
    }

    #[test]
    fn construct_appends_complete_columns() {
        let before = v2();
        let (v3, report) =
            construct(before.clone(), &RuleSet::default(), ExecMode::Sequential).unwrap();
        assert_eq!(v3.version(), Version::V3);
        for c in before.columns() {
            assert_eq!(v3.column(c.key()).unwrap().cells(), c.cells());
        }
        assert!(v3.contains("sum transportation-pipelines"));
        assert!(v3.contains("sum transportation-pipelines gas"));
        assert!(v3.contains("lbl military-and-security-conscription"));
        assert!(v3.contains("lbl military-and-security-military-service-age"));
        assert_eq!(report.generated.len(), 8 + 2);
        for key in &report.generated {
            assert!(v3.column(key).unwrap().is_complete(), "{key}");
        }
        assert!(report
            .audit
            .iter()
            .any(|a| a.reason == "source-column-absent"));
    }

    #[test]
    fn empty_rules_are_identity() {
        let (v3, report) = construct(v2(), &RuleSet::empty(), ExecMode::Sequential).unwrap();
        assert_eq!(v3.columns(), v2().columns());
        assert!(report.generated.is_empty());
    }

    #[test]
    fn invalid_rules_rejected() {
        let bad = r#"{"version":"x","climate_split_order":[],"koppen":[],"pipeline_types":[],
            "rules":[{"source":"txt a","group":"special"}]}"#;
        assert!(matches!(
            RuleSet::from_json("t", bad),
            Err(ConstructError::InvalidRule { .. })
        ));
        let bad = r#"{"version":"x","climate_split_order":[],"koppen":[],"pipeline_types":[],
            "rules":[{"source":"num a","group":"amount"}]}"#;
        assert!(RuleSet::from_json("t", bad).is_err());
    }
}
