//! Stage orchestration: parse -> clean -> construct -> encode -> impute.
//!
//! Every stage persists its table as `vN.csv` plus a schema sidecar in the
//! output directory, so a run can start at any stage whose input snapshot is
//! already on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::cleaner::{self, CleanerConfig, CleaningReport, ConcatConfig, Droplist, MnarManifest};
use crate::constructor::{self, ConstructReport, RuleSet};
use crate::encoder::{self, EncodingPlan};
use crate::exec::ExecMode;
use crate::imputer::{
    self, BenchmarkGrid, CorrelationMethod, ForestParams, ForestSelection, ImputationReport,
    ImputerConfig,
};
use crate::parser::{self, IngestWarning};
use crate::table::{read_snapshot_as, write_snapshot, MissingStats, Table, Version};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage {stage} failed: {message}")]
    StageFailure {
        stage: PipelineStage,
        message: String,
    },
}

impl PipelineError {
    fn stage(stage: PipelineStage) -> impl FnOnce(String) -> PipelineError {
        move |message| PipelineError::StageFailure { stage, message }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineStage {
    Parse,
    Clean,
    Construct,
    Encode,
    Impute,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 5] = [
        PipelineStage::Parse,
        PipelineStage::Clean,
        PipelineStage::Construct,
        PipelineStage::Encode,
        PipelineStage::Impute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Parse => "parse",
            PipelineStage::Clean => "clean",
            PipelineStage::Construct => "construct",
            PipelineStage::Encode => "encode",
            PipelineStage::Impute => "impute",
        }
    }

    pub fn output(self) -> Version {
        Version::ALL[self as usize]
    }

    /// The snapshot this stage reads, if it reads one.
    pub fn input(self) -> Option<Version> {
        (self as usize).checked_sub(1).map(|i| Version::ALL[i])
    }
}

impl std::fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PipelineStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PipelineStage::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Bundled defaults are used for any path left unset.
    pub droplist: Option<PathBuf>,
    pub mnar_manifest: Option<PathBuf>,
    pub concat_families: Option<PathBuf>,
    pub transform_rules: Option<PathBuf>,
    pub sparse_threshold: f64,
    pub ridge_threshold: f64,
    pub correlation: CorrelationMethod,
    pub runs_per_column: usize,
    pub cv_folds: usize,
    pub acceptance_mape: f64,
    pub min_train_rows: usize,
    pub test_fraction: f64,
    pub ols_intercept_grid: Vec<bool>,
    pub ridge_alpha_grid: Vec<f64>,
    pub forest: ForestParams,
    pub forest_selection: ForestSelection,
    pub imputer_stages: Vec<imputer::Stage>,
    pub seed: u64,
    pub stages: Vec<PipelineStage>,
    pub exec: ExecMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let imp = ImputerConfig::default();
        PipelineConfig {
            input_dir: None,
            output_dir: None,
            droplist: None,
            mnar_manifest: None,
            concat_families: None,
            transform_rules: None,
            sparse_threshold: CleanerConfig::default().sparse_threshold,
            ridge_threshold: imp.ridge_threshold,
            correlation: imp.correlation,
            runs_per_column: imp.runs,
            cv_folds: imp.cv_folds,
            acceptance_mape: imp.acceptance_mape,
            min_train_rows: imp.min_train_rows,
            test_fraction: imp.test_fraction,
            ols_intercept_grid: imp.ols_intercept_grid,
            ridge_alpha_grid: imp.ridge_alpha_grid,
            forest: imp.forest,
            forest_selection: imp.forest_selection,
            imputer_stages: imp.stages,
            seed: imp.seed,
            stages: PipelineStage::ALL.to_vec(),
            exec: ExecMode::Parallel,
        }
    }
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", path.display())))
    }

    pub fn imputer(&self) -> ImputerConfig {
        ImputerConfig {
            runs: self.runs_per_column,
            cv_folds: self.cv_folds,
            acceptance_mape: self.acceptance_mape,
            min_train_rows: self.min_train_rows,
            test_fraction: self.test_fraction,
            ridge_threshold: self.ridge_threshold,
            correlation: self.correlation,
            ols_intercept_grid: self.ols_intercept_grid.clone(),
            ridge_alpha_grid: self.ridge_alpha_grid.clone(),
            forest: ForestParams {
                seed: self.seed,
                ..self.forest.clone()
            },
            forest_selection: self.forest_selection,
            seed: self.seed,
            stages: self.imputer_stages.clone(),
        }
    }

    pub fn cleaner(&self) -> Result<CleanerConfig, PipelineError> {
        let invalid = |e: cleaner::CleanError| PipelineError::ConfigInvalid(e.to_string());
        Ok(CleanerConfig {
            droplist: self
                .droplist
                .as_deref()
                .map(Droplist::from_path)
                .transpose()
                .map_err(invalid)?
                .unwrap_or_default(),
            concat: self
                .concat_families
                .as_deref()
                .map(ConcatConfig::from_path)
                .transpose()
                .map_err(invalid)?
                .unwrap_or_default(),
            manifest: self
                .mnar_manifest
                .as_deref()
                .map(MnarManifest::from_path)
                .transpose()
                .map_err(invalid)?
                .unwrap_or_default(),
            sparse_threshold: self.sparse_threshold,
        })
    }

    pub fn rules(&self) -> Result<RuleSet, PipelineError> {
        let rules = match &self.transform_rules {
            Some(p) => {
                RuleSet::from_path(p).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?
            }
            None => RuleSet::default(),
        };
        rules
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        Ok(rules)
    }

    /// The requested stages in pipeline order.
    fn ordered_stages(&self) -> Result<Vec<PipelineStage>, PipelineError> {
        let mut stages = self.stages.clone();
        stages.sort();
        stages.dedup();
        if stages.is_empty() {
            return Err(PipelineError::ConfigInvalid("no stages selected".into()));
        }
        if stages
            .windows(2)
            .any(|w| w[1] as usize != w[0] as usize + 1)
        {
            return Err(PipelineError::ConfigInvalid(
                "selected stages must be consecutive".into(),
            ));
        }
        Ok(stages)
    }

    fn output(&self) -> Result<&Path, PipelineError> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| PipelineError::ConfigInvalid("output directory not set".into()))
    }
}

pub fn snapshot_path(out: &Path, v: Version) -> PathBuf {
    out.join(format!("{}.csv", v.as_str()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionRow {
    pub version: Version,
    pub rows: usize,
    /// Excludes the row index.
    pub columns: usize,
    #[serde(flatten)]
    pub stats: MissingStats,
}

impl VersionRow {
    pub fn of(t: &Table) -> VersionRow {
        VersionRow {
            version: t.version(),
            rows: t.row_count(),
            columns: t.column_count(),
            stats: t.missing_stats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: PipelineStage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPointers {
    pub snapshots: Vec<PathBuf>,
    pub parse_audit: Option<PathBuf>,
    pub cleaning_report: Option<PathBuf>,
    pub construct_report: Option<PathBuf>,
    pub encoding_plan: Option<PathBuf>,
    pub imputation_report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub versions: Vec<VersionRow>,
    pub stages_run: Vec<PipelineStage>,
    pub timings: Vec<StageTiming>,
    pub ingest_warnings: Vec<IngestWarning>,
    pub cleaning: Option<CleaningReport>,
    pub imputation: Option<ImputationReport>,
    pub artifacts: ArtifactPointers,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

pub const PARSE_AUDIT: &str = "parse_audit.jsonl";
pub const CLEANING_REPORT: &str = "cleaning_report.json";
pub const CONSTRUCT_REPORT: &str = "construct_report.json";
pub const ENCODING_PLAN: &str = "encoding_plan.json";
pub const IMPUTATION_REPORT: &str = "imputation_report.json";
pub const RUN_REPORT: &str = "run_report.json";
pub const BENCHMARK_GRID: &str = "benchmark_grid.csv";

struct Loaded {
    cleaner: CleanerConfig,
    rules: RuleSet,
    imputer: ImputerConfig,
}

fn preflight(cfg: &PipelineConfig, stages: &[PipelineStage]) -> Result<Loaded, PipelineError> {
    let out = cfg.output()?;
    if stages[0] == PipelineStage::Parse {
        match &cfg.input_dir {
            Some(d) if d.is_dir() => {}
            Some(d) => {
                return Err(PipelineError::ConfigInvalid(format!(
                    "input {} is not a directory",
                    d.display()
                )))
            }
            None => {
                return Err(PipelineError::ConfigInvalid(
                    "input directory not set".into(),
                ))
            }
        }
    } else if let Some(v) = stages[0].input() {
        let p = snapshot_path(out, v);
        if !p.is_file() {
            return Err(PipelineError::ConfigInvalid(format!(
                "stage {} resumes from {}, which does not exist",
                stages[0],
                p.display()
            )));
        }
    }
    if !(cfg.sparse_threshold > 0.0 && cfg.sparse_threshold <= 1.0) {
        return Err(PipelineError::ConfigInvalid(
            "sparse_threshold must lie in (0, 1]".into(),
        ));
    }
    let imputer = cfg.imputer();
    imputer
        .validate()
        .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
    Ok(Loaded {
        cleaner: cfg.cleaner()?,
        rules: cfg.rules()?,
        imputer,
    })
}

/// Executes the selected stages. Snapshots written before a failing stage
/// stay on disk.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let stages = cfg.ordered_stages()?;
    let loaded = preflight(cfg, &stages)?;
    let out = cfg.output()?.to_path_buf();
    fs::create_dir_all(&out)
        .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", out.display())))?;
    let mode = cfg.exec;

    let mut report = RunReport {
        config: cfg.clone(),
        versions: Vec::new(),
        stages_run: stages.clone(),
        timings: Vec::new(),
        ingest_warnings: Vec::new(),
        cleaning: None,
        imputation: None,
        artifacts: ArtifactPointers {
            snapshots: Vec::new(),
            parse_audit: None,
            cleaning_report: None,
            construct_report: None,
            encoding_plan: None,
            imputation_report: None,
        },
    };

    // Versions before the first stage come from disk.
    let first = stages[0];
    for v in Version::ALL.into_iter().take(first as usize) {
        let p = snapshot_path(&out, v);
        if let Ok(t) = read_snapshot_as(&p, v) {
            report.versions.push(VersionRow::of(&t));
            report.artifacts.snapshots.push(p);
        }
    }
    if first > PipelineStage::Clean {
        report.cleaning = read_json(&out.join(CLEANING_REPORT));
    }

    let mut table: Option<Table> = match first.input() {
        Some(v) => Some(
            read_snapshot_as(&snapshot_path(&out, v), v)
                .map_err(|e| PipelineError::stage(first)(e.to_string()))?,
        ),
        None => None,
    };

    for stage in stages {
        let started = Instant::now();
        let fail = PipelineError::stage(stage);
        let next = match stage {
            PipelineStage::Parse => {
                let input = cfg.input_dir.as_deref().expect("checked in preflight");
                let (parsed, warnings) =
                    parser::parse_directory(input, mode).map_err(|e| fail(e.to_string()))?;
                let p = out.join(PARSE_AUDIT);
                parser::write_audit_jsonl(&p, &parsed.audit)
                    .map_err(|e| PipelineError::stage(stage)(e.to_string()))?;
                report.artifacts.parse_audit = Some(p);
                report.ingest_warnings = warnings;
                parsed.table
            }
            PipelineStage::Clean => {
                let t = table.take().expect("input loaded");
                let (t, rep) =
                    cleaner::clean(t, &loaded.cleaner).map_err(|e| fail(e.to_string()))?;
                let p = out.join(CLEANING_REPORT);
                write_json(&p, &rep).map_err(PipelineError::stage(stage))?;
                report.artifacts.cleaning_report = Some(p);
                report.cleaning = Some(rep);
                t
            }
            PipelineStage::Construct => {
                let t = table.take().expect("input loaded");
                let (t, rep): (Table, ConstructReport) =
                    constructor::construct(t, &loaded.rules, mode)
                        .map_err(|e| fail(e.to_string()))?;
                let p = out.join(CONSTRUCT_REPORT);
                write_json(&p, &rep).map_err(PipelineError::stage(stage))?;
                report.artifacts.construct_report = Some(p);
                t
            }
            PipelineStage::Encode => {
                let t = table.take().expect("input loaded");
                let (t, plan): (Table, EncodingPlan) =
                    encoder::one_hot(t, mode).map_err(|e| fail(e.to_string()))?;
                let p = out.join(ENCODING_PLAN);
                write_json(&p, &plan).map_err(PipelineError::stage(stage))?;
                report.artifacts.encoding_plan = Some(p);
                t
            }
            PipelineStage::Impute => {
                let t = table.take().expect("input loaded");
                let (t, rep) = imputer::impute(t, &loaded.imputer, mode, None)
                    .map_err(|e| fail(e.to_string()))?;
                let p = out.join(IMPUTATION_REPORT);
                write_json(&p, &rep).map_err(PipelineError::stage(stage))?;
                report.artifacts.imputation_report = Some(p);
                report.imputation = Some(rep);
                t
            }
        };
        let path = snapshot_path(&out, stage.output());
        write_snapshot(&next, &path).map_err(|e| PipelineError::stage(stage)(e.to_string()))?;
        let seconds = started.elapsed().as_secs_f64();
        info!(
            stage = stage.as_str(),
            seconds,
            rows = next.row_count(),
            columns = next.column_count(),
            "stage done"
        );
        report.timings.push(StageTiming { stage, seconds });
        report.versions.push(VersionRow::of(&next));
        report.artifacts.snapshots.push(path);
        table = Some(next);
    }

    write_json(&out.join(RUN_REPORT), &report).map_err(PipelineError::stage(
        *report.stages_run.last().expect("non-empty"),
    ))?;
    Ok(report)
}

pub fn load_report(dir: &Path) -> Result<RunReport, PipelineError> {
    let p = dir.join(RUN_REPORT);
    let bytes =
        fs::read(&p).map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", p.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", p.display())))
}

/// Version table followed by per-stage imputation totals.
pub fn report_render(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8}{:>8}{:>9}{:>12}{:>12}{:>9}",
        "version", "rows", "columns", "empty", "filled", "empty%"
    );
    for v in &r.versions {
        let _ = writeln!(
            s,
            "{:<8}{:>8}{:>9}{:>12}{:>12}{:>8.1}%",
            v.version.as_str(),
            v.rows,
            v.columns,
            v.stats.empty_cells,
            v.stats.filled_cells,
            v.stats.empty_fraction() * 100.0
        );
    }
    if let Some(c) = &r.cleaning {
        let _ = writeln!(
            s,
            "\ncleaning: {} rows dropped, {} columns concatenated, {} MNAR cells filled, {} sparse columns dropped",
            c.rows_dropped.len(),
            c.columns_concatenated.len(),
            c.mnar_cells_filled,
            c.columns_dropped.len()
        );
    }
    if let Some(imp) = &r.imputation {
        let _ = writeln!(
            s,
            "\n{:<15}{:>8}{:>10}{:>10}{:>12}{:>12}",
            "stage", "passes", "columns", "cells", "vs v4", "vs entry"
        );
        for st in &imp.stages {
            let _ = writeln!(
                s,
                "{:<15}{:>8}{:>10}{:>10}{:>11.1}%{:>11.1}%",
                st.stage.as_str(),
                st.passes,
                st.columns_filled,
                st.cells_filled,
                st.reduction_vs_v4 * 100.0,
                st.reduction_vs_entry * 100.0
            );
        }
        let cols: usize = imp.stages.iter().map(|s| s.columns_filled).sum();
        let _ = writeln!(
            s,
            "{:<15}{:>8}{:>10}{:>10}",
            "total",
            "",
            cols,
            imp.cells_filled()
        );
    }
    s
}

/// Builds v4 in memory from the input directory and sweeps ridge feature
/// selection thresholds; writes `benchmark_grid.csv` to the output directory.
pub fn benchmark(cfg: &PipelineConfig) -> Result<BenchmarkGrid, PipelineError> {
    let stages = [PipelineStage::Parse];
    let loaded = preflight(cfg, &stages)?;
    let out = cfg.output()?;
    fs::create_dir_all(out)
        .map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", out.display())))?;
    let mode = cfg.exec;
    let input = cfg.input_dir.as_deref().expect("checked in preflight");
    let (parsed, _) = parser::parse_directory(input, mode)
        .map_err(|e| PipelineError::stage(PipelineStage::Parse)(e.to_string()))?;
    let (t, _) = cleaner::clean(parsed.table, &loaded.cleaner)
        .map_err(|e| PipelineError::stage(PipelineStage::Clean)(e.to_string()))?;
    let (t, _) = constructor::construct(t, &loaded.rules, mode)
        .map_err(|e| PipelineError::stage(PipelineStage::Construct)(e.to_string()))?;
    let (t, _) = encoder::one_hot(t, mode)
        .map_err(|e| PipelineError::stage(PipelineStage::Encode)(e.to_string()))?;
    let grid = imputer::benchmark_thresholds(
        &t,
        &loaded.imputer,
        &[CorrelationMethod::Pearson, CorrelationMethod::Spearman],
        &imputer::default_thresholds(),
        mode,
    )
    .map_err(|e| PipelineError::stage(PipelineStage::Impute)(e.to_string()))?;
    grid.write_csv(&out.join(BENCHMARK_GRID))
        .map_err(|e| PipelineError::stage(PipelineStage::Impute)(e.to_string()))?;
    Ok(grid)
}
