//! Cascaded regression imputation of numeric columns (v4 -> v5).
//!
//! Three stages run in order: single-feature OLS, ridge over
//! correlation-selected features, then a random forest over
//! importance-selected features. Within a stage, passes repeat until one
//! fills nothing; each pass reads a frozen copy of the table, fits targets
//! independently and applies all fills at the end, so newly completed
//! columns become candidate features for the next pass.
//!
//! For every target, [`ImputerConfig::runs`] seeded 80/20 splits are tried.
//! Feature selection and hyperparameter search see training rows only; the
//! best run by held-out zero-excluded MAPE fills the column if it beats
//! [`ImputerConfig::acceptance_mape`].

pub mod forest;
pub mod linalg;
pub mod model;
pub mod stats;

use std::collections::HashMap;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::seed::derive_seed;
use crate::table::{CellValue, Dtype, Mape, Table, TableError, Version};

pub use forest::{Forest, ForestParams};
pub use linalg::{LinearModel, Standardization};
pub use model::{grid_search_cv, FitError, FitTrace, FittedModel, ModelFamily, ModelParams};
pub use stats::{
    pearson, spearman, zero_excluded_mape, CorrelationMethod, StatsError, ZeroExcludedMape,
};

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("invalid imputer config: {0}")]
    Config(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("writing benchmark grid: {0}")]
    Io(#[from] io::Error),
    #[error("writing benchmark grid: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SingleLinear,
    Ridge,
    RandomForest,
}

impl Stage {
    pub const ORDER: [Stage; 3] = [Stage::SingleLinear, Stage::Ridge, Stage::RandomForest];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::SingleLinear => "single_linear",
            Stage::Ridge => "ridge",
            Stage::RandomForest => "random_forest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestSelection {
    /// Keep features whose importance in a preliminary fit is at least the mean.
    #[default]
    Importance,
    AllComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputerConfig {
    pub runs: usize,
    pub cv_folds: usize,
    pub acceptance_mape: f64,
    /// Minimum training rows per fit.
    pub min_train_rows: usize,
    pub test_fraction: f64,
    pub ridge_threshold: f64,
    pub correlation: CorrelationMethod,
    pub ols_intercept_grid: Vec<bool>,
    pub ridge_alpha_grid: Vec<f64>,
    pub forest: ForestParams,
    pub forest_selection: ForestSelection,
    pub seed: u64,
    pub stages: Vec<Stage>,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        ImputerConfig {
            runs: 10,
            cv_folds: 5,
            acceptance_mape: 0.15,
            min_train_rows: 10,
            test_fraction: 0.2,
            ridge_threshold: 0.4,
            correlation: CorrelationMethod::Pearson,
            ols_intercept_grid: vec![true, false],
            ridge_alpha_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            forest: ForestParams::default(),
            forest_selection: ForestSelection::Importance,
            seed: 0,
            stages: Stage::ORDER.to_vec(),
        }
    }
}

impl ImputerConfig {
    pub fn validate(&self) -> Result<(), ImputeError> {
        let bad = |m: &str| Err(ImputeError::Config(m.to_string()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if self.min_train_rows < 2 * self.cv_folds {
            return bad("min_train_rows must allow two rows per fold");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if self.acceptance_mape.is_nan() || self.acceptance_mape <= 0.0 {
            return bad("acceptance_mape must be positive");
        }
        if !(0.0..=1.0).contains(&self.ridge_threshold) {
            return bad("ridge_threshold must lie in [0, 1]");
        }
        if self.ols_intercept_grid.is_empty() || self.ridge_alpha_grid.is_empty() {
            return bad("parameter grids must be non-empty");
        }
        if self
            .ridge_alpha_grid
            .iter()
            .any(|a| !(*a > 0.0 && a.is_finite()))
        {
            return bad("ridge alphas must be positive and finite");
        }
        if self.forest.trees == 0 || self.forest.min_samples_leaf == 0 {
            return bad("forest needs at least one tree and a leaf minimum of 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPurpose {
    CrossValidation,
    /// Preliminary forest used only for importance-based feature selection.
    Selection,
    Final,
}

/// One model fit, with table row indices.
#[derive(Debug, Clone, Copy)]
pub struct FitEvent<'a> {
    pub stage: Stage,
    pub target: &'a str,
    pub run: usize,
    pub purpose: FitPurpose,
    pub features: &'a [&'a str],
    pub train_rows: &'a [usize],
    pub eval_rows: &'a [usize],
    pub standardization: Option<&'a Standardization>,
}

/// Receives every fit the imputer performs. Called from worker threads.
pub trait FitObserver: Sync {
    fn on_fit(&self, event: &FitEvent<'_>);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSummary {
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
        standardized: bool,
    },
    Forest {
        trees: usize,
        importances: Vec<f64>,
    },
}

impl ModelSummary {
    fn of(model: &FittedModel) -> ModelSummary {
        match model {
            FittedModel::Linear(m) => ModelSummary::Linear {
                intercept: m.intercept,
                coefficients: m.coefficients.clone(),
                standardized: m.standardization.is_some(),
            },
            FittedModel::Forest(f) => ModelSummary::Forest {
                trees: f.trees().len(),
                importances: f.importances.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub features: Vec<String>,
    pub params: Option<ModelParams>,
    pub mape: Option<ZeroExcludedMape>,
    /// Why the run produced no score.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub stage: Stage,
    pub pass: usize,
    pub target: String,
    pub missing_before: usize,
    pub runs: Vec<RunSummary>,
    pub best_run: Option<usize>,
    pub best_model: Option<ModelSummary>,
    pub mape: Option<f64>,
    pub accepted: bool,
    pub cells_filled: usize,
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTotals {
    pub stage: Stage,
    pub passes: usize,
    pub columns_attempted: usize,
    pub columns_filled: usize,
    pub cells_filled: usize,
    pub empty_at_entry: usize,
    /// Fraction of the v4 empty cells this stage filled.
    pub reduction_vs_v4: f64,
    /// Fraction of the empty cells at stage entry this stage filled.
    pub reduction_vs_entry: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImputationReport {
    pub records: Vec<TargetRecord>,
    pub stages: Vec<StageTotals>,
    pub empty_v4: usize,
    pub empty_after: usize,
}

impl ImputationReport {
    pub fn accepted(&self) -> impl Iterator<Item = &TargetRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn cells_filled(&self) -> usize {
        self.records.iter().map(|r| r.cells_filled).sum()
    }
}

/// Numeric view of a table frozen for one pass.
struct Frame<'t> {
    table: &'t Table,
    /// Complete num/sum/amount/enc columns: (column index, values).
    candidates: Vec<(usize, Vec<f64>)>,
}

impl<'t> Frame<'t> {
    fn new(table: &'t Table) -> Frame<'t> {
        let candidates = table
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| is_feature_dtype(c.dtype()) && c.is_complete() && !c.name().is_meta())
            .filter_map(|(i, c)| {
                let v: Option<Vec<f64>> = c.cells().iter().map(CellValue::as_number).collect();
                v.map(|v| (i, v))
            })
            .collect();
        Frame { table, candidates }
    }

    fn key(&self, col: usize) -> &str {
        self.table.columns()[col].key()
    }

    fn candidates_for(&self, target: usize) -> Vec<usize> {
        (0..self.candidates.len())
            .filter(|&c| self.candidates[c].0 != target)
            .collect()
    }
}

fn is_feature_dtype(d: Dtype) -> bool {
    d.is_numeric() || d == Dtype::Enc
}

/// Index of the strongest defined |coefficient|; the earliest wins ties.
pub fn select_best(strengths: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in strengths.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Indices whose |coefficient| is at least `threshold`.
pub fn select_threshold(strengths: &[Option<f64>], threshold: f64) -> Vec<usize> {
    strengths
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some_and(|v| v >= threshold))
        .map(|(i, _)| i)
        .collect()
}

/// Numeric columns that still have Missing cells.
pub fn imputation_targets(t: &Table) -> Vec<String> {
    t.columns()
        .iter()
        .filter(|c| c.dtype().is_numeric() && !c.name().is_meta() && c.missing_count() > 0)
        .map(|c| c.key().to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Selection {
    Best(CorrelationMethod),
    Threshold(CorrelationMethod, f64),
    Importance,
    All,
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn split_rows(observed: &[usize], test_fraction: f64, seed: u64) -> Split {
    let mut rows = observed.to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
    let mut test = rows[..n_test].to_vec();
    let mut train = rows[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Split { train, test }
}

struct Job<'a> {
    frame: &'a Frame<'a>,
    cfg: &'a ImputerConfig,
    stage: Stage,
    target: usize,
    y: Vec<Option<f64>>,
    candidates: Vec<usize>,
    mode: ExecMode,
    observer: Option<&'a dyn FitObserver>,
}

struct RunResult {
    summary: RunSummary,
    model: Option<(FittedModel, Vec<usize>)>,
}

impl Job<'_> {
    fn target_key(&self) -> &str {
        self.frame.key(self.target)
    }

    fn emit(
        &self,
        run: usize,
        purpose: FitPurpose,
        feats: &[usize],
        train: &[usize],
        eval: &[usize],
        st: Option<&Standardization>,
    ) {
        if let Some(obs) = self.observer {
            let names: Vec<&str> = feats
                .iter()
                .map(|&c| self.frame.key(self.frame.candidates[c].0))
                .collect();
            obs.on_fit(&FitEvent {
                stage: self.stage,
                target: self.target_key(),
                run,
                purpose,
                features: &names,
                train_rows: train,
                eval_rows: eval,
                standardization: st,
            });
        }
    }

    fn design(&self, feats: &[usize], rows: &[usize]) -> Vec<Vec<f64>> {
        feats
            .iter()
            .map(|&c| {
                rows.iter()
                    .map(|&r| self.frame.candidates[c].1[r])
                    .collect()
            })
            .collect()
    }

    fn targets_at(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&r| self.y[r].unwrap_or(f64::NAN))
            .collect()
    }

    fn select(
        &self,
        sel: Selection,
        run: usize,
        split: &Split,
        y_train: &[f64],
        seed: u64,
    ) -> Vec<usize> {
        let strength = |method: CorrelationMethod, c: usize| -> Option<f64> {
            let x: Vec<f64> = split
                .train
                .iter()
                .map(|&r| self.frame.candidates[c].1[r])
                .collect();
            method.coefficient(&x, y_train).ok().map(f64::abs)
        };
        match sel {
            Selection::Best(method) => {
                let s: Vec<Option<f64>> = self
                    .candidates
                    .iter()
                    .map(|&c| strength(method, c))
                    .collect();
                select_best(&s)
                    .map(|i| vec![self.candidates[i]])
                    .unwrap_or_default()
            }
            Selection::Threshold(method, th) => {
                let s: Vec<Option<f64>> = self
                    .candidates
                    .iter()
                    .map(|&c| strength(method, c))
                    .collect();
                select_threshold(&s, th)
                    .into_iter()
                    .map(|i| self.candidates[i])
                    .collect()
            }
            Selection::All => self.candidates.clone(),
            Selection::Importance => {
                if self.candidates.is_empty() {
                    return Vec::new();
                }
                let params = ForestParams {
                    seed: derive_seed(seed, &["selection"]),
                    ..self.cfg.forest.clone()
                };
                let x = self.design(&self.candidates, &split.train);
                let f = Forest::fit(&x, y_train, &params, self.mode);
                self.emit(
                    run,
                    FitPurpose::Selection,
                    &self.candidates,
                    &split.train,
                    &[],
                    None,
                );
                let mean = f.importances.iter().sum::<f64>() / f.importances.len() as f64;
                if mean <= 0.0 {
                    return Vec::new();
                }
                self.candidates
                    .iter()
                    .zip(&f.importances)
                    .filter(|(_, w)| **w >= mean)
                    .map(|(c, _)| *c)
                    .collect()
            }
        }
    }

    fn grid(&self, seed: u64) -> Vec<ModelParams> {
        match self.stage {
            Stage::SingleLinear => self
                .cfg
                .ols_intercept_grid
                .iter()
                .map(|&intercept| ModelParams::Ols { intercept })
                .collect(),
            Stage::Ridge => self
                .cfg
                .ridge_alpha_grid
                .iter()
                .map(|&alpha| ModelParams::Ridge { alpha })
                .collect(),
            Stage::RandomForest => vec![ModelParams::Forest(ForestParams {
                seed: derive_seed(seed, &["forest"]),
                ..self.cfg.forest.clone()
            })],
        }
    }

    fn run_once(&self, run: usize, sel: Selection, run_seed: u64, observed: &[usize]) -> RunResult {
        let split = split_rows(observed, self.cfg.test_fraction, run_seed);
        let mut summary = RunSummary {
            run,
            train_rows: split.train.len(),
            test_rows: split.test.len(),
            features: Vec::new(),
            params: None,
            mape: None,
            failure: None,
        };
        let fail = |mut s: RunSummary, why: String| {
            s.failure = Some(why);
            RunResult {
                summary: s,
                model: None,
            }
        };
        let y_train = self.targets_at(&split.train);
        let feats = self.select(sel, run, &split, &y_train, run_seed);
        summary.features = feats
            .iter()
            .map(|&c| self.frame.key(self.frame.candidates[c].0).to_string())
            .collect();
        if feats.is_empty() {
            return fail(summary, "empty feature selection".into());
        }
        let x_train = self.design(&feats, &split.train);
        let on_cv = |t: FitTrace<'_>| {
            let train: Vec<usize> = t.train.iter().map(|&i| split.train[i]).collect();
            let eval: Vec<usize> = t.eval.iter().map(|&i| split.train[i]).collect();
            self.emit(
                run,
                FitPurpose::CrossValidation,
                &feats,
                &train,
                &eval,
                t.standardization,
            );
        };
        let grid = self.grid(run_seed);
        let params = match grid_search_cv(
            &grid,
            &x_train,
            &y_train,
            self.cfg.cv_folds,
            derive_seed(run_seed, &["cv"]),
            self.mode,
            &on_cv,
        ) {
            Ok(r) => r.best,
            Err(e) => return fail(summary, e.to_string()),
        };
        summary.params = Some(params.clone());
        let model = match model::fit(&params, &x_train, &y_train, self.mode) {
            Ok(m) => m,
            Err(e) => return fail(summary, e.to_string()),
        };
        self.emit(
            run,
            FitPurpose::Final,
            &feats,
            &split.train,
            &split.test,
            model.standardization(),
        );
        let pred = model.predict(&self.design(&feats, &split.test));
        if pred.iter().any(|v| !v.is_finite()) {
            return fail(summary, "non-finite prediction".into());
        }
        match zero_excluded_mape(&self.targets_at(&split.test), &pred) {
            Ok(m) => summary.mape = Some(m),
            Err(e) => return fail(summary, e.to_string()),
        }
        RunResult {
            summary,
            model: Some((model, feats)),
        }
    }

    fn observed(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&r| self.y[r].is_some()).collect()
    }

    fn enough_rows(&self, observed: usize) -> bool {
        let n_test = ((observed as f64 * self.cfg.test_fraction).round() as usize).max(1);
        observed > n_test && observed - n_test >= self.cfg.min_train_rows
    }

    fn selection(&self) -> Selection {
        match self.stage {
            Stage::SingleLinear => Selection::Best(CorrelationMethod::Pearson),
            Stage::Ridge => Selection::Threshold(self.cfg.correlation, self.cfg.ridge_threshold),
            Stage::RandomForest => match self.cfg.forest_selection {
                ForestSelection::Importance => Selection::Importance,
                ForestSelection::AllComplete => Selection::All,
            },
        }
    }

    /// Runs the budget and returns the record plus fills for Missing rows.
    fn attempt(&self, pass: usize) -> (TargetRecord, Vec<(usize, f64)>) {
        let missing: Vec<usize> = (0..self.y.len()).filter(|&r| self.y[r].is_none()).collect();
        let mut rec = TargetRecord {
            stage: self.stage,
            pass,
            target: self.target_key().to_string(),
            missing_before: missing.len(),
            runs: Vec::new(),
            best_run: None,
            best_model: None,
            mape: None,
            accepted: false,
            cells_filled: 0,
            skip_reason: None,
        };
        let observed = self.observed();
        if !self.enough_rows(observed.len()) {
            rec.skip_reason = Some(format!(
                "{} observed rows leave fewer than {} for training",
                observed.len(),
                self.cfg.min_train_rows
            ));
            return (rec, Vec::new());
        }
        if self.candidates.is_empty() {
            rec.skip_reason = Some("no complete feature columns".into());
            return (rec, Vec::new());
        }
        let sel = self.selection();
        let mut best: Option<(usize, f64, FittedModel, Vec<usize>)> = None;
        for run in 0..self.cfg.runs {
            let seed = derive_seed(
                self.cfg.seed,
                &[self.stage.as_str(), self.target_key(), &run.to_string()],
            );
            let r = self.run_once(run, sel, seed, &observed);
            if let (Some(m), Some((model, feats))) = (r.summary.mape, r.model) {
                if best.as_ref().is_none_or(|b| m.value < b.1) {
                    best = Some((run, m.value, model, feats));
                }
            }
            rec.runs.push(r.summary);
        }
        let Some((run, mape, model, feats)) = best else {
            rec.skip_reason = Some("no run could be scored".into());
            return (rec, Vec::new());
        };
        rec.best_run = Some(run);
        rec.mape = Some(mape);
        rec.best_model = Some(ModelSummary::of(&model));
        if mape >= self.cfg.acceptance_mape {
            return (rec, Vec::new());
        }
        let pred = model.predict(&self.design(&feats, &missing));
        if pred.iter().any(|v| !v.is_finite()) {
            rec.skip_reason = Some("non-finite fill value".into());
            return (rec, Vec::new());
        }
        rec.accepted = true;
        rec.cells_filled = missing.len();
        (rec, missing.into_iter().zip(pred).collect())
    }
}

fn target_values(t: &Table, col: usize) -> Vec<Option<f64>> {
    t.columns()[col]
        .cells()
        .iter()
        .map(CellValue::as_number)
        .collect()
}

fn apply_fills(t: Table, key: &str, fills: &[(usize, f64)]) -> Result<Table, TableError> {
    let mut cells = t
        .column(key)
        .map(|c| c.cells().to_vec())
        .unwrap_or_default();
    for &(r, v) in fills {
        debug_assert!(cells[r].is_missing());
        cells[r] = CellValue::Number(v);
    }
    t.replace_cells(key, cells)
}

/// Runs one stage to a fixed point.
pub fn impute_stage(
    mut t: Table,
    stage: Stage,
    cfg: &ImputerConfig,
    empty_v4: usize,
    mode: ExecMode,
    observer: Option<&dyn FitObserver>,
) -> Result<(Table, Vec<TargetRecord>, StageTotals), ImputeError> {
    cfg.validate()?;
    let empty_at_entry = t.missing_stats().empty_cells;
    let mut records = Vec::new();
    // Candidate features each target was last tried with; an unchanged set
    // would reproduce the same seeded result.
    let mut tried: HashMap<String, Vec<String>> = HashMap::new();
    let mut pass = 0;
    loop {
        pass += 1;
        let frame = Frame::new(&t);
        let jobs: Vec<Job<'_>> = imputation_targets(&t)
            .into_iter()
            .filter_map(|key| {
                let target = t.column_index(&key)?;
                let candidates = frame.candidates_for(target);
                let names: Vec<String> = candidates
                    .iter()
                    .map(|&c| frame.key(frame.candidates[c].0).to_string())
                    .collect();
                if tried.get(&key) == Some(&names) {
                    return None;
                }
                tried.insert(key, names);
                Some(Job {
                    frame: &frame,
                    cfg,
                    stage,
                    target,
                    y: target_values(&t, target),
                    candidates,
                    mode,
                    observer,
                })
            })
            .collect();
        if jobs.is_empty() {
            break;
        }
        let results = mode.map(&jobs, |job| job.attempt(pass));
        drop(jobs);
        let mut filled_any = false;
        let mut updates = Vec::new();
        for (rec, fills) in results {
            if rec.accepted {
                filled_any = true;
                updates.push((rec.target.clone(), fills));
            }
            records.push(rec);
        }
        drop(frame);
        for (key, fills) in updates {
            t = apply_fills(t, &key, &fills)?;
        }
        tracing::debug!(stage = stage.as_str(), pass, filled_any, "imputation pass");
        if !filled_any {
            break;
        }
    }
    let accepted: Vec<&TargetRecord> = records.iter().filter(|r| r.accepted).collect();
    let cells_filled = accepted.iter().map(|r| r.cells_filled).sum();
    let ratio = |d: usize| {
        if d == 0 {
            0.0
        } else {
            cells_filled as f64 / d as f64
        }
    };
    let totals = StageTotals {
        stage,
        passes: pass,
        columns_attempted: tried.len(),
        columns_filled: accepted.len(),
        cells_filled,
        empty_at_entry,
        reduction_vs_v4: ratio(empty_v4),
        reduction_vs_entry: ratio(empty_at_entry),
    };
    Ok((t, records, totals))
}

/// Tags every accepted column with its MAPE and marks the table v5.
pub fn rename_filled(mut t: Table, report: &ImputationReport) -> Result<Table, TableError> {
    for rec in report.accepted() {
        let (Some(mape), Some(col)) = (rec.mape, t.column(&rec.target)) else {
            continue;
        };
        let name = col
            .name()
            .clone()
            .with_mape(Some(Mape::from_fraction(mape)));
        t = t.rename_column(&rec.target, name)?;
    }
    Ok(t.with_version(Version::V5))
}

/// The full cascade over the configured stages, then [`rename_filled`].
pub fn impute(
    t: Table,
    cfg: &ImputerConfig,
    mode: ExecMode,
    observer: Option<&dyn FitObserver>,
) -> Result<(Table, ImputationReport), ImputeError> {
    cfg.validate()?;
    let empty_v4 = t.missing_stats().empty_cells;
    let mut report = ImputationReport {
        empty_v4,
        ..Default::default()
    };
    let mut t = t;
    for stage in Stage::ORDER.into_iter().filter(|s| cfg.stages.contains(s)) {
        let (next, records, totals) = impute_stage(t, stage, cfg, empty_v4, mode, observer)?;
        tracing::info!(
            stage = stage.as_str(),
            columns = totals.columns_filled,
            cells = totals.cells_filled,
            "imputation stage"
        );
        t = next;
        report.records.extend(records);
        report.stages.push(totals);
    }
    report.empty_after = t.missing_stats().empty_cells;
    let t = rename_filled(t, &report)?;
    Ok((t, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    /// "pearson", "spearman" or "all_complete".
    pub method: String,
    pub threshold: Option<f64>,
    /// Successful ridge runs summed over targets and the run budget.
    pub successes: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkGrid {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkGrid {
    pub fn best_threshold(&self, method: &str) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for r in self.rows.iter().filter(|r| r.method == method) {
            if let Some(th) = r.threshold {
                if best.is_none_or(|(_, s)| r.successes > s) {
                    best = Some((th, r.successes));
                }
            }
        }
        best
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ImputeError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "threshold", "successes", "runs"])?;
        for r in &self.rows {
            let th = r.threshold.map(|v| format!("{v:.1}")).unwrap_or_default();
            w.write_record([
                r.method.as_str(),
                &th,
                &r.successes.to_string(),
                &r.runs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Counts successful ridge runs per (method, threshold) on an unmodified
/// table, plus a baseline using every complete column.
pub fn benchmark_thresholds(
    t: &Table,
    cfg: &ImputerConfig,
    methods: &[CorrelationMethod],
    thresholds: &[f64],
    mode: ExecMode,
) -> Result<BenchmarkGrid, ImputeError> {
    cfg.validate()?;
    let frame = Frame::new(t);
    let jobs: Vec<Job<'_>> = imputation_targets(t)
        .into_iter()
        .filter_map(|key| {
            let target = t.column_index(&key)?;
            let candidates = frame.candidates_for(target);
            Some(Job {
                frame: &frame,
                cfg,
                stage: Stage::Ridge,
                target,
                y: target_values(t, target),
                candidates,
                mode,
                observer: None,
            })
        })
        .collect();
    let mut settings: Vec<(String, Option<f64>, Selection)> = Vec::new();
    for &m in methods {
        for &th in thresholds {
            settings.push((
                m.as_str().to_string(),
                Some(th),
                Selection::Threshold(m, th),
            ));
        }
    }
    settings.push(("all_complete".to_string(), None, Selection::All));
    let counts: Vec<Vec<(usize, usize)>> = mode.map(&jobs, |job| {
        let observed = job.observed();
        if !job.enough_rows(observed.len()) {
            return vec![(0, 0); settings.len()];
        }
        settings
            .iter()
            .map(|(_, _, sel)| {
                let mut ok = 0;
                for run in 0..cfg.runs {
                    let seed =
                        derive_seed(cfg.seed, &["benchmark", job.target_key(), &run.to_string()]);
                    let r = job.run_once(run, *sel, seed, &observed);
                    if r.summary
                        .mape
                        .is_some_and(|m| m.value < cfg.acceptance_mape)
                    {
                        ok += 1;
                    }
                }
                (ok, cfg.runs)
            })
            .collect()
    });
    let rows = settings
        .iter()
        .enumerate()
        .map(|(i, (method, threshold, _))| BenchmarkRow {
            method: method.clone(),
            threshold: *threshold,
            successes: counts.iter().map(|c| c[i].0).sum(),
            runs: counts.iter().map(|c| c[i].1).sum(),
        })
        .collect();
    Ok(BenchmarkGrid { rows })
}

/// 0.1, 0.2, ..., 0.9
pub fn default_thresholds() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}
