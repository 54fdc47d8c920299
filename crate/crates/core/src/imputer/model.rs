//! Model families, fitting and k-fold grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::forest::{Forest, ForestParams};
use super::linalg::{fit_ols, fit_ridge, LinalgError, LinearModel, Standardization};
use super::stats::zero_excluded_mape;
use crate::exec::ExecMode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{rows} rows cannot fill {folds} folds of at least two rows")]
    TooFewRows { rows: usize, folds: usize },
    #[error("no fold of any grid point could be scored")]
    AllFoldsUnassessable,
    #[error("empty parameter grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    OlsSingle,
    RidgeMulti,
    RandomForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Ols { intercept: bool },
    Ridge { alpha: f64 },
    Forest(ForestParams),
}

impl ModelParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelParams::Ols { .. } => ModelFamily::OlsSingle,
            ModelParams::Ridge { .. } => ModelFamily::RidgeMulti,
            ModelParams::Forest(_) => ModelFamily::RandomForest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Linear(LinearModel),
    Forest(Forest),
}

impl FittedModel {
    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Forest(f) => f.predict(x),
        }
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        match self {
            FittedModel::Linear(m) => m.standardization.as_ref(),
            FittedModel::Forest(_) => None,
        }
    }
}

pub fn fit(
    params: &ModelParams,
    x: &[Vec<f64>],
    y: &[f64],
    mode: ExecMode,
) -> Result<FittedModel, FitError> {
    Ok(match params {
        ModelParams::Ols { intercept } => FittedModel::Linear(fit_ols(x, y, *intercept)?),
        ModelParams::Ridge { alpha } => FittedModel::Linear(fit_ridge(x, y, *alpha)?),
        ModelParams::Forest(p) => FittedModel::Forest(Forest::fit(x, y, p, mode)),
    })
}

/// Row positions (into the fitted `x`/`y`) of one fit and the rows it was
/// scored on, reported for every model built.
#[derive(Debug, Clone, Copy)]
pub struct FitTrace<'a> {
    pub train: &'a [usize],
    pub eval: &'a [usize],
    pub standardization: Option<&'a Standardization>,
}

pub fn take_rows(x: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|c| rows.iter().map(|&r| c[r]).collect())
        .collect()
}

pub fn take(y: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| y[r]).collect()
}

/// Shuffled, near-equal contiguous folds.
pub fn kfold(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: ModelParams,
    /// Mean held-out MAPE over the scorable folds.
    pub score: Option<f64>,
    pub folds_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ModelParams,
    pub scores: Vec<GridScore>,
}

/// Exhaustive k-fold search minimizing mean zero-excluded MAPE.
/// The first grid point wins ties; a one-point grid is returned unscored.
pub fn grid_search_cv(
    grid: &[ModelParams],
    x: &[Vec<f64>],
    y: &[f64],
    folds: usize,
    seed: u64,
    mode: ExecMode,
    on_fit: &(dyn Fn(FitTrace<'_>) + Sync),
) -> Result<GridSearchResult, FitError> {
    let n = y.len();
    if grid.is_empty() {
        return Err(FitError::EmptyGrid);
    }
    if folds < 2 || n < 2 * folds {
        return Err(FitError::TooFewRows { rows: n, folds });
    }
    if grid.len() == 1 {
        return Ok(GridSearchResult {
            best: grid[0].clone(),
            scores: Vec::new(),
        });
    }
    let parts = kfold(n, folds, seed);
    let mut scores = Vec::with_capacity(grid.len());
    for params in grid {
        let mut sum = 0.0;
        let mut scored = 0;
        for (f, eval) in parts.iter().enumerate() {
            let train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            let Ok(model) = fit(params, &take_rows(x, &train), &take(y, &train), mode) else {
                continue;
            };
            on_fit(FitTrace {
                train: &train,
                eval,
                standardization: model.standardization(),
            });
            let pred = model.predict(&take_rows(x, eval));
            if pred.iter().any(|v| !v.is_finite()) {
                continue;
            }
            if let Ok(m) = zero_excluded_mape(&take(y, eval), &pred) {
                sum += m.value;
                scored += 1;
            }
        }
        let score = (scored > 0).then(|| sum / scored as f64);
        scores.push(GridScore {
            params: params.clone(),
            score,
            folds_scored: scored,
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = s.score {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    let (i, _) = best.ok_or(FitError::AllFoldsUnassessable)?;
    Ok(GridSearchResult {
        best: grid[i].clone(),
        scores,
    })
}
