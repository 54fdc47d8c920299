//! Least squares by Householder QR and ridge regression by Cholesky.
//!
//! Feature matrices are column-major: `x[j][i]` is feature `j` of row `i`.

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("singular system")]
    Singular,
    #[error("need more rows ({rows}) than parameters ({params})")]
    Underdetermined { rows: usize, params: usize },
    #[error("ridge strength must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("ragged design matrix")]
    Ragged,
}

/// Per-feature centre and scale fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Population standard deviation; a constant feature gets scale 1.
    pub fn fit(x: &[Vec<f64>]) -> Standardization {
        let mut means = Vec::with_capacity(x.len());
        let mut scales = Vec::with_capacity(x.len());
        for col in x {
            let n = col.len().max(1) as f64;
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(m);
            scales.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Standardization { means, scales }
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(col, (m, s))| col.iter().map(|v| (v - m) / s).collect())
            .collect()
    }
}

/// `intercept + Σ coef_j · z_j`, where `z` is `x` after the optional
/// standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub standardization: Option<Standardization>,
}

impl LinearModel {
    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let n = x.first().map_or(0, Vec::len);
        let mut out = vec![self.intercept; n];
        for (j, col) in x.iter().enumerate() {
            let b = self.coefficients[j];
            let (m, s) = match &self.standardization {
                Some(st) => (st.means[j], st.scales[j]),
                None => (0.0, 1.0),
            };
            for (o, v) in out.iter_mut().zip(col) {
                *o += b * (v - m) / s;
            }
        }
        out
    }
}

fn rows_of(x: &[Vec<f64>], y: &[f64]) -> Result<usize, LinalgError> {
    let n = y.len();
    if x.iter().any(|c| c.len() != n) {
        return Err(LinalgError::Ragged);
    }
    Ok(n)
}

/// Solves `min ‖y − Aβ‖²` for column-major `a`. Rejects rank deficiency.
pub fn least_squares(a: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = rows_of(a, y)?;
    let p = a.len();
    if n < p {
        return Err(LinalgError::Underdetermined { rows: n, params: p });
    }
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut qty = y.to_vec();
    let norms: Vec<f64> = r
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    for k in 0..p {
        let alpha = {
            let s = r[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if r[k][k] > 0.0 {
                -s
            } else {
                s
            }
        };
        if alpha.abs() <= 1e-10 * norms[k].max(f64::MIN_POSITIVE) {
            return Err(LinalgError::Singular);
        }
        let mut v: Vec<f64> = r[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            let reflect = |col: &mut [f64]| {
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            };
            for col in r.iter_mut().skip(k) {
                reflect(&mut col[k..]);
            }
            reflect(&mut qty[k..]);
        }
    }
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for j in k + 1..p {
            s -= r[j][k] * beta[j];
        }
        beta[k] = s / r[k][k];
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(LinalgError::Singular);
    }
    Ok(beta)
}

pub fn fit_ols(x: &[Vec<f64>], y: &[f64], intercept: bool) -> Result<LinearModel, LinalgError> {
    let n = rows_of(x, y)?;
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(x.len() + 1);
    if intercept {
        design.push(vec![1.0; n]);
    }
    design.extend(x.iter().cloned());
    let beta = least_squares(&design, y)?;
    let (b0, coefficients) = if intercept {
        (beta[0], beta[1..].to_vec())
    } else {
        (0.0, beta)
    };
    Ok(LinearModel {
        intercept: b0,
        coefficients,
        standardization: None,
    })
}

/// Solves the symmetric positive definite system `m · b = rhs` in place.
fn cholesky_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<Vec<f64>, LinalgError> {
    let p = rhs.len();
    for j in 0..p {
        let mut d = m[j][j];
        for k in 0..j {
            d -= m[j][k] * m[j][k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::Singular);
        }
        let d = d.sqrt();
        m[j][j] = d;
        for i in j + 1..p {
            let mut s = m[i][j];
            for k in 0..j {
                s -= m[i][k] * m[j][k];
            }
            m[i][j] = s / d;
        }
    }
    for i in 0..p {
        for k in 0..i {
            rhs[i] -= m[i][k] * rhs[k];
        }
        rhs[i] /= m[i][i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            rhs[i] -= m[k][i] * rhs[k];
        }
        rhs[i] /= m[i][i];
    }
    Ok(rhs)
}

/// Ridge on standardized features with an unpenalized intercept.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Result<LinearModel, LinalgError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(LinalgError::InvalidAlpha(alpha));
    }
    let n = rows_of(x, y)?;
    let st = Standardization::fit(x);
    let z = st.apply(x);
    let y_mean = y.iter().sum::<f64>() / n.max(1) as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let p = z.len();
    let mut gram = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..=a {
            let s: f64 = z[a].iter().zip(&z[b]).map(|(u, v)| u * v).sum();
            gram[a][b] = s;
            gram[b][a] = s;
        }
        gram[a][a] += alpha;
    }
    let rhs: Vec<f64> = z
        .iter()
        .map(|c| c.iter().zip(&yc).map(|(u, v)| u * v).sum())
        .collect();
    let coefficients = cholesky_solve(gram, rhs)?;
    Ok(LinearModel {
        intercept: y_mean,
        coefficients,
        standardization: Some(st),
    })
}
