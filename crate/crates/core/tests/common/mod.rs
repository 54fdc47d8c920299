//! Synthetic tables with known ground truth, plus independent oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use std::path::{Path, PathBuf};

use forge_core::table::{CellValue, ColumnName, Dtype, Table, Version};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Linear,
    Nonlinear,
}

pub struct Hidden {
    pub column: String,
    pub row: usize,
    pub value: f64,
}

pub struct Synthetic {
    pub table: Table,
    pub hidden: Vec<Hidden>,
    pub targets: Vec<(String, Truth)>,
}

impl Synthetic {
    pub fn hidden_in(&self, kind: Truth) -> impl Iterator<Item = &Hidden> {
        self.hidden.iter().filter(move |h| {
            self.targets
                .iter()
                .any(|(c, k)| *c == h.column && *k == kind)
        })
    }
}

fn num(body: &str) -> ColumnName {
    ColumnName::new(Dtype::Num, body, None)
}

/// Four complete uniform features on [0, 10], a complete binary group, and
/// targets with 1% Gaussian noise and exactly 20% of rows hidden:
/// - `single`: 2·f1 + 3
/// - `multi`: 10·f1 + 10·f2 + 5 (no single feature explains it)
/// - `step`: 5 below f3 = 5, 40 above
/// - `bowl`: f4² + 10
pub fn synthetic(rows: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..rows).map(|_| rng.random_range(0.0..10.0)).collect())
        .collect();
    let group: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
    type Gen = fn(&[Vec<f64>], usize) -> f64;
    let targets: [(&str, Truth, Gen); 4] = [
        ("synth-single", Truth::Linear, |f, i| 2.0 * f[0][i] + 3.0),
        ("synth-multi", Truth::Linear, |f, i| {
            10.0 * f[0][i] + 10.0 * f[1][i] + 5.0
        }),
        ("synth-step", Truth::Nonlinear, |f, i| {
            if f[2][i] < 5.0 {
                5.0
            } else {
                40.0
            }
        }),
        ("synth-bowl", Truth::Nonlinear, |f, i| {
            f[3][i] * f[3][i] + 10.0
        }),
    ];
    let codes = (0..rows).map(|i| format!("s{i:04}")).collect();
    let mut t = Table::new(Version::V4, codes).unwrap();
    for (j, col) in f.iter().enumerate() {
        let cells = col.iter().map(|v| CellValue::Number(*v)).collect();
        t = t
            .with_column(num(&format!("synth-f{}", j + 1)), cells)
            .unwrap();
    }
    for (label, on) in [("a", true), ("b", false)] {
        let name = ColumnName::parse(&format!("enc synth-group_{label}")).unwrap();
        t = t
            .with_column(
                name,
                group.iter().map(|g| CellValue::Binary(*g == on)).collect(),
            )
            .unwrap();
    }
    let mut hidden = Vec::new();
    let mut kinds = Vec::new();
    for (body, kind, gen) in targets {
        let values: Vec<f64> = (0..rows)
            .map(|i| gen(&f, i) * (1.0 + 0.01 * normal(&mut rng)))
            .collect();
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut rng);
        let mut gone = order[..rows / 5].to_vec();
        gone.sort_unstable();
        let name = num(body);
        let key = name.to_string();
        let cells = (0..rows)
            .map(|i| {
                if gone.contains(&i) {
                    CellValue::Missing
                } else {
                    CellValue::Number(values[i])
                }
            })
            .collect();
        t = t.with_column(name, cells).unwrap();
        hidden.extend(gone.iter().map(|&row| Hidden {
            column: key.clone(),
            row,
            value: values[row],
        }));
        kinds.push((key, kind));
    }
    Synthetic {
        table: t,
        hidden,
        targets: kinds,
    }
}

/// Column key with any MAPE annotation removed.
pub fn untagged(key: &str) -> String {
    ColumnName::parse(key).unwrap().with_mape(None).to_string()
}

/// Least squares with intercept via the normal equations, solved by
/// Gauss-Jordan elimination with partial pivoting. Returns (b0, b).
pub fn normal_equation_ols(x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut a: Vec<Vec<f64>> = vec![vec![1.0; n]];
    a.extend(x.iter().cloned());
    let p = a.len();
    let mut m = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            m[i][j] = (0..n).map(|r| a[i][r] * a[j][r]).sum();
        }
        m[i][p] = (0..n).map(|r| a[i][r] * y[r]).sum();
    }
    for c in 0..p {
        let piv = (c..p)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        for k in c..=p {
            m[c][k] /= d;
        }
        for r in 0..p {
            if r != c {
                let f = m[r][c];
                for k in c..=p {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    let beta: Vec<f64> = m.iter().map(|row| row[p]).collect();
    (beta[0], beta[1..].to_vec())
}

/// Mean of |a − p| / |a| over pairs with a ≠ 0, as a plain loop.
pub fn direct_mape(actual: &[f64], pred: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..actual.len() {
        if actual[i] == 0.0 {
            continue;
        }
        total += (actual[i] - pred[i]).abs() / actual[i].abs();
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(total / count as f64)
    }
}

/// A random column name in display form, drawn from the full grammar.
pub fn random_name(rng: &mut impl Rng) -> String {
    const WORDS: [&str; 10] = [
        "economy", "gdp", "people", "land", "oil", "risk", "age", "port", "x2", "total",
    ];
    if rng.random_ratio(1, 20) {
        return ["Country Code", "txt Country Name", "lbl Region"][rng.random_range(0..3)]
            .to_string();
    }
    let dtype = Dtype::ALL[rng.random_range(0..Dtype::ALL.len())];
    let mut s = dtype.tag().to_string();
    if rng.random_ratio(1, 4) {
        s.push_str(&format!(" (MAPE): {:.2}", rng.random_range(0.0..15.0)));
    }
    let parts = rng.random_range(1..4);
    let body: Vec<&str> = (0..parts)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect();
    s.push(' ');
    s.push_str(&body.join("-"));
    if rng.random_bool(0.5) {
        let words = rng.random_range(1..3);
        let sub: Vec<&str> = (0..words)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect();
        s.push(' ');
        s.push_str(&sub.join(" "));
    }
    if rng.random_ratio(1, 5) {
        s.push_str(" hist");
    }
    s
}
