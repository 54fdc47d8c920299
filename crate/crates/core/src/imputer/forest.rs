//! Bagged CART regression trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &[Vec<f64>], row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature][row] <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub params: ForestParams,
    trees: Vec<Tree>,
    /// Mean over trees of each tree's normalized impurity decrease.
    pub importances: Vec<f64>,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams, mode: ExecMode) -> Forest {
        let n = y.len();
        let p = x.len();
        let grown = mode.map_range(params.trees, |t| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(params.seed, &["tree", &t.to_string()]));
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            Builder::new(x, y, params, rng).grow(&sample)
        });
        let mut importances = vec![0.0; p];
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, gains) in grown {
            let total: f64 = gains.iter().sum();
            if total > 0.0 {
                for (acc, g) in importances.iter_mut().zip(&gains) {
                    *acc += g / total;
                }
            }
            trees.push(tree);
        }
        if !trees.is_empty() {
            for v in &mut importances {
                *v /= trees.len() as f64;
            }
        }
        Forest {
            params: params.clone(),
            trees,
            importances,
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let n = x.first().map_or(0, Vec::len);
        (0..n)
            .map(|row| {
                self.trees
                    .iter()
                    .map(|t| t.predict_row(x, row))
                    .sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    gains: Vec<f64>,
    side: Vec<bool>,
}

struct Candidate {
    feature: usize,
    /// Position in the sorted list of the last sample going left.
    cut: usize,
    threshold: f64,
    gain: f64,
}

impl<'a> Builder<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], params: &'a ForestParams, rng: ChaCha8Rng) -> Self {
        Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            gains: vec![0.0; x.len()],
            side: vec![false; y.len()],
        }
    }

    fn grow(mut self, sample: &[usize]) -> (Tree, Vec<f64>) {
        // Per feature, the sample rows ordered by that feature's value.
        let sorted: Vec<Vec<usize>> = (0..self.x.len())
            .map(|f| {
                let mut s = sample.to_vec();
                s.sort_by(|&a, &b| self.x[f][a].total_cmp(&self.x[f][b]));
                s
            })
            .collect();
        self.node(sorted, sample.to_vec(), 0);
        (Tree { nodes: self.nodes }, self.gains)
    }

    fn node(&mut self, sorted: Vec<Vec<usize>>, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        let mean = if pure {
            first
        } else {
            rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
        };
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let leaf_min = self.params.min_samples_leaf.max(1);
        if pure || !depth_ok || rows.len() < 2 * leaf_min {
            self.nodes[id] = Node::Leaf(mean);
            return id;
        }
        let Some(best) = self.best_split(&sorted, leaf_min) else {
            self.nodes[id] = Node::Leaf(mean);
            return id;
        };
        self.gains[best.feature] += best.gain;
        let split_list = &sorted[best.feature];
        for (pos, &r) in split_list.iter().enumerate() {
            // Bootstrap duplicates share a value, so they share a side.
            self.side[r] = pos <= best.cut;
        }
        let goes_left = &self.side;
        let (mut ls, mut rs) = (
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
        );
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| goes_left[r]);
            ls.push(l);
            rs.push(r);
        }
        let (lrows, rrows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| goes_left[r]);
        let left = self.node(ls, lrows, depth + 1);
        let right = self.node(rs, rrows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn features_to_try(&mut self) -> Vec<usize> {
        let p = self.x.len();
        match self.params.max_features {
            Some(k) if k < p => {
                let mut all: Vec<usize> = (0..p).collect();
                for i in 0..k {
                    let j = self.rng.random_range(i..p);
                    all.swap(i, j);
                }
                let mut chosen = all[..k].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, sorted: &[Vec<usize>], leaf_min: usize) -> Option<Candidate> {
        let total: f64 = sorted[0].iter().map(|&r| self.y[r]).sum();
        let n = sorted[0].len();
        let base = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        for f in self.features_to_try() {
            let col = &self.x[f];
            let list = &sorted[f];
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.y[list[i]];
                let (a, b) = (col[list[i]], col[list[i + 1]]);
                let nl = i + 1;
                if a == b || nl < leaf_min || n - nl < leaf_min {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64
                    + right_sum * right_sum / (n - nl) as f64
                    - base;
                if gain > best.as_ref().map_or(0.0, |c| c.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Candidate {
                        feature: f,
                        cut: i,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
