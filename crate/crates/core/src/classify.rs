//! CART decision trees with Gini impurity and a bootstrap random forest.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::Matrix;
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    /// `⌈√d⌉` candidate features per split.
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            MaxFeatures::Count(m) => m.clamp(1, d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        probs: Vec<f64>,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
    pub config: TreeConfig,
}

fn check_xy(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(invalid("cannot fit a classifier on zero samples"));
    }
    if x.cols() == 0 {
        return Err(invalid("cannot fit a classifier on zero features"));
    }
    if y.len() != x.rows() {
        return Err(invalid(format!("{} labels for {} rows", y.len(), x.rows())));
    }
    if let Some(&c) = y.iter().find(|&&c| c >= n_classes) {
        return Err(invalid(format!("label {c} outside [0, {n_classes})")));
    }
    if !x.is_finite() {
        return Err(invalid("classifier input contains non-finite values"));
    }
    Ok(())
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    cfg: TreeConfig,
    n_try: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut probs = vec![0.0; self.n_classes];
        for &i in idx {
            probs[self.y[i]] += 1.0;
        }
        let n = idx.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    /// Best midpoint split on `feature`, as (weighted child Gini, threshold).
    fn scan(&mut self, idx: &[usize], feature: usize) -> Option<(f64, f64)> {
        self.scratch.clear();
        self.scratch
            .extend(idx.iter().map(|&i| (self.x.row(i)[feature], self.y[i])));
        self.scratch
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = idx.len();
        let mut right = vec![0usize; self.n_classes];
        for &(_, c) in &self.scratch {
            right[c] += 1;
        }
        let mut left = vec![0usize; self.n_classes];
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let (v, c) = self.scratch[i];
            left[c] += 1;
            right[c] -= 1;
            let next = self.scratch[i + 1].0;
            if next <= v {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            let score = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if best.is_none_or(|(s, _)| score < s) {
                let mut t = 0.5 * (v + next);
                // the midpoint of adjacent floats can round up to `next`
                if t >= next {
                    t = v;
                }
                best = Some((score, t));
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let depth_capped = self.cfg.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || idx.len() < self.cfg.min_samples_split {
            return self.leaf(&idx);
        }
        let d = self.x.cols();
        let mut order: Vec<usize> = (0..d).collect();
        if self.n_try < d {
            order.shuffle(rng);
        }
        let mut best: Option<Best> = None;
        let mut tried = 0;
        for &f in &order {
            // keep drawing past the quota only while nothing splits
            if tried >= self.n_try && best.is_some() {
                break;
            }
            tried += 1;
            if let Some((score, threshold)) = self.scan(&idx, f) {
                let better = match &best {
                    None => true,
                    Some(b) => score < b.score || (score == b.score && f < b.feature),
                };
                if better {
                    best = Some(Best {
                        score,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        let Some(best) = best else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x.row(i)[best.feature] <= best.threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }
}

fn fit_on(
    x: &Matrix,
    y: &[usize],
    idx: Vec<usize>,
    n_classes: usize,
    cfg: TreeConfig,
    rng: &mut Rng,
) -> DecisionTree {
    let mut b = Builder {
        x,
        y,
        n_classes,
        cfg,
        n_try: cfg.max_features.resolve(x.cols()),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(idx.len()),
    };
    b.build(idx, 0, rng);
    DecisionTree {
        nodes: b.nodes,
        n_features: x.cols(),
        n_classes,
        config: cfg,
    }
}

/// Greedy Gini CART. Thresholds are midpoints between consecutive distinct
/// values; equal impurity goes to the lower feature index, then the lower threshold.
pub fn fit_tree(x: &Matrix, y: &[usize], n_classes: usize, cfg: TreeConfig, rng: &mut Rng) -> Result<DecisionTree> {
    check_xy(x, y, n_classes)?;
    if cfg.min_samples_split < 2 {
        return Err(invalid("min_samples_split must be at least 2"));
    }
    Ok(fit_on(x, y, (0..x.rows()).collect(), n_classes, cfg, rng))
}

impl DecisionTree {
    pub fn leaf_probs(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(x, self.n_features)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (i, row) in x.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(self.leaf_probs(row));
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

fn check_dim(x: &Matrix, d: usize) -> Result<()> {
    if x.cols() != d {
        return Err(invalid(format!(
            "model expects {d} features, input has {}",
            x.cols()
        )));
    }
    Ok(())
}

/// Per-row argmax; ties go to the lowest class id.
pub fn argmax_rows(p: &Matrix) -> Vec<usize> {
    p.iter_rows()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub config: ForestConfig,
}

/// Tree `t` draws its bootstrap sample and feature subsets from
/// `derive_seed(cfg.seed, t)`, so the result does not depend on thread count.
pub fn fit_forest(x: &Matrix, y: &[usize], n_classes: usize, cfg: ForestConfig) -> Result<RandomForest> {
    check_xy(x, y, n_classes)?;
    if cfg.n_estimators == 0 {
        return Err(invalid("n_estimators must be at least 1"));
    }
    if cfg.min_samples_split < 2 {
        return Err(invalid("min_samples_split must be at least 2"));
    }
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split,
        max_features: cfg.max_features,
    };
    let n = x.rows();
    let trees = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(derive_seed(cfg.seed, t as u64));
            let idx = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_on(x, y, idx, n_classes, tree_cfg, &mut rng)
        })
        .collect();
    Ok(RandomForest {
        trees,
        n_features: x.cols(),
        n_classes,
        config: cfg,
    })
}

impl RandomForest {
    /// Mean of the trees' leaf distributions.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(x, self.n_features)?;
        let k = self.n_classes;
        let scale = 1.0 / self.trees.len() as f64;
        let rows: Vec<Vec<f64>> = x
            .iter_rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| {
                let mut acc = vec![0.0; k];
                for t in &self.trees {
                    for (a, p) in acc.iter_mut().zip(t.leaf_probs(row)) {
                        *a += p;
                    }
                }
                acc.iter_mut().for_each(|a| *a *= scale);
                acc
            })
            .collect();
        Matrix::from_vec(x.rows(), k, rows.concat())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}
