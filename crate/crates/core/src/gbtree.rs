//! Second-order gradient-boosted regression trees.
//!
//! Each round fits a tree to the gradient statistics of the squared-error
//! loss at the current predictions (`g = ŷ - y`, `h = 1`) and adds it with
//! shrinkage. Trees are grown by exact greedy search over every midpoint
//! between distinct sorted feature values. The regularized objective is
//!
//! ```text
//! obj = Σ_i (y_i - ŷ_i)² + Σ_t (γ·T_t + ½·λ·Σ_leaves ω²)
//! ```
//!
//! which gives the closed-form leaf weight `ω = -G / (H + λ)` and split gain
//! `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) - (G_L+G_R)²/(H_L+H_R+λ)] - γ`. With an
//! L1 term `α`, gradient sums are soft-thresholded first.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {needed} rows, got {got}")]
    Data { needed: usize, got: usize },
    #[error("degenerate leaf: hessian sum {hess} plus lambda {lambda} is zero")]
    DegenerateDenominator { hess: f64, lambda: f64 },
    #[error("internal error: {0}")]
    Internal(&'static str),
    #[error("model (de)serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Booster hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    /// Minimum gain for a split to be kept (per-leaf penalty γ).
    pub gamma: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
    /// L2 penalty λ on leaf weights.
    pub lambda: f64,
    /// L1 penalty α on leaf weights.
    pub alpha: f64,
    /// Accepted for configuration compatibility; has no effect on regression.
    pub scale_pos_weight: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.3,
            max_depth: 6,
            min_child_weight: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            colsample_bylevel: 1.0,
            lambda: 1.0,
            alpha: 0.0,
            scale_pos_weight: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<(), GbtError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(GbtError::Parameter(format!(
                    "{name} must be in (0, 1], got {v}"
                )))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(GbtError::Parameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        };
        if self.n_estimators == 0 {
            return Err(GbtError::Parameter(
                "n_estimators must be at least 1".into(),
            ));
        }
        unit("learning_rate", self.learning_rate)?;
        unit("subsample", self.subsample)?;
        unit("colsample_bytree", self.colsample_bytree)?;
        unit("colsample_bylevel", self.colsample_bylevel)?;
        non_negative("min_child_weight", self.min_child_weight)?;
        non_negative("gamma", self.gamma)?;
        non_negative("lambda", self.lambda)?;
        non_negative("alpha", self.alpha)?;
        if !(self.scale_pos_weight > 0.0) {
            return Err(GbtError::Parameter(
                "scale_pos_weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self, GbtError> {
        if data.len() != n_rows * n_cols {
            return Err(GbtError::Shape(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GbtError::Shape("features must be finite".into()));
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GbtError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(GbtError::Shape(format!(
                "row {bad} has {} columns, expected {n_cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), rows.len(), n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-column matrix has no useful rows anyway
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }
}

/// First- and second-order loss derivatives per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl GradHess {
    /// Squared-error statistics: `g = ŷ - y`, `h = 1`.
    pub fn squared_error(predictions: &[f64], targets: &[f64]) -> Self {
        Self {
            grad: predictions
                .iter()
                .zip(targets)
                .map(|(p, y)| p - y)
                .collect(),
            hess: vec![1.0; targets.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad.is_empty()
    }

    fn validate(&self) -> Result<(), GbtError> {
        if self.grad.len() != self.hess.len() {
            return Err(GbtError::Shape(format!(
                "{} gradients but {} hessians",
                self.grad.len(),
                self.hess.len()
            )));
        }
        if self.hess.iter().any(|h| !(*h >= 0.0)) {
            return Err(GbtError::Shape("hessians must be non-negative".into()));
        }
        Ok(())
    }
}

/// A regression tree. Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_weights(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |w| out.push(w));
        out
    }

    fn visit_leaves(&self, f: &mut impl FnMut(f64)) {
        match self {
            TreeNode::Leaf { weight } => f(*weight),
            TreeNode::Split { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    /// Index of the leaf a row lands in, counting leaves left to right.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return offset,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if row[*feature] < *threshold {
                        node = left;
                    } else {
                        offset += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }

    fn scale_leaves(&mut self, factor: f64) {
        match self {
            TreeNode::Leaf { weight } => *weight *= factor,
            TreeNode::Split { left, right, .. } => {
                left.scale_leaves(factor);
                right.scale_leaves(factor);
            }
        }
    }
}

/// Additive tree model: `base_score + learning_rate · Σ_t tree_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    pub fn predict(&self, row: &[f64]) -> Result<f64, GbtError> {
        self.predict_with_trees(row, self.trees.len())
    }

    /// Prediction using only the first `n_trees` trees.
    pub fn predict_with_trees(&self, row: &[f64], n_trees: usize) -> Result<f64, GbtError> {
        if row.len() != self.n_features {
            return Err(GbtError::Shape(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        let sum: f64 = self
            .trees
            .iter()
            .take(n_trees)
            .map(|t| t.predict(row))
            .sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    pub fn predict_matrix(&self, features: &FeatureMatrix) -> Result<Vec<f64>, GbtError> {
        if features.n_cols() != self.n_features {
            return Err(GbtError::Shape(format!(
                "matrix has {} features, model expects {}",
                features.n_cols(),
                self.n_features
            )));
        }
        (0..features.n_rows())
            .map(|i| self.predict(features.row(i)))
            .collect()
    }

    /// The same predictions expressed with learning rate 1 and every leaf
    /// weight pre-multiplied by the original learning rate.
    pub fn with_unit_learning_rate(&self) -> TreeEnsemble {
        let mut out = self.clone();
        for tree in &mut out.trees {
            tree.scale_leaves(self.learning_rate);
        }
        out.learning_rate = 1.0;
        out
    }

    pub fn to_json(&self) -> Result<String, GbtError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, GbtError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        g
    } else {
        g.signum() * (g.abs() - alpha).max(0.0)
    }
}

/// Optimal leaf weight `-T_α(G) / (H + λ)`.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64, alpha: f64) -> Result<f64, GbtError> {
    let denom = hess_sum + lambda;
    if denom == 0.0 {
        return Err(GbtError::DegenerateDenominator {
            hess: hess_sum,
            lambda,
        });
    }
    let g = soft_threshold(grad_sum, alpha);
    if g == 0.0 {
        return Ok(0.0);
    }
    Ok(-g / denom)
}

fn leaf_score(grad_sum: f64, hess_sum: f64, lambda: f64, alpha: f64) -> f64 {
    let g = soft_threshold(grad_sum, alpha);
    let denom = hess_sum + lambda;
    if denom == 0.0 {
        0.0
    } else {
        g * g / denom
    }
}

/// Objective reduction of a split net of the `gamma` penalty.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    split_gain_l1(gl, hl, gr, hr, lambda, 0.0, gamma)
}

/// [`split_gain`] with soft-thresholded gradient sums.
pub fn split_gain_l1(
    gl: f64,
    hl: f64,
    gr: f64,
    hr: f64,
    lambda: f64,
    alpha: f64,
    gamma: f64,
) -> f64 {
    0.5 * (leaf_score(gl, hl, lambda, alpha) + leaf_score(gr, hr, lambda, alpha)
        - leaf_score(gl + gr, hl + hr, lambda, alpha))
        - gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn sample_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n.max(1))
}

/// Sorted subset of `pool` of the requested fraction.
fn sample_subset(pool: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if fraction >= 1.0 || pool.is_empty() {
        return pool.to_vec();
    }
    let k = sample_count(fraction, pool.len());
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

struct Grower<'a> {
    features: &'a FeatureMatrix,
    gh: &'a GradHess,
    params: &'a GbtParams,
    level_features: Vec<Vec<usize>>,
}

impl Grower<'_> {
    fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.gh.grad[r], h + self.gh.hess[r])
        })
    }

    fn best_split(&self, rows: &[usize], depth: usize) -> Option<SplitCandidate> {
        let p = self.params;
        let (g_total, h_total) = self.sums(rows);
        let mut best: Option<SplitCandidate> = None;
        let mut order = rows.to_vec();
        for &f in &self.level_features[depth] {
            order.sort_by(|&a, &b| {
                self.features
                    .get(a, f)
                    .total_cmp(&self.features.get(b, f))
                    .then(a.cmp(&b))
            });
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let r = order[w];
                gl += self.gh.grad[r];
                hl += self.gh.hess[r];
                let lo = self.features.get(r, f);
                let hi = self.features.get(order[w + 1], f);
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g_total - gl, h_total - hl);
                if hl < p.min_child_weight || hr < p.min_child_weight {
                    continue;
                }
                let gain = split_gain_l1(gl, hl, gr, hr, p.lambda, p.alpha, p.gamma);
                if best.is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    // Adjacent floats: fall back to the upper value so `lo` still goes left.
                    let threshold = if mid > lo { mid } else { hi };
                    best = Some(SplitCandidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 0.0)
    }

    fn grow(&self, rows: &[usize], depth: usize) -> Result<TreeNode, GbtError> {
        if rows.is_empty() {
            return Err(GbtError::Internal("empty node"));
        }
        if depth < self.params.max_depth && rows.len() > 1 {
            if let Some(split) = self.best_split(rows, depth) {
                let (left, right): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| self.features.get(r, split.feature) < split.threshold);
                return Ok(TreeNode::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: Box::new(self.grow(&left, depth + 1)?),
                    right: Box::new(self.grow(&right, depth + 1)?),
                });
            }
        }
        let (g, h) = self.sums(rows);
        Ok(TreeNode::Leaf {
            weight: leaf_weight(g, h, self.params.lambda, self.params.alpha)?,
        })
    }
}

/// Grows one tree on every row of `features`.
pub fn fit_tree(
    features: &FeatureMatrix,
    gh: &GradHess,
    params: &GbtParams,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode, GbtError> {
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    fit_tree_on_rows(features, gh, &rows, params, rng)
}

/// Grows one tree on the given subset of rows. Column sampling per tree and
/// per level draws from `rng`.
pub fn fit_tree_on_rows(
    features: &FeatureMatrix,
    gh: &GradHess,
    rows: &[usize],
    params: &GbtParams,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode, GbtError> {
    gh.validate()?;
    if gh.len() != features.n_rows() {
        return Err(GbtError::Shape(format!(
            "{} gradient rows for {} feature rows",
            gh.len(),
            features.n_rows()
        )));
    }
    if rows.is_empty() {
        return Err(GbtError::Data { needed: 1, got: 0 });
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= features.n_rows()) {
        return Err(GbtError::Shape(format!("row index {bad} out of range")));
    }
    let all: Vec<usize> = (0..features.n_cols()).collect();
    let tree_features = sample_subset(&all, params.colsample_bytree, rng);
    let level_features = (0..params.max_depth.max(1))
        .map(|_| sample_subset(&tree_features, params.colsample_bylevel, rng))
        .collect();
    Grower {
        features,
        gh,
        params,
        level_features,
    }
    .grow(rows, 0)
}

/// Boosts `params.n_estimators` trees from a mean-target start.
pub fn fit(
    features: &FeatureMatrix,
    targets: &[f64],
    params: &GbtParams,
) -> Result<TreeEnsemble, GbtError> {
    params.validate()?;
    let n = features.n_rows();
    if n < 2 {
        return Err(GbtError::Data { needed: 2, got: n });
    }
    if targets.len() != n {
        return Err(GbtError::Shape(format!(
            "{} targets for {n} rows",
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(GbtError::Shape("targets must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let base_score = targets.iter().sum::<f64>() / n as f64;
    let mut predictions = vec![base_score; n];
    let all_rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let gh = GradHess::squared_error(&predictions, targets);
        let rows = sample_subset(&all_rows, params.subsample, &mut rng);
        let tree = fit_tree_on_rows(features, &gh, &rows, params, &mut rng)?;
        for (i, p) in predictions.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(features.row(i));
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        base_score,
        learning_rate: params.learning_rate,
        n_features: features.n_cols(),
        trees,
    })
}

/// Σ(y - ŷ)² plus γ·T + ½λ‖ω‖² summed over every tree.
pub fn objective_value(
    model: &TreeEnsemble,
    features: &FeatureMatrix,
    targets: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<f64, GbtError> {
    if targets.len() != features.n_rows() {
        return Err(GbtError::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            features.n_rows()
        )));
    }
    let loss: f64 = model
        .predict_matrix(features)?
        .iter()
        .zip(targets)
        .map(|(p, y)| (y - p).powi(2))
        .sum();
    let penalty: f64 = model
        .trees
        .iter()
        .map(|t| {
            let w = t.leaf_weights();
            gamma * w.len() as f64 + 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>()
        })
        .sum();
    Ok(loss + penalty)
}
