//! Decision-tree family: CART classification trees, random forest and
//! extra-trees ensembles, and a second-order gradient-boosting learner on
//! logistic loss.

use rand::Rng;

use crate::error::{Error, Result};
pub use crate::numeric::hard_labels;
pub(crate) use crate::numeric::sigmoid;
use crate::rng::{rng_from, shuffled_indices, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Self::Gini),
            "entropy" => Ok(Self::Entropy),
            other => Err(Error::Argument(format!("unknown criterion '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gini => "gini",
            Self::Entropy => "entropy",
        }
    }

    fn impurity(&self, n0: usize, n1: usize) -> f64 {
        let n = (n0 + n1) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let p0 = n0 as f64 / n;
        let p1 = n1 as f64 / n;
        match self {
            Self::Gini => 1.0 - p0 * p0 - p1 * p1,
            Self::Entropy => {
                let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
                term(p0) + term(p1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitter {
    /// Scan candidate thresholds at midpoints of consecutive sorted
    /// unique feature values.
    Best,
    /// Draw one uniform threshold in (min, max) per candidate feature
    /// and keep the best-scoring feature (extra-trees style).
    Random,
}

impl Splitter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(Self::Best),
            "random" => Ok(Self::Random),
            other => Err(Error::Argument(format!("unknown splitter '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Best => "best",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// ceil(sqrt(d)) features sampled per node.
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "all" => Ok(Self::All),
            other => Err(Error::Argument(format!("unknown max_features '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sqrt => "sqrt",
            Self::All => "all",
        }
    }

    fn count(&self, d: usize) -> usize {
        match self {
            Self::All => d,
            Self::Sqrt => (d as f64).sqrt().ceil() as usize,
        }
    }
}

/// Per-tree growing parameters (the subset of [`ForestConfig`] a single
/// tree needs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// 0 means unlimited depth.
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
    pub splitter: Splitter,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 0,
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: Criterion::Gini,
            splitter: Splitter::Best,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
    pub splitter: Splitter,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl ForestConfig {
    /// Random-forest preset: bootstrapped bags, best-split search.
    pub fn random_forest(n_estimators: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            n_estimators,
            max_depth,
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: Criterion::Gini,
            splitter: Splitter::Best,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            seed,
        }
    }

    /// Extra-trees preset: full sample, random thresholds.
    pub fn extra_trees(n_estimators: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            n_estimators,
            max_depth,
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: Criterion::Entropy,
            splitter: Splitter::Random,
            bootstrap: false,
            max_features: MaxFeatures::Sqrt,
            seed,
        }
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            criterion: self.criterion,
            splitter: self.splitter,
            max_features: self.max_features,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Argument("n_estimators must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Argument("min_samples_split must be >= 2".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Argument("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

/// A classification tree node. Internal nodes route `x[feature] <= threshold`
/// to the left child.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// (negative, positive) training counts reaching this leaf.
        counts: (usize, usize),
        /// Positive-class frequency.
        value: f64,
    },
}

impl TreeNode {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict_proba(row)
                } else {
                    right.predict_proba(row)
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn for_each_leaf(&self, f: &mut impl FnMut(&(usize, usize))) {
        match self {
            TreeNode::Leaf { counts, .. } => f(counts),
            TreeNode::Internal { left, right, .. } => {
                left.for_each_leaf(f);
                right.for_each_leaf(f);
            }
        }
    }
}

/// One candidate split and its impurity gain.
#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn check_matrix(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() || x[0].is_empty() {
        return Err(Error::Argument("empty feature matrix".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Argument("ragged feature matrix".into()));
    }
    Ok(d)
}

fn class_counts(y: &[u8], indices: &[usize]) -> (usize, usize) {
    let pos = indices.iter().filter(|&&i| y[i] == 1).count();
    (indices.len() - pos, pos)
}

/// Gain of splitting `indices` at (feature, threshold); `None` when a side
/// would fall below `min_samples_leaf`.
fn split_gain(
    x: &[Vec<f64>],
    y: &[u8],
    indices: &[usize],
    feature: usize,
    threshold: f64,
    params: &TreeParams,
    parent_impurity: f64,
) -> Option<f64> {
    let mut left = (0usize, 0usize);
    let mut right = (0usize, 0usize);
    for &i in indices {
        let side = if x[i][feature] <= threshold {
            &mut left
        } else {
            &mut right
        };
        if y[i] == 1 {
            side.1 += 1;
        } else {
            side.0 += 1;
        }
    }
    let n_left = left.0 + left.1;
    let n_right = right.0 + right.1;
    if n_left < params.min_samples_leaf || n_right < params.min_samples_leaf {
        return None;
    }
    let n = indices.len() as f64;
    let weighted = (n_left as f64 / n) * params.criterion.impurity(left.0, left.1)
        + (n_right as f64 / n) * params.criterion.impurity(right.0, right.1);
    Some(parent_impurity - weighted)
}

/// Finds the best split over a feature subset. Ties in gain break to the
/// lowest feature index, then the lowest threshold; a split must improve
/// impurity strictly to be accepted.
fn find_split(
    x: &[Vec<f64>],
    y: &[u8],
    indices: &[usize],
    params: &TreeParams,
    rng: &mut SeededRng,
) -> Option<Split> {
    let d = x[0].len();
    let n_try = params.max_features.count(d).clamp(1, d);
    let features: Vec<usize> = if n_try >= d {
        (0..d).collect()
    } else {
        let mut order = shuffled_indices(d, rng);
        order.truncate(n_try);
        order.sort_unstable();
        order
    };

    let (n0, n1) = class_counts(y, indices);
    let parent_impurity = params.criterion.impurity(n0, n1);
    let mut best: Option<Split> = None;
    let mut consider = |candidate: Split| {
        if candidate.gain > 0.0 && best.is_none_or(|b| candidate.gain > b.gain) {
            best = Some(candidate);
        }
    };

    for &feature in &features {
        match params.splitter {
            Splitter::Best => {
                let mut values: Vec<f64> = indices.iter().map(|&i| x[i][feature]).collect();
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                values.dedup();
                for pair in values.windows(2) {
                    let threshold = (pair[0] + pair[1]) / 2.0;
                    if let Some(gain) =
                        split_gain(x, y, indices, feature, threshold, params, parent_impurity)
                    {
                        consider(Split {
                            feature,
                            threshold,
                            gain,
                        });
                    }
                }
            }
            Splitter::Random => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &i in indices {
                    lo = lo.min(x[i][feature]);
                    hi = hi.max(x[i][feature]);
                }
                if lo >= hi {
                    continue; // constant feature in this node
                }
                let threshold = rng.gen_range(lo..hi);
                if let Some(gain) =
                    split_gain(x, y, indices, feature, threshold, params, parent_impurity)
                {
                    consider(Split {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
    }
    best
}

fn grow(
    x: &[Vec<f64>],
    y: &[u8],
    indices: &[usize],
    depth: usize,
    params: &TreeParams,
    rng: &mut SeededRng,
) -> TreeNode {
    let (n0, n1) = class_counts(y, indices);
    let leaf = || TreeNode::Leaf {
        counts: (n0, n1),
        value: n1 as f64 / (n0 + n1) as f64,
    };
    if n0 == 0 || n1 == 0 {
        return leaf();
    }
    if params.max_depth > 0 && depth >= params.max_depth {
        return leaf();
    }
    if indices.len() < params.min_samples_split {
        return leaf();
    }
    let Some(split) = find_split(x, y, indices, params, rng) else {
        return leaf();
    };
    let (mut left_idx, mut right_idx) = (Vec::new(), Vec::new());
    for &i in indices {
        if x[i][split.feature] <= split.threshold {
            left_idx.push(i);
        } else {
            right_idx.push(i);
        }
    }
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, y, &left_idx, depth + 1, params, rng)),
        right: Box::new(grow(x, y, &right_idx, depth + 1, params, rng)),
    }
}

/// Fits a single CART tree by greedy recursive partitioning.
pub fn fit_tree(x: &[Vec<f64>], y: &[u8], params: &TreeParams, seed: u64) -> Result<TreeNode> {
    check_matrix(x, y)?;
    let mut rng = rng_from(seed);
    let indices: Vec<usize> = (0..x.len()).collect();
    Ok(grow(x, y, &indices, 0, params, &mut rng))
}

/// Exactly n draws with replacement.
pub(crate) fn bootstrap_indices(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub config: ForestConfig,
    pub n_features: usize,
}

impl ForestModel {
    /// Mean of per-tree leaf positive frequencies.
    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_predict_input(x, self.n_features)?;
        Ok(x.iter().map(|r| self.predict_proba_row(r)).collect())
    }

    /// Hard labels; a tied probability of exactly 0.5 resolves to class 0.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(hard_labels(&self.predict_proba(x)?))
    }
}

fn check_predict_input(x: &[Vec<f64>], n_features: usize) -> Result<()> {
    if let Some(row) = x.iter().find(|r| r.len() != n_features) {
        return Err(Error::Argument(format!(
            "expected {} features, got {}",
            n_features,
            row.len()
        )));
    }
    Ok(())
}

/// Fits `n_estimators` trees with per-tree seeds `seed + tree_index`, so
/// results are independent of fitting order.
pub fn fit_forest(x: &[Vec<f64>], y: &[u8], config: &ForestConfig) -> Result<ForestModel> {
    let d = check_matrix(x, y)?;
    config.validate()?;
    if y.iter().all(|&v| v == 0) || y.iter().all(|&v| v == 1) {
        return Err(Error::Validation(
            "forest training needs both classes".into(),
        ));
    }
    let params = config.tree_params();
    let mut trees = Vec::with_capacity(config.n_estimators);
    for t in 0..config.n_estimators {
        let mut rng = rng_from(config.seed.wrapping_add(t as u64));
        let indices: Vec<usize> = if config.bootstrap {
            bootstrap_indices(x.len(), &mut rng)
        } else {
            (0..x.len()).collect()
        };
        trees.push(grow(x, y, &indices, 0, &params, &mut rng));
    }
    Ok(ForestModel {
        trees,
        config: config.clone(),
        n_features: d,
    })
}

// ---- gradient boosting ------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GbmConfig {
    pub iterations: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        // boosting-round count and depth follow the stack's base-learner slots
        Self {
            iterations: 10,
            depth: 3,
            learning_rate: 0.1,
            l2_leaf_reg: 1.0,
            seed: 42,
        }
    }
}

impl GbmConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Argument("iterations must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Argument("learning_rate must be > 0".into()));
        }
        if self.l2_leaf_reg < 0.0 {
            return Err(Error::Argument("l2_leaf_reg must be >= 0".into()));
        }
        Ok(())
    }
}

/// Regression tree node for boosting stages.
#[derive(Debug, Clone, PartialEq)]
pub enum RegNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
    Leaf {
        value: f64,
    },
}

impl RegNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            RegNode::Leaf { value } => *value,
            RegNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            RegNode::Leaf { .. } => 1,
            RegNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }
}

/// Variance-gain split search on gradient targets; Newton leaf values
/// `-sum(g) / (sum(h) + l2)`.
fn grow_reg(
    x: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    indices: &[usize],
    depth: usize,
    max_depth: usize,
    l2: f64,
) -> RegNode {
    let leaf = |idx: &[usize]| {
        let g: f64 = idx.iter().map(|&i| grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| hess[i]).sum();
        RegNode::Leaf {
            value: -g / (h + l2),
        }
    };
    if depth >= max_depth || indices.len() < 2 {
        return leaf(indices);
    }
    let sse = |idx: &[usize]| -> f64 {
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| grad[i]).sum();
        let sq: f64 = idx.iter().map(|&i| grad[i] * grad[i]).sum();
        sq - sum * sum / n
    };
    let parent_sse = sse(indices);
    let d = x[0].len();
    let mut best: Option<Split> = None;
    #[allow(clippy::needless_range_loop)] // feature indexes matrix columns
    for feature in 0..d {
        let mut values: Vec<f64> = indices.iter().map(|&i| x[i][feature]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &i in indices {
                if x[i][feature] <= threshold {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let gain = parent_sse - sse(&left) - sse(&right);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(Split {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    let Some(split) = best else {
        return leaf(indices);
    };
    let (mut left_idx, mut right_idx) = (Vec::new(), Vec::new());
    for &i in indices {
        if x[i][split.feature] <= split.threshold {
            left_idx.push(i);
        } else {
            right_idx.push(i);
        }
    }
    RegNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow_reg(x, grad, hess, &left_idx, depth + 1, max_depth, l2)),
        right: Box::new(grow_reg(
            x, grad, hess, &right_idx, depth + 1, max_depth, l2,
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    /// Prior log-odds log(p/(1-p)) of the training base rate.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegNode>,
    pub n_features: usize,
}

impl GbmModel {
    pub fn predict_margin_row(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.predict_margin_row(row)).clamp(1e-12, 1.0 - 1e-12)
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_predict_input(x, self.n_features)?;
        Ok(x.iter().map(|r| self.predict_proba_row(r)).collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(hard_labels(&self.predict_proba(x)?))
    }
}

/// Logistic-loss boosting: start at the prior log-odds, then per round fit
/// a depth-limited regression tree to the gradients `p - y` with leaf
/// values from the second-order update.
pub fn fit_gbm(x: &[Vec<f64>], y: &[u8], config: &GbmConfig) -> Result<GbmModel> {
    let d = check_matrix(x, y)?;
    config.validate()?;
    let n = x.len();
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::Validation("gbm training needs both classes".into()));
    }
    let p_bar = pos as f64 / n as f64;
    let base_score = (p_bar / (1.0 - p_bar)).ln();

    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(config.iterations);
    let indices: Vec<usize> = (0..n).collect();
    for _ in 0..config.iterations {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let tree = grow_reg(
            x,
            &grad,
            &hess,
            &indices,
            0,
            config.depth,
            config.l2_leaf_reg,
        );
        for i in 0..n {
            scores[i] += config.learning_rate * tree.predict(&x[i]);
        }
        trees.push(tree);
    }
    Ok(GbmModel {
        base_score,
        learning_rate: config.learning_rate,
        trees,
        n_features: d,
    })
}

/// Mean binary log-loss of probabilities against labels.
pub fn log_loss(probs: &[f64], y: &[u8]) -> f64 {
    let mut total = 0.0;
    for (&p, &t) in probs.iter().zip(y) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        total -= if t == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / y.len() as f64
}
