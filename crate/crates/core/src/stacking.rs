//! Two-level stacking ensemble: four tree-family base learners feed a
//! logistic-regression meta-learner through out-of-fold predictions.

use crate::data::kfold_indices;
use crate::error::{Error, Result};
use crate::trees::{
    fit_forest, fit_gbm, hard_labels, sigmoid, ForestConfig, ForestModel, GbmConfig, GbmModel,
};

/// Plain logistic regression trained by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations_run: usize,
    pub final_grad_norm: f64,
}

impl LogisticModel {
    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        let z = self.bias
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>();
        sigmoid(z).clamp(1e-12, 1.0 - 1e-12)
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(row) = x.iter().find(|r| r.len() != self.weights.len()) {
            return Err(Error::Argument(format!(
                "expected {} features, got {}",
                self.weights.len(),
                row.len()
            )));
        }
        Ok(x.iter().map(|r| self.predict_proba_row(r)).collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(hard_labels(&self.predict_proba(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 5000,
            tol: 1e-6,
            l2: 1e-4,
        }
    }
}

/// L2-regularized mean log-loss; the bias is not penalized.
#[cfg(test)]
pub(crate) fn logistic_loss(x: &[Vec<f64>], y: &[u8], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let n = x.len() as f64;
    let mut total = 0.0;
    for (row, &t) in x.iter().zip(y) {
        let z = bias + weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
        let p = sigmoid(z).clamp(1e-12, 1.0 - 1e-12);
        total -= if t == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / n + l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Full-batch gradient descent from zero init; stops when the gradient's
/// max-norm falls below `tol` or `max_iters` is reached.
pub fn fit_logistic(x: &[Vec<f64>], y: &[u8], config: &LogisticConfig) -> Result<LogisticModel> {
    if x.is_empty() || x[0].is_empty() {
        return Err(Error::Argument("empty feature matrix".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Argument("row/label count mismatch".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Validation(
            "logistic training needs both classes".into(),
        ));
    }
    let d = x[0].len();
    let n = x.len() as f64;
    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut iterations_run = 0;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..config.max_iters {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (row, &t) in x.iter().zip(y) {
            let z = bias + weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
            let err = sigmoid(z) - t as f64;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += err * v;
            }
            gb += err;
        }
        for (g, w) in gw.iter_mut().zip(&weights) {
            *g = *g / n + 2.0 * config.l2 * w;
        }
        gb /= n;
        grad_norm = gw
            .iter()
            .chain(std::iter::once(&gb))
            .fold(0.0_f64, |m, g| m.max(g.abs()));
        if grad_norm < config.tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * gb;
        iterations_run += 1;
    }
    Ok(LogisticModel {
        weights,
        bias,
        iterations_run,
        final_grad_norm: grad_norm,
    })
}

/// One slot in the stack's base-learner list.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseLearnerConfig {
    Forest(ForestConfig),
    Gbm(GbmConfig),
}

impl BaseLearnerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Forest(_) => "forest",
            Self::Gbm(_) => "gbm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub bases: Vec<BaseLearnerConfig>,
    pub meta: LogisticConfig,
    pub cv_folds: usize,
    pub passthrough: bool,
    pub seed: u64,
}

impl StackConfig {
    /// Default four-slot stack: random forest, extra trees, and two
    /// gradient-boosting learners, 10 internal folds.
    pub fn default_four(seed: u64) -> Self {
        Self {
            bases: vec![
                BaseLearnerConfig::Forest(ForestConfig::random_forest(10, 3, seed)),
                BaseLearnerConfig::Forest(ForestConfig::extra_trees(10, 3, seed)),
                BaseLearnerConfig::Gbm(GbmConfig {
                    iterations: 10,
                    depth: 3,
                    learning_rate: 0.3,
                    l2_leaf_reg: 1.0,
                    seed,
                }),
                BaseLearnerConfig::Gbm(GbmConfig {
                    iterations: 10,
                    depth: 3,
                    learning_rate: 0.1,
                    l2_leaf_reg: 3.0,
                    seed,
                }),
            ],
            meta: LogisticConfig::default(),
            cv_folds: 10,
            passthrough: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseModel {
    Forest(ForestModel),
    Gbm(GbmModel),
}

impl BaseModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Self::Forest(m) => m.predict_proba(x),
            Self::Gbm(m) => m.predict_proba(x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Forest(_) => "forest",
            Self::Gbm(_) => "gbm",
        }
    }
}

fn fit_base(config: &BaseLearnerConfig, x: &[Vec<f64>], y: &[u8]) -> Result<BaseModel> {
    Ok(match config {
        BaseLearnerConfig::Forest(c) => BaseModel::Forest(fit_forest(x, y, c)?),
        BaseLearnerConfig::Gbm(c) => BaseModel::Gbm(fit_gbm(x, y, c)?),
    })
}

/// Out-of-fold bookkeeping kept as training metadata: which internal fold
/// held each row out, and the meta-learner's input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OofDetail {
    pub fold_of_row: Vec<usize>,
    /// n x n_bases out-of-fold probabilities.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackModel {
    pub bases: Vec<BaseModel>,
    pub meta: LogisticModel,
    pub cv_folds: usize,
    pub seed: u64,
    pub n_features: usize,
    pub oof: OofDetail,
}

impl StackModel {
    /// Base probabilities -> meta logistic -> final probability.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut meta_rows = vec![Vec::with_capacity(self.bases.len()); x.len()];
        for base in &self.bases {
            let col = base.predict_proba(x)?;
            for (row, p) in meta_rows.iter_mut().zip(col) {
                row.push(p);
            }
        }
        self.meta.predict_proba(&meta_rows)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(hard_labels(&self.predict_proba(x)?))
    }
}

/// Trains the stack: stratified internal folds produce one out-of-fold
/// probability per (row, base learner); the meta-learner is fit on that
/// matrix, then every base learner is refit on all rows for inference.
pub fn fit_stack(x: &[Vec<f64>], y: &[u8], config: &StackConfig) -> Result<StackModel> {
    if config.bases.is_empty() {
        return Err(Error::Argument("stack needs at least one base learner".into()));
    }
    if config.cv_folds < 2 {
        return Err(Error::Argument("cv_folds must be >= 2".into()));
    }
    if config.passthrough {
        return Err(Error::Argument(
            "passthrough=true is unsupported; the meta-learner consumes base probabilities only"
                .into(),
        ));
    }
    if x.len() < config.cv_folds {
        return Err(Error::Validation(format!(
            "{} rows cannot fill {} folds",
            x.len(),
            config.cv_folds
        )));
    }
    let n = x.len();
    let folds = kfold_indices(n, config.cv_folds, Some(y), config.seed)?;
    let mut fold_of_row = vec![0usize; n];
    for (f, (_, test)) in folds.iter().enumerate() {
        for &i in test {
            fold_of_row[i] = f;
        }
    }

    let mut matrix = vec![vec![f64::NAN; config.bases.len()]; n];
    for (b, base_cfg) in config.bases.iter().enumerate() {
        for (train_idx, test_idx) in &folds {
            let x_train: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
            let y_train: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
            if y_train.iter().all(|&v| v == y_train[0]) {
                return Err(Error::Validation(
                    "internal fold has a single class; stratification failed".into(),
                ));
            }
            let model = fit_base(base_cfg, &x_train, &y_train)?;
            let x_test: Vec<Vec<f64>> = test_idx.iter().map(|&i| x[i].clone()).collect();
            let preds = model.predict_proba(&x_test)?;
            for (&i, p) in test_idx.iter().zip(preds) {
                matrix[i][b] = p;
            }
        }
    }
    debug_assert!(matrix.iter().flatten().all(|p| p.is_finite()));

    let meta = fit_logistic(&matrix, y, &config.meta)?;
    let mut bases = Vec::with_capacity(config.bases.len());
    for base_cfg in &config.bases {
        bases.push(fit_base(base_cfg, x, y)?);
    }
    Ok(StackModel {
        bases,
        meta,
        cv_folds: config.cv_folds,
        seed: config.seed,
        n_features: x[0].len(),
        oof: OofDetail {
            fold_of_row,
            matrix,
        },
    })
}
