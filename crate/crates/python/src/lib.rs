//! Python bindings: datasets, the stacking classifier, metrics, exact
//! Shapley attribution, and a desk-scale federated run.
//!
//! Build with `cargo build -p foglab-py`, then rename the produced
//! `libfoglab.so` to `foglab.so` somewhere on `sys.path` (see
//! python/smoke_test.py).

// pyo3's generated glue trips this lint
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use foglab_core::data::{
    self, ColumnMap, ImuDataset, LabelRule, SplitSpec, SyntheticConfig, FEATURE_NAMES,
};
use foglab_core::eval;
use foglab_core::explain;
use foglab_core::fed;
use foglab_core::hard_labels;
use foglab_core::model_io;
use foglab_core::nn;
use foglab_core::stacking;

fn to_py_err(e: foglab_core::Error) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// A labeled IMU dataset.
#[pyclass]
#[derive(Clone)]
struct Dataset {
    inner: ImuDataset,
}

#[pymethods]
impl Dataset {
    /// Reproducible synthetic fixture; see the library docs for the
    /// episode model.
    #[staticmethod]
    #[pyo3(signature = (users=3, samples_per_user=2000, positive_fraction=0.5, shift=2.5, heterogeneity=0.5, seed=42))]
    fn synthetic(
        users: usize,
        samples_per_user: usize,
        positive_fraction: f64,
        shift: f64,
        heterogeneity: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let config = SyntheticConfig {
            users,
            samples_per_user,
            positive_fraction,
            shift,
            heterogeneity,
            seed,
        };
        Ok(Self {
            inner: data::generate_synthetic(&config).map_err(to_py_err)?,
        })
    }

    /// Loads a canonical-layout CSV (columns time_s..gyr_si,label[,user_id]).
    #[staticmethod]
    #[pyo3(signature = (path, with_user_column=true))]
    fn load_csv(path: &str, with_user_column: bool) -> PyResult<Self> {
        let mut columns = ColumnMap::canonical();
        if !with_user_column {
            columns.user = None;
        }
        let (inner, _) = data::load_csv(path, &columns).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        data::write_csv(&self.inner, path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// (negatives, positives).
    fn class_counts(&self) -> (usize, usize) {
        self.inner.class_counts()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.feature_matrix()
    }

    #[staticmethod]
    fn feature_names() -> Vec<String> {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn user_counts(&self) -> std::collections::BTreeMap<u32, usize> {
        self.inner.user_counts().into_iter().collect()
    }

    /// Randomly undersamples the majority class to the target ratio.
    #[pyo3(signature = (target_ratio=1.0, seed=42))]
    fn balance(&self, target_ratio: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: data::downsample_balance(&self.inner, target_ratio, seed)
                .map_err(to_py_err)?,
        })
    }

    /// Stratified (or plain) train/test split.
    #[pyo3(signature = (test_fraction=0.2, seed=42, stratified=true))]
    fn split(&self, test_fraction: f64, seed: u64, stratified: bool) -> PyResult<(Self, Self)> {
        let spec = SplitSpec::new(test_fraction, seed, stratified).map_err(to_py_err)?;
        let (train, test) = self.inner.split(&spec).map_err(to_py_err)?;
        Ok((Self { inner: train }, Self { inner: test }))
    }
}

/// The two-level stacking classifier (four tree-family base learners,
/// logistic meta-learner on out-of-fold probabilities).
#[pyclass]
struct StackModel {
    inner: stacking::StackModel,
}

#[pymethods]
impl StackModel {
    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_proba(&x).map_err(to_py_err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        self.inner.predict(&x).map_err(to_py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, model_io::write_stack(&self.inner))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(Self {
            inner: model_io::read_stack(&text).map_err(to_py_err)?,
        })
    }
}

/// Fits the default four-learner stack.
#[pyfunction]
#[pyo3(signature = (x, y, seed=42, cv_folds=10))]
fn train_stack(x: Vec<Vec<f64>>, y: Vec<u8>, seed: u64, cv_folds: usize) -> PyResult<StackModel> {
    let config = stacking::StackConfig {
        cv_folds,
        ..stacking::StackConfig::default_four(seed)
    };
    Ok(StackModel {
        inner: stacking::fit_stack(&x, &y, &config).map_err(to_py_err)?,
    })
}

/// Per-class precision/recall/F1 plus accuracy and averages, as a dict.
#[pyfunction]
fn classification_report(
    py: Python<'_>,
    pred: Vec<u8>,
    truth: Vec<u8>,
) -> PyResult<Py<PyDict>> {
    let report = eval::classification_report(&pred, &truth, None).map_err(to_py_err)?;
    let dict = PyDict::new_bound(py);
    dict.set_item("accuracy", report.accuracy)?;
    for (name, c) in [("class0", &report.class0), ("class1", &report.class1)] {
        let sub = PyDict::new_bound(py);
        sub.set_item("precision", c.precision)?;
        sub.set_item("recall", c.recall)?;
        sub.set_item("f1", c.f1)?;
        sub.set_item("support", c.support)?;
        dict.set_item(name, sub)?;
    }
    dict.set_item("macro_f1", report.macro_avg.f1)?;
    dict.set_item("weighted_f1", report.weighted_avg.f1)?;
    Ok(dict.into())
}

/// Rank-statistic ROC-AUC with half-credit ties.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, truth: Vec<u8>) -> PyResult<f64> {
    eval::roc_auc(&scores, &truth).map_err(to_py_err)
}

/// Exact Shapley attribution of the stack's positive-class probability.
#[pyfunction]
fn shapley(
    py: Python<'_>,
    model: &StackModel,
    x: Vec<f64>,
    background: Vec<Vec<f64>>,
) -> PyResult<Py<PyDict>> {
    let predict = |row: &[f64]| {
        model
            .inner
            .predict_proba(std::slice::from_ref(&row.to_vec()))
            .map(|v| v[0])
            .unwrap_or(f64::NAN)
    };
    let attr = explain::shapley_exact(&predict, &x, &background).map_err(to_py_err)?;
    let dict = PyDict::new_bound(py);
    dict.set_item("values", attr.values)?;
    dict.set_item("base_value", attr.base_value)?;
    dict.set_item("feature_names", Dataset::feature_names())?;
    Ok(dict.into())
}

/// Desk-scale federated simulation over the dataset's users. Returns the
/// per-round global accuracy trend and the last-round per-user summary.
#[pyfunction]
#[pyo3(signature = (dataset, rounds=3, window_len=8, stride=8, filters=8, units=8, dropout=0.3,
                    learning_rate=0.001, batch_size=32, max_epochs=3, patience=0,
                    test_fraction=0.2, balance_ratio=1.0, min_windows=10, seed=42))]
#[allow(clippy::too_many_arguments)]
fn run_federated(
    py: Python<'_>,
    dataset: &Dataset,
    rounds: usize,
    window_len: usize,
    stride: usize,
    filters: usize,
    units: usize,
    dropout: f64,
    learning_rate: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    test_fraction: f64,
    balance_ratio: f64,
    min_windows: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let windows = data::make_windows(&dataset.inner, window_len, stride, LabelRule::Majority)
        .map_err(to_py_err)?;
    let spec = SplitSpec::new(test_fraction, seed, true).map_err(to_py_err)?;
    let (train_w, test) = windows.split(&spec).map_err(to_py_err)?;
    let by_user = train_w.split_by_user();
    let (mut clients, _skipped) =
        fed::build_clients_from_windows(&by_user, balance_ratio, 0.2, min_windows, seed)
            .map_err(to_py_err)?;
    let specs = nn::architecture(filters, 3, units, dropout);
    let config = fed::FedConfig {
        rounds,
        min_samples_per_user: min_windows,
        train: nn::TrainConfig {
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            l2_lambda: 0.0,
            validation_fraction: 0.2,
            seed: 0,
        },
        seed,
    };
    let outcome = fed::run_rounds(&mut clients, &test, &specs, &config).map_err(to_py_err)?;
    let summary = fed::user_summary(&outcome.logs).map_err(to_py_err)?;

    let dict = PyDict::new_bound(py);
    dict.set_item("rounds", outcome.logs.len())?;
    let trend: Vec<f64> = outcome.logs.iter().map(|l| l.global.accuracy).collect();
    dict.set_item("global_accuracy_trend", trend)?;
    let last = outcome.logs.last().unwrap();
    dict.set_item("final_accuracy", last.global.accuracy)?;
    dict.set_item("final_f1", last.global.class1.f1)?;
    let users = PyList::empty_bound(py);
    for row in &summary.rows {
        let u = PyDict::new_bound(py);
        u.set_item("user_id", row.user_id)?;
        u.set_item("accuracy", row.accuracy)?;
        u.set_item("f1", row.f1)?;
        u.set_item("epochs", row.epochs)?;
        u.set_item("samples", row.samples)?;
        users.append(u)?;
    }
    dict.set_item("users", users)?;
    dict.set_item("mean_user_accuracy", summary.mean_accuracy)?;
    dict.set_item("mean_user_f1", summary.mean_f1)?;
    dict.set_item("avg_epochs", summary.avg_epochs)?;
    Ok(dict.into())
}

/// Probability -> hard label at threshold 0.5.
#[pyfunction]
fn threshold_labels(probs: Vec<f64>) -> Vec<u8> {
    hard_labels(&probs)
}

#[pymodule]
fn foglab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<StackModel>()?;
    m.add_function(wrap_pyfunction!(train_stack, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(shapley, m)?)?;
    m.add_function(wrap_pyfunction!(run_federated, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_labels, m)?)?;
    Ok(())
}
