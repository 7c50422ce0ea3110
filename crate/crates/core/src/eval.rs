//! Binary classification metrics, ROC-AUC, classification reports, and the
//! nested cross-validation driver.

use crate::data::kfold_indices;
use crate::error::{Error, Result};
use crate::report::KvDoc;

/// Binary confusion matrix; the positive class is label 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn error_rate(&self) -> f64 {
        ratio(self.fp + self.fn_, self.total())
    }

    /// TP / (TP + FP); 0 when no positive predictions were made
    /// (see [`ConfusionMatrix::degenerate_metrics`]).
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// TP / (TP + FN); 0 when there are no actual positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Names of metrics whose denominator was zero and which therefore
    /// report the flagged value 0.
    pub fn degenerate_metrics(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.tp + self.fp == 0 {
            out.push("precision");
        }
        if self.tp + self.fn_ == 0 {
            out.push("recall");
        }
        if self.precision() + self.recall() == 0.0 {
            out.push("f1");
        }
        out
    }

    /// The matrix with the class roles swapped (class 0 as positive).
    pub fn flipped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    /// 2x2 integer grid, rows = actual class, columns = predicted class.
    pub fn grid(&self) -> [[u64; 2]; 2] {
        [[self.tn, self.fp], [self.fn_, self.tp]]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::Argument(format!(
            "prediction/truth length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Argument("cannot evaluate zero samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            _ => {
                return Err(Error::Validation(
                    "labels and predictions must be binary".into(),
                ))
            }
        }
    }
    Ok(cm)
}

/// ROC-AUC by the rank statistic: the probability that a random positive
/// outranks a random negative, ties counted half.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Argument("score/truth length mismatch".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "AUC needs both classes present".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score in AUC input".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // average rank over tied groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0; // ranks are 1-based
        for &idx in &order[i..=j] {
            if truth[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Per-class precision/recall/F1 with supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation state for one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub class0: ClassMetrics,
    pub class1: ClassMetrics,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub confusion: ConfusionMatrix,
    pub auc: Option<f64>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn total_support(&self) -> u64 {
        self.class0.support + self.class1.support
    }

    /// Aligned text layout with values rounded to two decimals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("              precision    recall  f1-score   support\n\n");
        for (name, c) in [("0", &self.class0), ("1", &self.class1)] {
            out.push_str(&format!(
                "{:>12}    {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
                name, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:>12}    {:>9} {:>9} {:>9.2} {:>9}\n",
            "accuracy",
            "",
            "",
            self.accuracy,
            self.total_support()
        ));
        out.push_str(&format!(
            "{:>12}    {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
            "macro avg",
            self.macro_avg.precision,
            self.macro_avg.recall,
            self.macro_avg.f1,
            self.total_support()
        ));
        out.push_str(&format!(
            "{:>12}    {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
            "weighted avg",
            self.weighted_avg.precision,
            self.weighted_avg.recall,
            self.weighted_avg.f1,
            self.total_support()
        ));
        if let Some(auc) = self.auc {
            out.push_str(&format!("\n{:>12}    {:>9.4}\n", "auc", auc));
        }
        if !self.warnings.is_empty() {
            out.push_str(&format!("\nwarnings: {}\n", self.warnings.join("; ")));
        }
        out
    }

    /// Machine-readable key-value export with full-precision values.
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("report", "classification");
        doc.push("schema_version", 1);
        doc.push("accuracy", self.accuracy);
        for (name, c) in [("class0", &self.class0), ("class1", &self.class1)] {
            doc.push(&format!("{name}_precision"), c.precision);
            doc.push(&format!("{name}_recall"), c.recall);
            doc.push(&format!("{name}_f1"), c.f1);
            doc.push(&format!("{name}_support"), c.support);
        }
        doc.push("macro_precision", self.macro_avg.precision);
        doc.push("macro_recall", self.macro_avg.recall);
        doc.push("macro_f1", self.macro_avg.f1);
        doc.push("weighted_precision", self.weighted_avg.precision);
        doc.push("weighted_recall", self.weighted_avg.recall);
        doc.push("weighted_f1", self.weighted_avg.f1);
        doc.push("confusion_tn", self.confusion.tn);
        doc.push("confusion_fp", self.confusion.fp);
        doc.push("confusion_fn", self.confusion.fn_);
        doc.push("confusion_tp", self.confusion.tp);
        if let Some(auc) = self.auc {
            doc.push("auc", auc);
        }
        if !self.warnings.is_empty() {
            doc.push("warnings", self.warnings.join("; "));
        }
        doc
    }
}

/// Builds the per-class report, treating each class as positive in turn.
pub fn classification_report(
    pred: &[u8],
    truth: &[u8],
    scores: Option<&[f64]>,
) -> Result<MetricsReport> {
    let cm = confusion(pred, truth)?;
    Ok(report_from_confusion(
        cm,
        match scores {
            Some(s) => Some(roc_auc(s, truth)?),
            None => None,
        },
    ))
}

pub fn report_from_confusion(cm: ConfusionMatrix, auc: Option<f64>) -> MetricsReport {
    let as_class = |m: ConfusionMatrix| ClassMetrics {
        precision: m.precision(),
        recall: m.recall(),
        f1: m.f1(),
        support: m.tp + m.fn_,
    };
    let c1 = as_class(cm);
    let c0 = as_class(cm.flipped());
    let n = cm.total() as f64;
    let macro_avg = AverageMetrics {
        precision: (c0.precision + c1.precision) / 2.0,
        recall: (c0.recall + c1.recall) / 2.0,
        f1: (c0.f1 + c1.f1) / 2.0,
    };
    let weighted = |a: f64, b: f64| (c0.support as f64 * a + c1.support as f64 * b) / n;
    let weighted_avg = AverageMetrics {
        precision: weighted(c0.precision, c1.precision),
        recall: weighted(c0.recall, c1.recall),
        f1: weighted(c0.f1, c1.f1),
    };
    let mut warnings = Vec::new();
    for name in cm.degenerate_metrics() {
        warnings.push(format!("class1 {name} undefined, reported as 0"));
    }
    for name in cm.flipped().degenerate_metrics() {
        warnings.push(format!("class0 {name} undefined, reported as 0"));
    }
    MetricsReport {
        class0: c0,
        class1: c1,
        accuracy: cm.accuracy(),
        macro_avg,
        weighted_avg,
        confusion: cm,
        auc,
        warnings,
    }
}

/// Mean and population standard deviation (divisor N) of fold accuracies.
pub fn aggregate_fold_accuracies(folds: &[f64]) -> (f64, f64) {
    let n = folds.len() as f64;
    let mean = folds.iter().sum::<f64>() / n;
    let var = folds.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Outcome of a nested cross-validation run.
#[derive(Debug, Clone)]
pub struct NestedCvResult<P> {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the outer folds.
    pub std: f64,
    pub chosen: Vec<P>,
}

impl<P: std::fmt::Debug> NestedCvResult<P> {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("report", "nested_cv");
        doc.push("schema_version", 1);
        doc.push("folds", self.fold_accuracies.len());
        for (i, acc) in self.fold_accuracies.iter().enumerate() {
            doc.push(&format!("fold_{}_accuracy", i + 1), acc);
            doc.push(&format!("fold_{}_chosen", i + 1), format!("{:?}", self.chosen[i]));
        }
        doc.push("mean", self.mean);
        doc.push("std", self.std);
        doc
    }
}

/// Nested cross-validation: the inner loop grid-searches hyperparameters by
/// mean inner-fold accuracy (ties keep the earliest grid point), the outer
/// loop scores the refit winner on its held-out fold.
///
/// `fit_predict(params, x_train, y_train, x_eval)` must return hard labels
/// for `x_eval`.
pub fn nested_cv<P: Clone, F>(
    grid: &[P],
    mut fit_predict: F,
    x: &[Vec<f64>],
    y: &[u8],
    outer_k: usize,
    inner_k: usize,
    seed: u64,
) -> Result<NestedCvResult<P>>
where
    F: FnMut(&P, &[Vec<f64>], &[u8], &[Vec<f64>]) -> Result<Vec<u8>>,
{
    if grid.is_empty() {
        return Err(Error::Argument("parameter grid is empty".into()));
    }
    if outer_k < 2 || inner_k < 2 {
        return Err(Error::Argument("outer_k and inner_k must be >= 2".into()));
    }
    let take = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<u8>) {
        (
            idx.iter().map(|&i| x[i].clone()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let outer = kfold_indices(y.len(), outer_k, Some(y), seed)?;
    let mut fold_accuracies = Vec::with_capacity(outer_k);
    let mut chosen = Vec::with_capacity(outer_k);
    for (fold_no, (train_idx, test_idx)) in outer.iter().enumerate() {
        let (x_train, y_train) = take(train_idx);
        let (x_test, y_test) = take(test_idx);

        let mut best: Option<(f64, usize)> = None;
        if grid.len() == 1 {
            best = Some((0.0, 0));
        } else {
            let inner = kfold_indices(
                y_train.len(),
                inner_k,
                Some(&y_train),
                seed.wrapping_add(1 + fold_no as u64),
            )?;
            for (gi, params) in grid.iter().enumerate() {
                let mut accs = Vec::with_capacity(inner_k);
                for (itrain, itest) in &inner {
                    let (xi, yi) = (
                        itrain.iter().map(|&i| x_train[i].clone()).collect::<Vec<_>>(),
                        itrain.iter().map(|&i| y_train[i]).collect::<Vec<_>>(),
                    );
                    let (xe, ye) = (
                        itest.iter().map(|&i| x_train[i].clone()).collect::<Vec<_>>(),
                        itest.iter().map(|&i| y_train[i]).collect::<Vec<_>>(),
                    );
                    let pred = fit_predict(params, &xi, &yi, &xe)?;
                    accs.push(confusion(&pred, &ye)?.accuracy());
                }
                let mean_acc = accs.iter().sum::<f64>() / accs.len() as f64;
                // strictly-greater keeps the first grid point on ties
                if best.is_none_or(|(b, _)| mean_acc > b) {
                    best = Some((mean_acc, gi));
                }
            }
        }
        let (_, best_gi) = best.unwrap();
        let pred = fit_predict(&grid[best_gi], &x_train, &y_train, &x_test)?;
        fold_accuracies.push(confusion(&pred, &y_test)?.accuracy());
        chosen.push(grid[best_gi].clone());
    }
    let (mean, std) = aggregate_fold_accuracies(&fold_accuracies);
    Ok(NestedCvResult {
        fold_accuracies,
        mean,
        std,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    #[test]
    fn confusion_trivial_cases() {
        let cm = confusion(&[1, 1, 0], &[1, 1, 0]).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (2, 1, 0, 0));

        let all_wrong = confusion(&[1, 0], &[0, 1]).unwrap();
        assert_eq!((all_wrong.tp, all_wrong.tn), (0, 0));
        assert_eq!((all_wrong.fp, all_wrong.fn_), (1, 1));
    }

    #[test]
    fn confusion_length_mismatch_is_error() {
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn published_confusion_counts_add_up() {
        let cm = ConfusionMatrix::from_counts(1320, 4, 2, 280);
        assert_eq!(cm.total(), 1606);
        assert!((cm.accuracy() - 1600.0 / 1606.0).abs() < 1e-15);
        assert!((cm.precision() - 280.0 / 284.0).abs() < 1e-15);
        assert!((cm.recall() - 280.0 / 282.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_metrics_flagged_as_zero() {
        let cm = ConfusionMatrix::from_counts(5, 0, 0, 0);
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.precision(), 0.0);
        assert_eq!(cm.recall(), 0.0);
        assert_eq!(
            cm.degenerate_metrics(),
            vec!["precision", "recall", "f1"]
        );
    }

    #[test]
    fn f1_is_harmonic_mean() {
        // precision 1.0, recall 0.81 -> 2*0.81/1.81
        let f1: f64 = 2.0 * 1.0 * 0.81 / (1.0 + 0.81);
        assert!((f1 - 0.8950276243093923).abs() < 1e-12);
        let cm = ConfusionMatrix::from_counts(0, 0, 19, 81);
        assert!((cm.recall() - 0.81).abs() < 1e-12);
        assert!((cm.f1() - f1).abs() < 1e-12);
    }

    #[test]
    fn accuracy_plus_error_rate_is_one() {
        let cm = ConfusionMatrix::from_counts(17, 3, 5, 25);
        assert_eq!(cm.accuracy() + cm.error_rate(), 1.0);
    }

    #[test]
    fn f1_bounds_and_equality_property() {
        let mut rng = rng_from(31);
        for _ in 0..200 {
            let cm = ConfusionMatrix::from_counts(
                rng.gen_range(0..50),
                rng.gen_range(0..50),
                rng.gen_range(0..50),
                rng.gen_range(0..50),
            );
            let (p, r, f1) = (cm.precision(), cm.recall(), cm.f1());
            assert!(f1 <= 2.0 * p.min(r) + 1e-12);
            assert!(f1 >= p.min(r) - 1e-12 || f1 == 0.0);
            if p == r {
                assert!((f1 - p).abs() < 1e-12, "f1 = p = r when p == r");
            }
        }
    }

    #[test]
    fn auc_perfect_and_tied() {
        assert_eq!(
            roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(),
            1.0
        );
        assert_eq!(roc_auc(&[0.5; 6], &[0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn auc_enumerated_pairs() {
        // positives 0.35, 0.8 vs negatives 0.1, 0.4: 3 wins of 4 pairs
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auc_single_class_is_error() {
        assert!(roc_auc(&[0.1, 0.5], &[1, 1]).is_err());
    }

    #[test]
    fn auc_invariant_under_monotone_transform_and_brute_force() {
        let mut rng = rng_from(99);
        for _ in 0..50 {
            let n = rng.gen_range(5..40);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            if truth.iter().all(|&t| t == 0) || truth.iter().all(|&t| t == 1) {
                continue;
            }
            let auc = roc_auc(&scores, &truth).unwrap();
            // brute-force pair counting oracle
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if truth[i] == 1 && truth[j] == 0 {
                        pairs += 1.0;
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            assert!((auc - wins / pairs).abs() < 1e-12);
            // strictly monotone transform leaves AUC unchanged
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
            let auc2 = roc_auc(&transformed, &truth).unwrap();
            assert!((auc - auc2).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_agree_with_brute_force_recount() {
        let mut rng = rng_from(123);
        for _ in 0..1000 {
            let n = rng.gen_range(1..30);
            let pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            let cm = confusion(&pred, &truth).unwrap();
            let correct = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
            assert_eq!(cm.accuracy(), correct as f64 / n as f64);
            let tp = pred
                .iter()
                .zip(&truth)
                .filter(|(&p, &t)| p == 1 && t == 1)
                .count() as u64;
            assert_eq!(cm.tp, tp);
        }
    }

    #[test]
    fn report_perfect_split_all_ones() {
        let mut pred = vec![0u8; 941];
        pred.extend(vec![1u8; 940]);
        let report = classification_report(&pred, &pred, None).unwrap();
        assert_eq!(report.class0.support, 941);
        assert_eq!(report.class1.support, 940);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.class0.f1, 1.0);
        assert_eq!(report.class1.f1, 1.0);
        assert_eq!(report.macro_avg.f1, 1.0);
    }

    #[test]
    fn report_class1_metrics_on_known_counts() {
        let cm = ConfusionMatrix::from_counts(1320, 4, 2, 280);
        let report = report_from_confusion(cm, None);
        assert!((report.class1.precision - 0.986).abs() < 5e-4);
        assert!((report.class1.recall - 0.993).abs() < 5e-4);
        assert_eq!(report.class0.support, 1324);
        assert_eq!(report.class1.support, 282);
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        let mut rng = rng_from(5);
        for _ in 0..20 {
            let n = rng.gen_range(4..50);
            let pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            let report = classification_report(&pred, &truth, None).unwrap();
            assert!((report.weighted_avg.recall - report.accuracy).abs() < 1e-12);
        }
    }

    #[test]
    fn published_fold_aggregation_oracle() {
        let folds = [
            0.9689, 0.9626, 0.9577, 0.9527, 0.9689, 0.9801, 0.9663, 0.9464, 0.9900, 0.9489,
        ];
        let (mean, std) = aggregate_fold_accuracies(&folds);
        assert!((mean - 0.9642).abs() <= 5.0e-5 + 1e-12, "mean {mean}");
        assert!((std - 0.0130).abs() <= 5.0e-5, "std {std}");
        // the sample std (divisor N-1) would NOT match the reported 0.0130
        let n = folds.len() as f64;
        let sample_std = std * (n / (n - 1.0)).sqrt();
        assert!((sample_std - 0.0130).abs() > 5.0e-4, "sample std {sample_std}");
    }

    fn stump_or_deep_dataset() -> (Vec<Vec<f64>>, Vec<u8>) {
        // XOR-ish layout: depth-1 stumps fail, depth>=2 trees are perfect
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut rng = rng_from(17);
        for _ in 0..120 {
            let a = rng.gen_range(-1.0..1.0_f64);
            let b = rng.gen_range(-1.0..1.0_f64);
            x.push(vec![a, b]);
            y.push(u8::from((a > 0.0) != (b > 0.0)));
        }
        (x, y)
    }

    #[test]
    fn nested_cv_single_grid_point_is_plain_kfold() {
        let (x, y) = stump_or_deep_dataset();
        let fit = |p: &usize, xt: &[Vec<f64>], yt: &[u8], xe: &[Vec<f64>]| {
            let tree = crate::trees::fit_tree(
                xt,
                yt,
                &crate::trees::TreeParams {
                    max_depth: *p,
                    ..Default::default()
                },
                0,
            )?;
            Ok(xe.iter().map(|r| u8::from(tree.predict_proba(r) > 0.5)).collect())
        };
        let res = nested_cv(&[5usize], fit, &x, &y, 4, 2, 9).unwrap();
        // same thing computed by hand with kfold_indices
        let folds = kfold_indices(y.len(), 4, Some(&y), 9).unwrap();
        let mut accs = Vec::new();
        for (tr, te) in &folds {
            let xt: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
            let xe: Vec<Vec<f64>> = te.iter().map(|&i| x[i].clone()).collect();
            let ye: Vec<u8> = te.iter().map(|&i| y[i]).collect();
            let pred = fit(&5usize, &xt, &yt, &xe).unwrap();
            accs.push(confusion(&pred, &ye).unwrap().accuracy());
        }
        assert_eq!(res.fold_accuracies, accs);
    }

    #[test]
    fn nested_cv_selects_dominant_config_every_fold() {
        let (x, y) = stump_or_deep_dataset();
        let fit = |p: &usize, xt: &[Vec<f64>], yt: &[u8], xe: &[Vec<f64>]| {
            let tree = crate::trees::fit_tree(
                xt,
                yt,
                &crate::trees::TreeParams {
                    max_depth: *p,
                    ..Default::default()
                },
                0,
            )?;
            Ok(xe.iter().map(|r| u8::from(tree.predict_proba(r) > 0.5)).collect())
        };
        let res = nested_cv(&[1usize, 5usize], fit, &x, &y, 4, 3, 21).unwrap();
        assert!(res.chosen.iter().all(|&p| p == 5), "chosen {:?}", res.chosen);
        assert!(res.mean > 0.9);
    }

    #[test]
    fn render_text_has_table_layout() {
        let cm = ConfusionMatrix::from_counts(613, 28, 31, 609);
        let report = report_from_confusion(cm, Some(0.74));
        let text = report.render_text();
        assert!(text.contains("precision"));
        assert!(text.contains("macro avg"));
        assert!(text.contains("weighted avg"));
        let kv = report.to_kv();
        assert!(kv.get("accuracy").is_some());
        assert!(kv.get("class1_support").is_some());
    }
}
