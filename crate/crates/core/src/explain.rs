//! Exact Shapley-value feature attribution by full coalition enumeration
//! with an interventional value function over a background sample.

use crate::error::{Error, Result};

/// Per-sample attribution. Efficiency holds by construction:
/// `values.sum() + base_value` equals the model output on the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub values: Vec<f64>,
    /// Mean model output over the background set.
    pub base_value: f64,
    pub feature_values: Vec<f64>,
}

impl Attribution {
    pub fn efficiency_gap(&self, model_output: f64) -> f64 {
        (self.values.iter().sum::<f64>() + self.base_value - model_output).abs()
    }
}

const MAX_EXACT_FEATURES: usize = 20;

/// Exact Shapley values for one sample.
///
/// The value function v(S) replaces off-coalition features with background
/// rows and averages the model output; each feature's value is the
/// coalition-weighted mean of its marginal contributions over all 2^d
/// subsets. Cost is `2^d * background.len()` model calls.
pub fn shapley_exact(
    predict: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    background: &[Vec<f64>],
) -> Result<Attribution> {
    let d = x.len();
    if d == 0 {
        return Err(Error::Argument("cannot explain an empty feature vector".into()));
    }
    if d > MAX_EXACT_FEATURES {
        return Err(Error::Argument(format!(
            "{d} features exceed the exact-enumeration limit of {MAX_EXACT_FEATURES}; \
             use sampling (not implemented)"
        )));
    }
    if background.is_empty() {
        return Err(Error::Argument("background set is empty".into()));
    }
    if let Some(row) = background.iter().find(|r| r.len() != d) {
        return Err(Error::Argument(format!(
            "background row has {} features, sample has {d}",
            row.len()
        )));
    }

    // v(S) for every coalition bitmask
    let n_masks = 1usize << d;
    let mut value = vec![0.0f64; n_masks];
    let mut composite = vec![0.0f64; d];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for row in background {
            for i in 0..d {
                composite[i] = if mask & (1 << i) != 0 { x[i] } else { row[i] };
            }
            total += predict(&composite);
        }
        *v = total / background.len() as f64;
    }

    // coalition weights |S|! (d-|S|-1)! / d!
    let mut factorial = vec![1.0f64; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial[s] * factorial[d - 1 - s] / factorial[d])
        .collect();

    let mut values = vec![0.0f64; d];
    for mask in 0..n_masks {
        let size = (mask as u32).count_ones() as usize;
        for i in 0..d {
            if mask & (1 << i) == 0 {
                values[i] += weight[size] * (value[mask | (1 << i)] - value[mask]);
            }
        }
    }

    Ok(Attribution {
        values,
        base_value: value[0],
        feature_values: x.to_vec(),
    })
}

/// One beeswarm point: a feature's attribution on one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapPoint {
    pub sample_index: usize,
    pub feature_index: usize,
    pub feature_value: f64,
    pub shap_value: f64,
}

/// Mean-|value| feature ranking plus the flat point list for beeswarm export.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapSummary {
    /// (feature_index, mean absolute attribution), descending; ties break
    /// to the lower feature index.
    pub ranking: Vec<(usize, f64)>,
    pub points: Vec<ShapPoint>,
}

pub fn summarize(attributions: &[Attribution]) -> Result<ShapSummary> {
    let Some(first) = attributions.first() else {
        return Err(Error::Argument("no attributions to summarize".into()));
    };
    let d = first.values.len();
    if attributions.iter().any(|a| a.values.len() != d) {
        return Err(Error::Argument("inconsistent attribution widths".into()));
    }
    let mut mean_abs = vec![0.0f64; d];
    let mut points = Vec::with_capacity(attributions.len() * d);
    for (s, attr) in attributions.iter().enumerate() {
        for (i, (&shap_value, &feature_value)) in
            attr.values.iter().zip(&attr.feature_values).enumerate()
        {
            mean_abs[i] += shap_value.abs();
            points.push(ShapPoint {
                sample_index: s,
                feature_index: i,
                feature_value,
                shap_value,
            });
        }
    }
    for m in &mut mean_abs {
        *m /= attributions.len() as f64;
    }
    let mut ranking: Vec<(usize, f64)> = mean_abs.into_iter().enumerate().collect();
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(ShapSummary { ranking, points })
}
