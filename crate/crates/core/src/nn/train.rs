//! Loss, optimizer, and the mini-batch training loop with early stopping.

use rand::Rng;

use super::layers::{backward, forward, Mode};
use super::{LayerSpec, ModelWeights};
use crate::data::{SplitSpec, WindowSet};
use crate::error::{Error, Result};
use crate::rng::{rng_from, shuffled_indices};

/// Mean binary cross-entropy plus `l2_lambda * sum(|W|^2)` over matrix
/// parameters (biases excluded). Probabilities must already be strictly
/// inside (0,1); [`forward`] guarantees that.
pub fn loss_bce(probs: &[f64], labels: &[u8], weights: &ModelWeights, l2_lambda: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Argument("probs/labels length mismatch".into()));
    }
    if probs.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / labels.len() as f64 + l2_lambda * weights.matrix_sq_norm())
}

/// Adam moment estimates; one per trainable parameter, same layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ModelWeights,
    v: ModelWeights,
    pub step: u64,
}

impl AdamState {
    pub fn new(weights: &ModelWeights) -> Self {
        Self {
            m: weights.zeros_like(),
            v: weights.zeros_like(),
            step: 0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One Adam update with bias correction at the incremented step count.
pub fn adam_step(
    weights: &mut ModelWeights,
    grads: &ModelWeights,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !weights.same_layout(grads) {
        return Err(Error::Shape("gradient layout mismatch".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - ADAM_BETA1.powi(t);
    let corr2 = 1.0 - ADAM_BETA2.powi(t);
    for (((w, g), m), v) in weights
        .params
        .iter_mut()
        .zip(&grads.params)
        .zip(&mut state.m.params)
        .zip(&mut state.v.params)
    {
        for i in 0..w.values.len() {
            let grad = g.values[i];
            m.values[i] = ADAM_BETA1 * m.values[i] + (1.0 - ADAM_BETA1) * grad;
            v.values[i] = ADAM_BETA2 * v.values[i] + (1.0 - ADAM_BETA2) * grad * grad;
            let m_hat = m.values[i] / corr1;
            let v_hat = v.values[i] / corr2;
            w.values[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub l2_lambda: f64,
    /// Consecutive non-improving validation epochs tolerated before
    /// stopping; 0 disables early stopping (and the validation split).
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 50,
            l2_lambda: 0.0,
            patience: 5,
            validation_fraction: 0.2,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Argument("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Argument("l2_lambda must be >= 0".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Argument(
                "validation_fraction must be in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub weights: ModelWeights,
    pub epochs_run: usize,
    pub history: Vec<EpochStats>,
}

/// Initializes weights from the config seed and trains.
pub fn fit(train: &WindowSet, config: &TrainConfig, specs: &[LayerSpec]) -> Result<FitOutcome> {
    config.validate()?;
    let shape = input_shape(train)?;
    let init = super::init_weights(specs, shape, config.seed)?;
    fit_from(init, train, config, specs)
}

fn input_shape(ws: &WindowSet) -> Result<(usize, usize)> {
    if ws.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    Ok((ws.window_len, ws.n_channels()))
}

/// Mini-batch training from explicit starting weights (used by the
/// federated clients, which resume from the broadcast global model).
///
/// With `patience > 0` a stratified validation slice is carved out and the
/// best-validation-loss weights are returned; otherwise all windows are
/// trained on for exactly `max_epochs` epochs.
pub fn fit_from(
    init: ModelWeights,
    train: &WindowSet,
    config: &TrainConfig,
    specs: &[LayerSpec],
) -> Result<FitOutcome> {
    config.validate()?;
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Validation(
            "training set needs both classes".into(),
        ));
    }
    if config.max_epochs == 0 {
        return Ok(FitOutcome {
            weights: init,
            epochs_run: 0,
            history: Vec::new(),
        });
    }
    let mut rng = rng_from(config.seed);

    let (fit_set, val_set) = if config.patience > 0 {
        let spec = SplitSpec::new(config.validation_fraction, rng.gen(), true)?;
        let (fit_set, val_set) = train.split(&spec)?;
        (fit_set, Some(val_set))
    } else {
        (train.clone(), None)
    };

    let mut weights = init;
    let mut adam = AdamState::new(&weights);
    let mut history = Vec::new();
    let mut best: Option<(f64, ModelWeights)> = None;
    let mut stale_epochs = 0usize;
    let mut epochs_run = 0usize;

    for _ in 0..config.max_epochs {
        let order = shuffled_indices(fit_set.len(), &mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Vec<Vec<f64>>> =
                chunk.iter().map(|&i| fit_set.windows[i].clone()).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| fit_set.labels[i]).collect();
            let dropout_seed: u64 = rng.gen();
            let (probs, cache) = forward(&weights, specs, &batch, Mode::Train, dropout_seed)?;
            loss_sum +=
                loss_bce(&probs, &labels, &weights, config.l2_lambda)? * labels.len() as f64;
            let grads = backward(&cache, &weights, specs, &labels, config.l2_lambda)?;
            adam_step(&mut weights, &grads, &mut adam, config.learning_rate)?;
        }
        epochs_run += 1;
        let train_loss = loss_sum / fit_set.len() as f64;

        let val_loss = match &val_set {
            None => None,
            Some(val) => {
                let (probs, _) = forward(&weights, specs, &val.windows, Mode::Infer, 0)?;
                // plain BCE: the monitor tracks generalization, not decay
                Some(loss_bce(&probs, &val.labels, &weights, 0.0)?)
            }
        };
        history.push(EpochStats {
            train_loss,
            val_loss,
        });

        if let Some(val_loss) = val_loss {
            let improved = best.as_ref().is_none_or(|(b, _)| val_loss < *b);
            if improved {
                best = Some((val_loss, weights.clone()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= config.patience {
                    break;
                }
            }
        }
    }
    let weights = match best {
        Some((_, w)) => w,
        None => weights,
    };
    Ok(FitOutcome {
        weights,
        epochs_run,
        history,
    })
}

/// Inference-mode probabilities. Hard labels downstream use threshold 0.5
/// via [`crate::numeric::hard_labels`].
pub fn predict(
    weights: &ModelWeights,
    specs: &[LayerSpec],
    batch: &[Vec<Vec<f64>>],
) -> Result<Vec<f64>> {
    let (probs, _) = forward(weights, specs, batch, Mode::Infer, 0)?;
    Ok(probs)
}
