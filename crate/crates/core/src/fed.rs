//! Federated-learning simulator: user-isolated clients train the neural
//! local model, a central step aggregates by sample-weighted averaging,
//! and the global model is evaluated on a held-out test set each round.
//!
//! Privacy boundary: client datasets live in private [`ClientState`]
//! fields; the aggregation step consumes only `(weights, n_k, metrics)`
//! tuples, so no code path hands raw windows to the server side.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use crate::data::{ImuDataset, LabelRule, SplitSpec, WindowSet};
use crate::error::{Error, Result};
use crate::eval::{classification_report, roc_auc, MetricsReport};
use crate::nn::{fit_from, init_weights, predict, LayerSpec, ModelWeights, TrainConfig};
use crate::numeric::hard_labels;
use crate::report::KvDoc;
use crate::rng::rng_from;

/// Federated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub rounds: usize,
    /// Minimum training windows a client must hold to participate.
    pub min_samples_per_user: usize,
    /// Local trainer settings; the per-round per-client seed is derived
    /// from `seed`, not from `train.seed`.
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            min_samples_per_user: 20,
            train: TrainConfig::default(),
            seed: 42,
        }
    }
}

/// Per-user training state. The window sets are deliberately private:
/// everything outside this client sees only [`ClientUpdate`] values.
#[derive(Debug, Clone)]
pub struct ClientState {
    user_id: u32,
    train: WindowSet,
    validation: WindowSet,
    weights: Option<ModelWeights>,
    epochs_run: usize,
    last_metrics: Option<MetricsReport>,
}

impl ClientState {
    pub fn new(
        user_id: u32,
        train: WindowSet,
        validation: WindowSet,
        min_samples: usize,
    ) -> Result<Self> {
        if train.len() < min_samples {
            return Err(Error::Validation(format!(
                "user {user_id}: {} training windows below the minimum {min_samples}",
                train.len()
            )));
        }
        if validation.is_empty() {
            return Err(Error::Validation(format!(
                "user {user_id}: empty validation slice"
            )));
        }
        Ok(Self {
            user_id,
            train,
            validation,
            weights: None,
            epochs_run: 0,
            last_metrics: None,
        })
    }

    pub fn user_id(&self) -> u32 {
        self.user_id
    }

    /// n_k: the client's training-sample (window) count.
    pub fn n_samples(&self) -> usize {
        self.train.len()
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    pub fn last_metrics(&self) -> Option<&MetricsReport> {
        self.last_metrics.as_ref()
    }

    fn window_shape(&self) -> (usize, usize) {
        (self.train.window_len, self.train.n_channels())
    }
}

/// What a client sends after local training: weights and scalars, never
/// raw data.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub user_id: u32,
    pub weights: ModelWeights,
    pub n_samples: usize,
    pub epochs_run: usize,
    pub metrics: MetricsReport,
}

/// Clients that could be built, plus (user, reason) for those that could not.
pub type BuiltClients = (Vec<ClientState>, Vec<(u32, String)>);

/// Local preprocessing knobs applied inside each client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPrep {
    /// Majority/minority cap for local class balancing.
    pub balance_ratio: f64,
    pub window_len: usize,
    pub stride: usize,
    pub label_rule: LabelRule,
    /// Fraction of local windows held out for the client's own metrics.
    pub validation_fraction: f64,
    pub min_windows: usize,
    pub seed: u64,
}

impl Default for ClientPrep {
    fn default() -> Self {
        Self {
            balance_ratio: 1.0,
            window_len: 16,
            stride: 8,
            label_rule: LabelRule::Majority,
            validation_fraction: 0.2,
            min_windows: 20,
            seed: 42,
        }
    }
}

/// Builds one client per user partition: balance locally, window, and
/// carve the local validation slice. Users that cannot produce a usable
/// client are skipped with a reason.
pub fn build_clients(
    partitions: &BTreeMap<u32, ImuDataset>,
    prep: &ClientPrep,
) -> Result<BuiltClients> {
    let mut clients = Vec::new();
    let mut skipped = Vec::new();
    let mut master = rng_from(prep.seed);
    for (&user_id, ds) in partitions {
        let user_seed: u64 = master.gen();
        let build = || -> Result<ClientState> {
            let balanced = crate::data::downsample_balance(ds, prep.balance_ratio, user_seed)?;
            let windows =
                crate::data::make_windows(&balanced, prep.window_len, prep.stride, prep.label_rule)?;
            let split = SplitSpec::new(prep.validation_fraction, user_seed, true)?;
            let (train, validation) = windows.split(&split)?;
            ClientState::new(user_id, train, validation, prep.min_windows)
        };
        match build() {
            Ok(client) => clients.push(client),
            Err(e) if e.is_usage() => skipped.push((user_id, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if clients.is_empty() {
        return Err(Error::Validation(format!(
            "no usable clients; skipped: {skipped:?}"
        )));
    }
    Ok((clients, skipped))
}

/// Builds clients from pre-cut per-user window sets (the window-level
/// pipeline: global holdout carved from windows, remainder grouped by
/// user). Balancing and the local validation split happen here.
pub fn build_clients_from_windows(
    windows_by_user: &BTreeMap<u32, WindowSet>,
    balance_ratio: f64,
    validation_fraction: f64,
    min_windows: usize,
    seed: u64,
) -> Result<BuiltClients> {
    let mut clients = Vec::new();
    let mut skipped = Vec::new();
    let mut master = rng_from(seed);
    for (&user_id, windows) in windows_by_user {
        let user_seed: u64 = master.gen();
        let build = || -> Result<ClientState> {
            let balanced = windows.downsample_balance(balance_ratio, user_seed)?;
            let split = SplitSpec::new(validation_fraction, user_seed, true)?;
            let (train, validation) = balanced.split(&split)?;
            ClientState::new(user_id, train, validation, min_windows)
        };
        match build() {
            Ok(client) => clients.push(client),
            Err(e) if e.is_usage() => skipped.push((user_id, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if clients.is_empty() {
        return Err(Error::Validation(format!(
            "no usable clients; skipped: {skipped:?}"
        )));
    }
    Ok((clients, skipped))
}

/// Local training for one round: resume from the broadcast global weights,
/// train with local early stopping, and return only weights and scalars.
pub fn train_user_model(
    client: &mut ClientState,
    global_weights: &ModelWeights,
    specs: &[LayerSpec],
    config: &TrainConfig,
) -> Result<ClientUpdate> {
    let outcome = fit_from(global_weights.clone(), &client.train, config, specs)?;
    let probs = predict(&outcome.weights, specs, &client.validation.windows)?;
    let pred = hard_labels(&probs);
    let auc = roc_auc(&probs, &client.validation.labels).ok();
    let mut metrics = classification_report(&pred, &client.validation.labels, None)?;
    metrics.auc = auc;

    client.weights = Some(outcome.weights.clone());
    client.epochs_run = outcome.epochs_run;
    client.last_metrics = Some(metrics.clone());
    Ok(ClientUpdate {
        user_id: client.user_id,
        weights: outcome.weights,
        n_samples: client.train.len(),
        epochs_run: outcome.epochs_run,
        metrics,
    })
}

/// Sample-weighted federated averaging: every parameter becomes
/// `sum_k (n_k / n) * w_k`. The caller fixes the canonical summation
/// order (ascending user id in [`run_rounds`]).
pub fn federated_average(updates: &[(&ModelWeights, usize)]) -> Result<ModelWeights> {
    let Some((first, _)) = updates.first() else {
        return Err(Error::Argument("no client updates to average".into()));
    };
    if updates.iter().any(|(_, n)| *n == 0) {
        return Err(Error::Argument("client sample count of zero".into()));
    }
    for (w, _) in updates {
        if !first.same_layout(w) {
            return Err(Error::Validation(
                "client weight layouts do not match".into(),
            ));
        }
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    let mut out = first.zeros_like();
    for (weights, n_k) in updates {
        let coeff = *n_k as f64 / total as f64;
        for (acc, src) in out.params.iter_mut().zip(&weights.params) {
            for (a, v) in acc.values.iter_mut().zip(&src.values) {
                *a += coeff * v;
            }
        }
    }
    Ok(out)
}

/// One client's row in a round log.
#[derive(Debug, Clone)]
pub struct ClientRound {
    pub user_id: u32,
    pub n_samples: usize,
    pub epochs_run: usize,
    pub metrics: MetricsReport,
}

/// Telemetry for one communication round.
#[derive(Debug, Clone)]
pub struct RoundLog {
    pub round: usize,
    pub clients: Vec<ClientRound>,
    pub skipped: Vec<(u32, String)>,
    /// Global model evaluated on the held-out test set.
    pub global: MetricsReport,
    /// Wall-clock seconds; lives only in run metadata, never in data files.
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
pub struct FedOutcome {
    pub global_weights: ModelWeights,
    pub logs: Vec<RoundLog>,
    /// Global weights after each round, for checkpointing.
    pub checkpoints: Vec<ModelWeights>,
}

/// Runs the communication rounds: broadcast, local training on every
/// client, sample-weighted averaging, and global evaluation.
///
/// The test set must be disjoint from all client data (carved before
/// client partitioning). Clients whose local data cannot train this round
/// are skipped and logged; a round with zero participants aborts.
pub fn run_rounds(
    clients: &mut [ClientState],
    test: &WindowSet,
    specs: &[LayerSpec],
    config: &FedConfig,
) -> Result<FedOutcome> {
    if config.rounds == 0 {
        return Err(Error::Argument("rounds must be >= 1".into()));
    }
    if clients.is_empty() {
        return Err(Error::Validation("no clients".into()));
    }
    if test.is_empty() {
        return Err(Error::Validation("empty test set".into()));
    }
    clients.sort_by_key(|c| c.user_id);
    for pair in clients.windows(2) {
        if pair[0].user_id == pair[1].user_id {
            return Err(Error::Argument(format!(
                "duplicate user id {}",
                pair[0].user_id
            )));
        }
    }
    let shape = (test.window_len, test.n_channels());
    for client in clients.iter() {
        if client.window_shape() != shape {
            return Err(Error::Shape(format!(
                "user {} windows {:?} do not match test windows {:?}",
                client.user_id,
                client.window_shape(),
                shape
            )));
        }
        if client.n_samples() < config.min_samples_per_user {
            return Err(Error::Validation(format!(
                "user {} holds {} training windows, below min_samples_per_user {}",
                client.user_id,
                client.n_samples(),
                config.min_samples_per_user
            )));
        }
    }

    let mut master = rng_from(config.seed);
    let mut global = init_weights(specs, shape, master.gen())?;
    let mut logs = Vec::with_capacity(config.rounds);
    let mut checkpoints = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let started = Instant::now();
        // per-(round, client) seeds drawn in canonical order up front, so
        // results cannot depend on training schedule
        let seeds: Vec<u64> = clients.iter().map(|_| master.gen()).collect();
        let mut updates = Vec::new();
        let mut skipped = Vec::new();
        for (client, &seed) in clients.iter_mut().zip(&seeds) {
            let local_config = TrainConfig {
                seed,
                ..config.train
            };
            match train_user_model(client, &global, specs, &local_config) {
                Ok(update) => updates.push(update),
                Err(e) if e.is_usage() => skipped.push((client.user_id, e.to_string())),
                Err(e) => return Err(e),
            }
        }
        if updates.is_empty() {
            return Err(Error::Validation(format!(
                "round {round}: every client was skipped ({skipped:?})"
            )));
        }
        let weighted: Vec<(&ModelWeights, usize)> =
            updates.iter().map(|u| (&u.weights, u.n_samples)).collect();
        global = federated_average(&weighted)?;
        checkpoints.push(global.clone());

        let probs = predict(&global, specs, &test.windows)?;
        let pred = hard_labels(&probs);
        let auc = roc_auc(&probs, &test.labels).ok();
        let mut report = classification_report(&pred, &test.labels, None)?;
        report.auc = auc;

        logs.push(RoundLog {
            round,
            clients: updates
                .into_iter()
                .map(|u| ClientRound {
                    user_id: u.user_id,
                    n_samples: u.n_samples,
                    epochs_run: u.epochs_run,
                    metrics: u.metrics,
                })
                .collect(),
            skipped,
            global: report,
            duration_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(FedOutcome {
        global_weights: global,
        logs,
        checkpoints,
    })
}

/// Per-user row of the final summary.
#[derive(Debug, Clone)]
pub struct UserRow {
    pub user_id: u32,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub epochs: usize,
    pub samples: usize,
}

/// Last-round per-user metrics with cross-user aggregates.
#[derive(Debug, Clone)]
pub struct UserSummary {
    pub rows: Vec<UserRow>,
    pub mean_accuracy: f64,
    /// Population standard deviation across users.
    pub std_accuracy: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    /// Mean epochs over every (round, client) entry.
    pub avg_epochs: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn user_summary(logs: &[RoundLog]) -> Result<UserSummary> {
    let Some(last) = logs.last() else {
        return Err(Error::Argument("no completed rounds".into()));
    };
    let rows: Vec<UserRow> = last
        .clients
        .iter()
        .map(|c| UserRow {
            user_id: c.user_id,
            accuracy: c.metrics.accuracy,
            precision: c.metrics.class1.precision,
            recall: c.metrics.class1.recall,
            f1: c.metrics.class1.f1,
            auc: c.metrics.auc,
            epochs: c.epochs_run,
            samples: c.n_samples,
        })
        .collect();
    let (mean_accuracy, std_accuracy) =
        mean_std(&rows.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let (mean_f1, std_f1) = mean_std(&rows.iter().map(|r| r.f1).collect::<Vec<_>>());
    let epoch_counts: Vec<f64> = logs
        .iter()
        .flat_map(|log| log.clients.iter().map(|c| c.epochs_run as f64))
        .collect();
    let avg_epochs = epoch_counts.iter().sum::<f64>() / epoch_counts.len() as f64;
    Ok(UserSummary {
        rows,
        mean_accuracy,
        std_accuracy,
        mean_f1,
        std_f1,
        avg_epochs,
    })
}

impl UserSummary {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("user  accuracy  precision  recall  f1     auc    epochs  samples\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<5} {:<9.3} {:<10.3} {:<7.3} {:<6.3} {:<6} {:<7} {}\n",
                r.user_id,
                r.accuracy,
                r.precision,
                r.recall,
                r.f1,
                r.auc.map_or("-".to_string(), |a| format!("{a:.3}")),
                r.epochs,
                r.samples
            ));
        }
        out.push('\n');
        out.push_str(&format!("mean accuracy  {:.3}\n", self.mean_accuracy));
        out.push_str(&format!("std accuracy   {:.3}\n", self.std_accuracy));
        out.push_str(&format!("mean f1        {:.3}\n", self.mean_f1));
        out.push_str(&format!("std f1         {:.3}\n", self.std_f1));
        out.push_str(&format!("avg epochs     {:.1}\n", self.avg_epochs));
        out
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("report", "federated_user_summary");
        doc.push("schema_version", 1);
        for r in &self.rows {
            let u = r.user_id;
            doc.push(&format!("user_{u}_accuracy"), r.accuracy);
            doc.push(&format!("user_{u}_precision"), r.precision);
            doc.push(&format!("user_{u}_recall"), r.recall);
            doc.push(&format!("user_{u}_f1"), r.f1);
            if let Some(auc) = r.auc {
                doc.push(&format!("user_{u}_auc"), auc);
            }
            doc.push(&format!("user_{u}_epochs"), r.epochs);
            doc.push(&format!("user_{u}_samples"), r.samples);
        }
        doc.push("mean_accuracy", self.mean_accuracy);
        doc.push("std_accuracy", self.std_accuracy);
        doc.push("mean_f1", self.mean_f1);
        doc.push("std_f1", self.std_f1);
        doc.push("avg_epochs", self.avg_epochs);
        doc
    }
}
