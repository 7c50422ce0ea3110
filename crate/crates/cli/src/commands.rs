//! Subcommand implementations. Every command reads the experiment config,
//! writes deterministic data files into the run directory, and leaves
//! timing metadata to run_meta.kv.

use std::fmt::Write as _;
use std::path::Path;

use foglab_core::data::{
    make_windows, render_csv, IngestReport, SplitSpec, FEATURE_NAMES,
};
use foglab_core::eval::{classification_report, nested_cv, roc_auc, MetricsReport};
use foglab_core::explain::{shapley_exact, summarize, Attribution};
use foglab_core::fed::{build_clients_from_windows, run_rounds, user_summary, FedConfig};
use foglab_core::model_io;
use foglab_core::nn::{architecture, encode_weights, TrainConfig};
use foglab_core::report::KvDoc;
use foglab_core::stacking::{fit_stack, StackConfig, StackModel};
use foglab_core::trees::{fit_forest, fit_gbm, ForestConfig, GbmConfig};
use foglab_core::{hard_labels, Error, Result};

use crate::config::ExperimentConfig;
use crate::outdir::RunDir;

fn seeded_order(n: usize, seed: u64) -> Vec<usize> {
    // the same xoshiro-backed shuffle the core uses, kept local to avoid
    // exposing crate internals
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_like(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    return idx;

    fn rand_like(seed: u64) -> impl Rng {
        rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed)
    }
}

pub fn cmd_ingest(config: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    if config.data.source != "csv" {
        return Err(Error::Schema(
            "ingest needs data.source = \"csv\"".into(),
        ));
    }
    let columns = config.data.columns.to_map();
    let mut datasets = Vec::new();
    let mut merged_report = IngestReport::default();
    for path in &config.data.paths {
        let (ds, report) = foglab_core::data::load_csv(path, &columns)?;
        merged_report.rows_read += report.rows_read;
        merged_report.rows_kept += report.rows_kept;
        merged_report.rejected_missing_cell += report.rejected_missing_cell;
        merged_report.rejected_nonfinite += report.rejected_nonfinite;
        datasets.push(ds);
    }
    if datasets.is_empty() {
        return Err(Error::Schema("data.paths is empty".into()));
    }
    let dataset = if datasets.len() == 1 && columns.user.is_some() {
        datasets.into_iter().next().unwrap()
    } else {
        let user_ids: Vec<u32> = if config.data.user_ids.is_empty() {
            (1..=datasets.len() as u32).collect()
        } else {
            config.data.user_ids.clone()
        };
        foglab_core::data::merge_users(&datasets, &user_ids)?
    };
    dataset.validate()?;
    let (neg, pos) = dataset.class_counts();
    merged_report.negatives = neg;
    merged_report.positives = pos;
    merged_report.users = dataset.user_counts().into_iter().collect();
    merged_report.source = config.data.paths.join("+");

    run.write("dataset.csv", render_csv(&dataset))?;
    run.write_kv("ingest_report.kv", &merged_report.to_kv())?;
    run.meta("rows_kept", merged_report.rows_kept);
    Ok(())
}

pub fn cmd_synth(config: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let synth = config.data.synthetic.to_config(config.seed);
    let dataset = foglab_core::data::generate_synthetic(&synth)?;
    let (neg, pos) = dataset.class_counts();
    run.write("dataset.csv", render_csv(&dataset))?;
    let mut doc = KvDoc::new();
    doc.push("report", "synth");
    doc.push("schema_version", 1);
    doc.push("users", synth.users);
    doc.push("samples_per_user", synth.samples_per_user);
    doc.push("positive_fraction", synth.positive_fraction);
    doc.push("shift", synth.shift);
    doc.push("heterogeneity", synth.heterogeneity);
    doc.push("seed", synth.seed);
    doc.push("class_0", neg);
    doc.push("class_1", pos);
    for (user, count) in dataset.user_counts() {
        doc.push(&format!("user_{user}_samples"), count);
    }
    run.write_kv("synth_report.kv", &doc)?;
    Ok(())
}

type TabularSplit = (Vec<Vec<f64>>, Vec<u8>, Vec<Vec<f64>>, Vec<u8>);

fn prepared_tabular(config: &ExperimentConfig) -> Result<TabularSplit> {
    let ds = config.resolve_dataset()?;
    let balanced =
        foglab_core::data::downsample_balance(&ds, config.preprocess.balance_ratio, config.seed)?;
    let spec = SplitSpec::new(
        config.preprocess.test_fraction,
        config.seed,
        config.preprocess.stratified,
    )?;
    let (train, test) = balanced.split(&spec)?;
    Ok((
        train.feature_matrix(),
        train.labels(),
        test.feature_matrix(),
        test.labels(),
    ))
}

fn forest_config(section: &crate::config::ForestSection, seed: u64) -> ForestConfig {
    ForestConfig {
        min_samples_split: section.min_samples_split,
        min_samples_leaf: section.min_samples_leaf,
        ..ForestConfig::random_forest(section.n_estimators, section.max_depth, seed)
    }
}

fn extra_trees_config(section: &crate::config::ExtraTreesSection, seed: u64) -> ForestConfig {
    ForestConfig {
        min_samples_split: section.min_samples_split,
        min_samples_leaf: section.min_samples_leaf,
        ..ForestConfig::extra_trees(section.n_estimators, section.max_depth, seed)
    }
}

fn gbm_config(section: &crate::config::GbmSection, seed: u64) -> GbmConfig {
    GbmConfig {
        iterations: section.iterations,
        depth: section.depth,
        learning_rate: section.learning_rate,
        l2_leaf_reg: section.l2_leaf_reg,
        seed,
    }
}

fn stack_config(config: &ExperimentConfig) -> StackConfig {
    StackConfig {
        cv_folds: config.models.stack.cv_folds,
        passthrough: config.models.stack.passthrough,
        meta: config.models.logistic.to_config(),
        ..StackConfig::default_four(config.seed)
    }
}

fn confusion_grid_csv(report: &MetricsReport) -> String {
    let g = report.confusion.grid();
    format!(
        "actual\\predicted,0,1\n0,{},{}\n1,{},{}\n",
        g[0][0], g[0][1], g[1][0], g[1][1]
    )
}

fn write_model_outputs(
    run: &RunDir,
    name: &str,
    probs: &[f64],
    truth: &[u8],
) -> Result<MetricsReport> {
    let pred = hard_labels(probs);
    let auc = roc_auc(probs, truth).ok();
    let mut report = classification_report(&pred, truth, None)?;
    report.auc = auc;
    run.write(&format!("{name}_report.txt"), report.render_text())?;
    run.write_kv(&format!("{name}_report.kv"), &report.to_kv())?;
    run.write(&format!("{name}_confusion.csv"), confusion_grid_csv(&report))?;
    Ok(report)
}

pub fn cmd_train_central(config: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let (xt, yt, xe, ye) = prepared_tabular(config)?;
    let mut comparison = String::from("model,train_accuracy,test_accuracy\n");
    let accuracy = |probs: &[f64], truth: &[u8]| -> Result<f64> {
        Ok(foglab_core::eval::confusion(&hard_labels(probs), truth)?.accuracy())
    };

    let rf = fit_forest(&xt, &yt, &forest_config(&config.models.random_forest, config.seed))?;
    let et = fit_forest(&xt, &yt, &extra_trees_config(&config.models.extra_trees, config.seed))?;
    let gbm = fit_gbm(&xt, &yt, &gbm_config(&config.models.gbm, config.seed))?;
    let stack = fit_stack(&xt, &yt, &stack_config(config))?;

    let entries: Vec<(&str, Vec<f64>, Vec<f64>, String)> = vec![
        (
            "random_forest",
            rf.predict_proba(&xt)?,
            rf.predict_proba(&xe)?,
            model_io::write_forest(&rf),
        ),
        (
            "extra_trees",
            et.predict_proba(&xt)?,
            et.predict_proba(&xe)?,
            model_io::write_forest(&et),
        ),
        (
            "gbm",
            gbm.predict_proba(&xt)?,
            gbm.predict_proba(&xe)?,
            model_io::write_gbm(&gbm),
        ),
        (
            "stack",
            stack.predict_proba(&xt)?,
            stack.predict_proba(&xe)?,
            model_io::write_stack(&stack),
        ),
    ];
    for (name, train_probs, test_probs, dump) in entries {
        let train_acc = accuracy(&train_probs, &yt)?;
        let test_acc = accuracy(&test_probs, &ye)?;
        writeln!(comparison, "{name},{train_acc},{test_acc}").unwrap();
        run.write(&format!("{name}_model.txt"), dump)?;
        write_model_outputs(run, name, &test_probs, &ye)?;
    }
    run.write("comparison.csv", comparison)?;
    run.meta("train_rows", yt.len());
    run.meta("test_rows", ye.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    max_depth: usize,
    n_estimators: usize,
}

pub fn cmd_nested_cv(config: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let ds = config.resolve_dataset()?;
    let balanced =
        foglab_core::data::downsample_balance(&ds, config.preprocess.balance_ratio, config.seed)?;
    let x = balanced.feature_matrix();
    let y = balanced.labels();

    let nc = &config.nested_cv;
    if nc.grid_max_depth.is_empty() || nc.grid_n_estimators.is_empty() {
        return Err(Error::Schema("nested_cv grid is empty".into()));
    }
    let mut grid = Vec::new();
    for &max_depth in &nc.grid_max_depth {
        for &n_estimators in &nc.grid_n_estimators {
            grid.push(GridPoint {
                max_depth,
                n_estimators,
            });
        }
    }
    let seed = config.seed;
    let learner = nc.learner.clone();
    let fit_predict = |p: &GridPoint,
                       xt: &[Vec<f64>],
                       yt: &[u8],
                       xe: &[Vec<f64>]|
     -> Result<Vec<u8>> {
        let probs = match learner.as_str() {
            "random_forest" => {
                fit_forest(xt, yt, &ForestConfig::random_forest(p.n_estimators, p.max_depth, seed))?
                    .predict_proba(xe)?
            }
            "extra_trees" => {
                fit_forest(xt, yt, &ForestConfig::extra_trees(p.n_estimators, p.max_depth, seed))?
                    .predict_proba(xe)?
            }
            "gbm" => fit_gbm(
                xt,
                yt,
                &GbmConfig {
                    iterations: p.n_estimators,
                    depth: p.max_depth,
                    learning_rate: 0.1,
                    l2_leaf_reg: 1.0,
                    seed,
                },
            )?
            .predict_proba(xe)?,
            other => {
                return Err(Error::Schema(format!(
                    "unknown nested_cv.learner '{other}'"
                )))
            }
        };
        Ok(hard_labels(&probs))
    };
    let result = nested_cv(&grid, fit_predict, &x, &y, nc.outer_k, nc.inner_k, config.seed)?;

    let mut csv = String::from("fold,accuracy,chosen_max_depth,chosen_n_estimators\n");
    for (i, (acc, chosen)) in result
        .fold_accuracies
        .iter()
        .zip(&result.chosen)
        .enumerate()
    {
        writeln!(csv, "{},{acc},{},{}", i + 1, chosen.max_depth, chosen.n_estimators).unwrap();
    }
    writeln!(csv, "mean,{},,", result.mean).unwrap();
    writeln!(csv, "std,{},,", result.std).unwrap();
    run.write("nested_cv.csv", csv)?;

    let mut doc = KvDoc::new();
    doc.push("report", "nested_cv");
    doc.push("schema_version", 1);
    doc.push("learner", &nc.learner);
    doc.push("folds", result.fold_accuracies.len());
    for (i, acc) in result.fold_accuracies.iter().enumerate() {
        doc.push(&format!("fold_{}_accuracy", i + 1), acc);
    }
    doc.push("mean", result.mean);
    doc.push("std", result.std);
    run.write_kv("nested_cv.kv", &doc)?;
    Ok(())
}

enum LoadedModel {
    Forest(foglab_core::trees::ForestModel),
    Gbm(foglab_core::trees::GbmModel),
    Logistic(foglab_core::stacking::LogisticModel),
    Stack(StackModel),
}

impl LoadedModel {
    fn kind(&self) -> &'static str {
        match self {
            Self::Forest(_) => "forest",
            Self::Gbm(_) => "gbm",
            Self::Logistic(_) => "logistic",
            Self::Stack(_) => "stack",
        }
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Self::Forest(m) => m.predict_proba_row(row),
            Self::Gbm(m) => m.predict_proba_row(row),
            Self::Logistic(m) => m.predict_proba_row(row),
            Self::Stack(m) => m
                .predict_proba(std::slice::from_ref(&row.to_vec()))
                .map(|v| v[0])
                .unwrap_or(f64::NAN),
        }
    }
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    let kind = text
        .lines()
        .nth(1)
        .and_then(|l| l.strip_prefix("kind "))
        .ok_or_else(|| Error::Format(format!("{}: missing kind line", path.display())))?
        .trim();
    Ok(match kind {
        "forest" => LoadedModel::Forest(model_io::read_forest(&text)?),
        "gbm" => LoadedModel::Gbm(model_io::read_gbm(&text)?),
        "logistic" => LoadedModel::Logistic(model_io::read_logistic(&text)?),
        "stack" => LoadedModel::Stack(model_io::read_stack(&text)?),
        other => return Err(Error::Format(format!("unknown model kind '{other}'"))),
    })
}

pub fn cmd_explain(config: &ExperimentConfig, run: &mut RunDir, model_path: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let (xt, _, xe, _) = prepared_tabular(config)?;

    let bg_order = seeded_order(xt.len(), config.seed ^ 0xB46);
    let background: Vec<Vec<f64>> = bg_order
        .iter()
        .take(config.explain.background_size.min(xt.len()))
        .map(|&i| xt[i].clone())
        .collect();
    let sample_order = seeded_order(xe.len(), config.seed ^ 0x5A4);
    let explained: Vec<Vec<f64>> = sample_order
        .iter()
        .take(config.explain.samples.min(xe.len()))
        .map(|&i| xe[i].clone())
        .collect();

    let predict = |row: &[f64]| model.predict_row(row);
    let mut attributions: Vec<Attribution> = Vec::with_capacity(explained.len());
    let mut max_gap = 0.0_f64;
    for sample in &explained {
        let attr = shapley_exact(&predict, sample, &background)?;
        max_gap = max_gap.max(attr.efficiency_gap(predict(sample)));
        attributions.push(attr);
    }
    let summary = summarize(&attributions)?;

    let mut bar = String::from("feature_name,mean_abs_shap\n");
    for (feature, value) in &summary.ranking {
        writeln!(bar, "{},{value}", FEATURE_NAMES[*feature]).unwrap();
    }
    run.write("shap_bar.csv", bar)?;

    let mut beeswarm = String::from("sample_index,feature_name,feature_value,shap_value\n");
    for p in &summary.points {
        writeln!(
            beeswarm,
            "{},{},{},{}",
            p.sample_index, FEATURE_NAMES[p.feature_index], p.feature_value, p.shap_value
        )
        .unwrap();
    }
    run.write("shap_beeswarm.csv", beeswarm)?;

    let mut doc = KvDoc::new();
    doc.push("report", "explain");
    doc.push("schema_version", 1);
    doc.push("model_file", model_path.display());
    doc.push("model_kind", model.kind());
    doc.push("background_rows", background.len());
    doc.push("explained_samples", explained.len());
    doc.push("max_efficiency_gap", max_gap);
    doc.push("top_feature", FEATURE_NAMES[summary.ranking[0].0]);
    run.write_kv("shap_meta.kv", &doc)?;
    Ok(())
}

pub fn cmd_federate(config: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let ds = config.resolve_dataset()?;
    let fc = &config.federated;
    let windows = make_windows(
        &ds,
        config.preprocess.window_len,
        config.preprocess.stride,
        config.preprocess.label_rule()?,
    )?;
    let spec = SplitSpec::new(
        config.preprocess.test_fraction,
        config.seed,
        config.preprocess.stratified,
    )?;
    let (train_w, test) = windows.split(&spec)?;
    let by_user = train_w.split_by_user();
    let (mut clients, skipped_build) = build_clients_from_windows(
        &by_user,
        config.preprocess.balance_ratio,
        fc.validation_fraction,
        fc.min_samples_per_user,
        config.seed,
    )?;

    let specs = architecture(fc.filters, fc.kernel_size, fc.units, fc.dropout);
    let fed_config = FedConfig {
        rounds: fc.rounds,
        min_samples_per_user: fc.min_samples_per_user,
        train: TrainConfig {
            learning_rate: fc.learning_rate,
            batch_size: fc.batch_size,
            max_epochs: fc.max_epochs,
            patience: fc.patience,
            l2_lambda: 0.0,
            validation_fraction: fc.validation_fraction,
            seed: 0, // re-derived per round and client
        },
        seed: config.seed,
    };
    let outcome = run_rounds(&mut clients, &test, &specs, &fed_config)?;

    let fmt_auc = |auc: Option<f64>| auc.map_or(String::new(), |a| a.to_string());
    let mut global_csv = String::from("round,accuracy,precision,recall,f1,auc\n");
    let mut clients_csv =
        String::from("round,user_id,n_samples,epochs_run,accuracy,precision,recall,f1,auc\n");
    let mut skipped_csv = String::from("round,user_id,reason\n");
    let mut any_skipped = false;
    for (user, reason) in &skipped_build {
        writeln!(skipped_csv, "build,{user},{reason:?}").unwrap();
        any_skipped = true;
    }
    for log in &outcome.logs {
        let g = &log.global;
        writeln!(
            global_csv,
            "{},{},{},{},{},{}",
            log.round + 1,
            g.accuracy,
            g.class1.precision,
            g.class1.recall,
            g.class1.f1,
            fmt_auc(g.auc)
        )
        .unwrap();
        for c in &log.clients {
            writeln!(
                clients_csv,
                "{},{},{},{},{},{},{},{},{}",
                log.round + 1,
                c.user_id,
                c.n_samples,
                c.epochs_run,
                c.metrics.accuracy,
                c.metrics.class1.precision,
                c.metrics.class1.recall,
                c.metrics.class1.f1,
                fmt_auc(c.metrics.auc)
            )
            .unwrap();
        }
        for (user, reason) in &log.skipped {
            writeln!(skipped_csv, "{},{user},{reason:?}", log.round + 1).unwrap();
            any_skipped = true;
        }
        run.meta(
            &format!("round_{}_duration_s", log.round + 1),
            log.duration_s,
        );
    }
    run.write("round_global.csv", global_csv)?;
    run.write("round_clients.csv", clients_csv)?;
    if any_skipped {
        run.write("skipped_clients.csv", skipped_csv)?;
    }

    let summary = user_summary(&outcome.logs)?;
    run.write("user_summary.txt", summary.render_text())?;
    run.write_kv("user_summary.kv", &summary.to_kv())?;

    for (i, weights) in outcome.checkpoints.iter().enumerate() {
        run.write(
            &format!("checkpoints/round_{:02}.fogw", i + 1),
            encode_weights(&specs, weights),
        )?;
    }
    run.write(
        "global_model.fogw",
        encode_weights(&specs, &outcome.global_weights),
    )?;
    run.meta("clients", clients.len());
    run.meta("test_windows", test.len());
    Ok(())
}
