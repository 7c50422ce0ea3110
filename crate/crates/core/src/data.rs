//! IMU gait dataset handling: CSV ingest, class balancing, windowing,
//! splitting, k-fold index generation, per-user partitioning, and a
//! synthetic fixture generator.
//!
//! A dataset is an ordered list of labeled IMU samples. Within one user the
//! samples are kept in non-decreasing time order; windows are always cut
//! from a single user's contiguous (post-filter) samples.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::report::KvDoc;
use crate::rng::{rng_from, shuffled_indices, SeededRng};

/// Canonical feature order used everywhere: time plus the six IMU channels.
pub const FEATURE_NAMES: [&str; 7] = [
    "time_s", "acc_ml", "acc_ap", "acc_si", "gyr_ml", "gyr_ap", "gyr_si",
];

pub const N_FEATURES: usize = 7;

/// One labeled IMU reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub time_s: f64,
    pub acc_ml: f64,
    pub acc_ap: f64,
    pub acc_si: f64,
    pub gyr_ml: f64,
    pub gyr_ap: f64,
    pub gyr_si: f64,
    /// Freezing-event flag; the positive class is 1.
    pub label: u8,
    pub user_id: u32,
}

impl ImuSample {
    /// Features in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.time_s,
            self.acc_ml,
            self.acc_ap,
            self.acc_si,
            self.gyr_ml,
            self.gyr_ap,
            self.gyr_si,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
    }
}

/// A user-tagged collection of IMU samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuDataset {
    pub samples: Vec<ImuSample>,
    pub feature_names: Vec<String>,
    pub provenance: String,
}

impl ImuDataset {
    pub fn new(samples: Vec<ImuSample>, provenance: &str) -> Self {
        Self {
            samples,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            provenance: provenance.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// (negative, positive) sample counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - pos, pos)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Row-per-sample feature matrix in canonical feature order.
    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features().to_vec()).collect()
    }

    /// Distinct user ids in ascending order with their sample counts.
    pub fn user_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.user_id).or_insert(0) += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> ImuDataset {
        ImuDataset {
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(ImuDataset, ImuDataset)> {
        let labels = self.labels();
        let (train_idx, test_idx) = split_indices(
            self.len(),
            if spec.stratified { Some(&labels) } else { None },
            spec,
        )?;
        Ok((self.subset(&train_idx), self.subset(&test_idx)))
    }

    /// Checks the per-user time ordering and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        let mut last: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Validation(format!(
                    "sample {i} has a non-finite value"
                )));
            }
            if s.label > 1 {
                return Err(Error::Validation(format!(
                    "sample {i} has label {} outside {{0,1}}",
                    s.label
                )));
            }
            if let Some(&prev) = last.get(&s.user_id) {
                if s.time_s < prev {
                    return Err(Error::Validation(format!(
                        "sample {i}: time {} goes backwards for user {}",
                        s.time_s, s.user_id
                    )));
                }
            }
            last.insert(s.user_id, s.time_s);
        }
        Ok(())
    }
}

/// Windowed view of a dataset for the sequence model.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    /// n windows, each `window_len x n_channels` in canonical feature order.
    pub windows: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<u8>,
    pub user_ids: Vec<u32>,
    pub window_len: usize,
    pub stride: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.windows.first().map_or(0, |w| w[0].len())
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn subset(&self, indices: &[usize]) -> WindowSet {
        WindowSet {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            user_ids: indices.iter().map(|&i| self.user_ids[i]).collect(),
            window_len: self.window_len,
            stride: self.stride,
        }
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(WindowSet, WindowSet)> {
        let (train_idx, test_idx) = split_indices(
            self.len(),
            if spec.stratified { Some(&self.labels) } else { None },
            spec,
        )?;
        Ok((self.subset(&train_idx), self.subset(&test_idx)))
    }

    /// Balance window classes by randomly dropping majority-class windows.
    /// Same contract as [`downsample_balance`], applied to windows.
    pub fn downsample_balance(&self, target_ratio: f64, seed: u64) -> Result<WindowSet> {
        let keep = balance_keep_mask(&self.labels, target_ratio, seed)?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        Ok(self.subset(&idx))
    }

    /// Groups windows by the user they were cut from.
    pub fn split_by_user(&self) -> BTreeMap<u32, WindowSet> {
        let mut index_groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &user) in self.user_ids.iter().enumerate() {
            index_groups.entry(user).or_default().push(i);
        }
        index_groups
            .into_iter()
            .map(|(user, idx)| (user, self.subset(&idx)))
            .collect()
    }
}

/// Train/test split request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64, stratified: bool) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "test_fraction must be in (0,1), got {test_fraction}"
            )));
        }
        Ok(Self {
            test_fraction,
            seed,
            stratified,
        })
    }
}

/// How a window inherits a label from its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    /// Most frequent sample label; exact ties resolve to 1.
    Majority,
    /// 1 if any sample in the window is positive.
    AnyPositive,
    /// Label of the window's last sample.
    LastSample,
}

impl LabelRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Self::Majority),
            "any_positive" => Ok(Self::AnyPositive),
            "last_sample" => Ok(Self::LastSample),
            other => Err(Error::Argument(format!("unknown label rule '{other}'"))),
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Majority => "majority",
            Self::AnyPositive => "any_positive",
            Self::LastSample => "last_sample",
        };
        f.write_str(s)
    }
}

/// Maps canonical fields to the column names found in an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub time: String,
    pub acc_ml: String,
    pub acc_ap: String,
    pub acc_si: String,
    pub gyr_ml: String,
    pub gyr_ap: String,
    pub gyr_si: String,
    pub label: String,
    /// When absent every sample gets user_id 0.
    pub user: Option<String>,
}

impl ColumnMap {
    /// Canonical column names as written by [`write_csv`].
    pub fn canonical() -> Self {
        Self {
            time: "time_s".into(),
            acc_ml: "acc_ml".into(),
            acc_ap: "acc_ap".into(),
            acc_si: "acc_si".into(),
            gyr_ml: "gyr_ml".into(),
            gyr_ap: "gyr_ap".into(),
            gyr_si: "gyr_si".into(),
            label: "label".into(),
            user: Some("user_id".into()),
        }
    }

    fn numeric_fields(&self) -> [(&str, &str); 7] {
        [
            ("time_s", &self.time),
            ("acc_ml", &self.acc_ml),
            ("acc_ap", &self.acc_ap),
            ("acc_si", &self.acc_si),
            ("gyr_ml", &self.gyr_ml),
            ("gyr_ap", &self.gyr_ap),
            ("gyr_si", &self.gyr_si),
        ]
    }
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Counts kept/rejected rows per reason during ingest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub source: String,
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rejected_missing_cell: usize,
    pub rejected_nonfinite: usize,
    pub negatives: usize,
    pub positives: usize,
    pub users: Vec<(u32, usize)>,
}

impl IngestReport {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("report", "ingest");
        doc.push("schema_version", 1);
        doc.push("source", &self.source);
        doc.push("rows_read", self.rows_read);
        doc.push("rows_kept", self.rows_kept);
        doc.push("rejected_missing_cell", self.rejected_missing_cell);
        doc.push("rejected_nonfinite", self.rejected_nonfinite);
        doc.push("class_0", self.negatives);
        doc.push("class_1", self.positives);
        for (user, count) in &self.users {
            doc.push(&format!("user_{user}_samples"), count);
        }
        doc
    }
}

/// Loads a header-bearing comma-separated file into a dataset.
///
/// Rows with empty cells or non-finite numeric values are rejected and
/// counted in the report; unparseable cells and out-of-range flags abort
/// with the offending line number.
pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<(ImuDataset, IngestReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let (dataset, mut report) = parse_csv(&text, columns)?;
    report.source = path.display().to_string();
    Ok((dataset, report))
}

/// CSV parsing on an in-memory string; `load_csv` is the file-backed wrapper.
pub fn parse_csv(text: &str, columns: &ColumnMap) -> Result<(ImuDataset, IngestReport)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("file has no header row".into()))?;
    let header_cells: Vec<&str> = header.split(',').map(str::trim).collect();
    let col_index = |name: &str| -> Result<usize> {
        header_cells
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };

    let mut numeric_idx = Vec::with_capacity(7);
    for (_, mapped) in columns.numeric_fields() {
        numeric_idx.push(col_index(mapped)?);
    }
    let label_idx = col_index(&columns.label)?;
    let user_idx = match &columns.user {
        Some(name) => Some(col_index(name)?),
        None => None,
    };

    let mut report = IngestReport::default();
    let mut samples = Vec::new();
    let mut last_time: BTreeMap<u32, f64> = BTreeMap::new();

    for (line_no, line) in lines {
        let line_no = line_no + 1; // 1-based file line number
        if line.trim().is_empty() {
            continue;
        }
        report.rows_read += 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header_cells.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected {} cells, found {}",
                    header_cells.len(),
                    cells.len()
                ),
            });
        }

        let mut values = [0.0_f64; N_FEATURES];
        let mut missing = false;
        let mut nonfinite = false;
        for (slot, &idx) in numeric_idx.iter().enumerate() {
            let cell = cells[idx];
            if cell.is_empty() {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                nonfinite = true;
            }
            values[slot] = v;
        }
        if missing {
            report.rejected_missing_cell += 1;
            continue;
        }
        if nonfinite {
            report.rejected_nonfinite += 1;
            continue;
        }

        let label_cell = cells[label_idx];
        if label_cell.is_empty() {
            report.rejected_missing_cell += 1;
            continue;
        }
        let flag: f64 = label_cell.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("non-numeric flag '{label_cell}'"),
        })?;
        let label = if flag == 0.0 {
            0u8
        } else if flag == 1.0 {
            1u8
        } else {
            return Err(Error::Validation(format!(
                "line {line_no}: flag value '{label_cell}' is not binary"
            )));
        };

        let user_id = match user_idx {
            None => 0,
            Some(idx) => parse_user_id(cells[idx], line_no)?,
        };

        if let Some(&prev) = last_time.get(&user_id) {
            if values[0] < prev {
                return Err(Error::Validation(format!(
                    "line {line_no}: time {} goes backwards for user {user_id}",
                    values[0]
                )));
            }
        }
        last_time.insert(user_id, values[0]);

        samples.push(ImuSample {
            time_s: values[0],
            acc_ml: values[1],
            acc_ap: values[2],
            acc_si: values[3],
            gyr_ml: values[4],
            gyr_ap: values[5],
            gyr_si: values[6],
            label,
            user_id,
        });
        report.rows_kept += 1;
        if label == 1 {
            report.positives += 1;
        } else {
            report.negatives += 1;
        }
    }

    let dataset = ImuDataset::new(samples, "csv");
    report.users = dataset.user_counts().into_iter().collect();
    Ok((dataset, report))
}

fn parse_user_id(cell: &str, line_no: usize) -> Result<u32> {
    if let Ok(v) = cell.parse::<u32>() {
        return Ok(v);
    }
    // Accept the "user 3" spelling found in merged exports.
    let digits: String = cell.chars().filter(|c| c.is_ascii_digit()).collect();
    if !digits.is_empty() {
        if let Ok(v) = digits.parse::<u32>() {
            return Ok(v);
        }
    }
    Err(Error::Parse {
        line: line_no,
        msg: format!("invalid user id '{cell}'"),
    })
}

/// Writes the canonical CSV layout. Floats use shortest round-trip
/// formatting so `load_csv(write_csv(ds))` reproduces values bit-exactly.
pub fn write_csv(ds: &ImuDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_csv(ds))?;
    Ok(())
}

pub fn render_csv(ds: &ImuDataset) -> String {
    let mut out = String::new();
    out.push_str("time_s,acc_ml,acc_ap,acc_si,gyr_ml,gyr_ap,gyr_si,label,user_id\n");
    for s in &ds.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.time_s, s.acc_ml, s.acc_ap, s.acc_si, s.gyr_ml, s.gyr_ap, s.gyr_si, s.label, s.user_id
        ));
    }
    out
}

/// Tags each input dataset with a user id and concatenates them.
pub fn merge_users(datasets: &[ImuDataset], user_ids: &[u32]) -> Result<ImuDataset> {
    if datasets.len() != user_ids.len() {
        return Err(Error::Argument(format!(
            "{} datasets but {} user ids",
            datasets.len(),
            user_ids.len()
        )));
    }
    for (i, id) in user_ids.iter().enumerate() {
        if user_ids[..i].contains(id) {
            return Err(Error::Argument(format!("duplicate user id {id}")));
        }
    }
    let mut samples = Vec::with_capacity(datasets.iter().map(|d| d.len()).sum());
    for (ds, &id) in datasets.iter().zip(user_ids) {
        samples.extend(ds.samples.iter().map(|s| ImuSample { user_id: id, ..*s }));
    }
    let provenance = format!(
        "merge({})",
        datasets
            .iter()
            .map(|d| d.provenance.as_str())
            .collect::<Vec<_>>()
            .join("+")
    );
    Ok(ImuDataset::new(samples, &provenance))
}

fn balance_keep_mask(labels: &[u8], target_ratio: f64, seed: u64) -> Result<Vec<bool>> {
    if target_ratio < 1.0 {
        return Err(Error::Argument(format!(
            "target_ratio must be >= 1, got {target_ratio}"
        )));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Validation(
            "balancing needs both classes present".into(),
        ));
    }
    let (majority, minority) = if neg.len() >= pos.len() {
        (&neg, &pos)
    } else {
        (&pos, &neg)
    };
    let target = ((minority.len() as f64) * target_ratio).floor() as usize;
    let mut keep = vec![true; labels.len()];
    if majority.len() > target {
        let mut rng = rng_from(seed);
        let order = shuffled_indices(majority.len(), &mut rng);
        for &slot in order.iter().skip(target) {
            keep[majority[slot]] = false;
        }
    }
    Ok(keep)
}

/// Randomly undersamples the majority class (never the minority) until
/// `|majority| / |minority| <= target_ratio`. Retained samples keep their
/// original order, so per-user time ordering is preserved.
pub fn downsample_balance(ds: &ImuDataset, target_ratio: f64, seed: u64) -> Result<ImuDataset> {
    let keep = balance_keep_mask(&ds.labels(), target_ratio, seed)?;
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| keep[i]).collect();
    Ok(ds.subset(&idx))
}

/// Cuts fixed-length windows per user. Users shorter than `window_len`
/// contribute nothing; it is an error only when no user contributes.
pub fn make_windows(
    ds: &ImuDataset,
    window_len: usize,
    stride: usize,
    label_rule: LabelRule,
) -> Result<WindowSet> {
    if window_len == 0 || stride == 0 {
        return Err(Error::Argument(
            "window_len and stride must be positive".into(),
        ));
    }
    let mut by_user: BTreeMap<u32, Vec<&ImuSample>> = BTreeMap::new();
    for s in &ds.samples {
        by_user.entry(s.user_id).or_default().push(s);
    }

    let mut windows = Vec::new();
    let mut labels = Vec::new();
    let mut user_ids = Vec::new();
    for (&user, samples) in &by_user {
        if samples.len() < window_len {
            continue;
        }
        let mut start = 0;
        while start + window_len <= samples.len() {
            let slice = &samples[start..start + window_len];
            windows.push(slice.iter().map(|s| s.features().to_vec()).collect());
            labels.push(window_label(slice, label_rule));
            user_ids.push(user);
            start += stride;
        }
    }
    if windows.is_empty() {
        return Err(Error::Validation(format!(
            "no user has at least window_len={window_len} samples"
        )));
    }
    Ok(WindowSet {
        windows,
        labels,
        user_ids,
        window_len,
        stride,
    })
}

fn window_label(samples: &[&ImuSample], rule: LabelRule) -> u8 {
    match rule {
        LabelRule::Majority => {
            let pos = samples.iter().filter(|s| s.label == 1).count();
            // exact ties resolve to the positive class
            u8::from(2 * pos >= samples.len())
        }
        LabelRule::AnyPositive => u8::from(samples.iter().any(|s| s.label == 1)),
        LabelRule::LastSample => samples.last().map_or(0, |s| s.label),
    }
}

/// Deterministic train/test index split; both sides sorted ascending so
/// subsets keep the original sample order.
pub fn split_indices(
    n: usize,
    labels: Option<&[u8]>,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "test_fraction must be in (0,1), got {}",
            spec.test_fraction
        )));
    }
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 items to split, got {n}"
        )));
    }
    let mut rng = rng_from(spec.seed);
    let mut test_mask = vec![false; n];
    match labels {
        Some(labels) => {
            assert_eq!(labels.len(), n);
            for class in [0u8, 1u8] {
                let members: Vec<usize> =
                    (0..n).filter(|&i| labels[i] == class).collect();
                if members.is_empty() {
                    continue;
                }
                let take = ((members.len() as f64) * spec.test_fraction).round() as usize;
                if take == 0 || take == members.len() {
                    return Err(Error::Validation(format!(
                        "stratified split impossible: class {class} has {} items and \
                         test_fraction {} leaves a side empty",
                        members.len(),
                        spec.test_fraction
                    )));
                }
                let order = shuffled_indices(members.len(), &mut rng);
                for &slot in order.iter().take(take) {
                    test_mask[members[slot]] = true;
                }
            }
        }
        None => {
            let take = (((n as f64) * spec.test_fraction).round() as usize).clamp(1, n - 1);
            let order = shuffled_indices(n, &mut rng);
            for &i in order.iter().take(take) {
                test_mask[i] = true;
            }
        }
    }
    let test: Vec<usize> = (0..n).filter(|&i| test_mask[i]).collect();
    let train: Vec<usize> = (0..n).filter(|&i| !test_mask[i]).collect();
    Ok((train, test))
}

/// K-fold cross-validation indices: disjoint, exhaustive test folds with
/// sizes differing by at most one; stratified when labels are given.
pub fn kfold_indices(
    n: usize,
    k: usize,
    labels: Option<&[u8]>,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Argument(format!("k={k} exceeds n={n}")));
    }
    let mut rng = rng_from(seed);
    let mut fold_of = vec![0usize; n];
    match labels {
        Some(labels) => {
            assert_eq!(labels.len(), n);
            let mut fold_load = vec![0usize; k];
            for class in [0u8, 1u8] {
                let members: Vec<usize> =
                    (0..n).filter(|&i| labels[i] == class).collect();
                if members.is_empty() {
                    continue;
                }
                let order = shuffled_indices(members.len(), &mut rng);
                let base = members.len() / k;
                let rem = members.len() % k;
                // remainder goes to the currently lightest folds so total
                // fold sizes stay within one of each other
                let mut by_load: Vec<usize> = (0..k).collect();
                by_load.sort_by_key(|&f| (fold_load[f], f));
                let mut quota = vec![base; k];
                for &f in by_load.iter().take(rem) {
                    quota[f] += 1;
                }
                let mut cursor = 0;
                for fold in 0..k {
                    for _ in 0..quota[fold] {
                        fold_of[members[order[cursor]]] = fold;
                        cursor += 1;
                    }
                    fold_load[fold] += quota[fold];
                }
            }
        }
        None => {
            let order = shuffled_indices(n, &mut rng);
            let base = n / k;
            let rem = n % k;
            let mut cursor = 0;
            for fold in 0..k {
                let size = base + usize::from(fold < rem);
                for _ in 0..size {
                    fold_of[order[cursor]] = fold;
                    cursor += 1;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(k);
    for fold in 0..k {
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        out.push((train, test));
    }
    Ok(out)
}

/// Result of grouping a dataset by user.
#[derive(Debug, Clone)]
pub struct UserPartition {
    pub partitions: BTreeMap<u32, ImuDataset>,
    /// Users dropped for having fewer than `min_samples` samples.
    pub excluded: Vec<(u32, usize)>,
}

pub fn partition_by_user(ds: &ImuDataset, min_samples: usize) -> Result<UserPartition> {
    let mut groups: BTreeMap<u32, Vec<ImuSample>> = BTreeMap::new();
    for s in &ds.samples {
        groups.entry(s.user_id).or_default().push(*s);
    }
    let mut partitions = BTreeMap::new();
    let mut excluded = Vec::new();
    for (user, samples) in groups {
        if samples.len() >= min_samples {
            partitions.insert(
                user,
                ImuDataset::new(samples, &format!("{}/user{user}", ds.provenance)),
            );
        } else {
            excluded.push((user, samples.len()));
        }
    }
    if partitions.is_empty() {
        return Err(Error::Validation(format!(
            "no user has at least {min_samples} samples"
        )));
    }
    Ok(UserPartition {
        partitions,
        excluded,
    })
}

/// Synthetic fixture generator configuration.
///
/// Signals are Gaussian channels around a resting baseline; labeled
/// episodes add a per-user mean shift along a channel direction plus a
/// variance boost. `shift` scales the episode signal; `heterogeneity`
/// in [0,1] blends a shared direction (0) with a user-specific one (1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub samples_per_user: usize,
    pub positive_fraction: f64,
    pub shift: f64,
    pub heterogeneity: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 3,
            samples_per_user: 2000,
            positive_fraction: 0.5,
            shift: 2.5,
            heterogeneity: 0.5,
            seed: 42,
        }
    }
}

const SAMPLE_RATE_HZ: f64 = 128.0;
const CHANNEL_SIGMA: [f64; 6] = [0.3, 0.3, 0.3, 1.0, 1.0, 1.0];
const CHANNEL_BASE: [f64; 6] = [0.0, 0.0, 0.9, 0.0, 0.0, 0.0];
const SHARED_DIRECTION: [f64; 6] = [0.6, -0.4, 0.8, 1.0, -0.7, 0.5];
const EPISODE_VAR_BOOST: f64 = 1.5;

fn gaussian(rng: &mut SeededRng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generates a reproducible pseudo-IMU dataset with labeled episodes.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<ImuDataset> {
    if config.users == 0 || config.samples_per_user == 0 {
        return Err(Error::Argument("counts must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.positive_fraction) {
        return Err(Error::Argument(format!(
            "positive_fraction must be in [0,1], got {}",
            config.positive_fraction
        )));
    }
    if !(0.0..=1.0).contains(&config.heterogeneity) {
        return Err(Error::Argument(format!(
            "heterogeneity must be in [0,1], got {}",
            config.heterogeneity
        )));
    }
    let mut master = rng_from(config.seed);
    let user_seeds: Vec<u64> = (0..config.users).map(|_| master.gen()).collect();

    let mut samples = Vec::with_capacity(config.users * config.samples_per_user);
    for (u, &user_seed) in user_seeds.iter().enumerate() {
        let user_id = (u + 1) as u32;
        let mut rng = rng_from(user_seed);

        let mut direction = [0.0f64; 6];
        for (c, d) in direction.iter_mut().enumerate() {
            let personal: f64 = rng.gen_range(-1.0..1.0);
            *d = (1.0 - config.heterogeneity) * SHARED_DIRECTION[c]
                + config.heterogeneity * personal;
        }

        // alternating episode schedule with random block lengths
        let mut labels = Vec::with_capacity(config.samples_per_user);
        while labels.len() < config.samples_per_user {
            let block = rng.gen_range(16..=48usize);
            let positive = rng.gen_range(0.0..1.0) < config.positive_fraction;
            for _ in 0..block.min(config.samples_per_user - labels.len()) {
                labels.push(u8::from(positive));
            }
        }

        for (i, &label) in labels.iter().enumerate() {
            let mut ch = [0.0f64; 6];
            for c in 0..6 {
                let sigma = if label == 1 {
                    CHANNEL_SIGMA[c] * EPISODE_VAR_BOOST
                } else {
                    CHANNEL_SIGMA[c]
                };
                let mean = if label == 1 {
                    CHANNEL_BASE[c] + config.shift * direction[c] * CHANNEL_SIGMA[c]
                } else {
                    CHANNEL_BASE[c]
                };
                ch[c] = mean + sigma * gaussian(&mut rng);
            }
            samples.push(ImuSample {
                time_s: i as f64 / SAMPLE_RATE_HZ,
                acc_ml: ch[0],
                acc_ap: ch[1],
                acc_si: ch[2],
                gyr_ml: ch[3],
                gyr_ap: ch[4],
                gyr_si: ch[5],
                label,
                user_id,
            });
        }
    }
    Ok(ImuDataset::new(
        samples,
        &format!("synthetic(seed={})", config.seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SENSOR_EXPORT_CSV: &str = "\
Time [s],ACC ML [g],ACC AP [g],ACC SI [g],GYR ML [deg/s],GYR AP [deg/s],GYR SI [deg/s],Freezing event [flag]
1.359375, 0.105983, -0.32385, 0.838768, 8.897047, -16.8301, 33.93851, 0
1.367188, 0.142105, -0.18689, 0.883557, 9.206729, -19.46, 34.4718, 0
1.382813, 0.050564, -0.16351, 0.947961, 0.715407, -22.4346, 20.82936, 1
";

    fn export_columns() -> ColumnMap {
        ColumnMap {
            time: "Time [s]".into(),
            acc_ml: "ACC ML [g]".into(),
            acc_ap: "ACC AP [g]".into(),
            acc_si: "ACC SI [g]".into(),
            gyr_ml: "GYR ML [deg/s]".into(),
            gyr_ap: "GYR AP [deg/s]".into(),
            gyr_si: "GYR SI [deg/s]".into(),
            label: "Freezing event [flag]".into(),
            user: None,
        }
    }

    fn tiny(labels: &[u8]) -> ImuDataset {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| ImuSample {
                time_s: i as f64,
                acc_ml: 0.1 * i as f64,
                acc_ap: 0.0,
                acc_si: 0.9,
                gyr_ml: 0.0,
                gyr_ap: 0.0,
                gyr_si: 0.0,
                label,
                user_id: 1,
            })
            .collect();
        ImuDataset::new(samples, "test")
    }

    #[test]
    fn parses_known_row() {
        let (ds, report) = parse_csv(SENSOR_EXPORT_CSV, &export_columns()).unwrap();
        assert_eq!(ds.len(), 3);
        let s = &ds.samples[0];
        assert_eq!(s.time_s, 1.359375);
        assert_eq!(s.acc_ml, 0.105983);
        assert_eq!(s.acc_ap, -0.32385);
        assert_eq!(s.acc_si, 0.838768);
        assert_eq!(s.gyr_ml, 8.897047);
        assert_eq!(s.gyr_ap, -16.8301);
        assert_eq!(s.gyr_si, 33.93851);
        assert_eq!(s.label, 0);
        assert_eq!(s.user_id, 0, "user_id defaults to 0 with no user column");
        assert_eq!(ds.samples[2].label, 1);
        assert_eq!(report.rows_kept, 3);
    }

    #[test]
    fn empty_file_with_header_is_empty_dataset() {
        let header = "time_s,acc_ml,acc_ap,acc_si,gyr_ml,gyr_ap,gyr_si,label,user_id\n";
        let map = ColumnMap::canonical();
        let (ds, report) = parse_csv(header, &map).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.rows_read, 0);
    }

    #[test]
    fn nonbinary_flag_is_validation_error() {
        let text = SENSOR_EXPORT_CSV.replace(", 1\n", ", 2\n");
        let err = parse_csv(&text, &export_columns()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "got {err:?}");
    }

    #[test]
    fn missing_column_is_schema_error_naming_it() {
        let mut map = export_columns();
        map.gyr_si = "GYR XX".into();
        let err = parse_csv(SENSOR_EXPORT_CSV, &map).unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("GYR XX"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let text = SENSOR_EXPORT_CSV.replace("0.105983", "abc");
        match parse_csv(&text, &export_columns()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_cell_rejects_row_and_counts_it() {
        let text = SENSOR_EXPORT_CSV.replace("0.105983", "");
        let (ds, report) = parse_csv(&text, &export_columns()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(report.rejected_missing_cell, 1);
        assert_eq!(report.rows_kept, 2);
    }

    #[test]
    fn nonfinite_cell_rejects_row() {
        let text = SENSOR_EXPORT_CSV.replace("0.105983", "NaN");
        let (ds, report) = parse_csv(&text, &export_columns()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(report.rejected_nonfinite, 1);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let (ds, _) = parse_csv(SENSOR_EXPORT_CSV, &export_columns()).unwrap();
        let rendered = render_csv(&ds);
        let (back, _) = parse_csv(&rendered, &ColumnMap::canonical()).unwrap();
        assert_eq!(ds.samples, back.samples);
    }

    #[test]
    fn user_id_accepts_plain_and_prefixed_forms() {
        assert_eq!(parse_user_id("3", 1).unwrap(), 3);
        assert_eq!(parse_user_id("user 2", 1).unwrap(), 2);
        assert!(parse_user_id("??", 1).is_err());
    }

    #[test]
    fn merge_tags_and_concatenates() {
        let a = tiny(&[0; 10]);
        let b = tiny(&[1; 20]);
        let merged = merge_users(&[a, b], &[1, 2]).unwrap();
        assert_eq!(merged.len(), 30);
        let counts = merged.user_counts();
        assert_eq!(counts[&1], 10);
        assert_eq!(counts[&2], 20);
    }

    #[test]
    fn merge_single_is_identity_modulo_tag() {
        let a = tiny(&[0, 1, 0]);
        let merged = merge_users(std::slice::from_ref(&a), &[1]).unwrap();
        assert_eq!(merged.len(), 3);
        assert!(merged.samples.iter().all(|s| s.user_id == 1));
        assert_eq!(
            merged.samples.iter().map(|s| s.label).collect::<Vec<_>>(),
            vec![0, 1, 0]
        );
    }

    #[test]
    fn merge_duplicate_ids_rejected() {
        let a = tiny(&[0]);
        let b = tiny(&[1]);
        assert!(matches!(
            merge_users(&[a, b], &[1, 1]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn balance_to_exact_parity() {
        let mut labels = vec![0u8; 1000];
        labels.extend(vec![1u8; 250]);
        let ds = tiny(&labels);
        let out = downsample_balance(&ds, 1.0, 7).unwrap();
        assert_eq!(out.class_counts(), (250, 250));
    }

    #[test]
    fn balance_already_balanced_unchanged() {
        let mut labels = vec![0u8; 300];
        labels.extend(vec![1u8; 300]);
        let ds = tiny(&labels);
        let out = downsample_balance(&ds, 1.0, 7).unwrap();
        assert_eq!(out.samples, ds.samples);
    }

    #[test]
    fn balance_ratio_two() {
        let mut labels = vec![0u8; 1000];
        labels.extend(vec![1u8; 250]);
        let ds = tiny(&labels);
        let out = downsample_balance(&ds, 2.0, 7).unwrap();
        assert_eq!(out.class_counts(), (500, 250));
    }

    #[test]
    fn balance_keeps_minority_intact_no_duplicates_order_preserved() {
        let mut labels = vec![0u8; 40];
        labels.extend(vec![1u8; 10]);
        let ds = tiny(&labels);
        let out = downsample_balance(&ds, 1.0, 3).unwrap();
        let (neg, pos) = out.class_counts();
        assert_eq!((neg, pos), (10, 10));
        // every retained sample exists exactly once in the source
        let mut last_time = -1.0;
        for s in &out.samples {
            assert!(s.time_s > last_time, "order not preserved");
            last_time = s.time_s;
        }
        // minority untouched
        let src_pos: Vec<_> = ds.samples.iter().filter(|s| s.label == 1).collect();
        let out_pos: Vec<_> = out.samples.iter().filter(|s| s.label == 1).collect();
        assert_eq!(src_pos.len(), out_pos.len());
    }

    #[test]
    fn balance_single_class_rejected() {
        let ds = tiny(&[0, 0, 0]);
        assert!(matches!(
            downsample_balance(&ds, 1.0, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn balance_is_deterministic() {
        let mut labels = vec![0u8; 100];
        labels.extend(vec![1u8; 20]);
        let ds = tiny(&labels);
        let a = downsample_balance(&ds, 1.0, 11).unwrap();
        let b = downsample_balance(&ds, 1.0, 11).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn window_count_matches_formula() {
        let ds = tiny(&[0; 10]);
        let ws = make_windows(&ds, 5, 5, LabelRule::Majority).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws.n_channels(), N_FEATURES);
    }

    #[test]
    fn majority_tie_goes_positive() {
        let ds = tiny(&[0, 0, 1, 1]);
        let ws = make_windows(&ds, 4, 4, LabelRule::Majority).unwrap();
        assert_eq!(ws.labels, vec![1]);
    }

    #[test]
    fn label_rules_enumerated_on_same_window() {
        let ds = tiny(&[0, 0, 0, 1]);
        let any = make_windows(&ds, 4, 4, LabelRule::AnyPositive).unwrap();
        let last = make_windows(&ds, 4, 4, LabelRule::LastSample).unwrap();
        let maj = make_windows(&ds, 4, 4, LabelRule::Majority).unwrap();
        assert_eq!(any.labels, vec![1]);
        assert_eq!(last.labels, vec![1]);
        assert_eq!(maj.labels, vec![0]);
    }

    #[test]
    fn short_user_contributes_zero_windows() {
        let mut a = tiny(&[0, 1]); // too short for window_len 5
        let b = tiny(&[0, 1, 0, 1, 0, 1]);
        a = merge_users(&[a, b], &[1, 2]).unwrap();
        let ws = make_windows(&a, 5, 1, LabelRule::Majority).unwrap();
        assert!(ws.user_ids.iter().all(|&u| u == 2));
    }

    #[test]
    fn all_users_too_short_is_error() {
        let ds = tiny(&[0, 1]);
        assert!(matches!(
            make_windows(&ds, 5, 1, LabelRule::Majority),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn windows_per_user_match_closed_form() {
        let a = tiny(&[0; 23]);
        let b = tiny(&[1; 57]);
        let merged = merge_users(&[a, b], &[1, 2]).unwrap();
        for (wl, st) in [(5usize, 3usize), (8, 8), (10, 1)] {
            let ws = make_windows(&merged, wl, st, LabelRule::Majority).unwrap();
            let expect: usize = [23usize, 57]
                .iter()
                .filter(|&&n| n >= wl)
                .map(|&n| (n - wl) / st + 1)
                .sum();
            assert_eq!(ws.len(), expect, "wl={wl} st={st}");
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = tiny(&[0; 100]);
        let spec = SplitSpec::new(0.2, 9, false).unwrap();
        let (train, test) = ds.split(&spec).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let (train2, test2) = ds.split(&spec).unwrap();
        assert_eq!(train.samples, train2.samples);
        assert_eq!(test.samples, test2.samples);
    }

    #[test]
    fn stratified_split_supports_at_dataset_scale() {
        // 6620 negatives / 1410 positives at 80/20 puts 1324/282 in test
        let mut labels = vec![0u8; 6620];
        labels.extend(vec![1u8; 1410]);
        let spec = SplitSpec::new(0.2, 42, true).unwrap();
        let (_, test_idx) = split_indices(labels.len(), Some(&labels), &spec).unwrap();
        let pos = test_idx.iter().filter(|&&i| labels[i] == 1).count();
        let neg = test_idx.len() - pos;
        assert!((neg as i64 - 1324).abs() <= 1, "neg support {neg}");
        assert!((pos as i64 - 282).abs() <= 1, "pos support {pos}");
    }

    #[test]
    fn impossible_stratification_is_error() {
        let labels = [0u8, 0, 0, 1];
        let spec = SplitSpec::new(0.1, 0, true).unwrap();
        assert!(split_indices(4, Some(&labels), &spec).is_err());
    }

    #[test]
    fn kfold_leave_one_out_shape() {
        let folds = kfold_indices(10, 10, None, 0).unwrap();
        assert_eq!(folds.len(), 10);
        for (train, test) in &folds {
            assert_eq!(test.len(), 1);
            assert_eq!(train.len(), 9);
        }
    }

    #[test]
    fn kfold_sizes_differ_by_at_most_one() {
        let folds = kfold_indices(103, 10, None, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|(_, t)| t.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 10, 10, 11, 11, 11]);
    }

    #[test]
    fn stratified_kfold_balances_classes() {
        let mut labels = vec![0u8; 60];
        labels.extend(vec![1u8; 40]);
        let folds = kfold_indices(100, 5, Some(&labels), 5).unwrap();
        for (_, test) in &folds {
            let pos = test.iter().filter(|&&i| labels[i] == 1).count();
            let neg = test.len() - pos;
            assert!((neg as i64 - 12).abs() <= 1, "neg {neg}");
            assert!((pos as i64 - 8).abs() <= 1, "pos {pos}");
        }
    }

    #[test]
    fn kfold_partition_property() {
        let mut labels = vec![0u8; 37];
        labels.extend(vec![1u8; 18]);
        let folds = kfold_indices(55, 4, Some(&labels), 3).unwrap();
        let mut seen = vec![0usize; 55];
        for (train, test) in &folds {
            for &i in test {
                seen[i] += 1;
            }
            let inter: Vec<_> = train.iter().filter(|i| test.contains(i)).collect();
            assert!(inter.is_empty());
        }
        assert!(seen.iter().all(|&c| c == 1), "test folds must partition");
    }

    #[test]
    fn kfold_k_greater_than_n_is_error() {
        assert!(matches!(
            kfold_indices(3, 4, None, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn partition_by_user_sizes() {
        let a = tiny(&vec![0; 1830]);
        let b = tiny(&vec![1; 2542]);
        let c = tiny(&vec![0; 3145]);
        let merged = merge_users(&[a, b, c], &[1, 2, 3]).unwrap();
        let part = partition_by_user(&merged, 20).unwrap();
        assert_eq!(part.partitions.len(), 3);
        assert_eq!(part.partitions[&1].len(), 1830);
        assert_eq!(part.partitions[&2].len(), 2542);
        assert_eq!(part.partitions[&3].len(), 3145);
        assert!(part.excluded.is_empty());
    }

    #[test]
    fn partition_threshold_boundaries() {
        let ds = tiny(&[0; 19]);
        assert!(partition_by_user(&ds, 20).is_err());
        let ds = tiny(&[0; 20]);
        let part = partition_by_user(&ds, 20).unwrap();
        assert_eq!(part.partitions.len(), 1);
    }

    #[test]
    fn windows_group_by_user_losslessly() {
        let a = tiny(&[0, 1, 0, 1, 0, 1, 0, 1]);
        let b = tiny(&[1, 1, 0, 0]);
        let merged = merge_users(&[a, b], &[3, 9]).unwrap();
        let ws = make_windows(&merged, 2, 2, LabelRule::LastSample).unwrap();
        let grouped = ws.split_by_user();
        assert_eq!(grouped.keys().copied().collect::<Vec<_>>(), vec![3, 9]);
        assert_eq!(grouped[&3].len(), 4);
        assert_eq!(grouped[&9].len(), 2);
        let total: usize = grouped.values().map(|w| w.len()).sum();
        assert_eq!(total, ws.len());
        assert!(grouped[&9].user_ids.iter().all(|&u| u == 9));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let config = SyntheticConfig {
            users: 3,
            samples_per_user: 2000,
            positive_fraction: 0.5,
            seed: 7,
            ..Default::default()
        };
        let ds = generate_synthetic(&config).unwrap();
        assert_eq!(ds.len(), 6000);
        let (_, pos) = ds.class_counts();
        assert!(
            (pos as f64 - 3000.0).abs() < 450.0,
            "positives {pos} too far from target"
        );
        let again = generate_synthetic(&config).unwrap();
        assert_eq!(ds.samples, again.samples);
        ds.validate().unwrap();
    }
}
