//! Experiment configuration: a versioned TOML schema with a closed key
//! set. Every run archives the fully-resolved config (defaults expanded)
//! beside its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use foglab_core::data::{ColumnMap, ImuDataset, LabelRule, SyntheticConfig};
use foglab_core::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub nested_cv: NestedCvConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub federated: FederatedConfig,
}

fn default_seed() -> u64 {
    42
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            out_dir: None,
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            models: ModelsConfig::default(),
            nested_cv: NestedCvConfig::default(),
            explain: ExplainConfig::default(),
            federated: FederatedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// "synthetic" or "csv".
    #[serde(default = "default_source")]
    pub source: String,
    /// One file per user when `source = "csv"`.
    #[serde(default)]
    pub paths: Vec<String>,
    /// User tag per path; defaults to 1..=n.
    #[serde(default)]
    pub user_ids: Vec<u32>,
    #[serde(default)]
    pub columns: ColumnsConfig,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

fn default_source() -> String {
    "synthetic".to_string()
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: default_source(),
            paths: Vec::new(),
            user_ids: Vec::new(),
            columns: ColumnsConfig::default(),
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnsConfig {
    pub time: String,
    pub acc_ml: String,
    pub acc_ap: String,
    pub acc_si: String,
    pub gyr_ml: String,
    pub gyr_ap: String,
    pub gyr_si: String,
    pub label: String,
    /// Empty string means "no user column; tag everything user 0".
    #[serde(default)]
    pub user: String,
}

impl Default for ColumnsConfig {
    fn default() -> Self {
        let canon = ColumnMap::canonical();
        Self {
            time: canon.time,
            acc_ml: canon.acc_ml,
            acc_ap: canon.acc_ap,
            acc_si: canon.acc_si,
            gyr_ml: canon.gyr_ml,
            gyr_ap: canon.gyr_ap,
            gyr_si: canon.gyr_si,
            label: canon.label,
            user: String::new(),
        }
    }
}

impl ColumnsConfig {
    pub fn to_map(&self) -> ColumnMap {
        ColumnMap {
            time: self.time.clone(),
            acc_ml: self.acc_ml.clone(),
            acc_ap: self.acc_ap.clone(),
            acc_si: self.acc_si.clone(),
            gyr_ml: self.gyr_ml.clone(),
            gyr_ap: self.gyr_ap.clone(),
            gyr_si: self.gyr_si.clone(),
            label: self.label.clone(),
            user: if self.user.is_empty() {
                None
            } else {
                Some(self.user.clone())
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub users: usize,
    pub samples_per_user: usize,
    pub positive_fraction: f64,
    pub shift: f64,
    pub heterogeneity: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        Self {
            users: d.users,
            samples_per_user: d.samples_per_user,
            positive_fraction: d.positive_fraction,
            shift: d.shift,
            heterogeneity: d.heterogeneity,
        }
    }
}

impl SyntheticSection {
    pub fn to_config(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            users: self.users,
            samples_per_user: self.samples_per_user,
            positive_fraction: self.positive_fraction,
            shift: self.shift,
            heterogeneity: self.heterogeneity,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub balance_ratio: f64,
    pub window_len: usize,
    pub stride: usize,
    pub label_rule: String,
    pub test_fraction: f64,
    pub stratified: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            balance_ratio: 1.0,
            window_len: 16,
            stride: 16,
            label_rule: "majority".to_string(),
            test_fraction: 0.2,
            stratified: true,
        }
    }
}

impl PreprocessConfig {
    pub fn label_rule(&self) -> Result<LabelRule> {
        LabelRule::parse(&self.label_rule)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    #[serde(default)]
    pub random_forest: ForestSection,
    #[serde(default)]
    pub extra_trees: ExtraTreesSection,
    #[serde(default)]
    pub gbm: GbmSection,
    #[serde(default)]
    pub stack: StackSection,
    #[serde(default)]
    pub logistic: LogisticSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestSection {
    fn default() -> Self {
        // random-forest defaults: 50 shallow trees
        Self {
            n_estimators: 50,
            max_depth: 2,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtraTreesSection {
    pub n_estimators: usize,
    /// 0 = unlimited.
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for ExtraTreesSection {
    fn default() -> Self {
        Self {
            n_estimators: 10,
            max_depth: 0,
            min_samples_split: 2,
            min_samples_leaf: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmSection {
    pub iterations: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
}

impl Default for GbmSection {
    fn default() -> Self {
        Self {
            iterations: 50,
            depth: 3,
            learning_rate: 0.01,
            l2_leaf_reg: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSection {
    pub cv_folds: usize,
    pub passthrough: bool,
}

impl Default for StackSection {
    fn default() -> Self {
        Self {
            cv_folds: 10,
            passthrough: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSection {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub l2: f64,
}

impl Default for LogisticSection {
    fn default() -> Self {
        let d = foglab_core::stacking::LogisticConfig::default();
        Self {
            learning_rate: d.learning_rate,
            max_iters: d.max_iters,
            tol: d.tol,
            l2: d.l2,
        }
    }
}

impl LogisticSection {
    pub fn to_config(&self) -> foglab_core::stacking::LogisticConfig {
        foglab_core::stacking::LogisticConfig {
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            tol: self.tol,
            l2: self.l2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedCvConfig {
    pub outer_k: usize,
    pub inner_k: usize,
    /// "random_forest", "extra_trees", or "gbm".
    pub learner: String,
    pub grid_max_depth: Vec<usize>,
    pub grid_n_estimators: Vec<usize>,
}

impl Default for NestedCvConfig {
    fn default() -> Self {
        Self {
            outer_k: 10,
            inner_k: 3,
            learner: "random_forest".to_string(),
            grid_max_depth: vec![2, 4],
            grid_n_estimators: vec![10, 50],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub background_size: usize,
    pub samples: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            background_size: 100,
            samples: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederatedConfig {
    pub rounds: usize,
    pub min_samples_per_user: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub units: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            min_samples_per_user: 20,
            filters: 64,
            kernel_size: 3,
            units: 64,
            dropout: 0.3,
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 8,
            patience: 2,
            validation_fraction: 0.2,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    /// Fully-resolved TOML (all defaults expanded), archived with outputs.
    pub fn render_resolved(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))
    }

    /// Loads the configured data source. CSV sources are merged and
    /// re-tagged per `user_ids`; a single pre-tagged file keeps its own
    /// user column.
    pub fn resolve_dataset(&self) -> Result<ImuDataset> {
        match self.data.source.as_str() {
            "synthetic" => {
                foglab_core::data::generate_synthetic(&self.data.synthetic.to_config(self.seed))
            }
            "csv" => {
                if self.data.paths.is_empty() {
                    return Err(Error::Schema(
                        "data.source = \"csv\" needs at least one entry in data.paths".into(),
                    ));
                }
                let columns = self.data.columns.to_map();
                let mut datasets = Vec::new();
                for path in &self.data.paths {
                    let (ds, _) = foglab_core::data::load_csv(path, &columns)?;
                    datasets.push(ds);
                }
                if datasets.len() == 1 && columns.user.is_some() {
                    // already user-tagged; keep the file's own ids
                    let ds = datasets.into_iter().next().unwrap();
                    ds.validate()?;
                    return Ok(ds);
                }
                let user_ids: Vec<u32> = if self.data.user_ids.is_empty() {
                    (1..=datasets.len() as u32).collect()
                } else {
                    self.data.user_ids.clone()
                };
                if user_ids.len() != datasets.len() {
                    return Err(Error::Schema(format!(
                        "{} data.paths but {} data.user_ids",
                        datasets.len(),
                        user_ids.len()
                    )));
                }
                foglab_core::data::merge_users(&datasets, &user_ids)
            }
            other => Err(Error::Schema(format!(
                "unknown data.source '{other}' (expected \"synthetic\" or \"csv\")"
            ))),
        }
    }
}
