//! Run configuration schema (versioned JSON) and stable config hashing.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::datagen::SyntheticConfig;
use crate::encoder::TrainConfig;
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, LabelKernel};
use crate::losses::{LossKind, ThrNorm};
use crate::metrics::{ProbeConfig, ProbeResult};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Training method: the contrastive losses under study, or the L1
/// regression baseline they are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Contrastive,
    Baseline,
}

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Csv { path: String },
}

/// Architecture, optimizer and loss settings, all with recipe defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    /// Required for contrastive runs; ignored by the baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(default = "default_kernel")]
    pub kernel: LabelKernel,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every_epochs: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Desk-scale default; the full recipe uses 300.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub thr_norm: ThrNorm,
    /// Standardize features per coordinate with train-split statistics.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

fn default_kernel() -> LabelKernel {
    LabelKernel::new(KernelKind::Gaussian, 2.0).expect("valid default kernel")
}
fn default_learning_rate() -> f64 {
    1e-4
}
fn default_lr_decay() -> f64 {
    0.9
}
fn default_decay_every() -> usize {
    10
}
fn default_weight_decay() -> f64 {
    5e-5
}
fn default_batch_size() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_temperature() -> f64 {
    0.1
}
fn default_hidden_dims() -> Vec<usize> {
    vec![64, 64]
}
fn default_embedding_dim() -> usize {
    8
}
fn default_standardize() -> bool {
    true
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            loss: None,
            kernel: default_kernel(),
            learning_rate: default_learning_rate(),
            lr_decay: default_lr_decay(),
            decay_every_epochs: default_decay_every(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            seed: 0,
            temperature: default_temperature(),
            hidden_dims: default_hidden_dims(),
            embedding_dim: default_embedding_dim(),
            thr_norm: ThrNorm::default(),
            standardize: default_standardize(),
        }
    }
}

/// One full run: data source, method, training spec, probe settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub method: Method,
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.method == Method::Contrastive && self.train.loss.is_none() {
            return Err(Error::Config(
                "contrastive run needs a loss: one of \"yaware\", \"thr\", \"exp\", \"supcon\""
                    .into(),
            ));
        }
        if self.train.embedding_dim < 2 {
            return Err(Error::Config("embedding_dim must be at least 2".into()));
        }
        if let DataSource::Synthetic(cfg) = &self.data {
            cfg.validate()?;
        }
        // surface optimizer misconfiguration early
        self.to_train_config()?.validate()
    }

    /// Descriptive method name used in CSV rows and tables.
    pub fn method_name(&self) -> String {
        match self.method {
            Method::Baseline => "baseline_l1".to_string(),
            Method::Contrastive => self
                .train
                .loss
                .map(|l| l.name().to_string())
                .unwrap_or_else(|| "contrastive".to_string()),
        }
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let loss = match self.method {
            // the baseline ignores the loss; a valid placeholder keeps the
            // config constructible
            Method::Baseline => self.train.loss.unwrap_or(LossKind::Exp),
            Method::Contrastive => self.train.loss.ok_or_else(|| {
                Error::Config("contrastive run needs a loss".into())
            })?,
        };
        Ok(TrainConfig {
            learning_rate: self.train.learning_rate,
            lr_decay: self.train.lr_decay,
            decay_every_epochs: self.train.decay_every_epochs,
            weight_decay: self.train.weight_decay,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.train.seed,
            temperature: self.train.temperature,
            loss,
            kernel: self.train.kernel,
            thr_norm: self.train.thr_norm,
            adam: Default::default(),
        })
    }
}

/// Ablation grid: kernels × losses × seeds over a shared base config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub base: RunConfig,
    #[serde(default = "default_grid_kernels")]
    pub kernels: Vec<LabelKernel>,
    #[serde(default = "default_grid_losses")]
    pub losses: Vec<LossKind>,
    #[serde(default = "default_grid_seeds")]
    pub seeds: Vec<u64>,
}

fn default_grid_kernels() -> Vec<LabelKernel> {
    vec![
        LabelKernel::cauchy(1.0).expect("valid"),
        LabelKernel::cauchy(2.0).expect("valid"),
        LabelKernel::gaussian(1.0).expect("valid"),
        LabelKernel::gaussian(2.0).expect("valid"),
    ]
}

fn default_grid_losses() -> Vec<LossKind> {
    vec![LossKind::YAware, LossKind::Threshold, LossKind::Exp]
}

fn default_grid_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.losses.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        self.base.validate()
    }

    /// Cell configs in deterministic grid order.
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut cells = Vec::with_capacity(self.kernels.len() * self.losses.len() * self.seeds.len());
        for &kernel in &self.kernels {
            for &loss in &self.losses {
                for &seed in &self.seeds {
                    let mut cfg = self.base.clone();
                    cfg.method = Method::Contrastive;
                    cfg.train.kernel = kernel;
                    cfg.train.loss = Some(loss);
                    cfg.train.seed = seed;
                    cells.push(cfg);
                }
            }
        }
        cells
    }
}

/// Everything needed to audit one finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub config: RunConfig,
    pub result: ProbeResult,
    pub wall_time_secs: f64,
    pub trace_path: String,
}

/// Per-seed directional comparison of one method against the baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub method: String,
    pub baseline: String,
    pub seeds: usize,
    pub ext_mae_wins: usize,
    pub bacc_wins: usize,
    pub score_wins: usize,
    pub median_score: f64,
    pub median_score_baseline: f64,
}

/// Canonical JSON text: object keys sorted, no whitespace.
///
/// Hash input for [`config_hash`]; reruns of a byte-identical config land in
/// the same run directory regardless of field order in the source file.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .into_iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).expect("string serializes"),
                        canonical_json(&map[k])
                    )
                })
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", inner.join(","))
        }
        other => other.to_string(),
    }
}

/// 16-hex-digit digest of the canonicalized config.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let value = serde_json::to_value(cfg)?;
    let digest = Sha256::digest(canonical_json(&value).as_bytes());
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Read and validate a run config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read and validate a grid config file.
pub fn load_grid(path: &Path) -> Result<GridConfig> {
    let text = std::fs::read_to_string(path)?;
    let grid: GridConfig = serde_json::from_str(&text)?;
    grid.validate()?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config() -> RunConfig {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            method: Method::Contrastive,
            data: DataSource::Synthetic(SyntheticConfig::new(50, 20, 20)),
            train: TrainSpec {
                loss: Some(LossKind::Exp),
                ..Default::default()
            },
            probe: ProbeConfig::default(),
        }
    }

    #[test]
    fn hash_is_stable_under_field_order() {
        let cfg = synthetic_config();
        let h1 = config_hash(&cfg).unwrap();
        // round-trip through JSON text (object order may differ) and re-hash
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(h1, config_hash(&back).unwrap());
        assert_eq!(h1.len(), 16);
    }

    #[test]
    fn hash_changes_with_seed() {
        let cfg = synthetic_config();
        let mut other = cfg.clone();
        other.train.seed = 17;
        assert_ne!(config_hash(&cfg).unwrap(), config_hash(&other).unwrap());
    }

    #[test]
    fn unknown_loss_name_lists_valid_names() {
        let text = r#"{
            "data": {"synthetic": {"n_train": 10, "n_internal_test": 5, "n_external_test": 5}},
            "train": {"loss": "contrastive-magic"}
        }"#;
        let err = serde_json::from_str::<RunConfig>(text).unwrap_err().to_string();
        assert!(err.contains("yaware") && err.contains("thr") && err.contains("exp") && err.contains("supcon"), "{err}");
    }

    #[test]
    fn contrastive_without_loss_is_rejected() {
        let text = r#"{
            "data": {"synthetic": {"n_train": 10, "n_internal_test": 5, "n_external_test": 5}}
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn baseline_needs_no_loss() {
        let text = r#"{
            "method": "baseline",
            "data": {"synthetic": {"n_train": 10, "n_internal_test": 5, "n_external_test": 5}}
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.method_name(), "baseline_l1");
    }

    #[test]
    fn default_grid_axes_match_the_ablation() {
        let grid = GridConfig {
            base: synthetic_config(),
            kernels: default_grid_kernels(),
            losses: default_grid_losses(),
            seeds: default_grid_seeds(),
        };
        assert_eq!(grid.cells().len(), 4 * 3 * 3);
        let names: Vec<(&str, f64)> = grid
            .kernels
            .iter()
            .map(|k| (k.kind().name(), k.bandwidth()))
            .collect();
        assert_eq!(
            names,
            vec![("cauchy", 1.0), ("cauchy", 2.0), ("rbf", 1.0), ("rbf", 2.0)]
        );
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: Value = serde_json::from_str(r#"{"b": 1, "a": {"d": [2, 1], "c": null}}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":{"c":null,"d":[2,1]},"b":1}"#);
    }
}
