//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dit_core::numkit::ModelSpec;
use dit_core::trainer::{LrSchedule, TrainConfig};

use crate::manifest::sha256_hex;
use crate::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    #[serde(default)]
    pub query: QueryConfig,
    #[serde(default)]
    pub windows: WindowConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory relative paths resolve against; the config file's own.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_seeds() -> Vec<u64> {
    (0..16).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: SourceConfig,
    /// Fraction of training labels to flip, per seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Two Gaussian clusters; the seed of each run generates the data.
    Synthetic {
        n: usize,
        test_n: usize,
        dim: usize,
        separation: f64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        numeric_columns: Vec<String>,
        #[serde(default)]
        categorical_columns: Vec<String>,
        test_fraction: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        class_a: u8,
        class_b: u8,
        test_fraction: f64,
        /// Seeded subsample of the filtered file before splitting.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_samples: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Logistic,
    LeastSquares,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![8, 8]
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize) -> Result<ModelSpec> {
        Ok(match self {
            ModelConfig::Logistic => ModelSpec::logistic(input_dim),
            ModelConfig::LeastSquares => ModelSpec::least_squares(input_dim),
            ModelConfig::Mlp { hidden } => {
                if hidden.is_empty() {
                    return Err(LabError::Config("mlp needs at least one hidden layer".into()));
                }
                ModelSpec::mlp(input_dim, hidden.clone()).map_err(|e| LabError::Config(e.to_string()))?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LrConfig {
    Constant(f64),
    /// `[[first_step, lr], ..]`
    StepDecay(Vec<(usize, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: LrConfig,
    /// `[start, end)` of logged steps; all steps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_window: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<usize>,
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: match &self.lr {
                LrConfig::Constant(lr) => LrSchedule::Constant(*lr),
                LrConfig::StepDecay(s) => LrSchedule::StepDecay(s.clone()),
            },
            seed,
            window: self.storage_window.map(|(a, b)| a..b),
            checkpoint_interval: self.checkpoint_interval,
        }
    }

    /// Prefix `[0, end)` of steps the full trajectory file covers.
    fn covered_end(&self) -> usize {
        match self.storage_window {
            Some((0, end)) => end,
            Some(_) => 0,
            None => self.steps,
        }
    }
}

/// Which direction the influence is measured along. Indices refer to the
/// test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QueryConfig {
    #[default]
    TestSetLoss,
    TestLoss {
        index: usize,
    },
    Prediction {
        index: usize,
    },
    ParamBasis {
        index: usize,
    },
    FeatureImportance {
        index: usize,
        feature: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowConfig {
    #[default]
    Full,
    /// `[[t1, t2], ..]`
    Explicit { windows: Vec<(usize, usize)> },
    /// One window per epoch.
    Epochs,
    /// Early, middle and late windows from the loss-curve segmentation.
    Stages,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LooModeConfig {
    #[default]
    Replay,
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub influence_function: bool,
    pub loo: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    pub loo_mode: LooModeConfig,
    pub jaccard_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            influence_function: true,
            loo: true,
            damping: None,
            loo_mode: LooModeConfig::Replay,
            jaccard_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    /// Evenly spaced training samples whose per-epoch series are classified.
    pub tracked_samples: usize,
    pub p_threshold: f64,
    pub fluct_threshold: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            tracked_samples: 64,
            p_threshold: 0.05,
            fluct_threshold: 1.0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// SHA-256 of the canonical JSON, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.train.batch_size.max(1))
    }

    /// Static checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seed list is empty"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(invalid("seed list has duplicates"));
        }
        let input_dim = match &self.dataset.source {
            SourceConfig::Synthetic {
                n,
                test_n,
                dim,
                separation,
            } => {
                if *n < 2 || *dim == 0 || *test_n == 0 {
                    return Err(invalid("synthetic data needs n >= 2, test_n >= 1, dim >= 1"));
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return Err(invalid("separation must be finite and non-negative"));
                }
                Some(*dim)
            }
            SourceConfig::Csv { test_fraction, .. } => {
                check_fraction(*test_fraction)?;
                None
            }
            SourceConfig::Idx {
                test_fraction,
                class_a,
                class_b,
                max_samples,
                ..
            } => {
                check_fraction(*test_fraction)?;
                if class_a == class_b {
                    return Err(invalid("class_a and class_b must differ"));
                }
                if *max_samples == Some(0) {
                    return Err(invalid("max_samples must be positive"));
                }
                None
            }
        };
        if let Some(rate) = self.dataset.flip_rate {
            if !(0.0..1.0).contains(&rate) {
                return Err(invalid(format!("flip rate {rate} outside [0, 1)")));
            }
        }
        self.model.spec(input_dim.unwrap_or(1))?;
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        let lr_ok = match &t.lr {
            LrConfig::Constant(lr) => *lr > 0.0 && lr.is_finite(),
            LrConfig::StepDecay(s) => {
                s.first().is_some_and(|f| f.0 == 0)
                    && s.windows(2).all(|w| w[0].0 < w[1].0)
                    && s.iter().all(|(_, lr)| *lr > 0.0 && lr.is_finite())
            }
        };
        if !lr_ok {
            return Err(invalid(
                "learning rates must be positive; step decay starts at step 0 and increases",
            ));
        }
        if let Some((a, b)) = t.storage_window {
            if a > b || b > t.steps {
                return Err(invalid(format!(
                    "storage window [{a}, {b}) outside [0, {})",
                    t.steps
                )));
            }
        }
        if t.checkpoint_interval == Some(0) {
            return Err(invalid("checkpoint interval must be positive"));
        }
        if let WindowConfig::Explicit { windows } = &self.windows {
            if windows.is_empty() {
                return Err(invalid("window list is empty"));
            }
            for &(t1, t2) in windows {
                if t1 >= t2 || t2 > t.steps {
                    return Err(invalid(format!(
                        "window [{t1}, {t2}] invalid for {} steps",
                        t.steps
                    )));
                }
                if t.checkpoint_interval.is_none() && t2 > t.covered_end() {
                    return Err(invalid(format!(
                        "window [{t1}, {t2}] needs steps outside the storage window; set checkpoint_interval"
                    )));
                }
            }
        } else if t.steps > 0 && t.checkpoint_interval.is_none() && t.covered_end() < t.steps {
            return Err(invalid(
                "derived windows need the full run logged or checkpointed",
            ));
        }
        let b = &self.baselines;
        if !(b.jaccard_fraction > 0.0 && b.jaccard_fraction <= 1.0) {
            return Err(invalid("jaccard fraction must lie in (0, 1]"));
        }
        if b.damping.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return Err(invalid("damping must be positive"));
        }
        let d = &self.dynamics;
        if d.tracked_samples < 2 {
            return Err(invalid("dynamics needs at least two tracked samples"));
        }
        if !(d.p_threshold > 0.0 && d.p_threshold < 1.0)
            || d.fluct_threshold.is_nan()
            || d.fluct_threshold < 0.0
        {
            return Err(invalid("dynamics thresholds out of range"));
        }
        if let SourceConfig::Synthetic { n, test_n, dim, .. } = &self.dataset.source {
            self.validate_for_data(*n, *test_n, *dim)?;
        }
        Ok(())
    }

    /// Checks that depend on the split sizes and the feature dimension.
    pub fn validate_for_data(&self, n_train: usize, n_test: usize, dim: usize) -> Result<()> {
        if self.train.batch_size > n_train {
            return Err(invalid(format!(
                "batch size {} exceeds {n_train} training samples",
                self.train.batch_size
            )));
        }
        let p = self.model.spec(dim)?.num_params();
        match self.query {
            QueryConfig::TestSetLoss => {}
            QueryConfig::ParamBasis { index } => {
                if index >= p {
                    return Err(invalid(format!("parameter index {index} >= p = {p}")));
                }
            }
            QueryConfig::TestLoss { index } | QueryConfig::Prediction { index } => {
                if index >= n_test {
                    return Err(invalid(format!("test index {index} >= {n_test} test samples")));
                }
            }
            QueryConfig::FeatureImportance { index, feature } => {
                if index >= n_test || feature >= dim {
                    return Err(invalid(format!(
                        "feature query ({index}, {feature}) out of range"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of epoch windows, the last one possibly partial.
    pub fn epochs(&self, n: usize) -> usize {
        self.train.steps.div_ceil(self.steps_per_epoch(n))
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("test fraction {f} outside (0, 1)")))
    }
}
