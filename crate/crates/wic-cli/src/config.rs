//! Job configuration: a flat JSON file whose keys mirror the training
//! and encoder settings, with command-line flags taking precedence.
//! Unknown keys are hard errors so hyperparameter typos cannot pass
//! silently.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wic_core::encoder::EncoderConfig;
use wic_core::strategy::StrategyKind;
use wic_core::trainer::TrainConfig;

/// Raw file contents; every key optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    // training
    pub learning_rate: Option<f64>,
    pub num_epochs: Option<usize>,
    pub adam_epsilon: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub warmup_ratio: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub max_grad_norm: Option<f64>,
    pub max_seq_length: Option<usize>,
    pub gradient_accumulation_steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub eval_every_steps: Option<usize>,
    pub patience_evals: Option<usize>,
    pub seed: Option<u64>,
    // encoder
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub hidden_size: Option<usize>,
    pub ffn_size: Option<usize>,
    pub vocab_size: Option<usize>,
    pub max_positions: Option<usize>,
    pub dropout_rate: Option<f64>,
    // data handling
    pub split_ratio: Option<f64>,
    pub strategy: Option<String>,
    // paths
    pub data: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Parses a JSON config file, rejecting unknown keys and type mismatches.
pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let file: ConfigFile = serde_json::from_str(&text)
        .with_context(|| format!("invalid config file {}", path.display()))?;
    Ok(file)
}

/// Desk-scale encoder defaults; `vocab_size` is replaced by the actual
/// vocabulary size at model build time and `max_positions` tracks
/// `max_seq_length` unless set explicitly.
fn default_encoder(max_seq_length: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: 2,
        num_heads: 2,
        hidden_size: 64,
        ffn_size: 256,
        vocab_size: 2048,
        max_positions: max_seq_length,
        dropout_rate: 0.1,
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct JobConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub encoder: EncoderConfig,
    pub split_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(skip)]
    pub paths: JobPaths,
}

#[derive(Debug, Clone, Default)]
pub struct JobPaths {
    pub data: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl JobConfig {
    /// Applies file values over the fixed defaults.
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: file.learning_rate.unwrap_or(defaults.learning_rate),
            num_epochs: file.num_epochs.unwrap_or(defaults.num_epochs),
            adam_epsilon: file.adam_epsilon.unwrap_or(defaults.adam_epsilon),
            adam_beta1: file.adam_beta1.unwrap_or(defaults.adam_beta1),
            adam_beta2: file.adam_beta2.unwrap_or(defaults.adam_beta2),
            warmup_ratio: file.warmup_ratio.unwrap_or(defaults.warmup_ratio),
            warmup_steps: file.warmup_steps.unwrap_or(defaults.warmup_steps),
            max_grad_norm: file.max_grad_norm.unwrap_or(defaults.max_grad_norm),
            max_seq_length: file.max_seq_length.unwrap_or(defaults.max_seq_length),
            gradient_accumulation_steps: file
                .gradient_accumulation_steps
                .unwrap_or(defaults.gradient_accumulation_steps),
            batch_size: file.batch_size.unwrap_or(defaults.batch_size),
            eval_every_steps: file.eval_every_steps.unwrap_or(defaults.eval_every_steps),
            patience_evals: file.patience_evals.unwrap_or(defaults.patience_evals),
            seed: file.seed.unwrap_or(defaults.seed),
        };
        let encoder_defaults = default_encoder(train.max_seq_length);
        let encoder = EncoderConfig {
            num_layers: file.num_layers.unwrap_or(encoder_defaults.num_layers),
            num_heads: file.num_heads.unwrap_or(encoder_defaults.num_heads),
            hidden_size: file.hidden_size.unwrap_or(encoder_defaults.hidden_size),
            ffn_size: file.ffn_size.unwrap_or(encoder_defaults.ffn_size),
            vocab_size: file.vocab_size.unwrap_or(encoder_defaults.vocab_size),
            max_positions: file.max_positions.unwrap_or(encoder_defaults.max_positions),
            dropout_rate: file.dropout_rate.unwrap_or(encoder_defaults.dropout_rate),
        };
        let split_ratio = file.split_ratio.unwrap_or(0.8);
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            bail!("split_ratio {split_ratio} is outside (0, 1)");
        }
        let strategy = file
            .strategy
            .as_deref()
            .map(StrategyKind::from_cli_name)
            .transpose()?;
        Ok(JobConfig {
            train,
            encoder,
            split_ratio,
            strategy,
            paths: JobPaths {
                data: file.data,
                gold: file.gold,
                vocab: file.vocab,
                init: file.init,
                checkpoint: file.checkpoint,
                out: file.out,
            },
        })
    }

    /// Loads the optional config file and resolves defaults.
    pub fn load(config_path: Option<&Path>) -> Result<Self> {
        let file = match config_path {
            Some(path) => load_config(path)?,
            None => ConfigFile::default(),
        };
        JobConfig::from_file(file)
    }

    /// The effective flat-key settings, for the config echo.
    pub fn effective_json(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("serializable config");
        let obj = value.as_object_mut().expect("config is an object");
        if let Some(strategy) = self.strategy {
            obj.insert("strategy".into(), strategy.cli_name().into());
        }
        value
    }
}
