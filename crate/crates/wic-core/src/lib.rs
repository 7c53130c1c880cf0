//! Word-in-context disambiguation at desk scale: a small transformer
//! encoder trained from scratch, eleven feature-extraction strategies
//! over its hidden states, and the surrounding training/evaluation
//! machinery.

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod nn;
pub mod strategy;
pub mod synthetic;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointManifest, TrainingMeta};
pub use data::{GoldLabel, LanguagePair, Tag, WicInstance};
pub use encoder::{Encoder, EncoderConfig, EncoderParams};
pub use error::{Result, WicError};
pub use evaluation::ConfusionMatrix;
pub use inference::{OnUntokenizable, PredictionRecord};
pub use model::WicModel;
pub use strategy::{ClassifierHead, StrategyKind};
pub use tensor::{Matrix, Scalar};
pub use tokenizer::{PackedPair, Vocabulary};
pub use trainer::{TrainConfig, TrainHistory};
