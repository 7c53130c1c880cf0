//! Single-file checkpoint container: a JSON manifest (config, vocabulary,
//! strategy, seed, training metadata, tensor shape index) followed by the
//! named tensors as raw little-endian 32-bit floats. Save → load → save
//! is byte-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Result, WicError};
use crate::model::WicModel;
use crate::strategy::{ClassifierHead, StrategyKind};
use crate::tensor::Matrix;
use crate::tokenizer::Vocabulary;

const MAGIC: &[u8; 8] = b"WICCKPT1";

/// Training metadata carried alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub best_step: Option<usize>,
    pub stop_reason: Option<String>,
    pub evaluations: usize,
    pub final_val_loss: Option<f64>,
    pub final_val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub encoder_config: EncoderConfig,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub max_seq_length: usize,
    pub vocabulary: Vec<String>,
    pub training: TrainingMeta,
    pub tensors: Vec<TensorInfo>,
}

/// A loaded (or about-to-be-saved) model bundle.
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: WicModel<f32>,
    pub vocab: Vocabulary,
}

impl Checkpoint {
    pub fn build(
        model: WicModel<f32>,
        vocab: Vocabulary,
        max_seq_length: usize,
        seed: u64,
        training: TrainingMeta,
    ) -> Self {
        let tensors = model
            .named_tensors()
            .into_iter()
            .map(|(name, m)| TensorInfo {
                name,
                shape: vec![m.rows(), m.cols()],
            })
            .collect();
        let manifest = CheckpointManifest {
            format_version: 1,
            encoder_config: model.config().clone(),
            strategy: model.strategy,
            seed,
            max_seq_length,
            vocabulary: vocab.tokens().to_vec(),
            training,
            tensors,
        };
        Checkpoint {
            manifest,
            model,
            vocab,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if !self.model.all_finite() {
            return Err(WicError::NonFinite {
                context: "checkpoint parameters".into(),
            });
        }
        let file = File::create(path).map_err(|e| WicError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io_err = |e| WicError::io(path, e);

        let manifest = serde_json::to_vec(&self.manifest).expect("serializable manifest");
        out.write_all(MAGIC).map_err(io_err)?;
        out.write_all(&(manifest.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&manifest).map_err(io_err)?;
        for tensor in self.model.tensors() {
            for &x in tensor.iter() {
                out.write_all(&x.to_le_bytes()).map_err(io_err)?;
            }
        }
        out.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| WicError::io(path, e))?;
        let mut input = BufReader::new(file);
        let io_err = |e| WicError::io(path, e);

        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(WicError::CheckpointFormat("bad magic bytes".into()));
        }
        let mut len_bytes = [0u8; 8];
        input.read_exact(&mut len_bytes).map_err(io_err)?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        input.read_exact(&mut manifest_bytes).map_err(io_err)?;
        let manifest: CheckpointManifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| WicError::CheckpointFormat(format!("manifest: {e}")))?;
        if manifest.format_version != 1 {
            return Err(WicError::CheckpointFormat(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }

        let vocab = Vocabulary::from_token_list(manifest.vocabulary.clone())?;
        if vocab.len() != manifest.encoder_config.vocab_size {
            return Err(WicError::CheckpointFormat(format!(
                "vocabulary has {} entries but config says {}",
                vocab.len(),
                manifest.encoder_config.vocab_size
            )));
        }

        // Template gives the expected tensor names/shapes in fixed order.
        let config = manifest.encoder_config.clone();
        let params = crate::encoder::EncoderParams::<f32>::zeros(&config);
        let head = ClassifierHead::zeros(manifest.strategy.feature_dim(config.hidden_size));
        let mut model = WicModel::from_parts(config, params, manifest.strategy, head)?;

        let expected: Vec<TensorInfo> = model
            .named_tensors()
            .into_iter()
            .map(|(name, m)| TensorInfo {
                name,
                shape: vec![m.rows(), m.cols()],
            })
            .collect();
        if expected != manifest.tensors {
            return Err(WicError::CheckpointFormat(
                "tensor index does not match the model layout".into(),
            ));
        }

        for tensor in model.tensors_mut() {
            let mut bytes = vec![0u8; tensor.len() * 4];
            input.read_exact(&mut bytes).map_err(io_err)?;
            for (x, chunk) in tensor.iter_mut().zip(bytes.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
        }
        let mut trailing = Vec::new();
        input.read_to_end(&mut trailing).map_err(io_err)?;
        if !trailing.is_empty() {
            return Err(WicError::CheckpointFormat(format!(
                "{} trailing bytes after tensor payload",
                trailing.len()
            )));
        }
        if !model.all_finite() {
            return Err(WicError::NonFinite {
                context: "checkpoint parameters".into(),
            });
        }

        Ok(Checkpoint {
            manifest,
            model,
            vocab,
        })
    }
}

/// Bit-equality of two parameter sets (f32 payload comparison).
pub fn params_bit_equal(a: &WicModel<f32>, b: &WicModel<f32>) -> bool {
    let ta = a.tensors();
    let tb = b.tensors();
    ta.len() == tb.len()
        && ta
            .iter()
            .zip(tb.iter())
            .all(|(x, y): (&&Matrix<f32>, &&Matrix<f32>)| {
                x.as_slice().len() == y.as_slice().len()
                    && x.as_slice()
                        .iter()
                        .zip(y.as_slice().iter())
                        .all(|(p, q)| p.to_bits() == q.to_bits())
            })
}
