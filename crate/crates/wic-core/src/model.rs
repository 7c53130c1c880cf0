//! Encoder + strategy head bundled as one trainable classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Tag;
use crate::encoder::{init_weights, Encoder, EncoderConfig, EncoderParams};
use crate::error::{Result, WicError};
use crate::strategy::{
    classify, extract_features, head_backward, scatter_feature_grad, ClassifierHead, StrategyKind,
};
use crate::tensor::{Matrix, Scalar};
use crate::tokenizer::PackedPair;

pub struct WicModel<T> {
    pub encoder: Encoder<T>,
    pub strategy: StrategyKind,
    pub head: ClassifierHead<T>,
}

/// Gradients for every trainable tensor, shaped like the model.
pub struct ModelGrads<T> {
    pub encoder: EncoderParams<T>,
    pub head: ClassifierHead<T>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros(config: &EncoderConfig, strategy: StrategyKind) -> Self {
        ModelGrads {
            encoder: EncoderParams::zeros(config),
            head: ClassifierHead::zeros(strategy.feature_dim(config.hidden_size)),
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = self.encoder.tensors();
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = self.encoder.tensors_mut();
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn add_assign(&mut self, other: &ModelGrads<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn global_norm(&self) -> T {
        self.tensors()
            .iter()
            .map(|t| t.squared_sum())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }
}

impl<T: Scalar> WicModel<T> {
    /// Fresh model: encoder weights and head drawn from one seeded stream.
    pub fn new(config: EncoderConfig, strategy: StrategyKind, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = EncoderParams::zeros(&config);
        init_weights(&mut params, &mut rng);
        let head = ClassifierHead::init(strategy.feature_dim(config.hidden_size), &mut rng);
        Ok(WicModel {
            encoder: Encoder::from_params(config, params),
            strategy,
            head,
        })
    }

    pub fn from_parts(
        config: EncoderConfig,
        params: EncoderParams<T>,
        strategy: StrategyKind,
        head: ClassifierHead<T>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = strategy.feature_dim(config.hidden_size);
        if head.feature_dim() != expected {
            return Err(WicError::DimensionMismatch {
                expected,
                found: head.feature_dim(),
            });
        }
        Ok(WicModel {
            encoder: Encoder::from_params(config, params),
            strategy,
            head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.encoder.config
    }

    /// `(p_T, p_F)` for one packed pair, dropout disabled.
    pub fn predict_proba(&self, packed: &PackedPair) -> Result<(T, T)> {
        let (hidden, _) = self.encoder.forward(packed)?;
        let features = extract_features(self.strategy, &hidden, packed);
        classify(&self.head, &features)
    }

    /// Cross-entropy of the gold tag under the classifier, dropout
    /// disabled (evaluation path).
    pub fn loss(&self, packed: &PackedPair, tag: Tag) -> Result<T> {
        let (hidden, _) = self.encoder.forward(packed)?;
        let features = extract_features(self.strategy, &hidden, packed);
        let logits = self.head.logits(&features)?;
        Ok(cross_entropy(logits, tag).0)
    }

    /// Loss plus exact gradients for one example. Dropout is active when
    /// `dropout_rng` is given and the config rate is non-zero.
    pub fn loss_and_grads(
        &self,
        packed: &PackedPair,
        tag: Tag,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(T, ModelGrads<T>)> {
        let (hidden, trace) = match dropout_rng {
            Some(rng) => self.encoder.forward_training(packed, rng)?,
            None => self.encoder.forward(packed)?,
        };
        let features = extract_features(self.strategy, &hidden, packed);
        let logits = self.head.logits(&features)?;
        let (loss, dlogits) = cross_entropy(logits, tag);
        let (head_grad, dfeatures) = head_backward(&self.head, &features, dlogits);
        let mut dhidden = Matrix::zeros(hidden.rows(), hidden.cols());
        scatter_feature_grad(self.strategy, &dfeatures, packed, &mut dhidden);
        let encoder_grad = self.encoder.backward(&trace, &dhidden);
        Ok((
            loss,
            ModelGrads {
                encoder: encoder_grad,
                head: head_grad,
            },
        ))
    }

    /// Hard decision: `T` iff `p_T >= 0.5`.
    pub fn predict_tag(&self, packed: &PackedPair) -> Result<Tag> {
        let (p_true, _) = self.predict_proba(packed)?;
        Ok(if p_true >= T::from_f64(0.5) {
            Tag::T
        } else {
            Tag::F
        })
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = self.encoder.params.tensors();
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = self.encoder.params.tensors_mut();
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = self.encoder.params.named_tensors();
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn clone_params(&self) -> (EncoderParams<T>, ClassifierHead<T>) {
        (self.encoder.params.clone(), self.head.clone())
    }

    pub fn restore_params(&mut self, params: EncoderParams<T>, head: ClassifierHead<T>) {
        self.encoder.params = params;
        self.head = head;
    }

    pub fn cast<U: Scalar>(&self) -> WicModel<U> {
        WicModel {
            encoder: Encoder::from_params(self.encoder.config.clone(), self.encoder.params.cast()),
            strategy: self.strategy,
            head: self.head.cast(),
        }
    }
}

/// Numerically stable softmax cross-entropy over two logits.
/// Returns the loss and `dloss/dlogits` (`probs - onehot(gold)`).
pub fn cross_entropy<T: Scalar>(logits: [T; 2], tag: Tag) -> (T, [T; 2]) {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    let gold = match tag {
        Tag::T => 0,
        Tag::F => 1,
    };
    let loss = lse - logits[gold];
    let mut dlogits = [(logits[0] - lse).exp(), (logits[1] - lse).exp()];
    dlogits[gold] -= T::one();
    (loss, dlogits)
}
