//! The eleven feature-extraction strategies and the softmax classifier.
//!
//! Each strategy selects encoder output vectors (`[CLS]`, the
//! `<B>`/`<E>` markers, or the target sub-words as mean/first/last),
//! concatenates them, and feeds the result to a single
//! affine-plus-softmax head.
//! Concatenation order is sentence-1 component, sentence-2 component,
//! then the `[CLS]` vector when the strategy includes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::INIT_STD;
use crate::error::{Result, WicError};
use crate::nn::softmax_in_place;
use crate::tensor::{fl, Matrix, Scalar};
use crate::tokenizer::PackedPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Cls,
    B,
    BCls,
    E,
    ECls,
    EntityPool,
    EntityFirst,
    EntityLast,
    ClsEntityPool,
    ClsEntityFirst,
    ClsEntityLast,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 11] = [
        StrategyKind::Cls,
        StrategyKind::B,
        StrategyKind::BCls,
        StrategyKind::E,
        StrategyKind::ECls,
        StrategyKind::EntityPool,
        StrategyKind::EntityFirst,
        StrategyKind::EntityLast,
        StrategyKind::ClsEntityPool,
        StrategyKind::ClsEntityFirst,
        StrategyKind::ClsEntityLast,
    ];

    /// Canonical command-line name.
    pub fn cli_name(self) -> &'static str {
        match self {
            StrategyKind::Cls => "cls",
            StrategyKind::B => "b",
            StrategyKind::BCls => "b-cls",
            StrategyKind::E => "e",
            StrategyKind::ECls => "e-cls",
            StrategyKind::EntityPool => "entity-pool",
            StrategyKind::EntityFirst => "entity-first",
            StrategyKind::EntityLast => "entity-last",
            StrategyKind::ClsEntityPool => "cls-entity-pool",
            StrategyKind::ClsEntityFirst => "cls-entity-first",
            StrategyKind::ClsEntityLast => "cls-entity-last",
        }
    }

    pub fn from_cli_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.cli_name() == name)
            .ok_or_else(|| WicError::UnknownStrategy(name.to_owned()))
    }

    /// True when the recipe appends the `[CLS]` vector.
    fn includes_cls(self) -> bool {
        matches!(
            self,
            StrategyKind::BCls
                | StrategyKind::ECls
                | StrategyKind::ClsEntityPool
                | StrategyKind::ClsEntityFirst
                | StrategyKind::ClsEntityLast
        )
    }

    /// Length of the extracted feature vector for hidden size `h`.
    pub fn feature_dim(self, h: usize) -> usize {
        match self {
            StrategyKind::Cls => h,
            StrategyKind::B
            | StrategyKind::E
            | StrategyKind::EntityPool
            | StrategyKind::EntityFirst
            | StrategyKind::EntityLast => 2 * h,
            StrategyKind::BCls
            | StrategyKind::ECls
            | StrategyKind::ClsEntityPool
            | StrategyKind::ClsEntityFirst
            | StrategyKind::ClsEntityLast => 3 * h,
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

/// The hidden-state rows a strategy reads for one sentence, in scatter
/// form: `(row, weight)` pairs that sum to the sentence component.
fn sentence_component<T: Scalar>(
    strategy: StrategyKind,
    packed: &PackedPair,
    first_sentence: bool,
) -> Vec<(usize, T)> {
    let (b, e, span) = if first_sentence {
        (packed.b1_pos, packed.e1_pos, packed.span1_subwords.clone())
    } else {
        (packed.b2_pos, packed.e2_pos, packed.span2_subwords.clone())
    };
    assert!(!span.is_empty(), "target sub-word span cannot be empty");
    match strategy {
        StrategyKind::Cls => Vec::new(),
        StrategyKind::B | StrategyKind::BCls => vec![(b, T::one())],
        StrategyKind::E | StrategyKind::ECls => vec![(e, T::one())],
        StrategyKind::EntityPool | StrategyKind::ClsEntityPool => {
            let w = T::one() / fl::<T>(span.len() as f64);
            span.map(|i| (i, w)).collect()
        }
        StrategyKind::EntityFirst | StrategyKind::ClsEntityFirst => {
            vec![(span.start, T::one())]
        }
        StrategyKind::EntityLast | StrategyKind::ClsEntityLast => {
            vec![(span.end - 1, T::one())]
        }
    }
}

/// Concatenated feature vector of length `feature_dim(strategy, H)`.
pub fn extract_features<T: Scalar>(
    strategy: StrategyKind,
    hidden_states: &Matrix<T>,
    packed: &PackedPair,
) -> Vec<T> {
    let h = hidden_states.cols();
    let mut features = Vec::with_capacity(strategy.feature_dim(h));
    for first in [true, false] {
        let rows = sentence_component::<T>(strategy, packed, first);
        if rows.is_empty() {
            continue;
        }
        let mut component = vec![T::zero(); h];
        for (row, weight) in rows {
            for (c, &x) in component.iter_mut().zip(hidden_states.row(row).iter()) {
                *c += x * weight;
            }
        }
        features.extend(component);
    }
    if strategy == StrategyKind::Cls || strategy.includes_cls() {
        features.extend_from_slice(hidden_states.row(packed.cls_pos));
    }
    debug_assert_eq!(features.len(), strategy.feature_dim(h));
    features
}

/// Routes a feature-vector gradient back onto the hidden-state rows the
/// strategy read (pooled rows each receive `gradient / span_length`).
pub fn scatter_feature_grad<T: Scalar>(
    strategy: StrategyKind,
    dfeatures: &[T],
    packed: &PackedPair,
    dhidden: &mut Matrix<T>,
) {
    let h = dhidden.cols();
    assert_eq!(dfeatures.len(), strategy.feature_dim(h));
    let mut offset = 0;
    for first in [true, false] {
        let rows = sentence_component::<T>(strategy, packed, first);
        if rows.is_empty() {
            continue;
        }
        let chunk = &dfeatures[offset..offset + h];
        for (row, weight) in rows {
            for (g, &d) in dhidden.row_mut(row).iter_mut().zip(chunk.iter()) {
                *g += d * weight;
            }
        }
        offset += h;
    }
    if strategy == StrategyKind::Cls || strategy.includes_cls() {
        let chunk = &dfeatures[offset..offset + h];
        for (g, &d) in dhidden.row_mut(packed.cls_pos).iter_mut().zip(chunk.iter()) {
            *g += d;
        }
    }
}

/// Affine map to two logits followed by softmax.
#[derive(Clone, Debug)]
pub struct ClassifierHead<T> {
    /// `[feature_dim × 2]`
    pub weight: Matrix<T>,
    /// `[1 × 2]`
    pub bias: Matrix<T>,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn zeros(feature_dim: usize) -> Self {
        ClassifierHead {
            weight: Matrix::zeros(feature_dim, 2),
            bias: Matrix::zeros(1, 2),
        }
    }

    /// `normal(0, 0.02)` weights, zero bias, like the encoder init.
    pub fn init(feature_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0f64, INIT_STD).expect("valid normal");
        let mut head = ClassifierHead::zeros(feature_dim);
        for x in head.weight.iter_mut() {
            *x = fl(normal.sample(rng));
        }
        head
    }

    pub fn init_seeded(feature_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ClassifierHead::init(feature_dim, &mut rng)
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, features: &[T]) -> Result<[T; 2]> {
        if features.len() != self.feature_dim() {
            return Err(WicError::DimensionMismatch {
                expected: self.feature_dim(),
                found: features.len(),
            });
        }
        let mut logits = [self.bias[(0, 0)], self.bias[(0, 1)]];
        for (i, &f) in features.iter().enumerate() {
            logits[0] += f * self.weight[(i, 0)];
            logits[1] += f * self.weight[(i, 1)];
        }
        Ok(logits)
    }

    pub fn cast<U: Scalar>(&self) -> ClassifierHead<U> {
        ClassifierHead {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// `(p_T, p_F)`: softmax over the head's two logits.
pub fn classify<T: Scalar>(head: &ClassifierHead<T>, features: &[T]) -> Result<(T, T)> {
    let logits = head.logits(features)?;
    let mut probs = [logits[0], logits[1]];
    softmax_in_place(&mut probs);
    Ok((probs[0], probs[1]))
}

/// Gradients of the head for upstream `dlogits`, plus the feature-vector
/// gradient to route into the encoder.
pub fn head_backward<T: Scalar>(
    head: &ClassifierHead<T>,
    features: &[T],
    dlogits: [T; 2],
) -> (ClassifierHead<T>, Vec<T>) {
    let mut grad = ClassifierHead::zeros(head.feature_dim());
    for (i, &f) in features.iter().enumerate() {
        grad.weight[(i, 0)] = f * dlogits[0];
        grad.weight[(i, 1)] = f * dlogits[1];
    }
    grad.bias[(0, 0)] = dlogits[0];
    grad.bias[(0, 1)] = dlogits[1];
    let dfeatures = features
        .iter()
        .enumerate()
        .map(|(i, _)| head.weight[(i, 0)] * dlogits[0] + head.weight[(i, 1)] * dlogits[1])
        .collect();
    (grad, dfeatures)
}
