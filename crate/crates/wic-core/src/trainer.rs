//! End-to-end fine-tuning: Adam with linear warmup/decay, global-norm
//! gradient clipping, periodic validation, early stopping, and
//! best-checkpoint restore.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, TrainingMeta};
use crate::data::Tag;
use crate::error::{Result, WicError};
use crate::model::{ModelGrads, WicModel};
use crate::strategy::StrategyKind;
use crate::tensor::{fl, Matrix, Scalar};
use crate::tokenizer::PackedPair;

/// Hyperparameters. The defaults are the fixed training regime:
/// learning rate 1e-5, 3 epochs, Adam epsilon 1e-8, warmup ratio 0.1,
/// warmup steps 0, max grad norm 1.0, max sequence length 120, gradient
/// accumulation 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub num_epochs: usize,
    pub adam_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub warmup_ratio: f64,
    pub warmup_steps: usize,
    pub max_grad_norm: f64,
    pub max_seq_length: usize,
    pub gradient_accumulation_steps: usize,
    pub batch_size: usize,
    pub eval_every_steps: usize,
    pub patience_evals: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            num_epochs: 3,
            adam_epsilon: 1e-8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            warmup_ratio: 0.1,
            warmup_steps: 0,
            max_grad_norm: 1.0,
            max_seq_length: 120,
            gradient_accumulation_steps: 1,
            batch_size: 8,
            eval_every_steps: 20,
            patience_evals: 10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(WicError::InvalidConfig(msg.into()));
        if self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1)");
        }
        if self.max_grad_norm <= 0.0 {
            return bad("max_grad_norm must be positive");
        }
        if self.batch_size == 0 || self.gradient_accumulation_steps == 0 {
            return bad("batch_size and gradient_accumulation_steps must be positive");
        }
        if self.eval_every_steps == 0 {
            return bad("eval_every_steps must be positive");
        }
        if self.patience_evals == 0 {
            return bad("patience_evals must be at least 1");
        }
        if self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    pub best_step: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    /// Line-delimited JSON log: one `eval` event per record plus a
    /// closing `end` event.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = File::create(path).map_err(|e| WicError::io(path, e))?;
        for r in &self.records {
            let line = serde_json::json!({
                "event": "eval",
                "step": r.step,
                "train_loss": r.train_loss,
                "val_loss": r.val_loss,
                "val_accuracy": r.val_accuracy,
            });
            writeln!(file, "{line}").map_err(|e| WicError::io(path, e))?;
        }
        let end = serde_json::json!({
            "event": "end",
            "best_step": self.best_step,
            "stop_reason": match self.stop_reason {
                StopReason::Completed => "completed",
                StopReason::EarlyStopped => "early_stopped",
            },
        });
        writeln!(file, "{end}").map_err(|e| WicError::io(path, e))?;
        Ok(())
    }

    pub fn training_meta(&self) -> TrainingMeta {
        let last = self.records.last();
        TrainingMeta {
            best_step: self.best_step,
            stop_reason: Some(
                match self.stop_reason {
                    StopReason::Completed => "completed",
                    StopReason::EarlyStopped => "early_stopped",
                }
                .into(),
            ),
            evaluations: self.records.len(),
            final_val_loss: last.map(|r| r.val_loss),
            final_val_accuracy: last.map(|r| r.val_accuracy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks validation loss against the best seen; fires after
/// `patience` consecutive evaluations without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best_loss: Option<f64>,
    strikes: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1);
        EarlyStopper {
            patience,
            best_loss: None,
            strikes: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        match self.best_loss {
            Some(best) if val_loss >= best => {
                self.strikes += 1;
                if self.strikes >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best_loss = Some(val_loss);
                self.strikes = 0;
                StopDecision::Improved
            }
        }
    }
}

/// Linear ramp to `learning_rate` over `W = max(warmup_steps,
/// ceil(warmup_ratio · total_steps))` optimizer steps, then linear decay
/// to zero at `total_steps`.
pub fn learning_rate_at(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    debug_assert!(step <= total_steps);
    if total_steps == 0 {
        return 0.0;
    }
    let warmup = config
        .warmup_steps
        .max((config.warmup_ratio * total_steps as f64).ceil() as usize);
    if warmup > 0 && step <= warmup {
        return config.learning_rate * step as f64 / warmup as f64;
    }
    if warmup >= total_steps {
        return config.learning_rate;
    }
    config.learning_rate * (total_steps - step) as f64 / (total_steps - warmup) as f64
}

/// Scales all gradients by `max_norm / g` when the global L2 norm `g`
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_gradients<T: Scalar>(grads: &mut ModelGrads<T>, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .map(|t| t.iter().map(|&x| x.to_f64() * x.to_f64()).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        grads.scale(fl::<T>(max_norm / norm));
    }
    norm
}

/// First/second moment estimates, one per model tensor, plus the step
/// counter for bias correction.
pub struct AdamState<T> {
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    step: usize,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_model(model: &WicModel<T>) -> Self {
        let m: Vec<Matrix<T>> = model.tensors().iter().map(|t| t.zeros_like()).collect();
        let v = m.clone();
        AdamState { m, v, step: 0 }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }
}

/// One bias-corrected Adam update at rate `lr_t`.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut [&mut Matrix<T>],
    grads: &[&Matrix<T>],
    lr_t: f64,
    config: &TrainConfig,
) {
    assert_eq!(params.len(), state.m.len());
    assert_eq!(grads.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let beta1 = fl::<T>(config.adam_beta1);
    let beta2 = fl::<T>(config.adam_beta2);
    let one = T::one();
    let bias1 = one - beta1.powi(t);
    let bias2 = one - beta2.powi(t);
    let lr = fl::<T>(lr_t);
    let eps = fl::<T>(config.adam_epsilon);
    for ((param, grad), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for ((p, &g), (m, v)) in param
            .iter_mut()
            .zip(grad.iter())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Validation scores produced by one evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalScore {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and accuracy of `model` over `data`.
pub fn evaluate<T: Scalar>(model: &WicModel<T>, data: &[(PackedPair, Tag)]) -> Result<EvalScore> {
    if data.is_empty() {
        return Err(WicError::EmptySplit {
            which: "validation",
        });
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (packed, tag) in data {
        let (hidden, _) = model.encoder.forward(packed)?;
        let features = crate::strategy::extract_features(model.strategy, &hidden, packed);
        let logits = model.head.logits(&features)?;
        let (loss, _) = crate::model::cross_entropy(logits, *tag);
        loss_sum += loss.to_f64();
        let predicted = if logits[0] >= logits[1] {
            Tag::T
        } else {
            Tag::F
        };
        if predicted == *tag {
            correct += 1;
        }
    }
    Ok(EvalScore {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

pub struct TrainOutcome<T> {
    pub model: WicModel<T>,
    pub history: TrainHistory,
}

/// Fine-tunes `model` on `train_data`, scoring `val_data` with the
/// standard cross-entropy evaluator.
pub fn train<T: Scalar>(
    model: WicModel<T>,
    train_data: &[(PackedPair, Tag)],
    val_data: &[(PackedPair, Tag)],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_scorer(model, train_data, val_data, config, evaluate)
}

/// [`train`] with a custom validation scorer (e.g. alternative metrics).
/// The scorer runs every `eval_every_steps` optimizer steps and at the
/// final step; training keeps the parameters from the evaluation with
/// the lowest reported loss.
pub fn train_with_scorer<T, F>(
    mut model: WicModel<T>,
    train_data: &[(PackedPair, Tag)],
    val_data: &[(PackedPair, Tag)],
    config: &TrainConfig,
    mut scorer: F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(&WicModel<T>, &[(PackedPair, Tag)]) -> Result<EvalScore>,
{
    config.validate()?;
    if train_data.is_empty() {
        return Err(WicError::EmptySplit { which: "train" });
    }
    if val_data.is_empty() {
        return Err(WicError::EmptySplit {
            which: "validation",
        });
    }

    let n = train_data.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let steps_per_epoch = batches_per_epoch.div_ceil(config.gradient_accumulation_steps);
    let total_steps = config.num_epochs * steps_per_epoch;
    if total_steps == 0 {
        return Ok(TrainOutcome {
            model,
            history: TrainHistory {
                records: Vec::new(),
                best_step: None,
                stop_reason: StopReason::Completed,
            },
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::for_model(&model);
    let mut stopper = EarlyStopper::new(config.patience_evals);
    let mut best: Option<(
        usize,
        crate::encoder::EncoderParams<T>,
        crate::strategy::ClassifierHead<T>,
    )> = None;
    let mut records = Vec::new();
    let mut stop_reason = StopReason::Completed;

    let mut step = 0usize;
    let mut loss_since_eval = 0.0f64;
    let mut examples_since_eval = 0usize;

    'epochs: for _epoch in 0..config.num_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let mut accum = ModelGrads::<T>::zeros(model.config(), model.strategy);
        let mut group_examples = 0usize;
        let mut group_batches = 0usize;

        let batch_starts: Vec<usize> = (0..n).step_by(config.batch_size).collect();
        for (batch_idx, &start) in batch_starts.iter().enumerate() {
            let batch = &order[start..(start + config.batch_size).min(n)];
            for &i in batch {
                let (packed, tag) = &train_data[i];
                let (loss, grads) = model.loss_and_grads(packed, *tag, Some(&mut rng))?;
                let loss = loss.to_f64();
                if !loss.is_finite() {
                    return Err(WicError::NonFiniteLoss { step, loss });
                }
                accum.add_assign(&grads);
                loss_since_eval += loss;
            }
            group_examples += batch.len();
            examples_since_eval += batch.len();
            group_batches += 1;

            let flush = group_batches == config.gradient_accumulation_steps
                || batch_idx + 1 == batch_starts.len();
            if !flush {
                continue;
            }

            accum.scale(T::one() / fl::<T>(group_examples as f64));
            clip_gradients(&mut accum, config.max_grad_norm);
            step += 1;
            let lr_t = learning_rate_at(step, total_steps, config);
            let grads_ref: Vec<&Matrix<T>> = accum.tensors();
            let mut params_ref = model.tensors_mut();
            adam_step(&mut adam, &mut params_ref, &grads_ref, lr_t, config);
            drop(params_ref);
            accum = ModelGrads::zeros(model.config(), model.strategy);
            group_examples = 0;
            group_batches = 0;

            if step.is_multiple_of(config.eval_every_steps) || step == total_steps {
                let score = scorer(&model, val_data)?;
                if !score.loss.is_finite() {
                    return Err(WicError::NonFiniteLoss {
                        step,
                        loss: score.loss,
                    });
                }
                let train_loss = loss_since_eval / examples_since_eval.max(1) as f64;
                records.push(EvalRecord {
                    step,
                    train_loss,
                    val_loss: score.loss,
                    val_accuracy: score.accuracy,
                });
                match stopper.observe(score.loss) {
                    StopDecision::Improved => {
                        let (p, h) = model.clone_params();
                        best = Some((step, p, h));
                    }
                    StopDecision::Continue => {}
                    StopDecision::Stop => {
                        stop_reason = StopReason::EarlyStopped;
                        break 'epochs;
                    }
                }
                loss_since_eval = 0.0;
                examples_since_eval = 0;
            }
        }
    }

    if let Some((best_step, params, head)) = best {
        model.restore_params(params, head);
        Ok(TrainOutcome {
            model,
            history: TrainHistory {
                records,
                best_step: Some(best_step),
                stop_reason,
            },
        })
    } else {
        Ok(TrainOutcome {
            model,
            history: TrainHistory {
                records,
                best_step: None,
                stop_reason,
            },
        })
    }
}

/// Loads a checkpoint for continued (few-shot) training, verifying the
/// stored strategy matches the requested one.
pub fn init_few_shot(path: impl AsRef<Path>, strategy: StrategyKind) -> Result<Checkpoint> {
    let checkpoint = Checkpoint::load(path)?;
    if checkpoint.manifest.strategy != strategy {
        return Err(WicError::StrategyMismatch {
            expected: strategy.cli_name().into(),
            found: checkpoint.manifest.strategy.cli_name().into(),
        });
    }
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::tests::{tiny_config, toy_packed};
    use crate::encoder::EncoderConfig;

    fn tiny_model(seed: u64) -> WicModel<f64> {
        WicModel::new(tiny_config(), StrategyKind::BCls, seed).unwrap()
    }

    #[test]
    fn clip_scales_down_to_max_norm() {
        let config = EncoderConfig {
            num_layers: 0,
            num_heads: 1,
            hidden_size: 1,
            ffn_size: 1,
            vocab_size: 2,
            max_positions: 1,
            dropout_rate: 0.0,
        };
        // Flat gradient (3, 4) lives in the 2-row token embedding.
        let mut grads = ModelGrads::<f64>::zeros(&config, StrategyKind::Cls);
        grads.encoder.token_embedding.as_mut_slice()[0] = 3.0;
        grads.encoder.token_embedding.as_mut_slice()[1] = 4.0;
        let norm = clip_gradients(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads.encoder.token_embedding.as_slice()[0] - 0.6).abs() < 1e-12);
        assert!((grads.encoder.token_embedding.as_slice()[1] - 0.8).abs() < 1e-12);

        // Norm 0.5 stays untouched.
        let mut grads = ModelGrads::<f64>::zeros(&config, StrategyKind::Cls);
        grads.encoder.token_embedding.as_mut_slice()[0] = 0.3;
        grads.encoder.token_embedding.as_mut_slice()[1] = 0.4;
        clip_gradients(&mut grads, 1.0);
        assert_eq!(grads.encoder.token_embedding.as_slice()[0], 0.3);
        assert_eq!(grads.encoder.token_embedding.as_slice()[1], 0.4);
    }

    #[test]
    fn clip_bounds_random_gradients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let config = tiny_config();
        for _ in 0..50 {
            let mut grads = ModelGrads::<f64>::zeros(&config, StrategyKind::EntityPool);
            for t in grads.tensors_mut() {
                for x in t.iter_mut() {
                    *x = rng.random::<f64>() * 4.0 - 2.0;
                }
            }
            clip_gradients(&mut grads, 1.0);
            let post = grads
                .tensors()
                .iter()
                .map(|t| t.iter().map(|&x| x * x).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            assert!(post <= 1.0 + 1e-6, "post-clip norm {post}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut model = tiny_model(1);
        // Zero params so the delta is directly observable.
        for t in model.tensors_mut() {
            for x in t.iter_mut() {
                *x = 0.0;
            }
        }
        let mut grads = ModelGrads::<f64>::zeros(model.config(), model.strategy);
        grads.encoder.token_embedding.as_mut_slice()[0] = 1.0;
        let mut state = AdamState::for_model(&model);
        let config = TrainConfig {
            learning_rate: 1e-5,
            ..TrainConfig::default()
        };
        let grads_ref: Vec<&Matrix<f64>> = grads.tensors();
        let mut params_ref = model.tensors_mut();
        adam_step(&mut state, &mut params_ref, &grads_ref, 1e-5, &config);
        drop(params_ref);
        let delta = model.encoder.params.token_embedding.as_slice()[0];
        // m̂ = 1, v̂ = 1 → Δ = -lr / (1 + ε)
        assert!((delta + 1e-5).abs() < 1e-10, "delta {delta}");
        // Untouched parameter (zero gradient, zero state) stays put.
        assert_eq!(model.encoder.params.token_embedding.as_slice()[1], 0.0);
    }

    #[test]
    fn adam_is_odd_symmetric() {
        let mut model = tiny_model(2);
        for t in model.tensors_mut() {
            for x in t.iter_mut() {
                *x = 0.5;
            }
        }
        let mut grads = ModelGrads::<f64>::zeros(model.config(), model.strategy);
        grads.encoder.token_embedding.as_mut_slice()[0] = 0.7;
        grads.encoder.token_embedding.as_mut_slice()[1] = -0.7;
        let mut state = AdamState::for_model(&model);
        let config = TrainConfig::default();
        let grads_ref: Vec<&Matrix<f64>> = grads.tensors();
        let mut params_ref = model.tensors_mut();
        adam_step(&mut state, &mut params_ref, &grads_ref, 1e-3, &config);
        drop(params_ref);
        let a = model.encoder.params.token_embedding.as_slice()[0] - 0.5;
        let b = model.encoder.params.token_embedding.as_slice()[1] - 0.5;
        assert!((a + b).abs() < 1e-12, "deltas {a} {b}");
        assert!(a < 0.0 && b > 0.0);
    }

    #[test]
    fn learning_rate_schedule_shape() {
        let config = TrainConfig::default(); // ratio 0.1, steps 0
        let lr = config.learning_rate;
        let total = 100;
        // Ramp peak at W = 10.
        assert_eq!(learning_rate_at(10, total, &config), lr);
        // Decay end.
        assert_eq!(learning_rate_at(100, total, &config), 0.0);
        // Halfway up the ramp.
        assert!((learning_rate_at(5, total, &config) - 0.5 * lr).abs() < 1e-18);
        // warmup_steps overrides a smaller ratio-derived span.
        let config = TrainConfig {
            warmup_steps: 50,
            ..TrainConfig::default()
        };
        assert_eq!(learning_rate_at(25, total, &config), 0.5 * lr);
        assert_eq!(learning_rate_at(50, total, &config), lr);
    }

    #[test]
    fn early_stopper_fires_after_patience_non_improving() {
        let mut stopper = EarlyStopper::new(10);
        assert_eq!(stopper.observe(1.0), StopDecision::Improved);
        assert_eq!(stopper.observe(0.9), StopDecision::Improved);
        for i in 0..9 {
            assert_eq!(
                stopper.observe(0.9 + 0.01 * i as f64),
                StopDecision::Continue
            );
        }
        // 10th consecutive non-improving evaluation fires.
        assert_eq!(stopper.observe(5.0), StopDecision::Stop);
    }

    #[test]
    fn early_stopper_equal_loss_is_not_improvement() {
        let mut stopper = EarlyStopper::new(2);
        assert_eq!(stopper.observe(0.5), StopDecision::Improved);
        assert_eq!(stopper.observe(0.5), StopDecision::Continue);
        assert_eq!(stopper.observe(0.5), StopDecision::Stop);
    }

    fn toy_dataset(n: usize) -> Vec<(crate::tokenizer::PackedPair, Tag)> {
        (0..n)
            .map(|i| {
                let ids: Vec<u32> = vec![
                    2,
                    6 + (i % 4) as u32,
                    7,
                    5,
                    10 + (i % 3) as u32,
                    8,
                    5,
                    3,
                    0,
                    0,
                ];
                let packed = toy_packed(&ids, 8);
                let tag = if i % 2 == 0 { Tag::T } else { Tag::F };
                (packed, tag)
            })
            .collect()
    }

    #[test]
    fn one_small_step_decreases_example_loss() {
        for seed in [1u64, 2, 3] {
            let model = tiny_model(seed);
            let data = toy_dataset(1);
            let (packed, tag) = &data[0];
            let before = model.loss(packed, *tag).unwrap();
            let config = TrainConfig {
                learning_rate: 1e-6,
                num_epochs: 1,
                batch_size: 1,
                eval_every_steps: 1,
                ..TrainConfig::default()
            };
            let outcome = train(model, &data, &data, &config).unwrap();
            let after = outcome.model.loss(packed, *tag).unwrap();
            assert!(after < before, "seed {seed}: {after} !< {before}");
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = toy_dataset(12);
        let config = TrainConfig {
            learning_rate: 1e-3,
            num_epochs: 2,
            batch_size: 4,
            eval_every_steps: 2,
            seed: 99,
            ..TrainConfig::default()
        };
        let run = || {
            let model = tiny_model(5);
            train(model, &data[..8], &data[8..], &config).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.history, b.history);
        for (x, y) in a.model.tensors().iter().zip(b.model.tensors().iter()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
    }

    #[test]
    fn injected_loss_sequence_stops_early_and_restores_best() {
        // Validation losses: 1.0, 0.9, then only values >= 0.9. Training
        // must stop at the 10th non-improving evaluation and return the
        // parameters snapshotted at evaluation 2.
        let data = toy_dataset(64);
        let config = TrainConfig {
            learning_rate: 1e-3,
            num_epochs: 100,
            batch_size: 4,
            eval_every_steps: 1,
            patience_evals: 10,
            seed: 7,
            ..TrainConfig::default()
        };
        let losses = [
            1.0, 0.9, 0.95, 0.9, 1.1, 1.2, 0.91, 0.9, 0.93, 0.94, 0.95, 0.96, 2.0, 3.0,
        ];
        let mut calls = 0usize;
        let mut snapshot_at_two: Option<Vec<f64>> = None;
        let outcome = train_with_scorer(
            tiny_model(8),
            &data[..48],
            &data[48..],
            &config,
            |model, _val| {
                let loss = losses[calls];
                calls += 1;
                if calls == 2 {
                    snapshot_at_two = Some(
                        model
                            .tensors()
                            .iter()
                            .flat_map(|t| t.as_slice().iter().copied())
                            .collect(),
                    );
                }
                Ok(EvalScore {
                    loss,
                    accuracy: 0.5,
                })
            },
        )
        .unwrap();
        // Best at evaluation 2 (loss 0.9); evaluations 3..12 are the ten
        // non-improving strikes.
        assert_eq!(calls, 12);
        assert_eq!(outcome.history.stop_reason, StopReason::EarlyStopped);
        assert_eq!(outcome.history.best_step, Some(2));
        assert_eq!(outcome.history.records.len(), 12);
        let restored: Vec<f64> = outcome
            .model
            .tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect();
        assert_eq!(restored, snapshot_at_two.unwrap());
    }

    /// With dropout off, k accumulation steps of b-sized micro-batches
    /// take the same optimizer path as one (k*b)-sized batch.
    #[test]
    fn gradient_accumulation_matches_large_batch() {
        let data = toy_dataset(16);
        let base = TrainConfig {
            learning_rate: 1e-3,
            num_epochs: 2,
            eval_every_steps: 1,
            seed: 11,
            ..TrainConfig::default()
        };
        let accumulated = TrainConfig {
            batch_size: 4,
            gradient_accumulation_steps: 2,
            ..base.clone()
        };
        let big_batch = TrainConfig {
            batch_size: 8,
            gradient_accumulation_steps: 1,
            ..base
        };
        let a = train(tiny_model(3), &data[..12], &data[12..], &accumulated).unwrap();
        let b = train(tiny_model(3), &data[..12], &data[12..], &big_batch).unwrap();
        for (x, y) in a.model.tensors().iter().zip(b.model.tensors().iter()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
        assert_eq!(a.history.records.len(), b.history.records.len());
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let model = tiny_model(4);
        let before: Vec<f64> = model
            .tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect();
        let data = toy_dataset(4);
        let config = TrainConfig {
            num_epochs: 0,
            ..TrainConfig::default()
        };
        let outcome = train(model, &data, &data, &config).unwrap();
        let after: Vec<f64> = outcome
            .model
            .tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect();
        assert_eq!(before, after);
        assert!(outcome.history.records.is_empty());
        assert_eq!(outcome.history.stop_reason, StopReason::Completed);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let data = toy_dataset(4);
        let config = TrainConfig::default();
        assert!(matches!(
            train(tiny_model(1), &[], &data, &config),
            Err(WicError::EmptySplit { which: "train" })
        ));
        assert!(matches!(
            train(tiny_model(1), &data, &[], &config),
            Err(WicError::EmptySplit {
                which: "validation"
            })
        ));
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        for broken in [
            TrainConfig {
                learning_rate: 0.0,
                ..ok.clone()
            },
            TrainConfig {
                warmup_ratio: 1.0,
                ..ok.clone()
            },
            TrainConfig {
                max_grad_norm: -1.0,
                ..ok.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..ok.clone()
            },
            TrainConfig {
                patience_evals: 0,
                ..ok.clone()
            },
            TrainConfig {
                adam_epsilon: 0.0,
                ..ok.clone()
            },
        ] {
            assert!(broken.validate().is_err());
        }
    }

    #[test]
    fn defaults_match_the_fixed_regime() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!(c.num_epochs, 3);
        assert_eq!(c.adam_epsilon, 1e-8);
        assert_eq!(c.warmup_ratio, 0.1);
        assert_eq!(c.warmup_steps, 0);
        assert_eq!(c.max_grad_norm, 1.0);
        assert_eq!(c.max_seq_length, 120);
        assert_eq!(c.gradient_accumulation_steps, 1);
    }
}
