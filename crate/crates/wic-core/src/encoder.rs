//! BERT-style post-layer-norm encoder with exact reverse-mode gradients.
//!
//! Forward computation is restricted to the non-padding prefix of the
//! input (padding is masked out of attention either way), so hidden
//! states at padded positions are zero and receive no gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WicError};
use crate::nn::{
    gelu, gelu_grad, softmax_backward_row, softmax_in_place, LayerNorm, Linear, NormTrace,
};
use crate::tensor::{fl, Matrix, Scalar};
use crate::tokenizer::PackedPair;

pub const LAYER_NORM_EPS: f64 = 1e-12;
/// Additive attention-logit mask for padded key positions.
pub const MASKED_LOGIT: f64 = -1e9;
/// Standard deviation of the weight initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_size: usize,
    pub ffn_size: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(WicError::InvalidConfig(format!(
                "hidden_size {} must be a positive multiple of num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(WicError::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayerParams<T> {
    pub attn_query: Linear<T>,
    pub attn_key: Linear<T>,
    pub attn_value: Linear<T>,
    pub attn_output: Linear<T>,
    pub attn_norm: LayerNorm<T>,
    pub ffn_inner: Linear<T>,
    pub ffn_output: Linear<T>,
    pub ffn_norm: LayerNorm<T>,
}

/// All trainable encoder parameters. The gradient of a forward/backward
/// pass reuses this struct shape.
#[derive(Clone, Debug)]
pub struct EncoderParams<T> {
    pub token_embedding: Matrix<T>,
    pub position_embedding: Matrix<T>,
    pub segment_embedding: Matrix<T>,
    pub embedding_norm: LayerNorm<T>,
    pub layers: Vec<EncoderLayerParams<T>>,
}

impl<T: Scalar> EncoderParams<T> {
    /// All-zero tensors of the right shapes (gradient accumulator).
    pub fn zeros(config: &EncoderConfig) -> Self {
        let h = config.hidden_size;
        let norm = || LayerNorm {
            scale: Matrix::zeros(1, h),
            shift: Matrix::zeros(1, h),
        };
        let layer = || EncoderLayerParams {
            attn_query: Linear::zeros(h, h),
            attn_key: Linear::zeros(h, h),
            attn_value: Linear::zeros(h, h),
            attn_output: Linear::zeros(h, h),
            attn_norm: norm(),
            ffn_inner: Linear::zeros(h, config.ffn_size),
            ffn_output: Linear::zeros(config.ffn_size, h),
            ffn_norm: norm(),
        };
        EncoderParams {
            token_embedding: Matrix::zeros(config.vocab_size, h),
            position_embedding: Matrix::zeros(config.max_positions, h),
            segment_embedding: Matrix::zeros(2, h),
            embedding_norm: norm(),
            layers: (0..config.num_layers).map(|_| layer()).collect(),
        }
    }

    /// Gradient target with the same shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            for x in t.iter_mut() {
                *x = T::zero();
            }
        }
        out
    }

    /// Every tensor paired with a stable name, in the fixed traversal
    /// order shared by the optimizer and the checkpoint format.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = vec![
            ("token_embedding".into(), &self.token_embedding),
            ("position_embedding".into(), &self.position_embedding),
            ("segment_embedding".into(), &self.segment_embedding),
            ("embedding_norm.scale".into(), &self.embedding_norm.scale),
            ("embedding_norm.shift".into(), &self.embedding_norm.shift),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            let p = |name: &str| format!("layer.{i}.{name}");
            out.push((p("attn_query.weight"), &layer.attn_query.weight));
            out.push((p("attn_query.bias"), &layer.attn_query.bias));
            out.push((p("attn_key.weight"), &layer.attn_key.weight));
            out.push((p("attn_key.bias"), &layer.attn_key.bias));
            out.push((p("attn_value.weight"), &layer.attn_value.weight));
            out.push((p("attn_value.bias"), &layer.attn_value.bias));
            out.push((p("attn_output.weight"), &layer.attn_output.weight));
            out.push((p("attn_output.bias"), &layer.attn_output.bias));
            out.push((p("attn_norm.scale"), &layer.attn_norm.scale));
            out.push((p("attn_norm.shift"), &layer.attn_norm.shift));
            out.push((p("ffn_inner.weight"), &layer.ffn_inner.weight));
            out.push((p("ffn_inner.bias"), &layer.ffn_inner.bias));
            out.push((p("ffn_output.weight"), &layer.ffn_output.weight));
            out.push((p("ffn_output.bias"), &layer.ffn_output.bias));
            out.push((p("ffn_norm.scale"), &layer.ffn_norm.scale));
            out.push((p("ffn_norm.shift"), &layer.ffn_norm.shift));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out: Vec<&Matrix<T>> = vec![
            &self.token_embedding,
            &self.position_embedding,
            &self.segment_embedding,
            &self.embedding_norm.scale,
            &self.embedding_norm.shift,
        ];
        for layer in &self.layers {
            out.extend([
                &layer.attn_query.weight,
                &layer.attn_query.bias,
                &layer.attn_key.weight,
                &layer.attn_key.bias,
                &layer.attn_value.weight,
                &layer.attn_value.bias,
                &layer.attn_output.weight,
                &layer.attn_output.bias,
                &layer.attn_norm.scale,
                &layer.attn_norm.shift,
                &layer.ffn_inner.weight,
                &layer.ffn_inner.bias,
                &layer.ffn_output.weight,
                &layer.ffn_output.bias,
                &layer.ffn_norm.scale,
                &layer.ffn_norm.shift,
            ]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out: Vec<&mut Matrix<T>> = vec![
            &mut self.token_embedding,
            &mut self.position_embedding,
            &mut self.segment_embedding,
            &mut self.embedding_norm.scale,
            &mut self.embedding_norm.shift,
        ];
        for layer in &mut self.layers {
            out.extend([
                &mut layer.attn_query.weight,
                &mut layer.attn_query.bias,
                &mut layer.attn_key.weight,
                &mut layer.attn_key.bias,
                &mut layer.attn_value.weight,
                &mut layer.attn_value.bias,
                &mut layer.attn_output.weight,
                &mut layer.attn_output.bias,
                &mut layer.attn_norm.scale,
                &mut layer.attn_norm.shift,
                &mut layer.ffn_inner.weight,
                &mut layer.ffn_inner.bias,
                &mut layer.ffn_output.weight,
                &mut layer.ffn_output.bias,
                &mut layer.ffn_norm.scale,
                &mut layer.ffn_norm.shift,
            ]);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        EncoderParams {
            token_embedding: self.token_embedding.cast(),
            position_embedding: self.position_embedding.cast(),
            segment_embedding: self.segment_embedding.cast(),
            embedding_norm: LayerNorm {
                scale: self.embedding_norm.scale.cast(),
                shift: self.embedding_norm.shift.cast(),
            },
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayerParams {
                    attn_query: cast_linear(&l.attn_query),
                    attn_key: cast_linear(&l.attn_key),
                    attn_value: cast_linear(&l.attn_value),
                    attn_output: cast_linear(&l.attn_output),
                    attn_norm: LayerNorm {
                        scale: l.attn_norm.scale.cast(),
                        shift: l.attn_norm.shift.cast(),
                    },
                    ffn_inner: cast_linear(&l.ffn_inner),
                    ffn_output: cast_linear(&l.ffn_output),
                    ffn_norm: LayerNorm {
                        scale: l.ffn_norm.scale.cast(),
                        shift: l.ffn_norm.shift.cast(),
                    },
                })
                .collect(),
        }
    }
}

fn cast_linear<T: Scalar, U: Scalar>(l: &Linear<T>) -> Linear<U> {
    Linear {
        weight: l.weight.cast(),
        bias: l.bias.cast(),
    }
}

/// Draws all weight matrices from `normal(0, 0.02)`; biases and
/// layer-norm shifts start at 0, layer-norm scales at 1.
pub fn init_params<T: Scalar>(config: &EncoderConfig, seed: u64) -> Result<EncoderParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = EncoderParams::zeros(config);
    init_weights(&mut params, &mut rng);
    Ok(params)
}

pub(crate) fn init_weights<T: Scalar>(params: &mut EncoderParams<T>, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0f64, INIT_STD).expect("valid normal");
    let mut fill = |m: &mut Matrix<T>| {
        for x in m.iter_mut() {
            *x = fl(normal.sample(rng));
        }
    };
    fill(&mut params.token_embedding);
    fill(&mut params.position_embedding);
    fill(&mut params.segment_embedding);
    for layer in &mut params.layers {
        fill(&mut layer.attn_query.weight);
        fill(&mut layer.attn_key.weight);
        fill(&mut layer.attn_value.weight);
        fill(&mut layer.attn_output.weight);
        fill(&mut layer.ffn_inner.weight);
        fill(&mut layer.ffn_output.weight);
    }
    let one = T::one();
    for x in params.embedding_norm.scale.iter_mut() {
        *x = one;
    }
    for layer in &mut params.layers {
        for x in layer.attn_norm.scale.iter_mut() {
            *x = one;
        }
        for x in layer.ffn_norm.scale.iter_mut() {
            *x = one;
        }
    }
}

struct LayerTrace<T> {
    input: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    attn_probs: Vec<Matrix<T>>,
    context: Matrix<T>,
    attn_dropout: Option<Matrix<T>>,
    norm1: NormTrace<T>,
    h_mid: Matrix<T>,
    ffn_pre: Matrix<T>,
    ffn_act: Matrix<T>,
    ffn_dropout: Option<Matrix<T>>,
    norm2: NormTrace<T>,
}

/// Cached activations from one forward pass; required by [`Encoder::backward`].
pub struct EncoderTrace<T> {
    eff_len: usize,
    seq_len: usize,
    token_ids: Vec<u32>,
    segment_ids: Vec<u8>,
    emb_norm: NormTrace<T>,
    emb_dropout: Option<Matrix<T>>,
    layers: Vec<LayerTrace<T>>,
}

impl<T> EncoderTrace<T> {
    pub fn effective_len(&self) -> usize {
        self.eff_len
    }
}

/// Copies the column block `[start, start+width)` of `m` into a new matrix.
fn col_block<T: Scalar>(m: &Matrix<T>, start: usize, width: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(m.rows(), width);
    for r in 0..m.rows() {
        out.row_mut(r)
            .copy_from_slice(&m.row(r)[start..start + width]);
    }
    out
}

fn add_col_block<T: Scalar>(target: &mut Matrix<T>, block: &Matrix<T>, start: usize) {
    for r in 0..target.rows() {
        let dst = &mut target.row_mut(r)[start..start + block.cols()];
        for (d, &s) in dst.iter_mut().zip(block.row(r).iter()) {
            *d += s;
        }
    }
}

fn apply_dropout<T: Scalar>(
    mut m: Matrix<T>,
    rate: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> (Matrix<T>, Option<Matrix<T>>) {
    let Some(rng) = rng.as_deref_mut() else {
        return (m, None);
    };
    if rate <= 0.0 {
        return (m, None);
    }
    let keep = 1.0 - rate;
    let inv = fl::<T>(1.0 / keep);
    let mut mask = Matrix::zeros(m.rows(), m.cols());
    for x in mask.iter_mut() {
        *x = if rng.random::<f64>() < keep {
            inv
        } else {
            T::zero()
        };
    }
    m.mul_assign_elem(&mask);
    (m, Some(mask))
}

pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub params: EncoderParams<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Encoder { config, params })
    }

    pub fn from_params(config: EncoderConfig, params: EncoderParams<T>) -> Self {
        Encoder { config, params }
    }

    /// Inference forward pass (no dropout). Returns `[seq_len × H]`
    /// hidden states (zero at padded positions) and the activation trace.
    pub fn forward(&self, packed: &PackedPair) -> Result<(Matrix<T>, EncoderTrace<T>)> {
        self.forward_inner(packed, None)
    }

    /// Training forward pass; dropout (per `config.dropout_rate`) draws
    /// its masks from `rng`.
    pub fn forward_training(
        &self,
        packed: &PackedPair,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Matrix<T>, EncoderTrace<T>)> {
        self.forward_inner(packed, Some(rng))
    }

    fn forward_inner(
        &self,
        packed: &PackedPair,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Matrix<T>, EncoderTrace<T>)> {
        let config = &self.config;
        let params = &self.params;
        let seq_len = packed.token_ids.len();
        let hidden = config.hidden_size;
        let eps = fl::<T>(LAYER_NORM_EPS);

        let eff = packed
            .attention_mask
            .iter()
            .rposition(|&m| m == 1)
            .map(|i| i + 1)
            .ok_or_else(|| WicError::InvalidConfig("input has no unmasked tokens".into()))?;
        if eff > config.max_positions {
            return Err(WicError::InvalidConfig(format!(
                "sequence length {eff} exceeds max_positions {}",
                config.max_positions
            )));
        }
        for &id in &packed.token_ids[..eff] {
            if id as usize >= config.vocab_size {
                return Err(WicError::TokenIdOutOfRange {
                    id,
                    vocab_size: config.vocab_size,
                });
            }
        }

        // Token + position + segment embeddings, then layer norm.
        let mut emb = Matrix::zeros(eff, hidden);
        for i in 0..eff {
            let tok = params.token_embedding.row(packed.token_ids[i] as usize);
            let pos = params.position_embedding.row(i);
            let seg = params.segment_embedding.row(packed.segment_ids[i] as usize);
            let row = emb.row_mut(i);
            for c in 0..hidden {
                row[c] = tok[c] + pos[c] + seg[c];
            }
        }
        let (normed, emb_norm) = params.embedding_norm.forward(&emb, eps);
        let (mut state, emb_dropout) = apply_dropout(normed, config.dropout_rate, &mut rng);

        // Additive key mask covers any masked position inside the
        // effective prefix; trailing padding is excluded from compute.
        let masked_logit = fl::<T>(MASKED_LOGIT);
        let key_mask: Vec<T> = (0..eff)
            .map(|j| {
                if packed.attention_mask[j] == 1 {
                    T::zero()
                } else {
                    masked_logit
                }
            })
            .collect();
        let any_masked = packed.attention_mask[..eff].contains(&0);

        let head_dim = config.head_dim();
        let scale = fl::<T>(1.0 / (head_dim as f64).sqrt());
        let mut layer_traces = Vec::with_capacity(config.num_layers);

        for layer in &params.layers {
            let input = state;
            let q = layer.attn_query.forward(&input);
            let k = layer.attn_key.forward(&input);
            let v = layer.attn_value.forward(&input);

            let mut context = Matrix::zeros(eff, hidden);
            let mut attn_probs = Vec::with_capacity(config.num_heads);
            for a in 0..config.num_heads {
                let offset = a * head_dim;
                let qa = col_block(&q, offset, head_dim);
                let ka = col_block(&k, offset, head_dim);
                let va = col_block(&v, offset, head_dim);
                let mut scores = qa.matmul_bt(&ka);
                scores.scale(scale);
                if any_masked {
                    for i in 0..eff {
                        let row = scores.row_mut(i);
                        for (s, &m) in row.iter_mut().zip(key_mask.iter()) {
                            *s += m;
                        }
                    }
                }
                for i in 0..eff {
                    softmax_in_place(scores.row_mut(i));
                }
                let ctx = scores.matmul(&va);
                add_col_block(&mut context, &ctx, offset);
                attn_probs.push(scores);
            }

            let proj = layer.attn_output.forward(&context);
            let (proj, attn_dropout) = apply_dropout(proj, config.dropout_rate, &mut rng);
            let mut resid = proj;
            resid.add_assign(&input);
            let (h_mid, norm1) = layer.attn_norm.forward(&resid, eps);

            let ffn_pre = layer.ffn_inner.forward(&h_mid);
            let mut ffn_act = ffn_pre.clone();
            for x in ffn_act.iter_mut() {
                *x = gelu(*x);
            }
            let ffn_out = layer.ffn_output.forward(&ffn_act);
            let (ffn_out, ffn_dropout) = apply_dropout(ffn_out, config.dropout_rate, &mut rng);
            let mut resid2 = ffn_out;
            resid2.add_assign(&h_mid);
            let (next, norm2) = layer.ffn_norm.forward(&resid2, eps);

            layer_traces.push(LayerTrace {
                input,
                q,
                k,
                v,
                attn_probs,
                context,
                attn_dropout,
                norm1,
                h_mid,
                ffn_pre,
                ffn_act,
                ffn_dropout,
                norm2,
            });
            state = next;
        }

        if !state.all_finite() {
            return Err(WicError::NonFinite {
                context: "encoder forward output".into(),
            });
        }

        let mut hidden_states = Matrix::zeros(seq_len, hidden);
        for i in 0..eff {
            hidden_states.row_mut(i).copy_from_slice(state.row(i));
        }
        let trace = EncoderTrace {
            eff_len: eff,
            seq_len,
            token_ids: packed.token_ids[..eff].to_vec(),
            segment_ids: packed.segment_ids[..eff].to_vec(),
            emb_norm,
            emb_dropout,
            layers: layer_traces,
        };
        Ok((hidden_states, trace))
    }

    /// Exact gradients of `sum(upstream ⊙ hidden_states)` with respect to
    /// every parameter, for the forward pass cached in `trace`.
    pub fn backward(&self, trace: &EncoderTrace<T>, upstream: &Matrix<T>) -> EncoderParams<T> {
        assert_eq!(upstream.rows(), trace.seq_len, "upstream shape mismatch");
        assert_eq!(upstream.cols(), self.config.hidden_size);
        let config = &self.config;
        let eff = trace.eff_len;
        let head_dim = config.head_dim();
        let scale = fl::<T>(1.0 / (head_dim as f64).sqrt());

        let mut grads = EncoderParams::zeros(config);
        let mut dstate = upstream.top_rows(eff);

        let zipped = self
            .params
            .layers
            .iter()
            .zip(grads.layers.iter_mut())
            .zip(trace.layers.iter())
            .rev();
        for ((layer, grad), lt) in zipped {
            // Feed-forward block: state = LN2(h_mid + drop(ffn(h_mid)))
            let dresid2 = layer
                .ffn_norm
                .backward(&dstate, &lt.norm2, &mut grad.ffn_norm);
            let mut dh_mid = dresid2.clone();
            let mut dffn_out = dresid2;
            if let Some(mask) = &lt.ffn_dropout {
                dffn_out.mul_assign_elem(mask);
            }
            let dffn_act = layer
                .ffn_output
                .backward(&lt.ffn_act, &dffn_out, &mut grad.ffn_output);
            let mut dffn_pre = dffn_act;
            for (d, &pre) in dffn_pre.iter_mut().zip(lt.ffn_pre.iter()) {
                *d *= gelu_grad(pre);
            }
            dh_mid.add_assign(
                &layer
                    .ffn_inner
                    .backward(&lt.h_mid, &dffn_pre, &mut grad.ffn_inner),
            );

            // Attention block: h_mid = LN1(input + drop(Wo·context))
            let dresid1 = layer
                .attn_norm
                .backward(&dh_mid, &lt.norm1, &mut grad.attn_norm);
            let mut dinput = dresid1.clone();
            let mut dproj = dresid1;
            if let Some(mask) = &lt.attn_dropout {
                dproj.mul_assign_elem(mask);
            }
            let dcontext = layer
                .attn_output
                .backward(&lt.context, &dproj, &mut grad.attn_output);

            let hidden = config.hidden_size;
            let mut dq = Matrix::zeros(eff, hidden);
            let mut dk = Matrix::zeros(eff, hidden);
            let mut dv = Matrix::zeros(eff, hidden);
            for a in 0..config.num_heads {
                let offset = a * head_dim;
                let probs = &lt.attn_probs[a];
                let dctx = col_block(&dcontext, offset, head_dim);
                let qa = col_block(&lt.q, offset, head_dim);
                let ka = col_block(&lt.k, offset, head_dim);
                let va = col_block(&lt.v, offset, head_dim);

                let dprobs = dctx.matmul_bt(&va);
                let dva = probs.matmul_at(&dctx);
                let mut dscores = Matrix::zeros(eff, eff);
                for i in 0..eff {
                    softmax_backward_row(probs.row(i), dprobs.row(i), dscores.row_mut(i));
                }
                let mut dqa = dscores.matmul(&ka);
                dqa.scale(scale);
                let mut dka = dscores.matmul_at(&qa);
                dka.scale(scale);

                add_col_block(&mut dq, &dqa, offset);
                add_col_block(&mut dk, &dka, offset);
                add_col_block(&mut dv, &dva, offset);
            }
            dinput.add_assign(
                &layer
                    .attn_query
                    .backward(&lt.input, &dq, &mut grad.attn_query),
            );
            dinput.add_assign(&layer.attn_key.backward(&lt.input, &dk, &mut grad.attn_key));
            dinput.add_assign(
                &layer
                    .attn_value
                    .backward(&lt.input, &dv, &mut grad.attn_value),
            );
            dstate = dinput;
        }

        if let Some(mask) = &trace.emb_dropout {
            dstate.mul_assign_elem(mask);
        }
        let demb = self.params.embedding_norm.backward(
            &dstate,
            &trace.emb_norm,
            &mut grads.embedding_norm,
        );
        for i in 0..eff {
            let row = demb.row(i);
            let tok = grads.token_embedding.row_mut(trace.token_ids[i] as usize);
            for (g, &d) in tok.iter_mut().zip(row.iter()) {
                *g += d;
            }
            let pos = grads.position_embedding.row_mut(i);
            for (g, &d) in pos.iter_mut().zip(row.iter()) {
                *g += d;
            }
            let seg = grads
                .segment_embedding
                .row_mut(trace.segment_ids[i] as usize);
            for (g, &d) in seg.iter_mut().zip(row.iter()) {
                *g += d;
            }
        }
        grads
    }
}
