//! Acceptance suite: every exit criterion as one test, with the stated
//! tolerances and runtime bounds pinned in code. Run with
//! `cargo test -p wic-cli --test acceptance` (add `-- --nocapture` for
//! the per-criterion PASS lines).

#![allow(clippy::needless_range_loop)] // paired index walks over params and grads

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wic_core::checkpoint::{params_bit_equal, Checkpoint, TrainingMeta};
use wic_core::data::{join_gold, split_train_validation, CharSpan, GoldLabel, Tag, WicInstance};
use wic_core::encoder::EncoderConfig;
use wic_core::evaluation::{accuracy, confusion, ConfusionMatrix};
use wic_core::inference::{majority_ensemble, PredictionRecord};
use wic_core::model::WicModel;
use wic_core::strategy::{extract_features, StrategyKind};
use wic_core::synthetic::{generate_cue_dataset, vocabulary_for};
use wic_core::tokenizer::{
    insert_boundaries, tokenize_dataset, tokenize_pair, PackedPair, Vocabulary,
};
use wic_core::trainer::{
    evaluate, init_few_shot, train, train_with_scorer, EvalScore, StopReason, TrainConfig,
};
use wic_core::Matrix;

const MAX_LEN: usize = 32;

fn pass(criterion: &str, detail: String, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "{criterion}: runtime {elapsed:?} exceeded budget {budget:?}"
    );
    eprintln!("[ACCEPTANCE] {criterion}: PASS ({detail}; {elapsed:.1?})");
}

fn synthetic_vocab(instances: &[WicInstance]) -> Vocabulary {
    vocabulary_for(instances, 128).unwrap()
}

// ---------------------------------------------------------------------
// Gradient fidelity: analytic gradients of the full loss vs central
// finite differences (step 1e-3, 64-bit), max relative error < 1e-4,
// every parameter, all 11 strategies, < 2 minutes total.
// ---------------------------------------------------------------------

fn seq10_input() -> (Vocabulary, PackedPair) {
    let vocab = Vocabulary::train(&["ab c", "c ab"], 9).unwrap();
    let instance = WicInstance {
        id: "g".into(),
        lemma: "ab".into(),
        pos: None,
        sentence1: "ab".into(),
        sentence2: "c".into(),
        span1: CharSpan::new(0, 2),
        span2: CharSpan::new(0, 1),
        lang1: "en".into(),
        lang2: "en".into(),
    };
    let packed = tokenize_pair(&instance, &vocab, 10).unwrap();
    assert_eq!(packed.token_ids.len(), 10);
    (vocab, packed)
}

#[test]
fn acceptance_gradient_fidelity() {
    let started = Instant::now();
    let mut overall_worst = 0.0f64;
    for (i, &strategy) in StrategyKind::ALL.iter().enumerate() {
        let (vocab, packed) = seq10_input();
        let config = EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            hidden_size: 8,
            ffn_size: 16,
            vocab_size: vocab.len(),
            max_positions: 16,
            dropout_rate: 0.0,
        };
        let tag = if i % 2 == 0 { Tag::T } else { Tag::F };
        let mut model = WicModel::<f64>::new(config, strategy, 100 + i as u64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7 + i as u64);
        for t in model.tensors_mut() {
            for x in t.iter_mut() {
                *x += 0.25 * (rng.random::<f64>() * 2.0 - 1.0);
            }
        }

        let (_, grads) = model.loss_and_grads(&packed, tag, None).unwrap();
        let analytic: Vec<Vec<f64>> = grads
            .tensors()
            .iter()
            .map(|t| t.as_slice().to_vec())
            .collect();

        let step = 1e-3;
        let mut worst = 0.0f64;
        for t_idx in 0..analytic.len() {
            for e_idx in 0..analytic[t_idx].len() {
                let original = model.tensors()[t_idx].as_slice()[e_idx];
                let mut eval_at = |v: f64| {
                    model.tensors_mut()[t_idx].as_mut_slice()[e_idx] = v;
                    model.loss(&packed, tag).unwrap()
                };
                let f_m2 = eval_at(original - 2.0 * step);
                let f_m1 = eval_at(original - step);
                let f_p1 = eval_at(original + step);
                let f_p2 = eval_at(original + 2.0 * step);
                model.tensors_mut()[t_idx].as_mut_slice()[e_idx] = original;
                let fd = (f_m2 - 8.0 * f_m1 + 8.0 * f_p1 - f_p2) / (12.0 * step);
                let an = analytic[t_idx][e_idx];
                let rel = (an - fd).abs() / (an.abs() + fd.abs()).max(1e-6);
                assert!(
                    rel < 1e-4,
                    "{strategy}: tensor {t_idx} elem {e_idx}: analytic {an} vs fd {fd} (rel {rel})"
                );
                worst = worst.max(rel);
            }
        }
        overall_worst = overall_worst.max(worst);
    }
    pass(
        "gradient-fidelity",
        format!("11 strategies, worst rel {overall_worst:.2e} < 1e-4"),
        started,
        Duration::from_secs(120),
    );
}

// ---------------------------------------------------------------------
// Overfit: 32 cue-determined instances reach training accuracy 1.0
// within 200 epochs on a tiny encoder, per strategy, < 5 min each.
// ---------------------------------------------------------------------

fn tiny_train_encoder(vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: 2,
        num_heads: 2,
        hidden_size: 32,
        ffn_size: 64,
        vocab_size,
        max_positions: MAX_LEN,
        dropout_rate: 0.0,
    }
}

fn overfit_one(strategy: StrategyKind) {
    let started = Instant::now();
    let (instances, gold) = generate_cue_dataset(32, 7);
    let vocab = synthetic_vocab(&instances);
    let labeled = join_gold(instances, &gold).unwrap();
    let data = tokenize_dataset(&labeled, &vocab, MAX_LEN).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        num_epochs: 200,
        patience_evals: 10_000,
        seed: 42,
        ..TrainConfig::default()
    };
    let model = WicModel::<f32>::new(tiny_train_encoder(vocab.len()), strategy, 1).unwrap();
    let outcome = train(model, &data, &data, &config).unwrap();
    let score = evaluate(&outcome.model, &data).unwrap();
    assert_eq!(
        score.accuracy, 1.0,
        "{strategy}: training accuracy {} after 200 epochs",
        score.accuracy
    );
    pass(
        &format!("overfit[{strategy}]"),
        "training accuracy 1.0 within 200 epochs".into(),
        started,
        Duration::from_secs(300),
    );
}

// ---------------------------------------------------------------------
// Generalization sanity: 2,000 instances, 80/20 split, held-out
// accuracy >= 0.90 per strategy (vs the 0.50 majority baseline),
// < 15 min each.
// ---------------------------------------------------------------------

fn generalization_one(strategy: StrategyKind) {
    let started = Instant::now();
    let (instances, gold) = generate_cue_dataset(2000, 77);
    let vocab = synthetic_vocab(&instances);
    let labeled = join_gold(instances, &gold).unwrap();
    let (train_split, val_split) = split_train_validation(labeled, 0.8, 1234).unwrap();
    assert_eq!(train_split.len(), 1600);
    assert_eq!(val_split.len(), 400);
    let majority = val_split
        .iter()
        .filter(|(_, tag)| *tag == Tag::T)
        .count()
        .max(val_split.iter().filter(|(_, tag)| *tag == Tag::F).count()) as f64
        / val_split.len() as f64;
    assert!(
        majority < 0.6,
        "held-out split is near-balanced ({majority})"
    );

    let train_data = tokenize_dataset(&train_split, &vocab, MAX_LEN).unwrap();
    let val_data = tokenize_dataset(&val_split, &vocab, MAX_LEN).unwrap();
    let config = TrainConfig {
        learning_rate: 1.5e-3,
        num_epochs: 100,
        eval_every_steps: 400,
        patience_evals: 10_000,
        seed: 42,
        ..TrainConfig::default()
    };
    let model = WicModel::<f32>::new(tiny_train_encoder(vocab.len()), strategy, 9).unwrap();
    let outcome = train(model, &train_data, &val_data, &config).unwrap();
    let score = evaluate(&outcome.model, &val_data).unwrap();
    assert!(
        score.accuracy >= 0.90,
        "{strategy}: held-out accuracy {} < 0.90",
        score.accuracy
    );
    pass(
        &format!("generalization[{strategy}]"),
        format!(
            "held-out accuracy {:.4} >= 0.90 (majority baseline {majority:.2})",
            score.accuracy
        ),
        started,
        Duration::from_secs(900),
    );
}

macro_rules! per_strategy {
    ($runner:ident: $($name:ident => $variant:ident),+ $(,)?) => {
        $(
            #[test]
            fn $name() {
                $runner(StrategyKind::$variant);
            }
        )+
    };
}

per_strategy!(overfit_one:
    acceptance_overfit_cls => Cls,
    acceptance_overfit_b => B,
    acceptance_overfit_b_cls => BCls,
    acceptance_overfit_e => E,
    acceptance_overfit_e_cls => ECls,
    acceptance_overfit_entity_pool => EntityPool,
    acceptance_overfit_entity_first => EntityFirst,
    acceptance_overfit_entity_last => EntityLast,
    acceptance_overfit_cls_entity_pool => ClsEntityPool,
    acceptance_overfit_cls_entity_first => ClsEntityFirst,
    acceptance_overfit_cls_entity_last => ClsEntityLast,
);

per_strategy!(generalization_one:
    acceptance_generalization_cls => Cls,
    acceptance_generalization_b => B,
    acceptance_generalization_b_cls => BCls,
    acceptance_generalization_e => E,
    acceptance_generalization_e_cls => ECls,
    acceptance_generalization_entity_pool => EntityPool,
    acceptance_generalization_entity_first => EntityFirst,
    acceptance_generalization_entity_last => EntityLast,
    acceptance_generalization_cls_entity_pool => ClsEntityPool,
    acceptance_generalization_cls_entity_first => ClsEntityFirst,
    acceptance_generalization_cls_entity_last => ClsEntityLast,
);

// ---------------------------------------------------------------------
// Pooling oracle: ENTITY_POOL equals an independent loop-based mean
// within 1e-6 over 1,000 random draws (span lengths 1..8); length-1
// spans give POOL = FIRST = LAST bit-wise.
// ---------------------------------------------------------------------

#[test]
fn acceptance_pooling_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let hidden_dim = 8;
    for round in 0..1000 {
        let len1 = rng.random_range(1..=8usize);
        let len2 = rng.random_range(1..=8usize);
        let seq = 4 + len1 + len2 + 3;
        let span1 = 2..2 + len1;
        let span2 = 3 + len1..3 + len1 + len2;
        let packed = PackedPair {
            token_ids: vec![2; seq],
            segment_ids: vec![0; seq],
            attention_mask: vec![1; seq],
            cls_pos: 0,
            b1_pos: span1.start - 1,
            e1_pos: span1.end,
            b2_pos: span2.start - 1,
            e2_pos: span2.end,
            span1_subwords: span1.clone(),
            span2_subwords: span2.clone(),
        };
        let mut hidden = Matrix::<f64>::zeros(seq, hidden_dim);
        for x in hidden.iter_mut() {
            *x = rng.random::<f64>() * 6.0 - 3.0;
        }
        let features = extract_features(StrategyKind::EntityPool, &hidden, &packed);
        // Independent oracle: plain loop sum / count.
        for (chunk, span) in [(0usize, span1.clone()), (1, span2.clone())] {
            for c in 0..hidden_dim {
                let mut sum = 0.0;
                let mut count = 0.0;
                for r in span.clone() {
                    sum += hidden[(r, c)];
                    count += 1.0;
                }
                let expected = sum / count;
                let got = features[chunk * hidden_dim + c];
                assert!(
                    (got - expected).abs() < 1e-6,
                    "round {round}: pooled {got} vs oracle {expected}"
                );
            }
        }
        // Bit-wise identity for single-sub-word spans (f32 path).
        if len1 == 1 && len2 == 1 {
            let hidden32: Matrix<f32> = hidden.cast();
            let pool = extract_features(StrategyKind::EntityPool, &hidden32, &packed);
            let first = extract_features(StrategyKind::EntityFirst, &hidden32, &packed);
            let last = extract_features(StrategyKind::EntityLast, &hidden32, &packed);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&pool), bits(&first));
            assert_eq!(bits(&pool), bits(&last));
        }
    }
    pass(
        "pooling-oracle",
        "1000 draws within 1e-6; length-1 spans bit-equal".into(),
        started,
        Duration::from_secs(60),
    );
}

// ---------------------------------------------------------------------
// Dimension table: feature_dim is {H, 2H, 3H} for all 11 strategies at
// H in {8, 16, 64}, exact.
// ---------------------------------------------------------------------

#[test]
fn acceptance_dimension_table() {
    let started = Instant::now();
    for h in [8usize, 16, 64] {
        for &strategy in &StrategyKind::ALL {
            let expected = match strategy {
                StrategyKind::Cls => h,
                StrategyKind::B
                | StrategyKind::E
                | StrategyKind::EntityPool
                | StrategyKind::EntityFirst
                | StrategyKind::EntityLast => 2 * h,
                _ => 3 * h,
            };
            assert_eq!(strategy.feature_dim(h), expected, "{strategy} at H={h}");
        }
    }
    pass(
        "dimension-table",
        "11 strategies x H in {8,16,64} exact".into(),
        started,
        Duration::from_secs(10),
    );
}

// ---------------------------------------------------------------------
// Metric: accuracy(confusion(·)) equals a per-instance correctness
// count for all 255 non-empty confusion grids with counts in {0..3}.
// ---------------------------------------------------------------------

#[test]
fn acceptance_metric_exhaustive() {
    let started = Instant::now();
    let mut cases = 0;
    for tp in 0..4usize {
        for tn in 0..4usize {
            for fp in 0..4usize {
                for fn_ in 0..4usize {
                    if tp + tn + fp + fn_ == 0 {
                        continue;
                    }
                    // Materialize instances for the grid.
                    let mut preds = Vec::new();
                    let mut gold = Vec::new();
                    let mut push = |i: usize, p: Tag, g: Tag| {
                        let id = format!("i{i}");
                        preds.push(PredictionRecord {
                            id: id.clone(),
                            tag: p,
                            p_true: 0.5,
                        });
                        gold.push(GoldLabel { id, tag: g });
                    };
                    let mut i = 0;
                    for _ in 0..tp {
                        push(i, Tag::T, Tag::T);
                        i += 1;
                    }
                    for _ in 0..tn {
                        push(i, Tag::F, Tag::F);
                        i += 1;
                    }
                    for _ in 0..fp {
                        push(i, Tag::T, Tag::F);
                        i += 1;
                    }
                    for _ in 0..fn_ {
                        push(i, Tag::F, Tag::T);
                        i += 1;
                    }
                    let cm = confusion(&preds, &gold).unwrap();
                    assert_eq!(
                        cm,
                        ConfusionMatrix {
                            true_positive: tp,
                            true_negative: tn,
                            false_positive: fp,
                            false_negative: fn_,
                        }
                    );
                    // Independent oracle: count correct instances directly.
                    let correct = preds
                        .iter()
                        .zip(&gold)
                        .filter(|(p, g)| p.tag == g.tag)
                        .count();
                    let expected = correct as f64 / preds.len() as f64;
                    assert_eq!(
                        accuracy(&cm).unwrap(),
                        expected,
                        "grid ({tp},{tn},{fp},{fn_})"
                    );
                    cases += 1;
                }
            }
        }
    }
    assert_eq!(cases, 255);
    pass(
        "metric",
        "255 grids match the per-instance correctness count exactly".into(),
        started,
        Duration::from_secs(30),
    );
}

// ---------------------------------------------------------------------
// Ensemble: all 2^5 member-tag combinations match a brute-force vote
// counter exactly; output invariant over 100 random member shuffles.
// ---------------------------------------------------------------------

#[test]
fn acceptance_ensemble_votes() {
    let started = Instant::now();
    for bits in 0..32u32 {
        let tags: Vec<Tag> = (0..5)
            .map(|i| if bits >> i & 1 == 1 { Tag::T } else { Tag::F })
            .collect();
        let sets: Vec<Vec<PredictionRecord>> = tags
            .iter()
            .map(|&t| {
                vec![PredictionRecord {
                    id: "x".into(),
                    tag: t,
                    p_true: if t == Tag::T { 0.8 } else { 0.2 },
                }]
            })
            .collect();
        let out = majority_ensemble(&sets).unwrap();
        // Brute-force vote counter.
        let mut votes_t = 0;
        let mut votes_f = 0;
        for t in &tags {
            match t {
                Tag::T => votes_t += 1,
                Tag::F => votes_f += 1,
            }
        }
        let expected = if votes_t > votes_f { Tag::T } else { Tag::F };
        assert_eq!(out[0].tag, expected, "bits {bits:05b}");
    }

    // Permutation invariance over multi-instance member sets.
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let base: Vec<Vec<PredictionRecord>> = (0..5)
        .map(|m| {
            (0..12)
                .map(|i| {
                    let t = if (i + m) % 3 == 0 { Tag::T } else { Tag::F };
                    PredictionRecord {
                        id: format!("i{i}"),
                        tag: t,
                        p_true: 0.1 + 0.08 * ((i * 7 + m * 3) % 10) as f64,
                    }
                })
                .collect()
        })
        .collect();
    let reference = majority_ensemble(&base).unwrap();
    for _ in 0..100 {
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(majority_ensemble(&shuffled).unwrap(), reference);
    }
    pass(
        "ensemble",
        "2^5 combinations exact; 100 shuffles invariant".into(),
        started,
        Duration::from_secs(30),
    );
}

// ---------------------------------------------------------------------
// Early stopping: injected validation losses [1.0, 0.9, then >= 0.9]
// stop training at exactly the 10th non-improving evaluation and
// restore the evaluation-2 parameters.
// ---------------------------------------------------------------------

#[test]
fn acceptance_early_stopping() {
    let started = Instant::now();
    let (instances, gold) = generate_cue_dataset(64, 3);
    let vocab = synthetic_vocab(&instances);
    let labeled = join_gold(instances, &gold).unwrap();
    let data = tokenize_dataset(&labeled, &vocab, MAX_LEN).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        num_epochs: 1000,
        batch_size: 8,
        eval_every_steps: 1,
        patience_evals: 10,
        seed: 17,
        ..TrainConfig::default()
    };
    let losses: Vec<f64> = [1.0, 0.9]
        .into_iter()
        .chain((0..20).map(|i| 0.9 + 0.001 * i as f64))
        .collect();
    let mut calls = 0usize;
    let mut snapshot_at_two: Option<Vec<f32>> = None;
    let model = WicModel::<f32>::new(tiny_train_encoder(vocab.len()), StrategyKind::B, 5).unwrap();
    let outcome = train_with_scorer(model, &data[..48], &data[48..], &config, |m, _| {
        let loss = losses[calls];
        calls += 1;
        if calls == 2 {
            snapshot_at_two = Some(
                m.tensors()
                    .iter()
                    .flat_map(|t| t.as_slice().iter().copied())
                    .collect(),
            );
        }
        Ok(EvalScore {
            loss,
            accuracy: 0.5,
        })
    })
    .unwrap();

    assert_eq!(calls, 12, "stopped after the 10th non-improving evaluation");
    assert_eq!(outcome.history.stop_reason, StopReason::EarlyStopped);
    assert_eq!(outcome.history.best_step, Some(2));
    assert_eq!(outcome.history.records.len(), 12);
    let restored: Vec<f32> = outcome
        .model
        .tensors()
        .iter()
        .flat_map(|t| t.as_slice().iter().copied())
        .collect();
    assert_eq!(
        restored,
        snapshot_at_two.unwrap(),
        "step-2 checkpoint restored"
    );
    pass(
        "early-stopping",
        "stopped at the 10th non-improving evaluation; step-2 parameters restored".into(),
        started,
        Duration::from_secs(120),
    );
}

// ---------------------------------------------------------------------
// Few-shot continuity: load -> 0-step train keeps predictions
// bit-identical; k > 0 steps changes the parameters.
// ---------------------------------------------------------------------

#[test]
fn acceptance_few_shot_continuity() {
    let started = Instant::now();
    let (instances, gold) = generate_cue_dataset(24, 13);
    let vocab = synthetic_vocab(&instances);
    let labeled = join_gold(instances, &gold).unwrap();
    let data = tokenize_dataset(&labeled, &vocab, MAX_LEN).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        num_epochs: 2,
        seed: 23,
        ..TrainConfig::default()
    };
    let model =
        WicModel::<f32>::new(tiny_train_encoder(vocab.len()), StrategyKind::BCls, 6).unwrap();
    let source = train(model, &data, &data, &config).unwrap().model;
    let source_bits: Vec<u32> = source
        .tensors()
        .iter()
        .flat_map(|t| t.as_slice().iter().map(|x| x.to_bits()))
        .collect();
    let source_predictions: Vec<(f32, f32)> = data
        .iter()
        .map(|(p, _)| source.predict_proba(p).unwrap())
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("en-en.ckpt");
    Checkpoint::build(source, vocab.clone(), MAX_LEN, 23, TrainingMeta::default())
        .save(&path)
        .unwrap();
    let loaded = init_few_shot(&path, StrategyKind::BCls).unwrap();

    let (new_instances, new_gold) = generate_cue_dataset(16, 14);
    let new_data = tokenize_dataset(
        &join_gold(new_instances, &new_gold).unwrap(),
        &vocab,
        MAX_LEN,
    )
    .unwrap();

    // 0 steps: bit-identical predictions.
    let zero = TrainConfig {
        num_epochs: 0,
        ..config.clone()
    };
    let untouched = train(loaded.model, &new_data, &new_data, &zero)
        .unwrap()
        .model;
    let untouched_bits: Vec<u32> = untouched
        .tensors()
        .iter()
        .flat_map(|t| t.as_slice().iter().map(|x| x.to_bits()))
        .collect();
    assert_eq!(untouched_bits, source_bits);
    for ((packed, _), &expected) in data.iter().zip(&source_predictions) {
        let got = untouched.predict_proba(packed).unwrap();
        assert_eq!(got.0.to_bits(), expected.0.to_bits());
        assert_eq!(got.1.to_bits(), expected.1.to_bits());
    }

    // k > 0 steps on new data: the weights really move.
    let one = TrainConfig {
        num_epochs: 1,
        ..config
    };
    let continued = train(untouched, &new_data, &new_data, &one).unwrap().model;
    let reference = Checkpoint::load(&path).unwrap();
    assert!(!params_bit_equal(&continued, &reference.model));
    pass(
        "few-shot-continuity",
        "0-step predictions bit-identical; k>0 steps update the weights".into(),
        started,
        Duration::from_secs(300),
    );
}

// ---------------------------------------------------------------------
// Checkpoint round trip (byte-identical save->load->save) and the
// tokenizer round-trip property over 10,000 random sentence/span draws.
// ---------------------------------------------------------------------

#[test]
fn acceptance_checkpoint_and_tokenizer_round_trip() {
    let started = Instant::now();

    let (instances, _) = generate_cue_dataset(16, 51);
    let vocab = synthetic_vocab(&instances);
    let model = WicModel::<f32>::new(
        tiny_train_encoder(vocab.len()),
        StrategyKind::ClsEntityPool,
        3,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    Checkpoint::build(model, vocab, MAX_LEN, 3, TrainingMeta::default())
        .save(&p1)
        .unwrap();
    Checkpoint::load(&p1).unwrap().save(&p2).unwrap();
    assert_eq!(
        std::fs::read(&p1).unwrap(),
        std::fs::read(&p2).unwrap(),
        "save -> load -> save must be byte-identical"
    );

    // Tokenizer round trip: stripping [CLS]/[SEP]/[PAD] from the packed
    // ids reproduces the greedy tokenization of both marked sentences.
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let alphabet = ['a', 'b', 'c', 'd', 'z', 'é', 'ж', '語'];
    let corpus: Vec<String> = (0..60)
        .map(|_| {
            (0..rng.random_range(1..6))
                .map(|_| {
                    (0..rng.random_range(1..5))
                        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                        .collect::<String>()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let vocab = Vocabulary::train(&corpus, 160).unwrap();
    const PAD: u32 = 0;
    const CLS: u32 = 2;
    const SEP: u32 = 3;
    for round in 0..10_000 {
        let s1 = &corpus[rng.random_range(0..corpus.len())];
        let s2 = &corpus[rng.random_range(0..corpus.len())];
        let pick_span = |rng: &mut ChaCha8Rng, s: &str| {
            let chars = s.chars().count();
            let start = rng.random_range(0..chars);
            let end = rng.random_range(start + 1..=chars);
            let text: String = s.chars().skip(start).take(end - start).collect();
            if text.trim().is_empty() {
                CharSpan::new(0, 1)
            } else {
                CharSpan::new(start, end)
            }
        };
        let span1 = pick_span(&mut rng, s1);
        let span2 = pick_span(&mut rng, s2);
        let instance = WicInstance {
            id: format!("r{round}"),
            lemma: String::new(),
            pos: None,
            sentence1: s1.clone(),
            sentence2: s2.clone(),
            span1,
            span2,
            lang1: "xx".into(),
            lang2: "yy".into(),
        };
        let packed = tokenize_pair(&instance, &vocab, 256).unwrap();
        let mut expected = vocab.tokenize_sentence(&insert_boundaries(s1, span1).unwrap());
        expected.extend(vocab.tokenize_sentence(&insert_boundaries(s2, span2).unwrap()));
        let kept: Vec<u32> = packed
            .token_ids
            .iter()
            .copied()
            .filter(|&t| t != CLS && t != SEP && t != PAD)
            .collect();
        assert_eq!(kept, expected, "round {round}");
    }
    pass(
        "checkpoint-and-tokenizer-round-trip",
        "byte-identical checkpoint; 10,000 token-level round trips".into(),
        started,
        Duration::from_secs(300),
    );
}

// ---------------------------------------------------------------------
// Hyperparameter defaults: an empty config reports the fixed regime
// exactly (library-level and through the binary's config echo).
// ---------------------------------------------------------------------

#[test]
fn acceptance_hyperparameter_defaults() {
    let started = Instant::now();

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "{}").unwrap();

    let job = wic_cli::config::JobConfig::load(Some(&empty)).unwrap();
    assert_eq!(job.train.learning_rate, 1e-5);
    assert_eq!(job.train.num_epochs, 3);
    assert_eq!(job.train.adam_epsilon, 1e-8);
    assert_eq!(job.train.warmup_ratio, 0.1);
    assert_eq!(job.train.warmup_steps, 0);
    assert_eq!(job.train.max_grad_norm, 1.0);
    assert_eq!(job.train.max_seq_length, 120);
    assert_eq!(job.train.gradient_accumulation_steps, 1);

    // Same through a real training run with the empty config.
    let (instances, gold) = generate_cue_dataset(8, 1);
    let data = dir.path().join("data.jsonl");
    let gold_path = dir.path().join("gold.jsonl");
    wic_core::data::save_instances(&data, &instances).unwrap();
    wic_core::data::save_gold(&gold_path, &gold).unwrap();
    let vocab = synthetic_vocab(&instances);
    let vocab_path = dir.path().join("vocab.txt");
    vocab.save(&vocab_path).unwrap();
    let out = dir.path().join("run");
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_wic"))
        .args([
            "train",
            "--config",
            empty.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--gold",
            gold_path.to_str().unwrap(),
            "--vocab",
            vocab_path.to_str().unwrap(),
            "--strategy",
            "cls",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("effective-config.json")).unwrap())
            .unwrap();
    assert_eq!(echoed["learning_rate"], 1e-5);
    assert_eq!(echoed["num_epochs"], 3);
    assert_eq!(echoed["adam_epsilon"], 1e-8);
    assert_eq!(echoed["warmup_ratio"], 0.1);
    assert_eq!(echoed["warmup_steps"], 0);
    assert_eq!(echoed["max_grad_norm"], 1.0);
    assert_eq!(echoed["max_seq_length"], 120);
    assert_eq!(echoed["gradient_accumulation_steps"], 1);
    pass(
        "hyperparameter-defaults",
        "empty config reports the fixed training regime exactly".into(),
        started,
        Duration::from_secs(120),
    );
}
