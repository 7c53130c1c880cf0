//! Subcommand implementations: each wires the library modules into one
//! workflow and writes its artifacts under the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use wic_core::checkpoint::Checkpoint;
use wic_core::data::{
    join_gold, load_gold, load_instances, split_train_validation, Tag, WicInstance,
};
use wic_core::evaluation::{accuracy, confusion, report};
use wic_core::inference::{
    load_predictions, majority_ensemble, predict, save_predictions, zero_shot_predict,
    OnUntokenizable,
};
use wic_core::model::WicModel;
use wic_core::tokenizer::{tokenize_dataset, Vocabulary};
use wic_core::trainer::{init_few_shot, train};

use crate::config::JobConfig;

fn out_dir(job: &JobConfig) -> Result<PathBuf> {
    let dir = job.paths.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("missing required {what} (flag or config key)"))
}

fn corpus_sentences(instances: &[WicInstance]) -> Vec<String> {
    let mut out = Vec::with_capacity(instances.len() * 2);
    for instance in instances {
        out.push(instance.sentence1.clone());
        out.push(instance.sentence2.clone());
    }
    out
}

pub fn build_vocab(job: &JobConfig) -> Result<()> {
    let data = required(&job.paths.data, "corpus file (--data)")?;
    let out = out_dir(job)?;
    let instances = load_instances(data)?;
    let sentences = corpus_sentences(&instances);
    let vocab = Vocabulary::train(&sentences, job.encoder.vocab_size)?;
    let path = out.join("vocab.txt");
    vocab.save(&path)?;
    println!(
        "built vocabulary of {} tokens from {} sentences -> {}",
        vocab.len(),
        sentences.len(),
        path.display()
    );
    Ok(())
}

fn echo_effective_config(job: &JobConfig, out: &Path) -> Result<()> {
    let effective = job.effective_json();
    let rendered = serde_json::to_string_pretty(&effective).expect("serializable");
    fs::write(out.join("effective-config.json"), &rendered)
        .with_context(|| "cannot write effective-config.json")?;
    println!("effective configuration:\n{rendered}");
    Ok(())
}

struct PreparedData {
    train: Vec<(wic_core::tokenizer::PackedPair, Tag)>,
    validation: Vec<(wic_core::tokenizer::PackedPair, Tag)>,
}

fn prepare_splits(job: &JobConfig, vocab: &Vocabulary, max_len: usize) -> Result<PreparedData> {
    let data = required(&job.paths.data, "corpus file (--data)")?;
    let gold = required(&job.paths.gold, "gold file (--gold)")?;
    let instances = load_instances(data)?;
    let labels = load_gold(gold)?;
    let labeled = join_gold(instances, &labels)?;
    let (train_split, val_split) =
        split_train_validation(labeled, job.split_ratio, job.train.seed)?;
    Ok(PreparedData {
        train: tokenize_dataset(&train_split, vocab, max_len)?,
        validation: tokenize_dataset(&val_split, vocab, max_len)?,
    })
}

fn finish_training(
    job: &JobConfig,
    model: WicModel<f32>,
    vocab: Vocabulary,
    data: &PreparedData,
    out: &Path,
) -> Result<()> {
    let outcome = train(model, &data.train, &data.validation, &job.train)?;
    let history_path = out.join("history.jsonl");
    outcome.history.write_jsonl(&history_path)?;
    let ckpt = Checkpoint::build(
        outcome.model,
        vocab,
        job.train.max_seq_length,
        job.train.seed,
        outcome.history.training_meta(),
    );
    let model_path = out.join("model.ckpt");
    ckpt.save(&model_path)?;
    let last = outcome.history.records.last();
    println!(
        "trained {} steps ({} evaluations, best step {:?}); val loss {:.4}, val accuracy {:.4}",
        outcome.history.records.last().map_or(0, |r| r.step),
        outcome.history.records.len(),
        outcome.history.best_step,
        last.map_or(f64::NAN, |r| r.val_loss),
        last.map_or(f64::NAN, |r| r.val_accuracy),
    );
    println!("checkpoint -> {}", model_path.display());
    println!("history    -> {}", history_path.display());
    Ok(())
}

pub fn train_cmd(job: &JobConfig) -> Result<()> {
    let strategy = job
        .strategy
        .context("missing strategy (--strategy or config key)")?;
    let vocab_path = required(&job.paths.vocab, "vocabulary file (--vocab)")?;
    let out = out_dir(job)?;
    echo_effective_config(job, &out)?;

    let vocab = Vocabulary::load(vocab_path)?;
    let mut encoder_config = job.encoder.clone();
    encoder_config.vocab_size = vocab.len();
    encoder_config.max_positions = encoder_config.max_positions.max(job.train.max_seq_length);
    let data = prepare_splits(job, &vocab, job.train.max_seq_length)?;
    let model = WicModel::<f32>::new(encoder_config, strategy, job.train.seed)?;
    finish_training(job, model, vocab, &data, &out)
}

pub fn few_shot(job: &JobConfig) -> Result<()> {
    let init = required(&job.paths.init, "source checkpoint (--init)")?;
    let out = out_dir(job)?;

    let loaded = match job.strategy {
        Some(strategy) => init_few_shot(init, strategy)?,
        None => Checkpoint::load(init)?,
    };
    // Model geometry comes from the checkpoint; the config echo reflects it.
    let mut job = job.clone();
    job.encoder = loaded.manifest.encoder_config.clone();
    job.strategy = Some(loaded.manifest.strategy);
    job.train.max_seq_length = loaded.manifest.max_seq_length;
    echo_effective_config(&job, &out)?;

    let vocab = loaded.vocab;
    let data = prepare_splits(&job, &vocab, job.train.max_seq_length)?;
    finish_training(&job, loaded.model, vocab, &data, &out)
}

pub fn predict_cmd(job: &JobConfig, zero_shot: bool, skip_untokenizable: bool) -> Result<()> {
    let ckpt_path = job
        .paths
        .checkpoint
        .as_deref()
        .or(job.paths.init.as_deref())
        .context("missing checkpoint (--checkpoint)")?;
    let data = required(&job.paths.data, "corpus file (--data)")?;
    let out = out_dir(job)?;

    let checkpoint = Checkpoint::load(ckpt_path)?;
    let instances = load_instances(data)?;
    let policy = if skip_untokenizable {
        OnUntokenizable::Skip
    } else {
        OnUntokenizable::Abort
    };
    let outcome = if zero_shot {
        zero_shot_predict(&checkpoint, &instances, policy)?
    } else {
        predict(&checkpoint, &instances, policy)?
    };
    for (id, reason) in &outcome.skipped {
        eprintln!("skipped {id}: {reason}");
    }
    let path = out.join("predictions.jsonl");
    save_predictions(&path, &outcome.records)?;
    println!(
        "predicted {} instances ({} skipped) -> {}",
        outcome.records.len(),
        outcome.skipped.len(),
        path.display()
    );
    Ok(())
}

pub fn ensemble(job: &JobConfig, inputs: &[PathBuf]) -> Result<()> {
    let out = out_dir(job)?;
    let mut sets = Vec::with_capacity(inputs.len());
    for input in inputs {
        sets.push(load_predictions(input)?);
    }
    let combined = majority_ensemble(&sets)?;
    let path = out.join("predictions.jsonl");
    save_predictions(&path, &combined)?;
    println!(
        "ensembled {} member sets over {} instances -> {}",
        sets.len(),
        combined.len(),
        path.display()
    );
    Ok(())
}

pub fn evaluate_cmd(job: &JobConfig, predictions: &Path, pair: Option<&str>) -> Result<()> {
    let gold_path = required(&job.paths.gold, "gold file (--gold)")?;
    let out = out_dir(job)?;
    let preds = load_predictions(predictions)?;
    let gold = load_gold(gold_path)?;
    let cm = confusion(&preds, &gold)?;
    let acc = accuracy(&cm)?;
    let mut value = serde_json::json!({
        "accuracy": acc,
        "tp": cm.true_positive,
        "tn": cm.true_negative,
        "fp": cm.false_positive,
        "fn": cm.false_negative,
    });
    if let Some(pair) = pair {
        value["pair"] = pair.into();
    }
    let path = out.join("evaluation.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&value).expect("serializable"),
    )
    .with_context(|| format!("cannot write {}", path.display()))?;
    println!(
        "accuracy {:.4} (TP {} TN {} FP {} FN {}) -> {}",
        acc,
        cm.true_positive,
        cm.true_negative,
        cm.false_positive,
        cm.false_negative,
        path.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct EvaluationFile {
    pair: Option<String>,
    accuracy: f64,
}

pub fn report_cmd(job: &JobConfig, inputs: &[PathBuf]) -> Result<()> {
    let out = out_dir(job)?;
    let mut results: BTreeMap<String, f64> = BTreeMap::new();
    for input in inputs {
        let text = fs::read_to_string(input)
            .with_context(|| format!("cannot read {}", input.display()))?;
        let parsed: EvaluationFile = serde_json::from_str(&text)
            .with_context(|| format!("invalid evaluation file {}", input.display()))?;
        let pair = parsed
            .pair
            .with_context(|| format!("{} has no \"pair\" field", input.display()))?;
        if results.insert(pair.clone(), parsed.accuracy).is_some() {
            bail!("duplicate language pair {pair:?} across report inputs");
        }
    }
    let (table, json) = report(&results)?;
    print!("{table}");
    fs::write(out.join("report.txt"), &table).context("cannot write report.txt")?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&json).expect("serializable"),
    )
    .context("cannot write report.json")?;
    println!("report -> {}", out.join("report.txt").display());
    Ok(())
}
