//! Prediction over instance lists, zero-shot application of a trained
//! checkpoint, and majority-class seed ensembling.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Tag, WicInstance};
use crate::error::{Result, WicError};
use crate::tokenizer::tokenize_pair;

/// One scored instance: `tag = T` iff `p_true >= 0.5` for a single model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub tag: Tag,
    pub p_true: f64,
}

/// What to do with an instance that cannot be packed at the checkpoint's
/// maximum sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnUntokenizable {
    Abort,
    Skip,
}

pub struct PredictOutcome {
    pub records: Vec<PredictionRecord>,
    /// `(id, reason)` for instances dropped under [`OnUntokenizable::Skip`].
    pub skipped: Vec<(String, String)>,
}

/// Scores every instance with the checkpoint's model, in input order.
/// Instances are processed in parallel; dropout is disabled.
pub fn predict(
    checkpoint: &Checkpoint,
    instances: &[WicInstance],
    policy: OnUntokenizable,
) -> Result<PredictOutcome> {
    let max_len = checkpoint.manifest.max_seq_length;
    let results: Vec<Result<PredictionRecord>> = instances
        .par_iter()
        .map(|instance| {
            let packed = tokenize_pair(instance, &checkpoint.vocab, max_len)?;
            let (p_true, _) = checkpoint.model.predict_proba(&packed)?;
            let p_true = p_true as f64;
            let tag = if p_true >= 0.5 { Tag::T } else { Tag::F };
            Ok(PredictionRecord {
                id: instance.id.clone(),
                tag,
                p_true,
            })
        })
        .collect();

    let mut records = Vec::with_capacity(instances.len());
    let mut skipped = Vec::new();
    for (instance, result) in instances.iter().zip(results) {
        match result {
            Ok(record) => records.push(record),
            Err(err @ WicError::UntokenizableAtMaxLen { .. })
                if policy == OnUntokenizable::Skip =>
            {
                skipped.push((instance.id.clone(), err.to_string()));
            }
            Err(err) => return Err(err),
        }
    }
    Ok(PredictOutcome { records, skipped })
}

/// Applies a checkpoint trained on one language pair to instances of
/// another with no target-pair training. Mechanically identical to
/// [`predict`]; language codes play no role at inference time.
pub fn zero_shot_predict(
    checkpoint: &Checkpoint,
    instances: &[WicInstance],
    policy: OnUntokenizable,
) -> Result<PredictOutcome> {
    predict(checkpoint, instances, policy)
}

/// Majority vote across prediction sets from differently seeded models.
///
/// All member sets must cover the same ids. Per id the majority tag
/// wins; an exact tie falls back to the mean `p_true` (`T` at >= 0.5).
/// The reported `p_true` is the mean of the members'.
pub fn majority_ensemble(sets: &[Vec<PredictionRecord>]) -> Result<Vec<PredictionRecord>> {
    let Some(first) = sets.first() else {
        return Err(WicError::EmptyEnsemble);
    };
    let reference: HashSet<&str> = first.iter().map(|r| r.id.as_str()).collect();
    if reference.len() != first.len() {
        return Err(WicError::IdSetMismatch("duplicate id in member 0".into()));
    }
    let mut by_id: Vec<HashMap<&str, &PredictionRecord>> = Vec::with_capacity(sets.len());
    for (m, set) in sets.iter().enumerate() {
        let map: HashMap<&str, &PredictionRecord> =
            set.iter().map(|r| (r.id.as_str(), r)).collect();
        if map.len() != set.len() {
            return Err(WicError::IdSetMismatch(format!(
                "duplicate id in member {m}"
            )));
        }
        if set.len() != first.len() || !map.keys().all(|id| reference.contains(id)) {
            return Err(WicError::IdSetMismatch(format!(
                "member {m} covers a different id set"
            )));
        }
        by_id.push(map);
    }

    let mut out = Vec::with_capacity(first.len());
    for record in first {
        let id = record.id.as_str();
        let members: Vec<&PredictionRecord> = by_id.iter().map(|m| m[id]).collect();
        let votes_true = members.iter().filter(|r| r.tag == Tag::T).count();
        let votes_false = members.len() - votes_true;
        // Mean over sorted values so the result is identical under any
        // permutation of the members; all-equal inputs keep their exact
        // value (sum/n is not exact even then).
        let mut probs: Vec<f64> = members.iter().map(|r| r.p_true).collect();
        probs.sort_by(f64::total_cmp);
        let mean_p = if probs[0] == probs[probs.len() - 1] {
            probs[0]
        } else {
            probs.iter().sum::<f64>() / probs.len() as f64
        };
        let tag = match votes_true.cmp(&votes_false) {
            std::cmp::Ordering::Greater => Tag::T,
            std::cmp::Ordering::Less => Tag::F,
            std::cmp::Ordering::Equal => {
                if mean_p >= 0.5 {
                    Tag::T
                } else {
                    Tag::F
                }
            }
        };
        out.push(PredictionRecord {
            id: record.id.clone(),
            tag,
            p_true: mean_p,
        });
    }
    Ok(out)
}

/// One `{id, tag, p_true}` JSON object per line.
pub fn save_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| WicError::io(path, e))?;
    for record in records {
        let line = serde_json::to_string(record).expect("serializable record");
        writeln!(file, "{line}").map_err(|e| WicError::io(path, e))?;
    }
    Ok(())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| WicError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| WicError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| WicError::MalformedRecord {
            path: path.to_owned(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
