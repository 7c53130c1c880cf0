//! Scoring: confusion counts, accuracy, and per-language-pair reports.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{GoldLabel, Tag};
use crate::error::{Result, WicError};
use crate::inference::PredictionRecord;

/// Fixed column order: monolingual pairs before cross-lingual.
pub const PAIR_ORDER: [&str; 9] = [
    "en-en", "ar-ar", "fr-fr", "ru-ru", "zh-zh", "en-ar", "en-fr", "en-ru", "en-zh",
];

/// Counts with positive class `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }
}

/// Tallies predictions against gold labels; the id sets must coincide.
pub fn confusion(predictions: &[PredictionRecord], gold: &[GoldLabel]) -> Result<ConfusionMatrix> {
    let mut gold_by_id: HashMap<&str, Tag> = HashMap::with_capacity(gold.len());
    for label in gold {
        if gold_by_id.insert(label.id.as_str(), label.tag).is_some() {
            return Err(WicError::DuplicateLabelId(label.id.clone()));
        }
    }
    let mut seen: HashSet<&str> = HashSet::with_capacity(predictions.len());
    let mut cm = ConfusionMatrix::default();
    for pred in predictions {
        if !seen.insert(pred.id.as_str()) {
            return Err(WicError::IdSetMismatch(format!(
                "duplicate prediction id {:?}",
                pred.id
            )));
        }
        let Some(&gold_tag) = gold_by_id.get(pred.id.as_str()) else {
            return Err(WicError::IdSetMismatch(format!(
                "prediction id {:?} has no gold label",
                pred.id
            )));
        };
        match (pred.tag, gold_tag) {
            (Tag::T, Tag::T) => cm.true_positive += 1,
            (Tag::F, Tag::F) => cm.true_negative += 1,
            (Tag::T, Tag::F) => cm.false_positive += 1,
            (Tag::F, Tag::T) => cm.false_negative += 1,
        }
    }
    if seen.len() != gold.len() {
        let missing = gold
            .iter()
            .find(|l| !seen.contains(l.id.as_str()))
            .map(|l| l.id.clone())
            .unwrap_or_default();
        return Err(WicError::IdSetMismatch(format!(
            "gold id {missing:?} has no prediction"
        )));
    }
    Ok(cm)
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(WicError::UndefinedMetric);
    }
    Ok((cm.true_positive + cm.true_negative) as f64 / total as f64)
}

/// Renders per-pair accuracies as a fixed-order text table plus the
/// machine-readable JSON equivalent.
pub fn report(results: &BTreeMap<String, f64>) -> Result<(String, serde_json::Value)> {
    if results.is_empty() {
        return Err(WicError::InvalidConfig(
            "report needs at least one entry".into(),
        ));
    }
    for pair in results.keys() {
        if !PAIR_ORDER.contains(&pair.as_str()) {
            return Err(WicError::UnknownLanguagePair(pair.clone()));
        }
    }
    let ordered: Vec<(&str, f64)> = PAIR_ORDER
        .iter()
        .filter_map(|&pair| results.get(pair).map(|&acc| (pair, acc)))
        .collect();

    let mut header = String::from("|");
    let mut values = String::from("|");
    for (pair, acc) in &ordered {
        header.push_str(&format!(" {pair:<6} |"));
        values.push_str(&format!(" {:<6} |", format!("{acc:.4}")));
    }
    let table = format!("{header}\n{values}\n");

    let mut json = serde_json::Map::new();
    for (pair, acc) in &ordered {
        json.insert(
            pair.to_string(),
            serde_json::Value::from((acc * 1e4).round() / 1e4),
        );
    }
    Ok((table, serde_json::Value::Object(json)))
}
