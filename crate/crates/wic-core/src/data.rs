//! Corpus ingestion: instances, gold labels, and deterministic splits.
//!
//! On-disk formats are UTF-8 with one JSON object per line. Character
//! offsets are 0-based, end-exclusive, counted in Unicode scalar values.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WicError};

/// Binary sense judgment: same meaning (`T`) or different meanings (`F`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    T,
    F,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::T => "T",
            Tag::F => "F",
        }
    }
}

impl std::fmt::Display for Tag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Character span, 0-based and end-exclusive, in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    /// Validates the span against `sentence` and returns the covered substring.
    pub fn slice<'a>(&self, sentence: &'a str, id: Option<&str>) -> Result<&'a str> {
        let invalid = |detail: String| WicError::InvalidSpan {
            id: id.map(str::to_owned),
            detail,
        };
        if self.start >= self.end {
            return Err(invalid(format!(
                "({}, {}) is empty or inverted",
                self.start, self.end
            )));
        }
        // Map char offsets to byte offsets in one pass.
        let mut byte_start = None;
        let mut byte_end = None;
        let mut n_chars = 0;
        for (count, (byte_idx, _)) in sentence.char_indices().enumerate() {
            if count == self.start {
                byte_start = Some(byte_idx);
            }
            if count == self.end {
                byte_end = Some(byte_idx);
            }
            n_chars = count + 1;
        }
        if self.end == n_chars {
            byte_end = Some(sentence.len());
        }
        match (byte_start, byte_end) {
            (Some(s), Some(e)) => {
                let sub = &sentence[s..e];
                if sub.contains('\n') {
                    Err(invalid("span substring contains a newline".into()))
                } else {
                    Ok(sub)
                }
            }
            _ => Err(invalid(format!(
                "({}, {}) exceeds sentence length {} chars",
                self.start, self.end, n_chars
            ))),
        }
    }
}

/// One sentence pair with a target span per sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WicInstance {
    pub id: String,
    pub lemma: String,
    pub pos: Option<String>,
    pub sentence1: String,
    pub sentence2: String,
    pub span1: CharSpan,
    pub span2: CharSpan,
    pub lang1: String,
    pub lang2: String,
}

impl WicInstance {
    pub fn validate(&self) -> Result<()> {
        self.span1.slice(&self.sentence1, Some(&self.id))?;
        self.span2.slice(&self.sentence2, Some(&self.id))?;
        Ok(())
    }

    pub fn target1(&self) -> &str {
        self.span1
            .slice(&self.sentence1, None)
            .expect("validated span")
    }

    pub fn target2(&self) -> &str {
        self.span2
            .slice(&self.sentence2, None)
            .expect("validated span")
    }

    pub fn language_pair(&self) -> LanguagePair {
        LanguagePair::new(&self.lang1, &self.lang2)
    }
}

/// Serialized record layout for corpus files.
#[derive(Serialize, Deserialize)]
struct RawInstance {
    id: String,
    lemma: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pos: Option<String>,
    sentence1: String,
    sentence2: String,
    start1: usize,
    end1: usize,
    start2: usize,
    end2: usize,
    lang1: String,
    lang2: String,
}

impl From<RawInstance> for WicInstance {
    fn from(r: RawInstance) -> Self {
        WicInstance {
            id: r.id,
            lemma: r.lemma,
            pos: r.pos,
            sentence1: r.sentence1,
            sentence2: r.sentence2,
            span1: CharSpan::new(r.start1, r.end1),
            span2: CharSpan::new(r.start2, r.end2),
            lang1: r.lang1,
            lang2: r.lang2,
        }
    }
}

impl From<&WicInstance> for RawInstance {
    fn from(i: &WicInstance) -> Self {
        RawInstance {
            id: i.id.clone(),
            lemma: i.lemma.clone(),
            pos: i.pos.clone(),
            sentence1: i.sentence1.clone(),
            sentence2: i.sentence2.clone(),
            start1: i.span1.start,
            end1: i.span1.end,
            start2: i.span2.start,
            end2: i.span2.end,
            lang1: i.lang1.clone(),
            lang2: i.lang2.clone(),
        }
    }
}

/// Gold judgment for one instance id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub id: String,
    pub tag: Tag,
}

/// Monolingual vs cross-lingual pairing of ISO 639-1 codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSetting {
    Monolingual,
    Crosslingual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguagePair {
    pub lang1: String,
    pub lang2: String,
}

impl LanguagePair {
    pub fn new(lang1: &str, lang2: &str) -> Self {
        LanguagePair {
            lang1: lang1.to_owned(),
            lang2: lang2.to_owned(),
        }
    }

    /// Monolingual iff both codes are equal.
    pub fn setting(&self) -> PairSetting {
        if self.lang1 == self.lang2 {
            PairSetting::Monolingual
        } else {
            PairSetting::Crosslingual
        }
    }

    pub fn code(&self) -> String {
        format!("{}-{}", self.lang1, self.lang2)
    }
}

fn read_jsonl<T, F>(path: &Path, mut per_line: F) -> Result<Vec<T>>
where
    F: FnMut(&str, usize) -> Result<T>,
{
    let file = File::open(path).map_err(|e| WicError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| WicError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(per_line(&line, idx + 1)?);
    }
    Ok(out)
}

/// Loads a corpus file, validating spans and id uniqueness.
pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<WicInstance>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    read_jsonl(path, |line, line_no| {
        let raw: RawInstance =
            serde_json::from_str(line).map_err(|e| WicError::MalformedRecord {
                path: path.to_owned(),
                line: line_no,
                message: e.to_string(),
            })?;
        let instance: WicInstance = raw.into();
        instance.validate()?;
        if !seen.insert(instance.id.clone()) {
            return Err(WicError::DuplicateId(instance.id));
        }
        Ok(instance)
    })
}

/// Writes instances in the corpus line format; inverse of [`load_instances`].
pub fn save_instances(path: impl AsRef<Path>, instances: &[WicInstance]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| WicError::io(path, e))?;
    for instance in instances {
        let raw: RawInstance = instance.into();
        let line = serde_json::to_string(&raw).expect("serializable record");
        writeln!(file, "{line}").map_err(|e| WicError::io(path, e))?;
    }
    Ok(())
}

/// Loads a gold file of `{id, tag}` lines.
pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldLabel>> {
    let path = path.as_ref();
    read_jsonl(path, |line, line_no| {
        serde_json::from_str(line).map_err(|e| WicError::MalformedRecord {
            path: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })
    })
}

pub fn save_gold(path: impl AsRef<Path>, labels: &[GoldLabel]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| WicError::io(path, e))?;
    for label in labels {
        let line = serde_json::to_string(label).expect("serializable record");
        writeln!(file, "{line}").map_err(|e| WicError::io(path, e))?;
    }
    Ok(())
}

/// Pairs every instance with its gold tag, preserving instance order.
pub fn join_gold(
    instances: Vec<WicInstance>,
    labels: &[GoldLabel],
) -> Result<Vec<(WicInstance, Tag)>> {
    let mut by_id: HashMap<&str, Tag> = HashMap::with_capacity(labels.len());
    for label in labels {
        if by_id.insert(label.id.as_str(), label.tag).is_some() {
            return Err(WicError::DuplicateLabelId(label.id.clone()));
        }
    }
    let instance_ids: HashSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    if let Some(orphan) = labels
        .iter()
        .find(|l| !instance_ids.contains(l.id.as_str()))
    {
        return Err(WicError::UnknownLabelId(orphan.id.clone()));
    }
    instances
        .into_iter()
        .map(|instance| match by_id.get(instance.id.as_str()) {
            Some(&tag) => Ok((instance, tag)),
            None => Err(WicError::MissingLabel(instance.id)),
        })
        .collect()
}

/// Seeded shuffle followed by a `floor(ratio·N)` head split.
///
/// The float product is nudged by 1e-9 before flooring so that decimal
/// ratios like 0.7 at N=10 land on the intended integer.
pub fn split_train_validation<X>(
    dataset: Vec<X>,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<X>, Vec<X>)> {
    if dataset.is_empty() {
        return Err(WicError::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(WicError::InvalidRatio(ratio));
    }
    let n = dataset.len();
    let train_len = ((ratio * n as f64) + 1e-9).floor() as usize;
    let train_len = train_len.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = dataset;
    shuffled.shuffle(&mut rng);
    let validation = shuffled.split_off(train_len);
    Ok((shuffled, validation))
}
