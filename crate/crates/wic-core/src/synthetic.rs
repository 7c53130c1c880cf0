//! Toy dataset generator for tests and smoke runs.
//!
//! Each sentence contains an ambiguous target word whose sense is fully
//! determined by the cue token directly before it; the pair is labeled
//! `T` exactly when both cues signal the same sense. A linear probe on
//! raw tokens cannot solve this (it needs the cue–cue interaction), but
//! a small encoder can.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{CharSpan, GoldLabel, Tag, WicInstance};

const TARGETS: [&str; 3] = ["borim", "calto", "denip"];
const SENSE_CUES: [[&str; 1]; 2] = [["vand"], ["gelt"]];
const FILLERS: [&str; 8] = ["the", "a", "we", "saw", "near", "old", "big", "it"];

/// All words any generated sentence can contain.
pub fn word_inventory() -> Vec<&'static str> {
    TARGETS
        .iter()
        .chain(SENSE_CUES.iter().flatten())
        .chain(FILLERS.iter())
        .copied()
        .collect()
}

/// Trains a vocabulary on the instances' sentences, the same way the
/// corpus workflow does. Word repetition across sentences lets the
/// merge loop assemble whole-word pieces.
pub fn vocabulary_for(
    instances: &[WicInstance],
    target_size: usize,
) -> crate::Result<crate::Vocabulary> {
    let mut corpus = Vec::with_capacity(instances.len() * 2);
    for instance in instances {
        corpus.push(instance.sentence1.as_str());
        corpus.push(instance.sentence2.as_str());
    }
    crate::Vocabulary::train(&corpus, target_size)
}

fn sentence_with_target(rng: &mut ChaCha8Rng, target: &str, sense: usize) -> (String, CharSpan) {
    let cue = SENSE_CUES[sense].choose(rng).expect("non-empty cues");
    let lead = rng.random_range(0..3usize);
    let tail = rng.random_range(0..2usize);
    let mut words: Vec<&str> = Vec::with_capacity(lead + tail + 2);
    for _ in 0..lead {
        words.push(FILLERS.choose(rng).expect("non-empty fillers"));
    }
    words.push(cue);
    let target_index = words.len();
    words.push(target);
    for _ in 0..tail {
        words.push(FILLERS.choose(rng).expect("non-empty fillers"));
    }
    let sentence = words.join(" ");
    // All inventory words are ASCII, so char offsets equal byte offsets.
    let start: usize = words[..target_index].iter().map(|w| w.len() + 1).sum();
    let span = CharSpan::new(start, start + target.len());
    debug_assert_eq!(span.slice(&sentence, None).unwrap(), target);
    (sentence, span)
}

/// Generates `n` labeled instances with a balanced `T`/`F` split.
pub fn generate_cue_dataset(n: usize, seed: u64) -> (Vec<WicInstance>, Vec<GoldLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let target = TARGETS.choose(&mut rng).expect("non-empty targets");
        let tag = if i % 2 == 0 { Tag::T } else { Tag::F };
        let sense1 = rng.random_range(0..2usize);
        let sense2 = match tag {
            Tag::T => sense1,
            Tag::F => 1 - sense1,
        };
        let (sentence1, span1) = sentence_with_target(&mut rng, target, sense1);
        let (sentence2, span2) = sentence_with_target(&mut rng, target, sense2);
        let id = format!("syn.{i}");
        instances.push(WicInstance {
            id: id.clone(),
            lemma: (*target).into(),
            pos: None,
            sentence1,
            sentence2,
            span1,
            span2,
            lang1: "en".into(),
            lang2: "en".into(),
        });
        labels.push(GoldLabel { id, tag });
    }
    (instances, labels)
}
