//! Sub-word vocabulary, target-word boundary markers, and input packing.
//!
//! The vocabulary is learned by iterative most-frequent-adjacent-pair
//! merging over whitespace-split words, with `##` marking non-initial
//! pieces. `<B>` and `<E>` are placed around the target word of each
//! sentence before packing the pair as
//! `[CLS] sentence1 [SEP] sentence2 [SEP] padding`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use crate::data::{CharSpan, WicInstance};
use crate::error::{Result, WicError};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const BOUNDARY_BEGIN: u32 = 4;
pub const BOUNDARY_END: u32 = 5;

/// Fixed leading vocabulary entries, in id order.
pub const SPECIAL_TOKENS: [&str; 6] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "<B>", "<E>"];

/// Reserved prefix marking a non-initial sub-word piece.
pub const CONTINUATION_PREFIX: &str = "##";

/// Immutable token inventory with the six specials at ids `0..6`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens[..SPECIAL_TOKENS.len()] != SPECIAL_TOKENS.map(str::to_owned)
        {
            return Err(WicError::InvalidConfig(
                "vocabulary must start with the six special tokens in fixed order".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), id as u32).is_some() {
                return Err(WicError::InvalidConfig(format!(
                    "duplicate vocabulary token {token:?}"
                )));
            }
        }
        let max_piece_chars = tokens[SPECIAL_TOKENS.len()..]
            .iter()
            .map(|t| t.trim_start_matches(CONTINUATION_PREFIX).chars().count())
            .max()
            .unwrap_or(1);
        Ok(Vocabulary {
            tokens,
            index,
            max_piece_chars,
        })
    }

    /// Learns a vocabulary from raw sentences.
    ///
    /// Starts from the observed single-character pieces and repeatedly
    /// merges the most frequent adjacent pair (first-seen order breaks
    /// count ties) until `target_size` entries exist or no pair repeats.
    pub fn train<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Self> {
        // Word frequency in first-occurrence order.
        let mut word_index: HashMap<&str, usize> = HashMap::new();
        let mut words: Vec<(Vec<String>, usize)> = Vec::new();
        for sentence in corpus {
            for word in sentence.as_ref().split_whitespace() {
                match word_index.get(word) {
                    Some(&i) => words[i].1 += 1,
                    None => {
                        word_index.insert(word, words.len());
                        let pieces = word
                            .chars()
                            .enumerate()
                            .map(|(i, c)| {
                                if i == 0 {
                                    c.to_string()
                                } else {
                                    format!("{CONTINUATION_PREFIX}{c}")
                                }
                            })
                            .collect();
                        words.push((pieces, 1));
                    }
                }
            }
        }

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut seen: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for (pieces, _) in &words {
            for piece in pieces {
                if !seen.contains_key(piece) {
                    seen.insert(piece.clone(), tokens.len() as u32);
                    tokens.push(piece.clone());
                }
            }
        }
        if target_size < tokens.len() {
            return Err(WicError::VocabTooSmall {
                requested: target_size,
                needed: tokens.len(),
            });
        }

        while tokens.len() < target_size {
            // (count, first-seen order) per adjacent pair.
            let mut stats: HashMap<(&str, &str), (usize, usize)> = HashMap::new();
            let mut order = 0usize;
            for (pieces, count) in &words {
                for pair in pieces.windows(2) {
                    let key = (pair[0].as_str(), pair[1].as_str());
                    let entry = stats.entry(key).or_insert_with(|| {
                        let e = (0, order);
                        order += 1;
                        e
                    });
                    entry.0 += count;
                }
            }
            let best = stats
                .iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .map(|(&(l, r), &(count, _))| (l.to_owned(), r.to_owned(), count));
            let Some((left, right, count)) = best else {
                break;
            };
            if count < 2 {
                break;
            }
            let merged = format!("{left}{}", &right[CONTINUATION_PREFIX.len()..]);
            for (pieces, _) in &mut words {
                let mut i = 0;
                while i + 1 < pieces.len() {
                    if pieces[i] == left && pieces[i + 1] == right {
                        pieces[i] = merged.clone();
                        pieces.remove(i + 1);
                    } else {
                        i += 1;
                    }
                }
            }
            if !seen.contains_key(&merged) && !SPECIAL_TOKENS.contains(&merged.as_str()) {
                seen.insert(merged.clone(), tokens.len() as u32);
                tokens.push(merged);
            }
        }

        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds a vocabulary from its token list (e.g. from a checkpoint).
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }

    /// Greedy longest-match tokenization of a single whitespace-free word.
    /// Unseen characters fall back to `[UNK]`.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        let mut initial = true;
        while i < chars.len() {
            let longest = self.max_piece_chars.min(chars.len() - i);
            let mut matched = None;
            for len in (1..=longest).rev() {
                let base: String = chars[i..i + len].iter().collect();
                let piece = if initial {
                    base
                } else {
                    format!("{CONTINUATION_PREFIX}{base}")
                };
                if let Some(&id) = self.index.get(&piece) {
                    // Specials never match as sub-pieces of ordinary text.
                    if id >= SPECIAL_TOKENS.len() as u32 {
                        matched = Some((id, len));
                        break;
                    }
                }
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => {
                    out.push(UNK);
                    i += 1;
                }
            }
            initial = false;
        }
        out
    }

    /// Tokenizes a whitespace-separated sentence. Standalone `<B>`/`<E>`
    /// words map to the marker ids.
    pub fn tokenize_sentence(&self, sentence: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in sentence.split_whitespace() {
            match word {
                "<B>" => out.push(BOUNDARY_BEGIN),
                "<E>" => out.push(BOUNDARY_END),
                _ => out.extend(self.tokenize_word(word)),
            }
        }
        out
    }

    /// Token strings for a slice of ids.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&id| self.token(id).to_owned()).collect()
    }

    /// One token per line; line number is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = File::create(path).map_err(|e| WicError::io(path, e))?;
        for token in &self.tokens {
            writeln!(file, "{token}").map_err(|e| WicError::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| WicError::io(path, e))?;
        let mut tokens = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| WicError::io(path, e))?;
            if !line.is_empty() {
                tokens.push(line);
            }
        }
        Vocabulary::from_tokens(tokens)
    }
}

/// Wraps the target span with `<B>`/`<E>`, whitespace-separated from
/// their neighbors.
pub fn insert_boundaries(sentence: &str, span: CharSpan) -> Result<String> {
    let target = span.slice(sentence, None)?;
    let byte_start = sentence
        .char_indices()
        .nth(span.start)
        .map(|(b, _)| b)
        .expect("validated span");
    let byte_end = byte_start + target.len();
    let prefix = &sentence[..byte_start];
    let suffix = &sentence[byte_end..];
    let mut out = String::with_capacity(sentence.len() + 8);
    out.push_str(prefix);
    if !prefix.is_empty() && !prefix.ends_with(char::is_whitespace) {
        out.push(' ');
    }
    out.push_str("<B> ");
    out.push_str(target);
    out.push_str(" <E>");
    if !suffix.is_empty() && !suffix.starts_with(char::is_whitespace) {
        out.push(' ');
    }
    out.push_str(suffix);
    Ok(out)
}

/// Tokenized, concatenated encoder input with tracked marker and span
/// positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedPair {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub cls_pos: usize,
    pub b1_pos: usize,
    pub e1_pos: usize,
    pub b2_pos: usize,
    pub e2_pos: usize,
    pub span1_subwords: Range<usize>,
    pub span2_subwords: Range<usize>,
}

impl PackedPair {
    /// Number of non-padding tokens (padding is always a suffix).
    pub fn effective_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

struct MarkedPieces {
    ids: Vec<u32>,
    protected: Vec<bool>,
}

fn tokenize_marked_sentence(
    vocab: &Vocabulary,
    sentence: &str,
    span: CharSpan,
    id: &str,
) -> Result<MarkedPieces> {
    let marked = insert_boundaries(sentence, span)?;
    let ids = vocab.tokenize_sentence(&marked);
    let b_count = ids.iter().filter(|&&t| t == BOUNDARY_BEGIN).count();
    let e_count = ids.iter().filter(|&&t| t == BOUNDARY_END).count();
    if b_count != 1 || e_count != 1 {
        // The raw text already contained a literal marker word.
        return Err(WicError::ReservedMarkerInText(
            if b_count != 1 { "<B>" } else { "<E>" }.into(),
        ));
    }
    let b = ids.iter().position(|&t| t == BOUNDARY_BEGIN).unwrap();
    let e = ids.iter().position(|&t| t == BOUNDARY_END).unwrap();
    debug_assert!(b < e, "markers inserted in order");
    debug_assert!(e - b > 1, "non-empty span tokenizes to at least one piece");
    let mut protected = vec![false; ids.len()];
    for p in protected.iter_mut().take(e + 1).skip(b) {
        *p = true;
    }
    let _ = id;
    Ok(MarkedPieces { ids, protected })
}

/// Removes the last non-protected piece; returns false if none exists.
fn trim_tail(pieces: &mut MarkedPieces) -> bool {
    match pieces.protected.iter().rposition(|&p| !p) {
        Some(i) => {
            pieces.ids.remove(i);
            pieces.protected.remove(i);
            true
        }
        None => false,
    }
}

/// Packs one instance as `[CLS] s1 [SEP] s2 [SEP] padding`, length
/// exactly `max_len`.
///
/// When the packed pair is too long, tokens are trimmed from the end of
/// the longer sentence's non-protected pieces (alternating on ties);
/// markers, target sub-words, `[CLS]` and `[SEP]` are never removed.
pub fn tokenize_pair(
    instance: &WicInstance,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<PackedPair> {
    let mut s1 =
        tokenize_marked_sentence(vocab, &instance.sentence1, instance.span1, &instance.id)?;
    let mut s2 =
        tokenize_marked_sentence(vocab, &instance.sentence2, instance.span2, &instance.id)?;

    let mandatory = 3
        + s1.protected.iter().filter(|&&p| p).count()
        + s2.protected.iter().filter(|&&p| p).count();
    if mandatory > max_len {
        return Err(WicError::UntokenizableAtMaxLen {
            id: instance.id.clone(),
            needed: mandatory,
            max_len,
        });
    }

    let mut trim_first_sentence = true;
    while 3 + s1.ids.len() + s2.ids.len() > max_len {
        let choose_s1 = match s1.ids.len().cmp(&s2.ids.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                let c = trim_first_sentence;
                trim_first_sentence = !trim_first_sentence;
                c
            }
        };
        let (first, second) = if choose_s1 {
            (&mut s1, &mut s2)
        } else {
            (&mut s2, &mut s1)
        };
        let trimmed = trim_tail(first) || trim_tail(second);
        debug_assert!(trimmed, "mandatory length was checked above");
    }

    let real_len = 3 + s1.ids.len() + s2.ids.len();
    let mut token_ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    token_ids.push(CLS);
    segment_ids.push(0u8);
    let seg1_offset = token_ids.len();
    token_ids.extend_from_slice(&s1.ids);
    segment_ids.extend(std::iter::repeat_n(0u8, s1.ids.len()));
    token_ids.push(SEP);
    segment_ids.push(0);
    let seg2_offset = token_ids.len();
    token_ids.extend_from_slice(&s2.ids);
    segment_ids.extend(std::iter::repeat_n(1u8, s2.ids.len()));
    token_ids.push(SEP);
    segment_ids.push(1);

    let mut attention_mask = vec![1u8; real_len];
    token_ids.resize(max_len, PAD);
    segment_ids.resize(max_len, 0);
    attention_mask.resize(max_len, 0);

    let find = |ids: &[u32], offset: usize, target: u32| {
        offset + ids.iter().position(|&t| t == target).unwrap()
    };
    let b1_pos = find(&s1.ids, seg1_offset, BOUNDARY_BEGIN);
    let e1_pos = find(&s1.ids, seg1_offset, BOUNDARY_END);
    let b2_pos = find(&s2.ids, seg2_offset, BOUNDARY_BEGIN);
    let e2_pos = find(&s2.ids, seg2_offset, BOUNDARY_END);

    Ok(PackedPair {
        token_ids,
        segment_ids,
        attention_mask,
        cls_pos: 0,
        b1_pos,
        e1_pos,
        b2_pos,
        e2_pos,
        span1_subwords: b1_pos + 1..e1_pos,
        span2_subwords: b2_pos + 1..e2_pos,
    })
}

/// Packs a labeled dataset, keeping tags aligned.
pub fn tokenize_dataset(
    labeled: &[(WicInstance, crate::data::Tag)],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<(PackedPair, crate::data::Tag)>> {
    labeled
        .iter()
        .map(|(instance, tag)| Ok((tokenize_pair(instance, vocab, max_len)?, *tag)))
        .collect()
}
