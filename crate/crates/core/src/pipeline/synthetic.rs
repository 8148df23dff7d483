//! Seeded synthetic corpus: POS-tagged sentences of 5 to 42 words built from
//! short phrases over a small vocabulary.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{AnnotatedSentence, CorpusRecord, TokenRecord};
use crate::seed::rng_for;

const DET: &[&str] = &["the", "a", "this", "that", "every", "some"];
const ADJ: &[&str] = &["old", "small", "green", "quiet", "bright", "heavy", "curious", "distant", "narrow", "warm"];
const NOUN: &[&str] = &[
    "dog", "yard", "house", "river", "teacher", "window", "garden", "letter", "station", "morning", "village", "engine",
    "story", "bridge", "kitchen", "market", "doctor", "mountain", "question", "painting",
];
const VERB: &[&str] = &["saw", "found", "opened", "carried", "watched", "painted", "followed", "remembered", "crossed", "built"];
const ADV: &[&str] = &["slowly", "often", "quickly", "never", "carefully", "again"];
const ADP: &[&str] = &["in", "on", "near", "under", "behind", "across", "with", "from"];
const PRON: &[&str] = &["she", "he", "they", "we", "it"];
const AUX: &[&str] = &["was", "is", "had", "will"];
const CCONJ: &[&str] = &["and", "but", "or"];

/// Rank-based pseudo training frequency, higher for earlier list entries.
fn frequency(list: &[&str], word: &str, base: u64) -> u64 {
    let rank = list.iter().position(|w| *w == word).unwrap_or(0) as u64 + 1;
    base / rank
}

struct Word {
    text: String,
    pos: &'static str,
    freq: u64,
    /// Index of the phrase the word belongs to.
    phrase: usize,
}

fn pick(rng: &mut impl Rng, list: &'static [&'static str], pos: &'static str, base: u64, phrase: usize) -> Word {
    let w = list.choose(rng).expect("non-empty list");
    Word { text: w.to_string(), pos, freq: frequency(list, w, base), phrase }
}

fn phrase(rng: &mut impl Rng, id: usize, out: &mut Vec<Word>) {
    match rng.gen_range(0..6) {
        0 | 1 => {
            out.push(pick(rng, DET, "DET", 90_000, id));
            if rng.gen_bool(0.4) {
                out.push(pick(rng, ADJ, "ADJ", 8_000, id));
            }
            out.push(pick(rng, NOUN, "NOUN", 12_000, id));
        }
        2 => {
            if rng.gen_bool(0.3) {
                out.push(pick(rng, AUX, "AUX", 60_000, id));
            }
            out.push(pick(rng, VERB, "VERB", 6_000, id));
            if rng.gen_bool(0.3) {
                out.push(pick(rng, ADV, "ADV", 5_000, id));
            }
        }
        3 => {
            out.push(pick(rng, ADP, "ADP", 70_000, id));
            out.push(pick(rng, DET, "DET", 90_000, id));
            out.push(pick(rng, NOUN, "NOUN", 12_000, id));
        }
        4 => out.push(pick(rng, PRON, "PRON", 50_000, id)),
        _ => out.push(pick(rng, CCONJ, "CCONJ", 80_000, id)),
    }
}

/// One sentence. Same `(seed, index)` always gives the same sentence.
pub fn synthetic_sentence(seed: u64, index: usize) -> AnnotatedSentence {
    let mut rng = rng_for(seed, "corpus", index as u64);
    let target = rng.gen_range(5..=42);
    let mut words = Vec::new();
    let mut phrases = 0;
    while words.len() < target {
        phrase(&mut rng, phrases, &mut words);
        phrases += 1;
    }
    words.truncate(target);
    if let Some(first) = words.first_mut() {
        let mut c = first.text.chars();
        if let Some(h) = c.next() {
            first.text = h.to_uppercase().chain(c).collect();
        }
    }
    let comma_after: Vec<bool> = (0..words.len())
        .map(|i| i + 1 < words.len() && words[i].phrase != words[i + 1].phrase && rng.gen_bool(0.15))
        .collect();
    let end = *[".", ".", ".", "?", "!"].choose(&mut rng).expect("non-empty");

    // token list and the phrase each word token closes on
    let mut raw = String::new();
    let mut tokens: Vec<TokenRecord> = Vec::new();
    let mut word_token: Vec<usize> = Vec::new();
    let bare = |text: &str, kind: &str, pos: Option<&str>| TokenRecord {
        text: text.into(),
        kind: Some(kind.into()),
        pos: pos.map(str::to_string),
        tokens_to_parent_phrase_end: None,
        training_frequency: None,
    };
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            raw.push(' ');
            tokens.push(bare(" ", "space", None));
        }
        raw.push_str(&w.text);
        word_token.push(tokens.len());
        tokens.push(TokenRecord { training_frequency: Some(w.freq), ..bare(&w.text, "word", Some(w.pos)) });
        if comma_after[i] {
            raw.push(',');
            tokens.push(bare(",", "punct", Some("PUNCT")));
        }
    }
    raw.push_str(end);
    tokens.push(bare(end, "punct", Some("PUNCT")));
    for (i, w) in words.iter().enumerate() {
        let last = (i..words.len()).take_while(|&j| words[j].phrase == w.phrase).last().expect("self");
        tokens[word_token[i]].tokens_to_parent_phrase_end = Some((word_token[last] - word_token[i]) as u32);
    }
    let record = CorpusRecord { id: format!("syn{index:05}"), raw, tokens };
    AnnotatedSentence::from_record(record, index + 1).expect("generated records match the tokenizer")
}

pub fn synthetic_corpus(seed: u64, count: usize) -> Vec<AnnotatedSentence> {
    (0..count).map(|i| synthetic_sentence(seed, i)).collect()
}
