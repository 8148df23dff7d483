//! Token streams and annotated corpora.
//!
//! A sentence is split into a stream where every token is either a maximal
//! word run, a single whitespace character or a single punctuation mark.
//! Concatenating the token texts always gives back the raw sentence.

mod annotated;
mod stopwords;

pub use annotated::{load_annotated_corpus, parse_annotated_corpus, write_annotated_corpus, AnnotatedSentence, CorpusRecord, TokenRecord};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("empty input")]
    EmptyInput,
    #[error("unsupported character at position {0}")]
    UnsupportedChar(usize),
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("annotation mismatch on line {line} at token {index}: {message}")]
    AnnotationMismatch { line: usize, index: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Word,
    Space,
    Punct,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Word => "word",
            TokenKind::Space => "space",
            TokenKind::Punct => "punct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Some(TokenKind::Word),
            "space" => Some(TokenKind::Space),
            "punct" | "punctuation" => Some(TokenKind::Punct),
            _ => None,
        }
    }
}

/// One element of the input stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based position in the sentence.
    pub index: usize,
    /// Half-open interval of character (not byte) offsets.
    pub char_span: Range<usize>,
}

impl Token {
    pub fn char_len(&self) -> usize {
        self.char_span.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub raw: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Tokenizes `raw` and tags the result with `id`.
    pub fn new(id: impl Into<String>, raw: &str) -> Result<Self, CorpusError> {
        let mut s = tokenize(raw)?;
        s.id = id.into();
        Ok(s)
    }

    /// Number of tokens, `N`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at 1-based index `n`.
    pub fn token(&self, n: usize) -> Option<&Token> {
        n.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn char_count(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.char_span.end)
    }
}

/// POS-tagged token as read from an annotated corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub token: Token,
    pub pos: Option<String>,
    pub tokens_to_parent_phrase_end: Option<u32>,
    pub training_frequency: Option<u64>,
}

impl AnnotatedToken {
    pub fn bare(token: Token) -> Self {
        AnnotatedToken { token, pos: None, tokens_to_parent_phrase_end: None, training_frequency: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Punctuation,
    Space,
    FunctionWord,
    ContentWord,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Punctuation, Category::Space, Category::FunctionWord, Category::ContentWord];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Punctuation => "punctuation",
            Category::Space => "space",
            Category::FunctionWord => "function_word",
            Category::ContentWord => "content_word",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed-class universal POS tags counted as function words.
pub const FUNCTION_TAGS: [&str; 8] = ["DET", "ADP", "PRON", "AUX", "CCONJ", "SCONJ", "PART", "NUM"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Splits `raw` into word runs, single whitespace characters and single
/// punctuation marks. Apostrophes and hyphens with a letter on both sides
/// stay inside the word ("don't", "well-known").
pub fn tokenize(raw: &str) -> Result<Sentence, CorpusError> {
    if raw.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let chars: Vec<char> = raw.chars().collect();
    if let Some(pos) = chars.iter().position(|c| c.is_control() && !c.is_whitespace()) {
        return Err(CorpusError::UnsupportedChar(pos));
    }

    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = if is_word_char(c) {
            i += 1;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if is_joiner(chars[i])
                    && chars[i - 1].is_alphabetic()
                    && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
                {
                    i += 2;
                } else {
                    break;
                }
            }
            TokenKind::Word
        } else if c.is_whitespace() {
            i += 1;
            TokenKind::Space
        } else {
            i += 1;
            TokenKind::Punct
        };
        tokens.push(Token {
            text: chars[start..i].iter().collect(),
            kind,
            index: tokens.len() + 1,
            char_span: start..i,
        });
    }

    Ok(Sentence { id: String::new(), raw: raw.to_string(), tokens })
}

/// Coarse syntactic category used when aggregating drift.
pub fn categorize(token: &AnnotatedToken) -> Category {
    match token.token.kind {
        TokenKind::Punct => Category::Punctuation,
        TokenKind::Space => Category::Space,
        TokenKind::Word => match token.pos.as_deref() {
            Some(tag) if FUNCTION_TAGS.contains(&tag.to_ascii_uppercase().as_str()) => Category::FunctionWord,
            Some(_) => Category::ContentWord,
            None if stopwords::is_stopword(&token.token.text) => Category::FunctionWord,
            None => Category::ContentWord,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &Sentence) -> Vec<&str> {
        s.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn table_sentence() {
        let s = tokenize("The dog is in the yard.").unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(texts(&s), ["The", " ", "dog", " ", "is", " ", "in", " ", "the", " ", "yard", "."]);
        assert_eq!(s.tokens[11].kind, TokenKind::Punct);
        assert_eq!(s.tokens[2].char_span, 4..7);
    }

    #[test]
    fn single_word() {
        let s = tokenize("Hi").unwrap();
        assert_eq!(texts(&s), ["Hi"]);
        assert_eq!(s.tokens[0].index, 1);
    }

    #[test]
    fn comma_then_space() {
        let s = tokenize("A, b").unwrap();
        assert_eq!(texts(&s), ["A", ",", " ", "b"]);
        let kinds: Vec<_> = s.tokens.iter().map(|t| t.kind).collect();
        assert_eq!(kinds, [TokenKind::Word, TokenKind::Punct, TokenKind::Space, TokenKind::Word]);
    }

    #[test]
    fn contractions_and_hyphens() {
        assert_eq!(texts(&tokenize("don't stop").unwrap()), ["don't", " ", "stop"]);
        assert_eq!(texts(&tokenize("well-known").unwrap()), ["well-known"]);
        assert_eq!(texts(&tokenize("'tis -a- b-").unwrap()), ["'", "tis", " ", "-", "a", "-", " ", "b", "-"]);
        assert_eq!(texts(&tokenize("a2-b").unwrap()), ["a2", "-", "b"]);
    }

    #[test]
    fn multiple_spaces_are_separate_tokens() {
        let s = tokenize("a  b").unwrap();
        assert_eq!(texts(&s), ["a", " ", " ", "b"]);
    }

    #[test]
    fn errors() {
        assert_eq!(tokenize(""), Err(CorpusError::EmptyInput));
        assert_eq!(tokenize("ab\u{7}c"), Err(CorpusError::UnsupportedChar(2)));
    }

    #[test]
    fn categories() {
        let s = tokenize("the dog.").unwrap();
        let mk = |i: usize, pos: Option<&str>| AnnotatedToken {
            pos: pos.map(str::to_string),
            ..AnnotatedToken::bare(s.tokens[i].clone())
        };
        assert_eq!(categorize(&mk(3, None)), Category::Punctuation);
        assert_eq!(categorize(&mk(1, None)), Category::Space);
        assert_eq!(categorize(&mk(0, Some("DET"))), Category::FunctionWord);
        assert_eq!(categorize(&mk(2, Some("NOUN"))), Category::ContentWord);
        // fallback to the stopword list when no tag is present
        assert_eq!(categorize(&mk(0, None)), Category::FunctionWord);
        assert_eq!(categorize(&mk(2, None)), Category::ContentWord);
    }

    proptest! {
        #[test]
        fn round_trip(raw in "[a-zA-Z0-9 ,.;'!?()-]{1,60}") {
            let s = tokenize(&raw).unwrap();
            let joined: String = s.tokens.iter().map(|t| t.text.as_str()).collect();
            prop_assert_eq!(&joined, &raw);
            for (i, t) in s.tokens.iter().enumerate() {
                prop_assert_eq!(t.index, i + 1);
                prop_assert!(!t.text.is_empty());
                if t.kind != TokenKind::Word {
                    prop_assert_eq!(t.text.chars().count(), 1);
                }
            }
            prop_assert_eq!(tokenize(&raw).unwrap(), s);
        }
    }
}
