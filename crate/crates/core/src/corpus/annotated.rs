//! Line-delimited JSON corpus with external token annotations.
//!
//! One record per line:
//! `{"id": "...", "raw": "...", "tokens": [{"text", "kind", "pos"?, "tokens_to_parent_phrase_end"?, "training_frequency"?}]}`
//! The token list must match `tokenize(raw)` position by position.

use super::{tokenize, AnnotatedToken, CorpusError, Sentence, TokenKind};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_to_parent_phrase_end: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_frequency: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub raw: String,
    pub tokens: Vec<TokenRecord>,
}

/// A sentence together with one annotation per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub sentence: Sentence,
    pub tokens: Vec<AnnotatedToken>,
}

impl AnnotatedSentence {
    /// Wraps a sentence with empty annotations.
    pub fn unannotated(sentence: Sentence) -> Self {
        let tokens = sentence.tokens.iter().cloned().map(AnnotatedToken::bare).collect();
        AnnotatedSentence { sentence, tokens }
    }

    pub fn id(&self) -> &str {
        &self.sentence.id
    }

    pub fn to_record(&self) -> CorpusRecord {
        CorpusRecord {
            id: self.sentence.id.clone(),
            raw: self.sentence.raw.clone(),
            tokens: self
                .tokens
                .iter()
                .map(|a| TokenRecord {
                    text: a.token.text.clone(),
                    kind: Some(a.token.kind.as_str().to_string()),
                    pos: a.pos.clone(),
                    tokens_to_parent_phrase_end: a.tokens_to_parent_phrase_end,
                    training_frequency: a.training_frequency,
                })
                .collect(),
        }
    }

    /// Binds a parsed record to `tokenize(raw)`. `line` is only used for errors.
    pub fn from_record(record: CorpusRecord, line: usize) -> Result<Self, CorpusError> {
        let mut sentence = tokenize(&record.raw).map_err(|e| CorpusError::ParseError {
            line,
            message: format!("raw text does not tokenize: {e}"),
        })?;
        sentence.id = record.id;

        let mismatch = |index: usize, message: String| CorpusError::AnnotationMismatch { line, index, message };
        if record.tokens.len() != sentence.len() {
            let index = record.tokens.len().min(sentence.len()) + 1;
            return Err(mismatch(
                index,
                format!("{} annotated tokens for a {}-token sentence", record.tokens.len(), sentence.len()),
            ));
        }

        let mut tokens = Vec::with_capacity(sentence.len());
        for (tok, rec) in sentence.tokens.iter().zip(record.tokens) {
            let n = tok.index;
            if rec.text != tok.text {
                return Err(mismatch(n, format!("expected {:?}, found {:?}", tok.text, rec.text)));
            }
            if let Some(kind) = rec.kind.as_deref() {
                match TokenKind::parse(kind) {
                    Some(k) if k == tok.kind => {}
                    Some(k) => return Err(mismatch(n, format!("kind {} but tokenizer says {}", k.as_str(), tok.kind.as_str()))),
                    None => return Err(CorpusError::ParseError { line, message: format!("unknown token kind {kind:?}") }),
                }
            }
            let word_only = rec.tokens_to_parent_phrase_end.is_some() || rec.training_frequency.is_some();
            match tok.kind {
                TokenKind::Space if rec.pos.is_some() || word_only => {
                    return Err(mismatch(n, "space tokens carry no annotations".into()));
                }
                TokenKind::Punct if word_only => {
                    return Err(mismatch(n, "punctuation carries only a POS tag".into()));
                }
                _ => {}
            }
            tokens.push(AnnotatedToken {
                token: tok.clone(),
                pos: rec.pos,
                tokens_to_parent_phrase_end: rec.tokens_to_parent_phrase_end,
                training_frequency: rec.training_frequency,
            });
        }
        Ok(AnnotatedSentence { sentence, tokens })
    }
}

/// Reads an annotated corpus from any buffered reader. Blank lines are skipped.
pub fn parse_annotated_corpus<R: BufRead>(reader: R) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::ParseError { line: line_no, message: e.to_string() })?;
        out.push(AnnotatedSentence::from_record(record, line_no)?);
    }
    Ok(out)
}

pub fn load_annotated_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    parse_annotated_corpus(BufReader::new(file))
}

pub fn write_annotated_corpus<W: Write>(mut w: W, corpus: &[AnnotatedSentence]) -> std::io::Result<()> {
    for s in corpus {
        serde_json::to_writer(&mut w, &s.to_record())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{categorize, Category};

    fn parse(text: &str) -> Result<Vec<AnnotatedSentence>, CorpusError> {
        parse_annotated_corpus(text.as_bytes())
    }

    #[test]
    fn minimal_record() {
        let c = parse(r#"{"id":"s1","raw":"Hi","tokens":[{"text":"Hi","pos":"INTJ"}]}"#).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].tokens[0].pos.as_deref(), Some("INTJ"));
        assert_eq!(c[0].id(), "s1");
    }

    #[test]
    fn count_mismatch() {
        let line = r#"{"id":"t","raw":"The dog is in the yard.","tokens":[{"text":"The"},{"text":" "},{"text":"dog"}]}"#;
        match parse(line) {
            Err(CorpusError::AnnotationMismatch { line: 1, index: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fully_tagged_table_sentence() {
        let tags = ["DET", "", "NOUN", "", "AUX", "", "ADP", "", "DET", "", "NOUN", "PUNCT"];
        let texts = ["The", " ", "dog", " ", "is", " ", "in", " ", "the", " ", "yard", "."];
        let tokens: Vec<TokenRecord> = texts
            .iter()
            .zip(tags)
            .map(|(t, p)| TokenRecord {
                text: t.to_string(),
                kind: None,
                pos: (!p.is_empty()).then(|| p.to_string()),
                tokens_to_parent_phrase_end: None,
                training_frequency: None,
            })
            .collect();
        let rec = CorpusRecord { id: "table1".into(), raw: "The dog is in the yard.".into(), tokens };
        let line = serde_json::to_string(&rec).unwrap();
        let c = parse(&line).unwrap();
        assert_eq!(c[0].tokens.len(), 12);
        let cats: Vec<Category> = c[0].tokens.iter().map(categorize).collect();
        assert_eq!(cats[0], Category::FunctionWord);
        assert_eq!(cats[2], Category::ContentWord);
        assert_eq!(cats[1], Category::Space);
        assert_eq!(cats[11], Category::Punctuation);
        // round trip through the writer
        let mut buf = Vec::new();
        write_annotated_corpus(&mut buf, &c).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), c);
    }

    #[test]
    fn schema_and_text_errors() {
        assert!(matches!(parse("{not json"), Err(CorpusError::ParseError { line: 1, .. })));
        let bad_text = r#"{"id":"a","raw":"Hi","tokens":[{"text":"Ho"}]}"#;
        assert!(matches!(parse(&format!("\n{bad_text}")), Err(CorpusError::AnnotationMismatch { line: 2, index: 1, .. })));
        let bad_kind = r#"{"id":"a","raw":"Hi","tokens":[{"text":"Hi","kind":"punct"}]}"#;
        assert!(matches!(parse(bad_kind), Err(CorpusError::AnnotationMismatch { .. })));
        let tagged_space = r#"{"id":"a","raw":"a b","tokens":[{"text":"a"},{"text":" ","pos":"X"},{"text":"b"}]}"#;
        assert!(matches!(parse(tagged_space), Err(CorpusError::AnnotationMismatch { index: 2, .. })));
    }
}
