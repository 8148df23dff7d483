//! Lookahead-k prefix re-encoding.
//!
//! When output for token `n` is produced, the encoder has read
//! `c(n, k) = min(n + k, N)` tokens. Each prefix is re-encoded from scratch,
//! so earlier token vectors change as the prefix grows.

use crate::corpus::{Sentence, TokenKind};
use crate::encoder::{Encoder, EncoderError, ForwardCache, TokenVector};
use crate::scalar::Scalar;
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("index {index} out of range for a sentence of {len} tokens")]
    IndexError { index: usize, len: usize },
    #[error("empty sentence")]
    EmptySentence,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Number of tokens read when generating output for token `n`.
pub fn context_size(n: usize, k: usize, len: usize) -> Result<usize, PolicyError> {
    if n == 0 || n > len {
        return Err(PolicyError::IndexError { index: n, len });
    }
    Ok((n + k).min(len))
}

/// Text of the first `c` tokens.
pub fn prefix_text(sentence: &Sentence, c: usize) -> Result<String, PolicyError> {
    if c == 0 || c > sentence.len() {
        return Err(PolicyError::IndexError { index: c, len: sentence.len() });
    }
    Ok(sentence.tokens[..c].iter().map(|t| t.text.as_str()).collect())
}

/// Words (not spaces or punctuation) visible beyond token `n` at lookahead `k`.
pub fn effective_word_lookahead(sentence: &Sentence, n: usize, k: usize) -> Result<usize, PolicyError> {
    let c = context_size(n, k, sentence.len())?;
    Ok(sentence.tokens[n..c].iter().filter(|t| t.kind == TokenKind::Word).count())
}

/// In running text words and separators alternate, so a token lookahead of
/// `k` is roughly `k / 2` words.
pub fn nominal_word_lookahead(k: usize) -> usize {
    k / 2
}

/// `z_{1:c}^{n,k}`: everything the encoder has produced when token `n` is due.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixEncoding<T> {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub vectors: Vec<TokenVector<T>>,
}

impl<T> PrefixEncoding<T> {
    /// `z_n^{n,k}`.
    pub fn current(&self) -> &TokenVector<T> {
        &self.vectors[self.n - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTrace<T> {
    pub sentence_id: String,
    pub k: usize,
    /// One entry per `n = 1..=N`.
    pub prefixes: Vec<PrefixEncoding<T>>,
    /// `z_{1:N}^full`.
    pub full: Vec<TokenVector<T>>,
}

impl<T> EncodingTrace<T> {
    pub fn len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyOptions {
    /// Reuse forward-recurrence work between growing prefixes. Results are
    /// bit-identical either way; the cached path runs sequentially.
    pub forward_cache: bool,
}

/// Encodes the prefixes of `sentence` ending at each token count in `counts`.
fn encode_prefixes<T: Scalar>(
    encoder: &Encoder<T>,
    sentence: &Sentence,
    counts: &[usize],
    opts: PolicyOptions,
) -> Result<Vec<Vec<TokenVector<T>>>, PolicyError> {
    let one = |c: usize, cache: &mut ForwardCache<T>| -> Result<Vec<TokenVector<T>>, PolicyError> {
        let text = prefix_text(sentence, c)?;
        let states = encoder.encode_chars_cached(&text, cache)?;
        (1..=c)
            .map(|n| crate::encoder::extract_token_vector(&states, sentence, n).map_err(PolicyError::from))
            .collect()
    };
    if opts.forward_cache {
        let mut cache = ForwardCache::new();
        counts.iter().map(|&c| one(c, &mut cache)).collect()
    } else {
        counts.par_iter().map(|&c| one(c, &mut ForwardCache::new())).collect()
    }
}

fn encode_full<T: Scalar>(encoder: &Encoder<T>, sentence: &Sentence) -> Result<Vec<TokenVector<T>>, PolicyError> {
    let states = encoder.encode_chars(&sentence.raw)?;
    (1..=sentence.len())
        .map(|n| crate::encoder::extract_token_vector(&states, sentence, n).map_err(PolicyError::from))
        .collect()
}

/// Runs the lookahead-`k` policy over a sentence: `N` prefix encodings, one
/// per token, plus one full-sentence encoding.
pub fn encode_incremental<T: Scalar>(
    encoder: &Encoder<T>,
    sentence: &Sentence,
    k: usize,
    opts: PolicyOptions,
) -> Result<EncodingTrace<T>, PolicyError> {
    let len = sentence.len();
    if len == 0 {
        return Err(PolicyError::EmptySentence);
    }
    let counts: Vec<usize> = (1..=len).map(|n| (n + k).min(len)).collect();
    let encoded = encode_prefixes(encoder, sentence, &counts, opts)?;
    let prefixes = encoded
        .into_iter()
        .enumerate()
        .map(|(i, vectors)| PrefixEncoding { n: i + 1, k, c: counts[i], vectors })
        .collect();
    Ok(EncodingTrace { sentence_id: sentence.id.clone(), k, prefixes, full: encode_full(encoder, sentence)? })
}

/// Every distinct prefix of a sentence encoded once. Since `c(n, k)` only
/// takes values in `1..=N`, a sweep answers every lookahead at once.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadSweep<T> {
    pub sentence_id: String,
    /// `by_count[c - 1]` holds the vectors of tokens `1..=c` for prefix `c`.
    pub by_count: Vec<Vec<TokenVector<T>>>,
    pub full: Vec<TokenVector<T>>,
}

impl<T: Clone> LookaheadSweep<T> {
    pub fn len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }

    /// `z_n^{n,k}`.
    pub fn incremental(&self, n: usize, k: usize) -> &TokenVector<T> {
        let c = (n + k).min(self.len());
        &self.by_count[c - 1][n - 1]
    }

    /// Same trace as [`encode_incremental`] would produce for `k`.
    pub fn trace(&self, k: usize) -> EncodingTrace<T> {
        let len = self.len();
        let prefixes = (1..=len)
            .map(|n| {
                let c = (n + k).min(len);
                PrefixEncoding { n, k, c, vectors: self.by_count[c - 1].clone() }
            })
            .collect();
        EncodingTrace { sentence_id: self.sentence_id.clone(), k, prefixes, full: self.full.clone() }
    }
}

pub fn encode_sweep<T: Scalar>(
    encoder: &Encoder<T>,
    sentence: &Sentence,
    opts: PolicyOptions,
) -> Result<LookaheadSweep<T>, PolicyError> {
    let len = sentence.len();
    if len == 0 {
        return Err(PolicyError::EmptySentence);
    }
    let counts: Vec<usize> = (1..=len).collect();
    Ok(LookaheadSweep {
        sentence_id: sentence.id.clone(),
        by_count: encode_prefixes(encoder, sentence, &counts, opts)?,
        full: encode_full(encoder, sentence)?,
    })
}

/// Writes `z_n^{n,k}` for every `n` of each trace, then the full-context
/// vectors with `k` set to `full`.
///
/// Columns: `sentence_id,n,k,c,z0,...,z{2H-1}`.
pub fn write_trace_csv<T: Scalar, W: Write>(w: W, traces: &[EncodingTrace<T>]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = traces.iter().flat_map(|t| t.full.first()).map(|v| v.z.len()).next().unwrap_or(0);
    let mut header = vec!["sentence_id".to_string(), "n".into(), "k".into(), "c".into()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    out.write_record(&header)?;
    for trace in traces {
        for p in &trace.prefixes {
            let mut row = vec![trace.sentence_id.clone(), p.n.to_string(), p.k.to_string(), p.c.to_string()];
            row.extend(p.current().z.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
    }
    let mut seen = std::collections::HashSet::new();
    for trace in traces {
        if !seen.insert(trace.sentence_id.clone()) {
            continue;
        }
        for v in &trace.full {
            let mut row = vec![trace.sentence_id.clone(), v.token_index.to_string(), "full".into(), trace.len().to_string()];
            row.extend(v.z.iter().map(|x| x.to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::encoder::EncoderConfig;

    fn table() -> Sentence {
        Sentence::new("table1", "The dog is in the yard.").unwrap()
    }

    #[test]
    fn context_sizes() {
        assert_eq!(context_size(3, 2, 12), Ok(5));
        assert_eq!(context_size(3, 9, 12), Ok(12));
        assert_eq!(context_size(12, 0, 12), Ok(12));
        assert!(context_size(0, 1, 12).is_err());
        assert!(context_size(13, 0, 12).is_err());
    }

    #[test]
    fn prefix_texts() {
        let s = table();
        assert_eq!(prefix_text(&s, 3).unwrap(), "The dog");
        assert_eq!(prefix_text(&s, 4).unwrap(), "The dog ");
        assert_eq!(prefix_text(&s, 12).unwrap(), s.raw);
        assert!(prefix_text(&s, 0).is_err());
        assert!(prefix_text(&s, 13).is_err());
    }

    #[test]
    fn word_lookahead_helpers() {
        let s = table();
        assert_eq!(effective_word_lookahead(&s, 3, 2).unwrap(), 1);
        assert_eq!(effective_word_lookahead(&s, 3, 1).unwrap(), 0);
        assert_eq!(effective_word_lookahead(&s, 11, 5).unwrap(), 0);
        assert_eq!(nominal_word_lookahead(2), 1);
        assert_eq!(nominal_word_lookahead(6), 3);
    }

    fn small_encoder() -> Encoder<f32> {
        Encoder::random(EncoderConfig::sized(8, 8, 3, 6).with_seed(11)).unwrap()
    }

    #[test]
    fn single_token_sentence_saturates() {
        let enc = small_encoder();
        let s = tokenize("Hi").unwrap();
        for k in [0, 1, 5] {
            let tr = encode_incremental(&enc, &s, k, PolicyOptions::default()).unwrap();
            assert_eq!(tr.prefixes.len(), 1);
            assert_eq!(tr.prefixes[0].current(), &tr.full[0]);
            assert!(tr.full[0].full_context);
        }
    }

    #[test]
    fn prefix_shapes() {
        let enc = small_encoder();
        let s = table();
        let tr = encode_incremental(&enc, &s, 1, PolicyOptions::default()).unwrap();
        let p3 = &tr.prefixes[2];
        assert_eq!((p3.n, p3.c, p3.vectors.len()), (3, 4, 4));
        assert_eq!(p3.current().context_tokens, 4);
        assert!(tr.full.iter().all(|v| v.full_context && v.z.len() == 12));
    }

    #[test]
    fn large_lookahead_equals_full() {
        let enc = small_encoder();
        let s = table();
        let tr = encode_incremental(&enc, &s, s.len() - 1, PolicyOptions::default()).unwrap();
        for p in &tr.prefixes {
            assert_eq!(p.c, s.len());
            assert_eq!(p.vectors, tr.full);
        }
    }

    #[test]
    fn cache_and_sweep_agree_with_plain_policy() {
        let enc = small_encoder();
        let s = table();
        let sweep = encode_sweep(&enc, &s, PolicyOptions { forward_cache: true }).unwrap();
        for k in 0..4 {
            let plain = encode_incremental(&enc, &s, k, PolicyOptions::default()).unwrap();
            let cached = encode_incremental(&enc, &s, k, PolicyOptions { forward_cache: true }).unwrap();
            assert_eq!(plain, cached);
            assert_eq!(sweep.trace(k), plain);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let enc = small_encoder();
        let s = table();
        let tr = encode_incremental(&enc, &s, 2, PolicyOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[tr]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("sentence_id,n,k,c,z0,z1"));
        assert!(lines[0].ends_with(",z11"));
        assert_eq!(lines.len(), 1 + 12 + 12);
        assert!(lines[3].starts_with("table1,3,2,5,"));
        assert!(lines[13].starts_with("table1,1,full,12,"));
    }
}
