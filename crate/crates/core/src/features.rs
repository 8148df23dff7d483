//! Per-token text features and their numeric matrix encoding.

use crate::corpus::{AnnotatedSentence, TokenKind};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::ops::Range;

/// Default neighbour window: features for tokens `n ± 1 ..= n ± 4`.
pub const DEFAULT_WINDOW: usize = 4;

/// Tag inventory for one-hot encoding. Universal POS tags plus `SPACE`
/// (space tokens), `UNK` (untagged word) and `NONE` (no such neighbour).
pub const POS_TAGS: [&str; 20] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ",
    "SYM", "VERB", "X", "SPACE", "UNK", "NONE",
];
pub const NO_NEIGHBOUR: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub sentence_id: String,
    pub n: usize,
    pub token_length: usize,
    pub pos: String,
    pub training_frequency: Option<u64>,
    /// `n / N`.
    pub relative_position: f64,
    /// `n == N - 1`.
    pub penultimate: bool,
    pub followed_by_punctuation: bool,
    /// Tokens strictly between `x_n` and the next punctuation mark; tokens
    /// left to the end of the sentence when none follows.
    pub distance_to_punctuation: usize,
    pub distance_to_parent_phrase_end: Option<u32>,
    /// `pos_prev[m - 1]` is the tag of `x_{n-m}`, `NONE` when out of range.
    pub pos_prev: Vec<String>,
    pub pos_next: Vec<String>,
    pub word_length_prev: Vec<Option<usize>>,
    pub word_length_next: Vec<Option<usize>>,
    pub target: f64,
}

fn tag_of(ann: &AnnotatedSentence, n: usize) -> String {
    let a = &ann.tokens[n - 1];
    match (&a.pos, a.token.kind) {
        (_, TokenKind::Space) => "SPACE".into(),
        (Some(p), _) => {
            let p = p.to_ascii_uppercase();
            if POS_TAGS[..17].contains(&p.as_str()) { p } else { "X".into() }
        }
        (None, TokenKind::Punct) => "PUNCT".into(),
        (None, TokenKind::Word) => "UNK".into(),
    }
}

/// Computes every feature of token `n` (1-based) with a neighbour window of
/// `window` tokens on each side.
pub fn extract_features(ann: &AnnotatedSentence, n: usize, window: usize, target: f64) -> FeatureRow {
    let len = ann.tokens.len();
    assert!(n >= 1 && n <= len, "token index {n} out of range 1..={len}");
    let kind = |i: usize| ann.tokens[i - 1].token.kind;
    let next_punct = (n + 1..=len).find(|&i| kind(i) == TokenKind::Punct);
    let neighbour = |offset: isize| -> Option<usize> {
        let i = n as isize + offset;
        (i >= 1 && i as usize <= len).then_some(i as usize)
    };
    let a = &ann.tokens[n - 1];
    FeatureRow {
        sentence_id: ann.id().to_string(),
        n,
        token_length: a.token.char_len(),
        pos: tag_of(ann, n),
        training_frequency: a.training_frequency,
        relative_position: n as f64 / len as f64,
        penultimate: len >= 2 && n == len - 1,
        followed_by_punctuation: n < len && kind(n + 1) == TokenKind::Punct,
        distance_to_punctuation: next_punct.map_or(len - n, |p| p - n - 1),
        distance_to_parent_phrase_end: a.tokens_to_parent_phrase_end,
        pos_prev: (1..=window)
            .map(|m| neighbour(-(m as isize)).map_or(NO_NEIGHBOUR.into(), |i| tag_of(ann, i)))
            .collect(),
        pos_next: (1..=window).map(|m| neighbour(m as isize).map_or(NO_NEIGHBOUR.into(), |i| tag_of(ann, i))).collect(),
        word_length_prev: (1..=window).map(|m| neighbour(-(m as isize)).map(|i| ann.tokens[i - 1].token.char_len())).collect(),
        word_length_next: (1..=window).map(|m| neighbour(m as isize).map(|i| ann.tokens[i - 1].token.char_len())).collect(),
        target,
    }
}

/// A named block of matrix columns that is selected, eliminated and permuted as one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub columns: Range<usize>,
}

/// Column-major numeric design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub columns: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Sentence id of each row, used for leakage-free splits.
    pub units: Vec<String>,
}

struct Builder {
    names: Vec<String>,
    groups: Vec<FeatureGroup>,
    columns: Vec<Vec<f64>>,
}

impl Builder {
    fn group(&mut self, name: &str, cols: Vec<(String, Vec<f64>)>) {
        let start = self.names.len();
        for (n, c) in cols {
            self.names.push(n);
            self.columns.push(c);
        }
        self.groups.push(FeatureGroup { name: name.to_string(), columns: start..self.names.len() });
    }

    fn numeric(&mut self, name: &str, values: Vec<f64>) {
        self.group(name, vec![(name.to_string(), values)]);
    }

    /// Value column with -1 for missing entries plus a 0/1 presence column.
    fn optional(&mut self, name: &str, values: Vec<Option<f64>>) {
        let v = values.iter().map(|x| x.unwrap_or(-1.0)).collect();
        let p = values.iter().map(|x| if x.is_some() { 1.0 } else { 0.0 }).collect();
        self.group(name, vec![(name.to_string(), v), (format!("{name}.present"), p)]);
    }

    fn one_hot(&mut self, name: &str, values: Vec<&str>, tags: &[&str]) {
        let cols = tags
            .iter()
            .map(|t| (format!("{name}={t}"), values.iter().map(|v| if v == t { 1.0 } else { 0.0 }).collect()))
            .collect();
        self.group(name, cols);
    }
}

fn flag(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

impl FeatureMatrix {
    /// Encodes rows: categorical features are one-hot expanded, optional
    /// ones get a presence column next to a -1 sentinel.
    pub fn from_rows(rows: &[FeatureRow]) -> Self {
        let window = rows.first().map_or(DEFAULT_WINDOW, |r| r.pos_prev.len());
        let mut b = Builder { names: Vec::new(), groups: Vec::new(), columns: Vec::new() };
        let col = |f: &dyn Fn(&FeatureRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        b.numeric("token_length", col(&|r| r.token_length as f64));
        b.one_hot("pos", rows.iter().map(|r| r.pos.as_str()).collect(), &POS_TAGS[..19]);
        b.optional("training_frequency", rows.iter().map(|r| r.training_frequency.map(|v| v as f64)).collect());
        b.numeric("relative_position", col(&|r| r.relative_position));
        b.numeric("penultimate", col(&|r| flag(r.penultimate)));
        b.numeric("followed_by_punctuation", col(&|r| flag(r.followed_by_punctuation)));
        b.numeric("distance_to_punctuation", col(&|r| r.distance_to_punctuation as f64));
        b.optional(
            "distance_to_parent_phrase_end",
            rows.iter().map(|r| r.distance_to_parent_phrase_end.map(|v| v as f64)).collect(),
        );
        for m in 0..window {
            b.one_hot(&format!("pos_prev_{}", m + 1), rows.iter().map(|r| r.pos_prev[m].as_str()).collect(), &POS_TAGS);
        }
        for m in 0..window {
            b.one_hot(&format!("pos_next_{}", m + 1), rows.iter().map(|r| r.pos_next[m].as_str()).collect(), &POS_TAGS);
        }
        for m in 0..window {
            b.optional(
                &format!("word_length_prev_{}", m + 1),
                rows.iter().map(|r| r.word_length_prev[m].map(|v| v as f64)).collect(),
            );
        }
        for m in 0..window {
            b.optional(
                &format!("word_length_next_{}", m + 1),
                rows.iter().map(|r| r.word_length_next[m].map(|v| v as f64)).collect(),
            );
        }
        FeatureMatrix {
            column_names: b.names,
            groups: b.groups,
            columns: b.columns,
            targets: rows.iter().map(|r| r.target).collect(),
            units: rows.iter().map(|r| r.sentence_id.clone()).collect(),
        }
    }

    /// One single-column group per entry.
    pub fn from_columns(named: Vec<(String, Vec<f64>)>, targets: Vec<f64>) -> Self {
        let groups = named.iter().enumerate().map(|(i, (n, _))| FeatureGroup { name: n.clone(), columns: i..i + 1 }).collect();
        let units = (0..targets.len()).map(|i| i.to_string()).collect();
        let (column_names, columns) = named.into_iter().unzip();
        FeatureMatrix { column_names, groups, columns, targets, units }
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn group(&self, name: &str) -> Option<&FeatureGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Keeps only the named groups, in their original order.
    pub fn select_groups(&self, names: &[String]) -> Self {
        let mut out = FeatureMatrix {
            column_names: Vec::new(),
            groups: Vec::new(),
            columns: Vec::new(),
            targets: self.targets.clone(),
            units: self.units.clone(),
        };
        for g in self.groups.iter().filter(|g| names.contains(&g.name)) {
            let start = out.columns.len();
            for c in g.columns.clone() {
                out.column_names.push(self.column_names[c].clone());
                out.columns.push(self.columns[c].clone());
            }
            out.groups.push(FeatureGroup { name: g.name.clone(), columns: start..out.columns.len() });
        }
        out
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            groups: self.groups.clone(),
            columns: self.columns.iter().map(|c| indices.iter().map(|&i| c[i]).collect()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
        }
    }

    /// Appends a single-column group.
    pub fn push_group(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows());
        let i = self.columns.len();
        self.column_names.push(name.to_string());
        self.columns.push(values);
        self.groups.push(FeatureGroup { name: name.to_string(), columns: i..i + 1 });
    }

    /// Inserts a single-column group in front of all others.
    pub fn prepend_group(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows());
        self.column_names.insert(0, name.to_string());
        self.columns.insert(0, values);
        for g in self.groups.iter_mut() {
            g.columns = g.columns.start + 1..g.columns.end + 1;
        }
        self.groups.insert(0, FeatureGroup { name: name.to_string(), columns: 0..1 });
    }

    /// Columns `unit,<column names...>,target`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["unit".to_string()];
        header.extend(self.column_names.iter().cloned());
        header.push("target".into());
        out.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut row = vec![self.units[i].clone()];
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            row.push(self.targets[i].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn plain(raw: &str) -> AnnotatedSentence {
        AnnotatedSentence::unannotated(Sentence::new("s", raw).unwrap())
    }

    #[test]
    fn table_sentence_dog() {
        let a = plain("The dog is in the yard.");
        let r = extract_features(&a, 3, DEFAULT_WINDOW, 0.0);
        assert_eq!(r.token_length, 3);
        assert_eq!(r.relative_position, 0.25);
        assert!(!r.penultimate);
        assert!(!r.followed_by_punctuation);
        assert_eq!(r.distance_to_punctuation, 8);
        assert_eq!(r.word_length_next, vec![Some(1), Some(2), Some(1), Some(2)]);
        assert_eq!(r.word_length_prev, vec![Some(1), Some(3), None, None]);
        assert_eq!(r.pos_prev[2], NO_NEIGHBOUR);
        assert_eq!(r.pos_next[0], "SPACE");
        assert_eq!(r.pos, "UNK");
    }

    #[test]
    fn last_token() {
        let a = plain("The dog is in the yard.");
        let r = extract_features(&a, 12, DEFAULT_WINDOW, 0.0);
        assert_eq!(r.relative_position, 1.0);
        assert_eq!(r.pos_next[0], NO_NEIGHBOUR);
        assert_eq!(r.word_length_next[0], None);
        assert_eq!(r.pos, "PUNCT");
        assert_eq!(r.distance_to_punctuation, 0);
        assert!(extract_features(&a, 11, DEFAULT_WINDOW, 0.0).followed_by_punctuation);
        assert!(extract_features(&a, 11, DEFAULT_WINDOW, 0.0).penultimate);
    }

    #[test]
    fn hi_period() {
        let a = plain("Hi.");
        assert_eq!(a.tokens.len(), 2);
        let r = extract_features(&a, 1, DEFAULT_WINDOW, 0.0);
        assert_eq!(r.distance_to_punctuation, 0);
        assert!(r.penultimate);
        assert!(r.followed_by_punctuation);
    }

    #[test]
    fn matrix_layout() {
        let a = plain("The dog is in the yard.");
        let rows: Vec<_> = (1..=12).map(|n| extract_features(&a, n, DEFAULT_WINDOW, n as f64)).collect();
        let m = FeatureMatrix::from_rows(&rows);
        assert_eq!(m.groups.len(), 8 + 4 * DEFAULT_WINDOW);
        assert_eq!(m.n_rows(), 12);
        assert_eq!(m.n_columns(), m.groups.last().unwrap().columns.end);
        let pos = m.group("pos").unwrap();
        for i in 0..12 {
            let hot: f64 = pos.columns.clone().map(|c| m.columns[c][i]).sum();
            assert_eq!(hot, 1.0);
        }
        let wl = m.group("word_length_next_1").unwrap();
        assert_eq!(m.columns[wl.columns.start][11], -1.0);
        assert_eq!(m.columns[wl.columns.start + 1][11], 0.0);
        let sel = m.select_groups(&["token_length".into(), "pos_next_2".into()]);
        assert_eq!(sel.groups.len(), 2);
        assert_eq!(sel.n_columns(), 1 + POS_TAGS.len());
        let mut buf = Vec::new();
        sel.select_rows(&[0, 2]).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
