//! Listening-test ratings: hidden-reference screening and per-condition
//! statistics with paired tests between neighbouring conditions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{mean, paired_ttest, population_std, StatsError, TTestResult};

pub const DEFAULT_THRESHOLD: f64 = 90.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MushraError {
    #[error("row {row}: score {score} outside [0, 100]")]
    RangeError { row: usize, score: f64 },
    #[error("row {row}: duplicate rating for {participant}/{sentence}/{condition}")]
    DuplicateError { row: usize, participant: String, sentence: String, condition: String },
    #[error("row {row}: {message}")]
    ParseError { row: usize, message: String },
    #[error("no hidden-reference ratings")]
    MissingReference,
    #[error("need at least 2 retained participants, have {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    K1,
    K2,
    K4,
    K6,
    Reference,
}

impl Condition {
    pub const ALL: [Condition; 5] = [Condition::K1, Condition::K2, Condition::K4, Condition::K6, Condition::Reference];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::K1 => "k1",
            Condition::K2 => "k2",
            Condition::K4 => "k4",
            Condition::K6 => "k6",
            Condition::Reference => "ref",
        }
    }

    pub fn parse(s: &str) -> Option<Condition> {
        Condition::ALL.into_iter().find(|c| c.as_str() == s.trim())
    }
}

/// Condition pairs tested by [`summarize_mushra`].
pub const TESTED_PAIRS: [(Condition, Condition); 4] = [
    (Condition::K1, Condition::K2),
    (Condition::K2, Condition::K4),
    (Condition::K4, Condition::K6),
    (Condition::K6, Condition::Reference),
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingSet {
    /// (participant, sentence, condition) -> score.
    pub scores: BTreeMap<(String, String, Condition), f64>,
    /// Missing cells of the participant x item design.
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    participant_id: String,
    sentence_id: String,
    condition: String,
    score: f64,
}

impl RatingSet {
    pub fn participants(&self) -> BTreeSet<&str> {
        self.scores.keys().map(|(p, _, _)| p.as_str()).collect()
    }

    pub fn items(&self) -> BTreeSet<(&str, Condition)> {
        self.scores.keys().map(|(_, s, c)| (s.as_str(), *c)).collect()
    }

    /// Lists every (participant, item) cell without a score.
    pub fn missing_cells(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in self.participants() {
            for (s, c) in self.items() {
                if !self.scores.contains_key(&(p.to_string(), s.to_string(), c)) {
                    out.push(format!("participant {p} has no rating for {s}/{}", c.as_str()));
                }
            }
        }
        out
    }

    /// Ratings from the CSV layout `participant_id,sentence_id,condition,score`.
    /// Rows are numbered from 1 after the header.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, MushraError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut set = RatingSet::default();
        for (i, row) in rdr.deserialize::<RatingRow>().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| MushraError::ParseError { row: row_no, message: e.to_string() })?;
            let cond = Condition::parse(&row.condition).ok_or_else(|| MushraError::ParseError {
                row: row_no,
                message: format!("unknown condition {:?}", row.condition),
            })?;
            if !(0.0..=100.0).contains(&row.score) {
                return Err(MushraError::RangeError { row: row_no, score: row.score });
            }
            let key = (row.participant_id, row.sentence_id, cond);
            if set.scores.contains_key(&key) {
                return Err(MushraError::DuplicateError {
                    row: row_no,
                    participant: key.0,
                    sentence: key.1,
                    condition: cond.as_str().into(),
                });
            }
            set.scores.insert(key, row.score);
        }
        set.warnings = set.missing_cells();
        Ok(set)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MushraError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| MushraError::Io(e.to_string());
        out.write_record(["participant_id", "sentence_id", "condition", "score"]).map_err(io)?;
        for ((p, s, c), v) in &self.scores {
            out.write_record([p.as_str(), s.as_str(), c.as_str(), &v.to_string()]).map_err(io)?;
        }
        out.flush().map_err(|e| MushraError::Io(e.to_string()))
    }

    fn condition_means(&self, participant: &str, cond: Condition) -> Option<f64> {
        let v: Vec<f64> =
            self.scores.iter().filter(|((p, _, c), _)| p == participant && *c == cond).map(|(_, v)| *v).collect();
        (!v.is_empty()).then(|| mean(&v))
    }
}

pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingSet, MushraError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| MushraError::Io(format!("{}: {e}", path.display())))?;
    RatingSet::from_csv(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant: String,
    /// Mean hidden-reference score, or `None` if the participant rated no reference.
    pub reference_mean: Option<f64>,
    pub reason: String,
}

/// Drops every participant whose mean hidden-reference score is below
/// `threshold`, and those who never rated the reference.
pub fn apply_exclusion(ratings: &RatingSet, threshold: f64) -> Result<(RatingSet, Vec<Exclusion>), MushraError> {
    if !ratings.scores.keys().any(|(_, _, c)| *c == Condition::Reference) {
        return Err(MushraError::MissingReference);
    }
    let mut excluded = Vec::new();
    for p in ratings.participants() {
        match ratings.condition_means(p, Condition::Reference) {
            Some(m) if m < threshold => excluded.push(Exclusion {
                participant: p.to_string(),
                reference_mean: Some(m),
                reason: format!("hidden-reference mean {m} < {threshold}"),
            }),
            Some(_) => {}
            None => excluded.push(Exclusion {
                participant: p.to_string(),
                reference_mean: None,
                reason: "no hidden-reference ratings".into(),
            }),
        }
    }
    let gone: BTreeSet<&str> = excluded.iter().map(|e| e.participant.as_str()).collect();
    let scores = ratings.scores.iter().filter(|((p, _, _), _)| !gone.contains(p.as_str())).map(|(k, v)| (k.clone(), *v)).collect();
    let mut kept = RatingSet { scores, warnings: Vec::new() };
    kept.warnings = kept.missing_cells();
    Ok((kept, excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub condition: Condition,
    pub mean: f64,
    /// Population standard deviation over all retained ratings.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: Condition,
    pub b: Condition,
    pub result: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MushraSummary {
    pub conditions: Vec<ConditionStats>,
    pub retained_participants: usize,
    pub excluded: Vec<Exclusion>,
    pub tests: Vec<PairTest>,
    pub pairing: String,
}

/// Per-condition statistics and paired tests. The pairing unit is the
/// participant: each contributes its mean over the sentences it rated in
/// both conditions.
pub fn summarize_mushra(ratings: &RatingSet, excluded: Vec<Exclusion>) -> Result<MushraSummary, MushraError> {
    let participants = ratings.participants();
    if participants.len() < 2 {
        return Err(MushraError::InsufficientData(participants.len()));
    }
    let conditions = Condition::ALL
        .iter()
        .filter_map(|&c| {
            let v: Vec<f64> = ratings.scores.iter().filter(|((_, _, k), _)| *k == c).map(|(_, v)| *v).collect();
            (!v.is_empty()).then(|| ConditionStats { condition: c, mean: mean(&v), std: population_std(&v), count: v.len() })
        })
        .collect();
    let mut tests = Vec::new();
    for (a, b) in TESTED_PAIRS {
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for p in &participants {
            let (mut sa, mut sb) = (Vec::new(), Vec::new());
            for ((pp, s, c), v) in &ratings.scores {
                if pp != p || *c != a {
                    continue;
                }
                if let Some(w) = ratings.scores.get(&(pp.clone(), s.clone(), b)) {
                    sa.push(*v);
                    sb.push(*w);
                }
            }
            if !sa.is_empty() {
                xa.push(mean(&sa));
                xb.push(mean(&sb));
            }
        }
        if xa.len() >= 2 {
            tests.push(PairTest { a, b, result: paired_ttest(&xa, &xb)? });
        }
    }
    Ok(MushraSummary {
        conditions,
        retained_participants: participants.len(),
        excluded,
        tests,
        pairing: "participant means over sentences rated in both conditions".into(),
    })
}

impl MushraSummary {
    /// Columns `condition,mean,std,count`.
    pub fn write_conditions_csv<W: Write>(&self, w: W) -> Result<(), MushraError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| MushraError::Io(e.to_string());
        out.write_record(["condition", "mean", "std", "count"]).map_err(io)?;
        for c in &self.conditions {
            out.write_record([c.condition.as_str().to_string(), c.mean.to_string(), c.std.to_string(), c.count.to_string()])
                .map_err(io)?;
        }
        out.flush().map_err(|e| MushraError::Io(e.to_string()))
    }

    /// Columns `a,b,pairs,mean_diff,t,df,p,significant`.
    pub fn write_tests_csv<W: Write>(&self, w: W, alpha: f64) -> Result<(), MushraError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| MushraError::Io(e.to_string());
        out.write_record(["a", "b", "pairs", "mean_diff", "t", "df", "p", "significant"]).map_err(io)?;
        for t in &self.tests {
            let r = &t.result;
            out.write_record([
                t.a.as_str().to_string(),
                t.b.as_str().to_string(),
                r.pairs.to_string(),
                r.mean_diff.to_string(),
                r.t.to_string(),
                r.df.to_string(),
                r.p.to_string(),
                r.significant(alpha).to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| MushraError::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(rows: &[&str]) -> String {
        let mut s = "participant_id,sentence_id,condition,score\n".to_string();
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn load_complete_and_incomplete() {
        let r = RatingSet::from_csv(csv(&["p1,s1,k1,10", "p1,s1,ref,95", "p2,s1,k1,20", "p2,s1,ref,100"]).as_bytes()).unwrap();
        assert_eq!(r.scores.len(), 4);
        assert!(r.warnings.is_empty());
        let r = RatingSet::from_csv(csv(&["p1,s1,k1,10", "p1,s1,ref,95", "p2,s1,k1,20"]).as_bytes()).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn load_errors() {
        assert_eq!(
            RatingSet::from_csv(csv(&["p1,s1,k1,10", "p1,s1,k2,101"]).as_bytes()).unwrap_err(),
            MushraError::RangeError { row: 2, score: 101.0 }
        );
        assert!(matches!(
            RatingSet::from_csv(csv(&["p1,s1,k1,10", "p1,s1,k1,11"]).as_bytes()),
            Err(MushraError::DuplicateError { row: 2, .. })
        ));
        assert!(matches!(RatingSet::from_csv(csv(&["p1,s1,k3,10"]).as_bytes()), Err(MushraError::ParseError { .. })));
    }

    #[test]
    fn exclusion_boundary_and_idempotence() {
        let r = RatingSet::from_csv(
            csv(&["a,s1,ref,45", "a,s1,k1,30", "b,s1,ref,90", "b,s1,k1,30", "c,s1,ref,100", "c,s1,k1,40"]).as_bytes(),
        )
        .unwrap();
        let (kept, ex) = apply_exclusion(&r, 90.0).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].participant, "a");
        assert_eq!(kept.participants().into_iter().collect::<Vec<_>>(), vec!["b", "c"]);
        let (again, ex2) = apply_exclusion(&kept, 90.0).unwrap();
        assert_eq!(again, kept);
        assert!(ex2.is_empty());
    }

    #[test]
    fn missing_reference() {
        let r = RatingSet::from_csv(csv(&["a,s1,k1,30"]).as_bytes()).unwrap();
        assert_eq!(apply_exclusion(&r, 90.0).unwrap_err(), MushraError::MissingReference);
    }

    #[test]
    fn identical_scores_give_null_tests() {
        let mut rows = Vec::new();
        for p in ["a", "b", "c"] {
            for c in ["k1", "k2", "k4", "k6", "ref"] {
                rows.push(format!("{p},s1,{c},50"));
            }
        }
        let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let r = RatingSet::from_csv(csv(&refs).as_bytes()).unwrap();
        let s = summarize_mushra(&r, vec![]).unwrap();
        assert_eq!(s.tests.len(), 4);
        for t in &s.tests {
            assert_eq!((t.result.t, t.result.p), (0.0, 1.0));
        }
    }

    #[test]
    fn single_participant() {
        let r = RatingSet::from_csv(csv(&["a,s1,ref,95", "a,s1,k1,30"]).as_bytes()).unwrap();
        assert_eq!(summarize_mushra(&r, vec![]).unwrap_err(), MushraError::InsufficientData(1));
    }

    #[test]
    fn row_order_does_not_matter() {
        let rows = ["a,s1,k1,10", "a,s1,k2,30", "b,s1,k1,20", "b,s1,k2,35", "c,s1,k1,12", "c,s1,k2,50"];
        let mut rev = rows;
        rev.reverse();
        let x = summarize_mushra(&RatingSet::from_csv(csv(&rows).as_bytes()).unwrap(), vec![]).unwrap();
        let y = summarize_mushra(&RatingSet::from_csv(csv(&rev).as_bytes()).unwrap(), vec![]).unwrap();
        assert_eq!(x, y);
    }
}
