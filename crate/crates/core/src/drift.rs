//! Representation drift: cosine distance between a token's incremental and
//! full-context vectors, with per-lookahead and per-category aggregation and
//! paired tests between consecutive lookaheads.

use crate::corpus::{categorize, AnnotatedSentence, Category};
use crate::policy::{EncodingTrace, LookaheadSweep};
use crate::scalar::{dot, Scalar};
use crate::stats::{self, StatsError};
pub use crate::stats::{paired_ttest, TTestResult};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("zero-norm vector")]
    DegenerateVector,
    #[error("dimension mismatch: {0} vs {1}")]
    ShapeError(usize, usize),
    #[error("zero-norm vector in sentence {sentence_id} at n={n}, k={k}")]
    DegenerateRecord { sentence_id: String, n: usize, k: usize },
    #[error("trace for {trace} does not match annotations for {annotations}")]
    SentenceMismatch { trace: String, annotations: String },
    #[error("no drift records")]
    EmptyData,
    #[error("missing record for sentence {sentence_id}, n={n}, k={k}")]
    MissingRecord { sentence_id: String, n: usize, k: usize },
    #[error("drift csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// `1 - a·b / (|a| |b|)`, clamped to `[0, 2]`.
pub fn cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T, DriftError> {
    if a.len() != b.len() {
        return Err(DriftError::ShapeError(a.len(), b.len()));
    }
    let na = dot(a, a);
    let nb = dot(b, b);
    if na <= T::zero() || nb <= T::zero() {
        return Err(DriftError::DegenerateVector);
    }
    let cos = dot(a, b) / (na * nb).sqrt();
    let two = T::one() + T::one();
    Ok((T::one() - cos).max(T::zero()).min(two))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub sentence_id: String,
    pub n: usize,
    pub k: usize,
    pub d: f64,
    pub category: Category,
}

fn widen<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn record_distance<T: Scalar>(
    incremental: &[T],
    full: &[T],
    sentence_id: &str,
    n: usize,
    k: usize,
) -> Result<f64, DriftError> {
    cosine_distance(&widen(incremental), &widen(full)).map_err(|e| match e {
        DriftError::DegenerateVector => DriftError::DegenerateRecord { sentence_id: sentence_id.to_string(), n, k },
        other => other,
    })
}

fn check_same(id: &str, ann: &AnnotatedSentence, len: usize) -> Result<(), DriftError> {
    if id != ann.id() || len != ann.tokens.len() {
        return Err(DriftError::SentenceMismatch { trace: id.to_string(), annotations: ann.id().to_string() });
    }
    Ok(())
}

/// One record per token of the trace, at the trace's lookahead.
pub fn compute_drift<T: Scalar>(
    trace: &EncodingTrace<T>,
    annotations: &AnnotatedSentence,
) -> Result<Vec<DriftRecord>, DriftError> {
    check_same(&trace.sentence_id, annotations, trace.len())?;
    trace
        .prefixes
        .iter()
        .map(|p| {
            let d = record_distance(&p.current().z, &trace.full[p.n - 1].z, &trace.sentence_id, p.n, p.k)?;
            Ok(DriftRecord {
                sentence_id: trace.sentence_id.clone(),
                n: p.n,
                k: p.k,
                d,
                category: categorize(&annotations.tokens[p.n - 1]),
            })
        })
        .collect()
}

/// Records for every token and every `k` in `0..=k_max`, ordered by `(k, n)`.
pub fn compute_drift_sweep<T: Scalar>(
    sweep: &LookaheadSweep<T>,
    annotations: &AnnotatedSentence,
    k_max: usize,
) -> Result<Vec<DriftRecord>, DriftError> {
    check_same(&sweep.sentence_id, annotations, sweep.len())?;
    let mut out = Vec::with_capacity(sweep.len() * (k_max + 1));
    for k in 0..=k_max {
        for n in 1..=sweep.len() {
            let d = record_distance(&sweep.incremental(n, k).z, &sweep.full[n - 1].z, &sweep.sentence_id, n, k)?;
            out.push(DriftRecord {
                sentence_id: sweep.sentence_id.clone(),
                n,
                k,
                d,
                category: categorize(&annotations.tokens[n - 1]),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl GroupStats {
    fn of(xs: &[f64]) -> Self {
        GroupStats { mean: stats::mean(xs), std: stats::population_std(xs), count: xs.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadSummary {
    pub k: usize,
    pub overall: GroupStats,
    pub by_category: BTreeMap<Category, GroupStats>,
    /// `r(k) = 1 - mean(k) / mean(0)`; `None` without records at `k = 0`.
    pub closeness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub per_k: Vec<LookaheadSummary>,
    /// Mean drift at `k = 0` was exactly zero; closeness is reported as 1
    /// for every `k > 0`.
    pub closeness_degenerate: bool,
}

impl DriftSummary {
    pub fn at(&self, k: usize) -> Option<&LookaheadSummary> {
        self.per_k.iter().find(|s| s.k == k)
    }
}

fn sorted(records: &[DriftRecord]) -> Vec<&DriftRecord> {
    let mut v: Vec<&DriftRecord> = records.iter().collect();
    v.sort_by(|a, b| (a.k, &a.sentence_id, a.n).cmp(&(b.k, &b.sentence_id, b.n)));
    v
}

/// Flat means over all `(sentence, n)` units per lookahead and category.
/// Records are sorted first, so the result does not depend on input order.
pub fn summarize(records: &[DriftRecord], k_max: usize) -> Result<DriftSummary, DriftError> {
    if records.is_empty() {
        return Err(DriftError::EmptyData);
    }
    let mut overall: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut by_cat: BTreeMap<(usize, Category), Vec<f64>> = BTreeMap::new();
    for r in sorted(records).into_iter().filter(|r| r.k <= k_max) {
        overall.entry(r.k).or_default().push(r.d);
        by_cat.entry((r.k, r.category)).or_default().push(r.d);
    }
    if overall.is_empty() {
        return Err(DriftError::EmptyData);
    }
    let base = overall.get(&0).map(|v| stats::mean(v));
    let degenerate = base == Some(0.0);
    let per_k = overall
        .iter()
        .map(|(&k, ds)| {
            let s = GroupStats::of(ds);
            let closeness = base.map(|b| match (k, degenerate) {
                (0, _) => 0.0,
                (_, true) => 1.0,
                _ => 1.0 - s.mean / b,
            });
            let by_category = Category::ALL
                .into_iter()
                .filter_map(|c| by_cat.get(&(k, c)).map(|v| (c, GroupStats::of(v))))
                .collect();
            LookaheadSummary { k, overall: s, by_category, closeness }
        })
        .collect();
    Ok(DriftSummary { per_k, closeness_degenerate: degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadTest {
    pub k: usize,
    pub k_next: usize,
    pub result: TTestResult,
}

/// Paired t-tests of `d(n, k)` against `d(n, k + 1)` over identical
/// `(sentence, n)` units, for `k` in `0..k_max`.
pub fn consecutive_lookahead_tests(records: &[DriftRecord], k_max: usize) -> Result<Vec<LookaheadTest>, DriftError> {
    if records.is_empty() {
        return Err(DriftError::EmptyData);
    }
    let mut by_unit: HashMap<(&str, usize, usize), f64> = HashMap::with_capacity(records.len());
    for r in records {
        by_unit.insert((r.sentence_id.as_str(), r.n, r.k), r.d);
    }
    let mut units: Vec<(&str, usize)> = records.iter().filter(|r| r.k == 0).map(|r| (r.sentence_id.as_str(), r.n)).collect();
    units.sort_unstable();
    units.dedup();
    if units.is_empty() {
        return Err(DriftError::EmptyData);
    }
    let mut out = Vec::new();
    for k in 0..k_max {
        let mut x = Vec::with_capacity(units.len());
        let mut y = Vec::with_capacity(units.len());
        for &(sid, n) in &units {
            let get = |kk: usize| {
                by_unit.get(&(sid, n, kk)).copied().ok_or_else(|| DriftError::MissingRecord {
                    sentence_id: sid.to_string(),
                    n,
                    k: kk,
                })
            };
            x.push(get(k)?);
            y.push(get(k + 1)?);
        }
        out.push(LookaheadTest { k, k_next: k + 1, result: paired_ttest(&x, &y)? });
    }
    Ok(out)
}

/// Columns: `sentence_id,n,k,category,d`.
pub fn write_drift_csv<W: Write>(w: W, records: &[DriftRecord]) -> Result<(), DriftError> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| DriftError::Csv(e.to_string());
    out.write_record(["sentence_id", "n", "k", "category", "d"]).map_err(err)?;
    for r in records {
        out.write_record([&r.sentence_id, &r.n.to_string(), &r.k.to_string(), r.category.as_str(), &r.d.to_string()])
            .map_err(err)?;
    }
    out.flush().map_err(|e| DriftError::Csv(e.to_string()))
}

pub fn read_drift_csv<R: Read>(r: R) -> Result<Vec<DriftRecord>, DriftError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| DriftError::Csv(e.to_string()))?;
        let bad = |what: &str| DriftError::Csv(format!("row {}: bad {what}", i + 2));
        if row.len() != 5 {
            return Err(bad("column count"));
        }
        out.push(DriftRecord {
            sentence_id: row[0].to_string(),
            n: row[1].parse().map_err(|_| bad("n"))?,
            k: row[2].parse().map_err(|_| bad("k"))?,
            category: Category::parse(&row[3]).ok_or_else(|| bad("category"))?,
            d: row[4].parse().map_err(|_| bad("d"))?,
        });
    }
    Ok(out)
}

/// Columns: `k,category,count,mean,std,closeness`. The `all` rows carry the
/// closeness ratio; category rows leave it empty.
pub fn write_summary_csv<W: Write>(w: W, summary: &DriftSummary) -> Result<(), DriftError> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| DriftError::Csv(e.to_string());
    out.write_record(["k", "category", "count", "mean", "std", "closeness"]).map_err(err)?;
    for s in &summary.per_k {
        let k = s.k.to_string();
        let close = s.closeness.map(|c| c.to_string()).unwrap_or_default();
        let o = &s.overall;
        out.write_record([&k, "all", &o.count.to_string(), &o.mean.to_string(), &o.std.to_string(), &close])
            .map_err(err)?;
        for (c, g) in &s.by_category {
            out.write_record([&k, c.as_str(), &g.count.to_string(), &g.mean.to_string(), &g.std.to_string(), ""])
                .map_err(err)?;
        }
    }
    out.flush().map_err(|e| DriftError::Csv(e.to_string()))
}

/// Reads the per-k rows of a summary CSV back as `(k, category, mean, std, count)`;
/// the overall rows use `None` for the category.
pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<(usize, Option<Category>, GroupStats)>, DriftError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| DriftError::Csv(e.to_string()))?;
        let bad = |what: &str| DriftError::Csv(format!("row {}: bad {what}", i + 2));
        let k = row.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("k"))?;
        let cat = match row.get(1) {
            Some("all") => None,
            Some(c) => Some(Category::parse(c).ok_or_else(|| bad("category"))?),
            None => return Err(bad("category")),
        };
        let count = row.get(2).and_then(|v| v.parse().ok()).ok_or_else(|| bad("count"))?;
        let mean = row.get(3).and_then(|v| v.parse().ok()).ok_or_else(|| bad("mean"))?;
        let std = row.get(4).and_then(|v| v.parse().ok()).ok_or_else(|| bad("std"))?;
        out.push((k, cat, GroupStats { mean, std, count }));
    }
    Ok(out)
}

/// Columns: `k,k_next,pairs,mean_diff,t,df,p,significant,degenerate`.
pub fn write_tests_csv<W: Write>(w: W, tests: &[LookaheadTest], alpha: f64) -> Result<(), DriftError> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| DriftError::Csv(e.to_string());
    out.write_record(["k", "k_next", "pairs", "mean_diff", "t", "df", "p", "significant", "degenerate"])
        .map_err(err)?;
    for t in tests {
        let r = &t.result;
        out.write_record([
            t.k.to_string(),
            t.k_next.to_string(),
            r.pairs.to_string(),
            r.mean_diff.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.p.to_string(),
            r.significant(alpha).to_string(),
            r.degenerate.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| DriftError::Csv(e.to_string()))
}
