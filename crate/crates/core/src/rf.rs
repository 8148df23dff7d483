//! Which text features explain the drift at a given lookahead: probe
//! elimination, refit on the survivors, permutation importance on held-out
//! sentences.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedSentence;
use crate::drift::DriftRecord;
use crate::features::{extract_features, FeatureMatrix, FeatureRow, DEFAULT_WINDOW};
use crate::forest::{fit_forest, permutation_importance, probe_eliminate, ForestError, ForestParams};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfError {
    #[error("missing drift record for sentence {sentence_id}, n={n}, k={k}")]
    MissingRecord { sentence_id: String, n: usize, k: usize },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ForestError,
    },
}

fn at(stage: &'static str) -> impl Fn(ForestError) -> RfError {
    move |source| RfError::Stage { stage, source }
}

/// Upper bounds of the NS, `*` and `**` bands on mean ΔR²; anything at or
/// above the last is `***`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectBands {
    pub thresholds: [f64; 3],
}

impl Default for EffectBands {
    fn default() -> Self {
        EffectBands { thresholds: [0.01, 0.05, 0.15] }
    }
}

impl EffectBands {
    pub fn band(&self, delta_r2: f64) -> &'static str {
        let [a, b, c] = self.thresholds;
        if delta_r2 < a {
            "NS"
        } else if delta_r2 < b {
            "*"
        } else if delta_r2 < c {
            "**"
        } else {
            "***"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfOptions {
    pub n_estimators: usize,
    pub seed: u64,
    pub window: usize,
    pub repetitions: usize,
    /// Share of sentences used for training.
    pub train_fraction: f64,
    /// Permute on the training split instead of the held-out one.
    pub permute_on_training: bool,
    pub bands: EffectBands,
}

impl Default for RfOptions {
    fn default() -> Self {
        RfOptions {
            n_estimators: 100,
            seed: 0,
            window: DEFAULT_WINDOW,
            repetitions: 10,
            train_fraction: 0.8,
            permute_on_training: false,
            bands: EffectBands::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_delta_r2: f64,
    pub std_delta_r2: f64,
    pub band: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub k: usize,
    pub n_rows: usize,
    pub train_rows: usize,
    pub eval_rows: usize,
    pub eval_split: String,
    pub train_sentences: Vec<String>,
    /// Group importances from the probe fit, normalized with the probe included.
    pub gini: Vec<(String, f64)>,
    pub probe_gini: f64,
    pub surviving_features: Vec<String>,
    pub empty_survivor_set: bool,
    pub r2_baseline: Option<f64>,
    pub repetitions: usize,
    /// Survivors ranked by mean ΔR².
    pub permutation: Vec<FeatureImportance>,
    pub band_thresholds: [f64; 3],
}

impl ImportanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn top(&self, count: usize) -> Vec<&str> {
        self.permutation.iter().take(count).map(|f| f.feature.as_str()).collect()
    }
}

/// One feature row per token, targeting `d(n, k)`.
pub fn build_rows(
    records: &[DriftRecord],
    corpus: &[AnnotatedSentence],
    k: usize,
    window: usize,
) -> Result<Vec<FeatureRow>, RfError> {
    let index: HashMap<(&str, usize), f64> =
        records.iter().filter(|r| r.k == k).map(|r| ((r.sentence_id.as_str(), r.n), r.d)).collect();
    let mut rows = Vec::new();
    for s in corpus {
        for n in 1..=s.tokens.len() {
            let d = *index
                .get(&(s.id(), n))
                .ok_or_else(|| RfError::MissingRecord { sentence_id: s.id().to_string(), n, k })?;
            rows.push(extract_features(s, n, window, d));
        }
    }
    Ok(rows)
}

/// Splits the matrix rows by sentence: the first `train_fraction` of a seeded
/// shuffle of the distinct sentence ids trains, the rest evaluates.
pub fn sentence_split(m: &FeatureMatrix, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<String>) {
    let mut ids: Vec<&String> = m.units.iter().collect();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut rng_for(seed, "split", 0));
    let n_train = (ids.len() as f64 * train_fraction).round() as usize;
    let n_train = if ids.len() < 2 { ids.len() } else { n_train.clamp(1, ids.len() - 1) };
    let mut train_ids: Vec<String> = ids[..n_train].iter().map(|s| s.to_string()).collect();
    train_ids.sort();
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (i, u) in m.units.iter().enumerate() {
        if train_ids.binary_search(u).is_ok() { train.push(i) } else { eval.push(i) }
    }
    (train, eval, train_ids)
}

/// Probe elimination and the refit use the training split; permutation
/// importance uses the held-out split unless `permute_on_training` is set.
pub fn run_rf_on_matrix(m: &FeatureMatrix, k: usize, opts: &RfOptions) -> Result<ImportanceReport, RfError> {
    let y = &m.targets;
    if y.iter().all(|v| *v == y[0]) {
        return Err(RfError::Stage {
            stage: "features",
            source: ForestError::TrainingError(format!("target d(n, {k}) is constant")),
        });
    }
    let (train_idx, eval_idx, train_sentences) = sentence_split(m, opts.train_fraction, opts.seed);
    let train = m.select_rows(&train_idx);
    let params = ForestParams {
        n_estimators: opts.n_estimators,
        seed: derive_seed(opts.seed, "forest", k as u64),
        ..Default::default()
    };
    let probe = probe_eliminate(&train, &params).map_err(at("probe"))?;

    let mut report = ImportanceReport {
        k,
        n_rows: m.n_rows(),
        train_rows: train_idx.len(),
        eval_rows: if opts.permute_on_training { train_idx.len() } else { eval_idx.len() },
        eval_split: if opts.permute_on_training { "training" } else { "held-out" }.into(),
        train_sentences,
        gini: probe.group_gini.clone(),
        probe_gini: probe.probe_gini,
        surviving_features: probe.survivors.clone(),
        empty_survivor_set: probe.empty_survivor_set(),
        r2_baseline: None,
        repetitions: opts.repetitions,
        permutation: Vec::new(),
        band_thresholds: opts.bands.thresholds,
    };
    if probe.empty_survivor_set() {
        return Ok(report);
    }
    let refit_train = train.select_groups(&probe.survivors);
    let model = fit_forest(&refit_train, &params).map_err(at("refit"))?;
    let eval = if opts.permute_on_training { refit_train } else { m.select_rows(&eval_idx).select_groups(&probe.survivors) };
    let perm = permutation_importance(&model, &eval, opts.repetitions, derive_seed(opts.seed, "permutation", k as u64))
        .map_err(at("permutation"))?;
    report.r2_baseline = Some(perm.r2_baseline);
    report.permutation = perm
        .ranked()
        .into_iter()
        .map(|e| FeatureImportance {
            feature: e.feature.clone(),
            mean_delta_r2: e.mean,
            std_delta_r2: e.std,
            band: opts.bands.band(e.mean).into(),
        })
        .collect();
    Ok(report)
}

pub fn run_rf_pipeline(
    records: &[DriftRecord],
    corpus: &[AnnotatedSentence],
    k: usize,
    opts: &RfOptions,
) -> Result<(ImportanceReport, FeatureMatrix), RfError> {
    let rows = build_rows(records, corpus, k, opts.window)?;
    let m = FeatureMatrix::from_rows(&rows);
    Ok((run_rf_on_matrix(&m, k, opts)?, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        let b = EffectBands::default();
        assert_eq!(b.band(0.0099), "NS");
        assert_eq!(b.band(0.01), "*");
        assert_eq!(b.band(0.05), "**");
        assert_eq!(b.band(0.2), "***");
    }

    #[test]
    fn split_keeps_sentences_whole() {
        let units: Vec<String> = (0..50).map(|i| format!("s{}", i / 5)).collect();
        let mut m = FeatureMatrix::from_columns(vec![("x".into(), vec![0.0; 50])], vec![0.0; 50]);
        m.units = units;
        let (train, eval, ids) = sentence_split(&m, 0.8, 1);
        assert_eq!(ids.len(), 8);
        assert_eq!(train.len(), 40);
        assert_eq!(eval.len(), 10);
        for &i in &eval {
            assert!(!ids.contains(&m.units[i]));
        }
        assert_eq!(sentence_split(&m, 0.8, 1).2, ids);
    }

    #[test]
    fn constant_target_is_a_training_error() {
        let mut m = FeatureMatrix::from_columns(vec![("x".into(), (0..20).map(|i| i as f64).collect())], vec![0.0; 20]);
        m.units = (0..20).map(|i| format!("s{}", i / 2)).collect();
        match run_rf_on_matrix(&m, 0, &RfOptions::default()) {
            Err(RfError::Stage { source: ForestError::TrainingError(_), .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
