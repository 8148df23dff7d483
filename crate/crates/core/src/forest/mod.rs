//! Random-forest regression and the importance measures built on it.
//!
//! Importances are reported per feature group: a one-hot POS column set, or
//! a value column with its presence flag, counts as one feature.

pub mod tree;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::seed::{derive_seed, rng_for};
use crate::stats::{mean, population_std};
pub use tree::{Node, Tree};

/// Name of the random column added by [`probe_eliminate`].
pub const PROBE: &str = "__probe__";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("training error: {0}")]
    TrainingError(String),
    #[error("evaluation error: {0}")]
    EvalError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub seed: u64,
    /// Draw a bootstrap sample per tree. When off every tree sees each row once.
    pub bootstrap: bool,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_estimators: 100, seed: 0, bootstrap: true, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
}

fn check_trainable(m: &FeatureMatrix) -> Result<(), ForestError> {
    if m.n_rows() < 2 {
        return Err(ForestError::TrainingError(format!("need at least 2 rows, got {}", m.n_rows())));
    }
    let varies = |c: &Vec<f64>| c.iter().any(|v| *v != c[0]);
    if !m.columns.iter().any(varies) {
        return Err(ForestError::TrainingError("every feature is constant".into()));
    }
    Ok(())
}

/// Fits `params.n_estimators` regression trees. Tree `i` draws its bootstrap
/// sample from `derive_seed(params.seed, "tree", i)`, so the result does not
/// depend on how many threads grow the trees.
pub fn fit_forest(m: &FeatureMatrix, params: &ForestParams) -> Result<ForestModel, ForestError> {
    check_trainable(m)?;
    if params.n_estimators == 0 {
        return Err(ForestError::TrainingError("n_estimators must be positive".into()));
    }
    let n = m.n_rows();
    let cols: Vec<&[f64]> = m.columns.iter().map(|c| c.as_slice()).collect();
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|i| {
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = rng_for(params.seed, "tree", i as u64);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::grow(&cols, &m.targets, &rows, params.min_samples_split)
        })
        .collect();
    Ok(ForestModel { trees, params: *params, feature_names: m.column_names.clone() })
}

impl ForestModel {
    fn predict_with<F: Fn(usize) -> f64>(&self, value_of: F) -> f64 {
        self.trees.iter().map(|t| t.predict(&value_of)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict_with(|f| x[f])
    }

    /// Predictions for every row of a matrix with the training column layout.
    pub fn predict(&self, m: &FeatureMatrix) -> Vec<f64> {
        (0..m.n_rows()).map(|i| self.predict_with(|f| m.columns[f][i])).collect()
    }

    /// Whether any tree splits on column `f`.
    pub fn uses(&self, f: usize) -> bool {
        self.trees.iter().any(|t| t.used_features().any(|u| u == f))
    }
}

/// Coefficient of determination. Undefined (NaN) for constant targets.
pub fn r2_score(y: &[f64], pred: &[f64]) -> f64 {
    let my = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - ss_res / ss_tot
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniImportance {
    /// Per column; sums to 1 unless `degenerate`.
    pub values: Vec<f64>,
    /// No tree has a split: values are unnormalized zeros.
    pub degenerate: bool,
}

/// Mean decrease in impurity. Each split contributes its decrease in squared
/// error divided by the tree's sample count (sample weight times decrease in
/// variance); contributions are averaged over trees and normalized.
pub fn gini_importance(model: &ForestModel) -> GiniImportance {
    let p = model.feature_names.len();
    let mut values = vec![0.0; p];
    for t in &model.trees {
        for node in &t.nodes {
            if let Node::Split { feature, gain, .. } = node {
                values[*feature] += gain / t.samples as f64;
            }
        }
    }
    for v in values.iter_mut() {
        *v /= model.trees.len() as f64;
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return GiniImportance { values: vec![0.0; p], degenerate: true };
    }
    for v in values.iter_mut() {
        *v /= total;
    }
    GiniImportance { values, degenerate: false }
}

/// Sums column importances within each group of `m`.
pub fn group_importance(m: &FeatureMatrix, gini: &GiniImportance) -> Vec<(String, f64)> {
    m.groups.iter().map(|g| (g.name.clone(), g.columns.clone().map(|c| gini.values[c]).sum())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    /// Groups whose importance beats the probe, in matrix order.
    pub survivors: Vec<String>,
    pub probe_gini: f64,
    /// Every group's importance, the probe included (last).
    pub group_gini: Vec<(String, f64)>,
    pub degenerate: bool,
}

impl ProbeOutcome {
    /// Every feature fell at or below the probe.
    pub fn empty_survivor_set(&self) -> bool {
        self.survivors.is_empty()
    }
}

/// Adds an i.i.d. uniform [0,1) column, fits a forest and keeps the groups
/// whose importance is strictly greater than the probe's.
///
/// The probe is inserted as the first column. Equal-gain candidates go to
/// the lowest column index, and near the leaves every column that separates
/// two rows ties; a trailing probe would lose all of those ties and look
/// less important than noise.
pub fn probe_eliminate(m: &FeatureMatrix, params: &ForestParams) -> Result<ProbeOutcome, ForestError> {
    let mut with_probe = m.clone();
    let mut rng = rng_for(params.seed, "probe", 0);
    with_probe.prepend_group(PROBE, (0..m.n_rows()).map(|_| rng.gen::<f64>()).collect());
    let model = fit_forest(&with_probe, params)?;
    let gini = gini_importance(&model);
    let mut group_gini = group_importance(&with_probe, &gini);
    let (_, probe_gini) = group_gini.remove(0);
    let survivors = group_gini.iter().filter(|(_, g)| *g > probe_gini).map(|(n, _)| n.clone()).collect();
    group_gini.push((PROBE.to_string(), probe_gini));
    Ok(ProbeOutcome { survivors, probe_gini, group_gini, degenerate: gini.degenerate })
}

/// Minimum held-out size for permutation importance.
pub const MIN_EVAL_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationEntry {
    pub feature: String,
    /// Mean of `baseline R² - shuffled R²` over the repetitions.
    pub mean: f64,
    /// Population standard deviation over the repetitions.
    pub std: f64,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationImportance {
    pub r2_baseline: f64,
    pub repetitions: usize,
    pub entries: Vec<PermutationEntry>,
}

impl PermutationImportance {
    /// Entries sorted by decreasing mean drop; ties keep matrix order.
    pub fn ranked(&self) -> Vec<&PermutationEntry> {
        let mut v: Vec<&PermutationEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| b.mean.total_cmp(&a.mean));
        v
    }
}

/// Drop in R² on `eval` when a group's columns are shuffled jointly across
/// rows. Repetition `r` of group `g` uses `derive_seed(seed, "permute/<g>", r)`.
/// Groups the model never splits on get exact zeros without shuffling.
pub fn permutation_importance(
    model: &ForestModel,
    eval: &FeatureMatrix,
    repetitions: usize,
    seed: u64,
) -> Result<PermutationImportance, ForestError> {
    let n = eval.n_rows();
    if n < MIN_EVAL_ROWS {
        return Err(ForestError::EvalError(format!("held-out set has {n} rows, need at least {MIN_EVAL_ROWS}")));
    }
    if eval.column_names != model.feature_names {
        return Err(ForestError::EvalError("evaluation columns differ from the model's".into()));
    }
    if repetitions == 0 {
        return Err(ForestError::EvalError("repetitions must be positive".into()));
    }
    let y = &eval.targets;
    if y.iter().all(|v| *v == y[0]) {
        return Err(ForestError::EvalError("held-out targets are constant".into()));
    }
    let r2_baseline = r2_score(y, &model.predict(eval));
    let entries = eval
        .groups
        .par_iter()
        .map(|g| {
            let used = g.columns.clone().any(|c| model.uses(c));
            let deltas: Vec<f64> = if !used {
                vec![0.0; repetitions]
            } else {
                (0..repetitions)
                    .map(|r| {
                        let mut rng = rng_for(derive_seed(seed, "permute", 0), &g.name, r as u64);
                        let mut perm: Vec<usize> = (0..n).collect();
                        perm.shuffle(&mut rng);
                        let pred: Vec<f64> = (0..n)
                            .map(|i| {
                                model.predict_with(|f| {
                                    let row = if g.columns.contains(&f) { perm[i] } else { i };
                                    eval.columns[f][row]
                                })
                            })
                            .collect();
                        r2_baseline - r2_score(y, &pred)
                    })
                    .collect()
            };
            PermutationEntry { feature: g.name.clone(), mean: mean(&deltas), std: population_std(&deltas), deltas }
        })
        .collect();
    Ok(PermutationImportance { r2_baseline, repetitions, entries })
}
