//! End-to-end runs: corpus to drift records and summaries, importance
//! reports per target lookahead, and assembled audio, all under one master
//! seed and recorded in a manifest.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! drift/drift.csv  drift/summary.csv  drift/ttests.csv
//! rf/importance_k{k}.json  rf/features_k{k}.csv
//! audio/{id}_k{k}.wav  audio/{id}_k{k}.plan.csv  audio/{id}_k{k}.align.csv
//! audio/{id}_offline.wav  audio/{id}_offline.align.csv
//! manifest.json
//! ```

pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembler::{
    assemble_incremental, offline_synthesize, wav, AssemblyError, AssemblyOptions, FadeCurve, PrefixSource,
    ToySynthConfig, DEFAULT_CROSSFADE_MS,
};
use crate::corpus::{load_annotated_corpus, tokenize, AnnotatedSentence, CorpusError};
use crate::drift::{
    compute_drift_sweep, consecutive_lookahead_tests, read_drift_csv, summarize, write_drift_csv, write_summary_csv,
    write_tests_csv, DriftError, DriftRecord,
};
use crate::encoder::{Encoder, EncoderConfig, EncoderError, EncoderWeights};
use crate::policy::{encode_sweep, PolicyError, PolicyOptions};
use crate::rf::{run_rf_pipeline, RfError, RfOptions};
use crate::seed::derive_seed;

pub use synthetic::{synthetic_corpus, synthetic_sentence};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("encoder: {0}")]
    Encoder(#[from] EncoderError),
    #[error("encoding {sentence}: {source}")]
    Policy { sentence: String, source: PolicyError },
    #[error("drift: {0}")]
    Drift(#[from] DriftError),
    #[error("rf k={k}: {source}")]
    Rf { k: usize, source: RfError },
    #[error("assembly: {0}")]
    Assembly(#[from] AssemblyError),
    #[error("stage {stage} requires {missing}; run it first")]
    MissingStage { stage: &'static str, missing: String },
    #[error("sentence {0} not found in corpus")]
    NotFound(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `.jsonl` annotated corpus, or plain text with one sentence per line.
    pub corpus: PathBuf,
    pub encoder: EncoderConfig,
    /// Encoder weights file; random weights from `encoder.seed` when absent.
    pub weights: Option<PathBuf>,
    pub k_max: usize,
    pub k_targets: Vec<usize>,
    pub crossfade_ms: f64,
    pub fade_curve: FadeCurve,
    pub master_seed: u64,
    pub alpha: f64,
    pub n_estimators: usize,
    pub repetitions: usize,
    pub permute_on_training: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            encoder: EncoderConfig::default().with_seed(derive_seed(0, "encoder", 0)),
            weights: None,
            k_max: 8,
            k_targets: vec![0, 2],
            crossfade_ms: DEFAULT_CROSSFADE_MS,
            fade_curve: FadeCurve::Linear,
            master_seed: 0,
            alpha: 0.05,
            n_estimators: 100,
            repetitions: 10,
            permute_on_training: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Default config whose encoder seed is derived from `master_seed`.
    pub fn seeded(master_seed: u64) -> Self {
        ExperimentConfig {
            master_seed,
            encoder: EncoderConfig::default().with_seed(derive_seed(master_seed, "encoder", 0)),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.encoder.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(k) = self.k_targets.iter().find(|&&k| k > self.k_max) {
            return Err(PipelineError::Config(format!("k_target {k} exceeds k_max {}", self.k_max)));
        }
        if !(self.crossfade_ms >= 0.0 && self.crossfade_ms.is_finite()) {
            return Err(PipelineError::Config(format!("crossfade_ms must be >= 0, got {}", self.crossfade_ms)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Same inputs to the drift stage.
    fn same_drift(&self, other: &ExperimentConfig) -> bool {
        (&self.corpus, &self.encoder, &self.weights, self.k_max, self.master_seed, self.alpha, &self.out_dir)
            == (&other.corpus, &other.encoder, &other.weights, other.k_max, other.master_seed, other.alpha, &other.out_dir)
    }

    pub fn drift_dir(&self) -> PathBuf {
        self.out_dir.join("drift")
    }

    pub fn rf_dir(&self) -> PathBuf {
        self.out_dir.join("rf")
    }

    pub fn audio_dir(&self) -> PathBuf {
        self.out_dir.join("audio")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }
}

/// Plain text (one sentence per line, ids `line0001`...) or annotated JSONL.
pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedSentence>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Io { path: path.to_path_buf(), message: "no such file".into() });
    }
    if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        return Ok(load_annotated_corpus(path)?);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut s = tokenize(line).map_err(|e| CorpusError::ParseError { line: i + 1, message: e.to_string() })?;
        s.id = format!("line{:04}", i + 1);
        out.push(AnnotatedSentence::unannotated(s));
    }
    if out.is_empty() {
        return Err(CorpusError::EmptyInput.into());
    }
    Ok(out)
}

pub fn load_encoder(config: &ExperimentConfig) -> Result<Encoder<f32>, PipelineError> {
    let weights = match &config.weights {
        Some(p) => EncoderWeights::load(p, &config.encoder)?,
        None => EncoderWeights::init(&config.encoder),
    };
    Ok(Encoder::new(config.encoder.clone(), weights)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub components: BTreeMap<String, String>,
    pub stages: BTreeMap<String, Vec<FileDigest>>,
}

impl RunManifest {
    fn new(config: &ExperimentConfig) -> Self {
        let components = [
            ("itts-core", env!("CARGO_PKG_VERSION")),
            ("weights-format", "1"),
            ("forest", "cart-mse"),
            ("toy-synth", "sine-v1"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        RunManifest { config: config.clone(), components, stages: BTreeMap::new() }
    }

    /// The manifest in `config.out_dir`, updated to `config`. It starts over
    /// when the drift inputs changed; otherwise only the stages whose own
    /// parameters changed are dropped.
    pub fn open(config: &ExperimentConfig) -> Self {
        let Some(mut m) = fs::read_to_string(config.manifest_path())
            .ok()
            .and_then(|s| serde_json::from_str::<RunManifest>(&s).ok())
            .filter(|m| m.config.same_drift(config))
        else {
            return RunManifest::new(config);
        };
        let old = &m.config;
        let rf_changed = (old.k_targets.clone(), old.n_estimators, old.repetitions, old.permute_on_training)
            != (config.k_targets.clone(), config.n_estimators, config.repetitions, config.permute_on_training);
        let audio_changed = (old.crossfade_ms, old.fade_curve) != (config.crossfade_ms, config.fade_curve);
        m.stages.retain(|name, _| !(rf_changed && name == "rf" || audio_changed && name.starts_with("assembly/")));
        m.config = config.clone();
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn save(&self) -> Result<(), PipelineError> {
        let p = self.config.manifest_path();
        fs::write(&p, self.to_json()).map_err(io_err(&p))
    }

    /// Recomputes every digest and lists the files that no longer match.
    pub fn verify(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for f in self.stages.values().flatten() {
            match digest_file(&self.config.out_dir, &f.path) {
                Ok(d) if d == *f => {}
                _ => bad.push(f.path.clone()),
            }
        }
        bad
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(root: &Path, rel: &str) -> Result<FileDigest, PipelineError> {
    let p = root.join(rel);
    let data = fs::read(&p).map_err(io_err(&p))?;
    Ok(FileDigest { path: rel.to_string(), bytes: data.len() as u64, sha256: sha256_hex(&data) })
}

fn record_stage(config: &ExperimentConfig, stage: &str, files: &[String]) -> Result<RunManifest, PipelineError> {
    let mut m = RunManifest::open(config);
    let digests = files.iter().map(|f| digest_file(&config.out_dir, f)).collect::<Result<_, _>>()?;
    m.stages.insert(stage.to_string(), digests);
    m.save()?;
    Ok(m)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<(), PipelineError> {
    w.flush().map_err(io_err(path))
}

/// Drift records for every token of every sentence and every `k <= k_max`.
/// Sentences are encoded in parallel; the output order is the corpus order.
pub fn drift_records(
    encoder: &Encoder<f32>,
    corpus: &[AnnotatedSentence],
    k_max: usize,
) -> Result<Vec<DriftRecord>, PipelineError> {
    let per_sentence: Vec<Vec<DriftRecord>> = corpus
        .par_iter()
        .map(|s| {
            let sweep = encode_sweep(encoder, &s.sentence, PolicyOptions { forward_cache: true })
                .map_err(|source| PipelineError::Policy { sentence: s.id().to_string(), source })?;
            Ok(compute_drift_sweep(&sweep, s, k_max)?)
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(per_sentence.into_iter().flatten().collect())
}

pub fn run_drift_experiment(config: &ExperimentConfig) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    let encoder = load_encoder(config)?;
    let records = drift_records(&encoder, &corpus, config.k_max)?;
    let summary = summarize(&records, config.k_max)?;
    let tests = consecutive_lookahead_tests(&records, config.k_max)?;

    let dir = config.drift_dir();
    let files = ["drift/drift.csv", "drift/summary.csv", "drift/ttests.csv"];
    let p = dir.join("drift.csv");
    let mut w = create(&p)?;
    write_drift_csv(&mut w, &records)?;
    finish(w, &p)?;
    let p = dir.join("summary.csv");
    let mut w = create(&p)?;
    write_summary_csv(&mut w, &summary)?;
    finish(w, &p)?;
    let p = dir.join("ttests.csv");
    let mut w = create(&p)?;
    write_tests_csv(&mut w, &tests, config.alpha)?;
    finish(w, &p)?;
    record_stage(config, "drift", &files.map(String::from))
}

/// Needs the drift stage of the same config.
pub fn run_rf_experiment(config: &ExperimentConfig) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let drift_csv = config.drift_dir().join("drift.csv");
    let manifest = RunManifest::open(config);
    if !drift_csv.exists() || !manifest.stages.contains_key("drift") {
        return Err(PipelineError::MissingStage { stage: "rf", missing: "drift".into() });
    }
    let corpus = load_corpus(&config.corpus)?;
    let records = read_drift_csv(fs::File::open(&drift_csv).map_err(io_err(&drift_csv))?)?;
    let mut files = Vec::new();
    for &k in &config.k_targets {
        let opts = RfOptions {
            n_estimators: config.n_estimators,
            seed: derive_seed(config.master_seed, "rf", k as u64),
            repetitions: config.repetitions,
            permute_on_training: config.permute_on_training,
            ..Default::default()
        };
        let (report, matrix) = run_rf_pipeline(&records, &corpus, k, &opts).map_err(|source| PipelineError::Rf { k, source })?;
        let rel = format!("rf/importance_k{k}.json");
        let p = config.out_dir.join(&rel);
        let mut w = create(&p)?;
        w.write_all((report.to_json() + "\n").as_bytes()).map_err(io_err(&p))?;
        finish(w, &p)?;
        files.push(rel);
        let rel = format!("rf/features_k{k}.csv");
        let p = config.out_dir.join(&rel);
        let mut w = create(&p)?;
        matrix.write_csv(&mut w).map_err(|e| PipelineError::Io { path: p.clone(), message: e.to_string() })?;
        finish(w, &p)?;
        files.push(rel);
    }
    record_stage(config, "rf", &files)
}

/// Incremental and offline toy audio for one sentence.
pub fn run_assembly(config: &ExperimentConfig, sentence_id: &str, k: usize) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    let s = corpus.iter().find(|s| s.id() == sentence_id).ok_or_else(|| PipelineError::NotFound(sentence_id.into()))?;
    let encoder = load_encoder(config)?;
    let synth = ToySynthConfig::default();
    let source = PrefixSource::Toy { encoder: &encoder, config: synth };
    let opts = AssemblyOptions { crossfade_ms: config.crossfade_ms, curve: config.fade_curve };
    let inc = assemble_incremental(&s.sentence, k, &source, &opts)?;
    let (off, off_align) = offline_synthesize(&encoder, &s.sentence, &synth)?;

    let audio = config.audio_dir();
    fs::create_dir_all(&audio).map_err(io_err(&audio))?;
    let base = format!("{sentence_id}_k{k}");
    let files = [
        format!("audio/{base}.wav"),
        format!("audio/{base}.plan.csv"),
        format!("audio/{base}.align.csv"),
        format!("audio/{sentence_id}_offline.wav"),
        format!("audio/{sentence_id}_offline.align.csv"),
    ];
    let path = |i: usize| config.out_dir.join(&files[i]);
    wav::write_wav(path(0), &inc.waveform)?;
    let p = path(1);
    let mut w = create(&p)?;
    inc.plan.write_csv(&mut w)?;
    finish(w, &p)?;
    let p = path(2);
    let mut w = create(&p)?;
    wav::write_alignment(&mut w, &inc.alignment)?;
    finish(w, &p)?;
    wav::write_wav(path(3), &off)?;
    let p = path(4);
    let mut w = create(&p)?;
    wav::write_alignment(&mut w, &off_align)?;
    finish(w, &p)?;
    record_stage(config, &format!("assembly/{sentence_id}/k{k}"), &files)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, PipelineError> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_annotated_corpus;

    fn small(dir: &Path, sentences: &[&str]) -> ExperimentConfig {
        let corpus = dir.join("c.txt");
        fs::write(&corpus, sentences.join("\n")).unwrap();
        ExperimentConfig {
            corpus,
            encoder: EncoderConfig::sized(8, 8, 3, 8).with_seed(1),
            k_max: 3,
            k_targets: vec![0],
            n_estimators: 10,
            out_dir: dir.join("out"),
            ..Default::default()
        }
    }

    #[test]
    fn hi_drift_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), &["Hi."]);
        let m = run_drift_experiment(&cfg).unwrap();
        let recs = read_drift_csv(fs::File::open(cfg.drift_dir().join("drift.csv")).unwrap()).unwrap();
        assert_eq!(recs.len(), 2 * 4);
        assert_eq!(m.stages["drift"].len(), 3);
        assert!(m.verify().is_empty());
        let again = run_drift_experiment(&cfg).unwrap();
        assert_eq!(again.stages["drift"], m.stages["drift"]);
    }

    #[test]
    fn rf_needs_drift() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), &["Hi."]);
        assert!(matches!(run_rf_experiment(&cfg), Err(PipelineError::MissingStage { .. })));
    }

    #[test]
    fn rf_stage_on_synthetic_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), &[]);
        cfg.corpus = dir.path().join("c.jsonl");
        write_annotated_corpus(fs::File::create(&cfg.corpus).unwrap(), &synthetic_corpus(2, 12)).unwrap();
        cfg.k_targets = vec![0, 2];
        run_drift_experiment(&cfg).unwrap();
        let m = run_rf_experiment(&cfg).unwrap();
        assert_eq!(m.stages["rf"].len(), 4);
        assert!(m.stages.contains_key("drift"));
    }

    #[test]
    fn assembly_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), &["The dog is in the yard."]);
        let m = run_assembly(&cfg, "line0001", 1).unwrap();
        assert_eq!(m.stages["assembly/line0001/k1"].len(), 5);
        assert!(matches!(run_assembly(&cfg, "nope", 1), Err(PipelineError::NotFound(_))));
    }

    #[test]
    fn manifest_keeps_unaffected_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), &["The dog is in the yard.", "A cat sat on the mat."]);
        run_drift_experiment(&cfg).unwrap();
        run_assembly(&cfg, "line0001", 1).unwrap();
        cfg.n_estimators = 20;
        let m = RunManifest::open(&cfg);
        assert!(m.stages.contains_key("drift") && m.stages.contains_key("assembly/line0001/k1"));
        assert_eq!(m.config.n_estimators, 20);
        cfg.crossfade_ms = 2.0;
        assert!(!RunManifest::open(&cfg).stages.contains_key("assembly/line0001/k1"));
        cfg.k_max = 2;
        assert!(RunManifest::open(&cfg).stages.is_empty());
    }

    #[test]
    fn missing_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path(), &["Hi."]);
        cfg.corpus = dir.path().join("missing.jsonl");
        assert!(matches!(run_drift_experiment(&cfg), Err(PipelineError::Io { .. })));
    }
}
