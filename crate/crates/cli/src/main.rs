//! `itts`: command-line front end for the lookahead experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use itts_core::assembler::FadeCurve;
use itts_core::corpus::{tokenize, write_annotated_corpus, AnnotatedSentence};
use itts_core::drift::read_summary_csv;
use itts_core::mushra::{apply_exclusion, load_ratings, summarize_mushra, MushraError, DEFAULT_THRESHOLD};
use itts_core::pipeline::{
    load_corpus, load_encoder, run_assembly, run_drift_experiment, run_rf_experiment, synthetic_corpus, with_threads,
    ExperimentConfig, PipelineError,
};
use itts_core::policy::{encode_incremental, write_trace_csv, PolicyOptions};

#[derive(Parser, Debug)]
#[command(name = "itts", version, about = "Incremental TTS lookahead experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the tokens of a sentence, or of every sentence of a corpus.
    Tokenize {
        #[arg(long)]
        text: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Encode under the lookahead policy and print token vectors as CSV.
    Encode {
        #[arg(long)]
        text: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Drift of incremental against full-context token vectors.
    Drift {
        #[command(flatten)]
        common: Common,
    },
    /// Random-forest feature importance of the drift (needs `drift`).
    Rf {
        #[command(flatten)]
        common: Common,
    },
    /// Incremental and offline toy audio for one sentence.
    Assemble {
        /// Sentence id in the corpus.
        #[arg(long)]
        sentence: String,
        #[command(flatten)]
        common: Common,
    },
    /// Listening-test statistics from a ratings CSV.
    Mushra {
        #[arg(long)]
        ratings: PathBuf,
        /// Participants whose mean hidden-reference score is below this are excluded.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Write a seeded synthetic annotated corpus.
    GenCorpus {
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// SVG charts from the drift summary and, optionally, a ratings CSV.
    Plot {
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Annotated `.jsonl` corpus or plain text, one sentence per line.
    #[arg(long, default_value = "corpus.jsonl")]
    corpus: PathBuf,
    /// Encoder weights file; random weights derived from --seed when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    /// Lookahead values for `rf`, `assemble` and `encode` (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0,2")]
    k_target: Vec<usize>,
    #[arg(long, default_value_t = 5.0)]
    crossfade_ms: f64,
    /// Equal-power instead of linear cross-fade gains.
    #[arg(long)]
    equal_power: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    n_estimators: usize,
    /// Permutation repetitions per feature.
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Worker threads; all available cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            corpus: self.corpus.clone(),
            weights: self.weights.clone(),
            k_max: self.k_max,
            k_targets: self.k_target.clone(),
            crossfade_ms: self.crossfade_ms,
            fade_curve: if self.equal_power { FadeCurve::EqualPower } else { FadeCurve::Linear },
            alpha: self.alpha,
            n_estimators: self.n_estimators,
            repetitions: self.repetitions,
            out_dir: self.out_dir.clone(),
            ..ExperimentConfig::seeded(self.seed)
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Config(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<MushraError> for Failure {
    fn from(e: MushraError) -> Self {
        Failure::data(e.to_string())
    }
}

fn io_failure(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::data(format!("{}: {e}", path.display()))
}

fn print_config(config: &ExperimentConfig) {
    let json = serde_json::to_string(config).unwrap_or_else(|e| format!("<unprintable: {e}>"));
    eprintln!("resolved config: {json}");
}

fn sentences(text: &Option<String>, config: &ExperimentConfig) -> Result<Vec<AnnotatedSentence>, Failure> {
    match text {
        Some(t) => {
            let mut s = tokenize(t).map_err(|e| Failure::data(format!("--text: {e}")))?;
            s.id = "text".into();
            Ok(vec![AnnotatedSentence::unannotated(s)])
        }
        None => Ok(load_corpus(&config.corpus)?),
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_failure(dir))?;
    }
    fs::write(path, bytes).map_err(io_failure(path))
}

fn run(command: Command) -> Result<(), Failure> {
    let common = match &command {
        Command::Tokenize { common, .. }
        | Command::Encode { common, .. }
        | Command::Drift { common }
        | Command::Rf { common }
        | Command::Assemble { common, .. }
        | Command::Mushra { common, .. }
        | Command::GenCorpus { common, .. }
        | Command::Plot { common, .. } => common.clone(),
    };
    let config = common.config();
    print_config(&config);
    config.validate()?;
    let stdout = std::io::stdout();

    match command {
        Command::Tokenize { text, .. } => {
            let mut out = stdout.lock();
            for s in sentences(&text, &config)? {
                for (i, t) in s.sentence.tokens.iter().enumerate() {
                    writeln!(out, "{}\t{}\t{}\t{:?}", s.id(), i + 1, t.kind.as_str(), t.text)
                        .map_err(|e| Failure::data(format!("stdout: {e}")))?;
                }
            }
        }
        Command::Encode { text, .. } => {
            let corpus = sentences(&text, &config)?;
            let encoder = load_encoder(&config)?;
            let traces = with_threads(common.threads, || {
                let mut traces = Vec::new();
                for s in &corpus {
                    for &k in &config.k_targets {
                        let t = encode_incremental(&encoder, &s.sentence, k, PolicyOptions { forward_cache: true })
                            .map_err(|e| Failure::data(format!("{}: {e}", s.id())))?;
                        traces.push(t);
                    }
                }
                Ok::<_, Failure>(traces)
            })??;
            write_trace_csv(stdout.lock(), &traces).map_err(|e| Failure::data(format!("stdout: {e}")))?;
        }
        Command::Drift { .. } => {
            with_threads(common.threads, || run_drift_experiment(&config))??;
            eprintln!("wrote {}", config.drift_dir().display());
        }
        Command::Rf { .. } => {
            with_threads(common.threads, || run_rf_experiment(&config))??;
            eprintln!("wrote {}", config.rf_dir().display());
        }
        Command::Assemble { sentence, .. } => {
            for &k in &config.k_targets {
                with_threads(common.threads, || run_assembly(&config, &sentence, k))??;
            }
            eprintln!("wrote {}", config.audio_dir().display());
        }
        Command::Mushra { ratings, threshold, .. } => {
            if !threshold.is_finite() {
                return Err(Failure::usage(format!("--threshold must be finite, got {threshold}")));
            }
            let set = load_ratings(&ratings)?;
            for w in &set.warnings {
                eprintln!("warning: {w}");
            }
            let (kept, excluded) = apply_exclusion(&set, threshold)?;
            for e in &excluded {
                eprintln!("excluded {}: {}", e.participant, e.reason);
            }
            let summary = summarize_mushra(&kept, excluded)?;
            let dir = config.out_dir.join("mushra");
            let mut buf = Vec::new();
            summary.write_conditions_csv(&mut buf)?;
            write_out(&dir.join("conditions.csv"), &buf)?;
            let mut buf = Vec::new();
            summary.write_tests_csv(&mut buf, config.alpha)?;
            write_out(&dir.join("tests.csv"), &buf)?;
            let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure { code: 3, message: e.to_string() })?;
            write_out(&dir.join("summary.json"), (json + "\n").as_bytes())?;
            stdout.lock().write_all(&buf).map_err(|e| Failure::data(format!("stdout: {e}")))?;
        }
        Command::GenCorpus { count, output, .. } => {
            if count == 0 {
                return Err(Failure::usage("--count must be at least 1"));
            }
            let corpus = synthetic_corpus(config.master_seed, count);
            let mut buf = Vec::new();
            write_annotated_corpus(&mut buf, &corpus).map_err(|e| Failure { code: 3, message: e.to_string() })?;
            match output {
                Some(p) => write_out(&p, &buf)?,
                None => stdout.lock().write_all(&buf).map_err(|e| Failure::data(format!("stdout: {e}")))?,
            }
        }
        Command::Plot { ratings, threshold, .. } => {
            let summary = config.drift_dir().join("summary.csv");
            let plots = config.out_dir.join("plots");
            let mut made = 0;
            if summary.exists() {
                let f = fs::File::open(&summary).map_err(io_failure(&summary))?;
                let rows = read_summary_csv(f).map_err(|e| Failure::data(format!("{}: {e}", summary.display())))?;
                write_out(&plots.join("drift.svg"), plot::drift_svg(&rows).as_bytes())?;
                made += 1;
            }
            if let Some(r) = ratings {
                let (kept, _) = apply_exclusion(&load_ratings(&r)?, threshold)?;
                write_out(&plots.join("mushra.svg"), plot::mushra_svg(&kept).as_bytes())?;
                made += 1;
            }
            if made == 0 {
                return Err(Failure::data(format!("nothing to plot: {} missing and no --ratings", summary.display())));
            }
            eprintln!("wrote {made} chart(s) to {}", plots.display());
        }
    }
    Ok(())
}

impl From<Failure> for ExitCode {
    fn from(f: Failure) -> Self {
        ExitCode::from(f.code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            f.into()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}
