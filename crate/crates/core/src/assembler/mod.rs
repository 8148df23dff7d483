//! Incremental waveform assembly: synthesize (or import) one waveform per
//! prefix, cut token `n` out of the waveform of prefix `c(n, k)`, and join
//! the cuts with a short cross-fade.

pub mod wav;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::encoder::{Encoder, EncoderError, TokenVector};
use crate::policy::context_size;
use crate::scalar::Scalar;

pub const DEFAULT_SAMPLE_RATE: u32 = 22050;
pub const DEFAULT_CROSSFADE_MS: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("sample rates differ: {0} vs {1}")]
    RateError(u32, u32),
    #[error("cross-fade of {overlap} samples exceeds segment length {min_len}")]
    OverlapError { overlap: usize, min_len: usize },
    #[error("unsupported audio: {0}")]
    FormatError(String),
    #[error("bad alignment for token {0}")]
    AlignmentError(usize),
    #[error("no waveform for prefix {0}")]
    MissingPrefix(usize),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("encoder: {0}")]
    Encoder(#[from] EncoderError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AssemblyError> {
        if sample_rate == 0 {
            return Err(AssemblyError::InvalidWaveform("sample rate is 0".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AssemblyError::InvalidWaveform(format!("sample {i} is not finite")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn empty(sample_rate: u32) -> Self {
        Waveform { samples: Vec::new(), sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        Waveform { samples: self.samples[start..end].to_vec(), sample_rate: self.sample_rate }
    }
}

/// Half-open sample interval of token `index` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub segments: Vec<Segment>,
}

impl Alignment {
    /// Intervals must be well formed, in order, disjoint and inside
    /// `0..len`; gaps between them are allowed.
    pub fn validate(&self, len: usize) -> Result<(), AssemblyError> {
        let mut prev_end = 0;
        for s in &self.segments {
            if s.start > s.end || s.start < prev_end || s.end > len {
                return Err(AssemblyError::AlignmentError(s.index));
            }
            prev_end = s.end;
        }
        Ok(())
    }

    pub fn token(&self, index: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| s.index == index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FadeCurve {
    #[default]
    Linear,
    EqualPower,
}

/// Overlap in samples, rounding half away from zero.
pub fn overlap_samples(crossfade_ms: f64, sample_rate: u32) -> usize {
    (crossfade_ms * sample_rate as f64 / 1000.0).round().max(0.0) as usize
}

/// Joins `a` and `b`, overlapping the last `overlap` samples of `a` with the
/// first of `b`. With `w_i = (i+1)/(L+1)` the linear law gives
/// `a_i + w_i (b_i - a_i)`, kept within `[min(a_i, b_i), max(a_i, b_i)]`;
/// equal-power weights are `cos(w π/2)` and `sin(w π/2)`.
pub fn crossfade_samples<T: Scalar>(a: &[T], b: &[T], overlap: usize, curve: FadeCurve) -> Result<Vec<T>, AssemblyError> {
    let min_len = a.len().min(b.len());
    if overlap > min_len {
        return Err(AssemblyError::OverlapError { overlap, min_len });
    }
    let head = a.len() - overlap;
    let mut out = Vec::with_capacity(a.len() + b.len() - overlap);
    out.extend_from_slice(&a[..head]);
    let denom = T::from_usize(overlap + 1).expect("overlap fits");
    let half_pi = T::from_f64_lossy(std::f64::consts::FRAC_PI_2);
    for i in 0..overlap {
        let (x, y) = (a[head + i], b[i]);
        let w = T::from_usize(i + 1).expect("index fits") / denom;
        let v = match curve {
            FadeCurve::Linear => (x + w * (y - x)).max(x.min(y)).min(x.max(y)),
            FadeCurve::EqualPower => x * (w * half_pi).cos() + y * (w * half_pi).sin(),
        };
        out.push(v);
    }
    out.extend_from_slice(&b[overlap..]);
    Ok(out)
}

pub fn crossfade_concat(a: &Waveform, b: &Waveform, crossfade_ms: f64, curve: FadeCurve) -> Result<Waveform, AssemblyError> {
    if a.sample_rate != b.sample_rate {
        return Err(AssemblyError::RateError(a.sample_rate, b.sample_rate));
    }
    let overlap = overlap_samples(crossfade_ms, a.sample_rate);
    Ok(Waveform { samples: crossfade_samples(&a.samples, &b.samples, overlap, curve)?, sample_rate: a.sample_rate })
}

/// Constants of the stand-in decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySynthConfig {
    pub sample_rate: u32,
    pub base_ms: u32,
    pub per_char_ms: u32,
    pub f_low: f64,
    pub f_span: f64,
    pub amplitude: f64,
    pub ramp_ms: u32,
}

impl Default for ToySynthConfig {
    fn default() -> Self {
        ToySynthConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            base_ms: 40,
            per_char_ms: 25,
            f_low: 120.0,
            f_span: 60.0,
            amplitude: 0.5,
            ramp_ms: 10,
        }
    }
}

impl ToySynthConfig {
    pub fn duration_ms(&self, chars: usize) -> u64 {
        self.base_ms as u64 + self.per_char_ms as u64 * chars as u64
    }

    /// `floor(duration_ms * rate / 1000)`.
    pub fn token_samples(&self, chars: usize) -> usize {
        (self.duration_ms(chars) * self.sample_rate as u64 / 1000) as usize
    }

    /// Tone frequency for a token whose vector starts with `z0`:
    /// `f_low + f_span * clamp(0.5 + 0.5 z0, 0, 1)`. A zero vector maps to
    /// the middle of the band (150 Hz by default).
    pub fn frequency(&self, z0: f64) -> f64 {
        self.f_low + self.f_span * (0.5 + 0.5 * z0).clamp(0.0, 1.0)
    }

    fn ramp_samples(&self) -> usize {
        (self.ramp_ms as u64 * self.sample_rate as u64 / 1000) as usize
    }

    fn render(&self, len: usize, freq: f64, out: &mut Vec<f32>) {
        let ramp = self.ramp_samples() as f64;
        let step = 2.0 * std::f64::consts::PI * freq / self.sample_rate as f64;
        for i in 0..len {
            let edge = (i.min(len - 1 - i)) as f64;
            let gain = if ramp > 0.0 { (edge / ramp).min(1.0) } else { 1.0 };
            out.push((self.amplitude * gain * (step * i as f64).sin()) as f32);
        }
    }
}

/// Renders one tone per token of `vectors`, laid end to end; the alignment
/// is exact by construction.
pub fn toy_synthesize<T: Scalar>(
    sentence: &Sentence,
    vectors: &[TokenVector<T>],
    config: &ToySynthConfig,
) -> (Waveform, Alignment) {
    let mut samples = Vec::new();
    let mut segments = Vec::with_capacity(vectors.len());
    for v in vectors {
        let tok = &sentence.tokens[v.token_index - 1];
        let len = config.token_samples(tok.char_len());
        let z0 = v.z.first().map_or(0.0, |x| x.to_f64_lossy());
        let start = samples.len();
        config.render(len, config.frequency(z0), &mut samples);
        segments.push(Segment { index: v.token_index, start, end: samples.len() });
    }
    (Waveform { samples, sample_rate: config.sample_rate }, Alignment { segments })
}

/// Toy rendering of the full-sentence encoding.
pub fn offline_synthesize<T: Scalar>(
    encoder: &Encoder<T>,
    sentence: &Sentence,
    config: &ToySynthConfig,
) -> Result<(Waveform, Alignment), AssemblyError> {
    let full = encoder.encode_prefix(sentence, sentence.len())?;
    Ok(toy_synthesize(sentence, &full, config))
}

/// Where per-prefix waveforms come from.
pub enum PrefixSource<'a, T> {
    Toy { encoder: &'a Encoder<T>, config: ToySynthConfig },
    /// Directory with `prefix_{c}.wav` and `prefix_{c}.align.csv`.
    Imported(PathBuf),
}

pub fn imported_paths(dir: &Path, c: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("prefix_{c}.wav")), dir.join(format!("prefix_{c}.align.csv")))
}

impl<T: Scalar> PrefixSource<'_, T> {
    fn fetch(&self, sentence: &Sentence, c: usize) -> Result<(Waveform, Alignment), AssemblyError> {
        match self {
            PrefixSource::Toy { encoder, config } => {
                let v = encoder.encode_prefix(sentence, c)?;
                Ok(toy_synthesize(sentence, &v, config))
            }
            PrefixSource::Imported(dir) => {
                let (w, a) = imported_paths(dir, c);
                if !w.exists() || !a.exists() {
                    return Err(AssemblyError::MissingPrefix(c));
                }
                wav::import_waveform(w, a)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub crossfade_ms: f64,
    pub curve: FadeCurve,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { crossfade_ms: DEFAULT_CROSSFADE_MS, curve: FadeCurve::Linear }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub n: usize,
    /// Prefix length `c(n, k)` whose waveform supplied the segment.
    pub source_prefix: usize,
    pub cut_start: usize,
    pub cut_end: usize,
    /// Output interval; the cross-fade region at its head is shared with the
    /// previous segment.
    pub out_start: usize,
    pub out_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub k: usize,
    pub crossfade_ms: f64,
    pub overlap: usize,
    pub steps: Vec<PlanStep>,
}

impl AssemblyPlan {
    /// Columns `n,source_prefix,cut_start,cut_end,out_start,out_end`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AssemblyError> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.steps {
            out.serialize(s).map_err(|e| AssemblyError::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| AssemblyError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub waveform: Waveform,
    /// Output-side alignment: token `n` owns its samples from the start of
    /// its fade-in up to the start of the next token's fade-in.
    pub alignment: Alignment,
    pub plan: AssemblyPlan,
}

/// Builds `y_{1:N}` by appending, for each `n`, token `n` cut from the
/// waveform of prefix `c(n, k)`. Prefix waveforms are produced in parallel;
/// the joins are a sequential fold.
pub fn assemble_incremental<T: Scalar>(
    sentence: &Sentence,
    k: usize,
    source: &PrefixSource<'_, T>,
    opts: &AssemblyOptions,
) -> Result<Assembly, AssemblyError> {
    let len = sentence.len();
    let cs: Vec<usize> = (1..=len).map(|n| context_size(n, k, len).expect("n in range")).collect();
    let mut distinct = cs.clone();
    distinct.dedup();
    let fetched: Vec<(Waveform, Alignment)> =
        distinct.par_iter().map(|&c| source.fetch(sentence, c)).collect::<Result<_, _>>()?;
    let by_c: BTreeMap<usize, &(Waveform, Alignment)> = distinct.iter().copied().zip(fetched.iter()).collect();

    let rate = fetched.first().map_or(DEFAULT_SAMPLE_RATE, |(w, _)| w.sample_rate);
    let overlap = overlap_samples(opts.crossfade_ms, rate);
    let mut out = Waveform::empty(rate);
    let mut steps = Vec::with_capacity(len);
    for (n, &c) in (1..=len).zip(&cs) {
        let (w, al) = by_c[&c];
        if w.sample_rate != rate {
            return Err(AssemblyError::RateError(rate, w.sample_rate));
        }
        let seg = al.token(n).ok_or(AssemblyError::AlignmentError(n))?;
        let piece = &w.samples[seg.start..seg.end];
        let (out_start, samples) = if out.is_empty() {
            (0, piece.to_vec())
        } else {
            (out.len() - overlap, crossfade_samples(&out.samples, piece, overlap, opts.curve)?)
        };
        out.samples = samples;
        steps.push(PlanStep { n, source_prefix: c, cut_start: seg.start, cut_end: seg.end, out_start, out_end: out.len() });
    }
    let segments = steps
        .iter()
        .enumerate()
        .map(|(i, s)| Segment { index: s.n, start: s.out_start, end: steps.get(i + 1).map_or(s.out_end, |nx| nx.out_start) })
        .collect();
    Ok(Assembly {
        waveform: out,
        alignment: Alignment { segments },
        plan: AssemblyPlan { k, crossfade_ms: opts.crossfade_ms, overlap, steps },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    #[test]
    fn overlap_rounding() {
        assert_eq!(overlap_samples(5.0, 22050), 110);
        assert_eq!(overlap_samples(0.0, 22050), 0);
        assert_eq!(overlap_samples(0.5, 3000), 2); // 1.5 rounds away from zero
    }

    #[test]
    fn crossfade_lengths_and_constants() {
        let a = vec![1.0f32; 1000];
        let b = vec![1.0f32; 500];
        let out = crossfade_samples(&a, &b, 110, FadeCurve::Linear).unwrap();
        assert_eq!(out.len(), 1390);
        assert!(out.iter().all(|&v| v == 1.0));
        let plain = crossfade_samples(&a, &b, 0, FadeCurve::Linear).unwrap();
        assert_eq!(plain.len(), 1500);
        assert!(matches!(crossfade_samples(&a, &b[..100], 110, FadeCurve::Linear), Err(AssemblyError::OverlapError { .. })));
    }

    #[test]
    fn crossfade_weights() {
        let out = crossfade_samples(&[0.0f64, 0.0, 0.0], &[3.0, 3.0, 3.0], 2, FadeCurve::Linear).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn rate_mismatch() {
        let a = Waveform::new(vec![0.0; 10], 8000).unwrap();
        let b = Waveform::new(vec![0.0; 10], 16000).unwrap();
        assert_eq!(crossfade_concat(&a, &b, 0.0, FadeCurve::Linear), Err(AssemblyError::RateError(8000, 16000)));
    }

    #[test]
    fn toy_durations_and_frequency() {
        let c = ToySynthConfig::default();
        assert_eq!(c.token_samples(2), 1984);
        assert_eq!(c.frequency(0.0), 150.0);
        assert_eq!(c.frequency(5.0), 180.0);
        let s = Sentence::new("s", "Hi").unwrap();
        let v = vec![TokenVector { z: vec![0.0f32; 4], token_index: 1, context_tokens: 1, full_context: true }];
        let (w, a) = toy_synthesize(&s, &v, &c);
        assert_eq!(w.len(), 1984);
        assert_eq!(a.segments, vec![Segment { index: 1, start: 0, end: 1984 }]);
        assert_eq!(toy_synthesize(&s, &v, &c).0, w);
        assert!(w.samples.iter().all(|x| x.abs() <= 0.5));
    }

    #[test]
    fn k1_cuts_from_next_prefix() {
        let enc = Encoder::<f32>::random(EncoderConfig::sized(8, 8, 3, 8)).unwrap();
        let s = Sentence::new("s", "The dog is in the yard.").unwrap();
        let src = PrefixSource::Toy { encoder: &enc, config: ToySynthConfig::default() };
        let a = assemble_incremental(&s, 1, &src, &AssemblyOptions::default()).unwrap();
        let prefixes: Vec<usize> = a.plan.steps.iter().map(|s| s.source_prefix).collect();
        assert_eq!(prefixes, (1..=12).map(|n| (n + 1).min(12)).collect::<Vec<_>>());
        let total: usize = a.plan.steps.iter().map(|s| s.cut_end - s.cut_start).sum();
        assert_eq!(a.waveform.len(), total - 11 * 110);
        a.alignment.validate(a.waveform.len()).unwrap();
    }

    #[test]
    fn single_token_has_no_fade() {
        let enc = Encoder::<f32>::random(EncoderConfig::sized(8, 8, 3, 8)).unwrap();
        let s = Sentence::new("s", "Hi").unwrap();
        let src = PrefixSource::Toy { encoder: &enc, config: ToySynthConfig::default() };
        let a = assemble_incremental(&s, 0, &src, &AssemblyOptions::default()).unwrap();
        let (off, _) = offline_synthesize(&enc, &s, &ToySynthConfig::default()).unwrap();
        assert_eq!(a.waveform, off);
    }

    #[test]
    fn missing_imported_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let s = Sentence::new("s", "Hi there").unwrap();
        let src: PrefixSource<'_, f32> = PrefixSource::Imported(dir.path().to_path_buf());
        assert_eq!(assemble_incremental(&s, 0, &src, &AssemblyOptions::default()).unwrap_err(), AssemblyError::MissingPrefix(1));
    }
}
