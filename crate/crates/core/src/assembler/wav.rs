//! Mono PCM WAV files and alignment CSVs.

use std::io::{Read, Write};
use std::path::Path;

use super::{AssemblyError, Segment, Waveform, Alignment};

/// Reads a mono WAV. Integer PCM of `b` bits is scaled by `1 / 2^(b-1)`, so
/// 16-bit -32768 maps to -1.0; 32-bit float is taken as is.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AssemblyError> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AssemblyError::FormatError(format!("{}: {} channels, expected mono", path.display(), spec.channels)));
    }
    let samples: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Int if spec.bits_per_sample <= 32 => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        hound::SampleFormat::Float if spec.bits_per_sample == 32 => {
            reader.into_samples::<f32>().collect::<Result<_, _>>().map_err(|e| wav_error(path, e))?
        }
        _ => {
            return Err(AssemblyError::FormatError(format!(
                "{}: unsupported sample format {:?}/{} bits",
                path.display(),
                spec.sample_format,
                spec.bits_per_sample
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

fn wav_error(path: &Path, e: hound::Error) -> AssemblyError {
    match e {
        hound::Error::IoError(io) => AssemblyError::Io(format!("{}: {io}", path.display())),
        other => AssemblyError::FormatError(format!("{}: {other}", path.display())),
    }
}

/// 16-bit PCM sample for `x`: `round(clamp(x, -1, 1) * 32767)`.
pub fn quantize(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) as f64 * 32767.0).round() as i16
}

/// Writes 16-bit mono PCM without dithering.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<(), AssemblyError> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &wave.samples {
        w.write_sample(quantize(s)).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct AlignmentRow {
    index: usize,
    start_sample: usize,
    end_sample: usize,
}

/// Columns `index,start_sample,end_sample`, one row per token.
pub fn read_alignment<R: Read>(r: R) -> Result<Alignment, AssemblyError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut segments = Vec::new();
    for row in rdr.deserialize::<AlignmentRow>() {
        let row = row.map_err(|e| AssemblyError::FormatError(format!("alignment: {e}")))?;
        segments.push(Segment { index: row.index, start: row.start_sample, end: row.end_sample });
    }
    Ok(Alignment { segments })
}

pub fn write_alignment<W: Write>(w: W, alignment: &Alignment) -> Result<(), AssemblyError> {
    let mut out = csv::Writer::from_writer(w);
    for s in &alignment.segments {
        out.serialize(AlignmentRow { index: s.index, start_sample: s.start, end_sample: s.end })
            .map_err(|e| AssemblyError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| AssemblyError::Io(e.to_string()))
}

/// Loads a waveform and its alignment and checks the alignment against it.
pub fn import_waveform(wav: impl AsRef<Path>, alignment: impl AsRef<Path>) -> Result<(Waveform, Alignment), AssemblyError> {
    let wave = read_wav(wav)?;
    let path = alignment.as_ref();
    let f = std::fs::File::open(path).map_err(|e| AssemblyError::Io(format!("{}: {e}", path.display())))?;
    let al = read_alignment(f)?;
    al.validate(wave.len())?;
    Ok((wave, al))
}
