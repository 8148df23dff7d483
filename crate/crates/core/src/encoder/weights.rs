//! Encoder parameters and their on-disk container.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   b"ITTSWGT\0"
//! version  u32       1
//! count    u32       number of tensors
//! tensor * count:
//!   name_len u16, name (UTF-8)
//!   dtype    u8      0 = f32, 1 = f64
//!   ndim     u8
//!   dims     u32 * ndim
//!   data     prod(dims) little-endian floats of `dtype`, row-major
//! ```
//!
//! Tensor names and shapes (V = vocab size, E = embed dim, C_i = channels of
//! conv layer i, W_i = its kernel width, D = C_3, H = hidden size):
//!
//! | name            | shape          |
//! |-----------------|----------------|
//! | `embedding`     | `[V, E]`       |
//! | `conv{i}.weight`| `[C_i, C_{i-1}, W_i]` (C_0 = E) |
//! | `conv{i}.bias`  | `[C_i]`        |
//! | `lstm.{fwd,bwd}.w_ih` | `[4H, D]` |
//! | `lstm.{fwd,bwd}.w_hh` | `[4H, H]` |
//! | `lstm.{fwd,bwd}.bias` | `[4H]`    |
//!
//! Recurrent gate rows are stacked in the order input, forget, cell, output.

use super::{EncoderConfig, EncoderError};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ITTSWGT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w: usize = self.shape[1..].iter().product();
        &self.data[i * w..(i + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<T> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub embedding: Tensor<T>,
    pub conv: [ConvLayer<T>; 3],
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

/// Canonical tensor names and shapes for a configuration.
pub fn expected_shapes(config: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let h4 = 4 * config.hidden_dim;
    let mut out = vec![("embedding".to_string(), vec![config.vocab_size(), config.embed_dim])];
    let mut cin = config.embed_dim;
    for (i, c) in config.conv.iter().enumerate() {
        out.push((format!("conv{}.weight", i + 1), vec![c.channels, cin, c.kernel_width]));
        out.push((format!("conv{}.bias", i + 1), vec![c.channels]));
        cin = c.channels;
    }
    for dir in ["fwd", "bwd"] {
        out.push((format!("lstm.{dir}.w_ih"), vec![h4, config.lstm_input_dim()]));
        out.push((format!("lstm.{dir}.w_hh"), vec![h4, config.hidden_dim]));
        out.push((format!("lstm.{dir}.bias"), vec![h4]));
    }
    out
}

impl<T: Scalar> EncoderWeights<T> {
    fn from_tensors(mut tensors: Vec<Tensor<T>>) -> Self {
        assert_eq!(tensors.len(), 13);
        let mut it = tensors.drain(..);
        let mut next = || it.next().unwrap();
        let embedding = next();
        let conv = [
            ConvLayer { weight: next(), bias: next() },
            ConvLayer { weight: next(), bias: next() },
            ConvLayer { weight: next(), bias: next() },
        ];
        let forward = LstmDirection { w_ih: next(), w_hh: next(), bias: next() };
        let backward = LstmDirection { w_ih: next(), w_hh: next(), bias: next() };
        EncoderWeights { embedding, conv, forward, backward }
    }

    /// Tensors in canonical order, paired with their names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v: Vec<&Tensor<T>> = vec![&self.embedding];
        for c in &self.conv {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        for d in [&self.forward, &self.backward] {
            v.extend([&d.w_ih, &d.w_hh, &d.bias]);
        }
        let names = ["embedding", "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight",
            "conv3.bias", "lstm.fwd.w_ih", "lstm.fwd.w_hh", "lstm.fwd.bias", "lstm.bwd.w_ih", "lstm.bwd.w_hh",
            "lstm.bwd.bias"];
        names.iter().map(|s| s.to_string()).zip(v).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = vec![&mut self.embedding];
        for c in &mut self.conv {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        for d in [&mut self.forward, &mut self.backward] {
            v.push(&mut d.w_ih);
            v.push(&mut d.w_hh);
            v.push(&mut d.bias);
        }
        v
    }

    pub fn zeros(config: &EncoderConfig) -> Self {
        Self::from_tensors(expected_shapes(config).iter().map(|(_, s)| Tensor::zeros(s)).collect())
    }

    /// i.i.d. uniform draws on [-0.1, 0.1] from a ChaCha8 stream seeded with
    /// `config.seed`, tensors filled in canonical order.
    pub fn init(config: &EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut w = Self::zeros(config);
        for t in w.tensors_mut() {
            for v in &mut t.data {
                *v = T::from_f64_lossy(rng.gen_range(-0.1..=0.1));
            }
        }
        w
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> EncoderWeights<U> {
        EncoderWeights::from_tensors(
            self.named_tensors()
                .into_iter()
                .map(|(_, t)| Tensor { shape: t.shape.clone(), data: t.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect() })
                .collect(),
        )
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &EncoderConfig) -> Result<(), EncoderError> {
        for ((name, t), (_, shape)) in self.named_tensors().into_iter().zip(expected_shapes(config)) {
            if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(EncoderError::ShapeError(format!("{name}: expected {shape:?}, found {:?}", t.shape)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(EncoderError::ParseError(format!("{name}: non-finite entry")));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let tensors = self.named_tensors();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, t) in tensors {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[T::DTYPE, t.shape.len() as u8])?;
            for d in &t.shape {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
            for v in &t.data {
                match T::DTYPE {
                    0 => w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?,
                    _ => w.write_all(&v.to_f64_lossy().to_le_bytes())?,
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| EncoderError::Io(e.to_string()))?;
        let mut bw = std::io::BufWriter::new(f);
        self.write_to(&mut bw).map_err(|e| EncoderError::Io(e.to_string()))?;
        bw.flush().map_err(|e| EncoderError::Io(e.to_string()))
    }

    /// Parses a weight container and binds it to `config`. Tensors may appear
    /// in any order; unknown names are rejected.
    pub fn read_from<R: Read>(mut r: R, config: &EncoderConfig) -> Result<Self, EncoderError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| EncoderError::Io(e.to_string()))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(EncoderError::ParseError("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(EncoderError::ParseError(format!("unsupported version {version}")));
        }
        let count = cur.u32()? as usize;
        let expected = expected_shapes(config);
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; expected.len()];
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| EncoderError::ParseError("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = cur.u8()?;
            let ndim = cur.u8()? as usize;
            let shape = (0..ndim).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| EncoderError::ParseError(format!("{name}: shape overflow")))?;
            let width = match dtype {
                0 => 4,
                1 => 8,
                d => return Err(EncoderError::ParseError(format!("{name}: unknown dtype {d}"))),
            };
            let raw = cur.take(numel.checked_mul(width).ok_or_else(|| EncoderError::ParseError("size overflow".into()))?)?;
            let data: Vec<T> = raw
                .chunks_exact(width)
                .map(|c| {
                    let v = if width == 4 {
                        f32::from_le_bytes(c.try_into().unwrap()) as f64
                    } else {
                        f64::from_le_bytes(c.try_into().unwrap())
                    };
                    T::from_f64_lossy(v)
                })
                .collect();
            let idx = expected
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| EncoderError::ParseError(format!("unknown tensor {name:?}")))?;
            if shape != expected[idx].1 {
                return Err(EncoderError::ShapeError(format!("{name}: expected {:?}, found {shape:?}", expected[idx].1)));
            }
            slots[idx] = Some(Tensor { shape, data });
        }
        if cur.pos != bytes.len() {
            return Err(EncoderError::ParseError("trailing bytes".into()));
        }
        let tensors = slots
            .into_iter()
            .zip(&expected)
            .map(|(t, (name, _))| t.ok_or_else(|| EncoderError::ParseError(format!("missing tensor {name}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let w = Self::from_tensors(tensors);
        w.check_shapes(config)?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>, config: &EncoderConfig) -> Result<Self, EncoderError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| EncoderError::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f), config)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncoderError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EncoderError::ParseError(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, EncoderError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, EncoderError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EncoderConfig {
        EncoderConfig { char_vocab: "ab ".into(), ..EncoderConfig::sized(3, 4, 3, 2) }
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let c = small().with_seed(7);
        let a = EncoderWeights::<f32>::init(&c);
        let b = EncoderWeights::<f32>::init(&c);
        assert_eq!(a, b);
        let other = EncoderWeights::<f32>::init(&c.clone().with_seed(8));
        assert_ne!(a, other);
        assert!(a.named_tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.abs() <= 0.1)));
    }

    #[test]
    fn minimal_shapes() {
        let c = EncoderConfig { char_vocab: "a".into(), ..EncoderConfig::sized(1, 1, 1, 1) };
        let w = EncoderWeights::<f32>::init(&c);
        assert_eq!(w.embedding.shape, vec![1, 1]);
        assert_eq!(w.forward.w_ih.shape, vec![4, 1]);
    }

    #[test]
    fn round_trip_both_dtypes() {
        let c = small().with_seed(3);
        for_dtype::<f32>(&c);
        for_dtype::<f64>(&c);
    }

    fn for_dtype<T: Scalar>(c: &EncoderConfig) {
        let w = EncoderWeights::<T>::init(c);
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        assert_eq!(EncoderWeights::<T>::read_from(&buf[..], c).unwrap(), w);
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let c3 = small();
        let mut c4 = small();
        c4.hidden_dim = 4;
        c4.validate().unwrap();
        let mut buf = Vec::new();
        EncoderWeights::<f32>::init(&c3).write_to(&mut buf).unwrap();
        match EncoderWeights::<f32>::read_from(&buf[..], &c4) {
            Err(EncoderError::ShapeError(m)) => assert!(m.starts_with("lstm.fwd.w_ih"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_and_garbage() {
        let c = small();
        let mut buf = Vec::new();
        EncoderWeights::<f32>::init(&c).write_to(&mut buf).unwrap();
        for cut in [0, 7, 20, buf.len() - 1] {
            assert!(matches!(EncoderWeights::<f32>::read_from(&buf[..cut], &c), Err(EncoderError::ParseError(_))));
        }
        buf.push(0);
        assert!(matches!(EncoderWeights::<f32>::read_from(&buf[..], &c), Err(EncoderError::ParseError(_))));
    }
}
