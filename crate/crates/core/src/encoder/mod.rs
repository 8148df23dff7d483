//! Character encoder: embedding, three same-padded convolutions with ReLU,
//! and a bidirectional LSTM. Word-level vectors are read off the recurrent
//! states at token boundaries.

mod config;
mod weights;

pub use config::{printable_ascii, ConvSpec, EncoderConfig};
pub use weights::{expected_shapes, ConvLayer, EncoderWeights, LstmDirection, Tensor};

use crate::corpus::Sentence;
use crate::scalar::{dot, sigmoid, Scalar};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("character at position {0} is not in the encoder vocabulary")]
    UnsupportedChar(usize),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("weight file parse error: {0}")]
    ParseError(String),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("token {0} lies outside the encoded prefix")]
    OutOfPrefix(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Recurrent states for every character of an encoded text.
#[derive(Debug, Clone, PartialEq)]
pub struct CharStates<T> {
    hidden: usize,
    forward: Vec<T>,
    backward: Vec<T>,
}

impl<T: Scalar> CharStates<T> {
    /// Number of encoded characters.
    pub fn len(&self) -> usize {
        self.forward.len() / self.hidden
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    /// Forward state after reading character `t` (0-based).
    pub fn forward(&self, t: usize) -> &[T] {
        &self.forward[t * self.hidden..(t + 1) * self.hidden]
    }

    /// Backward state after reading from the end down to character `t`.
    pub fn backward(&self, t: usize) -> &[T] {
        &self.backward[t * self.hidden..(t + 1) * self.hidden]
    }
}

/// Word-level representation `z` of one token under a given context.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVector<T> {
    pub z: Vec<T>,
    /// 1-based token index.
    pub token_index: usize,
    /// Number of tokens that were visible to the encoder.
    pub context_tokens: usize,
    pub full_context: bool,
}

/// Intermediate buffers of the last encoded text, used to skip work when the
/// next text shares a prefix with it.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    chars: Vec<usize>,
    layers: [Vec<T>; 4],
    proj_fwd: Vec<T>,
    proj_bwd: Vec<T>,
    h_fwd: Vec<T>,
    c_fwd: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn new() -> Self {
        ForwardCache {
            chars: Vec::new(),
            layers: Default::default(),
            proj_fwd: Vec::new(),
            proj_bwd: Vec::new(),
            h_fwd: Vec::new(),
            c_fwd: Vec::new(),
        }
    }
}

/// Weights bound to a configuration, ready for inference.
#[derive(Debug, Clone)]
pub struct Encoder<T> {
    config: EncoderConfig,
    weights: EncoderWeights<T>,
    vocab: HashMap<char, usize>,
    /// Conv kernels re-laid out as `[out][tap][in]` so a window of the
    /// row-major input is one contiguous slice.
    kernels: [Vec<T>; 3],
}

impl<T: Scalar> Encoder<T> {
    pub fn new(config: EncoderConfig, weights: EncoderWeights<T>) -> Result<Self, EncoderError> {
        config.validate()?;
        weights.check_shapes(&config)?;
        let vocab = config.vocab_chars().into_iter().enumerate().map(|(i, c)| (c, i)).collect();
        let kernels = std::array::from_fn(|l| {
            let w = &weights.conv[l].weight;
            let (cout, cin, width) = (w.shape[0], w.shape[1], w.shape[2]);
            let mut k = Vec::with_capacity(w.data.len());
            for o in 0..cout {
                for tap in 0..width {
                    for i in 0..cin {
                        k.push(w.data[(o * cin + i) * width + tap]);
                    }
                }
            }
            k
        });
        Ok(Encoder { config, weights, vocab, kernels })
    }

    /// Seeded random encoder (`config.seed`).
    pub fn random(config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        let w = EncoderWeights::init(&config);
        Self::new(config, w)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn weights(&self) -> &EncoderWeights<T> {
        &self.weights
    }

    pub fn vector_dim(&self) -> usize {
        self.config.vector_dim()
    }

    fn char_ids(&self, text: &str) -> Result<Vec<usize>, EncoderError> {
        text.chars()
            .enumerate()
            .map(|(i, c)| self.vocab.get(&c).copied().ok_or(EncoderError::UnsupportedChar(i)))
            .collect()
    }

    /// Runs the full stack over `text` and returns every recurrent state.
    pub fn encode_chars(&self, text: &str) -> Result<CharStates<T>, EncoderError> {
        self.encode_chars_cached(text, &mut ForwardCache::new())
    }

    /// Same result as [`encode_chars`](Self::encode_chars), reusing whatever
    /// part of `cache` is provably unaffected by the new text. Convolution
    /// outputs near the end of the old text saw zero padding, so only
    /// positions whose receptive field lies inside the shared prefix are kept.
    pub fn encode_chars_cached(&self, text: &str, cache: &mut ForwardCache<T>) -> Result<CharStates<T>, EncoderError> {
        let ids = self.char_ids(text)?;
        let len = ids.len();
        let h = self.config.hidden_dim;
        if len == 0 {
            *cache = ForwardCache::new();
            return Ok(CharStates { hidden: h, forward: Vec::new(), backward: Vec::new() });
        }

        let shared = ids.iter().zip(&cache.chars).take_while(|(a, b)| a == b).count();
        let identical = shared == len && cache.chars.len() == len;
        let radii = self.config.receptive_radii();
        let keep = |r: usize| if identical { len } else { shared.saturating_sub(r) };

        let e = self.config.embed_dim;
        let mut layers: [Vec<T>; 4] = Default::default();
        layers[0] = Vec::with_capacity(len * e);
        for &c in &ids {
            layers[0].extend_from_slice(self.weights.embedding.row(c));
        }
        for l in 0..3 {
            let cout = self.config.conv[l].channels;
            let reuse = keep(radii[l]) * cout;
            let mut out = Vec::with_capacity(len * cout);
            out.extend_from_slice(&cache.layers[l + 1][..reuse]);
            self.conv_layer(l, &layers[l], len, reuse / cout, &mut out);
            layers[l + 1] = out;
        }

        let kept = keep(radii[2]);
        let h4 = 4 * h;
        let x = &layers[3];
        let d = self.config.lstm_input_dim();
        let mut proj_fwd = cache.proj_fwd[..kept * h4].to_vec();
        let mut proj_bwd = cache.proj_bwd[..kept * h4].to_vec();
        for t in kept..len {
            let xt = &x[t * d..(t + 1) * d];
            project(&self.weights.forward, xt, &mut proj_fwd);
            project(&self.weights.backward, xt, &mut proj_bwd);
        }

        let mut h_fwd = cache.h_fwd[..kept * h].to_vec();
        let mut c_fwd = cache.c_fwd[..kept * h].to_vec();
        let (mut hs, mut cs) = if kept == 0 {
            (vec![T::zero(); h], vec![T::zero(); h])
        } else {
            (h_fwd[(kept - 1) * h..].to_vec(), c_fwd[(kept - 1) * h..].to_vec())
        };
        let mut pre = vec![T::zero(); h4];
        for t in kept..len {
            lstm_step(&self.weights.forward, &proj_fwd[t * h4..(t + 1) * h4], &mut hs, &mut cs, &mut pre);
            h_fwd.extend_from_slice(&hs);
            c_fwd.extend_from_slice(&cs);
        }

        let mut backward = vec![T::zero(); len * h];
        let (mut hb, mut cb) = (vec![T::zero(); h], vec![T::zero(); h]);
        for t in (0..len).rev() {
            lstm_step(&self.weights.backward, &proj_bwd[t * h4..(t + 1) * h4], &mut hb, &mut cb, &mut pre);
            backward[t * h..(t + 1) * h].copy_from_slice(&hb);
        }

        let states = CharStates { hidden: h, forward: h_fwd.clone(), backward };
        *cache = ForwardCache { chars: ids, layers, proj_fwd, proj_bwd, h_fwd, c_fwd };
        Ok(states)
    }

    fn conv_layer(&self, l: usize, input: &[T], len: usize, from: usize, out: &mut Vec<T>) {
        let spec = self.config.conv[l];
        let cin = input.len() / len;
        let r = spec.radius();
        let window = spec.kernel_width * cin;
        let kernel = &self.kernels[l];
        let bias = &self.weights.conv[l].bias.data;
        // zero rows on both sides give same-padding
        let mut padded = vec![T::zero(); (len + 2 * r) * cin];
        padded[r * cin..(r + len) * cin].copy_from_slice(input);
        for t in from..len {
            let win = &padded[t * cin..t * cin + window];
            for (o, b) in bias.iter().enumerate() {
                let v = *b + dot(&kernel[o * window..(o + 1) * window], win);
                out.push(v.max(T::zero()));
            }
        }
    }

    /// `z_n = [h_fwd(last char of token n), h_bwd(first char of token n)]`.
    /// The number of visible tokens is inferred from how many characters
    /// the states cover.
    pub fn extract_token_vector(
        &self,
        states: &CharStates<T>,
        sentence: &Sentence,
        n: usize,
    ) -> Result<TokenVector<T>, EncoderError> {
        extract_token_vector(states, sentence, n)
    }

    /// Encodes the first `c` tokens of `sentence` and extracts vectors for all of them.
    pub fn encode_prefix(&self, sentence: &Sentence, c: usize) -> Result<Vec<TokenVector<T>>, EncoderError> {
        let text = crate::policy::prefix_text(sentence, c).map_err(|_| EncoderError::OutOfPrefix(c))?;
        let states = self.encode_chars(&text)?;
        (1..=c).map(|n| extract_token_vector(&states, sentence, n)).collect()
    }
}

/// Free-function form of [`Encoder::extract_token_vector`].
pub fn extract_token_vector<T: Scalar>(
    states: &CharStates<T>,
    sentence: &Sentence,
    n: usize,
) -> Result<TokenVector<T>, EncoderError> {
    let token = sentence.token(n).ok_or(EncoderError::OutOfPrefix(n))?;
    let encoded = states.len();
    if token.char_span.end > encoded || token.char_span.is_empty() {
        return Err(EncoderError::OutOfPrefix(n));
    }
    let context_tokens = sentence.tokens.iter().take_while(|t| t.char_span.end <= encoded).count();
    let mut z = Vec::with_capacity(2 * states.hidden_dim());
    z.extend_from_slice(states.forward(token.char_span.end - 1));
    z.extend_from_slice(states.backward(token.char_span.start));
    Ok(TokenVector { z, token_index: n, context_tokens, full_context: context_tokens == sentence.len() })
}

fn project<T: Scalar>(dir: &LstmDirection<T>, x: &[T], out: &mut Vec<T>) {
    for (g, b) in dir.bias.data.iter().enumerate() {
        out.push(*b + dot(dir.w_ih.row(g), x));
    }
}

/// One LSTM step with gate rows ordered input, forget, cell, output.
fn lstm_step<T: Scalar>(dir: &LstmDirection<T>, proj: &[T], h: &mut [T], c: &mut [T], pre: &mut [T]) {
    let hd = h.len();
    for (g, p) in pre.iter_mut().enumerate() {
        *p = proj[g] + dot(dir.w_hh.row(g), h);
    }
    for j in 0..hd {
        let i = sigmoid(pre[j]);
        let f = sigmoid(pre[hd + j]);
        let g = pre[2 * hd + j].tanh();
        let o = sigmoid(pre[3 * hd + j]);
        c[j] = f * c[j] + i * g;
        h[j] = o * c[j].tanh();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig { char_vocab: "ab".into(), ..EncoderConfig::sized(1, 1, 1, 1) }
    }

    /// Weights for a hand-executable recurrence: identity embedding/convs so
    /// the recurrent input for 'a' is 1 and for 'b' is 2.
    fn hand_weights() -> EncoderWeights<f64> {
        let c = tiny_config();
        let mut w = EncoderWeights::<f64>::zeros(&c);
        w.embedding.data = vec![1.0, 2.0];
        for l in &mut w.conv {
            l.weight.data = vec![1.0];
        }
        // forward gates i, f, g, o
        w.forward.w_ih.data = vec![0.5, -0.5, 1.0, 0.25];
        w.forward.w_hh.data = vec![0.1, 0.2, -0.3, 0.4];
        w.forward.bias.data = vec![0.0, 0.1, 0.0, -0.1];
        w.backward.w_ih.data = vec![-0.5, 0.5, 0.5, 0.5];
        w.backward.w_hh.data = vec![0.3, -0.2, 0.1, 0.0];
        w.backward.bias.data = vec![0.2, 0.0, 0.0, 0.0];
        w
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar LSTM cell written out longhand.
    fn hand_step(wi: [f64; 4], wh: [f64; 4], b: [f64; 4], x: f64, h: f64, c: f64) -> (f64, f64) {
        let i = sig(wi[0] * x + wh[0] * h + b[0]);
        let f = sig(wi[1] * x + wh[1] * h + b[1]);
        let g = (wi[2] * x + wh[2] * h + b[2]).tanh();
        let o = sig(wi[3] * x + wh[3] * h + b[3]);
        let c = f * c + i * g;
        (o * c.tanh(), c)
    }

    #[test]
    fn empty_text() {
        let enc = Encoder::new(tiny_config(), hand_weights()).unwrap();
        assert!(enc.encode_chars("").unwrap().is_empty());
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let c = tiny_config();
        let enc = Encoder::new(c.clone(), EncoderWeights::<f32>::zeros(&c)).unwrap();
        let s = enc.encode_chars("a").unwrap();
        assert_eq!(s.forward(0), &[0.0]);
        assert_eq!(s.backward(0), &[0.0]);
        let s = Encoder::new(EncoderConfig::default(), EncoderWeights::<f32>::zeros(&EncoderConfig::default()))
            .unwrap()
            .encode_chars("The dog")
            .unwrap();
        assert!(s.forward.iter().chain(&s.backward).all(|v| *v == 0.0));
    }

    #[test]
    fn two_char_recurrence_by_hand() {
        let enc = Encoder::new(tiny_config(), hand_weights()).unwrap();
        let s = enc.encode_chars("ab").unwrap();
        let fw = ([0.5, -0.5, 1.0, 0.25], [0.1, 0.2, -0.3, 0.4], [0.0, 0.1, 0.0, -0.1]);
        let bw = ([-0.5, 0.5, 0.5, 0.5], [0.3, -0.2, 0.1, 0.0], [0.2, 0.0, 0.0, 0.0]);
        let (h1, c1) = hand_step(fw.0, fw.1, fw.2, 1.0, 0.0, 0.0);
        let (h2, _) = hand_step(fw.0, fw.1, fw.2, 2.0, h1, c1);
        let (hb2, cb2) = hand_step(bw.0, bw.1, bw.2, 2.0, 0.0, 0.0);
        let (hb1, _) = hand_step(bw.0, bw.1, bw.2, 1.0, hb2, cb2);
        for (got, want) in [(s.forward(0)[0], h1), (s.forward(1)[0], h2), (s.backward(1)[0], hb2), (s.backward(0)[0], hb1)] {
            approx::assert_relative_eq!(got, want, max_relative = 1e-12);
        }

        // "ab" as one word: z = [h_fwd("b"), h_bwd("a")]
        let sent = tokenize("ab").unwrap();
        let z = enc.extract_token_vector(&s, &sent, 1).unwrap();
        approx::assert_relative_eq!(z.z[0], h2, max_relative = 1e-12);
        approx::assert_relative_eq!(z.z[1], hb1, max_relative = 1e-12);
        assert!(z.full_context);
    }

    #[test]
    fn f32_matches_hand_oracle() {
        let w64 = hand_weights();
        let c = tiny_config();
        let w32: EncoderWeights<f32> = w64.cast();
        let s32 = Encoder::new(c.clone(), w32).unwrap().encode_chars("ab").unwrap();
        let s64 = Encoder::new(c, w64).unwrap().encode_chars("ab").unwrap();
        for t in 0..2 {
            approx::assert_relative_eq!(s32.forward(t)[0] as f64, s64.forward(t)[0], max_relative = 1e-6);
            approx::assert_relative_eq!(s32.backward(t)[0] as f64, s64.backward(t)[0], max_relative = 1e-6);
        }
    }

    #[test]
    fn unsupported_char() {
        let enc = Encoder::new(tiny_config(), hand_weights()).unwrap();
        assert_eq!(enc.encode_chars("abc").unwrap_err(), EncoderError::UnsupportedChar(2));
    }

    #[test]
    fn extraction_indices_on_table_prefix() {
        let enc = Encoder::<f32>::random(EncoderConfig::default().with_seed(1)).unwrap();
        let sent = tokenize("The dog is in the yard.").unwrap();
        let states = enc.encode_chars("The dog").unwrap();
        let z = extract_token_vector(&states, &sent, 3).unwrap();
        // "g" is character 6, "d" is character 4
        assert_eq!(&z.z[..32], states.forward(6));
        assert_eq!(&z.z[32..], states.backward(4));
        assert_eq!(z.context_tokens, 3);
        assert!(!z.full_context);
        assert_eq!(extract_token_vector(&states, &sent, 4).unwrap_err(), EncoderError::OutOfPrefix(4));
        assert_eq!(extract_token_vector(&states, &sent, 13).unwrap_err(), EncoderError::OutOfPrefix(13));
    }

    #[test]
    fn single_char_sentence() {
        let enc = Encoder::<f32>::random(EncoderConfig::default().with_seed(2)).unwrap();
        let sent = tokenize("A").unwrap();
        let s = enc.encode_chars("A").unwrap();
        let z = extract_token_vector(&s, &sent, 1).unwrap();
        assert_eq!(z.z, [s.forward(0), s.backward(0)].concat());
        assert_eq!(z.z.len(), 64);
    }

    #[test]
    fn forward_states_agree_outside_receptive_field() {
        let enc = Encoder::<f32>::random(EncoderConfig::default().with_seed(5)).unwrap();
        let short = enc.encode_chars("The dog is").unwrap();
        let long = enc.encode_chars("The dog is in the yard.").unwrap();
        let radius = enc.config().receptive_radii()[2];
        for t in 0..short.len() - radius {
            assert_eq!(short.forward(t), long.forward(t), "position {t}");
        }
        // backward states see the future, so the first one differs
        assert_ne!(short.backward(0), long.backward(0));
        // and the last positions inside the radius do change
        assert_ne!(short.forward(short.len() - 1), long.forward(short.len() - 1));
    }

    #[test]
    fn cache_is_bit_identical() {
        let enc = Encoder::<f32>::random(EncoderConfig::default().with_seed(9)).unwrap();
        let texts = ["The", "The dog", "The dog is in", "The dog is in the yard.", "The cat", "The cat", "T", ""];
        let mut cache = ForwardCache::new();
        for t in texts {
            assert_eq!(enc.encode_chars_cached(t, &mut cache).unwrap(), enc.encode_chars(t).unwrap(), "{t:?}");
        }
    }
}
