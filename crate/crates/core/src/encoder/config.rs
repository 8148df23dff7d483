use super::EncoderError;
use serde::{Deserialize, Serialize};

/// One convolution layer: odd kernel width, zero same-padding, stride 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_width: usize,
    pub channels: usize,
}

impl ConvSpec {
    pub fn radius(&self) -> usize {
        self.kernel_width / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Ordered character set; row `i` of the embedding belongs to the `i`-th char.
    pub char_vocab: String,
    pub embed_dim: usize,
    pub conv: [ConvSpec; 3],
    /// Hidden size per direction. Token vectors have `2 * hidden_dim` entries.
    pub hidden_dim: usize,
    pub seed: u64,
}

/// Printable ASCII, space through tilde.
pub fn printable_ascii() -> String {
    (0x20u8..=0x7e).map(char::from).collect()
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let conv = ConvSpec { kernel_width: 5, channels: 32 };
        EncoderConfig { char_vocab: printable_ascii(), embed_dim: 32, conv: [conv; 3], hidden_dim: 32, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Uniform conv stack and hidden size, default vocabulary.
    pub fn sized(embed_dim: usize, channels: usize, kernel_width: usize, hidden_dim: usize) -> Self {
        let conv = ConvSpec { kernel_width, channels };
        EncoderConfig { embed_dim, conv: [conv; 3], hidden_dim, ..Default::default() }
    }

    pub fn vocab_chars(&self) -> Vec<char> {
        self.char_vocab.chars().collect()
    }

    pub fn vocab_size(&self) -> usize {
        self.char_vocab.chars().count()
    }

    /// Width of the recurrent input (channels of the last conv layer).
    pub fn lstm_input_dim(&self) -> usize {
        self.conv[2].channels
    }

    pub fn vector_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    /// How many characters to the right a position of each conv layer output can see.
    pub fn receptive_radii(&self) -> [usize; 3] {
        let r0 = self.conv[0].radius();
        let r1 = r0 + self.conv[1].radius();
        [r0, r1, r1 + self.conv[2].radius()]
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        let vocab = self.vocab_chars();
        if vocab.is_empty() {
            return bad("empty character vocabulary".into());
        }
        let mut sorted = vocab.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != vocab.len() {
            return bad("duplicate characters in vocabulary".into());
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be positive".into());
        }
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel_width % 2 == 0 {
                return bad(format!("conv{} kernel width {} is not odd", i + 1, c.kernel_width));
            }
            if c.channels == 0 {
                return bad(format!("conv{} has zero channels", i + 1));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = EncoderConfig::default();
        c.validate().unwrap();
        assert_eq!(c.vocab_size(), 95);
        assert_eq!(c.vector_dim(), 64);
        assert_eq!(c.receptive_radii(), [2, 4, 6]);
    }

    #[test]
    fn rejects_even_kernels_and_duplicates() {
        let mut c = EncoderConfig::default();
        c.conv[1].kernel_width = 4;
        assert!(matches!(c.validate(), Err(EncoderError::InvalidConfig(_))));
        let c = EncoderConfig { char_vocab: "aa".into(), ..Default::default() };
        assert!(c.validate().is_err());
        let c = EncoderConfig { hidden_dim: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
