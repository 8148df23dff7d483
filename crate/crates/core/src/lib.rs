//! Laboratory for incremental sequence-to-sequence text-to-speech.
//!
//! The crate re-encodes growing text prefixes under a lookahead-`k` policy,
//! measures how far each token's representation sits from its full-context
//! value, explains that drift with a random-forest importance pipeline, and
//! assembles incremental speech by cutting aligned segments out of per-prefix
//! waveforms and joining them with a short cross-fade.
//!
//! Numeric kernels (encoder, cosine distance, cross-fade) are generic over
//! [`Scalar`]; the aliases below pin the common precisions.

pub mod corpus;
pub mod drift;
pub mod assembler;
pub mod encoder;
pub mod features;
pub mod forest;
pub mod mushra;
pub mod pipeline;
pub mod policy;
pub mod rf;
pub mod scalar;
pub mod seed;
pub mod stats;

pub use scalar::Scalar;

/// Single-precision encoder, the default for experiments.
pub type Encoder32 = encoder::Encoder<f32>;
/// Double-precision encoder, used for cross-checking.
pub type Encoder64 = encoder::Encoder<f64>;
pub type EncoderWeights32 = encoder::EncoderWeights<f32>;
pub type TokenVector32 = encoder::TokenVector<f32>;
pub type EncodingTrace32 = policy::EncodingTrace<f32>;
