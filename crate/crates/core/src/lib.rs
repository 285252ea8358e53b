//! Semi-supervised singing timbre model.
//!
//! Two encoders (acoustic and linguistic) are trained to emit interchangeable
//! frame embeddings; a long-scope non-causal decoder and a short-scope
//! autoregressive decoder turn embeddings plus F0 and speaker conditioning
//! into mel-spectrograms. A new voice is learned from audio alone by training
//! the decoder behind the frozen acoustic encoder, and synthesised from
//! phone timings through the linguistic encoder.

pub mod blocks;
pub mod container;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;
