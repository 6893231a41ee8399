//! End-to-end pipeline for making album-like audio from one album of raw
//! audio: preprocess a corpus into a chunked training manifest, train an
//! unconditional two-tier sample-level RNN by truncated backpropagation
//! through time, synthesize new tracks autoregressively, and generate song
//! titles with low-order Markov chains.
//!
//! All numeric machinery — tensors, reverse-mode differentiation, Adam,
//! the PRNG — is built in-crate so that runs reproduce bit-for-bit from
//! their seeds.

pub mod audio_io;
pub mod dataset;
pub mod generator;
pub mod model;
pub mod numeric;
pub mod quantizer;
pub mod titlegen;
pub mod trainer;
