//! Emotion classification pipeline for low-resource text corpora.
//!
//! The pipeline ingests one-hot labeled CSV splits ([`corpus`]), reduces
//! each multi-hot label to one dominant class ([`labelspace`]), cleans
//! ([`textnorm`]) and encodes ([`encode`]) the text, fine-tunes a pluggable
//! six-way classifier ([`trainer`]), scores it ([`metrics`]) and writes
//! one-hot submission files ([`infer`]). [`config`] ties a run together
//! and hashes it so every artifact can be traced back to its settings.

pub mod config;
pub mod corpus;
pub mod emotion;
pub mod encode;
pub mod error;
pub mod infer;
pub mod kv;
pub mod labelspace;
pub mod metrics;
pub mod pretrained;
pub mod synthetic;
pub mod textnorm;
pub mod trainer;

pub use emotion::{Emotion, LabelVector, NUM_EMOTIONS};
pub use error::{Error, Result};
