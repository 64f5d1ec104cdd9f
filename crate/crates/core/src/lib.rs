//! Corpus curation and curriculum construction for language-model training data.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`]: document records, the line-delimited record codec and run manifests.
//! * [`filters`]: per-source heuristic rule chains, a character n-gram perplexity
//!   scorer and a character-model language identifier.
//! * [`dedup`]: exact-hash and MinHash-LSH near-duplicate removal.
//! * [`mixture`]: mixture weights, staged token budgets, sampling, packing and the
//!   learning-rate schedule.
//! * [`tokenizer`]: vocabulary extension by WordPiece, padding, tokenization and
//!   compression reports.
//! * [`model_client`]: the boundary to language models, with an offline n-gram
//!   implementation and a line-delimited JSON protocol for external providers.
//! * [`longtail`]: weak-entity detection and TF-IDF retrieval of remedial data.
//! * [`sft`]: instruction synthesis and complexity-ordered curricula.
//! * [`align`]: preference-pair filtering, DPO rewards and easy-to-hard rounds.
//!
//! Numeric code is generic over [`Real`]; the `*64` aliases below fix the scalar
//! to `f64`, which is what the command-line tool uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod corpus;
pub mod dedup;
pub mod filters;
pub mod longtail;
pub mod mixture;
pub mod model_client;
pub mod scalar;
pub mod seed;
pub mod sft;
pub mod text;
pub mod tfidf;
pub mod tokenizer;

pub use scalar::Real;

pub type MixturePlan64 = mixture::MixturePlan<f64>;
pub type MixturePlan32 = mixture::MixturePlan<f32>;
pub type SourceSpec64 = mixture::SourceSpec<f64>;
pub type LrSchedule64 = mixture::LrSchedule<f64>;
pub type LrSchedule32 = mixture::LrSchedule<f32>;
pub type CompressionReport64 = tokenizer::CompressionReport<f64>;
pub type TfidfIndex64 = tfidf::TfidfIndex<f64>;
pub type TfidfIndex32 = tfidf::TfidfIndex<f32>;
pub type ComplexityScore64 = sft::ComplexityScore<f64>;
pub type Lambdas64 = sft::Lambdas<f64>;
pub type PreferencePair64 = align::PreferencePair<f64>;
pub type ToyPolicy64 = align::ToyPolicy<f64>;
pub type ToyPolicy32 = align::ToyPolicy<f32>;
