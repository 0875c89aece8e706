//! Claim detection through opinion-corpus language model fine-tuning.
//!
//! The crate covers the whole path from raw comment dumps to evaluated
//! claim classifiers:
//!
//! * [`corpus`] mines self-labeled IMO/IMHO opinion sentences from dumps.
//! * [`text`] tokenizes, builds vocabularies and assembles batches.
//! * [`nn`] is a small float64 toolkit: embeddings, stacked LSTMs, exact
//!   BPTT, optimizers, gradient checking and checkpoints.
//! * [`pipeline`] runs the three stages: general LM pretraining, opinion LM
//!   fine-tuning and classifier fine-tuning.
//! * [`eval`] does stratified fixed-split cross-validation, metrics and
//!   chi-squared significance.
//! * [`analysis`] retrieves TF-IDF nearest neighbours from the opinion corpus.
//! * [`synthetic`] generates seeded toy corpora for tests and benchmarks.

pub mod analysis;
pub mod corpus;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod text;
