//! Curriculum training for recurrent language models.
//!
//! The crate trains a tied-weight LSTM language model while replacing the
//! teacher-forced input token, per step, with either the model's own previous
//! prediction (scheduled sampling) or a sampled nearest neighbor of the gold
//! token (nearest-neighbor replacement sampling). Both replacement rates
//! follow per-epoch curriculum curves, and the neighbor distribution's
//! temperature adapts to validation perplexity.
//!
//! Modules, bottom-up:
//!
//! * [`corpus`]: vocabularies, token streams and BPTT batches.
//! * [`neighbors`]: cosine neighbor tables, bigram transition tables and
//!   temperature-controlled replacement sampling.
//! * [`schedules`]: curriculum curves for the two replacement rates.
//! * [`seqmodel`]: the LSTM, its hand-written backward pass and checkpoints.
//! * [`trainer`]: the sampling-strategy training loop and evaluation.
//! * [`synthetic`]: a seeded desk-scale corpus and embedding generator.

pub mod corpus;
pub mod error;
pub mod neighbors;
pub mod schedules;
pub mod seqmodel;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
