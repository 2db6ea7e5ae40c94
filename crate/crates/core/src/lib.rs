//! Diachronic comparison of a cohort's publications against their field.
//!
//! Two complementary measures are provided:
//!
//! * relative entropy between time-sliced, Jelinek-Mercer smoothed unigram
//!   models of the cohort and the rest of the field, with per-term Welch
//!   significance filtering ([`divergence`]);
//! * Gaussian kernel density of each slice's document embeddings evaluated at
//!   fixed reference documents ([`embedding`]).
//!
//! [`pipeline`] wires both into cached, parallel runs and [`report`] writes
//! CSV, JSON and SVG outputs.

pub mod corpus;
pub mod divergence;
pub mod embedding;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod textprep;
pub mod unigram;

pub use error::{Error, Result};
