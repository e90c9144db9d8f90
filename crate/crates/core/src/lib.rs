//! Confidence-filtered reasoning-quality scoring for pre-recorded LLM trace logs.
//!
//! The library ingests line-delimited trace logs (tokens, chosen-token
//! probabilities, answers), estimates a per-trace confidence, ranks and
//! filters each model–benchmark pool, scores the retained traces with a
//! rubric-based judge, and aggregates everything into the filtered
//! reasoning score (FRS) plus the supporting statistical battery:
//! signal-to-noise separation, bootstrap uncertainty, ranking stability,
//! selection gain, leave-one-benchmark-out correlation, and cross-benchmark
//! matrices.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`model`] — shared domain types and their validation
//! - [`ingest`] — trace-log and accuracy-table loading, grading
//! - [`confidence`] — per-trace confidence estimators
//! - [`filter`] — pooled ranking, top-K selection, confidence bins
//! - [`judge`] — rubric prompts, judge backends, verdict parsing, cache
//! - [`metrics`] — FRS, SNR, accuracy and selection-gain aggregates
//! - [`analysis`] — rank statistics and study-level analyses
//! - [`synth`] — synthetic pools with known confidence–quality structure
//! - [`report`] — deterministic table rendering with metadata blocks

#![forbid(unsafe_code)]

pub mod analysis;
pub mod confidence;
pub mod filter;
pub mod ingest;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod report;
pub mod seed;
pub mod synth;
