//! Few-shot conflict detection for requirement pairs.
//!
//! The pipeline classifies requirement pairings as conflict, duplicate, or
//! neutral. A small labeled set fine-tunes one scorer per pattern-verbalizer
//! pair; the scorers are combined with zero-shot accuracy weights to soft-label
//! a large unlabeled pool; and a final classifier is distilled from the union.
//! A supervised sequence-pair baseline, stratified splitting, a synthetic
//! corpus generator, and a metrics/report surface round out the toolkit.

pub mod backend;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod pvp;
pub mod splits;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
