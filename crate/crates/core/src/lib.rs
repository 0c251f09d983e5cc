//! Rule-based assessment of clinician communication in speaker-labeled
//! conversation transcripts.
//!
//! The pipeline runs transcript parsing ([`transcript`]), feature extraction
//! ([`lexicon`], [`acoustics`], [`classify`], [`features`]) and the rule
//! engine ([`rules`]). [`eval`] scores assessments against ground-truth tags
//! and generates synthetic corpora.

pub mod acoustics;
pub mod classify;
pub mod cli;
pub mod config;
pub mod engine;
pub mod eval;
pub mod features;
pub mod lexicon;
pub mod report;
pub mod rules;
pub mod transcript;

pub use engine::{Engine, EngineError};
pub use rules::{Assessment, Label, Metric, Polarity, RuleConfig};
pub use transcript::{Conversation, Role};
