//! Robustness probing for Winograd-style pronoun resolution.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every pure part of the
//! toolkit:
//!
//! - [`schema`]: schema instances, datasets, pair validation, segment masking
//!   and referent switching.
//! - [`perturb`]: the seven meaning-preserving perturbations (tense, number,
//!   gender, voice, relative clause, adverb, synonym/name).
//! - [`bridge`]: the language-model adapter contract plus a deterministic toy
//!   masked model.
//! - [`scoring`]: candidate scoring strategies and score sets.
//! - [`metrics`]: accuracy, stability, pair accuracy and the distributional
//!   analyses.
//! - [`pmi`]: co-occurrence counting and PMI associativity.
//! - [`attention`]: attention difference maps, head rankings and masking
//!   curves.
//!
//! File formats, the subprocess adapter and the command line live in the
//! `winoprobe` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attention;
pub mod bridge;
pub mod lexicon;
pub mod metrics;
pub mod perturb;
pub mod pmi;
pub mod schema;
pub mod scoring;
pub mod seed;
pub mod text;

mod rewrite;

pub use bridge::{AdapterInfo, BridgeError, LanguageModel, TruncatedDistribution};
pub use lexicon::LexiconBundle;
pub use perturb::{perturb_dataset, perturb_instance, PerturbOutcome, SkipReason};
pub use schema::{Dataset, PerturbationKind, PerturbedDataset, Referent, SchemaInstance, Span};
pub use scoring::{Prediction, ScoreSet, Strategy};
