//! The seven perturbations.
//!
//! Each rule reads the instance's annotations, rewrites its tokens and carries
//! every span and link along. Name and adverb choices come from a ChaCha8
//! stream seeded per instance (see [`crate::seed::instance_seed`]).

mod gender;
mod insert;
mod number;
pub(crate) mod pronoun;
mod synonym;
mod tense;
mod voice;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::lexicon::LexiconBundle;
use crate::schema::{Dataset, Gender, PerturbationKind, PerturbedDataset, SchemaInstance, Skipped};
use crate::seed;
use crate::text;

pub use crate::schema::SkipReason;
pub use gender::perturb_gender;
pub use insert::{insert_adverb, insert_relative_clause};
pub use number::perturb_number;
pub use synonym::substitute_referents;
pub use tense::perturb_tense;
pub use voice::perturb_voice;

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbOutcome {
    Perturbed(SchemaInstance),
    Skipped { reason: SkipReason, detail: String },
}

impl PerturbOutcome {
    pub fn skip(reason: SkipReason, detail: impl Into<String>) -> Self {
        PerturbOutcome::Skipped { reason, detail: detail.into() }
    }

    pub fn instance(&self) -> Option<&SchemaInstance> {
        match self {
            PerturbOutcome::Perturbed(i) => Some(i),
            PerturbOutcome::Skipped { .. } => None,
        }
    }

    pub fn reason(&self) -> Option<SkipReason> {
        match self {
            PerturbOutcome::Perturbed(_) => None,
            PerturbOutcome::Skipped { reason, .. } => Some(*reason),
        }
    }
}

/// Applies one perturbation kind to one instance with an explicit seed.
pub fn perturb_instance(inst: &SchemaInstance, kind: PerturbationKind, lex: &LexiconBundle, seed: u64) -> PerturbOutcome {
    match kind {
        PerturbationKind::Tense => perturb_tense(inst, lex, seed),
        PerturbationKind::Number => perturb_number(inst, lex, seed),
        PerturbationKind::Gender => perturb_gender(inst, lex, seed),
        PerturbationKind::Voice => perturb_voice(inst, lex, seed),
        PerturbationKind::RelativeClause => insert_relative_clause(inst, lex, seed),
        PerturbationKind::Adverb => insert_adverb(inst, lex, seed),
        PerturbationKind::SynonymName => substitute_referents(inst, lex, seed),
    }
}

/// Applies one kind to every instance; instance `id` uses
/// `instance_seed(seed, id)`.
pub fn perturb_dataset(d: &Dataset, kind: PerturbationKind, lex: &LexiconBundle, seed: u64) -> PerturbedDataset {
    let mut out = PerturbedDataset { kind, instances: Vec::new(), skipped: Vec::new() };
    for inst in d.instances() {
        match perturb_instance(inst, kind, lex, seed::instance_seed(seed, &inst.id)) {
            PerturbOutcome::Perturbed(p) => out.instances.push((inst.id.clone(), p)),
            PerturbOutcome::Skipped { reason, detail } => {
                out.skipped.push(Skipped { origin_id: inst.id.clone(), reason, detail })
            }
        }
    }
    out
}

/// Final common step: kind suffixes and validation.
fn finalize(mut out: SchemaInstance, kind: PerturbationKind) -> PerturbOutcome {
    out.id = format!("{}-{}", out.id, kind.suffix());
    out.pair_id = format!("{}-{}", out.pair_id, kind.suffix());
    out.note = None;
    match out.validate() {
        Ok(()) => PerturbOutcome::Perturbed(out),
        Err(e) => PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, format!("rewrite produced an invalid instance: {e}")),
    }
}

fn blocked(inst: &SchemaInstance, kind: PerturbationKind) -> bool {
    inst.annotations.blocked.contains(&kind)
}

/// Lowercased names already used in the instance.
fn names_present(inst: &SchemaInstance, lex: &LexiconBundle) -> BTreeSet<String> {
    inst.tokens.iter().filter(|t| lex.name_gender(t).is_some()).map(|t| t.to_lowercase()).collect()
}

/// Uniform draw from the gender's pool, avoiding `exclude` (lowercased).
fn draw_name(lex: &LexiconBundle, gender: Gender, exclude: &BTreeSet<String>, rng: &mut ChaCha8Rng) -> Option<String> {
    let pool: Vec<&String> = lex.names(gender).iter().filter(|n| !exclude.contains(&n.to_lowercase())).collect();
    if pool.is_empty() {
        return None;
    }
    let i = rng.random_range(0..pool.len() as u32) as usize;
    Some(pool[i].clone())
}

fn pick<'a>(items: &[&'a str], rng: &mut ChaCha8Rng) -> Option<&'a str> {
    if items.is_empty() {
        return None;
    }
    Some(items[rng.random_range(0..items.len() as u32) as usize])
}

/// Start positions of other mentions of a referent: exact token matches
/// (ignoring first-letter case) that overlap neither referent span.
fn mentions(inst: &SchemaInstance, r: usize) -> Vec<usize> {
    let words = &inst.tokens[inst.referents[r].span.start..inst.referents[r].span.end];
    let n = words.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= inst.tokens.len() {
        let span = crate::schema::Span::new(i, i + n);
        let clear = inst.referents.iter().all(|x| !x.span.overlaps(&span)) && !inst.pronoun_span.overlaps(&span);
        if clear && text::words_match(&inst.tokens[i..i + n], words) {
            out.push(i);
            i += n;
        } else {
            i += 1;
        }
    }
    out
}

fn phrase(s: &str) -> Vec<String> {
    text::tokenize_phrase(s)
}
