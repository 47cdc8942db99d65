//! Relative-clause and adverb insertion.

use alloc::format;
use alloc::string::String;
use alloc::vec;

use super::{blocked, finalize, pick, PerturbOutcome, SkipReason};
use crate::lexicon::LexiconBundle;
use crate::rewrite::{rebuild, Rewriter};
use crate::schema::{PerturbationKind, SchemaInstance};
use crate::seed;
use crate::text;

/// Inserts ", <template with ending> ," right after the first referent.
pub fn insert_relative_clause(inst: &SchemaInstance, lex: &LexiconBundle, _seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::RelativeClause;
    if blocked(inst, kind) {
        return PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "relative clause blocked");
    }
    let a = &inst.annotations;
    let (Some(index), Some(ending)) = (a.rc_template_index, a.rc_ending.as_deref()) else {
        return PerturbOutcome::skip(SkipReason::NotApplicable, "no template or ending annotated");
    };
    let Some(clause) = lex.rc_clause(index, ending) else {
        return PerturbOutcome::skip(SkipReason::NotApplicable, format!("template index {index} out of range"));
    };
    let at = inst.referents[0].span.end;
    let next = inst.tokens.get(at).map(String::as_str);
    if matches!(next, Some("'s" | "'")) {
        return PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "first referent is possessive");
    }
    let mut inserted = vec![String::from(",")];
    inserted.extend(clause);
    if !next.is_some_and(text::is_punct) {
        inserted.push(",".into());
    }
    let mut rw = Rewriter::new(&inst.tokens);
    rw.insert(at, inserted, Some("X"));
    match rebuild(inst, &rw.finish()) {
        Some(out) => finalize(out, kind),
        None => PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "span lost"),
    }
}

fn is_tagged_adverb(inst: &SchemaInstance, i: usize) -> bool {
    inst.annotations.pos.get(i).is_some_and(|t| t.starts_with("RB") || t == "ADV")
}

/// Inserts an adverb before the last token of every main verb span.
pub fn insert_adverb(inst: &SchemaInstance, lex: &LexiconBundle, seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::Adverb;
    if blocked(inst, kind) {
        return PerturbOutcome::skip(SkipReason::AlreadyModified, "adverb insertion blocked");
    }
    let spans = &inst.annotations.main_verb_spans;
    if spans.is_empty() {
        return PerturbOutcome::skip(SkipReason::NotApplicable, "no main verbs annotated");
    }
    let mut rng = seed::rng_for(seed);
    let mut rw = Rewriter::new(&inst.tokens);
    for s in spans {
        let at = s.end - 1;
        if at > 0 && (lex.is_adverb(&inst.tokens[at - 1]) || is_tagged_adverb(inst, at - 1)) {
            return PerturbOutcome::skip(SkipReason::AlreadyModified, format!("verb at {at} already modified"));
        }
        let adverb = match &inst.annotations.adverb {
            Some(a) => a.clone(),
            None => {
                let base = lex.verb_base(&inst.tokens[at]).map(|v| v.base.as_str());
                match pick(&lex.adverbs_for(base), &mut rng) {
                    Some(a) => a.into(),
                    None => return PerturbOutcome::skip(SkipReason::NotApplicable, "no adverb available"),
                }
            }
        };
        rw.insert(at, text::tokenize_phrase(&adverb), Some("RB"));
    }
    match rebuild(inst, &rw.finish()) {
        Some(out) => finalize(out, kind),
        None => PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "span lost"),
    }
}
