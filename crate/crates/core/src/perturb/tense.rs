//! Tense: past becomes present continuous, present becomes past.

use alloc::format;
use alloc::string::String;
use alloc::vec;

use super::pronoun::readings;
use super::{blocked, finalize, PerturbOutcome, SkipReason};
use crate::lexicon::{match_case, LexiconBundle, VerbFormKind};
use crate::rewrite::{rebuild, Rewriter};
use crate::schema::{GrammaticalNumber, PerturbationKind, SchemaInstance, Tense};

/// (past, singular present, plural present)
const PAST_TO_PRESENT: &[(&str, &str, &str)] = &[
    ("was", "is", "are"),
    ("were", "is", "are"),
    ("wasn't", "isn't", "aren't"),
    ("weren't", "isn't", "aren't"),
    ("had", "has", "have"),
    ("hadn't", "hasn't", "haven't"),
    ("did", "does", "do"),
    ("didn't", "doesn't", "don't"),
    ("could", "can", "can"),
    ("couldn't", "can't", "can't"),
    ("would", "will", "will"),
    ("wouldn't", "won't", "won't"),
];

/// (present, past)
const PRESENT_TO_PAST: &[(&str, &str)] = &[
    ("is", "was"),
    ("am", "was"),
    ("are", "were"),
    ("isn't", "wasn't"),
    ("aren't", "weren't"),
    ("has", "had"),
    ("have", "had"),
    ("hasn't", "hadn't"),
    ("haven't", "hadn't"),
    ("does", "did"),
    ("do", "did"),
    ("doesn't", "didn't"),
    ("don't", "didn't"),
    ("can", "could"),
    ("can't", "couldn't"),
    ("cannot", "couldn't"),
    ("will", "would"),
    ("won't", "wouldn't"),
];

fn shift_aux(token: &str, from: Tense, number: GrammaticalNumber) -> Option<String> {
    let lower = token.to_lowercase();
    let out = match from {
        Tense::Past => PAST_TO_PRESENT.iter().find(|(p, ..)| *p == lower).map(|(_, sg, pl)| {
            if number == GrammaticalNumber::Plural {
                *pl
            } else {
                *sg
            }
        }),
        Tense::Present => PRESENT_TO_PAST.iter().find(|(p, _)| *p == lower).map(|(_, past)| *past),
    }?;
    Some(match_case(token, out))
}

fn be_present(number: GrammaticalNumber) -> &'static str {
    match number {
        GrammaticalNumber::Singular => "is",
        GrammaticalNumber::Plural => "are",
    }
}

/// Number of the subject governing token `i`: an agreement link, else the
/// nearest referent or third-person pronoun to the left.
fn subject_number(inst: &SchemaInstance, i: usize) -> GrammaticalNumber {
    if let Some(l) = inst.annotations.agreement.iter().find(|l| l.token == i) {
        return inst.referents[l.referent].number;
    }
    for j in (0..i).rev() {
        if let Some(r) = inst.referents.iter().find(|r| r.span.contains(j)) {
            return r.number;
        }
        if let Some((class, _)) = readings(&inst.tokens[j]) {
            return class.number();
        }
    }
    GrammaticalNumber::Singular
}

/// A subject position immediately before `i`: a referent or a subject pronoun.
fn follows_subject(inst: &SchemaInstance, i: usize) -> Option<GrammaticalNumber> {
    let prev = i.checked_sub(1)?;
    if let Some(r) = inst.referents.iter().find(|r| r.span.end == i) {
        return Some(r.number);
    }
    let lower = inst.tokens[prev].to_lowercase();
    match lower.as_str() {
        "he" | "she" | "it" => Some(GrammaticalNumber::Singular),
        "they" | "we" | "you" | "i" => Some(GrammaticalNumber::Plural),
        _ => None,
    }
}

pub fn perturb_tense(inst: &SchemaInstance, lex: &LexiconBundle, _seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::Tense;
    if blocked(inst, kind) {
        return PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "tense frozen");
    }
    let a = &inst.annotations;
    if a.main_verb_spans.is_empty() {
        return PerturbOutcome::skip(SkipReason::NotApplicable, "no main verbs annotated");
    }
    let from = a.tense;
    let mut rw = Rewriter::new(&inst.tokens);
    for s in &a.main_verb_spans {
        let i = s.start;
        let tok = &inst.tokens[i];
        let number = subject_number(inst, i);
        let replaced = if let Some(aux) = shift_aux(tok, from, number) {
            rw.replace_one(i, aux)
        } else {
            match from {
                Tense::Past => match lex.verb_as(tok, VerbFormKind::Past) {
                    Some(v) => rw.replace(
                        i,
                        i + 1,
                        vec![match_case(tok, be_present(number)), v.present_participle.clone()],
                    ),
                    None => {
                        return PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, format!("unknown past verb {tok:?}"))
                    }
                },
                Tense::Present => {
                    let v = lex
                        .verb_as(tok, VerbFormKind::ThirdSingular)
                        .or_else(|| lex.verb_as(tok, VerbFormKind::Base));
                    match v {
                        Some(v) => rw.replace_one(i, match_case(tok, &v.past)),
                        None => {
                            return PerturbOutcome::skip(
                                SkipReason::SemanticsNotPreserved,
                                format!("unknown present verb {tok:?}"),
                            )
                        }
                    }
                }
            }
        };
        if !replaced {
            return PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "overlapping verb spans");
        }
    }
    // Auxiliaries and modals right after a subject shift too ("he couldn't").
    for i in 1..inst.tokens.len() {
        if rw.is_edited(i) || a.main_verb_spans.iter().any(|s| s.contains(i)) {
            continue;
        }
        if let Some(number) = follows_subject(inst, i) {
            if let Some(aux) = shift_aux(&inst.tokens[i], from, number) {
                rw.replace_one(i, aux);
            }
        }
    }
    match rebuild(inst, &rw.finish()) {
        Some(mut out) => {
            out.annotations.tense = match from {
                Tense::Past => Tense::Present,
                Tense::Present => Tense::Past,
            };
            finalize(out, kind)
        }
        None => PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "span lost"),
    }
}
