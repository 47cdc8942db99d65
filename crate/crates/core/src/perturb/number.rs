//! Number: singular referents become plural and plural ones singular, with
//! pronouns and verb agreement following.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::pronoun::{case_at, readings, render_like, PronounClass};
use super::{blocked, draw_name, finalize, mentions, names_present, PerturbOutcome, SkipReason};
use crate::lexicon::{match_case, LexiconBundle, VerbFormKind};
use crate::rewrite::{rebuild, Rewriter};
use crate::schema::{Gender, GrammaticalNumber, PerturbationKind, PronounCase, SchemaInstance, Tense};
use crate::seed;

/// (singular, plural) forms that agree with their subject.
const AGREEMENT: &[(&str, &str)] = &[
    ("is", "are"),
    ("am", "are"),
    ("was", "were"),
    ("has", "have"),
    ("does", "do"),
    ("isn't", "aren't"),
    ("wasn't", "weren't"),
    ("hasn't", "haven't"),
    ("doesn't", "don't"),
];

const LIGHT_ADVERBS: &[&str] = &["always", "never", "often", "also", "still", "just", "really", "not", "then", "usually"];

type RelEdit = (usize, usize, Vec<String>);

fn reinflect(token: &str, number: GrammaticalNumber, tense: Tense, lex: &LexiconBundle) -> Option<String> {
    let lower = token.to_lowercase();
    if let Some((sg, pl)) = AGREEMENT.iter().find(|(s, p)| *s == lower || *p == lower) {
        let out = if number == GrammaticalNumber::Plural { pl } else { sg };
        return Some(match_case(token, out));
    }
    if tense != Tense::Present {
        return None;
    }
    match number {
        GrammaticalNumber::Plural => lex.verb_as(token, VerbFormKind::ThirdSingular).map(|v| match_case(token, &v.base)),
        GrammaticalNumber::Singular => {
            lex.verb_as(token, VerbFormKind::Base).map(|v| match_case(token, &v.third_singular))
        }
    }
}

fn agrees(token: &str, tense: Tense, lex: &LexiconBundle) -> bool {
    let lower = token.to_lowercase();
    AGREEMENT.iter().any(|(s, p)| *s == lower || *p == lower)
        || (tense == Tense::Present
            && (lex.verb_as(token, VerbFormKind::ThirdSingular).is_some() || lex.verb_as(token, VerbFormKind::Base).is_some()))
}

/// Edits (relative to the referent's first token) that flip its number.
fn referent_edits(
    inst: &SchemaInstance,
    r: usize,
    lex: &LexiconBundle,
    rng: &mut ChaCha8Rng,
    exclude: &mut BTreeSet<String>,
) -> Result<Vec<RelEdit>, String> {
    let re = &inst.referents[r];
    let words = &inst.tokens[re.span.start..re.span.end];
    let last = words.len() - 1;
    if re.is_name {
        return match re.number {
            GrammaticalNumber::Singular => {
                let gender = match re.gender {
                    Gender::Masculine | Gender::Feminine => re.gender,
                    _ => lex.name_gender(&words[0]).ok_or_else(|| format!("no gender for name {:?}", re.surface))?,
                };
                let partner = draw_name(lex, gender, exclude, rng).ok_or("name pool exhausted")?;
                exclude.insert(partner.to_lowercase());
                Ok(vec![(last, last + 1, vec![words[last].clone(), "and".into(), partner])])
            }
            GrammaticalNumber::Plural => match words.iter().position(|w| w == "and") {
                Some(k) if k > 0 => Ok(vec![(k, words.len(), vec![])]),
                _ => Err(format!("cannot singularize name {:?}", re.surface)),
            },
        };
    }
    let mut edits = Vec::new();
    let det = words[0].to_lowercase();
    match re.number {
        GrammaticalNumber::Singular => {
            if words.len() > 1 {
                match det.as_str() {
                    "a" | "an" => edits.push((0, 1, vec![])),
                    "this" => edits.push((0, 1, vec![match_case(&words[0], "these")])),
                    "that" => edits.push((0, 1, vec![match_case(&words[0], "those")])),
                    "one" | "another" | "each" | "every" => return Err(format!("determiner {det:?} fixes number")),
                    _ => {}
                }
            }
            edits.push((last, last + 1, vec![lex.pluralize(&words[last])]));
        }
        GrammaticalNumber::Plural => {
            if words.len() == 1 {
                return Err(format!("bare plural {:?} has no singular determiner", re.surface));
            }
            match det.as_str() {
                "these" => edits.push((0, 1, vec![match_case(&words[0], "this")])),
                "those" => edits.push((0, 1, vec![match_case(&words[0], "that")])),
                "some" | "many" | "several" | "two" | "three" | "both" | "all" => {
                    return Err(format!("determiner {det:?} fixes number"))
                }
                _ => {}
            }
            edits.push((last, last + 1, vec![lex.singularize(&words[last])]));
        }
    }
    Ok(edits)
}

pub fn perturb_number(inst: &SchemaInstance, lex: &LexiconBundle, seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::Number;
    let fail = |detail: String| PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, detail);
    if blocked(inst, kind) {
        return fail("number change blocked".into());
    }
    let mut rng = seed::rng_for(seed);
    let mut exclude = names_present(inst, lex);
    let new_number = [inst.referents[0].number.flipped(), inst.referents[1].number.flipped()];
    let tense = inst.annotations.tense;
    let mut rw = Rewriter::new(&inst.tokens);
    // Positions right after a subject, with the subject's new number.
    let mut subject_ends: Vec<(usize, GrammaticalNumber)> = Vec::new();

    for r in 0..2 {
        let edits = match referent_edits(inst, r, lex, &mut rng, &mut exclude) {
            Ok(e) => e,
            Err(detail) => return fail(detail),
        };
        let len = inst.referents[r].span.len();
        let mut starts = vec![inst.referents[r].span.start];
        starts.extend(mentions(inst, r));
        for start in starts {
            for (a, b, toks) in &edits {
                if !rw.replace(start + a, start + b, toks.clone()) {
                    return fail("overlapping referent mentions".into());
                }
            }
            let end = start + len;
            match (inst.tokens.get(end).map(String::as_str), new_number[r]) {
                (Some("'s"), GrammaticalNumber::Plural) if !inst.referents[r].is_name => {
                    let head = &edits.last().expect("head edit").2[0];
                    if head.ends_with('s') {
                        rw.replace_one(end, "'");
                    }
                }
                (Some("'"), GrammaticalNumber::Singular) => {
                    rw.replace_one(end, "'s");
                }
                _ => {}
            }
            subject_ends.push((end, new_number[r]));
        }
    }

    let links: BTreeMap<usize, _> = inst.annotations.pronouns.iter().map(|p| (p.token, *p)).collect();
    for i in 0..inst.tokens.len() {
        if rw.is_edited(i) {
            continue;
        }
        let tok = &inst.tokens[i];
        let Some((class, _)) = readings(tok) else { continue };
        let link = links.get(&i);
        let targets: Vec<usize> = match link.map(|l| l.referent) {
            Some(None) => continue,
            Some(Some(r)) => vec![r],
            None => (0..2)
                .filter(|&r| class.compatible(inst.referents[r].number, inst.referents[r].gender))
                .collect(),
        };
        if targets.is_empty() {
            continue;
        }
        let classes: Vec<Option<PronounClass>> =
            targets.iter().map(|&r| PronounClass::of(new_number[r], inst.referents[r].gender)).collect();
        let new_class = match classes[0] {
            Some(c) if classes.iter().all(|x| *x == Some(c)) => c,
            _ => return fail(format!("pronoun {tok:?} at {i} has no unambiguous new form")),
        };
        let Some(case) = case_at(&inst.tokens, i, link.and_then(|l| l.case)) else { continue };
        rw.replace_one(i, render_like(tok, new_class, case));
        if case == PronounCase::Subject {
            subject_ends.push((i + 1, new_class.number()));
        }
    }

    let mut agreement: BTreeMap<usize, GrammaticalNumber> = BTreeMap::new();
    for (pos, number) in subject_ends {
        let mut q = pos;
        if inst.tokens.get(q).is_some_and(|t| lex.is_adverb(t) || LIGHT_ADVERBS.contains(&t.to_lowercase().as_str())) {
            q += 1;
        }
        if q < inst.tokens.len() && agrees(&inst.tokens[q], tense, lex) {
            agreement.entry(q).or_insert(number);
        }
    }
    for l in &inst.annotations.agreement {
        agreement.insert(l.token, new_number[l.referent]);
    }
    for (i, number) in agreement {
        if rw.is_edited(i) {
            continue;
        }
        if let Some(t) = reinflect(&inst.tokens[i], number, tense, lex) {
            rw.replace_one(i, t);
        }
    }

    match rebuild(inst, &rw.finish()) {
        Some(mut out) => {
            for (r, n) in out.referents.iter_mut().zip(new_number) {
                r.number = n;
            }
            finalize(out, kind)
        }
        None => fail("span lost".into()),
    }
}
