//! Gender: names are redrawn from the opposite pool, gendered nouns swapped,
//! and gendered pronouns flipped.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::pronoun::{case_at, readings, render_like, PronounClass};
use super::{blocked, draw_name, finalize, mentions, names_present, PerturbOutcome, SkipReason};
use crate::lexicon::LexiconBundle;
use crate::rewrite::{rebuild, Rewriter};
use crate::schema::{PerturbationKind, SchemaInstance};
use crate::seed;

pub fn perturb_gender(inst: &SchemaInstance, lex: &LexiconBundle, seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::Gender;
    let fail = |detail: String| PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, detail);
    if blocked(inst, kind) {
        return fail("gender change blocked".into());
    }
    let links: BTreeMap<usize, _> = inst.annotations.pronouns.iter().map(|p| (p.token, *p)).collect();
    let flips_pronoun = |i: usize| {
        readings(&inst.tokens[i]).is_some_and(|(c, _)| matches!(c, PronounClass::Masculine | PronounClass::Feminine))
            && !matches!(links.get(&i), Some(l) if l.referent.is_none())
    };
    let gendered_referent = inst.referents.iter().any(|r| r.gender.opposite().is_some());
    if !gendered_referent && !(0..inst.tokens.len()).any(flips_pronoun) {
        return PerturbOutcome::skip(SkipReason::NotApplicable, "no gendered referent or pronoun");
    }

    let mut rng = seed::rng_for(seed);
    let mut exclude = names_present(inst, lex);
    let mut rw = Rewriter::new(&inst.tokens);
    let mut new_gender = [inst.referents[0].gender, inst.referents[1].gender];
    for r in 0..2 {
        let re = &inst.referents[r];
        let Some(target) = re.gender.opposite() else { continue };
        let words = &inst.tokens[re.span.start..re.span.end];
        // Edits relative to the referent start.
        let mut edits: Vec<(usize, usize, Vec<String>)> = Vec::new();
        for (k, w) in words.iter().enumerate() {
            if let Some((swap, _)) = lex.gender_counterpart(w) {
                edits.push((k, k + 1, vec![swap]));
            }
        }
        if edits.is_empty() && re.is_name {
            let Some(name) = draw_name(lex, target, &exclude, &mut rng) else {
                return fail("name pool exhausted".into());
            };
            exclude.insert(name.to_lowercase());
            edits.push((0, words.len(), vec![name]));
        }
        if edits.is_empty() {
            return fail(format!("no counterpart for {:?}", re.surface));
        }
        let mut starts = vec![re.span.start];
        starts.extend(mentions(inst, r));
        for start in starts {
            for (a, b, toks) in &edits {
                if !rw.replace(start + a, start + b, toks.clone()) {
                    return fail("overlapping referent mentions".into());
                }
            }
        }
        new_gender[r] = target;
    }

    for i in 0..inst.tokens.len() {
        if rw.is_edited(i) || !flips_pronoun(i) {
            continue;
        }
        let tok = &inst.tokens[i];
        let Some((class, _)) = readings(tok) else { continue };
        let flipped = if class == PronounClass::Masculine { PronounClass::Feminine } else { PronounClass::Masculine };
        let Some(case) = case_at(&inst.tokens, i, links.get(&i).and_then(|l| l.case)) else { continue };
        rw.replace_one(i, render_like(tok, flipped, case));
    }

    match rebuild(inst, &rw.finish()) {
        Some(mut out) => {
            for (r, g) in out.referents.iter_mut().zip(new_gender) {
                r.gender = g;
            }
            finalize(out, kind)
        }
        None => fail("span lost".into()),
    }
}
