//! Synonym/name substitution for both referents.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{blocked, draw_name, finalize, mentions, names_present, phrase, PerturbOutcome, SkipReason};
use crate::lexicon::LexiconBundle;
use crate::rewrite::{rebuild, Rewriter};
use crate::schema::{Gender, PerturbationKind, SchemaInstance};
use crate::seed;
use crate::text;

/// Replaces each referent (and its other mentions) with its annotated synonym,
/// or a same-gender name drawn from the pool for names. A referent with
/// neither is left alone; the instance is skipped only if neither referent
/// can be replaced.
pub fn substitute_referents(inst: &SchemaInstance, lex: &LexiconBundle, seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::SynonymName;
    if blocked(inst, kind) {
        return PerturbOutcome::skip(SkipReason::NoSynonymAvailable, "substitution blocked");
    }
    let mut rng = seed::rng_for(seed);
    let mut exclude = names_present(inst, lex);
    let mut rw = Rewriter::new(&inst.tokens);
    let mut replaced = 0;
    for r in 0..2 {
        let re = &inst.referents[r];
        let first = &inst.tokens[re.span.start];
        let replacement: Vec<String> = if let Some(s) = &re.synonym {
            let mut p = phrase(s);
            // Common nouns are lowercased; sentence case is restored afterwards.
            if let Some(w) = p.first_mut().filter(|_| !re.is_name) {
                *w = text::decapitalize(w);
            }
            p
        } else if re.is_name {
            let gender = match re.gender {
                Gender::Masculine | Gender::Feminine => Some(re.gender),
                _ => lex.name_gender(first),
            };
            let Some(gender) = gender else { continue };
            let Some(name) = draw_name(lex, gender, &exclude, &mut rng) else { continue };
            exclude.insert(name.to_lowercase());
            vec![name]
        } else {
            continue;
        };
        if replacement.is_empty() {
            continue;
        }
        let mut starts = vec![re.span.start];
        starts.extend(mentions(inst, r));
        for start in starts {
            if !rw.replace(start, start + re.span.len(), replacement.clone()) {
                return PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "overlapping referent mentions");
            }
        }
        replaced += 1;
    }
    if replaced == 0 {
        let detail = format!("no synonym or name for {:?} or {:?}", inst.referents[0].surface, inst.referents[1].surface);
        return PerturbOutcome::skip(SkipReason::NoSynonymAvailable, detail);
    }
    match rebuild(inst, &rw.finish()) {
        Some(mut out) => {
            for r in &mut out.referents {
                r.synonym = None;
            }
            finalize(out, kind)
        }
        None => PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, "span lost"),
    }
}
