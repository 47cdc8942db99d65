//! Voice: active clauses are passivized, passive ones made active.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::pronoun::{readings, render_like};
use super::{blocked, finalize, PerturbOutcome, SkipReason};
use crate::lexicon::{match_case, LexiconBundle, VerbFormKind};
use crate::rewrite::{rebuild, Rewritten};
use crate::schema::{GrammaticalNumber, PerturbationKind, PronounCase, SchemaInstance, Span, Voice, VoiceFrame};

const MODALS: &[&str] = &[
    "could", "couldn't", "can", "can't", "cannot", "will", "won't", "would", "wouldn't", "should", "shouldn't", "might",
    "must", "may",
];
const POSSESSIVE_DETERMINERS: &[&str] = &["his", "her", "their", "its", "my", "our", "your"];

fn pick(n: GrammaticalNumber, sg: &str, pl: &str) -> String {
    if n == GrammaticalNumber::Plural { pl } else { sg }.to_string()
}

fn phrase_number(inst: &SchemaInstance, span: Span, declared: Option<GrammaticalNumber>, lex: &LexiconBundle) -> GrammaticalNumber {
    if let Some(n) = declared {
        return n;
    }
    if let Some(r) = inst.referents.iter().find(|r| span.start <= r.span.start && r.span.end <= span.end) {
        return r.number;
    }
    let head = &inst.tokens[span.end - 1];
    if let Some((class, _)) = readings(head) {
        return class.number();
    }
    if lex.is_plural_noun(head) {
        GrammaticalNumber::Plural
    } else {
        GrammaticalNumber::Singular
    }
}

fn passive_group(v: &[String], n: GrammaticalNumber, lex: &LexiconBundle) -> Option<Vec<String>> {
    let low: Vec<String> = v.iter().map(|w| w.to_lowercase()).collect();
    let pp = |w: &str| lex.verb_base(w).map(|f| f.past_participle.clone());
    Some(match low.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        [w] => {
            if lex.verb_as(w, VerbFormKind::Past).is_some() {
                vec![pick(n, "was", "were"), pp(w)?]
            } else if lex.verb_as(w, VerbFormKind::ThirdSingular).is_some() || lex.verb_as(w, VerbFormKind::Base).is_some() {
                vec![pick(n, "is", "are"), pp(w)?]
            } else {
                return None;
            }
        }
        [aux, w] if MODALS.contains(aux) => vec![aux.to_string(), "be".into(), pp(w)?],
        ["did", w] => vec![pick(n, "was", "were"), pp(w)?],
        ["didn't", w] => vec![pick(n, "wasn't", "weren't"), pp(w)?],
        ["does" | "do", w] => vec![pick(n, "is", "are"), pp(w)?],
        ["doesn't" | "don't", w] => vec![pick(n, "isn't", "aren't"), pp(w)?],
        ["has" | "have", w] => vec![pick(n, "has", "have"), "been".into(), pp(w)?],
        ["hasn't" | "haven't", w] => vec![pick(n, "hasn't", "haven't"), "been".into(), pp(w)?],
        ["had" | "hadn't", w] => vec![low[0].clone(), "been".into(), pp(w)?],
        ["was" | "were", w] if lex.verb_as(w, VerbFormKind::PresentParticiple).is_some() => {
            vec![pick(n, "was", "were"), "being".into(), pp(w)?]
        }
        ["is" | "are", w] if lex.verb_as(w, VerbFormKind::PresentParticiple).is_some() => {
            vec![pick(n, "is", "are"), "being".into(), pp(w)?]
        }
        _ => return None,
    })
}

fn active_group(v: &[String], n: GrammaticalNumber, lex: &LexiconBundle) -> Option<Vec<String>> {
    let low: Vec<String> = v.iter().map(|w| w.to_lowercase()).collect();
    let from_pp = |w: &str| lex.verb_as(w, VerbFormKind::PastParticiple);
    Some(match low.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["was" | "were", w] => vec![from_pp(w)?.past.clone()],
        ["is" | "are", w] => {
            let f = from_pp(w)?;
            vec![pick(n, &f.third_singular, &f.base)]
        }
        ["wasn't" | "weren't", w] => vec!["didn't".into(), from_pp(w)?.base.clone()],
        ["isn't" | "aren't", w] => vec![pick(n, "doesn't", "don't"), from_pp(w)?.base.clone()],
        [m, "be", w] if MODALS.contains(m) => vec![m.to_string(), from_pp(w)?.base.clone()],
        ["has" | "have", "been", w] => vec![pick(n, "has", "have"), w.to_string()],
        ["had", "been", w] => vec!["had".into(), w.to_string()],
        ["was" | "were", "being", w] => vec![pick(n, "was", "were"), from_pp(w)?.present_participle.clone()],
        ["is" | "are", "being", w] => vec![pick(n, "is", "are"), from_pp(w)?.present_participle.clone()],
        _ => return None,
    })
}

/// A lone pronoun phrase re-cased; any other phrase unchanged.
fn recase(words: &[String], case: PronounCase) -> Vec<String> {
    if let [w] = words {
        if let Some((class, _)) = readings(w) {
            return vec![render_like(w, class, case)];
        }
    }
    words.to_vec()
}

struct Builder {
    out: Rewritten,
}

impl Builder {
    fn push(&mut self, tokens: Vec<String>, origin: impl Fn(usize) -> Option<usize>) -> Span {
        let start = self.out.tokens.len();
        for (k, t) in tokens.into_iter().enumerate() {
            self.out.tokens.push(t);
            self.out.origin.push(origin(k));
            self.out.tags.push(None);
        }
        Span::new(start, self.out.tokens.len())
    }
}

pub fn perturb_voice(inst: &SchemaInstance, lex: &LexiconBundle, _seed: u64) -> PerturbOutcome {
    let kind = PerturbationKind::Voice;
    let fail = |detail: &str| PerturbOutcome::skip(SkipReason::SemanticsNotPreserved, detail);
    if blocked(inst, kind) {
        return fail("argument structure blocks a voice change");
    }
    let Some(frame) = inst.annotations.voice_frame else {
        return fail("no argument frame annotated");
    };
    let t = &inst.tokens;
    let (s, v, c) = (frame.subject, frame.verb, frame.complement);
    let voice = inst.annotations.voice;
    let words = |sp: Span| t[sp.start..sp.end].to_vec();
    let mut b = Builder { out: Rewritten { tokens: Vec::new(), origin: Vec::new(), tags: Vec::new() } };
    b.push(words(Span::new(0, s.start)), Some);

    let (new_subject, new_verb, new_complement, rest) = match voice {
        Voice::Active => {
            if s.end != v.start || v.end != c.start {
                return fail("frame is not subject-verb-object");
            }
            let n = phrase_number(inst, c, frame.complement_number, lex);
            let Some(group) = passive_group(&t[v.start..v.end], n, lex) else {
                return fail("verb group cannot be passivized");
            };
            let mut object = recase(&words(c), PronounCase::Subject);
            if object.len() > 1 && POSSESSIVE_DETERMINERS.contains(&object[0].to_lowercase().as_str()) {
                object[0] = match_case(&object[0], "the");
            }
            let ns = b.push(object, |k| Some(c.start + k));
            let nv = b.push(group, |k| Some(v.start + k.min(v.len() - 1)));
            b.push(vec!["by".into()], |_| None);
            let nc = b.push(recase(&words(s), PronounCase::Object), |k| Some(s.start + k));
            (ns, nv, nc, c.end)
        }
        Voice::Passive => {
            if s.end != v.start || t.get(v.end).is_none_or(|w| !w.eq_ignore_ascii_case("by")) || c.start != v.end + 1 {
                return fail("frame is not subject-verb-by-agent");
            }
            let n = phrase_number(inst, c, frame.complement_number, lex);
            let Some(group) = active_group(&t[v.start..v.end], n, lex) else {
                return fail("verb group cannot be made active");
            };
            let ns = b.push(recase(&words(c), PronounCase::Subject), |k| Some(c.start + k));
            let nv = b.push(group, |k| Some(v.start + k.min(v.len() - 1)));
            let nc = b.push(recase(&words(s), PronounCase::Object), |k| Some(s.start + k));
            (ns, nv, nc, c.end)
        }
    };
    b.push(words(Span::new(rest, t.len())), |k| Some(rest + k));

    let Some(mut out) = rebuild(inst, &b.out) else {
        return fail("span lost");
    };
    let a = &mut out.annotations;
    a.voice = match voice {
        Voice::Active => Voice::Passive,
        Voice::Passive => Voice::Active,
    };
    a.voice_frame = Some(VoiceFrame {
        subject: new_subject,
        verb: new_verb,
        complement: new_complement,
        complement_number: Some(phrase_number(inst, s, None, lex)),
    });
    a.agreement.retain(|l| !new_verb.contains(l.token));
    let tokens = &out.tokens;
    a.pronouns.retain(|p| readings(&tokens[p.token]).is_some());
    for p in &mut a.pronouns {
        if let (Some(case), Some((_, cases))) = (p.case, readings(&tokens[p.token])) {
            if !cases.contains(&case) {
                p.case = None;
            }
        }
    }
    if a.main_verb_spans.iter().any(|m| m.overlaps(&v)) {
        a.main_verb_spans.retain(|m| !m.overlaps(&new_verb));
        a.main_verb_spans.push(new_verb);
        a.main_verb_spans.sort();
    }
    finalize(out, kind)
}
