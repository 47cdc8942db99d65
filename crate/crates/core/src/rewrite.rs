//! Token rewriting with span bookkeeping.
//!
//! Every output token records the source token it came from (or none, for
//! inserted material). Source spans map to the tightest output range covering
//! the tokens that originate inside them; inserted tokens at a span boundary
//! stay outside, inserted tokens strictly inside stay inside.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::schema::{AgreementLink, PronounLink, SchemaInstance, Span, VoiceFrame};
use crate::text;

#[derive(Debug, Clone)]
struct Edit {
    start: usize,
    end: usize,
    tokens: Vec<String>,
    tag: Option<String>,
}

/// Collects non-overlapping replacements and insertions over a token list.
#[derive(Debug, Clone)]
pub(crate) struct Rewriter<'a> {
    source: &'a [String],
    edits: Vec<Edit>,
}

/// Output tokens with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Rewritten {
    pub tokens: Vec<String>,
    pub origin: Vec<Option<usize>>,
    pub tags: Vec<Option<String>>,
}

impl<'a> Rewriter<'a> {
    pub fn new(source: &'a [String]) -> Self {
        Rewriter { source, edits: Vec::new() }
    }

    /// Replaces `[start, end)`; returns false if it overlaps an earlier edit.
    pub fn replace(&mut self, start: usize, end: usize, tokens: Vec<String>) -> bool {
        self.push(Edit { start, end, tokens, tag: None })
    }

    pub fn replace_one(&mut self, at: usize, token: impl Into<String>) -> bool {
        self.replace(at, at + 1, alloc::vec![token.into()])
    }

    /// Inserts before source token `at` (`at == len` appends).
    pub fn insert(&mut self, at: usize, tokens: Vec<String>, tag: Option<&str>) -> bool {
        self.push(Edit { start: at, end: at, tokens, tag: tag.map(String::from) })
    }

    pub fn is_edited(&self, i: usize) -> bool {
        self.edits.iter().any(|e| e.start <= i && i < e.end)
    }

    fn push(&mut self, e: Edit) -> bool {
        if e.end < e.start || e.end > self.source.len() {
            return false;
        }
        let clash = self.edits.iter().any(|o| {
            if e.start == e.end || o.start == o.end {
                false
            } else {
                e.start < o.end && o.start < e.end
            }
        });
        if clash {
            return false;
        }
        self.edits.push(e);
        true
    }

    pub fn finish(mut self) -> Rewritten {
        // Insertions at a position come before a replacement starting there.
        self.edits.sort_by_key(|e| (e.start, e.end != e.start));
        let mut out = Rewritten { tokens: Vec::new(), origin: Vec::new(), tags: Vec::new() };
        let mut edits = self.edits.into_iter().peekable();
        let mut i = 0;
        while i <= self.source.len() {
            while let Some(e) = edits.next_if(|e| e.start == i && e.end == i) {
                for t in e.tokens {
                    out.tokens.push(t);
                    out.origin.push(None);
                    out.tags.push(e.tag.clone());
                }
            }
            if i == self.source.len() {
                break;
            }
            if let Some(e) = edits.next_if(|e| e.start == i) {
                let width = e.end - e.start;
                for (j, t) in e.tokens.into_iter().enumerate() {
                    out.tokens.push(t);
                    out.origin.push(Some(e.start + j.min(width - 1)));
                    out.tags.push(None);
                }
                i = e.end;
            } else {
                out.tokens.push(self.source[i].clone());
                out.origin.push(Some(i));
                out.tags.push(None);
                i += 1;
            }
        }
        out
    }
}

impl Rewritten {
    /// Output range of a source span, or `None` if every token of it vanished.
    pub fn map_span(&self, s: Span) -> Option<Span> {
        let mut lo = None;
        let mut hi = 0;
        for (k, o) in self.origin.iter().enumerate() {
            if o.is_some_and(|o| s.contains(o)) {
                lo.get_or_insert(k);
                hi = k + 1;
            }
        }
        let lo = lo?;
        let contiguous = self.origin[lo..hi].iter().all(|o| o.is_none_or(|o| s.contains(o)));
        contiguous.then_some(Span::new(lo, hi))
    }

    /// Output position of a source token that maps to exactly one token.
    pub fn map_token(&self, i: usize) -> Option<usize> {
        let s = self.map_span(Span::new(i, i + 1))?;
        (s.len() == 1).then_some(s.start)
    }
}

/// Builds the instance that results from a rewrite: all spans and links are
/// carried over, referent surfaces recomputed, sentence case restored and
/// referents put back into textual order.
///
/// Returns `None` when a required span (pronoun, segment, referent) vanished.
pub(crate) fn rebuild(inst: &SchemaInstance, rw: &Rewritten) -> Option<SchemaInstance> {
    let mut out = inst.clone();
    out.tokens = rw.tokens.clone();
    out.pronoun_span = rw.map_span(inst.pronoun_span)?;
    out.discriminatory_span = rw.map_span(inst.discriminatory_span)?;
    for (r, src) in out.referents.iter_mut().zip(&inst.referents) {
        r.span = rw.map_span(src.span)?;
    }
    let a = &mut out.annotations;
    a.main_verb_spans = inst.annotations.main_verb_spans.iter().filter_map(|s| rw.map_span(*s)).collect();
    a.voice_frame = inst.annotations.voice_frame.and_then(|f| {
        Some(VoiceFrame {
            subject: rw.map_span(f.subject)?,
            verb: rw.map_span(f.verb)?,
            complement: rw.map_span(f.complement)?,
            complement_number: f.complement_number,
        })
    });
    a.pronouns = inst
        .annotations
        .pronouns
        .iter()
        .filter_map(|p| Some(PronounLink { token: rw.map_token(p.token)?, ..*p }))
        .collect();
    a.agreement = inst
        .annotations
        .agreement
        .iter()
        .filter_map(|l| Some(AgreementLink { token: rw.map_token(l.token)?, ..*l }))
        .collect();
    if !inst.annotations.pos.is_empty() {
        a.pos = rw
            .origin
            .iter()
            .zip(&rw.tags)
            .map(|(o, t)| match (o, t) {
                (_, Some(t)) => t.clone(),
                (Some(o), None) => inst.annotations.pos[*o].clone(),
                (None, None) => "X".to_string(),
            })
            .collect();
    }
    finish(&mut out);
    Some(out)
}

/// Restores sentence case, recomputes surfaces and textual referent order.
pub(crate) fn finish(out: &mut SchemaInstance) {
    text::normalize_case(&mut out.tokens);
    if out.referents[0].span.start > out.referents[1].span.start {
        out.referents.swap(0, 1);
        out.correct_index = 1 - out.correct_index;
        for p in &mut out.annotations.pronouns {
            p.referent = p.referent.map(|r| 1 - r);
        }
        for l in &mut out.annotations.agreement {
            l.referent = 1 - l.referent;
        }
    }
    for r in &mut out.referents {
        r.surface = out.tokens[r.span.start..r.span.end].join(" ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::{sid_mark, toks};
    use alloc::vec;

    #[test]
    fn insertion_at_boundary_stays_outside() {
        let src = toks("a b c");
        let mut rw = Rewriter::new(&src);
        assert!(rw.insert(1, toks("x y"), None));
        let out = rw.finish();
        assert_eq!(out.tokens, toks("a x y b c"));
        assert_eq!(out.map_span(Span::new(0, 1)), Some(Span::new(0, 1)));
        assert_eq!(out.map_span(Span::new(1, 3)), Some(Span::new(3, 5)));
        assert_eq!(out.map_span(Span::new(0, 2)), Some(Span::new(0, 4)));
    }

    #[test]
    fn replacement_grows_span() {
        let src = toks("Sid explained it");
        let mut rw = Rewriter::new(&src);
        assert!(rw.replace(0, 1, toks("Sid and Johnny")));
        assert!(rw.replace_one(1, "explains"));
        assert!(!rw.replace(0, 2, vec![]));
        let out = rw.finish();
        assert_eq!(out.map_span(Span::new(0, 1)), Some(Span::new(0, 3)));
        assert_eq!(out.map_token(1), Some(3));
        assert_eq!(out.map_token(0), None);
    }

    #[test]
    fn deletion_drops_span() {
        let src = toks("a big dog");
        let mut rw = Rewriter::new(&src);
        rw.replace(0, 1, vec![]);
        let out = rw.finish();
        assert_eq!(out.tokens, toks("big dog"));
        assert_eq!(out.map_span(Span::new(0, 1)), None);
        assert_eq!(out.map_span(Span::new(0, 3)), Some(Span::new(0, 2)));
    }

    #[test]
    fn rebuild_shifts_everything() {
        let inst = sid_mark();
        let mut rw = Rewriter::new(&inst.tokens);
        rw.insert(1, toks(", who we met ,"), None);
        let out = rebuild(&inst, &rw.finish()).unwrap();
        assert_eq!(out.referents[1].span, Span::new(10, 11));
        assert_eq!(out.pronoun_span, Span::new(12, 13));
        assert_eq!(out.annotations.main_verb_spans, vec![Span::new(6, 7)]);
        out.validate().unwrap();
    }
}
