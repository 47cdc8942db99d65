//! Language-model adapter contract.
//!
//! Adapters expose tokenization, masked-position distributions, sequence
//! scores, pooled hidden states and attention weights. The built-in
//! [`toy::ToyModel`] implements all of them deterministically.

pub mod toy;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::Span;

pub const PROTOCOL_VERSION: u32 = 1;
pub const PROB_TOLERANCE: f64 = 1e-6;
/// Slack for cumulative sums reaching the nucleus threshold
/// (`0.6 + 0.3` must reach `0.9`).
pub const NUCLEUS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        HeadId { layer, head }
    }
}

impl From<[usize; 2]> for HeadId {
    fn from([layer, head]: [usize; 2]) -> Self {
        HeadId { layer, head }
    }
}

impl From<HeadId> for [usize; 2] {
    fn from(h: HeadId) -> Self {
        [h.layer, h.head]
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub distributions: bool,
    pub sequence_score: bool,
    pub hidden_states: bool,
    pub attentions: bool,
    pub head_masking: bool,
}

impl Capabilities {
    pub fn all() -> Self {
        Capabilities { distributions: true, sequence_score: true, hidden_states: true, attentions: true, head_masking: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    Distributions,
    SequenceScore,
    HiddenStates,
    Attentions,
    HeadMasking,
}

impl Capability {
    pub fn name(self) -> &'static str {
        match self {
            Capability::Distributions => "distributions",
            Capability::SequenceScore => "sequence_score",
            Capability::HiddenStates => "hidden_states",
            Capability::Attentions => "attentions",
            Capability::HeadMasking => "head_masking",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterInfo {
    pub id: String,
    pub protocol: u32,
    pub vocab_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden_size: usize,
    pub mask_token: u32,
    #[serde(default)]
    pub cls_token: Option<u32>,
    #[serde(default)]
    pub sep_token: Option<u32>,
    pub capabilities: Capabilities,
}

impl AdapterInfo {
    pub fn has(&self, c: Capability) -> bool {
        let caps = &self.capabilities;
        match c {
            Capability::Distributions => caps.distributions,
            Capability::SequenceScore => caps.sequence_score,
            Capability::HiddenStates => caps.hidden_states,
            Capability::Attentions => caps.attentions,
            Capability::HeadMasking => caps.head_masking,
        }
    }

    pub fn require(&self, c: Capability) -> Result<(), BridgeError> {
        if self.has(c) {
            Ok(())
        } else {
            Err(BridgeError::Unsupported(c.name().to_string()))
        }
    }

    pub fn head_count(&self) -> usize {
        self.layers * self.heads
    }

    /// All heads in (layer, head) order.
    pub fn all_heads(&self) -> Vec<HeadId> {
        (0..self.layers).flat_map(|l| (0..self.heads).map(move |h| HeadId::new(l, h))).collect()
    }

    pub fn check_heads(&self, heads: &[HeadId]) -> Result<(), BridgeError> {
        match heads.iter().find(|h| h.layer >= self.layers || h.head >= self.heads) {
            Some(h) => Err(BridgeError::BadRequest(alloc::format!("head {h} outside {}x{}", self.layers, self.heads))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BridgeError {
    #[error("adapter does not support {0}")]
    Unsupported(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("adapter internal error: {0}")]
    Internal(String),
    #[error("word {word:?} is not representable in the model vocabulary")]
    Unrepresentable { word: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("bad adapter locator {0:?}")]
    Locator(String),
    #[error("distribution check failed: {0}")]
    Distribution(String),
}

impl BridgeError {
    /// Wire error code.
    pub fn code(&self) -> &'static str {
        match self {
            BridgeError::Unsupported(_) => "UNSUPPORTED",
            BridgeError::BadRequest(_) | BridgeError::Unrepresentable { .. } => "BAD_REQUEST",
            _ => "INTERNAL",
        }
    }

    pub fn from_wire(code: &str, message: String) -> Self {
        match code {
            "UNSUPPORTED" => BridgeError::Unsupported(message),
            "BAD_REQUEST" => BridgeError::BadRequest(message),
            _ => BridgeError::Internal(message),
        }
    }
}

/// Model tokens plus the word-to-token alignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedContext {
    pub tokens: Vec<u32>,
    pub alignment: Vec<Span>,
    /// Word indices the adapter could not represent faithfully.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown: Vec<usize>,
}

impl TokenizedContext {
    /// Model-token range covering words `span.start..span.end`.
    pub fn token_span(&self, words: Span) -> Span {
        Span::new(self.alignment[words.start].start, self.alignment[words.end - 1].end)
    }

    pub fn check(&self, word_count: usize) -> Result<(), BridgeError> {
        if self.alignment.len() != word_count {
            return Err(BridgeError::Protocol(alloc::format!(
                "alignment covers {} of {word_count} words",
                self.alignment.len()
            )));
        }
        let mut next = 0;
        for (w, a) in self.alignment.iter().enumerate() {
            if a.start != next || a.end <= a.start {
                return Err(BridgeError::Protocol(alloc::format!("alignment of word {w} is not contiguous")));
            }
            next = a.end;
        }
        if next != self.tokens.len() {
            return Err(BridgeError::Protocol("alignment does not cover the token list".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskQuery {
    pub tokens: Vec<u32>,
    pub mask_positions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub head_mask: Vec<HeadId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nucleus_p: Option<f64>,
}

/// Descending (token, probability) entries with the mass cut off below them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDistribution {
    pub entries: Vec<(u32, f64)>,
    pub tail_mass: f64,
}

impl TruncatedDistribution {
    /// Sorts a full distribution (descending probability, ascending id on
    /// ties) and keeps the minimal prefix reaching `p`. Zero entries are
    /// dropped.
    pub fn from_probs(probs: impl IntoIterator<Item = (u32, f64)>, nucleus_p: Option<f64>) -> Self {
        let mut entries: Vec<(u32, f64)> = probs.into_iter().filter(|e| e.1 > 0.0).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = entries.iter().map(|e| e.1).sum();
        let mut d = TruncatedDistribution { entries, tail_mass: 0.0 };
        if let Some(p) = nucleus_p.filter(|p| *p < 1.0) {
            let keep = nucleus_len(&d.entries, p);
            let kept: f64 = d.entries[..keep].iter().map(|e| e.1).sum();
            d.entries.truncate(keep);
            d.tail_mass = (total - kept).max(0.0);
        }
        d
    }

    pub fn prob(&self, token: u32) -> f64 {
        self.entries.iter().find(|e| e.0 == token).map_or(0.0, |e| e.1)
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Entries rescaled to sum to one; the tail is dropped.
    pub fn renormalized(&self) -> Vec<(u32, f64)> {
        let m = self.mass();
        self.entries.iter().map(|&(t, p)| (t, p / m)).collect()
    }

    /// Checks positivity, ordering, total mass and, when `nucleus_p` was
    /// requested, the minimal-prefix property.
    pub fn verify(&self, nucleus_p: Option<f64>) -> Result<(), BridgeError> {
        let bad = |m: &str| Err(BridgeError::Distribution(m.into()));
        if self.entries.iter().any(|e| !(e.1 > 0.0) || !e.1.is_finite()) {
            return bad("non-positive probability");
        }
        if !(self.tail_mass >= 0.0) {
            return bad("negative tail mass");
        }
        if self.entries.windows(2).any(|w| w[0].1 < w[1].1 || (w[0].1 == w[1].1 && w[0].0 > w[1].0)) {
            return bad("entries not sorted");
        }
        let total = self.mass() + self.tail_mass;
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return bad("mass does not sum to one");
        }
        match nucleus_p {
            Some(p) if p < 1.0 => {
                let n = self.entries.len();
                let cum = self.mass();
                let before: f64 = self.entries[..n.saturating_sub(1)].iter().map(|e| e.1).sum();
                if n == 0 || cum < p - PROB_TOLERANCE || (n > 1 && before >= p + PROB_TOLERANCE) {
                    return bad("entries are not the minimal nucleus prefix");
                }
            }
            _ if self.tail_mass > PROB_TOLERANCE => return bad("tail mass without truncation"),
            _ => {}
        }
        Ok(())
    }
}

/// Length of the minimal descending prefix whose cumulative mass reaches `p`.
pub fn nucleus_len(sorted: &[(u32, f64)], p: f64) -> usize {
    let mut cum = 0.0;
    for (i, e) in sorted.iter().enumerate() {
        cum += e.1;
        if cum + NUCLEUS_EPS >= p {
            return i + 1;
        }
    }
    sorted.len()
}

/// `weights[layer][head][position]`
pub type AttentionWeights = Vec<Vec<Vec<f64>>>;

/// A language model behind the adapter protocol.
pub trait LanguageModel {
    fn info(&self) -> &AdapterInfo;

    fn tokenize(&mut self, words: &[String]) -> Result<TokenizedContext, BridgeError>;

    fn mask_distributions(&mut self, q: &MaskQuery) -> Result<Vec<TruncatedDistribution>, BridgeError>;

    /// Log-probability score of a token sequence; higher is more probable.
    fn sequence_logprob(&mut self, tokens: &[u32]) -> Result<f64, BridgeError>;

    /// Final-layer hidden states max-pooled over positions.
    fn hidden_state(&mut self, tokens: &[u32]) -> Result<Vec<f64>, BridgeError>;

    /// Attention from the query token range (averaged over its tokens) to
    /// every position, per layer and head.
    fn attention(&mut self, tokens: &[u32], query: Span, head_mask: &[HeadId]) -> Result<AttentionWeights, BridgeError>;
}

/// Client-side wrappers that check capabilities and validate responses.
pub fn tokenize_checked(m: &mut dyn LanguageModel, words: &[String]) -> Result<TokenizedContext, BridgeError> {
    let ctx = m.tokenize(words)?;
    ctx.check(words.len())?;
    Ok(ctx)
}

pub fn distributions_checked(m: &mut dyn LanguageModel, q: &MaskQuery) -> Result<Vec<TruncatedDistribution>, BridgeError> {
    let info = m.info();
    info.require(Capability::Distributions)?;
    if !q.head_mask.is_empty() {
        info.require(Capability::HeadMasking)?;
        info.check_heads(&q.head_mask)?;
    }
    if let Some(p) = q.nucleus_p {
        if !(p > 0.0 && p <= 1.0) {
            return Err(BridgeError::BadRequest(alloc::format!("nucleus_p {p} outside (0,1]")));
        }
    }
    if let Some(&bad) = q.mask_positions.iter().find(|&&i| i >= q.tokens.len()) {
        return Err(BridgeError::BadRequest(alloc::format!("mask position {bad} outside {} tokens", q.tokens.len())));
    }
    let out = m.mask_distributions(q)?;
    if out.len() != q.mask_positions.len() {
        return Err(BridgeError::Protocol("one distribution per mask position expected".into()));
    }
    for d in &out {
        d.verify(q.nucleus_p)?;
    }
    Ok(out)
}

pub fn sequence_logprob_checked(m: &mut dyn LanguageModel, tokens: &[u32]) -> Result<f64, BridgeError> {
    m.info().require(Capability::SequenceScore)?;
    let s = m.sequence_logprob(tokens)?;
    if !s.is_finite() {
        return Err(BridgeError::Protocol("non-finite sequence score".into()));
    }
    Ok(s)
}

pub fn hidden_state_checked(m: &mut dyn LanguageModel, tokens: &[u32]) -> Result<Vec<f64>, BridgeError> {
    m.info().require(Capability::HiddenStates)?;
    let size = m.info().hidden_size;
    let v = m.hidden_state(tokens)?;
    if v.len() != size {
        return Err(BridgeError::Protocol(alloc::format!("hidden vector of length {} (advertised {size})", v.len())));
    }
    Ok(v)
}

pub fn attention_checked(
    m: &mut dyn LanguageModel,
    tokens: &[u32],
    query: Span,
    head_mask: &[HeadId],
) -> Result<AttentionWeights, BridgeError> {
    let info = m.info();
    info.require(Capability::Attentions)?;
    if !head_mask.is_empty() {
        info.require(Capability::HeadMasking)?;
        info.check_heads(head_mask)?;
    }
    if !query.is_valid_for(tokens.len()) {
        return Err(BridgeError::BadRequest("query range outside the token list".into()));
    }
    let (layers, heads) = (info.layers, info.heads);
    let w = m.attention(tokens, query, head_mask)?;
    let shape_ok = w.len() == layers && w.iter().all(|l| l.len() == heads && l.iter().all(|r| r.len() == tokens.len()));
    if !shape_ok {
        return Err(BridgeError::Protocol("attention shape differs from the advertised geometry".into()));
    }
    for row in w.iter().flatten() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > PROB_TOLERANCE || row.iter().any(|x| !(*x >= 0.0)) {
            return Err(BridgeError::Protocol("attention row is not a distribution".into()));
        }
    }
    Ok(w)
}

/// Where an adapter lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Locator {
    Toy(toy::ToyConfig),
    /// An external program speaking the line protocol on its standard streams.
    Command(String),
}

impl Locator {
    /// `builtin:toy[?layers=L&heads=H&hidden=D]` or `cmd:<program and args>`.
    pub fn parse(s: &str) -> Result<Locator, BridgeError> {
        let err = || BridgeError::Locator(s.to_string());
        if let Some(rest) = s.strip_prefix("builtin:") {
            let (name, query) = rest.split_once('?').unwrap_or((rest, ""));
            if name != "toy" {
                return Err(err());
            }
            let mut cfg = toy::ToyConfig::default();
            for kv in query.split('&').filter(|kv| !kv.is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(err)?;
                let n: usize = v.parse().map_err(|_| err())?;
                if n == 0 {
                    return Err(err());
                }
                match k {
                    "layers" => cfg.layers = n,
                    "heads" => cfg.heads = n,
                    "hidden" => cfg.hidden = n,
                    _ => return Err(err()),
                }
            }
            Ok(Locator::Toy(cfg))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err(err());
            }
            Ok(Locator::Command(cmd.trim().to_string()))
        } else {
            Err(err())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn nucleus_keeps_crossing_token() {
        let d = TruncatedDistribution::from_probs([(7, 0.1), (3, 0.6), (5, 0.3)], Some(0.9));
        assert_eq!(d.entries, vec![(3, 0.6), (5, 0.3)]);
        assert!((d.tail_mass - 0.1).abs() < 1e-12);
        d.verify(Some(0.9)).unwrap();
        let full = TruncatedDistribution::from_probs([(7, 0.1), (3, 0.6), (5, 0.3)], Some(1.0));
        assert_eq!(full.entries.len(), 3);
        assert_eq!(full.tail_mass, 0.0);
    }

    #[test]
    fn ties_sort_by_token_id() {
        let d = TruncatedDistribution::from_probs([(9, 0.25), (2, 0.25), (4, 0.5)], None);
        assert_eq!(d.entries.iter().map(|e| e.0).collect::<Vec<_>>(), vec![4, 2, 9]);
    }

    #[test]
    fn verify_rejects_non_minimal_prefix() {
        let d = TruncatedDistribution { entries: vec![(1, 0.6), (2, 0.35), (3, 0.04)], tail_mass: 0.01 };
        assert!(d.verify(Some(0.9)).is_err());
        let d = TruncatedDistribution { entries: vec![(1, 0.6)], tail_mass: 0.4 };
        assert!(d.verify(Some(0.9)).is_err());
        assert!(d.verify(None).is_err());
    }

    #[test]
    fn locators() {
        match Locator::parse("builtin:toy?layers=2&heads=2").unwrap() {
            Locator::Toy(c) => assert_eq!((c.layers, c.heads), (2, 2)),
            other => panic!("{other:?}"),
        }
        assert_eq!(Locator::parse("cmd:python serve.py").unwrap(), Locator::Command("python serve.py".into()));
        for bad in ["http://x", "builtin:bert", "builtin:toy?layers=0", "builtin:toy?depth=2", "cmd:"] {
            assert!(Locator::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn head_ids_serialize_as_pairs() {
        let h = HeadId::new(1, 3);
        let arr: [usize; 2] = h.into();
        assert_eq!(arr, [1, 3]);
        assert_eq!(alloc::format!("{h}"), "L1H3");
    }
}
