//! Deterministic word-level masked model.
//!
//! Vocabulary: five specials (`[PAD]` 0, `[UNK]` 1, `[CLS]` 2, `[SEP]` 3,
//! `[MASK]` 4) followed by the sorted lowercased corpus and lexicon words.
//! With `W` words, corpus size `N`, unigram counts `c(w)` and bigram counts
//! `c(a,b)`:
//!
//! - `uni(w) = (c(w)+1) / (N+W)`
//! - `left(p,w) = (c(p,w)+1) / (Σ_x c(p,x) + W)`
//! - `right(w,n) = (c(w,n)+1) / (Σ_x c(x,n) + W)`
//!
//! A masked position with word neighbours `p` and `n` gets
//! `0.5·uni + 0.25·left + 0.25·right`. A missing or non-word neighbour hands
//! its quarter to `uni`. Each bigram quarter is carried by the heads; masking
//! `m` of `H` heads scales both quarters by `(H−m)/H` and gives the rest to
//! `uni` as well.
//!
//! Attention of head `e = layer·heads + head` from query `q` to `j` is
//! proportional to `(1+|q−j|)^-(1+e)`; a masked head attends uniformly.
//! Sequence scores sum `ln uni(w)` over word tokens. Hidden features are
//! splitmix64-derived values in `[-1,1)`, max-pooled over positions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{AdapterInfo, AttentionWeights, BridgeError, Capabilities, HeadId, LanguageModel, MaskQuery, TokenizedContext, TruncatedDistribution};
use crate::lexicon::LexiconBundle;
use crate::schema::Span;
use crate::seed::splitmix64;

pub const BUILTIN_CORPUS: &str = include_str!("../../resources/toy/corpus.txt");

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
const FIRST_WORD: u32 = SPECIALS.len() as u32;
const FEATURE_SALT: u64 = 0x7779_6e6f_7072_6f62;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { layers: 2, heads: 2, hidden: 16 }
    }
}

impl ToyConfig {
    pub fn locator(&self) -> String {
        format!("builtin:toy?layers={}&heads={}&hidden={}", self.layers, self.heads, self.hidden)
    }
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    info: AdapterInfo,
    vocab: Vec<String>,
    index: BTreeMap<String, u32>,
    unigram: Vec<u64>,
    total: u64,
    /// `follows[p]`: counts of words right after `p`.
    follows: Vec<BTreeMap<u32, u64>>,
    /// `precedes[n]`: counts of words right before `n`.
    precedes: Vec<BTreeMap<u32, u64>>,
    follows_total: Vec<u64>,
    precedes_total: Vec<u64>,
}

impl ToyModel {
    /// Bundled corpus plus every lexicon word.
    pub fn builtin(cfg: ToyConfig) -> Self {
        let lex = LexiconBundle::builtin();
        let extra = lex.words();
        Self::from_corpus(BUILTIN_CORPUS, extra.iter().map(String::as_str), cfg)
    }

    /// One sentence per line, whitespace-separated tokens. `extra` words join
    /// the vocabulary with zero counts.
    pub fn from_corpus<'a>(corpus: &str, extra: impl IntoIterator<Item = &'a str>, cfg: ToyConfig) -> Self {
        let lines: Vec<Vec<String>> =
            corpus.lines().map(|l| l.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>()).filter(|l| !l.is_empty()).collect();
        let mut words: BTreeSet<String> = lines.iter().flatten().cloned().collect();
        words.extend(extra.into_iter().map(str::to_lowercase).filter(|w| !w.is_empty()));
        for s in SPECIALS {
            words.remove(s);
        }
        let vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(words).collect();
        let index: BTreeMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let v = vocab.len();
        let mut m = ToyModel {
            info: AdapterInfo {
                id: cfg.locator(),
                protocol: super::PROTOCOL_VERSION,
                vocab_size: v,
                layers: cfg.layers,
                heads: cfg.heads,
                hidden_size: cfg.hidden,
                mask_token: MASK,
                cls_token: Some(CLS),
                sep_token: Some(SEP),
                capabilities: Capabilities::all(),
            },
            vocab,
            index,
            unigram: vec![0; v],
            total: 0,
            follows: vec![BTreeMap::new(); v],
            precedes: vec![BTreeMap::new(); v],
            follows_total: vec![0; v],
            precedes_total: vec![0; v],
        };
        for line in &lines {
            let ids: Vec<u32> = line.iter().map(|w| m.index[w]).collect();
            for &id in &ids {
                m.unigram[id as usize] += 1;
                m.total += 1;
            }
            for pair in ids.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                *m.follows[a as usize].entry(b).or_default() += 1;
                *m.precedes[b as usize].entry(a).or_default() += 1;
                m.follows_total[a as usize] += 1;
                m.precedes_total[b as usize] += 1;
            }
        }
        m
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token_id(&self, word: &str) -> Option<u32> {
        self.index.get(&word.to_lowercase()).copied().filter(|&i| i >= FIRST_WORD)
    }

    /// Number of non-special words.
    pub fn word_count(&self) -> usize {
        self.vocab.len() - SPECIALS.len()
    }

    pub fn corpus_size(&self) -> u64 {
        self.total
    }

    pub fn count(&self, id: u32) -> u64 {
        self.unigram[id as usize]
    }

    pub fn bigram_count(&self, a: u32, b: u32) -> u64 {
        self.follows[a as usize].get(&b).copied().unwrap_or(0)
    }

    pub fn unigram_prob(&self, id: u32) -> f64 {
        (self.unigram[id as usize] + 1) as f64 / (self.total + self.word_count() as u64) as f64
    }

    fn is_word(id: u32) -> bool {
        id >= FIRST_WORD
    }

    fn distribution(&self, tokens: &[u32], pos: usize, context_scale: f64) -> Vec<(u32, f64)> {
        let w = self.word_count() as u64;
        let prev = pos.checked_sub(1).map(|i| tokens[i]).filter(|&t| Self::is_word(t));
        let next = tokens.get(pos + 1).copied().filter(|&t| Self::is_word(t));
        let side = 0.25 * context_scale;
        let wp = if prev.is_some() { side } else { 0.0 };
        let wn = if next.is_some() { side } else { 0.0 };
        let wu = 1.0 - wp - wn;
        let uni_den = (self.total + w) as f64;
        (FIRST_WORD..self.vocab.len() as u32)
            .map(|t| {
                let mut p = wu * (self.unigram[t as usize] + 1) as f64 / uni_den;
                if let Some(a) = prev {
                    let c = self.follows[a as usize].get(&t).copied().unwrap_or(0);
                    p += wp * (c + 1) as f64 / (self.follows_total[a as usize] + w) as f64;
                }
                if let Some(b) = next {
                    let c = self.precedes[b as usize].get(&t).copied().unwrap_or(0);
                    p += wn * (c + 1) as f64 / (self.precedes_total[b as usize] + w) as f64;
                }
                (t, p)
            })
            .collect()
    }

    fn masked_fraction(&self, head_mask: &[HeadId]) -> f64 {
        let distinct: BTreeSet<HeadId> = head_mask.iter().copied().collect();
        distinct.len() as f64 / self.info.head_count() as f64
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), BridgeError> {
        match tokens.iter().find(|&&t| t as usize >= self.vocab.len()) {
            Some(t) => Err(BridgeError::BadRequest(format!("token id {t} outside the vocabulary"))),
            None => Ok(()),
        }
    }

    /// Feature `k` of token `t`.
    pub fn feature(t: u32, k: usize) -> f64 {
        let x = splitmix64((u64::from(t) << 32) ^ (k as u64) ^ FEATURE_SALT);
        (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

impl LanguageModel for ToyModel {
    fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn tokenize(&mut self, words: &[String]) -> Result<TokenizedContext, BridgeError> {
        let mut ctx = TokenizedContext::default();
        for (i, w) in words.iter().enumerate() {
            let id = match self.index.get(&w.to_lowercase()) {
                Some(&id) => id,
                None => {
                    ctx.unknown.push(i);
                    UNK
                }
            };
            ctx.tokens.push(id);
            ctx.alignment.push(Span::new(i, i + 1));
        }
        Ok(ctx)
    }

    fn mask_distributions(&mut self, q: &MaskQuery) -> Result<Vec<TruncatedDistribution>, BridgeError> {
        self.check_tokens(&q.tokens)?;
        self.info.check_heads(&q.head_mask)?;
        let scale = 1.0 - self.masked_fraction(&q.head_mask);
        q.mask_positions
            .iter()
            .map(|&pos| {
                if pos >= q.tokens.len() {
                    return Err(BridgeError::BadRequest(format!("mask position {pos} out of range")));
                }
                Ok(TruncatedDistribution::from_probs(self.distribution(&q.tokens, pos, scale), q.nucleus_p))
            })
            .collect()
    }

    fn sequence_logprob(&mut self, tokens: &[u32]) -> Result<f64, BridgeError> {
        self.check_tokens(tokens)?;
        Ok(tokens.iter().filter(|&&t| Self::is_word(t) || t == UNK).map(|&t| libm::log(self.unigram_prob(t))).sum())
    }

    fn hidden_state(&mut self, tokens: &[u32]) -> Result<Vec<f64>, BridgeError> {
        self.check_tokens(tokens)?;
        if tokens.is_empty() {
            return Err(BridgeError::BadRequest("empty sequence".into()));
        }
        Ok((0..self.info.hidden_size)
            .map(|k| tokens.iter().map(|&t| Self::feature(t, k)).fold(f64::NEG_INFINITY, f64::max))
            .collect())
    }

    fn attention(&mut self, tokens: &[u32], query: Span, head_mask: &[HeadId]) -> Result<AttentionWeights, BridgeError> {
        self.check_tokens(tokens)?;
        self.info.check_heads(head_mask)?;
        let n = tokens.len();
        if !query.is_valid_for(n) {
            return Err(BridgeError::BadRequest("query range out of bounds".into()));
        }
        let masked: BTreeSet<HeadId> = head_mask.iter().copied().collect();
        let (layers, heads) = (self.info.layers, self.info.heads);
        Ok((0..layers)
            .map(|l| {
                (0..heads)
                    .map(|h| {
                        if masked.contains(&HeadId::new(l, h)) {
                            return vec![1.0 / n as f64; n];
                        }
                        let exponent = (1 + l * heads + h) as f64;
                        let mut row = vec![0.0; n];
                        for q in query.start..query.end {
                            let raw: Vec<f64> =
                                (0..n).map(|j| libm::pow(1.0 + q.abs_diff(j) as f64, -exponent)).collect();
                            let z: f64 = raw.iter().sum();
                            for (r, x) in row.iter_mut().zip(raw) {
                                *r += x / z;
                            }
                        }
                        let k = query.len() as f64;
                        row.iter_mut().for_each(|r| *r /= k);
                        row
                    })
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{attention_checked, distributions_checked};
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn tiny() -> ToyModel {
        ToyModel::from_corpus("a b\na c\nb", [], ToyConfig::default())
    }

    #[test]
    fn vocabulary_is_sorted_after_specials() {
        let m = tiny();
        assert_eq!(m.vocab(), &["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "b", "c"]);
        assert_eq!(m.corpus_size(), 5);
        assert_eq!(m.bigram_count(5, 6), 1);
    }

    #[test]
    fn unknown_words_are_reported() {
        let mut m = tiny();
        let ctx = m.tokenize(&words("a zebra b")).unwrap();
        assert_eq!(ctx.tokens, vec![5, UNK, 6]);
        assert_eq!(ctx.unknown, vec![1]);
        assert!(m.tokenize(&[]).unwrap().tokens.is_empty());
    }

    #[test]
    fn mask_distribution_by_hand() {
        // N = 5, W = 3; counts a:2 b:2 c:1; a is followed by b and c.
        let mut m = tiny();
        let q = MaskQuery { tokens: vec![5, MASK], mask_positions: vec![1], ..MaskQuery::default() };
        let d = &distributions_checked(&mut m, &q).unwrap()[0];
        let uni = |c: f64| (c + 1.0) / 8.0;
        let left = |c: f64| (c + 1.0) / 5.0;
        let pb = 0.75 * uni(2.0) + 0.25 * left(1.0);
        let pa = 0.75 * uni(2.0) + 0.25 * left(0.0);
        let pc = 0.75 * uni(1.0) + 0.25 * left(1.0);
        assert_eq!(d.prob(6), pb);
        assert_eq!(d.prob(5), pa);
        assert_eq!(d.prob(7), pc);
        assert_eq!(d.tail_mass, 0.0);
        assert_eq!(d.entries[0].0, 6);
    }

    #[test]
    fn masking_every_head_leaves_the_unigram() {
        let mut m = tiny();
        let all = m.info().all_heads();
        let q = MaskQuery { tokens: vec![5, MASK, 6], mask_positions: vec![1], head_mask: all, nucleus_p: None };
        let d = &m.mask_distributions(&q).unwrap()[0];
        assert_eq!(d.prob(7), m.unigram_prob(7));
        let empty = MaskQuery { head_mask: vec![], ..q.clone() };
        let none = MaskQuery { tokens: q.tokens.clone(), mask_positions: vec![1], ..MaskQuery::default() };
        assert_eq!(m.mask_distributions(&empty).unwrap(), m.mask_distributions(&none).unwrap());
    }

    #[test]
    fn sequence_score_sums_unigram_logs() {
        let mut m = tiny();
        let s = m.sequence_logprob(&[CLS, 5, 7, SEP]).unwrap();
        assert!((s - (libm::log(3.0 / 8.0) + libm::log(2.0 / 8.0))).abs() < 1e-15);
        assert_eq!(m.sequence_logprob(&[]).unwrap(), 0.0);
        assert!(m.sequence_logprob(&[7]).unwrap() < m.sequence_logprob(&[5]).unwrap());
    }

    #[test]
    fn attention_inverse_distance() {
        let mut m = tiny();
        let w = attention_checked(&mut m, &[5, 6, 7], Span::new(0, 1), &[]).unwrap();
        let z = 1.0 + 0.5 + 1.0 / 3.0;
        assert!((w[0][0][1] - 0.5 / z).abs() < 1e-15);
        let masked = m.attention(&[5, 6, 7], Span::new(0, 1), &[HeadId::new(0, 0)]).unwrap();
        assert_eq!(masked[0][0], vec![1.0 / 3.0; 3]);
        assert_eq!(masked[1][1], w[1][1]);
    }

    #[test]
    fn hidden_state_is_order_free() {
        let mut m = tiny();
        let a = m.hidden_state(&[5, 6, 7]).unwrap();
        assert_eq!(a, m.hidden_state(&[7, 5, 6]).unwrap());
        assert_eq!(a.len(), 16);
        let single = m.hidden_state(&[6]).unwrap();
        assert_eq!(single[3], ToyModel::feature(6, 3));
    }

    #[test]
    fn builtin_covers_lexicon_names() {
        let m = ToyModel::builtin(ToyConfig::default());
        for w in ["johnny", "andrew", "lucy", "emma", "sid", "trophy", "diligently"] {
            assert!(m.token_id(w).is_some(), "{w}");
        }
    }
}
