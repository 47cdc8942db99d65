//! Word-context co-occurrence counting and unigram PMI.
//!
//! Counting follows the hyperwords recipe: words below `min_count` are
//! dropped from the vocabulary but keep their positions; every in-vocabulary
//! target pairs with every in-vocabulary context within `window` tokens.
//! Dynamic windows weight a context at distance `d` by `(window−d+1)/window`;
//! counts are stored multiplied by `window` so they stay integral.
//! Positional contexts key each context word with its signed offset.
//!
//! Queries are unigram: positional contexts are summed over offsets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::{Dataset, PerturbedDataset, SchemaInstance};
use crate::seed::Fingerprint;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmiConfig {
    pub min_count: u64,
    pub window: usize,
    pub dynamic_windows: bool,
    pub positional_contexts: bool,
}

impl Default for PmiConfig {
    fn default() -> Self {
        PmiConfig { min_count: 200, window: 6, dynamic_windows: true, positional_contexts: true }
    }
}

impl PmiConfig {
    pub fn validate(&self) -> Result<(), PmiError> {
        if self.min_count < 1 || self.window < 1 {
            return Err(PmiError::Config(format!("min_count {} and window {} must be at least 1", self.min_count, self.window)));
        }
        Ok(())
    }

    /// Factor between stored integer counts and fractional counts.
    pub fn scale(&self) -> u64 {
        if self.dynamic_windows {
            self.window as u64
        } else {
            1
        }
    }

    fn weight(&self, distance: usize) -> u64 {
        if self.dynamic_windows {
            (self.window - distance + 1) as u64
        } else {
            1
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprint::new();
        f.str("pmi-config")
            .u64(self.min_count)
            .u64(self.window as u64)
            .u64(u64::from(self.dynamic_windows))
            .u64(u64::from(self.positional_contexts));
        f.hex()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PmiError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad PMI configuration: {0}")]
    Config(String),
    #[error("inconsistent table: {0}")]
    Corrupt(String),
    #[error("no aligned instances")]
    EmptyAlignment,
}

/// First pass: raw word frequencies.
#[derive(Debug, Clone, Default)]
pub struct VocabCounter {
    counts: BTreeMap<String, u64>,
    tokens: u64,
}

impl VocabCounter {
    pub fn add_document<S: AsRef<str>>(&mut self, doc: &[S]) {
        for t in doc {
            *self.counts.entry(t.as_ref().to_string()).or_default() += 1;
            self.tokens += 1;
        }
    }

    pub fn merge(&mut self, other: VocabCounter) {
        for (w, c) in other.counts {
            *self.counts.entry(w).or_default() += c;
        }
        self.tokens += other.tokens;
    }

    pub fn tokens(&self) -> u64 {
        self.tokens
    }

    /// Sorted words with at least `min_count` occurrences.
    pub fn vocabulary(&self, min_count: u64) -> Vec<String> {
        self.counts.iter().filter(|(_, &c)| c >= min_count).map(|(w, _)| w.clone()).collect()
    }
}

/// Second pass: scaled (target, context word, offset) counts.
#[derive(Debug, Clone)]
pub struct PairCounter {
    cfg: PmiConfig,
    index: BTreeMap<String, u32>,
    pairs: BTreeMap<(u32, u32, i32), u64>,
}

impl PairCounter {
    pub fn new(cfg: PmiConfig, vocab: &[String]) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        PairCounter { cfg, index, pairs: BTreeMap::new() }
    }

    /// An empty counter over the same vocabulary, for sharding.
    pub fn fork(&self) -> Self {
        PairCounter { cfg: self.cfg, index: self.index.clone(), pairs: BTreeMap::new() }
    }

    pub fn add_document<S: AsRef<str>>(&mut self, doc: &[S]) {
        let ids: Vec<Option<u32>> = doc.iter().map(|t| self.index.get(t.as_ref()).copied()).collect();
        let win = self.cfg.window;
        for (i, w) in ids.iter().enumerate() {
            let Some(w) = *w else { continue };
            let lo = i.saturating_sub(win);
            let hi = (i + win).min(ids.len() - 1);
            for (j, c) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                let Some(c) = *c else { continue };
                if j == i {
                    continue;
                }
                let offset = if self.cfg.positional_contexts { j as i32 - i as i32 } else { 0 };
                *self.pairs.entry((w, c, offset)).or_default() += self.cfg.weight(i.abs_diff(j));
            }
        }
    }

    pub fn merge(&mut self, other: PairCounter) {
        for (k, c) in other.pairs {
            *self.pairs.entry(k).or_default() += c;
        }
    }

    pub fn finish(self) -> Result<CooccurrenceTable, PmiError> {
        let mut vocab: Vec<(u32, String)> = self.index.into_iter().map(|(w, i)| (i, w)).collect();
        vocab.sort();
        let vocab = vocab.into_iter().map(|(_, w)| w).collect();
        CooccurrenceTable::from_parts(self.cfg, vocab, self.pairs.into_iter().map(|((w, c, o), n)| (w, c, o, n)).collect())
    }
}

/// Co-occurrence counts. Stored counts are scaled by `config.scale()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    config: PmiConfig,
    vocab: Vec<String>,
    index: BTreeMap<String, u32>,
    pairs: BTreeMap<(u32, u32, i32), u64>,
    words: Vec<u64>,
    contexts: BTreeMap<(u32, i32), u64>,
    unigram_pairs: BTreeMap<(u32, u32), u64>,
    unigram_contexts: Vec<u64>,
    total: u64,
}

pub fn build_table<S: AsRef<str>>(docs: &[Vec<S>], cfg: PmiConfig) -> Result<CooccurrenceTable, PmiError> {
    cfg.validate()?;
    let mut vc = VocabCounter::default();
    for d in docs {
        vc.add_document(d);
    }
    if vc.tokens() == 0 {
        return Err(PmiError::EmptyCorpus);
    }
    let mut pc = PairCounter::new(cfg, &vc.vocabulary(cfg.min_count));
    for d in docs {
        pc.add_document(d);
    }
    pc.finish()
}

impl CooccurrenceTable {
    /// Rebuilds marginals from sorted vocabulary and scaled pair counts
    /// `(target, context, offset, count)`.
    pub fn from_parts(config: PmiConfig, vocab: Vec<String>, pairs: Vec<(u32, u32, i32, u64)>) -> Result<Self, PmiError> {
        config.validate()?;
        if vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PmiError::Corrupt("vocabulary not strictly sorted".into()));
        }
        let n = vocab.len();
        let mut t = CooccurrenceTable {
            config,
            index: vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect(),
            vocab,
            pairs: BTreeMap::new(),
            words: alloc::vec![0; n],
            contexts: BTreeMap::new(),
            unigram_pairs: BTreeMap::new(),
            unigram_contexts: alloc::vec![0; n],
            total: 0,
        };
        for (w, c, o, count) in pairs {
            if w as usize >= n || c as usize >= n {
                return Err(PmiError::Corrupt(format!("pair ({w},{c}) outside a vocabulary of {n}")));
            }
            if count == 0 {
                continue;
            }
            *t.pairs.entry((w, c, o)).or_default() += count;
            t.words[w as usize] += count;
            *t.contexts.entry((c, o)).or_default() += count;
            *t.unigram_pairs.entry((w, c)).or_default() += count;
            t.unigram_contexts[c as usize] += count;
            t.total += count;
        }
        Ok(t)
    }

    pub fn config(&self) -> &PmiConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    /// Scaled `(target, context, offset, count)` rows in sorted order.
    pub fn scaled_pairs(&self) -> impl Iterator<Item = (u32, u32, i32, u64)> + '_ {
        self.pairs.iter().map(|(&(w, c, o), &n)| (w, c, o, n))
    }

    pub fn pair_rows(&self) -> usize {
        self.pairs.len()
    }

    fn id(&self, w: &str) -> Option<u32> {
        self.index.get(w).copied()
    }

    fn unscale(&self, n: u64) -> f64 {
        n as f64 / self.config.scale() as f64
    }

    /// |D|
    pub fn total(&self) -> f64 {
        self.unscale(self.total)
    }

    /// #(w)
    pub fn word_count(&self, w: &str) -> f64 {
        self.id(w).map_or(0.0, |i| self.unscale(self.words[i as usize]))
    }

    /// #(c), summed over offsets when `offset` is `None`.
    pub fn context_count(&self, c: &str, offset: Option<i32>) -> f64 {
        let Some(i) = self.id(c) else { return 0.0 };
        match offset {
            None => self.unscale(self.unigram_contexts[i as usize]),
            Some(o) => self.unscale(self.contexts.get(&(i, o)).copied().unwrap_or(0)),
        }
    }

    /// #(w,c), summed over offsets when `offset` is `None`.
    pub fn pair_count(&self, w: &str, c: &str, offset: Option<i32>) -> f64 {
        let (Some(a), Some(b)) = (self.id(w), self.id(c)) else { return 0.0 };
        let n = match offset {
            None => self.unigram_pairs.get(&(a, b)).copied().unwrap_or(0),
            Some(o) => self.pairs.get(&(a, b, o)).copied().unwrap_or(0),
        };
        self.unscale(n)
    }

    /// `log2(#(w,c)·|D| / (#(w)·#(c)))` over offset-summed counts; `None`
    /// when the pair never occurs.
    pub fn pmi(&self, w: &str, c: &str) -> Option<f64> {
        let (a, b) = (self.id(w)?, self.id(c)?);
        let joint = *self.unigram_pairs.get(&(a, b))?;
        Some(self.ratio(joint, self.words[a as usize], self.unigram_contexts[b as usize]))
    }

    /// PMI against one positional context.
    pub fn pmi_at(&self, w: &str, c: &str, offset: i32) -> Option<f64> {
        let (a, b) = (self.id(w)?, self.id(c)?);
        let joint = *self.pairs.get(&(a, b, offset))?;
        Some(self.ratio(joint, self.words[a as usize], self.contexts[&(b, offset)]))
    }

    fn ratio(&self, joint: u64, w: u64, c: u64) -> f64 {
        // Scale factors cancel.
        libm::log2(joint as f64 * self.total as f64 / (w as f64 * c as f64))
    }

    /// Mean PMI over every defined (a, b) pair of normalized tokens.
    pub fn avg_pmi<S: AsRef<str>, T: AsRef<str>>(&self, a: &[S], b: &[T]) -> AvgPmi {
        let a = normalize(a);
        let b = normalize(b);
        let mut sum = 0.0;
        let mut defined = 0;
        let mut skipped = 0;
        for x in &a {
            for y in &b {
                match self.pmi(x, y) {
                    Some(v) => {
                        sum += v;
                        defined += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        AvgPmi { value: (defined > 0).then(|| sum / defined as f64), defined, skipped }
    }
}

/// Lowercased tokens with punctuation removed.
pub fn normalize<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref()).filter(|t| !text::is_punct(t)).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvgPmi {
    pub value: Option<f64>,
    pub defined: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Segment,
    Full,
}

impl Scope {
    /// Segment tokens, or every token outside both referent spans.
    pub fn tokens<'a>(&self, inst: &'a SchemaInstance) -> Vec<&'a str> {
        match self {
            Scope::Segment => inst.segment_words().iter().map(String::as_str).collect(),
            Scope::Full => inst
                .tokens
                .iter()
                .enumerate()
                .filter(|(i, _)| inst.referents.iter().all(|r| !r.span.contains(*i)))
                .map(|(_, t)| t.as_str())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta {
    pub value: f64,
    /// Correct and incorrect sides with no defined pair (counted as 0).
    pub undefined: [bool; 2],
}

/// `avg_pmi(correct, scope) − avg_pmi(incorrect, scope)`.
pub fn associativity_delta(inst: &SchemaInstance, table: &CooccurrenceTable, scope: Scope) -> Delta {
    let x = scope.tokens(inst);
    let side = |r: usize| table.avg_pmi(&inst.referents[r].words(), &x).value;
    let c = side(inst.correct_index);
    let i = side(1 - inst.correct_index);
    Delta { value: c.unwrap_or(0.0) - i.unwrap_or(0.0), undefined: [c.is_none(), i.is_none()] }
}

/// Mean of `Δ(perturbed) − Δ(original)` over aligned instances.
pub fn dataset_divergence(orig: &Dataset, pert: &PerturbedDataset, table: &CooccurrenceTable, scope: Scope) -> Result<f64, PmiError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (origin, p) in &pert.instances {
        let Some(o) = orig.get(origin) else { continue };
        sum += associativity_delta(p, table, scope).value - associativity_delta(o, table, scope).value;
        n += 1;
    }
    if n == 0 {
        return Err(PmiError::EmptyAlignment);
    }
    Ok(sum / n as f64)
}

/// Words of a corpus line as used for counting.
pub fn corpus_tokens(line: &str) -> Vec<String> {
    line.split_whitespace().filter(|t| !text::is_punct(t)).map(str::to_lowercase).collect()
}

pub fn vocabulary_set(t: &CooccurrenceTable) -> BTreeSet<&str> {
    t.vocab.iter().map(String::as_str).collect()
}
