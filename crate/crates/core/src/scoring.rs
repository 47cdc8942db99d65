//! Candidate scoring and score sets.
//!
//! Mask substitution replaces the pronoun with as many mask tokens as the
//! candidate has model tokens and averages the probabilities the model puts
//! on the candidate's tokens. Context/option scoring fills the blank with the
//! candidate and scores `[CLS] context [SEP] option [SEP]`. The PMI baseline
//! compares average PMI between each candidate and the scope words.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bridge::{distributions_checked, sequence_logprob_checked, tokenize_checked, BridgeError, HeadId, LanguageModel, MaskQuery};
use crate::pmi::{CooccurrenceTable, Scope};
use crate::schema::{Dataset, PerturbedDataset, SchemaInstance};
use crate::seed::Fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    MaskSubstitution,
    ContextOption,
    PmiBaseline,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::MaskSubstitution, Strategy::ContextOption, Strategy::PmiBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MaskSubstitution => "mask_substitution",
            Strategy::ContextOption => "context_option",
            Strategy::PmiBaseline => "pmi_baseline",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected mask_substitution, context_option or pmi_baseline)"))
    }
}

/// How per-token probabilities of a multi-token candidate are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Arithmetic mean of raw probabilities.
    #[default]
    Probability,
    /// Mean of natural-log probabilities.
    LogProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    pub averaging: Averaging,
    pub head_mask: Vec<HeadId>,
    pub pmi_scope: Scope,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { averaging: Averaging::Probability, head_mask: Vec::new(), pmi_scope: Scope::Segment }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("strategy {0} needs a PMI table")]
    NeedsTable(Strategy),
    #[error("strategy {0} needs a language model")]
    NeedsModel(Strategy),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub score: f64,
    pub token_count: usize,
}

/// One scored instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_id: Option<String>,
    pub pair_id: String,
    pub correct: usize,
    pub scores: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_counts: Option<[usize; 2]>,
    pub chosen: usize,
    pub tie: bool,
    /// Candidates without a defined score (scored as 0).
    #[serde(default, skip_serializing_if = "is_none_undefined")]
    pub undefined: [bool; 2],
}

fn is_none_undefined(u: &[bool; 2]) -> bool {
    !u[0] && !u[1]
}

/// Argmax with exact ties going to index 0.
pub fn decide(scores: [f64; 2]) -> (usize, bool) {
    if scores[1] > scores[0] {
        (1, false)
    } else {
        (0, scores[0] == scores[1])
    }
}

/// As [`decide`], but a defined score beats an undefined one; two undefined
/// scores tie at 0.
pub fn decide_partial(scores: [Option<f64>; 2]) -> ([f64; 2], usize, bool) {
    let values = [scores[0].unwrap_or(0.0), scores[1].unwrap_or(0.0)];
    let (chosen, tie) = match scores {
        [Some(_), Some(_)] => decide(values),
        [Some(_), None] => (0, false),
        [None, Some(_)] => (1, false),
        [None, None] => (0, true),
    };
    (values, chosen, tie)
}

impl Prediction {
    pub fn new(inst: &SchemaInstance, origin_id: Option<&str>, scores: [f64; 2]) -> Self {
        let (chosen, tie) = decide(scores);
        Prediction {
            id: inst.id.clone(),
            origin_id: origin_id.map(String::from),
            pair_id: inst.pair_id.clone(),
            correct: inst.correct_index,
            scores,
            token_counts: None,
            chosen,
            tie,
            undefined: [false, false],
        }
    }

    pub fn is_correct(&self) -> bool {
        self.chosen == self.correct
    }

    /// `scores[correct] − scores[incorrect]`
    pub fn margin(&self) -> f64 {
        self.scores[self.correct] - self.scores[1 - self.correct]
    }

    pub fn is_defined(&self) -> bool {
        is_none_undefined(&self.undefined)
    }

    /// Id of the source instance: the origin for perturbed instances.
    pub fn source_id(&self) -> &str {
        self.origin_id.as_deref().unwrap_or(&self.id)
    }
}

fn unrepresentable(words: &[String], unknown: &[usize]) -> BridgeError {
    BridgeError::Unrepresentable { word: words[unknown[0]].clone() }
}

/// Probability of candidate `cand` at the masked pronoun.
pub fn candidate_prob_mask(
    inst: &SchemaInstance,
    cand: usize,
    model: &mut dyn LanguageModel,
    opts: &ScoreOptions,
) -> Result<CandidateScore, BridgeError> {
    let words = &inst.tokens;
    let ctx = tokenize_checked(model, words)?;
    let cand_words = inst.referents[cand].words();
    let cctx = tokenize_checked(model, &cand_words)?;
    if !cctx.unknown.is_empty() {
        return Err(unrepresentable(&cand_words, &cctx.unknown));
    }
    let k = cctx.tokens.len();
    let p = ctx.token_span(inst.pronoun_span);
    let mask = model.info().mask_token;
    let mut tokens = ctx.tokens[..p.start].to_vec();
    tokens.extend(core::iter::repeat_n(mask, k));
    tokens.extend_from_slice(&ctx.tokens[p.end..]);
    let q = MaskQuery { tokens, mask_positions: (p.start..p.start + k).collect(), head_mask: opts.head_mask.clone(), nucleus_p: None };
    let dists = distributions_checked(model, &q)?;
    let probs = dists.iter().zip(&cctx.tokens).map(|(d, &t)| d.prob(t));
    let score = match opts.averaging {
        Averaging::Probability => probs.sum::<f64>() / k as f64,
        Averaging::LogProbability => probs.map(|x| libm::log(x.max(f64::MIN_POSITIVE))).sum::<f64>() / k as f64,
    };
    Ok(CandidateScore { score, token_count: k })
}

/// `[CLS] words-before-blank candidate [SEP] words-after-blank [SEP]`, with
/// the delimiters the adapter advertises.
pub fn context_option_sequence(inst: &SchemaInstance, cand: usize, model: &mut dyn LanguageModel) -> Result<(Vec<u32>, usize), BridgeError> {
    let p = inst.pronoun_span;
    let mut context: Vec<String> = inst.tokens[..p.start].to_vec();
    let cand_words = inst.referents[cand].words();
    context.extend(cand_words.iter().cloned());
    let option = &inst.tokens[p.end..];
    let cctx = tokenize_checked(model, &context)?;
    let octx = tokenize_checked(model, option)?;
    let cand_tokens = cctx.token_span(crate::schema::Span::new(p.start, context.len())).len();
    let info = model.info();
    let mut seq = Vec::new();
    seq.extend(info.cls_token);
    seq.extend(&cctx.tokens);
    seq.extend(info.sep_token);
    seq.extend(&octx.tokens);
    seq.extend(info.sep_token);
    Ok((seq, cand_tokens))
}

pub fn candidate_score_context_option(inst: &SchemaInstance, cand: usize, model: &mut dyn LanguageModel) -> Result<CandidateScore, BridgeError> {
    let (seq, k) = context_option_sequence(inst, cand, model)?;
    Ok(CandidateScore { score: sequence_logprob_checked(model, &seq)?, token_count: k })
}

pub fn pmi_predict(inst: &SchemaInstance, table: &CooccurrenceTable, scope: Scope, origin_id: Option<&str>) -> Prediction {
    let x = scope.tokens(inst);
    let side = |r: usize| table.avg_pmi(&inst.referents[r].words(), &x).value;
    let raw = [side(0), side(1)];
    let (scores, chosen, tie) = decide_partial(raw);
    Prediction { chosen, tie, undefined: [raw[0].is_none(), raw[1].is_none()], ..Prediction::new(inst, origin_id, scores) }
}

pub enum Backend<'a> {
    Model(&'a mut dyn LanguageModel),
    Pmi(&'a CooccurrenceTable),
}

impl Backend<'_> {
    pub fn id(&self) -> String {
        match self {
            Backend::Model(m) => m.info().id.clone(),
            Backend::Pmi(t) => format!("pmi:{}", t.config().fingerprint()),
        }
    }
}

pub fn score_instance(
    inst: &SchemaInstance,
    origin_id: Option<&str>,
    backend: &mut Backend<'_>,
    strategy: Strategy,
    opts: &ScoreOptions,
) -> Result<Prediction, ScoreError> {
    match (strategy, backend) {
        (Strategy::PmiBaseline, Backend::Pmi(t)) => Ok(pmi_predict(inst, t, opts.pmi_scope, origin_id)),
        (Strategy::PmiBaseline, Backend::Model(_)) => Err(ScoreError::NeedsTable(strategy)),
        (_, Backend::Pmi(_)) => Err(ScoreError::NeedsModel(strategy)),
        (s, Backend::Model(m)) => {
            let mut cs = [CandidateScore { score: 0.0, token_count: 0 }; 2];
            for (c, slot) in cs.iter_mut().enumerate() {
                *slot = match s {
                    Strategy::MaskSubstitution => candidate_prob_mask(inst, c, &mut **m, opts)?,
                    _ => candidate_score_context_option(inst, c, &mut **m)?,
                };
            }
            let mut p = Prediction::new(inst, origin_id, [cs[0].score, cs[1].score]);
            p.token_counts = Some([cs[0].token_count, cs[1].token_count]);
            Ok(p)
        }
    }
}

/// An instance to score, with its origin when it is a perturbation.
#[derive(Debug, Clone, Copy)]
pub struct Scorable<'a> {
    pub origin_id: Option<&'a str>,
    pub inst: &'a SchemaInstance,
}

pub fn scorables(d: &Dataset) -> Vec<Scorable<'_>> {
    d.instances().iter().map(|inst| Scorable { origin_id: None, inst }).collect()
}

pub fn perturbed_scorables(p: &PerturbedDataset) -> Vec<Scorable<'_>> {
    p.instances.iter().map(|(o, inst)| Scorable { origin_id: Some(o.as_str()), inst }).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreSet {
    pub dataset: String,
    pub strategy: Strategy,
    pub adapter: String,
    pub fingerprint: String,
    pub seed: u64,
    pub predictions: Vec<Prediction>,
}

impl ScoreSet {
    pub fn get(&self, id: &str) -> Option<&Prediction> {
        self.predictions.iter().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} of {total} instances failed to score (first: {}: {})", failed.len(), failed[0].0, failed[0].1)]
pub struct BatchError {
    pub total: usize,
    pub failed: Vec<(String, String)>,
}

/// Fingerprint of the scoring inputs.
pub fn score_fingerprint(items: &[Scorable<'_>], adapter: &str, strategy: Strategy, opts: &ScoreOptions, seed: u64) -> String {
    let mut f = Fingerprint::new();
    f.str("scoreset").str(adapter).str(strategy.name()).u64(seed);
    f.u64(opts.averaging as u64).u64(opts.pmi_scope as u64);
    for h in &opts.head_mask {
        f.u64(h.layer as u64).u64(h.head as u64);
    }
    for it in items {
        let i = it.inst;
        f.str(&i.id).str(it.origin_id.unwrap_or("")).str(&i.pair_id).u64(i.correct_index as u64);
        for t in &i.tokens {
            f.str(t);
        }
        for s in [i.pronoun_span, i.referents[0].span, i.referents[1].span, i.discriminatory_span] {
            f.u64(s.start as u64).u64(s.end as u64);
        }
    }
    f.hex()
}

/// Scores every item; a set is returned only when all succeed.
pub fn batch_score(
    dataset: &str,
    items: &[Scorable<'_>],
    backend: &mut Backend<'_>,
    strategy: Strategy,
    opts: &ScoreOptions,
    seed: u64,
) -> Result<ScoreSet, BatchError> {
    let adapter = backend.id();
    let mut predictions = Vec::with_capacity(items.len());
    let mut failed = Vec::new();
    for it in items {
        match score_instance(it.inst, it.origin_id, backend, strategy, opts) {
            Ok(p) => predictions.push(p),
            Err(e) => failed.push((it.inst.id.clone(), e.to_string())),
        }
    }
    if !failed.is_empty() {
        return Err(BatchError { total: items.len(), failed });
    }
    Ok(ScoreSet {
        dataset: dataset.to_string(),
        strategy,
        fingerprint: score_fingerprint(items, &adapter, strategy, opts, seed),
        adapter,
        seed,
        predictions,
    })
}

/// Restricts a set to the given ids (by `id`).
pub fn restrict(s: &ScoreSet, keep: impl Fn(&Prediction) -> bool) -> ScoreSet {
    ScoreSet { predictions: s.predictions.iter().filter(|p| keep(p)).cloned().collect(), ..s.clone() }
}
