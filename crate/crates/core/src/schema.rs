//! Schema instances, datasets and the structural manipulations used by the
//! analyses (segment masking, referent switching, pair validation).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::text;

/// Half-open word-token range `[start, end)`. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn is_valid_for(&self, len: usize) -> bool {
        self.start < self.end && self.end <= len
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrammaticalNumber {
    Singular,
    Plural,
}

impl GrammaticalNumber {
    pub fn flipped(self) -> Self {
        match self {
            GrammaticalNumber::Singular => GrammaticalNumber::Plural,
            GrammaticalNumber::Plural => GrammaticalNumber::Singular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masculine,
    Feminine,
    Neuter,
    Unspecified,
}

impl Gender {
    pub fn opposite(self) -> Option<Gender> {
        match self {
            Gender::Masculine => Some(Gender::Feminine),
            Gender::Feminine => Some(Gender::Masculine),
            _ => None,
        }
    }
}

/// One of the two candidate antecedents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Referent {
    pub span: Span,
    pub surface: String,
    pub number: GrammaticalNumber,
    pub gender: Gender,
    #[serde(default)]
    pub is_name: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synonym: Option<String>,
}

impl Referent {
    pub fn words(&self) -> Vec<String> {
        self.surface.split(' ').filter(|w| !w.is_empty()).map(String::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tense {
    Past,
    Present,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voice {
    Active,
    Passive,
}

/// Grammatical case of a pronoun token, used when the surface form is
/// ambiguous ("her" is both object and possessive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PronounCase {
    Subject,
    Object,
    Possessive,
    Independent,
    Reflexive,
}

/// A pronoun token (other than the pronoun of interest) and what it refers to.
/// `referent: None` marks a pronoun that refers to neither candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounLink {
    pub token: usize,
    pub referent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<PronounCase>,
}

/// A token inflected for the number of a referent (verbs, auxiliaries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementLink {
    pub token: usize,
    pub referent: usize,
}

/// Argument structure of the clause that the voice perturbation rewrites.
///
/// Active: `subject verb complement` where complement is the direct object.
/// Passive: `subject verb by complement` where complement is the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceFrame {
    pub subject: Span,
    pub verb: Span,
    pub complement: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement_number: Option<GrammaticalNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default)]
    pub main_verb_spans: Vec<Span>,
    pub tense: Tense,
    pub voice: Voice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_template_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc_ending: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adverb: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pronouns: Vec<PronounLink>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agreement: Vec<AgreementLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice_frame: Option<VoiceFrame>,
    /// Perturbation kinds that cannot be applied without changing the meaning.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocked: Vec<PerturbationKind>,
    /// Part-of-speech tag per token, when supplied.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pos: Vec<String>,
}

impl Default for Annotations {
    fn default() -> Self {
        Annotations {
            main_verb_spans: Vec::new(),
            tense: Tense::Past,
            voice: Voice::Active,
            rc_template_index: None,
            rc_ending: None,
            adverb: None,
            pronouns: Vec::new(),
            agreement: Vec::new(),
            voice_frame: None,
            blocked: Vec::new(),
            pos: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PerturbationKind {
    #[serde(rename = "TEN")]
    Tense,
    #[serde(rename = "NUM")]
    Number,
    #[serde(rename = "GEN")]
    Gender,
    #[serde(rename = "VC")]
    Voice,
    #[serde(rename = "RC")]
    RelativeClause,
    #[serde(rename = "ADV")]
    Adverb,
    #[serde(rename = "SYNNA")]
    SynonymName,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 7] = [
        PerturbationKind::Tense,
        PerturbationKind::Number,
        PerturbationKind::Gender,
        PerturbationKind::Voice,
        PerturbationKind::RelativeClause,
        PerturbationKind::Adverb,
        PerturbationKind::SynonymName,
    ];

    pub fn code(self) -> &'static str {
        match self {
            PerturbationKind::Tense => "TEN",
            PerturbationKind::Number => "NUM",
            PerturbationKind::Gender => "GEN",
            PerturbationKind::Voice => "VC",
            PerturbationKind::RelativeClause => "RC",
            PerturbationKind::Adverb => "ADV",
            PerturbationKind::SynonymName => "SYNNA",
        }
    }

    /// Lowercase suffix appended to perturbed ids.
    pub fn suffix(self) -> &'static str {
        match self {
            PerturbationKind::Tense => "ten",
            PerturbationKind::Number => "num",
            PerturbationKind::Gender => "gen",
            PerturbationKind::Voice => "vc",
            PerturbationKind::RelativeClause => "rc",
            PerturbationKind::Adverb => "adv",
            PerturbationKind::SynonymName => "synna",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        let upper = code.to_uppercase();
        let code = match upper.as_str() {
            "SYN" | "SYN/NA" | "SYN_NA" => "SYNNA",
            other => other,
        };
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One Winograd schema: text, pronoun, the two candidates and the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaInstance {
    pub id: String,
    pub pair_id: String,
    pub tokens: Vec<String>,
    pub pronoun_span: Span,
    #[serde(deserialize_with = "two_referents")]
    pub referents: [Referent; 2],
    pub correct_index: usize,
    pub discriminatory_span: Span,
    #[serde(default)]
    pub associative: bool,
    #[serde(default)]
    pub switchable: bool,
    #[serde(default)]
    pub annotations: Annotations,
    /// Provenance note set by structural manipulations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn two_referents<'de, D: Deserializer<'de>>(d: D) -> Result<[Referent; 2], D::Error> {
    let v: Vec<Referent> = Vec::deserialize(d)?;
    let n = v.len();
    <[Referent; 2]>::try_from(v)
        .map_err(|_| serde::de::Error::custom(format!("expected exactly two referents, found {n}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("instance {id}: {path}: {message}")]
    Invalid { id: String, path: String, message: String },
    #[error("duplicate instance id {0}")]
    DuplicateId(String),
    #[error("pair {pair_id} has {count} instances (expected one or two)")]
    PairSize { pair_id: String, count: usize },
    #[error("instance {id}: not switchable")]
    NotSwitchable { id: String },
    #[error("perturbed record {origin}: {message}")]
    Origin { origin: String, message: String },
}

impl SchemaInstance {
    fn invalid(&self, path: impl Into<String>, message: impl Into<String>) -> SchemaError {
        SchemaError::Invalid { id: self.id.clone(), path: path.into(), message: message.into() }
    }

    /// Checks every instance invariant; the first violation is returned.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let n = self.tokens.len();
        let check = |span: &Span, path: &str| -> Result<(), SchemaError> {
            if span.is_valid_for(n) {
                Ok(())
            } else {
                Err(self.invalid(path, format!("span {span} out of range for {n} tokens")))
            }
        };
        if self.id.is_empty() {
            return Err(self.invalid("id", "empty id"));
        }
        check(&self.pronoun_span, "pronoun_span")?;
        check(&self.discriminatory_span, "discriminatory_span")?;
        for (i, r) in self.referents.iter().enumerate() {
            let path = format!("referents[{i}].span");
            check(&r.span, &path)?;
            if r.span.overlaps(&self.pronoun_span) {
                return Err(self.invalid(path, "referent overlaps pronoun_span"));
            }
            let joined = self.tokens[r.span.start..r.span.end].join(" ");
            if joined != r.surface {
                return Err(self.invalid(
                    format!("referents[{i}].surface"),
                    format!("surface {:?} does not match tokens {:?}", r.surface, joined),
                ));
            }
            if r.synonym.as_deref().is_some_and(|s| s.trim().is_empty()) {
                return Err(self.invalid(format!("referents[{i}].synonym"), "empty synonym"));
            }
        }
        if self.referents[0].span.start >= self.referents[1].span.start {
            return Err(self.invalid("referents", "referents not in textual order"));
        }
        if self.referents[0].span.overlaps(&self.referents[1].span) {
            return Err(self.invalid("referents", "referent spans overlap"));
        }
        if self.correct_index > 1 {
            return Err(self.invalid("correct_index", format!("{} is not 0 or 1", self.correct_index)));
        }
        let a = &self.annotations;
        for (i, s) in a.main_verb_spans.iter().enumerate() {
            check(s, &format!("annotations.main_verb_spans[{i}]"))?;
        }
        if let Some(f) = &a.voice_frame {
            check(&f.subject, "annotations.voice_frame.subject")?;
            check(&f.verb, "annotations.voice_frame.verb")?;
            check(&f.complement, "annotations.voice_frame.complement")?;
        }
        for (i, p) in a.pronouns.iter().enumerate() {
            if p.token >= n {
                return Err(self.invalid(format!("annotations.pronouns[{i}].token"), "token out of range"));
            }
            if p.referent.is_some_and(|r| r > 1) {
                return Err(self.invalid(format!("annotations.pronouns[{i}].referent"), "referent must be 0 or 1"));
            }
        }
        for (i, l) in a.agreement.iter().enumerate() {
            if l.token >= n || l.referent > 1 {
                return Err(self.invalid(format!("annotations.agreement[{i}]"), "token or referent out of range"));
            }
        }
        if !a.pos.is_empty() && a.pos.len() != n {
            return Err(self.invalid("annotations.pos", format!("{} tags for {n} tokens", a.pos.len())));
        }
        if a.rc_ending.as_deref().is_some_and(|s| s.trim().is_empty()) {
            return Err(self.invalid("annotations.rc_ending", "empty ending"));
        }
        Ok(())
    }

    pub fn correct(&self) -> &Referent {
        &self.referents[self.correct_index]
    }

    pub fn incorrect(&self) -> &Referent {
        &self.referents[1 - self.correct_index]
    }

    pub fn text(&self) -> String {
        text::render(&self.tokens)
    }

    pub fn pronoun_words(&self) -> &[String] {
        &self.tokens[self.pronoun_span.start..self.pronoun_span.end]
    }

    pub fn segment_words(&self) -> &[String] {
        &self.tokens[self.discriminatory_span.start..self.discriminatory_span.end]
    }
}

/// An ordered, validated collection of instances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    instances: Vec<SchemaInstance>,
    id_index: BTreeMap<String, usize>,
    pair_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(instances: Vec<SchemaInstance>) -> Result<Self, SchemaError> {
        let mut id_index = BTreeMap::new();
        let mut pair_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            inst.validate()?;
            if id_index.insert(inst.id.clone(), i).is_some() {
                return Err(SchemaError::DuplicateId(inst.id.clone()));
            }
            pair_index.entry(inst.pair_id.clone()).or_default().push(i);
        }
        if let Some((pair_id, members)) = pair_index.iter().find(|(_, m)| m.len() > 2) {
            return Err(SchemaError::PairSize { pair_id: pair_id.clone(), count: members.len() });
        }
        Ok(Dataset { instances, id_index, pair_index })
    }

    pub fn instances(&self) -> &[SchemaInstance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<SchemaInstance> {
        self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SchemaInstance> {
        self.id_index.get(id).map(|&i| &self.instances[i])
    }

    /// Pairs in pair-id order, each with its one or two members.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, Vec<&SchemaInstance>)> + '_ {
        self.pair_index
            .iter()
            .map(move |(p, members)| (p.as_str(), members.iter().map(|&i| &self.instances[i]).collect()))
    }

    pub fn pair_count(&self) -> usize {
        self.pair_index.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.instances.iter().map(|i| i.id.as_str())
    }
}

/// Why a perturbation could not be applied to an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    SemanticsNotPreserved,
    NoSynonymAvailable,
    AlreadyModified,
    NotApplicable,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::SemanticsNotPreserved => "SemanticsNotPreserved",
            SkipReason::NoSynonymAvailable => "NoSynonymAvailable",
            SkipReason::AlreadyModified => "AlreadyModified",
            SkipReason::NotApplicable => "NotApplicable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub origin_id: String,
    pub reason: SkipReason,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// The output of one perturbation kind over a source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDataset {
    pub kind: PerturbationKind,
    pub instances: Vec<(String, SchemaInstance)>,
    pub skipped: Vec<Skipped>,
}

impl PerturbedDataset {
    /// Checks origin links against the source and the instance invariants.
    pub fn validate_against(&self, source: &Dataset) -> Result<(), SchemaError> {
        let mut seen = BTreeSet::new();
        for (origin, inst) in &self.instances {
            inst.validate()?;
            if source.get(origin).is_none() {
                return Err(SchemaError::Origin { origin: origin.clone(), message: "unknown origin id".into() });
            }
            if !seen.insert(origin.as_str()) {
                return Err(SchemaError::Origin { origin: origin.clone(), message: "origin perturbed twice".into() });
            }
        }
        for s in &self.skipped {
            if source.get(&s.origin_id).is_none() {
                return Err(SchemaError::Origin { origin: s.origin_id.clone(), message: "unknown origin id".into() });
            }
            if !seen.insert(s.origin_id.as_str()) {
                return Err(SchemaError::Origin {
                    origin: s.origin_id.clone(),
                    message: "origin both perturbed and skipped".into(),
                });
            }
        }
        if seen.len() != source.len() {
            return Err(SchemaError::Origin {
                origin: String::new(),
                message: format!("{} records for {} source instances", seen.len(), source.len()),
            });
        }
        Ok(())
    }

    pub fn origin_ids(&self) -> BTreeSet<String> {
        self.instances.iter().map(|(o, _)| o.clone()).collect()
    }

    /// The perturbed instances as a dataset of their own (pairs keep their
    /// suffixed pair ids).
    pub fn to_dataset(&self) -> Result<Dataset, SchemaError> {
        Dataset::new(self.instances.iter().map(|(_, i)| i.clone()).collect())
    }

    /// Map from perturbed id to origin id.
    pub fn origin_map(&self) -> BTreeMap<String, String> {
        self.instances.iter().map(|(o, i)| (i.id.clone(), o.clone())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIssue {
    pub pair_id: String,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    pub message: String,
}

fn first_difference(a: &[String], b: &[String]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y).or_else(|| (a.len() != b.len()).then(|| a.len().min(b.len())))
}

/// Checks that pair members differ only inside their discriminatory segments.
///
/// Singletons, segments that coincide with a referent (a noun swapped instead
/// of a segment) and pairs sharing the same answer are warnings; differences
/// outside the segments are violations.
pub fn validate_pairs(d: &Dataset) -> Vec<PairIssue> {
    let mut issues = Vec::new();
    for (pair_id, members) in d.pairs() {
        let issue = |severity, position, message: String| PairIssue {
            pair_id: pair_id.to_string(),
            severity,
            position,
            message,
        };
        let [a, b] = match members.as_slice() {
            [a, b] => [*a, *b],
            [only] => {
                issues.push(issue(Severity::Warning, None, format!("singleton pair ({})", only.id)));
                continue;
            }
            _ => continue,
        };
        let (da, db) = (a.discriminatory_span, b.discriminatory_span);
        let mut violated = false;
        if let Some(p) = first_difference(&a.tokens[..da.start], &b.tokens[..db.start]) {
            issues.push(issue(Severity::Violation, Some(p), format!("{} and {} differ at token {p} before the segment", a.id, b.id)));
            violated = true;
        }
        if let Some(p) = first_difference(&a.tokens[da.end..], &b.tokens[db.end..]) {
            let pos = da.end + p;
            issues.push(issue(Severity::Violation, Some(pos), format!("{} and {} differ at token {pos} after the segment", a.id, b.id)));
            violated = true;
        }
        if !violated && a.segment_words() == b.segment_words() {
            issues.push(issue(Severity::Warning, Some(da.start), format!("{} and {} have identical segments", a.id, b.id)));
        }
        let swaps_referent = [a, b].iter().any(|i| i.referents.iter().any(|r| r.span.overlaps(&i.discriminatory_span)));
        if swaps_referent {
            issues.push(issue(Severity::Warning, Some(da.start), "segment replaces a referent instead of selecting one".into()));
        }
        if a.correct_index == b.correct_index && !swaps_referent {
            issues.push(issue(Severity::Warning, None, format!("{} and {} share the same answer", a.id, b.id)));
        }
    }
    issues
}

/// Warnings for tokens missing from a reference vocabulary (typos such as
/// "Kamtchatka"). Punctuation and capitalized names are checked lowercased.
pub fn unknown_token_warnings(d: &Dataset, vocabulary: &BTreeSet<String>) -> Vec<PairIssue> {
    let mut out = Vec::new();
    for inst in d.instances() {
        for (i, t) in inst.tokens.iter().enumerate() {
            if text::is_punct(t) || vocabulary.contains(t) || vocabulary.contains(&t.to_lowercase()) {
                continue;
            }
            out.push(PairIssue {
                pair_id: inst.pair_id.clone(),
                severity: Severity::Warning,
                position: Some(i),
                message: format!("{}: unknown token {:?}", inst.id, t),
            });
        }
    }
    out
}

pub const MASKED_NOTE: &str = "discriminatory segment masked; correct_index is not informative";

/// Replaces every token of the discriminatory segment with `mask_token`.
pub fn mask_discriminatory(inst: &SchemaInstance, mask_token: &str) -> SchemaInstance {
    let mut out = inst.clone();
    for t in &mut out.tokens[inst.discriminatory_span.start..inst.discriminatory_span.end] {
        *t = mask_token.to_string();
    }
    for r in &mut out.referents {
        r.surface = out.tokens[r.span.start..r.span.end].join(" ");
    }
    out.note = Some(MASKED_NOTE.into());
    out
}

/// Exchanges the two referents' surfaces in the text.
///
/// Referent metadata, pronoun links and the answer travel with the surface,
/// so `correct_index` flips.
pub fn switch_referents(inst: &SchemaInstance) -> Result<SchemaInstance, SchemaError> {
    if !inst.switchable {
        return Err(SchemaError::NotSwitchable { id: inst.id.clone() });
    }
    let [r0, r1] = &inst.referents;
    let (s0, s1) = (r0.span, r1.span);
    let t = &inst.tokens;
    let mut tokens = Vec::with_capacity(t.len());
    tokens.extend_from_slice(&t[..s0.start]);
    tokens.extend_from_slice(&t[s1.start..s1.end]);
    tokens.extend_from_slice(&t[s0.end..s1.start]);
    tokens.extend_from_slice(&t[s0.start..s0.end]);
    tokens.extend_from_slice(&t[s1.end..]);

    let delta = s1.len() as isize - s0.len() as isize;
    let shift = |i: usize| -> usize {
        if i >= s1.end {
            i
        } else if i >= s0.end {
            (i as isize + delta) as usize
        } else {
            i
        }
    };
    let remap = |s: Span| -> Span {
        if s.end <= s0.start || s.start >= s1.end {
            s
        } else if s.start >= s0.end && s.end <= s1.start {
            Span::new(shift(s.start), shift(s.end))
        } else {
            s
        }
    };
    let new0 = Span::new(s0.start, s0.start + s1.len());
    let new1 = Span::new(shift(s1.start), s1.end);
    let mut out = inst.clone();
    out.tokens = tokens;
    out.referents = [Referent { span: new0, ..r1.clone() }, Referent { span: new1, ..r0.clone() }];
    out.correct_index = 1 - inst.correct_index;
    out.pronoun_span = remap(inst.pronoun_span);
    out.discriminatory_span = remap(inst.discriminatory_span);
    let a = &mut out.annotations;
    a.main_verb_spans = a.main_verb_spans.iter().map(|s| remap(*s)).collect();
    a.voice_frame = None;
    for p in &mut a.pronouns {
        p.token = remap(Span::new(p.token, p.token + 1)).start;
        p.referent = p.referent.map(|r| 1 - r);
    }
    for l in &mut a.agreement {
        l.token = remap(Span::new(l.token, l.token + 1)).start;
        l.referent = 1 - l.referent;
    }
    if s0.len() != s1.len() {
        a.pos.clear();
    }
    for r in &mut out.referents {
        if text::is_sentence_initial(&out.tokens, r.span.start) {
            out.tokens[r.span.start] = text::capitalize(&out.tokens[r.span.start]);
        } else if !r.is_name {
            out.tokens[r.span.start] = text::decapitalize(&out.tokens[r.span.start]);
        }
        r.surface = out.tokens[r.span.start..r.span.end].join(" ");
    }
    out.validate()?;
    Ok(out)
}

/// Origin ids perturbed (not skipped) in every dataset.
pub fn common_subset(datasets: &[PerturbedDataset]) -> Result<BTreeSet<String>, SchemaError> {
    let (first, rest) = datasets.split_first().ok_or_else(|| SchemaError::Origin {
        origin: String::new(),
        message: "common_subset needs at least one dataset".into(),
    })?;
    let mut common = first.origin_ids();
    for d in rest {
        let ids = d.origin_ids();
        common.retain(|id| ids.contains(id));
    }
    Ok(common)
}
