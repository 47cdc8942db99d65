//! Pronoun attention analyses: difference maps, head rankings, masking
//! curves and attention-shift rankings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{attention_checked, tokenize_checked, AttentionWeights, BridgeError, Capability, HeadId, LanguageModel, TokenizedContext};
use crate::metrics::{accuracy, MetricError};
use crate::schema::{Dataset, PerturbedDataset, SchemaInstance};
use crate::scoring::{batch_score, Backend, Scorable, ScoreOptions, Strategy};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalTarget {
    CorrectReferent,
    IncorrectReferent,
    DiscriminatorySegment,
    AllNonCritical,
}

impl CriticalTarget {
    pub const ALL: [CriticalTarget; 4] =
        [CriticalTarget::CorrectReferent, CriticalTarget::IncorrectReferent, CriticalTarget::DiscriminatorySegment, CriticalTarget::AllNonCritical];

    pub fn name(self) -> &'static str {
        match self {
            CriticalTarget::CorrectReferent => "correct_referent",
            CriticalTarget::IncorrectReferent => "incorrect_referent",
            CriticalTarget::DiscriminatorySegment => "discriminatory_segment",
            CriticalTarget::AllNonCritical => "all_non_critical",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AttentionError {
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("scoring failed: {0}")]
    Scoring(String),
    #[error("empty dataset")]
    Empty,
    #[error("no aligned token positions")]
    NoAlignedPositions,
}

/// Pronoun-query attention of one instance.
pub fn pronoun_attention(
    inst: &SchemaInstance,
    model: &mut dyn LanguageModel,
    head_mask: &[HeadId],
) -> Result<(TokenizedContext, AttentionWeights), BridgeError> {
    let ctx = tokenize_checked(model, &inst.tokens)?;
    let query = ctx.token_span(inst.pronoun_span);
    let w = attention_checked(model, &ctx.tokens, query, head_mask)?;
    Ok((ctx, w))
}

/// Model-token positions of a target.
pub fn target_positions(inst: &SchemaInstance, ctx: &TokenizedContext, target: CriticalTarget) -> Vec<usize> {
    let range = |s| {
        let t = ctx.token_span(s);
        (t.start..t.end).collect::<Vec<_>>()
    };
    match target {
        CriticalTarget::CorrectReferent => range(inst.correct().span),
        CriticalTarget::IncorrectReferent => range(inst.incorrect().span),
        CriticalTarget::DiscriminatorySegment => range(inst.discriminatory_span),
        CriticalTarget::AllNonCritical => {
            let critical = [inst.referents[0].span, inst.referents[1].span, inst.pronoun_span, inst.discriminatory_span];
            (0..ctx.tokens.len())
                .filter(|&i| critical.iter().all(|s| !ctx.token_span(*s).contains(i)))
                .collect()
        }
    }
}

fn mass(w: &AttentionWeights, positions: &[usize]) -> Vec<Vec<f64>> {
    w.iter().map(|layer| layer.iter().map(|row| positions.iter().map(|&j| row[j]).sum()).collect()).collect()
}

/// Per head: attention on the correct referent minus attention on the
/// incorrect one (summed over their tokens).
pub fn attention_diff_map(inst: &SchemaInstance, model: &mut dyn LanguageModel) -> Result<Vec<Vec<f64>>, BridgeError> {
    let (ctx, w) = pronoun_attention(inst, model, &[])?;
    let c = mass(&w, &target_positions(inst, &ctx, CriticalTarget::CorrectReferent));
    let i = mass(&w, &target_positions(inst, &ctx, CriticalTarget::IncorrectReferent));
    Ok(c.iter().zip(&i).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect())
}

/// Heads by descending mean attention mass on `target`; ties by
/// (layer, head).
pub fn head_importance(
    instances: &[&SchemaInstance],
    model: &mut dyn LanguageModel,
    target: CriticalTarget,
) -> Result<Vec<(HeadId, f64)>, AttentionError> {
    if instances.is_empty() {
        return Err(AttentionError::Empty);
    }
    let info = model.info().clone();
    let mut total = vec![vec![0.0; info.heads]; info.layers];
    for inst in instances {
        let (ctx, w) = pronoun_attention(inst, model, &[])?;
        let m = mass(&w, &target_positions(inst, &ctx, target));
        for (t, x) in total.iter_mut().flatten().zip(m.iter().flatten()) {
            *t += x;
        }
    }
    let n = instances.len() as f64;
    let mut ranked: Vec<(HeadId, f64)> = info.all_heads().into_iter().map(|h| (h, total[h.layer][h.head] / n)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "order", content = "seed")]
pub enum MaskingOrder {
    MostFirst,
    LeastFirst,
    Random(u64),
}

impl fmt::Display for MaskingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskingOrder::MostFirst => f.write_str("most_first"),
            MaskingOrder::LeastFirst => f.write_str("least_first"),
            MaskingOrder::Random(s) => write!(f, "random({s})"),
        }
    }
}

impl MaskingOrder {
    /// Heads in masking order.
    pub fn sequence(self, ranking: &[HeadId]) -> Vec<HeadId> {
        match self {
            MaskingOrder::MostFirst => ranking.to_vec(),
            MaskingOrder::LeastFirst => ranking.iter().rev().copied().collect(),
            MaskingOrder::Random(s) => {
                let mut heads = ranking.to_vec();
                heads.sort();
                let mut rng = seed::rng_for(s);
                for i in (1..heads.len()).rev() {
                    let j = rng.random_range(0..=i as u32) as usize;
                    heads.swap(i, j);
                }
                heads
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingCurve {
    pub order: MaskingOrder,
    /// Heads in the order they are masked.
    pub heads: Vec<HeadId>,
    /// Accuracy with the first `k` heads masked, `k = 0..=heads.len()`.
    pub points: Vec<f64>,
}

/// Accuracy as heads are masked one at a time.
pub fn masking_curve(
    items: &[Scorable<'_>],
    model: &mut dyn LanguageModel,
    ranking: &[HeadId],
    order: MaskingOrder,
    strategy: Strategy,
    opts: &ScoreOptions,
) -> Result<MaskingCurve, AttentionError> {
    if items.is_empty() {
        return Err(AttentionError::Empty);
    }
    let heads = order.sequence(ranking);
    if !heads.is_empty() {
        model.info().require(Capability::HeadMasking)?;
    }
    let mut points = Vec::with_capacity(heads.len() + 1);
    for k in 0..=heads.len() {
        let mut o = opts.clone();
        o.head_mask = heads[..k].to_vec();
        let set = batch_score("curve", items, &mut Backend::Model(&mut *model), strategy, &o, 0)
            .map_err(|e| AttentionError::Scoring(alloc::format!("{e}")))?;
        points.push(accuracy(&set, None)?.value);
    }
    Ok(MaskingCurve { order, heads, points })
}

/// Pairs `(i, j)` of equal words on a longest common subsequence.
pub fn align_unchanged(a: &[String], b: &[String]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] { lcs[i + 1][j + 1] + 1 } else { lcs[i + 1][j].max(lcs[i][j + 1]) };
        }
    }
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Word-level attention: each word's tokens summed.
fn word_attention(ctx: &TokenizedContext, row: &[f64]) -> Vec<f64> {
    ctx.alignment.iter().map(|s| row[s.start..s.end].iter().sum()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedToken {
    pub word: String,
    pub pos: Option<String>,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadShift {
    pub head: HeadId,
    pub tokens: Vec<ShiftedToken>,
}

/// Per head, words ranked by mean absolute change in pronoun attention
/// between original and perturbed instances, over unchanged positions
/// (pronoun excluded). Words are keyed by lowercased form and POS tag.
pub fn attention_shift_ranking(
    orig: &Dataset,
    pert: &PerturbedDataset,
    model: &mut dyn LanguageModel,
    top: usize,
) -> Result<Vec<HeadShift>, AttentionError> {
    let info = model.info().clone();
    let heads = info.all_heads();
    // (head index, word, pos) -> (sum, count)
    let mut acc: BTreeMap<(usize, String, Option<String>), (f64, usize)> = BTreeMap::new();
    let mut aligned_any = false;
    for (origin, p) in &pert.instances {
        let Some(o) = orig.get(origin) else { continue };
        let (oc, ow) = pronoun_attention(o, model, &[])?;
        let (pc, pw) = pronoun_attention(p, model, &[])?;
        let pairs: Vec<(usize, usize)> =
            align_unchanged(&o.tokens, &p.tokens).into_iter().filter(|&(i, _)| !o.pronoun_span.contains(i)).collect();
        aligned_any |= !pairs.is_empty();
        for (k, h) in heads.iter().enumerate() {
            let a = word_attention(&oc, &ow[h.layer][h.head]);
            let b = word_attention(&pc, &pw[h.layer][h.head]);
            for &(i, j) in &pairs {
                let pos = o.annotations.pos.get(i).cloned();
                let e = acc.entry((k, o.tokens[i].to_lowercase(), pos)).or_default();
                e.0 += libm::fabs(a[i] - b[j]);
                e.1 += 1;
            }
        }
    }
    if !aligned_any {
        return Err(AttentionError::NoAlignedPositions);
    }
    let mut out: Vec<HeadShift> = heads.iter().map(|&head| HeadShift { head, tokens: Vec::new() }).collect();
    for ((k, word, pos), (sum, n)) in acc {
        out[k].tokens.push(ShiftedToken { word, pos, shift: sum / n as f64 });
    }
    for h in &mut out {
        h.tokens.sort_by(|a, b| b.shift.total_cmp(&a.shift).then_with(|| a.word.cmp(&b.word)).then_with(|| a.pos.cmp(&b.pos)));
        h.tokens.truncate(top);
    }
    Ok(out)
}

/// How often each POS tag is some head's top-shifted token (`"?"` when
/// untagged).
pub fn aggregate_by_pos(ranking: &[HeadShift]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for h in ranking {
        if let Some(t) = h.tokens.first() {
            *out.entry(t.pos.clone().unwrap_or_else(|| "?".into())).or_default() += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::toy::{ToyConfig, ToyModel};
    use crate::schema::fixtures::{sid_mark, sid_mark_twin};
    use crate::scoring::scorables;

    fn toy() -> ToyModel {
        ToyModel::builtin(ToyConfig::default())
    }

    fn inverse_distance(n: usize, q: usize, exponent: f64) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|j| libm::pow(1.0 + q.abs_diff(j) as f64, -exponent)).collect();
        let z: f64 = raw.iter().sum();
        raw.iter().map(|x| x / z).collect()
    }

    #[test]
    fn diff_map_matches_inverse_distance() {
        let mut m = toy();
        let inst = sid_mark();
        let map = attention_diff_map(&inst, &mut m).unwrap();
        assert_eq!((map.len(), map[0].len()), (2, 2));
        for l in 0..2 {
            for h in 0..2 {
                let row = inverse_distance(inst.tokens.len(), 7, (1 + 2 * l + h) as f64);
                assert!((map[l][h] - (row[0] - row[5])).abs() < 1e-12);
            }
        }
        let mut flipped = inst.clone();
        flipped.correct_index = 1;
        let other = attention_diff_map(&flipped, &mut m).unwrap();
        assert_eq!(other[1][0], -map[1][0]);
    }

    #[test]
    fn equidistant_referents_cancel() {
        let mut m = toy();
        let mut inst = sid_mark();
        inst.tokens = "Sid saw him near Mark .".split(' ').map(String::from).collect();
        inst.referents[0].span = crate::Span::new(0, 1);
        inst.referents[1].span = crate::Span::new(4, 5);
        inst.pronoun_span = crate::Span::new(2, 3);
        inst.discriminatory_span = crate::Span::new(5, 6);
        inst.annotations = Default::default();
        let map = attention_diff_map(&inst, &mut m).unwrap();
        assert!(map.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn ranking_is_a_permutation_sorted_by_mass() {
        let mut m = toy();
        let (a, b) = (sid_mark(), sid_mark_twin());
        let r = head_importance(&[&a, &b], &mut m, CriticalTarget::DiscriminatorySegment).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.windows(2).all(|w| w[0].1 >= w[1].1));
        let mut heads: Vec<HeadId> = r.iter().map(|x| x.0).collect();
        heads.sort();
        assert_eq!(heads, m.info().all_heads());
        assert!(head_importance(&[], &mut m, CriticalTarget::CorrectReferent).is_err());
    }

    #[test]
    fn non_critical_excludes_every_critical_span() {
        let mut m = toy();
        let inst = sid_mark();
        let ctx = m.tokenize(&inst.tokens).unwrap();
        assert_eq!(target_positions(&inst, &ctx, CriticalTarget::AllNonCritical), vec![1, 2, 3, 4, 6, 11]);
    }

    #[test]
    fn curve_endpoints_and_reproducibility() {
        let mut m = toy();
        let d = Dataset::new(vec![sid_mark(), sid_mark_twin()]).unwrap();
        let items = scorables(&d);
        let ranking: Vec<HeadId> = m.info().all_heads();
        let opts = ScoreOptions::default();
        let most = masking_curve(&items, &mut m, &ranking, MaskingOrder::MostFirst, Strategy::MaskSubstitution, &opts).unwrap();
        let least = masking_curve(&items, &mut m, &ranking, MaskingOrder::LeastFirst, Strategy::MaskSubstitution, &opts).unwrap();
        assert_eq!(most.points.len(), 5);
        assert_eq!(most.points[0], least.points[0]);
        assert_eq!(most.points[4], least.points[4]);
        let base = batch_score("x", &items, &mut Backend::Model(&mut m), Strategy::MaskSubstitution, &opts, 0).unwrap();
        assert_eq!(most.points[0], accuracy(&base, None).unwrap().value);
        let r1 = masking_curve(&items, &mut m, &ranking, MaskingOrder::Random(9), Strategy::MaskSubstitution, &opts).unwrap();
        let r2 = masking_curve(&items, &mut m, &ranking, MaskingOrder::Random(9), Strategy::MaskSubstitution, &opts).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn lcs_alignment() {
        let a: Vec<String> = "Sid explained it".split(' ').map(String::from).collect();
        let b: Vec<String> = "Sid , who , explained it".split(' ').map(String::from).collect();
        assert_eq!(align_unchanged(&a, &b), vec![(0, 0), (1, 4), (2, 5)]);
    }

    #[test]
    fn identity_perturbation_has_no_shift() {
        let mut m = toy();
        let d = Dataset::new(vec![sid_mark()]).unwrap();
        let p = PerturbedDataset {
            kind: crate::PerturbationKind::Adverb,
            instances: vec![("wsc-sid".into(), sid_mark())],
            skipped: vec![],
        };
        let r = attention_shift_ranking(&d, &p, &mut m, 3).unwrap();
        assert!(r.iter().flat_map(|h| &h.tokens).all(|t| t.shift == 0.0));
    }

    #[test]
    fn pos_counts_of_top_tokens() {
        let t = |w: &str, p: Option<&str>| ShiftedToken { word: w.into(), pos: p.map(String::from), shift: 1.0 };
        let r = vec![
            HeadShift { head: HeadId::new(0, 0), tokens: vec![t("but", Some("CC")), t("he", Some("PRP"))] },
            HeadShift { head: HeadId::new(0, 1), tokens: vec![t("but", Some("CC"))] },
            HeadShift { head: HeadId::new(1, 0), tokens: vec![t("x", None)] },
            HeadShift { head: HeadId::new(1, 1), tokens: vec![] },
        ];
        let agg = aggregate_by_pos(&r);
        assert_eq!(agg.get("CC"), Some(&2));
        assert_eq!(agg.get("?"), Some(&1));
        assert_eq!(agg.len(), 2);
    }
}
