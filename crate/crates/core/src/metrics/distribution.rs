//! Distribution- and representation-level shifts between original and
//! perturbed instances.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{stats, Metric, MetricError};
use crate::bridge::{distributions_checked, hidden_state_checked, tokenize_checked, BridgeError, LanguageModel, MaskQuery, TruncatedDistribution};
use crate::schema::{Dataset, PerturbedDataset, SchemaInstance};

/// Jensen-Shannon distance (base 2, square root) between two distributions
/// renormalized over their retained entries.
pub fn js_distance(d1: &TruncatedDistribution, d2: &TruncatedDistribution) -> f64 {
    let mut joint: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for (t, p) in d1.renormalized() {
        joint.entry(t).or_default().0 += p;
    }
    for (t, q) in d2.renormalized() {
        joint.entry(t).or_default().1 += q;
    }
    let mut kp = 0.0;
    let mut kq = 0.0;
    for &(p, q) in joint.values() {
        let m = 0.5 * (p + q);
        if p > 0.0 {
            kp += p * libm::log2(p / m);
        }
        if q > 0.0 {
            kq += q * libm::log2(q / m);
        }
    }
    libm::sqrt((0.5 * (kp + kq)).clamp(0.0, 1.0))
}

/// Nucleus-truncated distribution at the pronoun, replaced by one mask.
pub fn pronoun_distribution(inst: &SchemaInstance, model: &mut dyn LanguageModel, p: f64) -> Result<TruncatedDistribution, BridgeError> {
    let ctx = tokenize_checked(model, &inst.tokens)?;
    let span = ctx.token_span(inst.pronoun_span);
    let mut tokens = ctx.tokens[..span.start].to_vec();
    tokens.push(model.info().mask_token);
    tokens.extend_from_slice(&ctx.tokens[span.end..]);
    let q = MaskQuery { tokens, mask_positions: alloc::vec![span.start], head_mask: Vec::new(), nucleus_p: Some(p) };
    Ok(distributions_checked(model, &q)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PronounShift {
    pub distance: f64,
    /// Entries kept by truncation for the original and perturbed instance.
    pub retained: [usize; 2],
}

pub fn pronoun_distribution_shift(
    orig: &SchemaInstance,
    pert: &SchemaInstance,
    model: &mut dyn LanguageModel,
    p: f64,
) -> Result<PronounShift, BridgeError> {
    let a = pronoun_distribution(orig, model, p)?;
    let b = pronoun_distribution(pert, model, p)?;
    Ok(PronounShift { distance: js_distance(&a, &b), retained: [a.entries.len(), b.entries.len()] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionShift {
    pub mean_distance: f64,
    pub mean_retained: [f64; 2],
    pub population: Vec<String>,
}

fn aligned<'a>(
    orig: &'a Dataset,
    pert: &'a PerturbedDataset,
    ids: Option<&BTreeSet<String>>,
) -> Vec<(&'a str, &'a SchemaInstance, &'a SchemaInstance)> {
    pert.instances
        .iter()
        .filter(|(o, _)| ids.is_none_or(|s| s.contains(o)))
        .filter_map(|(o, p)| orig.get(o).map(|oi| (o.as_str(), oi, p)))
        .collect()
}

/// Mean pronoun distribution shift over aligned origins (optionally only
/// those in `ids`).
pub fn mean_distribution_shift(
    orig: &Dataset,
    pert: &PerturbedDataset,
    ids: Option<&BTreeSet<String>>,
    model: &mut dyn LanguageModel,
    p: f64,
) -> Result<DistributionShift, MetricError> {
    let pairs = aligned(orig, pert, ids);
    if pairs.is_empty() {
        return Err(MetricError::NoOverlap);
    }
    let mut dist = 0.0;
    let mut kept = [0.0; 2];
    for (_, o, q) in &pairs {
        let s = pronoun_distribution_shift(o, q, model, p)?;
        dist += s.distance;
        kept[0] += s.retained[0] as f64;
        kept[1] += s.retained[1] as f64;
    }
    let n = pairs.len() as f64;
    Ok(DistributionShift {
        mean_distance: dist / n,
        mean_retained: [kept[0] / n, kept[1] / n],
        population: pairs.iter().map(|(o, _, _)| o.to_string()).collect(),
    })
}

/// Mean correlation distance over `(id, original, perturbed)` vectors;
/// constant vectors are excluded.
pub fn representation_distance(pairs: &[(String, Vec<f64>, Vec<f64>)]) -> Result<Metric, MetricError> {
    let mut sum = 0.0;
    let mut population = Vec::new();
    let mut excluded = Vec::new();
    for (id, a, b) in pairs {
        match stats::correlation_distance(a, b) {
            Some(d) => {
                sum += d;
                population.push(id.clone());
            }
            None => excluded.push((id.clone(), "zero-variance or mismatched vectors".into())),
        }
    }
    if population.is_empty() {
        return Err(MetricError::EmptyPopulation("representation distance"));
    }
    Ok(Metric { value: sum / population.len() as f64, population, excluded })
}

/// Representation distance of max-pooled hidden states over aligned origins.
pub fn mean_representation_distance(
    orig: &Dataset,
    pert: &PerturbedDataset,
    ids: Option<&BTreeSet<String>>,
    model: &mut dyn LanguageModel,
) -> Result<Metric, MetricError> {
    let mut vectors = Vec::new();
    for (o, oi, pi) in aligned(orig, pert, ids) {
        let a = tokenize_checked(model, &oi.tokens)?;
        let b = tokenize_checked(model, &pi.tokens)?;
        vectors.push((o.to_string(), hidden_state_checked(model, &a.tokens)?, hidden_state_checked(model, &b.tokens)?));
    }
    representation_distance(&vectors)
}
