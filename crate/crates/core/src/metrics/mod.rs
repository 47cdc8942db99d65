//! Evaluation measures over score sets.

mod distribution;
pub mod stats;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::Dataset;
use crate::scoring::{Prediction, ScoreSet};

pub use distribution::{
    js_distance, mean_distribution_shift, mean_representation_distance, pronoun_distribution_shift, representation_distance, DistributionShift,
    PronounShift,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("empty population for {0}")]
    EmptyPopulation(&'static str),
    #[error("no overlap between the score sets")]
    NoOverlap,
    #[error("{0} usable pairs, at least 3 needed")]
    TooFewPairs(usize),
    #[error("quantile {q} of {n} predictions is empty")]
    EmptyQuantile { n: usize, q: String },
    #[error("no complete pairs")]
    NoCompletePairs,
    #[error(transparent)]
    Bridge(#[from] crate::bridge::BridgeError),
}

/// A value with the ids it was computed over and those left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub population: Vec<String>,
    pub excluded: Vec<(String, String)>,
}

fn ratio(hits: usize, n: usize, what: &'static str) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::EmptyPopulation(what));
    }
    Ok(hits as f64 / n as f64)
}

/// Fraction of predictions choosing the correct candidate, optionally over
/// the ids in `restrict`.
pub fn accuracy(s: &ScoreSet, restrict: Option<&BTreeSet<String>>) -> Result<Metric, MetricError> {
    let mut population = Vec::new();
    let mut excluded = Vec::new();
    let mut hits = 0;
    for p in &s.predictions {
        if restrict.is_some_and(|r| !r.contains(&p.id)) {
            excluded.push((p.id.clone(), "outside restriction".into()));
            continue;
        }
        hits += usize::from(p.is_correct());
        population.push(p.id.clone());
    }
    Ok(Metric { value: ratio(hits, population.len(), "accuracy")?, population, excluded })
}

/// `accuracy(pert) − accuracy(orig on pert's origin ids)`.
pub fn delta_acc(pert: &ScoreSet, orig: &ScoreSet) -> Result<f64, MetricError> {
    let origins: BTreeSet<String> = pert.predictions.iter().map(|p| p.source_id().to_string()).collect();
    let o = accuracy(orig, Some(&origins)).map_err(|_| MetricError::NoOverlap)?;
    let p = accuracy(pert, None)?;
    Ok(p.value - o.value)
}

fn by_pair(s: &ScoreSet) -> BTreeMap<&str, Vec<&Prediction>> {
    let mut pairs: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in &s.predictions {
        pairs.entry(p.pair_id.as_str()).or_default().push(p);
    }
    pairs
}

/// Fraction of complete pairs with both members correct. Population and
/// exclusions are pair ids.
pub fn pair_accuracy(s: &ScoreSet) -> Result<Metric, MetricError> {
    let mut population = Vec::new();
    let mut excluded = Vec::new();
    let mut hits = 0;
    for (pair, members) in by_pair(s) {
        if members.len() != 2 {
            excluded.push((pair.to_string(), "singleton".into()));
            continue;
        }
        hits += usize::from(members.iter().all(|p| p.is_correct()));
        population.push(pair.to_string());
    }
    if population.is_empty() {
        return Err(MetricError::NoCompletePairs);
    }
    Ok(Metric { value: hits as f64 / population.len() as f64, population, excluded })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityDenominator {
    /// Origins that have a perturbed counterpart.
    #[default]
    Perturbed,
    /// Every origin prediction.
    AllOrigins,
}

/// Fraction of perturbed predictions that choose the same candidate as
/// their origin. Population ids are perturbed ids.
pub fn stability(orig: &ScoreSet, pert: &ScoreSet, denominator: StabilityDenominator) -> Result<Metric, MetricError> {
    let origins: BTreeMap<&str, &Prediction> = orig.predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut population = Vec::new();
    let mut excluded = Vec::new();
    let mut same = 0;
    for p in &pert.predictions {
        match origins.get(p.source_id()) {
            Some(o) => {
                same += usize::from(o.chosen == p.chosen);
                population.push(p.id.clone());
            }
            None => excluded.push((p.id.clone(), "no origin prediction".into())),
        }
    }
    let n = match denominator {
        StabilityDenominator::Perturbed => population.len(),
        StabilityDenominator::AllOrigins => orig.predictions.len(),
    };
    Ok(Metric { value: ratio(same, n, "stability")?, population, excluded })
}

/// Accuracy over associative and non-associative instances; `None` for an
/// empty side. Flags come from `d`, looked up by id then by origin.
pub fn associative_split(s: &ScoreSet, d: &Dataset) -> (Option<f64>, Option<f64>) {
    let mut n = [0usize; 2];
    let mut hits = [0usize; 2];
    for p in &s.predictions {
        let Some(inst) = d.get(&p.id).or_else(|| d.get(p.source_id())) else { continue };
        let side = usize::from(!inst.associative);
        n[side] += 1;
        hits[side] += usize::from(p.is_correct());
    }
    let acc = |i: usize| (n[i] > 0).then(|| hits[i] as f64 / n[i] as f64);
    (acc(0), acc(1))
}

/// Fraction of predictions scoring the textually second candidate strictly
/// higher.
pub fn second_referent_preference(s: &ScoreSet) -> Result<Metric, MetricError> {
    let mut population = Vec::new();
    let mut excluded = Vec::new();
    let mut second = 0;
    for p in &s.predictions {
        if !p.is_defined() {
            excluded.push((p.id.clone(), "undefined score".into()));
            continue;
        }
        second += usize::from(p.scores[1] > p.scores[0]);
        population.push(p.id.clone());
    }
    Ok(Metric { value: ratio(second, population.len(), "second-referent preference")?, population, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSets {
    pub top: Vec<String>,
    pub bottom: Vec<String>,
    /// `|pairs(top) ∩ pairs(bottom)| / |pairs(top)|`
    pub pair_overlap: f64,
    /// Shared instance ids; zero unless the sets themselves overlap.
    pub example_overlap: f64,
}

/// Quantile size `⌊q·n⌋`.
pub fn quantile_size(q: f64, n: usize) -> usize {
    libm::floor(q * n as f64 + 1e-9) as usize
}

/// The `⌊q·N⌋` predictions with the largest margins and the `⌊q·N⌋` with
/// the smallest; margin ties are broken by id.
pub fn marginal_sets(s: &ScoreSet, q: f64) -> Result<MarginalSets, MetricError> {
    let mut ps: Vec<&Prediction> = s.predictions.iter().filter(|p| p.is_defined()).collect();
    let k = quantile_size(q, ps.len());
    if k == 0 {
        return Err(MetricError::EmptyQuantile { n: ps.len(), q: alloc::format!("{q}") });
    }
    ps.sort_by(|a, b| b.margin().total_cmp(&a.margin()).then_with(|| a.id.cmp(&b.id)));
    let top: Vec<&Prediction> = ps[..k].to_vec();
    ps.sort_by(|a, b| a.margin().total_cmp(&b.margin()).then_with(|| a.id.cmp(&b.id)));
    let bottom: Vec<&Prediction> = ps[..k].to_vec();
    let top_pairs: BTreeSet<&str> = top.iter().map(|p| p.pair_id.as_str()).collect();
    let bottom_pairs: BTreeSet<&str> = bottom.iter().map(|p| p.pair_id.as_str()).collect();
    let top_ids: BTreeSet<&str> = top.iter().map(|p| p.id.as_str()).collect();
    let shared = bottom.iter().filter(|p| top_ids.contains(p.id.as_str())).count();
    Ok(MarginalSets {
        pair_overlap: top_pairs.intersection(&bottom_pairs).count() as f64 / top_pairs.len() as f64,
        example_overlap: shared as f64 / k as f64,
        top: top.iter().map(|p| p.id.clone()).collect(),
        bottom: bottom.iter().map(|p| p.id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityShift {
    /// (perturbed id, correct-candidate shift, incorrect-candidate shift)
    pub shifts: Vec<(String, f64, f64)>,
    /// Mean correct shift minus mean incorrect shift.
    pub summary: f64,
}

/// Per-instance change of the correct and incorrect candidates' scores.
pub fn probability_shift(orig: &ScoreSet, pert: &ScoreSet) -> Result<ProbabilityShift, MetricError> {
    let origins: BTreeMap<&str, &Prediction> = orig.predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut shifts = Vec::new();
    for p in &pert.predictions {
        let Some(o) = origins.get(p.source_id()) else { continue };
        if !p.is_defined() || !o.is_defined() {
            continue;
        }
        let c = p.scores[p.correct] - o.scores[o.correct];
        let i = p.scores[1 - p.correct] - o.scores[1 - o.correct];
        shifts.push((p.id.clone(), c, i));
    }
    if shifts.is_empty() {
        return Err(MetricError::NoOverlap);
    }
    let n = shifts.len() as f64;
    let mc = shifts.iter().map(|s| s.1).sum::<f64>() / n;
    let mi = shifts.iter().map(|s| s.2).sum::<f64>() / n;
    Ok(ProbabilityShift { shifts, summary: mc - mi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RightWrong {
    /// ρ for the first and second candidate positions; `None` when a side
    /// is constant.
    pub rho: [Option<f64>; 2],
    pub pairs: usize,
}

/// For each candidate position, Spearman ρ between its score in the pair
/// member where it is correct and in the member where it is not.
pub fn right_wrong_correlation(s: &ScoreSet) -> Result<RightWrong, MetricError> {
    let mut when_right: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut when_wrong: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut pairs = 0;
    for (_, m) in by_pair(s) {
        let [a, b] = m.as_slice() else { continue };
        if a.correct == b.correct || !a.is_defined() || !b.is_defined() {
            continue;
        }
        let (first_right, second_right) = if a.correct == 0 { (a, b) } else { (b, a) };
        when_right[0].push(first_right.scores[0]);
        when_wrong[0].push(second_right.scores[0]);
        when_right[1].push(second_right.scores[1]);
        when_wrong[1].push(first_right.scores[1]);
        pairs += 1;
    }
    if pairs < 3 {
        return Err(MetricError::TooFewPairs(pairs));
    }
    Ok(RightWrong { rho: [0, 1].map(|k| stats::spearman(&when_right[k], &when_wrong[k])), pairs })
}

#[cfg(test)]
mod tests;
