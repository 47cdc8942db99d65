//! Evaluation and attention runs: loading inputs, producing score sets,
//! computing every metric and writing the report files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use winoprobe_core::attention::{
    aggregate_by_pos, attention_diff_map, attention_shift_ranking, head_importance, masking_curve, MaskingCurve, MaskingOrder,
};
use winoprobe_core::bridge::{Capability, LanguageModel};
use winoprobe_core::metrics::{
    accuracy, associative_split, delta_acc, marginal_sets, mean_distribution_shift, mean_representation_distance, pair_accuracy,
    probability_shift, right_wrong_correlation, second_referent_preference, stability, Metric, MetricError, StabilityDenominator,
};
use winoprobe_core::pmi::{dataset_divergence, CooccurrenceTable};
use winoprobe_core::schema::{common_subset, mask_discriminatory, switch_referents, Dataset, PerturbationKind, PerturbedDataset};
use winoprobe_core::scoring::{batch_score, perturbed_scorables, restrict, score_fingerprint, scorables, Backend, Scorable, ScoreSet, Strategy};
use winoprobe_core::seed::{fnv1a64, Fingerprint};
use winoprobe_core::perturb::perturb_dataset;

use crate::config::{MetricName, RunConfig};
use crate::dataset::{dataset_bytes, load_dataset, load_perturbed, perturbed_bytes};
use crate::error::{Error, Result};
use crate::lexicon;
use crate::pmi_file::load_table_checked;
use crate::report::{fmt6, six, six_opt, write_atomic, Cell, OutputLock, Table};
use crate::scores::{canonicalize, load_scores};

pub const ORIGINAL: &str = "original";
pub const MASKED: &str = "masked";
pub const MASKED_SWITCHED: &str = "masked_switched";
pub const MASK_WORD: &str = "[MASK]";

/// Human results in percent: original, the seven kinds, average, average Δ.
pub const HUMAN_ACCURACY: [(&str, f64); 10] = [
    ("orig", 97.89),
    ("TEN", 96.79),
    ("NUM", 94.46),
    ("GEN", 92.25),
    ("VC", 92.27),
    ("RC", 91.16),
    ("ADV", 95.40),
    ("SYNNA", 96.14),
    ("avg", 94.41),
    ("avg_delta", -3.83),
];

/// Human stability in percent: the seven kinds and their average.
pub const HUMAN_STABILITY: [(&str, f64); 8] = [
    ("TEN", 96.70),
    ("NUM", 94.9),
    ("GEN", 92.9),
    ("VC", 91.18),
    ("RC", 91.11),
    ("ADV", 96.11),
    ("SYNNA", 96.1),
    ("avg", 94.31),
];

fn label(code: &str) -> &str {
    if code == "SYNNA" {
        "SYN/NA"
    } else {
        code
    }
}

/// Everything a run reads, loaded and checked.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub dataset: Dataset,
    /// One per kind, in [`PerturbationKind::ALL`] order.
    pub perturbed: Vec<PerturbedDataset>,
    pub table: Option<CooccurrenceTable>,
    pub precomputed: Vec<ScoreSet>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        cfg.check()?;
        let dataset = load_dataset(&cfg.dataset)?;
        let mut perturbed = Vec::new();
        if cfg.perturbed.is_empty() {
            let lex = lexicon::bundle(cfg.lexicon.as_deref())?;
            for kind in PerturbationKind::ALL {
                perturbed.push(perturb_dataset(&dataset, kind, &lex, cfg.seed));
            }
        } else {
            for p in &cfg.perturbed {
                perturbed.push(load_perturbed(p, Some(&dataset))?);
            }
        }
        perturbed.sort_by_key(|p| p.kind);
        if let Some(w) = perturbed.windows(2).find(|w| w[0].kind == w[1].kind) {
            return Err(Error::Config(format!("two perturbed files of kind {}", w[0].kind.code())));
        }
        let table = cfg.pmi.table.as_deref().map(|p| load_table_checked(p, &cfg.pmi.config)).transpose()?;
        let precomputed = cfg.scores.iter().map(|p| load_scores(p)).collect::<Result<Vec<_>>>()?;
        Ok(Inputs { dataset, perturbed, table, precomputed })
    }

    pub fn common(&self) -> Option<BTreeSet<String>> {
        common_subset(&self.perturbed).ok()
    }
}

/// The derived datasets scored besides the original and the perturbations.
#[derive(Debug, Clone)]
pub struct Derived {
    pub masked: Dataset,
    pub masked_switched: Dataset,
}

impl Derived {
    pub fn new(d: &Dataset) -> Result<Self> {
        let masked = Dataset::new(d.instances().iter().map(|i| mask_discriminatory(i, MASK_WORD)).collect())?;
        let switched = d.instances().iter().filter_map(|i| switch_referents(i).ok()).map(|i| mask_discriminatory(&i, MASK_WORD)).collect();
        Ok(Derived { masked, masked_switched: Dataset::new(switched)? })
    }
}

fn is_model(s: Strategy) -> bool {
    s != Strategy::PmiBaseline
}

/// Names of the sets scored with `strategy`, each with its items.
pub fn score_items<'a>(strategy: Strategy, inputs: &'a Inputs, derived: &'a Derived) -> Vec<(String, Vec<Scorable<'a>>)> {
    let mut out = vec![(ORIGINAL.to_string(), scorables(&inputs.dataset))];
    for p in &inputs.perturbed {
        out.push((p.kind.code().to_string(), perturbed_scorables(p)));
    }
    if is_model(strategy) {
        out.push((MASKED.to_string(), scorables(&derived.masked)));
        out.push((MASKED_SWITCHED.to_string(), scorables(&derived.masked_switched)));
    }
    out
}

pub type SetKey = (Strategy, String);

/// Takes score sets from the precomputed files or computes them. With
/// `require_all`, missing sources are all reported before anything is
/// scored; otherwise sets without a source are left out.
pub fn score_sets(
    cfg: &RunConfig,
    inputs: &Inputs,
    derived: &Derived,
    mut model: Option<&mut (dyn LanguageModel + '_)>,
    require_all: bool,
) -> Result<BTreeMap<SetKey, ScoreSet>> {
    let mut pre: BTreeMap<SetKey, &ScoreSet> = BTreeMap::new();
    for s in &inputs.precomputed {
        if pre.insert((s.strategy, s.dataset.clone()), s).is_some() {
            return Err(Error::Config(format!("two score files for {} / {}", s.strategy, s.dataset)));
        }
    }
    let mut missing = Vec::new();
    for &strategy in &cfg.strategies {
        for (name, _) in score_items(strategy, inputs, derived) {
            if pre.contains_key(&(strategy, name.clone())) {
                continue;
            }
            if is_model(strategy) && model.is_none() {
                missing.push(format!("{strategy}/{name} (no score file and no adapter)"));
            }
            if !is_model(strategy) && inputs.table.is_none() {
                missing.push(format!("{strategy}/{name} (no score file and no PMI table)"));
            }
        }
    }
    if require_all && !missing.is_empty() {
        return Err(Error::Missing(format!("missing score sources: {}", missing.join(", "))));
    }
    let mut out = BTreeMap::new();
    for &strategy in &cfg.strategies {
        for (name, items) in score_items(strategy, inputs, derived) {
            let key = (strategy, name.clone());
            let set = match pre.get(&key) {
                Some(s) => {
                    let want = score_fingerprint(&items, &s.adapter, strategy, &cfg.scoring, s.seed);
                    if want != s.fingerprint {
                        return Err(Error::Config(format!("score file for {strategy}/{name} was computed on different inputs or options")));
                    }
                    (*s).clone()
                }
                None => {
                    let mut backend = match (strategy, model.as_deref_mut(), inputs.table.as_ref()) {
                        (Strategy::PmiBaseline, _, Some(t)) => Backend::Pmi(t),
                        (s, Some(m), _) if is_model(s) => Backend::Model(m),
                        _ => continue,
                    };
                    let mut s = batch_score(&name, &items, &mut backend, strategy, &cfg.scoring, cfg.seed)
                        .map_err(|e| Error::Adapter(format!("scoring {strategy}/{name}: {e}")))?;
                    canonicalize(&mut s);
                    s
                }
            };
            out.insert(key, set);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub metric: String,
    pub perturbation: String,
    pub strategy: String,
    pub population: String,
    pub n: usize,
    #[serde(serialize_with = "six_opt")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindCount {
    pub kind: String,
    pub written: usize,
    pub skipped: usize,
    pub reasons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub strategy: String,
    pub perturbation: String,
    pub id: String,
    #[serde(serialize_with = "six")]
    pub correct: f64,
    #[serde(serialize_with = "six")]
    pub incorrect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalRow {
    pub strategy: String,
    pub set: String,
    pub rank: usize,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanReference {
    pub accuracy_percent: BTreeMap<String, f64>,
    pub stability_percent: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub seed: u64,
    pub adapter: Option<String>,
    pub strategies: Vec<Strategy>,
    pub original: usize,
    pub counts: Vec<KindCount>,
    pub common_subset: Option<usize>,
    pub metrics: Vec<Row>,
    pub probability_shifts: Vec<ShiftRow>,
    pub marginal: Vec<MarginalRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_reference: Option<HumanReference>,
    pub notes: Vec<String>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

struct Collector<'a> {
    selected: &'a BTreeSet<MetricName>,
    rows: Vec<Row>,
    notes: Vec<String>,
}

impl Collector<'_> {
    fn on(&self, m: MetricName) -> bool {
        self.selected.contains(&m)
    }

    fn put(&mut self, metric: &str, pert: &str, strategy: &str, population: &str, r: std::result::Result<(f64, usize), String>) -> Option<f64> {
        let (value, n) = match r {
            Ok((v, n)) => (Some(v), n),
            Err(e) => {
                self.notes.push(format!("{metric} {pert} {strategy} {population}: {e}"));
                (None, 0)
            }
        };
        self.rows.push(Row {
            metric: metric.into(),
            perturbation: pert.into(),
            strategy: strategy.into(),
            population: population.into(),
            n,
            value,
        });
        value
    }

    fn metric(&mut self, metric: &str, pert: &str, strategy: &str, population: &str, r: std::result::Result<Metric, MetricError>) -> Option<f64> {
        self.put(metric, pert, strategy, population, r.map(|m| (m.value, m.population.len())).map_err(|e| e.to_string()))
    }
}

fn counts(inputs: &Inputs) -> Vec<KindCount> {
    inputs
        .perturbed
        .iter()
        .map(|p| {
            let mut reasons = BTreeMap::new();
            for s in &p.skipped {
                *reasons.entry(s.reason.to_string()).or_default() += 1;
            }
            KindCount { kind: p.kind.code().into(), written: p.instances.len(), skipped: p.skipped.len(), reasons }
        })
        .collect()
}

/// Content fingerprint of an evaluation: inputs, score sets and options.
pub fn run_fingerprint(cfg: &RunConfig, inputs: &Inputs, sets: &BTreeMap<SetKey, ScoreSet>, adapter: Option<&str>) -> String {
    let mut f = Fingerprint::new();
    f.str("winoprobe-eval").u64(fnv1a64(&dataset_bytes(&inputs.dataset)));
    for p in &inputs.perturbed {
        f.u64(fnv1a64(&perturbed_bytes(p)));
    }
    for ((s, name), set) in sets {
        f.str(s.name()).str(name).str(&set.fingerprint);
    }
    f.str(adapter.unwrap_or("")).u64(cfg.seed).f64(cfg.nucleus_p).f64(cfg.marginal_q).u64(u64::from(cfg.human_reference));
    for m in cfg.selected() {
        f.str(m.name());
    }
    if let Some(t) = &inputs.table {
        f.str(&t.config().fingerprint()).u64(t.pair_rows() as u64);
    }
    f.u64(cfg.scoring.pmi_scope as u64).str(cfg.attn.target.name()).u64(cfg.attn.top as u64);
    f.hex()
}

/// Computes every selected metric. Failures become notes and NA rows.
pub fn evaluate(
    cfg: &RunConfig,
    inputs: &Inputs,
    sets: &BTreeMap<SetKey, ScoreSet>,
    mut model: Option<&mut (dyn LanguageModel + '_)>,
) -> EvalReport {
    let selected = cfg.selected();
    let mut c = Collector { selected: &selected, rows: Vec::new(), notes: Vec::new() };
    let common = inputs.common();
    let mut shifts = Vec::new();
    let mut marginal = Vec::new();

    for &strategy in &cfg.strategies {
        let sn = strategy.name();
        let Some(orig) = sets.get(&(strategy, ORIGINAL.into())) else { continue };
        if c.on(MetricName::Accuracy) {
            c.metric("accuracy", ORIGINAL, sn, "all", accuracy(orig, None));
            if let Some(ids) = &common {
                c.metric("accuracy", ORIGINAL, sn, "common", accuracy(orig, Some(ids)));
            }
        }
        if c.on(MetricName::PairAccuracy) {
            c.metric("pair_accuracy", ORIGINAL, sn, "all", pair_accuracy(orig));
        }
        if c.on(MetricName::Associative) {
            let (a, n) = associative_split(orig, &inputs.dataset);
            let na = inputs.dataset.instances().iter().filter(|i| i.associative).count();
            c.put("associative", ORIGINAL, sn, "associative", a.map(|v| (v, na)).ok_or_else(|| "empty subset".into()));
            c.put("associative", ORIGINAL, sn, "non_associative", n.map(|v| (v, orig.len() - na)).ok_or_else(|| "empty subset".into()));
        }
        if c.on(MetricName::RightWrong) {
            match right_wrong_correlation(orig) {
                Ok(rw) => {
                    for (k, pos) in ["first", "second"].into_iter().enumerate() {
                        c.put("right_wrong", ORIGINAL, sn, pos, rw.rho[k].map(|v| (v, rw.pairs)).ok_or_else(|| "constant scores".into()));
                    }
                }
                Err(e) => {
                    c.put("right_wrong", ORIGINAL, sn, "first", Err(e.to_string()));
                }
            }
        }
        if c.on(MetricName::Marginal) {
            match marginal_sets(orig, cfg.marginal_q) {
                Ok(m) => {
                    c.put("marginal_pair_overlap", ORIGINAL, sn, "all", Ok((m.pair_overlap, m.top.len())));
                    c.put("marginal_example_overlap", ORIGINAL, sn, "all", Ok((m.example_overlap, m.top.len())));
                    for (set, ids) in [("top", &m.top), ("bottom", &m.bottom)] {
                        for (rank, id) in ids.iter().enumerate() {
                            marginal.push(MarginalRow { strategy: sn.into(), set: set.into(), rank: rank + 1, id: id.clone() });
                        }
                    }
                }
                Err(e) => {
                    c.put("marginal_pair_overlap", ORIGINAL, sn, "all", Err(e.to_string()));
                }
            }
        }
        if c.on(MetricName::SecondReferent) {
            if let Some(masked) = sets.get(&(strategy, MASKED.into())) {
                c.metric("second_referent", MASKED, sn, "all", second_referent_preference(masked));
                let switchable: BTreeSet<String> = inputs.dataset.instances().iter().filter(|i| i.switchable).map(|i| i.id.clone()).collect();
                let sub = restrict(masked, |p| switchable.contains(&p.id));
                c.metric("second_referent", MASKED, sn, "switchable", second_referent_preference(&sub));
            }
            if let Some(sw) = sets.get(&(strategy, MASKED_SWITCHED.into())) {
                c.metric("second_referent", MASKED_SWITCHED, sn, "switchable", second_referent_preference(sw));
            }
        }

        let mut accs = Vec::new();
        let mut deltas = Vec::new();
        let mut stabs = Vec::new();
        for p in &inputs.perturbed {
            let code = p.kind.code();
            let Some(pert) = sets.get(&(strategy, code.into())) else { continue };
            let in_common = |id: &str| common.as_ref().is_some_and(|ids| ids.contains(id));
            let pert_common = restrict(pert, |q| in_common(q.source_id()));
            if c.on(MetricName::Accuracy) {
                accs.extend(c.metric("accuracy", code, sn, "all", accuracy(pert, None)));
                if common.is_some() {
                    c.metric("accuracy", code, sn, "common", accuracy(&pert_common, None));
                }
            }
            if c.on(MetricName::DeltaAcc) {
                deltas.extend(c.put("delta_acc", code, sn, "all", delta_acc(pert, orig).map(|v| (v, pert.len())).map_err(|e| e.to_string())));
            }
            if c.on(MetricName::PairAccuracy) {
                c.metric("pair_accuracy", code, sn, "all", pair_accuracy(pert));
            }
            if c.on(MetricName::Stability) {
                stabs.extend(c.metric("stability", code, sn, "all", stability(orig, pert, StabilityDenominator::Perturbed)));
                c.metric("stability", code, sn, "all_origins", stability(orig, pert, StabilityDenominator::AllOrigins));
                if common.is_some() {
                    let orig_common = restrict(orig, |q| in_common(&q.id));
                    c.metric("stability", code, sn, "common", stability(&orig_common, &pert_common, StabilityDenominator::Perturbed));
                }
            }
            if c.on(MetricName::Associative) {
                match p.to_dataset() {
                    Ok(d) => {
                        let (a, n) = associative_split(pert, &d);
                        let na = d.instances().iter().filter(|i| i.associative).count();
                        c.put("associative", code, sn, "associative", a.map(|v| (v, na)).ok_or_else(|| "empty subset".into()));
                        c.put("associative", code, sn, "non_associative", n.map(|v| (v, pert.len() - na)).ok_or_else(|| "empty subset".into()));
                    }
                    Err(e) => {
                        c.put("associative", code, sn, "associative", Err(e.to_string()));
                    }
                }
            }
            if c.on(MetricName::ProbabilityShift) {
                match probability_shift(orig, pert) {
                    Ok(ps) => {
                        c.put("probability_shift", code, sn, "all", Ok((ps.summary, ps.shifts.len())));
                        for (id, cs, is) in ps.shifts {
                            shifts.push(ShiftRow { strategy: sn.into(), perturbation: code.into(), id, correct: cs, incorrect: is });
                        }
                    }
                    Err(e) => {
                        c.put("probability_shift", code, sn, "all", Err(e.to_string()));
                    }
                }
            }
            if c.on(MetricName::RightWrong) {
                if let Ok(rw) = right_wrong_correlation(pert) {
                    for (k, pos) in ["first", "second"].into_iter().enumerate() {
                        c.put("right_wrong", code, sn, pos, rw.rho[k].map(|v| (v, rw.pairs)).ok_or_else(|| "constant scores".into()));
                    }
                }
            }
        }
        if !inputs.perturbed.is_empty() {
            let n = inputs.perturbed.len();
            if c.on(MetricName::Accuracy) {
                c.put("accuracy", "avg", sn, "all", mean(&accs).map(|v| (v, n)).ok_or_else(|| "no values".into()));
            }
            if c.on(MetricName::DeltaAcc) {
                c.put("delta_acc", "avg", sn, "all", mean(&deltas).map(|v| (v, n)).ok_or_else(|| "no values".into()));
            }
            if c.on(MetricName::Stability) {
                c.put("stability", "avg", sn, "all", mean(&stabs).map(|v| (v, n)).ok_or_else(|| "no values".into()));
            }
        }
    }

    if let Some(m) = model.as_deref_mut() {
        let info = m.info().clone();
        for p in &inputs.perturbed {
            let code = p.kind.code();
            if c.on(MetricName::JsDistance) {
                if info.has(Capability::Distributions) {
                    for (pop, ids) in [("all", None), ("common", common.as_ref())] {
                        if pop == "common" && ids.is_none() {
                            continue;
                        }
                        match mean_distribution_shift(&inputs.dataset, p, ids, &mut *m, cfg.nucleus_p) {
                            Ok(d) => {
                                let n = d.population.len();
                                c.put("js_distance", code, "-", pop, Ok((d.mean_distance, n)));
                                c.put("retained_original", code, "-", pop, Ok((d.mean_retained[0], n)));
                                c.put("retained_perturbed", code, "-", pop, Ok((d.mean_retained[1], n)));
                            }
                            Err(e) => {
                                c.put("js_distance", code, "-", pop, Err(e.to_string()));
                            }
                        }
                    }
                } else {
                    c.notes.push(format!("js_distance {code}: adapter lacks distributions"));
                }
            }
            if c.on(MetricName::Representation) {
                if info.has(Capability::HiddenStates) {
                    c.metric("representation", code, "-", "all", mean_representation_distance(&inputs.dataset, p, None, &mut *m));
                } else {
                    c.notes.push(format!("representation {code}: adapter lacks hidden states"));
                }
            }
        }
    } else if c.on(MetricName::JsDistance) || c.on(MetricName::Representation) {
        c.notes.push("js_distance and representation need an adapter; skipped".into());
    }

    if c.on(MetricName::PmiDivergence) {
        match &inputs.table {
            Some(t) => {
                for p in &inputs.perturbed {
                    let r = dataset_divergence(&inputs.dataset, p, t, cfg.scoring.pmi_scope).map(|v| (v, p.instances.len()));
                    c.put("pmi_divergence", p.kind.code(), "-", "all", r.map_err(|e| e.to_string()));
                }
            }
            None => c.notes.push("pmi_divergence needs a PMI table; skipped".into()),
        }
    }

    let adapter = sets.iter().find(|((s, _), _)| is_model(*s)).map(|(_, set)| set.adapter.clone());
    EvalReport {
        fingerprint: run_fingerprint(cfg, inputs, sets, adapter.as_deref()),
        seed: cfg.seed,
        adapter,
        strategies: cfg.strategies.clone(),
        original: inputs.dataset.len(),
        counts: counts(inputs),
        common_subset: common.as_ref().map(BTreeSet::len),
        metrics: c.rows,
        probability_shifts: shifts,
        marginal,
        human_reference: cfg.human_reference.then(|| HumanReference {
            accuracy_percent: HUMAN_ACCURACY.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            stability_percent: HUMAN_STABILITY.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }),
        notes: c.notes,
    }
}

impl EvalReport {
    pub fn value(&self, metric: &str, perturbation: &str, strategy: &str, population: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|r| r.metric == metric && r.perturbation == perturbation && r.strategy == strategy && r.population == population)
            .and_then(|r| r.value)
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn metrics_table(&self) -> Table {
        let mut t = Table::new(&["metric", "perturbation", "strategy", "population", "n", "value"]);
        for r in &self.metrics {
            t.push(vec![r.metric.clone().into(), r.perturbation.clone().into(), r.strategy.clone().into(), r.population.clone().into(), r.n.into(), r.value.into()]);
        }
        t
    }

    pub fn shift_table(&self) -> Table {
        let mut t = Table::new(&["strategy", "perturbation", "id", "correct_shift", "incorrect_shift"]);
        for r in &self.probability_shifts {
            t.push(vec![r.strategy.clone().into(), r.perturbation.clone().into(), r.id.clone().into(), r.correct.into(), r.incorrect.into()]);
        }
        t
    }

    pub fn marginal_table(&self) -> Table {
        let mut t = Table::new(&["strategy", "set", "rank", "id"]);
        for r in &self.marginal {
            t.push(vec![r.strategy.clone().into(), r.set.clone().into(), r.rank.into(), r.id.clone().into()]);
        }
        t
    }

    pub fn counts_table(&self) -> Table {
        let mut t = Table::new(&["perturbation", "written", "skipped"]);
        t.push(vec![ORIGINAL.into(), self.original.into(), 0usize.into()]);
        for k in &self.counts {
            t.push(vec![k.kind.clone().into(), k.written.into(), k.skipped.into()]);
        }
        t
    }

    /// Accuracy and stability tables in percent, one row per strategy.
    pub fn tables_text(&self) -> String {
        let kinds: Vec<&str> = self.counts.iter().map(|k| k.kind.as_str()).collect();
        let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| fmt6(100.0 * x));
        let mut out = format!("# fingerprint={} seed={}\n\nAccuracy (%)\n", self.fingerprint, self.seed);
        let mut head = vec!["model", "orig"];
        head.extend(kinds.iter().map(|k| label(k)));
        head.extend(["Avg", "AvgDelta"]);
        out.push_str(&head.join("\t"));
        out.push('\n');
        for s in &self.strategies {
            let sn = s.name();
            let mut row = vec![sn.to_string(), pct(self.value("accuracy", ORIGINAL, sn, "all"))];
            row.extend(kinds.iter().map(|k| pct(self.value("accuracy", k, sn, "all"))));
            row.push(pct(self.value("accuracy", "avg", sn, "all")));
            row.push(pct(self.value("delta_acc", "avg", sn, "all")));
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        if let Some(h) = &self.human_reference {
            let mut row = vec!["humans".to_string(), fmt6(h.accuracy_percent["orig"])];
            row.extend(kinds.iter().map(|k| h.accuracy_percent.get(*k).map_or("NA".into(), |v| fmt6(*v))));
            row.push(fmt6(h.accuracy_percent["avg"]));
            row.push(fmt6(h.accuracy_percent["avg_delta"]));
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out.push_str("\nStability (%)\n");
        let mut head = vec!["model"];
        head.extend(kinds.iter().map(|k| label(k)));
        head.push("Avg");
        out.push_str(&head.join("\t"));
        out.push('\n');
        for s in &self.strategies {
            let sn = s.name();
            let mut row = vec![sn.to_string()];
            row.extend(kinds.iter().map(|k| pct(self.value("stability", k, sn, "all"))));
            row.push(pct(self.value("stability", "avg", sn, "all")));
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        if let Some(h) = &self.human_reference {
            let mut row = vec!["humans".to_string()];
            row.extend(kinds.iter().map(|k| h.stability_percent.get(*k).map_or("NA".into(), |v| fmt6(*v))));
            row.push(fmt6(h.stability_percent["avg"]));
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out.push_str("\nCounts\nperturbation\twritten\tskipped\n");
        out.push_str(&format!("{ORIGINAL}\t{}\t0\n", self.original));
        for k in &self.counts {
            out.push_str(&format!("{}\t{}\t{}\n", label(&k.kind), k.written, k.skipped));
        }
        if let Some(n) = self.common_subset {
            out.push_str(&format!("common\t{n}\t-\n"));
        }
        out
    }

    /// Writes every report file under `dir`, holding the directory lock.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let _lock = OutputLock::acquire(dir)?;
        let (fp, seed) = (self.fingerprint.as_str(), self.seed);
        write_atomic(&dir.join("report.json"), self.json().as_bytes())?;
        write_atomic(&dir.join("metrics.tsv"), self.metrics_table().render(fp, seed).as_bytes())?;
        write_atomic(&dir.join("probability_shift.tsv"), self.shift_table().render(fp, seed).as_bytes())?;
        write_atomic(&dir.join("marginal.tsv"), self.marginal_table().render(fp, seed).as_bytes())?;
        write_atomic(&dir.join("counts.tsv"), self.counts_table().render(fp, seed).as_bytes())?;
        write_atomic(&dir.join("tables.txt"), self.tables_text().as_bytes())
    }
}

/// Opens the configured adapter when any step needs one.
pub fn open_model(cfg: &RunConfig) -> Result<Option<Box<dyn LanguageModel>>> {
    match &cfg.adapter {
        Some(loc) => Ok(Some(crate::adapter::open_adapter(loc)?)),
        None => Ok(None),
    }
}

/// Loads inputs, scores, evaluates and writes the report.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let inputs = Inputs::load(cfg)?;
    let derived = Derived::new(&inputs.dataset)?;
    let mut model = open_model(cfg)?;
    let sets = score_sets(cfg, &inputs, &derived, model.as_deref_mut(), true)?;
    let report = evaluate(cfg, &inputs, &sets, model.as_deref_mut());
    report.write(&cfg.out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnReport {
    pub fingerprint: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub diff: Table,
    pub importance: Table,
    pub curves: Vec<MaskingCurve>,
    pub shift: Option<Table>,
    pub pos: Option<Table>,
}

impl AttnReport {
    pub fn curves_table(&self) -> Table {
        let mut t = Table::new(&["order", "k", "layer", "head", "accuracy"]);
        for c in &self.curves {
            for (k, acc) in c.points.iter().enumerate() {
                let (l, h) = match k.checked_sub(1).map(|i| c.heads[i]) {
                    Some(hd) => (Cell::from(hd.layer), Cell::from(hd.head)),
                    None => (Cell::Missing, Cell::Missing),
                };
                t.push(vec![c.order.to_string().into(), k.into(), l, h, (*acc).into()]);
            }
        }
        t
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let _lock = OutputLock::acquire(dir)?;
        let (fp, seed) = (self.fingerprint.as_str(), self.seed);
        write_atomic(&dir.join("attn_diff.tsv"), self.diff.render(fp, seed).as_bytes())?;
        write_atomic(&dir.join("importance.tsv"), self.importance.render(fp, seed).as_bytes())?;
        write_atomic(&dir.join("curves.tsv"), self.curves_table().render(fp, seed).as_bytes())?;
        if let Some(t) = &self.shift {
            write_atomic(&dir.join("shift.tsv"), t.render(fp, seed).as_bytes())?;
        }
        if let Some(t) = &self.pos {
            write_atomic(&dir.join("pos.tsv"), t.render(fp, seed).as_bytes())?;
        }
        Ok(())
    }
}

fn attn_error(e: impl std::fmt::Display) -> Error {
    Error::Adapter(e.to_string())
}

/// Diff maps, head importance, masking curves in three orders and, with
/// perturbations, attention-shift rankings.
pub fn attention_report(cfg: &RunConfig, inputs: &Inputs, model: &mut dyn LanguageModel) -> Result<AttnReport> {
    let info = model.info().clone();
    for cap in [Capability::Attentions, Capability::HeadMasking] {
        if !info.has(cap) {
            return Err(Error::Adapter(format!(
                "adapter {} does not advertise the {} capability that attn needs; use an adapter that does (builtin:toy supports all)",
                info.id,
                cap.name()
            )));
        }
    }
    let strategy = cfg.strategies.iter().copied().find(|s| is_model(*s)).ok_or_else(|| {
        Error::Config("attn needs a model strategy (mask_substitution or context_option)".into())
    })?;
    let mut diff = Table::new(&["id", "layer", "head", "value"]);
    for inst in inputs.dataset.instances() {
        let m = attention_diff_map(inst, model).map_err(attn_error)?;
        for (l, row) in m.iter().enumerate() {
            for (h, v) in row.iter().enumerate() {
                diff.push(vec![inst.id.clone().into(), l.into(), h.into(), (*v).into()]);
            }
        }
    }
    let insts: Vec<_> = inputs.dataset.instances().iter().collect();
    let ranked = head_importance(&insts, model, cfg.attn.target).map_err(attn_error)?;
    let mut importance = Table::new(&["rank", "layer", "head", "target", "mass"]);
    for (i, (h, v)) in ranked.iter().enumerate() {
        importance.push(vec![(i + 1).into(), h.layer.into(), h.head.into(), cfg.attn.target.name().into(), (*v).into()]);
    }
    let ranking: Vec<_> = ranked.iter().map(|(h, _)| *h).collect();
    let items = scorables(&inputs.dataset);
    let mut curves = Vec::new();
    for order in [MaskingOrder::MostFirst, MaskingOrder::LeastFirst, MaskingOrder::Random(cfg.seed)] {
        curves.push(masking_curve(&items, model, &ranking, order, strategy, &cfg.scoring).map_err(attn_error)?);
    }
    let (mut shift, mut pos) = (None, None);
    if !inputs.perturbed.is_empty() {
        let mut st = Table::new(&["perturbation", "layer", "head", "rank", "word", "pos", "shift"]);
        let mut pt = Table::new(&["perturbation", "pos", "heads"]);
        for p in &inputs.perturbed {
            if p.instances.is_empty() {
                continue;
            }
            let code = p.kind.code();
            let r = attention_shift_ranking(&inputs.dataset, p, model, cfg.attn.top).map_err(attn_error)?;
            for hs in &r {
                for (i, t) in hs.tokens.iter().enumerate() {
                    let tag = t.pos.clone().map_or(Cell::Missing, Cell::Text);
                    st.push(vec![code.into(), hs.head.layer.into(), hs.head.head.into(), (i + 1).into(), t.word.clone().into(), tag, t.shift.into()]);
                }
            }
            for (tag, n) in aggregate_by_pos(&r) {
                pt.push(vec![code.into(), tag.into(), n.into()]);
            }
        }
        shift = Some(st);
        pos = Some(pt);
    }
    let mut f = Fingerprint::new();
    f.str("winoprobe-attn").u64(fnv1a64(&dataset_bytes(&inputs.dataset))).str(&info.id).str(strategy.name());
    for p in &inputs.perturbed {
        f.u64(fnv1a64(&perturbed_bytes(p)));
    }
    f.u64(cfg.seed).str(cfg.attn.target.name()).u64(cfg.attn.top as u64).u64(cfg.scoring.averaging as u64);
    Ok(AttnReport { fingerprint: f.hex(), seed: cfg.seed, strategy, diff, importance, curves, shift, pos })
}

pub fn run_attn(cfg: &RunConfig) -> Result<AttnReport> {
    let inputs = Inputs::load(cfg)?;
    let mut model = open_model(cfg)?.ok_or_else(|| Error::Missing("attn needs an adapter (--adapter builtin:toy or cmd:<program>)".into()))?;
    let report = attention_report(cfg, &inputs, model.as_mut())?;
    report.write(&cfg.out)?;
    Ok(report)
}
