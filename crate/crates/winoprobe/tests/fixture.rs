use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use winoprobe::config::RunConfig;
use winoprobe::pipeline::{evaluate, open_model, score_sets, Derived, Inputs, MASKED, MASKED_SWITCHED, ORIGINAL};
use winoprobe_core::schema::{mask_discriminatory, switch_referents, validate_pairs, PerturbationKind};
use winoprobe_core::scoring::{Prediction, ScoreSet, Strategy};

const TOL: f64 = 1e-12;

fn config() -> RunConfig {
    let mut cfg = RunConfig::for_dataset(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("resources/fixture.jsonl"));
    cfg.adapter = Some("builtin:toy".into());
    cfg.strategies = vec![Strategy::MaskSubstitution, Strategy::ContextOption];
    cfg.seed = 11;
    cfg
}

fn right(p: &Prediction) -> bool {
    let c = p.scores[p.correct];
    let w = p.scores[1 - p.correct];
    if p.correct == 0 { c >= w } else { c > w }
}

fn choice(p: &Prediction) -> usize {
    usize::from(p.scores[1] > p.scores[0])
}

fn frac(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

fn close(label: &str, got: Option<f64>, want: f64) {
    let got = got.unwrap_or_else(|| panic!("{label}: missing"));
    assert!((got - want).abs() <= TOL, "{label}: {got} vs {want}");
}

#[test]
fn pipeline_metrics_match_brute_force_counts() {
    let cfg = config();
    let inputs = Inputs::load(&cfg).unwrap();
    let derived = Derived::new(&inputs.dataset).unwrap();
    let mut model = open_model(&cfg).unwrap().unwrap();
    let sets = score_sets(&cfg, &inputs, &derived, Some(&mut *model), true).unwrap();
    let report = evaluate(&cfg, &inputs, &sets, Some(&mut *model));
    let assoc: BTreeMap<&str, bool> = inputs.dataset.instances().iter().map(|i| (i.id.as_str(), i.associative)).collect();

    for strategy in &cfg.strategies {
        let sn = strategy.name();
        let orig = &sets[&(*strategy, ORIGINAL.to_string())];
        let ps = &orig.predictions;
        close("orig accuracy", report.value("accuracy", ORIGINAL, sn, "all"), frac(ps.iter().filter(|p| right(p)).count(), ps.len()));

        let mut pairs: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
        for p in ps {
            pairs.entry(&p.pair_id).or_default().push(right(p));
        }
        let full: Vec<_> = pairs.values().filter(|v| v.len() == 2).collect();
        close("pair accuracy", report.value("pair_accuracy", ORIGINAL, sn, "all"), frac(full.iter().filter(|v| v[0] && v[1]).count(), full.len()));

        for (pop, flag) in [("associative", true), ("non_associative", false)] {
            let side: Vec<_> = ps.iter().filter(|p| assoc[p.id.as_str()] == flag).collect();
            if !side.is_empty() {
                close(pop, report.value("associative", ORIGINAL, sn, pop), frac(side.iter().filter(|p| right(p)).count(), side.len()));
            }
        }

        let masked = &sets[&(*strategy, MASKED.to_string())];
        let second = masked.predictions.iter().filter(|p| p.scores[1] > p.scores[0]).count();
        close("second referent", report.value("second_referent", MASKED, sn, "all"), frac(second, masked.len()));
        let sw = &sets[&(*strategy, MASKED_SWITCHED.to_string())];
        let second = sw.predictions.iter().filter(|p| p.scores[1] > p.scores[0]).count();
        close("second referent switched", report.value("second_referent", MASKED_SWITCHED, sn, "switchable"), frac(second, sw.len()));

        let by_id: BTreeMap<&str, &Prediction> = ps.iter().map(|p| (p.id.as_str(), p)).collect();
        let mut accs = Vec::new();
        let mut stabs = Vec::new();
        for kind in PerturbationKind::ALL {
            let code = kind.code();
            let pert: &ScoreSet = &sets[&(*strategy, code.to_string())];
            let qs = &pert.predictions;
            let acc = frac(qs.iter().filter(|p| right(p)).count(), qs.len());
            close(code, report.value("accuracy", code, sn, "all"), acc);
            accs.push(acc);
            let origins: BTreeSet<&str> = qs.iter().map(|q| q.origin_id.as_deref().unwrap()).collect();
            let base = frac(origins.iter().filter(|o| right(by_id[*o])).count(), origins.len());
            close("delta", report.value("delta_acc", code, sn, "all"), acc - base);
            let same = qs.iter().filter(|q| choice(q) == choice(by_id[q.origin_id.as_deref().unwrap()])).count();
            close("stability", report.value("stability", code, sn, "all"), frac(same, qs.len()));
            close("stability all origins", report.value("stability", code, sn, "all_origins"), frac(same, ps.len()));
            stabs.push(frac(same, qs.len()));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        close("avg accuracy", report.value("accuracy", "avg", sn, "all"), mean(&accs));
        close("avg stability", report.value("stability", "avg", sn, "all"), mean(&stabs));
    }
    assert!(report.value("js_distance", "NUM", "-", "all").is_some());
    assert!(report.value("representation", "GEN", "-", "all").is_some());
}

#[test]
fn fixture_perturbations_and_manipulations_hold_their_invariants() {
    let cfg = config();
    let inputs = Inputs::load(&cfg).unwrap();
    assert!(validate_pairs(&inputs.dataset).is_empty());
    assert_eq!(inputs.perturbed.len(), PerturbationKind::ALL.len());
    for p in &inputs.perturbed {
        p.validate_against(&inputs.dataset).unwrap();
        assert_eq!(p.instances.len() + p.skipped.len(), inputs.dataset.len(), "{}", p.kind.code());
    }
    let common = inputs.common().unwrap();
    for p in &inputs.perturbed {
        assert!(common.iter().all(|id| p.instances.iter().any(|(o, _)| o == id)));
    }
    for inst in inputs.dataset.instances() {
        let m = mask_discriminatory(inst, "[MASK]");
        m.validate().unwrap();
        assert_eq!(m.tokens.len(), inst.tokens.len());
        for (i, (a, b)) in inst.tokens.iter().zip(&m.tokens).enumerate() {
            if inst.discriminatory_span.contains(i) {
                assert_eq!(b, "[MASK]");
            } else {
                assert_eq!(a, b);
            }
        }
        match switch_referents(inst) {
            Ok(s) => {
                assert!(inst.switchable);
                s.validate().unwrap();
                assert_eq!(s.correct().surface.to_lowercase(), inst.correct().surface.to_lowercase());
                assert_ne!(s.correct_index, inst.correct_index);
                let back = switch_referents(&s).unwrap();
                assert_eq!(back.tokens, inst.tokens);
                assert_eq!(back.referents, inst.referents);
                assert_eq!(back.correct_index, inst.correct_index);
            }
            Err(_) => assert!(!inst.switchable),
        }
    }
}
