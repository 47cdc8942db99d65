use super::*;
use crate::bridge::toy::{ToyConfig, ToyModel};
use crate::bridge::TruncatedDistribution;
use crate::scoring::{decide, Strategy};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// (id, pair, correct, [s0, s1])
fn set(rows: &[(&str, &str, usize, [f64; 2])]) -> ScoreSet {
    ScoreSet {
        dataset: "t".into(),
        strategy: Strategy::MaskSubstitution,
        adapter: "x".into(),
        fingerprint: String::new(),
        seed: 0,
        predictions: rows
            .iter()
            .map(|&(id, pair, correct, scores)| {
                let (chosen, tie) = decide(scores);
                Prediction {
                    id: id.into(),
                    origin_id: None,
                    pair_id: pair.into(),
                    correct,
                    scores,
                    token_counts: None,
                    chosen,
                    tie,
                    undefined: [false, false],
                }
            })
            .collect(),
    }
}

fn perturbed(s: &ScoreSet, suffix: &str) -> ScoreSet {
    let mut out = s.clone();
    for p in &mut out.predictions {
        p.origin_id = Some(p.id.clone());
        p.id = alloc::format!("{}-{suffix}", p.id);
    }
    out
}

fn four() -> ScoreSet {
    set(&[
        ("a", "p1", 0, [0.6, 0.4]),
        ("b", "p1", 1, [0.3, 0.7]),
        ("c", "p2", 0, [0.9, 0.1]),
        ("d", "p2", 1, [0.8, 0.2]),
    ])
}

#[test]
fn accuracy_counts() {
    let s = four();
    assert_eq!(accuracy(&s, None).unwrap().value, 0.75);
    let only: BTreeSet<String> = ["a", "d"].iter().map(|x| String::from(*x)).collect();
    let r = accuracy(&s, Some(&only)).unwrap();
    assert_eq!((r.value, r.population.len(), r.excluded.len()), (0.5, 2, 2));
    assert!(accuracy(&set(&[]), None).is_err());
}

#[test]
fn delta_against_the_origin_subset() {
    let s = four();
    assert_eq!(delta_acc(&s, &s).unwrap(), 0.0);
    let mut p = perturbed(&s, "x");
    p.predictions.retain(|q| q.origin_id.as_deref() != Some("d"));
    p.predictions[0].chosen = 1;
    p.predictions[2].chosen = 1;
    // pert: 1 of 3 correct; origins a, b, c: all correct.
    assert!((delta_acc(&p, &s).unwrap() - (1.0 / 3.0 - 1.0)).abs() < 1e-15);
}

#[test]
fn pairs_need_both_members() {
    let s = four();
    let r = pair_accuracy(&s).unwrap();
    assert_eq!(r.value, 0.5);
    let mut lone = s.clone();
    lone.predictions.pop();
    let r = pair_accuracy(&lone).unwrap();
    assert_eq!((r.value, r.excluded.len()), (1.0, 1));
}

#[test]
fn stability_modes() {
    let s = four();
    assert_eq!(stability(&s, &s, StabilityDenominator::Perturbed).unwrap().value, 1.0);
    let mut p = perturbed(&s, "x");
    p.predictions[3].chosen = 1 - p.predictions[3].chosen;
    assert_eq!(stability(&s, &p, StabilityDenominator::Perturbed).unwrap().value, 0.75);
    p.predictions.pop();
    assert_eq!(stability(&s, &p, StabilityDenominator::Perturbed).unwrap().value, 1.0);
    assert_eq!(stability(&s, &p, StabilityDenominator::AllOrigins).unwrap().value, 0.75);
}

#[test]
fn second_referent() {
    let s = four();
    assert_eq!(second_referent_preference(&s).unwrap().value, 0.25);
    let sym = set(&[("a", "p", 0, [0.5, 0.5]), ("b", "p", 1, [0.5, 0.5])]);
    assert_eq!(second_referent_preference(&sym).unwrap().value, 0.0);
}

#[test]
fn marginal_quantiles() {
    let rows: Vec<(String, String, usize, [f64; 2])> =
        (0..20).map(|i| (alloc::format!("i{i:02}"), alloc::format!("p{}", i / 2), 0, [i as f64 / 20.0, 0.5])).collect();
    let borrowed: Vec<(&str, &str, usize, [f64; 2])> = rows.iter().map(|r| (r.0.as_str(), r.1.as_str(), r.2, r.3)).collect();
    let m = marginal_sets(&set(&borrowed), 0.15).unwrap();
    assert_eq!(m.top, ["i19", "i18", "i17"]);
    assert_eq!(m.bottom, ["i00", "i01", "i02"]);
    assert_eq!(m.pair_overlap, 0.0);
    assert!(marginal_sets(&set(&borrowed[..5]), 0.15).is_err());
}

#[test]
fn twins_on_opposite_ends_overlap_fully() {
    // Each pair: one member strongly right, the twin strongly wrong.
    let s = set(&[
        ("a1", "A", 0, [0.9, 0.1]),
        ("a2", "A", 1, [0.9, 0.1]),
        ("b1", "B", 0, [0.5, 0.45]),
        ("b2", "B", 1, [0.45, 0.5]),
        ("c1", "C", 0, [0.5, 0.48]),
        ("c2", "C", 1, [0.48, 0.5]),
    ]);
    let m = marginal_sets(&s, 0.2).unwrap();
    assert_eq!((m.top.as_slice(), m.bottom.as_slice()), (&["a1".to_string()][..], &["a2".to_string()][..]));
    assert_eq!(m.pair_overlap, 1.0);
    assert_eq!(m.example_overlap, 0.0);
}

#[test]
fn shift_summary() {
    let s = set(&[("a", "p", 0, [0.5, 0.5])]);
    let p = perturbed(&set(&[("a", "p", 0, [0.6, 0.4])]), "x");
    let r = probability_shift(&s, &p).unwrap();
    assert!((r.summary - 0.2).abs() < 1e-15);
    assert_eq!(probability_shift(&s, &perturbed(&s, "x")).unwrap().summary, 0.0);
}

#[test]
fn correlation_needs_three_pairs() {
    let s = set(&[
        ("a1", "A", 0, [0.1, 0.2]),
        ("a2", "A", 1, [0.05, 0.3]),
        ("b1", "B", 0, [0.2, 0.3]),
        ("b2", "B", 1, [0.15, 0.4]),
        ("c1", "C", 0, [0.3, 0.1]),
        ("c2", "C", 1, [0.25, 0.2]),
    ]);
    let r = right_wrong_correlation(&s).unwrap();
    assert_eq!(r.pairs, 3);
    assert_eq!(r.rho[0], Some(1.0));
    let mut two = s.clone();
    two.predictions.truncate(4);
    assert_eq!(right_wrong_correlation(&two), Err(MetricError::TooFewPairs(2)));
}

#[test]
fn js_reference_values() {
    let d = |e: Vec<(u32, f64)>| TruncatedDistribution { entries: e, tail_mass: 0.0 };
    let a = d(vec![(1, 0.5), (2, 0.5)]);
    let b = d(vec![(1, 1.0)]);
    assert_eq!(js_distance(&a, &a), 0.0);
    assert_eq!(js_distance(&b, &d(vec![(3, 1.0)])), 1.0);
    // M = {0.75, 0.25}; KL(a||M) = 0.5·log2(2/3) + 0.5·log2(2); KL(b||M) = log2(4/3).
    let kl_a = 0.5 * libm::log2(0.5 / 0.75) + 0.5 * libm::log2(0.5 / 0.25);
    let kl_b = libm::log2(1.0 / 0.75);
    let want = libm::sqrt(0.5 * (kl_a + kl_b));
    assert!((js_distance(&a, &b) - want).abs() < 1e-15);
    assert_eq!(js_distance(&a, &b), js_distance(&b, &a));
    let truncated = TruncatedDistribution { entries: vec![(1, 0.45), (2, 0.45)], tail_mass: 0.1 };
    assert_eq!(js_distance(&truncated, &a), 0.0);
}

#[test]
fn identical_instances_have_no_shift() {
    let mut m = ToyModel::builtin(ToyConfig::default());
    let inst = crate::schema::fixtures::sid_mark();
    let s = pronoun_distribution_shift(&inst, &inst, &mut m, 0.9).unwrap();
    assert_eq!(s.distance, 0.0);
    assert!(s.retained[0] > 0);
}

#[test]
fn associative_sides() {
    let a = crate::schema::fixtures::sid_mark();
    let mut b = crate::schema::fixtures::sid_mark_twin();
    b.associative = true;
    let d = Dataset::new(vec![a, b]).unwrap();
    let s = set(&[("wsc-sid", "p-sid", 0, [0.2, 0.8]), ("wsc-sid-b", "p-sid", 1, [0.2, 0.8])]);
    assert_eq!(associative_split(&s, &d), (Some(1.0), Some(0.0)));
    let none = Dataset::new(vec![crate::schema::fixtures::sid_mark()]).unwrap();
    assert_eq!(associative_split(&s, &none), (None, Some(0.0)));
}
