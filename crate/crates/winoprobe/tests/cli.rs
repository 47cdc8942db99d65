use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use winoprobe::fixture::FIXTURE;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_winoprobe"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fixture.jsonl");
    fs::write(&p, FIXTURE).unwrap();
    (dir, p)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())).collect();
    out.sort();
    out
}

#[test]
fn validate_exit_codes() {
    let (dir, _) = setup();
    let d = dir.path();
    let ok = run(d, &["validate", "fixture.jsonl"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("8 instances"));

    let broken = FIXTURE.replacen("\"pronoun_span\":[7,8]", "\"pronoun_span\":[7,80]", 1);
    assert_ne!(broken, FIXTURE);
    fs::write(d.join("broken.jsonl"), broken).unwrap();
    let o = run(d, &["validate", "broken.jsonl"]);
    assert_eq!(code(&o), 1);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("violation:") && text.contains("wsc-sid"), "{text}");

    let mut lines: Vec<&str> = FIXTURE.lines().collect();
    lines[2] = "{\"id\": \"x\",";
    fs::write(d.join("malformed.jsonl"), lines.join("\n")).unwrap();
    assert_eq!(code(&run(d, &["validate", "malformed.jsonl"])), 2);
    assert_eq!(code(&run(d, &["validate", "absent.jsonl"])), 2);
}

#[test]
fn perturb_writes_seven_files_and_reruns_identically() {
    let (dir, _) = setup();
    let d = dir.path();
    let a = run(d, &["perturb", "fixture.jsonl", "--out", "a", "--seed", "5"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(d, &["perturb", "fixture.jsonl", "--out", "b", "--seed", "5"]);
    assert_eq!(code(&b), 0);
    let fa = files(&d.join("a"));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, files(&d.join("b")));
    for (name, _) in fa.iter().filter(|(n, _)| n.ends_with(".jsonl")) {
        let o = run(d, &["validate", &format!("a/{name}"), "--origin", "fixture.jsonl"]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stdout));
    }
    let one = run(d, &["perturb", "fixture.jsonl", "--kind", "NUM", "--out", "c", "--seed", "5"]);
    assert_eq!(code(&one), 0);
    assert_eq!(fs::read(d.join("c/fixture.num.jsonl")).unwrap(), fs::read(d.join("a/fixture.num.jsonl")).unwrap());
    assert_eq!(code(&run(d, &["perturb", "fixture.jsonl", "--kind", "XYZ", "--out", "c"])), 2);
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let (dir, _) = setup();
    let d = dir.path();
    for out in ["r1", "r2"] {
        let o = run(d, &["eval", "fixture.jsonl", "--adapter", "builtin:toy", "--strategy", "mask_substitution,context_option", "--human", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (files(&d.join("r1")), files(&d.join("r2")));
    assert_eq!(a.len(), 6);
    assert_eq!(a, b);
    let tables = String::from_utf8(fs::read(d.join("r1/tables.txt")).unwrap()).unwrap();
    assert!(tables.contains("humans\t97.890000"), "{tables}");
    for (name, bytes) in &a {
        let text = String::from_utf8_lossy(bytes);
        assert!(text.contains("fingerprint") && text.contains("seed"), "{name}");
    }
}

#[test]
fn eval_reports_missing_inputs_and_adapter_failures() {
    let (dir, _) = setup();
    let d = dir.path();
    let o = run(d, &["eval", "fixture.jsonl", "--perturbed", "nope.jsonl", "--scores", "gone.scores", "--out", "x"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nope.jsonl") && err.contains("gone.scores"), "{err}");
    assert!(!d.join("x").exists());

    let o = run(d, &["eval", "fixture.jsonl", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no adapter"));

    let o = run(d, &["eval", "fixture.jsonl", "--adapter", "cmd:/definitely/not/here", "--out", "x"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn locked_output_is_refused() {
    let (dir, _) = setup();
    let d = dir.path();
    fs::create_dir(d.join("out")).unwrap();
    fs::write(d.join("out/.winoprobe.lock"), "1").unwrap();
    let o = run(d, &["eval", "fixture.jsonl", "--adapter", "builtin:toy", "--out", "out"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
}

#[test]
fn report_from_score_files_matches_eval() {
    let (dir, _) = setup();
    let d = dir.path();
    assert_eq!(code(&run(d, &["perturb", "fixture.jsonl", "--out", "p"])), 0);
    let mut scores = Vec::new();
    let o = run(d, &["score", "fixture.jsonl", "--adapter", "builtin:toy", "-o", "s/original.scores"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    scores.push("s/original.scores".to_string());
    for k in ["ten", "num", "gen", "vc", "rc", "adv", "synna"] {
        let out = format!("s/{k}.scores");
        let o = run(d, &["score", "fixture.jsonl", "--perturbed", &format!("p/fixture.{k}.jsonl"), "--adapter", "builtin:toy", "-o", &out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        scores.push(out);
    }
    let mut args = vec!["report", "fixture.jsonl", "--out", "rep", "--metrics", "accuracy,delta_acc,stability,pair_accuracy"];
    let perturbed: Vec<String> = ["ten", "num", "gen", "vc", "rc", "adv", "synna"].iter().map(|k| format!("p/fixture.{k}.jsonl")).collect();
    for p in &perturbed {
        args.extend(["--perturbed", p]);
    }
    for s in &scores {
        args.extend(["--scores", s]);
    }
    let o = run(d, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(d, &["eval", "fixture.jsonl", "--adapter", "builtin:toy", "--out", "ev", "--metrics", "accuracy,delta_acc,stability,pair_accuracy"]);
    assert_eq!(code(&o), 0);
    let body = |p: &str| fs::read_to_string(d.join(p)).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body("rep/metrics.tsv"), body("ev/metrics.tsv"));

    fs::write(d.join("s/bad.scores"), fs::read_to_string(d.join("s/num.scores")).unwrap().replace("\"count\":8", "\"count\":9")).unwrap();
    assert_eq!(code(&run(d, &["report", "fixture.jsonl", "--scores", "s/bad.scores", "--out", "rep2"])), 2);
}

#[test]
fn attn_curves_start_at_eval_accuracy() {
    let (dir, _) = setup();
    let d = dir.path();
    let o = run(d, &["attn", "fixture.jsonl", "--adapter", "builtin:toy?layers=2&heads=3", "--out", "at", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curves = fs::read_to_string(d.join("at/curves.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = curves.lines().skip(2).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3 * 7);
    let o = run(d, &["eval", "fixture.jsonl", "--adapter", "builtin:toy?layers=2&heads=3", "--out", "ev", "--seed", "3", "--metrics", "accuracy"]);
    assert_eq!(code(&o), 0);
    let metrics = fs::read_to_string(d.join("ev/metrics.tsv")).unwrap();
    let acc = metrics.lines().find(|l| l.starts_with("accuracy\toriginal\tmask_substitution\tall")).unwrap().rsplit('\t').next().unwrap();
    for r in rows.iter().filter(|r| r[1] == "0") {
        assert_eq!(r[4], acc);
    }
    let again = run(d, &["attn", "fixture.jsonl", "--adapter", "builtin:toy?layers=2&heads=3", "--out", "at2", "--seed", "3"]);
    assert_eq!(code(&again), 0);
    assert_eq!(files(&d.join("at")), files(&d.join("at2")));
    for f in ["attn_diff.tsv", "importance.tsv", "shift.tsv", "pos.tsv"] {
        assert!(d.join("at").join(f).exists(), "{f}");
    }
}

#[test]
fn pmi_build_and_query_refuse_mismatched_settings() {
    let (dir, _) = setup();
    let d = dir.path();
    fs::write(d.join("corpus.txt"), "the trophy did not fit in the suitcase\nthe suitcase was too small for the trophy\n".repeat(50)).unwrap();
    let o = run(d, &["pmi-build", "corpus.txt", "--min-count", "1", "--window", "3", "-o", "t.wpmi"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let q = run(d, &["pmi-query", "t.wpmi", "suitcase", "small", "--min-count", "1", "--window", "3"]);
    assert_eq!(code(&q), 0);
    let line = String::from_utf8_lossy(&q.stdout).into_owned();
    assert!(line.starts_with("suitcase\tsmall\t*\t"), "{line}");
    assert!(!line.contains("undefined"));
    let bad = run(d, &["pmi-query", "t.wpmi", "trophy", "suitcase", "--min-count", "1", "--window", "4"]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("does not match"));

    let a = run(d, &["assoc", "fixture.jsonl", "--pmi-table", "t.wpmi", "--min-count", "1", "--window", "3"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 2 + 8);

    let e = run(d, &["eval", "fixture.jsonl", "--strategy", "pmi_baseline", "--pmi-table", "t.wpmi", "--out", "pmi"]);
    assert_eq!(code(&e), 2);
    let e = run(d, &["eval", "fixture.jsonl", "--strategy", "pmi_baseline", "--pmi-table", "t.wpmi", "--min-count", "1", "--window", "3", "--out", "pmi"]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    assert!(fs::read_to_string(d.join("pmi/metrics.tsv")).unwrap().contains("pmi_divergence"));
}

#[test]
fn config_file_drives_eval_and_flags_override() {
    let (dir, _) = setup();
    let d = dir.path();
    fs::write(
        d.join("run.toml"),
        "dataset = \"fixture.jsonl\"\nadapter = \"builtin:toy\"\nseed = 4\nout = \"cfg-out\"\nmetrics = [\"accuracy\"]\n[scoring]\naveraging = \"log_probability\"\n",
    )
    .unwrap();
    let o = run(d, &["eval", "--config", "run.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(d.join("cfg-out/metrics.tsv")).unwrap();
    assert!(t.starts_with("# fingerprint=") && t.lines().next().unwrap().ends_with("seed=4"), "{t}");
    let o = run(d, &["eval", "--config", "run.toml", "--seed", "9", "--out", "flag-out"]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(d.join("flag-out/metrics.tsv")).unwrap().lines().next().unwrap().ends_with("seed=9"));
    fs::write(d.join("bad.toml"), "dataset = \"fixture.jsonl\"\nsede = 1\n").unwrap();
    assert_eq!(code(&run(d, &["eval", "--config", "bad.toml"])), 2);
}
