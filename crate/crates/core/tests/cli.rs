mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::desk_dir;
use incparse::fixtures;
use incparse::report::Record;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incparse")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn train_g1(dir: &Path, extra: &[&str]) -> String {
    let t = dir.join("g1.mrg");
    fs::write(&t, fixtures::G1).unwrap();
    let m = dir.join("g1.model");
    let mut args = vec!["train", "--train", p(&t), "--heldout", p(&t), "-o", p(&m), "--no-normalize"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    m.to_str().unwrap().to_string()
}

#[test]
fn train_reports_summary_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("g1.mrg");
    fs::write(&t, fixtures::G1).unwrap();
    let m = dir.path().join("m");
    let o = run(&["train", "--train", p(&t), "--heldout", p(&t), "-o", p(&m), "--conditioning", "par+sib"]);
    assert!(o.status.success());
    let r = Record::parse(stdout(&o).trim()).unwrap();
    assert_eq!(r.get("conditioning"), Some("2,2,2"));
    assert_eq!(r.get("train_trees"), Some("4"));
    assert!(fs::read_to_string(&m).unwrap().starts_with("incparse-model 1\n"));
}

#[test]
fn missing_heldout_gives_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("g1.mrg");
    fs::write(&t, fixtures::G1).unwrap();
    let o = run(&["train", "--train", p(&t), "-o", p(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--heldout"));
}

#[test]
fn bad_flags_are_rejected() {
    assert_eq!(run(&["parse", "--model", "x", "--input", "y", "--bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let m = train_g1(dir.path(), &[]);
    let s = dir.path().join("s.txt");
    fs::write(&s, "Spot ran\n").unwrap();
    let o = run(&["parse", "--model", &m, "--input", p(&s), "--base-beam", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("base beam"));
    let o = run(&["ppl", "--model", &m, "--input", p(&s), "--lambda-mix", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["train", "--train", "a", "--heldout", "b", "-o", "c", "--conditioning", "7,0,0"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn parse_matches_oracle_best_and_flags_garden_paths() {
    let dir = tempfile::tempdir().unwrap();
    let m = train_g1(dir.path(), &["--conditioning", "none"]);
    let s = dir.path().join("s.txt");
    fs::write(&s, "Spot ran\n\nthe dog chased the ball\n").unwrap();
    let rep = dir.path().join("r.txt");
    let o = run(&["parse", "--model", &m, "--input", p(&s), "--report", p(&rep)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains(":2 is empty"));
    let trees: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(
        trees,
        [
            "(S (NP (NN Spot)) (VP (VBD ran)))",
            "(S (NP (DT the) (NN dog)) (VP (VBD chased) (NP (DT the) (NN ball))))"
        ]
    );
    let recs: Vec<Record> = fs::read_to_string(&rep).unwrap().lines().map(|l| Record::parse(l).unwrap()).collect();
    assert_eq!(recs[0].get("sentence"), Some("1"));
    assert_eq!(recs[1].get("sentence"), Some("3"));
    let lp: f64 = recs[0].get("string_logprob").unwrap().parse().unwrap();
    assert!((lp - 0.2025f64.ln()).abs() < 1e-12);

    fs::write(&s, "ran Spot\nSpot ran\n").unwrap();
    let o = run(&["parse", "--model", &m, "--input", p(&s)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn closed_vocabulary_refuses_unknown_words() {
    let dir = tempfile::tempdir().unwrap();
    let m = train_g1(dir.path(), &[]);
    let s = dir.path().join("s.txt");
    fs::write(&s, "Rex ran\n").unwrap();
    let o = run(&["parse", "--model", &m, "--input", p(&s), "--closed-vocab"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Rex"));
    let o = run(&["parse", "--model", &m, "--input", p(&s)]);
    assert!(stdout(&o).contains("<unk>"));
}

#[test]
fn wider_beam_means_more_work() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("desk.model");
    let d = desk_dir();
    let o = run(&[
        "train",
        "--train",
        p(&d.join("train.mrg")),
        "--heldout",
        p(&d.join("heldout.mrg")),
        "-o",
        p(&m),
    ]);
    assert!(o.status.success());
    let mut per_word = Vec::new();
    for g in ["1e-11", "1e-3"] {
        let rep = dir.path().join(format!("r{g}"));
        let o = run(&["parse", "--model", p(&m), "--input", p(&d.join("test.txt")), "--base-beam", g, "--report", p(&rep)]);
        assert!(o.status.success());
        let total: u64 = fs::read_to_string(&rep)
            .unwrap()
            .lines()
            .map(|l| Record::parse(l).unwrap().get("expansions").unwrap().parse::<u64>().unwrap())
            .sum();
        per_word.push(total);
    }
    assert!(per_word[1] < per_word[0], "{per_word:?}");
}

#[test]
fn ppl_endpoints_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let m = train_g1(dir.path(), &[]);
    let s = dir.path().join("s.txt");
    fs::write(&s, "Spot ran\nthe dog ran\nSpot chased the ball\n").unwrap();
    let a = run(&["ppl", "--model", &m, "--input", p(&s), "--lambda-mix", "1"]);
    let b = run(&["ppl", "--model", &m, "--input", p(&s), "--lambda-mix", "1"]);
    assert_eq!(a.stdout, b.stdout);
    let r = Record::parse(stdout(&a).trim()).unwrap();
    assert_eq!(r.get("interpolated_ppl"), r.get("trigram_ppl"));
    let o = run(&["ppl", "--model", &m, "--input", p(&s), "--lambda-mix", "0", "--per-sentence", "--vocab-mass", "2"]);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    let r = Record::parse(lines[3]).unwrap();
    assert_eq!(r.get("interpolated_ppl"), r.get("parser_ppl"));
    let mass: f64 = r.get("vocab_mass_max").unwrap().parse().unwrap();
    assert!(mass <= 1.0 + 1e-6);
}

#[test]
fn eval_identity_filter_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.mrg");
    fs::write(&g, fixtures::G1).unwrap();
    let o = run(&["eval", "--gold", p(&g), "--test", p(&g), "--machine"]);
    let r = Record::parse(stdout(&o).trim()).unwrap();
    assert_eq!((r.get("LR"), r.get("LP"), r.get("CB")), (Some("100"), Some("100"), Some("0")));
    let o = run(&["eval", "--gold", p(&g), "--test", p(&g), "--machine", "--max-len", "2"]);
    assert_eq!(Record::parse(stdout(&o).trim()).unwrap().get("sentences"), Some("2"));

    let t = dir.path().join("t.mrg");
    let mut bad = fixtures::G1.replace("(NN ball)", "(NN toy)");
    bad = bad.replace("(S (NP (NN Spot)) (VP (VBD chased) (NP (DT the) (NN toy))))", "(S (NP (NN Spot)) (VP (VBD chased) (DT the) (NN ball)))");
    fs::write(&t, bad).unwrap();
    let o = run(&["eval", "--gold", p(&g), "--test", p(&t), "--per-sentence"]);
    assert_eq!(o.status.code(), Some(0));
    let third = Record::parse(stdout(&o).lines().nth(2).unwrap()).unwrap();
    assert_eq!((third.get("matched"), third.get("gold"), third.get("test")), (Some("3"), Some("4"), Some("3")));

    fs::write(&t, fixtures::G1.replace("ball", "toy")).unwrap();
    let o = run(&["eval", "--gold", p(&g), "--test", p(&t)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"));
}

#[test]
fn oracle_check_passes_on_fixtures() {
    let o = run(&["oracle-check", "--max-len", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let recs: Vec<Record> = stdout(&o).lines().map(|l| Record::parse(l).unwrap()).collect();
    assert_eq!(recs.len(), 6);
    for r in &recs {
        assert_eq!(r.get("bound_violations"), Some("0"));
        assert_eq!(r.get("pass"), Some("1"));
    }
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.txt");
    fs::write(&s, "ran ran\nSpot ran\n").unwrap();
    let o = run(&["oracle-check", "--fixture", "g1", "--sentences", p(&s)]);
    let r = Record::parse(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(r.get("zero_mass"), Some("1"));
    assert_eq!(r.get("pass"), Some("1"));
}

#[test]
fn model_version_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let m = train_g1(dir.path(), &[]);
    let text = fs::read_to_string(&m).unwrap().replacen("incparse-model 1", "incparse-model 2", 1);
    fs::write(&m, text).unwrap();
    let s = dir.path().join("s.txt");
    fs::write(&s, "Spot ran\n").unwrap();
    let o = run(&["parse", "--model", &m, "--input", p(&s)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("version"));
}

#[test]
fn threads_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let m = train_g1(dir.path(), &[]);
    let s = dir.path().join("s.txt");
    fs::write(&s, "Spot ran\nthe dog ran\nSpot chased the ball\nball the\nthe ball ran\n").unwrap();
    let a = run(&["parse", "--model", &m, "--input", p(&s), "--jobs", "1"]);
    let b = run(&["parse", "--model", &m, "--input", p(&s), "--jobs", "3"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());
}
