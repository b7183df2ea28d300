mod common;

use common::{fixture, gsc, path_str, stderr, stdout};
use gsc_core::parse_corpus;

fn fixture_str() -> String {
    fixture().to_str().unwrap().to_owned()
}

#[test]
fn rank_emits_one_line_per_prompt_and_method() {
    let out = gsc([
        "rank",
        "--input",
        &fixture_str(),
        "--method",
        "gsc",
        "--method",
        "longest",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<_> = stdout(&out).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 40);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(first["prompt_id"], "p00");
    assert_eq!(first["method"], "gsc:ucs");
    assert_eq!(first["tie_policy"], "lowest-index");
    assert_eq!(first["order"].as_array().unwrap().len(), 25);
    let scores: Vec<f64> = first["scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn rank_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ranks.jsonl");
    let out = gsc([
        "rank",
        "--input",
        &fixture_str(),
        "--sim",
        "wucs",
        "--output",
        path_str(&path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 20);
}

#[test]
fn weighted_similarity_without_logprobs_names_first_offender() {
    let mut records = parse_corpus(std::fs::read(fixture()).unwrap().as_slice()).unwrap();
    records[3].generations[7].token_logprobs = None;
    records[5].generations[1].token_logprobs = None;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.jsonl");
    let mut buf = Vec::new();
    gsc_core::write_corpus(&mut buf, &records).unwrap();
    std::fs::write(&path, buf).unwrap();

    let out = gsc(["rank", "--input", path_str(&path), "--sim", "wucs"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("p03-g007"), "{err}");
    assert!(!err.contains("p05-g001"), "{err}");

    // The unweighted similarity does not need them.
    let ok = gsc(["rank", "--input", path_str(&path), "--sim", "ucs"]);
    assert!(ok.status.success());
}

#[test]
fn malformed_input_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let first = std::fs::read_to_string(fixture())
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned();
    std::fs::write(&path, format!("{first}\n{{\"prompt_id\": 3}}\n")).unwrap();
    let out = gsc(["rank", "--input", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn random_method_requires_seed() {
    let out = gsc(["rank", "--input", &fixture_str(), "--method", "random"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn rank_is_reproducible() {
    let args = [
        "rank",
        "--input",
        &fixture_str(),
        "--method",
        "random",
        "--method",
        "gsc",
        "--seed",
        "9",
    ];
    let a = gsc(args);
    let b = gsc(args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn eval_reports_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    let out = gsc([
        "eval",
        "--input",
        &fixture_str(),
        "--method",
        "gsc",
        "--method",
        "random",
        "--metric",
        "accuracy",
        "--bootstrap",
        "10",
        "--sample-size",
        "10",
        "--seed",
        "3",
        "--csv",
        path_str(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["method"], "gsc:ucs");
    assert_eq!(lines[1]["method"], "random");
    for l in &lines {
        assert_eq!(l["metric"], "accuracy");
        assert_eq!(l["n_bootstrap"], 10);
        let mean = l["mean"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mean));
    }
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().next(), Some("metric,gsc:ucs,random"));
    assert_eq!(table.lines().count(), 2, "{table}");
    assert!(table.contains('±'));
}

#[test]
fn eval_rejects_oversized_sample() {
    // Every fixture prompt carries 25 generations.
    let out = gsc(["eval", "--input", &fixture_str(), "--sample-size", "26", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("26"), "{}", stderr(&out));
}

#[test]
fn eval_text_metrics_run() {
    let out = gsc([
        "eval",
        "--input",
        &fixture_str(),
        "--metric",
        "rouge2",
        "--metric",
        "rougeL",
        "--metric",
        "bleu",
        "--metric",
        "pass@3",
        "--metric",
        "mrr",
        "--ranked-negatives",
        "--bootstrap",
        "5",
        "--sample-size",
        "5",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 5);
}

#[test]
fn simulate_planted_target_has_no_violations() {
    let out = gsc([
        "simulate", "--check", "planted", "--seed", "4", "--trials", "50", "--grid-d", "2,10", "--grid-l", "2,5",
        "--grid-n", "25",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("0 violations"));
    assert_eq!(stdout(&out).lines().count(), 1 + 4);
}

#[test]
fn simulate_counterexample_prints_exact_scores() {
    let out = gsc(["simulate", "--check", "counterexample"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("0.175") && table.contains("350/2000"), "{table}");
    assert!(table.contains("0.32") && table.contains("640/2000"), "{table}");
    assert!(stderr(&out).contains("selects the worse one"));
}

#[test]
fn simulate_recovery_grid_has_one_row_per_point() {
    let out = gsc([
        "simulate", "--check", "recovery", "--seed", "2", "--trials", "20", "--grid-d", "2,5,10", "--grid-l", "2,3",
        "--grid-n", "25,50",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.starts_with("d,l,n,trials,top1_rate"));
    assert_eq!(table.lines().count(), 1 + 3 * 2 * 2);
}

#[test]
fn simulate_requires_seed_for_stochastic_checks() {
    let out = gsc(["simulate", "--check", "recovery"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn simulate_bound_failure_exits_one() {
    // k = 2 sits above the upper end of the bound; the command must say so, not hide it.
    let out = gsc([
        "simulate", "--check", "bound", "--seed", "1", "--trials", "500", "--grid-d", "2", "--grid-n", "25",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains(",false"));
}

#[test]
fn check_aliases_match_primary_names() {
    for (alias, name) in [("thm21", "counterexample"), ("thm22", "planted"), ("thm23", "bound")] {
        let args = |check: &'static str| {
            [
                "simulate", "--check", check, "--seed", "3", "--trials", "30", "--grid-d", "2",
            ]
        };
        assert_eq!(gsc(args(alias)).stdout, gsc(args(name)).stdout, "{alias}");
    }
}
