use std::path::Path;

use fcert_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn fcert(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fcert").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn synth_to(path: &Path, per_class: &str) {
    let p = path.to_str().unwrap();
    let args = [
        "synth",
        "--classes",
        "6",
        "--per-class",
        per_class,
        "--dim",
        "6",
        "--separation",
        "4",
        "--seed",
        "2",
        "--output",
        p,
    ];
    let (code, _, err) = fcert(&args);
    assert_eq!(code, EXIT_OK, "{err}");
}

#[test]
fn help_and_version_succeed() {
    let (code, out, _) = fcert(&["--help"]);
    assert_eq!(code, EXIT_OK);
    for sub in ["predict", "certify", "eval", "attack", "oracle-check", "synth"] {
        assert!(out.contains(sub), "{sub} missing from help");
    }
    assert_eq!(fcert(&["--version"]).0, EXIT_OK);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fcert(&[]).0, EXIT_USAGE);
    assert_eq!(fcert(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(fcert(&["eval"]).0, EXIT_USAGE);
    let (code, _, err) = fcert(&["eval", "--dataset", "x", "--metric", "manhattan"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--metric"), "{err}");
    let (code, _, err) = fcert(&["eval", "--dataset", "x", "--methods", "fcert,svm"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("svm"), "{err}");
}

#[test]
fn oversized_kprime_cites_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.jsonl");
    synth_to(&d, "10");
    let (code, _, err) = fcert(&["certify", "--dataset", d.to_str().unwrap(), "--kprime", "3"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--kprime") && err.contains("floor((K-1)/2)"), "{err}");
    let (code, _, err) = fcert(&["certify", "--dataset", d.to_str().unwrap(), "--shots", "8", "--kprime", "4"]);
    assert_eq!(code, EXIT_USAGE, "{err}");
}

#[test]
fn data_errors_exit_two_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"id\":\"a\",\"label\":\"x\",\"features\":[1,2]}\n{\"id\":\"b\",\"label\":\"x\",\"features\":[1]}\n",
    )
    .unwrap();
    let (code, _, err) = fcert(&["eval", "--dataset", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("bad.jsonl") && err.contains("line 2"), "{err}");

    let (code, _, err) = fcert(&["predict", "--dataset", dir.path().join("missing.jsonl").to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("missing.jsonl"), "{err}");

    let small = dir.path().join("small.jsonl");
    synth_to(&small, "5");
    let (code, _, err) = fcert(&["eval", "--dataset", small.to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("class-0") && err.contains("--dataset"), "{err}");
}

#[test]
fn oracle_check_reports_zero_disagreements() {
    let (code, out, err) = fcert(&["oracle-check", "--max-k", "6", "--instances", "100", "--seed", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out, "100 instances, 0 disagreements\n");
    assert_eq!(fcert(&["oracle-check", "--max-k", "2"]).0, EXIT_USAGE);
}

#[test]
fn per_query_commands_have_stable_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.jsonl");
    synth_to(&d, "10");
    let d = d.to_str().unwrap();

    let (code, out, _) = fcert(&["predict", "--dataset", d, "--batches", "3"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().next(), Some("episode,query,label,method,predicted,correct"));
    assert_eq!(out.lines().count(), 1 + 3 * 5 * 4);

    let (code, out, _) = fcert(&["certify", "--dataset", d, "--batches", "3", "--attack", "group"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 1 + 3 * 5);
    assert!(out.lines().skip(1).all(|l| l.contains(",group,")));

    let (code, out, _) = fcert(&["certify", "--dataset", d, "--batches", "2", "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let rows: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2 * 5 * 2);

    let (code, out, _) =
        fcert(&["attack", "--dataset", d, "--batches", "2", "--budget", "5", "--strategy", "cross-class"]);
    assert_eq!(code, EXIT_OK);
    // budgets above K' have no bound-attaining attack to report
    assert!(out.lines().skip(1).all(|l| l.ends_with(',')), "{out}");
    assert_eq!(fcert(&["attack", "--dataset", d, "--budget", "6"]).0, EXIT_USAGE);
}

#[test]
fn output_flag_matches_standard_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.jsonl");
    synth_to(&d, "10");
    let d = d.to_str().unwrap();
    let r = dir.path().join("r.csv");
    let args = ["eval", "--dataset", d, "--batches", "3", "--methods", "fcert,knn", "--attack", "individual"];
    let (_, stdout, _) = fcert(&args);
    let mut with_file = args.to_vec();
    with_file.extend_from_slice(&["--output", r.to_str().unwrap()]);
    let (code, nothing, _) = fcert(&with_file);
    assert_eq!(code, EXIT_OK);
    assert!(nothing.is_empty());
    assert_eq!(std::fs::read_to_string(&r).unwrap(), stdout);
    assert_eq!(stdout.lines().count(), 1 + 2 * 3);
}

#[test]
fn unwritable_output_is_a_data_error() {
    let (code, _, err) = fcert(&["synth", "--output", "/nonexistent-dir/d.jsonl"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("--output"), "{err}");
}
