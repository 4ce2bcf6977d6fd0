mod support;

use std::fs;

use semseq_core::explain::report::REPORT_SCHEMA;
use serde_json::Value;
use support::{code, generated, path, run, schema_errors, semseq, snapshot, stderr};
use tempfile::tempdir;

fn report(dir: &std::path::Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn validate_accepts_generated_inputs() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 5, 1);
    let o = run(&[
        "validate",
        "--ontology",
        path(&d.join("ontology.tsv")),
        "--sequences",
        path(&d.join("sequences.csv")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("15 valid, 0 invalid"));
}

#[test]
fn cyclic_ontology_is_a_validation_error_with_its_line() {
    let tmp = tempdir().unwrap();
    let onto = tmp.path().join("o.tsv");
    let seqs = tmp.path().join("s.csv");
    fs::write(&onto, "0\t-\troot\tr\n1\t0\tstop\ta\n2\t1\tstop\tb\n1\t2\tstop\ta\n").unwrap();
    fs::write(&seqs, "id,activities\np1,1 2\n").unwrap();
    let o = run(&["validate", "--ontology", path(&onto), "--sequences", path(&seqs)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 4: cycle"), "{}", stderr(&o));
}

#[test]
fn bad_rows_are_reported_and_fail_validation() {
    let tmp = tempdir().unwrap();
    let seqs = tmp.path().join("s.csv");
    fs::write(&seqs, "id,activities\np1,1 121 11\np2,1 99999\n").unwrap();
    let o = run(&["validate", "--sequences", path(&seqs)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("99999"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempdir().unwrap();
    let o = run(&["validate", "--sequences", path(&tmp.path().join("absent.csv"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn bad_parameters_are_configuration_errors() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 5, 2);
    let seqs = d.join("sequences.csv");
    let out = tmp.path().join("out");
    let base = ["--sequences", path(&seqs), "--out", path(&out)];
    for extra in [&["--k", "1"][..], &["--alpha", "2"], &["--k", "99"], &["--ward", "median"], &["--binning", "5,3"]] {
        let mut args = vec!["pipeline"];
        args.extend(base);
        args.extend(extra);
        let o = run(&args);
        assert_eq!(code(&o), 3, "{extra:?}: {}", stderr(&o));
    }
    assert_eq!(code(&run(&["generate", "--out", path(&out), "--noise", "1.5"])), 3);
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn environment_sets_defaults_and_flags_win() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 5, 3);
    let seqs = d.join("sequences.csv");
    let out = tmp.path().join("env");
    let o = semseq()
        .args(["pipeline", "--sequences", path(&seqs), "--out", path(&out)])
        .env("SEMSEQ_ALPHA", "0.25")
        .env("SEMSEQ_K", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["meta"]["params"]["alpha"], 0.25);
    assert_eq!(r["meta"]["params"]["k"], 3);

    let o = semseq()
        .args(["pipeline", "--sequences", path(&seqs), "--out", path(&out), "--alpha", "0.5"])
        .env("SEMSEQ_ALPHA", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&out)["meta"]["params"]["alpha"], 0.5);

    let o = semseq().args(["pipeline", "--out", path(&out)]).env("SEMSEQ_SEQUENCES", path(&seqs)).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn warm_cache_skips_the_matrix_and_changes_nothing() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 8, 4);
    let seqs = d.join("sequences.csv");
    let out = tmp.path().join("out");
    let args = ["pipeline", "--sequences", path(&seqs), "--out", path(&out)];
    let cold = run(&args);
    assert_eq!(code(&cold), 0, "{}", stderr(&cold));
    assert_eq!(stderr(&cold).matches("distance matrix: computed").count(), 1, "{}", stderr(&cold));
    let first = snapshot(&out);
    let warm = run(&args);
    assert_eq!(code(&warm), 0);
    assert!(stderr(&warm).contains("cache hit"), "{}", stderr(&warm));
    assert!(!stderr(&warm).contains("distance matrix: computed"));
    assert_eq!(snapshot(&out), first);

    // A different alpha must not reuse the cached matrix.
    let other = run(&["distmat", "--sequences", path(&seqs), "--out", path(&out), "--alpha", "0.5"]);
    assert_eq!(code(&other), 0);
    assert!(stderr(&other).contains("distance matrix: computed"), "{}", stderr(&other));
}

#[test]
fn generator_is_deterministic_and_noiseless_copies_templates() {
    let tmp = tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    generated(&a, 20, 9);
    generated(&b, 20, 9);
    assert_eq!(snapshot(&a), snapshot(&b));
    generated(&c, 20, 10);
    assert_ne!(
        fs::read(a.join("sequences.csv")).unwrap(),
        fs::read(c.join("sequences.csv")).unwrap()
    );

    let clean = tmp.path().join("clean");
    let o = run(&["generate", "--out", path(&clean), "--per-group", "4", "--noise", "0", "--indel", "0"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(clean.join("sequences.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).map(|l| l.split_once(',').unwrap().1).collect();
    let templates = ["1 121 11 121 1", "1 100 33 100 34 100 1", "1 131 22 131 51 131 22 131 1"];
    assert_eq!(rows.len(), 12);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(*row, templates[i / 4]);
    }
}

#[test]
fn stats_writes_global_tables() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 10, 5);
    let out = tmp.path().join("out");
    let o = run(&["stats", "--sequences", path(&d.join("sequences.csv")), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["global_lengths.csv", "global_states.csv", "global_od.csv", "global_motifs.csv", "global_entropy.csv", "global_summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary: Value = serde_json::from_slice(&fs::read(out.join("global_summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn pipeline_equals_the_stage_commands() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 10, 6);
    let onto = d.join("ontology.tsv");
    let seqs = d.join("sequences.csv");
    let (one, many) = (tmp.path().join("one"), tmp.path().join("many"));
    let input = ["--ontology", path(&onto), "--sequences", path(&seqs)];

    let mut args = vec!["pipeline", "--out", path(&one)];
    args.extend(input);
    assert_eq!(code(&run(&args)), 0);
    for stage in ["stats", "distmat", "cluster", "explain"] {
        let mut args = vec![stage, "--out", path(&many)];
        args.extend(input);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{stage}: {}", stderr(&o));
    }
    let (a, b) = (snapshot(&one), snapshot(&many));
    assert_eq!(a.iter().map(|f| &f.0).collect::<Vec<_>>(), b.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
}

#[test]
fn report_conforms_to_its_schema() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 10, 7);
    let out = tmp.path().join("out");
    let o = run(&["pipeline", "--sequences", path(&d.join("sequences.csv")), "--out", path(&out), "--k", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let r = report(&out);
    let errs = schema_errors(&schema, &r);
    assert!(errs.is_empty(), "{errs:#?}");
    assert_eq!(r["clusters"].as_array().unwrap().len(), 4);

    // The checker itself rejects a broken report.
    let mut bad = r.clone();
    bad["meta"]["fingerprint"] = Value::from("XYZ");
    bad["clusters"][0]["summary"]["length_class"] = Value::from("Huge");
    bad.as_object_mut().unwrap().remove("validity");
    assert_eq!(schema_errors(&schema, &bad).len(), 3);
}

#[test]
fn explain_requires_labels_for_every_sequence() {
    let tmp = tempdir().unwrap();
    let d = generated(tmp.path(), 5, 8);
    let labels = tmp.path().join("labels.csv");
    fs::write(&labels, "id,cluster\np0001,1\np0002,2\n").unwrap();
    let o = run(&[
        "explain",
        "--sequences",
        path(&d.join("sequences.csv")),
        "--out",
        path(&tmp.path().join("out")),
        "--labels",
        path(&labels),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
