mod common;

use std::fs;

use common::*;
use serde_json::json;
use tsens_cli::data::{export_database, load_database};
use tsens_cli::CliError;

fn relation(db: &tsens::relation::Database, name: &str) -> Vec<(Vec<String>, u128)> {
    db.resolved()[name].1.clone().into_iter().collect()
}

#[test]
fn csv_loading() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(
        dir.path(),
        &[
            ("Dup", "A,B\nx,y\nx,y\n"),
            ("Counted", "A,__cnt\nx,2\nx,3\n"),
            ("Empty", "A,B\n"),
        ],
    );
    let db = load_database(&manifest).unwrap();
    assert_eq!(relation(&db, "Dup"), vec![(vec!["x".to_owned(), "y".to_owned()], 2)]);
    assert_eq!(relation(&db, "Counted"), vec![(vec!["x".to_owned()], 5)]);
    let empty = db.relation("Empty").unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.schema(), ["A", "B"]);
}

#[test]
fn named_count_column() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "r.csv", "n,A\n4,a\n");
    let manifest = write(
        dir.path(),
        "m.json",
        &json!({ "relations": [{ "name": "R", "path": "r.csv", "cnt": "n" }] }).to_string(),
    );
    let db = load_database(&manifest).unwrap();
    assert_eq!(relation(&db, "R"), vec![(vec!["a".to_owned()], 4)]);
}

#[test]
fn malformed_inputs_are_data_errors() {
    let cases: &[(&str, &str)] = &[
        ("R", "A,__cnt\nx,0\n"),
        ("R", "A,__cnt\nx,-1\n"),
        ("R", "A,B\nx\n"),
        ("R", "A,A\nx,y\n"),
        ("R", ""),
    ];
    for (name, csv) in cases {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(dir.path(), &[(name, csv)]);
        let e = load_database(&manifest).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{csv:?}: {e}");
    }
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(
        dir.path(),
        "m.json",
        &json!({ "relations": [{ "name": "R", "path": "missing.csv" }] }).to_string(),
    );
    assert!(matches!(load_database(&manifest).unwrap_err(), CliError::Io { .. }));
    let dup = write(
        dir.path(),
        "dup.json",
        &json!({ "relations": [{ "name": "R", "path": "a.csv" }, { "name": "R", "path": "b.csv" }] }).to_string(),
    );
    assert_eq!(load_database(&dup).unwrap_err().exit_code(), 2);
}

#[test]
fn export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(
        dir.path(),
        &[
            ("R", "A,B\n\"a,1\",b\nx,\"q\"\"uote\"\nx,y\nx,y\n"),
            ("S", "B\n"),
            ("T", "C,__cnt\nz,7\n"),
        ],
    );
    let db = load_database(&manifest).unwrap();
    let out = dir.path().join("out");
    let exported = export_database(&db, &out).unwrap();
    assert_eq!(exported.relations.len(), 3);
    let again = load_database(&out.join("manifest.json")).unwrap();
    assert_eq!(again.resolved(), db.resolved());
    let out2 = dir.path().join("out2");
    export_database(&again, &out2).unwrap();
    for f in ["R.csv", "S.csv", "T.csv", "manifest.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sensitivity_on_chain_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (data, query) = chain_fixture(dir.path());
    let run = tsens(&["sensitivity", "--data", arg(&data), "--query", arg(&query)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let doc = run.json();
    assert_eq!(doc["schema"], 1);
    assert_eq!(doc["result"]["ls"], "4");
    assert_eq!(doc["result"]["join_size"], "4");
    assert_eq!(
        doc["result"]["witness"],
        json!({ "relation": "R2", "values": ["b1", "c1"], "tsens": "4" })
    );
    assert!(run.stderr.is_empty());

    let oracle = tsens(&["oracle", "--data", arg(&data), "--query", arg(&query)]).json();
    assert_eq!(oracle["result"]["witness"], doc["result"]["witness"]);
    assert_eq!(oracle["result"]["per_relation"], doc["result"]["per_relation"]);

    let pretty = tsens(&[
        "sensitivity",
        "--data",
        arg(&data),
        "--query",
        arg(&query),
        "--pretty",
        "--timings",
    ]);
    assert!(pretty.stderr.contains("local sensitivity 4"));
    assert!(pretty.json()["result"]["stats"]["timings_ms"].is_object());
}

#[test]
fn topk_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (data, query) = chain_fixture(dir.path());
    let base = ["sensitivity", "--data", arg(&data), "--query", arg(&query)];
    let topk = tsens(&[&base[..], &["--mode", "topk", "--k", "1"]].concat());
    assert_eq!(topk.code, 0);
    assert!(topk.json()["result"]["ls"].as_str().unwrap().parse::<u128>().unwrap() >= 4);
    assert_eq!(tsens(&[&base[..], &["--mode", "topk"]].concat()).code, 1);
    assert_eq!(tsens(&[&base[..], &["--k", "2"]].concat()).code, 1);
    assert_eq!(tsens(&[&base[..], &["--mode", "topk", "--k", "0"]].concat()).code, 1);
}

#[test]
fn decompose_reports_cyclicity() {
    let dir = tempfile::tempdir().unwrap();
    let triangle = write(dir.path(), "t.cq", "Q(A,B,C) :- R1(A,B), R2(B,C), R3(C,A).");
    let doc = tsens(&["decompose", "--query", arg(&triangle)]).json();
    assert_eq!(doc["result"]["acyclic"], false);
    assert_eq!(doc["result"]["components"][0]["residual"]["R1"], json!(["A", "B"]));

    let ghd = write(
        dir.path(),
        "t.json",
        r#"[{"atoms": ["R1", "R2", "R3"], "parent": null}]"#,
    );
    let doc = tsens(&["decompose", "--query", arg(&triangle), "--ghd", arg(&ghd)]).json();
    assert_eq!(doc["result"]["ghd"]["max_atoms_per_node"], 3);

    let (_, chain) = chain_fixture(dir.path());
    let doc = tsens(&["decompose", "--query", arg(&chain)]).json();
    let component = &doc["result"]["components"][0];
    assert_eq!(doc["result"]["acyclic"], true);
    assert_eq!(component["join_tree"]["root"], "R1");
    assert_eq!(component["join_tree"]["nodes"].as_array().unwrap().len(), 4);
    assert_eq!(component["doubly_acyclic"]["value"], true);
}

#[test]
fn cyclic_sensitivity_with_and_without_ghd() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_manifest(
        dir.path(),
        &[
            ("R1", "A,B\na,b\na,c\n"),
            ("R2", "B,C\nb,c\nc,c\n"),
            ("R3", "C,A\nc,a\n"),
        ],
    );
    let triangle = write(dir.path(), "t.cq", "Q(A,B,C) :- R1(A,B), R2(B,C), R3(C,A).");
    let ghd = write(
        dir.path(),
        "t.json",
        r#"[{"atoms": ["R1", "R2", "R3"], "parent": null}]"#,
    );
    let with = tsens(&[
        "sensitivity",
        "--data",
        arg(&data),
        "--query",
        arg(&triangle),
        "--ghd",
        arg(&ghd),
    ])
    .json();
    let without = tsens(&["sensitivity", "--data", arg(&data), "--query", arg(&triangle)]).json();
    let oracle = tsens(&["oracle", "--data", arg(&data), "--query", arg(&triangle)]).json();
    assert_eq!(with["result"]["ls"], oracle["result"]["ls"]);
    assert_eq!(without["result"]["witness"], oracle["result"]["witness"]);
}

#[test]
fn dp_answer_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, query) = chain_fixture(dir.path());
    let args = [
        "dp-answer",
        "--data",
        arg(&data),
        "--query",
        arg(&query),
        "--epsilon",
        "1",
        "--ell",
        "10",
        "--primary-private",
        "R2",
        "--seed",
        "7",
    ];
    let noisy = tsens(&args);
    assert_eq!(noisy.code, 0, "{}", noisy.stderr);
    assert_eq!(noisy.stdout, tsens(&args).stdout);

    let exact = tsens(&[&args[..], &["--test-mode"]].concat()).json();
    assert_eq!(exact["result"]["value"], 4.0);
    assert_eq!(exact["result"]["tau"], "4");

    let bad = tsens(&[&args[..], &["--epsilon-tsens", "2"]].concat());
    assert_eq!(bad.code, 1);
    let unknown = tsens(&[
        "dp-answer",
        "--data",
        arg(&data),
        "--query",
        arg(&query),
        "--epsilon",
        "1",
        "--ell",
        "3",
        "--primary-private",
        "Nope",
    ]);
    assert_eq!(unknown.code, 2);
}

#[test]
fn reduce_sat_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = write(dir.path(), "f.cnf", "p cnf 3 2\n1 -2 3 0\n-1 2 0\n");
    let out = dir.path().join("inst");
    let run = tsens(&["reduce-sat", "--cnf", arg(&cnf), "--out", arg(&out), "--check"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let doc = run.json();
    assert_eq!(doc["result"]["check"]["agree"], true);
    assert_eq!(doc["result"]["check"]["satisfiable"], true);
    let oracle = tsens(&[
        "oracle",
        "--data",
        arg(&out.join("manifest.json")),
        "--query",
        arg(&out.join("query.cq")),
    ])
    .json();
    assert_eq!(oracle["result"]["ls"], doc["result"]["check"]["ls"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, query) = chain_fixture(dir.path());
    let usage = tsens(&["sensitivity", "--data"]);
    assert_eq!(usage.code, 1);
    assert_eq!(usage.json()["error"]["kind"], "usage");
    assert_eq!(tsens(&["frobnicate"]).code, 1);
    assert_eq!(tsens(&["--help"]).code, 0);

    let missing = tsens(&["sensitivity", "--data", "/nonexistent/m.json", "--query", arg(&query)]);
    assert_eq!(missing.code, 2);
    assert_eq!(missing.json()["error"]["kind"], "data");
    let syntax = write(dir.path(), "bad.cq", "Q :- R1(A,");
    assert_eq!(
        tsens(&["sensitivity", "--data", arg(&data), "--query", arg(&syntax)]).code,
        2
    );

    let squeezed = tsens_with_env(
        &["sensitivity", "--data", arg(&data), "--query", arg(&query)],
        &[("TSENS_MEM_ROWS", "1")],
    );
    assert_eq!(squeezed.code, 3, "{}", squeezed.stdout);
    assert_eq!(squeezed.json()["error"]["kind"], "computation");
    let garbage = tsens_with_env(
        &["sensitivity", "--data", arg(&data), "--query", arg(&query)],
        &[("TSENS_MEM_ROWS", "lots")],
    );
    assert_eq!(garbage.code, 1);
}

#[test]
fn every_document_matches_the_schema() {
    let v = validator();
    let dir = tempfile::tempdir().unwrap();
    let (data, query) = chain_fixture(dir.path());
    let triangle = write(dir.path(), "t.cq", "Q(A,B,C) :- R1(A,B), R2(B,C), R3(C,A).");
    let ghd = write(
        dir.path(),
        "t.json",
        r#"[{"atoms": ["R1", "R2", "R3"], "parent": null}]"#,
    );
    let cnf = write(dir.path(), "f.cnf", "p cnf 2 2\n1 2 0\n-1 -2 0\n");
    let runs: Vec<Vec<&str>> = vec![
        vec!["decompose", "--query", arg(&query)],
        vec!["decompose", "--query", arg(&triangle), "--ghd", arg(&ghd)],
        vec!["sensitivity", "--data", arg(&data), "--query", arg(&query), "--timings"],
        vec![
            "sensitivity",
            "--data",
            arg(&data),
            "--query",
            arg(&query),
            "--mode",
            "topk",
            "--k",
            "2",
        ],
        vec!["oracle", "--data", arg(&data), "--query", arg(&query)],
        vec![
            "dp-answer",
            "--data",
            arg(&data),
            "--query",
            arg(&query),
            "--epsilon",
            "2",
            "--ell",
            "5",
            "--primary-private",
            "R1",
        ],
        vec!["reduce-sat", "--cnf", arg(&cnf), "--check"],
        vec!["sensitivity", "--data", "/nonexistent"],
        vec!["sensitivity", "--data", "/nonexistent", "--query", arg(&query)],
    ];
    for args in runs {
        let run = tsens(&args);
        assert_valid(&v, &run.json());
    }
    let broken = json!({ "schema": 1, "command": "sensitivity", "config": {}, "result": { "ls": 4 } });
    assert!(!v.is_valid(&broken));
}
