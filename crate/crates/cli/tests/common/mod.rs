#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

pub fn tsens(args: &[&str]) -> Run {
    tsens_with_env(args, &[])
}

pub fn tsens_with_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tsens"));
    cmd.args(args).env_remove("TSENS_MEM_ROWS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    Run {
        code: status.code().expect("exited normally"),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

/// Writes `name.csv` files and a manifest into `dir`; returns the manifest path.
pub fn write_manifest(dir: &Path, relations: &[(&str, &str)]) -> PathBuf {
    let mut entries = Vec::new();
    for (name, csv) in relations {
        fs::write(dir.join(format!("{name}.csv")), csv).unwrap();
        entries.push(serde_json::json!({ "name": name, "path": format!("{name}.csv") }));
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::json!({ "relations": entries }).to_string()).unwrap();
    path
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Chain instance with four answers; the middle tuple (b1,c1) of R2 is the most sensitive.
pub fn chain_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let manifest = write_manifest(
        dir,
        &[
            ("R1", "A,B\na1,b1\na2,b1\n"),
            ("R2", "B,C\nb1,c1\n"),
            ("R3", "C,D\nc1,d1\nc1,d2\n"),
            ("R4", "D,E\nd1,e1\nd2,e1\n"),
        ],
    );
    let query = write(dir, "chain.cq", "Q(A,B,C,D,E) :- R1(A,B), R2(B,C), R3(C,D), R4(D,E).\n");
    (manifest, query)
}

pub fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(tsens_cli::report::JSON_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).expect("bundled schema compiles")
}

pub fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{doc}\n{errors:#?}");
}
