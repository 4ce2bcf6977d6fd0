//! Helpers shared by the binary-level suites.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regex::Regex;
use serde_json::Value;

pub fn semseq() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_semseq"));
    for (k, _) in std::env::vars() {
        if k.starts_with("SEMSEQ_") {
            c.env_remove(k);
        }
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    semseq().args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Writes a synthetic corpus under `dir` and returns `dir`.
pub fn generated(dir: &Path, per_group: usize, seed: u64) -> PathBuf {
    let o = run(&[
        "generate",
        "--out",
        path(dir),
        "--per-group",
        &per_group.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.to_path_buf()
}

/// Every regular file under `dir`, by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("readable dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Checks `v` against the draft-07 keywords the report schema uses: `type`,
/// `required`, `properties`, `additionalProperties`, `items`, `enum`,
/// `const`, `pattern`, `minimum`, `maximum`, `exclusiveMinimum`, `oneOf` and
/// local `$ref`. Any other keyword is rejected so the checker cannot silently
/// ignore part of the schema.
pub fn schema_errors(schema: &Value, v: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    check(schema, schema, v, "$", &mut errs);
    errs
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64() || v.as_f64().is_some_and(|x| x.fract() == 0.0),
        other => panic!("unsupported type `{other}`"),
    }
}

fn check(root: &Value, s: &Value, v: &Value, at: &str, errs: &mut Vec<String>) {
    let obj = s.as_object().expect("schema nodes are objects");
    for (kw, arg) in obj {
        match kw.as_str() {
            "$schema" | "title" | "definitions" | "description" => {}
            "$ref" => {
                let name = arg.as_str().unwrap().strip_prefix("#/definitions/").expect("local ref");
                check(root, &root["definitions"][name], v, at, errs);
            }
            "type" => {
                let ok = match arg {
                    Value::String(t) => type_matches(t, v),
                    Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap(), v)),
                    _ => panic!("bad type keyword"),
                };
                if !ok {
                    errs.push(format!("{at}: expected type {arg}, got {v}"));
                }
            }
            "required" => {
                if let Some(o) = v.as_object() {
                    for r in arg.as_array().unwrap() {
                        if !o.contains_key(r.as_str().unwrap()) {
                            errs.push(format!("{at}: missing `{}`", r.as_str().unwrap()));
                        }
                    }
                }
            }
            "properties" => {
                if let Some(o) = v.as_object() {
                    for (k, sub) in arg.as_object().unwrap() {
                        if let Some(x) = o.get(k) {
                            check(root, sub, x, &format!("{at}.{k}"), errs);
                        }
                    }
                }
            }
            "additionalProperties" => {
                if let Some(o) = v.as_object() {
                    let known = obj.get("properties").and_then(Value::as_object);
                    for (k, x) in o {
                        if known.is_some_and(|p| p.contains_key(k)) {
                            continue;
                        }
                        match arg {
                            Value::Bool(false) => errs.push(format!("{at}: unexpected `{k}`")),
                            Value::Bool(true) => {}
                            sub => check(root, sub, x, &format!("{at}.{k}"), errs),
                        }
                    }
                }
            }
            "items" => {
                if let Some(a) = v.as_array() {
                    for (i, x) in a.iter().enumerate() {
                        check(root, arg, x, &format!("{at}[{i}]"), errs);
                    }
                }
            }
            "enum" => {
                if !arg.as_array().unwrap().contains(v) {
                    errs.push(format!("{at}: {v} not in {arg}"));
                }
            }
            "const" => {
                if arg != v {
                    errs.push(format!("{at}: {v} != {arg}"));
                }
            }
            "pattern" => {
                if let Some(t) = v.as_str() {
                    if !Regex::new(arg.as_str().unwrap()).unwrap().is_match(t) {
                        errs.push(format!("{at}: `{t}` does not match {arg}"));
                    }
                }
            }
            "minimum" | "maximum" | "exclusiveMinimum" => {
                if let Some(x) = v.as_f64() {
                    let b = arg.as_f64().unwrap();
                    let ok = match kw.as_str() {
                        "minimum" => x >= b,
                        "maximum" => x <= b,
                        _ => x > b,
                    };
                    if !ok {
                        errs.push(format!("{at}: {x} violates {kw} {b}"));
                    }
                }
            }
            "oneOf" => {
                let passing = arg
                    .as_array()
                    .unwrap()
                    .iter()
                    .filter(|sub| {
                        let mut e = Vec::new();
                        check(root, sub, v, at, &mut e);
                        e.is_empty()
                    })
                    .count();
                if passing != 1 {
                    errs.push(format!("{at}: {passing} oneOf branches match"));
                }
            }
            other => panic!("unsupported schema keyword `{other}`"),
        }
    }
}
