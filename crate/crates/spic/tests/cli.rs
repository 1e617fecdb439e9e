use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn corpus(file: &str) -> String {
    format!("{}/../../corpus/{file}", env!("CARGO_MANIFEST_DIR"))
}

fn spic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spic"))
        .args(args)
        .env_remove("SPIC_SEED")
        .output()
        .unwrap()
}

fn spic_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_spic"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Validates `doc` against the named definition of the published output schema.
fn conforms(doc: &Value, def: &str) {
    let text = std::fs::read_to_string(format!(
        "{}/../../docs/spic.schema.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let schema = json!({ "$defs": schema["$defs"], "$ref": format!("#/$defs/{def}") });
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{doc}");
}

fn json_out(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

#[test]
fn parse_prints_declarations() {
    let out = spic(&["parse", &corpus("ref.spi"), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_out(&out);
    conforms(&doc, "parse");
    assert!(doc["threads"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t == "Ref"));
}

#[test]
fn parse_errors_exit_2() {
    let out = spic_stdin(&["parse", "--stdin", "--json"], "thread A( = 0;");
    assert_eq!(out.status.code(), Some(2));
    let doc = json_out(&out);
    conforms(&doc, "parseError");
    assert_eq!(doc["error"]["line"], 1);
    assert_eq!(doc["error"]["col"], 11);
    assert_eq!(
        spic(&["parse", &corpus("missing.spi")]).status.code(),
        Some(2)
    );
}

#[test]
fn typecheck_accepts_and_rejects() {
    let out = spic(&["typecheck", &corpus("server.spi"), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_out(&out);
    conforms(&doc, "typecheck");
    assert_eq!(doc["ok"], true);
    assert!(doc["signatures"]["Server"].is_array());

    let out = spic(&["typecheck", &corpus("negative/double_emit.spi"), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json_out(&out);
    conforms(&doc, "typecheck");
    assert_eq!(doc["ok"], false);
    assert_eq!(doc["diagnostics"][0]["code"], "usage-conflict");

    let out = spic(&["typecheck", &corpus("negative/deref_kind5.spi")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[deref-on-kind5]"));
}

#[test]
fn run_is_reproducible() {
    let args = ["run", &corpus("server.spi"), "--seed", "7", "--emit-states"];
    let first = spic(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&spic(&args)));
    let lines = stdout(&first);
    assert!(lines.lines().count() > 1);
    for line in lines.lines() {
        conforms(&serde_json::from_str(line).unwrap(), "traceRecord");
    }
    assert!(lines.lines().any(|l| l.contains("\"kind\":\"eoi\"")));

    let env = Command::new(env!("CARGO_BIN_EXE_spic"))
        .args(["run", &corpus("server.spi"), "--emit-states"])
        .env("SPIC_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(stdout(&env), lines);
}

#[test]
fn run_json_document() {
    let out = spic(&["run", &corpus("cell.spi"), "--json", "--policy", "leftmost"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_out(&out);
    conforms(&doc, "run");
    assert_eq!(doc["ok"], true);
    assert_eq!(doc["seed"], 0);
}

#[test]
fn run_refuses_ill_typed_modules() {
    let out = spic(&["run", &corpus("negative/list_dup.spi"), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    conforms(&json_out(&out), "typecheck");
}

#[test]
fn explore_summarises_instants() {
    let out = spic(&["explore", &corpus("dataflow.spi"), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_out(&out);
    conforms(&doc, "explore");
    assert_eq!(doc["exploration"]["exhaustive"], true);
    assert_eq!(doc["exploration"]["instants"].as_array().unwrap().len(), 2);
}

#[test]
fn check_reports_carry_seed() {
    let out = spic(&[
        "check",
        &corpus("two_emitters.spi"),
        "--unchecked",
        "--json",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json_out(&out);
    conforms(&doc, "check");
    let reports = doc["reports"].as_array().unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["seed"] == 3));
    let confluence = reports
        .iter()
        .find(|r| r["check"] == "tau-confluence")
        .unwrap();
    assert_eq!(confluence["status"], "fail");
    assert!(confluence["counterexample"].is_array());
}

#[test]
fn check_passes_on_dataflow() {
    let out = spic(&["check", &corpus("dataflow.spi")]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    for check in [
        "subject-reduction",
        "tau-confluence",
        "eoi-determinacy",
        "determinacy",
    ] {
        assert!(
            text.lines()
                .any(|l| l.contains(check) && l.contains("pass")),
            "{check}\n{text}"
        );
    }
}
