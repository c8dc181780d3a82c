mod common;

use cobra::cli::main_with;

use common::{catalog_path, program_path};

fn cobra(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<String> = std::iter::once("cobra").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(&argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: std::path::PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn optimize_prints_a_reparsable_program() {
    let (code, out, err) = cobra(&[
        "optimize",
        &path(program_path("p0.cob")),
        "--catalog",
        &path(catalog_path("slow-remote")),
        "--self-check",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("self-check passed"));
    let p = cobra::frontend::parse(&out).unwrap();
    assert_eq!(p.functions[0].name, "processOrders");
}

#[test]
fn explain_and_alternatives_go_to_stderr() {
    let (code, out, err) = cobra(&[
        "optimize",
        &path(program_path("m0.cob")),
        "--catalog",
        &path(catalog_path("fast-local")),
        "--explain",
        "--list-alternatives",
        "--trace-rules",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("rule=loopToFold"));
    assert!(err.contains('*'));
    assert!(!out.contains("rule="));
}

#[test]
fn network_and_amortization_overrides() {
    let file = path(program_path("p0.cob"));
    let cat = path(catalog_path("slow-remote"));
    assert_eq!(cobra(&["optimize", &file, "--catalog", &cat, "--network", "fast-local"]).0, 0);
    assert_eq!(cobra(&["optimize", &file, "--catalog", &cat, "--af", "inf"]).0, 0);
    assert_eq!(cobra(&["optimize", &file, "--catalog", &cat, "--af", "0.5"]).0, 1);
    assert_eq!(cobra(&["optimize", &file, "--catalog", &cat, "--network", "dialup"]).0, 1);
}

#[test]
fn user_errors_exit_with_one() {
    let cat = path(catalog_path("slow-remote"));
    let (code, _, err) = cobra(&["optimize", "/nonexistent.cob", "--catalog", &cat]);
    assert_eq!(code, 1);
    assert!(err.contains("no such file"));
    let (code, _, _) = cobra(&["optimize", &path(program_path("p0.cob")), "--catalog", "/nonexistent.json"]);
    assert_eq!(code, 1);
    let (code, _, _) = cobra(&["optimize", &path(program_path("p0.cob")), "--catalog", &cat, "--rules", "T9"]);
    assert_eq!(code, 1);
    let (code, _, _) = cobra(&["frobnicate"]);
    assert_eq!(code, 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cob");
    std::fs::write(&bad, "fn f( {").unwrap();
    let (code, _, err) = cobra(&["dump-regions", &path(bad)]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
    let unknown = dir.path().join("unknown.cob");
    std::fs::write(&unknown, "fn f() {\n    x = executeQuery(scan(nowhere));\n}\n").unwrap();
    assert_eq!(cobra(&["optimize", &path(unknown), "--catalog", &cat]).0, 1);
}

#[test]
fn run_prints_state_and_counters() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db.json");
    std::fs::write(&db, r#"{"sales": {"schema": ["month", "sale_amt"], "rows": [[2, 5], [1, 4], [1, 6]]}}"#).unwrap();
    let (code, out, err) = cobra(&["run", &path(program_path("m0.cob")), "--db", &path(db)]);
    assert_eq!(code, 0, "{err}");
    let j: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(j["printed"][0], 15);
    assert_eq!(j["counters"]["queries"], 1);
}

#[test]
fn dumps_regions_and_dag() {
    let file = path(program_path("p0.cob"));
    let (code, out, _) = cobra(&["dump-regions", &file]);
    assert_eq!(code, 0);
    assert!(!out.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("dag.dot");
    let (code, out, _) = cobra(&[
        "dump-dag",
        &file,
        "--catalog",
        &path(catalog_path("slow-remote")),
        "--emit-dot",
        &path(dot.clone()),
    ]);
    assert_eq!(code, 0);
    assert!(!out.is_empty());
    assert!(std::fs::read_to_string(dot).unwrap().starts_with("digraph"));
}

#[test]
fn version_and_help_exit_with_zero() {
    assert_eq!(cobra(&["--version"]).0, 0);
    assert_eq!(cobra(&["--help"]).0, 0);
}
