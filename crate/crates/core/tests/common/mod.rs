#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::PathBuf;

use cobra::cost::{load_catalog, CostCatalog, QueryStats};
use cobra::evaluator::{random_database, run, Database, GenConfig, OutputState};
use cobra::fir::{RuleContext, ALL_RULES};
use cobra::frontend::{parse, FunctionDef, Program};
use cobra::pipeline::{expand_source, Expanded};
use cobra::planner::{emit_choice, enumerate_plans};
use cobra::regiondag::{AndId, Op, OrId, RegionDag};

pub fn catalog_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("catalogs").join(format!("{name}.json"))
}

pub fn catalog(name: &str) -> (CostCatalog<f64>, QueryStats<f64>) {
    load_catalog(&catalog_path(name)).unwrap()
}

pub fn program_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs").join(name)
}

pub fn sample(name: &str) -> &'static str {
    cobra::samples::ALL.iter().find(|(n, _)| *n == name).unwrap().1
}

/// Schema and foreign keys of the shipped catalogs.
pub fn context(legacy: bool) -> RuleContext {
    catalog("slow-remote").1.rule_context(legacy)
}

pub fn expanded(name: &str) -> Expanded {
    expand_source(sample(name), None, ALL_RULES, &context(false)).unwrap()
}

pub fn entry(ex: &Expanded) -> &FunctionDef {
    ex.program.function(&ex.entry).unwrap()
}

/// `program` with its entry function replaced by the code of one plan.
pub fn emitted(ex: &Expanded, choice: &BTreeMap<OrId, AndId>) -> Program {
    let f = emit_choice(&ex.dag, ex.dag.root, choice, entry(ex)).unwrap();
    let mut p = ex.program.clone();
    *p.functions.iter_mut().find(|g| g.name == ex.entry).unwrap() = f;
    parse(&cobra::frontend::printer::print_program(&p)).expect("emitted programs reparse")
}

pub fn database(seed: u64, rows: usize) -> Database {
    let ctx = context(false);
    random_database(
        &ctx.columns,
        &ctx.foreign_keys,
        &GenConfig {
            seed,
            rows,
            ..GenConfig::default()
        },
    )
}

pub fn run_entry(p: &Program, ex: &Expanded, db: &Database) -> OutputState {
    run(p, &ex.entry, db).unwrap()
}

/// Every complete plan of the expanded sample, emitted and reparsed.
pub fn all_plans(ex: &Expanded) -> Vec<(BTreeMap<OrId, AndId>, Program)> {
    enumerate_plans(&ex.dag, ex.dag.root, 4096)
        .expect("sample plan spaces are small")
        .into_iter()
        .map(|c| {
            let p = emitted(ex, &c);
            (c, p)
        })
        .collect()
}

/// P1 if the plan ships a query over several relations, P2 if it prefetches, else P0.
pub fn classify(dag: &RegionDag, choice: &BTreeMap<OrId, AndId>) -> &'static str {
    let ops: Vec<&Op> = choice.values().map(|a| &dag.and(*a).op).collect();
    if ops
        .iter()
        .any(|op| matches!(op, Op::Query(q) | Op::ExecuteQuery(q) if q.relations().len() > 1))
    {
        "P1"
    } else if ops.iter().any(|op| matches!(op, Op::Prefetch { .. })) {
        "P2"
    } else {
        "P0"
    }
}
