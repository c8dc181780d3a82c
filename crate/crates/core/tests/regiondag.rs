use cobra::frontend::ast::Expr;
use cobra::frontend::{build_cfg, parse};
use cobra::regiondag::dot::export_dot;
use cobra::regiondag::expand::{expand, DEFAULT_BUDGET};
use cobra::regiondag::{init_dag, Op, RegionDag};
use cobra::regions::build_region_tree;
use cobra::samples;

fn dag_of(src: &str) -> RegionDag {
    let p = parse(src).unwrap();
    let f = &p.functions[0];
    let cfg = build_cfg(f);
    init_dag(f, &cfg, &build_region_tree(f, &cfg))
}

fn children_labels(dag: &RegionDag, or: usize) -> (String, Vec<String>) {
    let and = dag.first(or);
    (
        and.op.name().to_string(),
        and.children.iter().map(|c| dag.or(*c).label.clone()).collect(),
    )
}

#[test]
fn p0_initial_skeleton() {
    let dag = dag_of(samples::P0);
    assert_eq!(dag.or(dag.root).label, "S2-7");
    assert_eq!(children_labels(&dag, dag.root), ("seq".into(), vec!["B2".into(), "L3-7".into()]));
    let l = dag.find("L3-7").unwrap();
    assert_eq!(children_labels(&dag, l), ("loop".into(), vec!["B3".into(), "S4-6".into()]));
    // The unexpanded skeleton above the loop body: five OR nodes, two
    // inner AND nodes.
    let mut ors = vec![dag.root];
    ors.extend(dag.first(dag.root).children.iter().copied());
    ors.extend(dag.first(l).children.iter().copied());
    ors.dedup();
    assert_eq!(ors.len(), 5);
    let inner = [dag.root, l].iter().filter(|o| !dag.first(**o).children.is_empty()).count();
    assert_eq!(inner, 2);
    assert!(dag.ors.iter().all(|o| o.alternatives.len() == 1));
    assert!(dag.audit().is_empty());
}

#[test]
fn m0_initial_skeleton() {
    let dag = dag_of(samples::M0);
    assert_eq!(dag.or(dag.root).label, "S2-9");
    assert_eq!(
        children_labels(&dag, dag.root),
        ("seq".into(), vec!["S2-3".into(), "L4-7".into(), "S8-9".into()])
    );
}

#[test]
fn loop_entry_constants() {
    let dag = dag_of(samples::P0);
    let l = dag.or(dag.find("L3-7").unwrap());
    assert_eq!(l.entry_constants.get("result"), Some(&Expr::Call("list".into(), vec![])));

    let dag = dag_of(samples::M0);
    let l = dag.or(dag.find("L4-7").unwrap());
    assert_eq!(l.entry_constants.get("sum"), Some(&Expr::Int(0)));
    assert_eq!(l.entry_constants.get("cSum"), Some(&Expr::Call("map".into(), vec![])));
}

#[test]
fn single_statement_function() {
    let dag = dag_of("fn f(){ x = 1; }");
    assert_eq!(dag.ors.len(), 1);
    assert_eq!(dag.ands.len(), 1);
    assert!(matches!(dag.first(dag.root).op, Op::Stmt(_)));
}

#[test]
fn empty_rule_set_changes_nothing() {
    let mut dag = dag_of(samples::P0);
    let before = dag.to_string();
    let report = expand(&mut dag, &[], DEFAULT_BUDGET).unwrap();
    assert_eq!(report.applications(), 0);
    assert_eq!(dag.to_string(), before);
}

#[test]
fn dot_export_lists_every_node() {
    let dag = dag_of(samples::P0);
    let dot = export_dot(&dag);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("shape=ellipse").count(), dag.ors.len());
    assert_eq!(dot.matches("shape=box").count(), dag.ands.len());
    assert_eq!(export_dot(&dag), dot);
}
