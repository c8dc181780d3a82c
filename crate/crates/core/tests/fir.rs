mod common;

use cobra::fir::{rule_set, ALL_RULES};
use cobra::frontend::{build_cfg, parse};
use cobra::pipeline::expand_source;
use cobra::regiondag::expand::{expand, Rule, DEFAULT_BUDGET};
use cobra::regiondag::{init_dag, Op, RegionDag};
use cobra::regions::build_region_tree;

use common::{context, sample};

fn folds(dag: &RegionDag) -> Vec<&Op> {
    (0..dag.ands.len())
        .map(|a| &dag.and(a).op)
        .filter(|op| matches!(op, Op::Fold { .. }))
        .collect()
}

fn queries_sql(dag: &RegionDag) -> Vec<String> {
    (0..dag.ands.len())
        .filter_map(|a| match &dag.and(a).op {
            Op::Query(q) | Op::ExecuteQuery(q) => Some(q.query.to_sql()),
            _ => None,
        })
        .collect()
}

#[test]
fn dependent_accumulators_share_one_fold() {
    let ex = expand_source(sample("m0.cob"), None, &["loopToFold"], &context(false)).unwrap();
    assert_eq!(ex.report.count("loopToFold"), 1);
    let slots: Vec<_> = folds(&ex.dag)
        .into_iter()
        .map(|op| match op {
            Op::Fold { slots, .. } => slots.clone(),
            _ => unreachable!(),
        })
        .collect();
    assert!(slots.iter().any(|s| s.contains(&"sum".to_string()) && s.contains(&"cSum".to_string())));
}

#[test]
fn legacy_precondition_declines_dependent_accumulators() {
    let ex = expand_source(sample("m0.cob"), None, &["loopToFold"], &context(true)).unwrap();
    assert_eq!(ex.report.count("loopToFold"), 0);
    assert!(folds(&ex.dag).is_empty());
}

#[test]
fn legacy_precondition_still_lifts_single_accumulators() {
    let ex = expand_source(sample("revenue.cob"), None, &["loopToFold"], &context(true)).unwrap();
    assert_eq!(ex.report.count("loopToFold"), 1);
}

#[test]
fn selection_cycle_collapses() {
    let ex = expand_source(sample("filter.cob"), None, &["loopToFold", "T2", "N2"], &context(false)).unwrap();
    let cycle = ex.report.count("T2") + ex.report.count("N2");
    assert!((2..=10).contains(&cycle), "{}", ex.report.trace());
    let target = ex.report.events.iter().find(|e| e.rule == "T2").unwrap().or;
    assert_eq!(ex.dag.or(target).alternatives.len(), 2);
}

#[test]
fn scalar_sum_becomes_an_aggregate_query() {
    let src = "fn total() {\n    s = 0;\n    for (t : query { scan(sales) }) {\n        s = s + t.sale_amt;\n    }\n    return s;\n}\n";
    let ex = expand_source(src, None, &["loopToFold", "T5"], &context(false)).unwrap();
    assert_eq!(ex.report.count("T5"), 1);
    assert!(queries_sql(&ex.dag).contains(&"select sum(sale_amt) from sales".to_string()), "{:?}", queries_sql(&ex.dag));
}

#[test]
fn every_sample_saturates_within_budget() {
    for (name, src) in cobra::samples::ALL {
        let ex = expand_source(src, None, ALL_RULES, &context(false)).unwrap();
        assert!(ex.report.applications() < DEFAULT_BUDGET, "{name}");
        assert!(ex.dag.audit().is_empty(), "{name}: {:?}", ex.dag.audit());
        assert!(ex.dag.topological_order().is_some(), "{name}");
    }
}

#[test]
fn expansion_is_deterministic() {
    for (name, src) in cobra::samples::ALL {
        let a = expand_source(src, None, ALL_RULES, &context(false)).unwrap();
        let b = expand_source(src, None, ALL_RULES, &context(false)).unwrap();
        assert_eq!(a.report, b.report, "{name}");
        assert_eq!(a.dag.to_string(), b.dag.to_string(), "{name}");
    }
}

#[test]
fn reapplying_rules_adds_nothing() {
    let program = parse(sample("p0.cob")).unwrap();
    let f = &program.functions[0];
    let cfg = build_cfg(f);
    let mut dag = init_dag(f, &cfg, &build_region_tree(f, &cfg));
    let boxed = rule_set(ALL_RULES, &context(false)).unwrap();
    let rules: Vec<&dyn Rule> = boxed.iter().map(|r| r.as_ref()).collect();
    expand(&mut dag, &rules, DEFAULT_BUDGET).unwrap();
    let before = dag.alternative_count();
    let again = expand(&mut dag, &rules, DEFAULT_BUDGET).unwrap();
    assert!(again.events.iter().all(|e| !e.fresh));
    assert_eq!(dag.alternative_count(), before);
}

#[test]
fn unknown_rule_is_reported() {
    let err = rule_set(&["T9"], &context(false)).err().unwrap();
    assert!(err.contains("T9"));
}
