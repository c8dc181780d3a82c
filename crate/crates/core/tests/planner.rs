mod common;

use std::collections::BTreeMap;

use cobra::cost::catalog::parse_catalog;
use cobra::cost::CostModel;
use cobra::planner::{best_plan, enumerate_plans, explain, plan_cost};
use cobra::regiondag::{AltTree, Op, RegionDag};

use common::oracle::{all_choices, random_dag, tree_cost, Fixed};
use common::{catalog, classify, expanded};

#[test]
fn search_matches_exhaustive_enumeration() {
    for seed in 0..50 {
        let (dag, costs) = random_dag(seed);
        let plan = best_plan(&dag, &costs).unwrap();
        let choices = all_choices(&dag, 0);
        let min = choices
            .iter()
            .map(|c| tree_cost(&dag, &costs, 0, c))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(plan.cost().seconds(), min, "seed {seed}");
        assert_eq!(tree_cost(&dag, &costs, 0, &plan.choice), min, "seed {seed}");
        assert!(choices.contains(&plan.choice), "seed {seed}");
        let listed = enumerate_plans(&dag, 0, usize::MAX).unwrap();
        assert_eq!(listed.len(), choices.len(), "seed {seed}");
    }
}

#[test]
fn forced_choices_are_honoured() {
    for seed in 0..20 {
        let (dag, costs) = random_dag(seed);
        for c in all_choices(&dag, 0) {
            let got = plan_cost(&dag, 0, &costs, &c).unwrap().seconds();
            assert_eq!(got, tree_cost(&dag, &costs, 0, &c), "seed {seed}");
        }
    }
}

#[test]
fn best_plan_dominates_every_sample_plan() {
    let (c, s) = catalog("slow-remote");
    let model = CostModel::new(&c, &s);
    for (name, _) in cobra::samples::ALL {
        let ex = expanded(name);
        let plan = best_plan(&ex.dag, &model).unwrap();
        let best = plan.cost().seconds();
        for choice in enumerate_plans(&ex.dag, ex.dag.root, 4096).unwrap() {
            let other = plan_cost(&ex.dag, ex.dag.root, &model, &choice).unwrap().seconds();
            assert!(best <= other * (1.0 + 1e-12), "{name}: {best} > {other}");
        }
    }
}

#[test]
fn planning_is_deterministic() {
    let (c, s) = catalog("slow-remote");
    let model = CostModel::new(&c, &s);
    for (name, _) in cobra::samples::ALL {
        let a = best_plan(&expanded(name).dag, &model).unwrap();
        let b = best_plan(&expanded(name).dag, &model).unwrap();
        assert_eq!(a.choice, b.choice, "{name}");
        assert_eq!(a.cost(), b.cost(), "{name}");
    }
}

#[test]
fn ties_prefer_fewer_queries_then_lower_ids() {
    let q = cobra::regiondag::CanonQuery::new(cobra::frontend::parser::parse_query("scan(sales)").unwrap());
    let mut dag = RegionDag::new();
    let or = dag.new_or("r");
    let shipped = dag.add_alternative(or, &AltTree::leaf(Op::ExecuteQuery(q))).unwrap();
    let first = dag.add_alternative(or, &AltTree::leaf(Op::Var("a".into()))).unwrap();
    let second = dag.add_alternative(or, &AltTree::leaf(Op::Var("b".into()))).unwrap();
    let costs = Fixed(BTreeMap::from([(shipped, 1.0), (first, 1.0 + 1e-13), (second, 1.0)]));
    assert_eq!(best_plan(&dag, &costs).unwrap().chosen(or), first);
    let costs = Fixed(BTreeMap::from([(shipped, 1.0), (first, 1.0 + 1e-9), (second, 1.0)]));
    assert_eq!(best_plan(&dag, &costs).unwrap().chosen(or), second);
}

#[test]
fn explain_lists_every_plan_node() {
    let (c, s) = catalog("slow-remote");
    let ex = expanded("m0.cob");
    let plan = best_plan(&ex.dag, &CostModel::new(&c, &s)).unwrap();
    let text = explain(&plan, &ex.dag);
    for or in plan.choice.keys() {
        assert!(text.contains(&ex.dag.or(*or).label), "{}", ex.dag.or(*or).label);
    }
    assert!(text.contains('*'));
}

#[test]
fn single_precision_picks_the_same_plans() {
    let text = std::fs::read_to_string(common::catalog_path("slow-remote")).unwrap();
    let (c32, s32) = parse_catalog::<f32>(&text).unwrap();
    let (c64, s64) = catalog("slow-remote");
    for (name, _) in cobra::samples::ALL {
        let ex = expanded(name);
        let a = best_plan(&ex.dag, &CostModel::new(&c64, &s64)).unwrap();
        let b = best_plan(&ex.dag, &CostModel::new(&c32, &s32)).unwrap();
        assert_eq!(classify(&ex.dag, &a.choice), classify(&ex.dag, &b.choice), "{name}");
    }
}
