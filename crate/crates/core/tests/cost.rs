mod common;

use std::collections::BTreeMap;

use cobra::cost::catalog::{parse_catalog, QueryOverride};
use cobra::cost::{Cost, CostFunction, CostModel, PlanView, QueryTerms};
use cobra::frontend::ast::Expr;
use cobra::frontend::parser::parse_query;
use cobra::frontend::QueryExpr;
use cobra::regiondag::{AndNode, CanonQuery, Op, OrId};
use proptest::prelude::*;

use common::catalog;

/// `C_NRT + C_F + max(N * S / BW, C_L - C_F)`, written out independently.
fn oracle(nrt: f64, bw: f64, cqf: f64, cql: f64, nq: f64, srow: f64) -> f64 {
    let transfer = nq * srow / bw;
    let residual = cql - cqf;
    nrt + cqf + if transfer > residual { transfer } else { residual }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// A catalog whose only query of interest has fixed server times and size.
fn worked(af: &str) -> (cobra::CostCatalog64, cobra::QueryStats64, QueryExpr) {
    let q = parse_query("scan(orders)").unwrap();
    let text = format!(
        r#"{{"network": {{"nrt_s": 0.5, "bandwidth_Bps": 62500}},
            "constants": {{"cy_s": 3e-8, "cz_s": 3e-8}},
            "relations": {{"orders": {{"card": 1000, "row_bytes": 100}}}},
            "query_overrides": [{{"fingerprint": "{}", "cqf_s": 0.01, "cql_s": 0.05, "nq": 1000, "srow_bytes": 100}}],
            "amortization": {{"{}": {af}}}}}"#,
        q.fingerprint(),
        q.fingerprint()
    );
    let (c, s) = parse_catalog(&text).unwrap();
    (c, s, q)
}

#[test]
fn worked_query_cost() {
    let (c, s, q) = worked("1");
    let got = CostModel::new(&c, &s).query_cost(&q).unwrap().seconds();
    assert!(rel(got, 2.11) < 1e-9);
    assert!(rel(got, oracle(0.5, 62_500.0, 0.01, 0.05, 1000.0, 100.0)) < 1e-12);
}

#[test]
fn worked_prefetch_costs() {
    let (c, s, q) = worked("1");
    let m = CostModel::new(&c, &s);
    assert_eq!(m.prefetch_cost(&q).unwrap(), m.query_cost(&q).unwrap());
    let (c, s, q) = worked("50");
    assert!(rel(CostModel::new(&c, &s).prefetch_cost(&q).unwrap().seconds(), 0.0422) < 1e-9);
    let (c, s, q) = worked("\"inf\"");
    assert_eq!(CostModel::new(&c, &s).prefetch_cost(&q).unwrap().seconds(), 0.0);
}

#[test]
fn fractional_amortization_is_rejected() {
    let (mut c, s, q) = worked("1");
    c.global_af = Some(0.5);
    assert!(matches!(
        CostModel::new(&c, &s).prefetch_cost(&q),
        Err(cobra::cost::CostError::InvalidAf { .. })
    ));
}

#[test]
fn empty_result_and_unbounded_bandwidth() {
    let (c, mut s, q) = worked("1");
    let fp = q.fingerprint();
    s.overrides.insert(
        fp.clone(),
        QueryOverride {
            nq: Some(0.0),
            ..s.overrides[&fp]
        },
    );
    let got = CostModel::new(&c, &s).query_cost(&q).unwrap().seconds();
    assert!(rel(got, 0.5 + 0.01 + 0.04) < 1e-12);
    let (mut c, s, q) = worked("1");
    c.network.bandwidth = f64::INFINITY;
    let got = CostModel::new(&c, &s).query_cost(&q).unwrap().seconds();
    assert!(rel(got, 0.5 + 0.05) < 1e-12);
}

/// Fixed costs and choices for costing one AND node in isolation.
struct View(BTreeMap<OrId, AndNode>);

impl PlanView<f64> for View {
    fn chosen(&self, or: OrId) -> &AndNode {
        &self.0[&or]
    }
    fn or_cost(&self, _: OrId) -> Cost<f64> {
        Cost::zero()
    }
}

fn and(op: Op, children: Vec<OrId>) -> AndNode {
    AndNode {
        id: 0,
        op,
        children,
        or: 0,
    }
}

#[test]
fn seq_and_cond_nodes() {
    let (c, s) = catalog("slow-remote");
    let m = CostModel::new(&c, &s);
    let view = View(BTreeMap::from([(1, and(Op::Predicate(Expr::var("flag")), vec![]))]));
    let seq = m
        .and_cost(&and(Op::Seq, vec![1, 2]), &[Cost::cpu(1.0), Cost::cpu(2.5)], &view)
        .unwrap();
    assert_eq!(seq.seconds(), 3.5);
    let cond = m
        .and_cost(
            &and(Op::Cond, vec![1, 2, 3]),
            &[Cost::cpu(1e-7), Cost::cpu(2.0), Cost::cpu(4.0)],
            &view,
        )
        .unwrap();
    assert!(rel(cond.seconds(), 3.0000001) < 1e-12);
}

#[test]
fn cond_with_certain_branches() {
    let (mut c, s) = catalog("slow-remote");
    let view = View(BTreeMap::from([(1, and(Op::Predicate(Expr::var("flag")), vec![]))]));
    let kids = [Cost::cpu(0.25), Cost::cpu(2.0), Cost::cpu(4.0)];
    for (p, want) in [(1.0, 2.25), (0.0, 4.25)] {
        c.constants.default_prob = p;
        let got = CostModel::new(&c, &s)
            .and_cost(&and(Op::Cond, vec![1, 2, 3]), &kids, &view)
            .unwrap();
        assert_eq!(got.seconds(), want);
    }
}

#[test]
fn worked_fold_cost() {
    let (c, mut s, _) = worked("1");
    let q = parse_query("scan(orders)").unwrap();
    let fp = q.fingerprint();
    s.overrides.insert(
        fp.clone(),
        QueryOverride {
            nq: Some(10_000.0),
            ..s.overrides[&fp]
        },
    );
    let m = CostModel::new(&c, &s);
    let view = View(BTreeMap::from([(3, and(Op::Query(CanonQuery::new(q)), vec![]))]));
    let fold = and(
        Op::Fold {
            tuple_var: "t".into(),
            slots: vec!["s".into()],
        },
        vec![1, 2, 3],
    );
    let got = m
        .and_cost(&fold, &[Cost::cpu(3.0 * 30e-9), Cost::zero(), Cost::cpu(2.11)], &view)
        .unwrap();
    assert!(rel(got.seconds(), 2.1109) < 1e-9);
}

#[test]
fn preset_network_parameters() {
    let (slow, _) = catalog("slow-remote");
    assert_eq!((slow.network.nrt, slow.network.bandwidth), (0.5, 62_500.0));
    let (fast, _) = catalog("fast-local");
    assert_eq!((fast.network.nrt, fast.network.bandwidth), (0.0005, 750_000_000.0));
    let (unit, _) = catalog("unit");
    assert_eq!((unit.network.nrt, unit.constants.cy, unit.constants.cz), (1.0, 1.0, 1.0));
}

#[test]
fn single_precision_agrees() {
    let q = parse_query("join(o_customer_sk == c_customer_sk, scan(orders), scan(customer))").unwrap();
    let (c64, s64) = catalog("slow-remote");
    let text = std::fs::read_to_string(common::catalog_path("slow-remote")).unwrap();
    let (c32, s32) = parse_catalog::<f32>(&text).unwrap();
    let a = CostModel::new(&c64, &s64).query_cost(&q).unwrap().seconds();
    let b = CostModel::new(&c32, &s32).query_cost(&q).unwrap().seconds() as f64;
    assert!(rel(b, a) < 1e-5);
}

fn terms() -> impl Strategy<Value = QueryTerms<f64>> {
    (0.0..2.0, 1.0..1e9, 0.0..1.0, 0.0..5.0, 0.0..1e6, 0.0..1e3).prop_map(|(nrt, bw, cqf, extra, nq, srow)| QueryTerms {
        nrt,
        bandwidth: bw,
        cqf,
        cql: cqf + extra,
        nq,
        srow,
    })
}

proptest! {
    #[test]
    fn breakdown_sums_to_total(t in terms()) {
        let c = t.cost();
        let want = oracle(t.nrt, t.bandwidth, t.cqf, t.cql, t.nq, t.srow);
        prop_assert!(rel(c.seconds(), want) < 1e-9 || (want == 0.0 && c.seconds() == 0.0));
        prop_assert!(c.network >= 0.0 && c.server >= 0.0 && c.seconds().is_finite());
    }

    #[test]
    fn monotone_in_every_parameter(t in terms(), d in 0.0..10.0f64) {
        let base = t.cost().seconds();
        let up = |u: QueryTerms<f64>| u.cost().seconds() >= base * (1.0 - 1e-12);
        let raised = [
            QueryTerms { nq: t.nq + d * 1e3, ..t },
            QueryTerms { srow: t.srow + d, ..t },
            QueryTerms { nrt: t.nrt + d, ..t },
            QueryTerms { cql: t.cql + d, ..t },
            // Raising C_F keeps C_L at least C_F.
            QueryTerms { cqf: t.cqf + d, cql: t.cql.max(t.cqf + d), ..t },
        ];
        for u in raised {
            prop_assert!(up(u));
        }
        let wider = QueryTerms { bandwidth: t.bandwidth * (1.0 + d), ..t };
        prop_assert!(wider.cost().seconds() <= base * (1.0 + 1e-12));
    }

    #[test]
    fn continuous_where_the_terms_meet(t in terms()) {
        // Choose C_L so that transfer time equals the server residual.
        let transfer = t.nq * t.srow / t.bandwidth;
        let seam = QueryTerms { cql: t.cqf + transfer, ..t };
        let a = seam.cost().seconds();
        let nudged = QueryTerms { cql: seam.cql * (1.0 + 1e-12), ..seam };
        let b = nudged.cost().seconds();
        prop_assert!(rel(b, a) < 1e-9 || a == b);
    }
}
