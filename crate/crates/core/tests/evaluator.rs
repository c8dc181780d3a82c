use std::collections::BTreeMap;

use cobra::evaluator::{eval_query, run, Database, Relation, Value};
use cobra::frontend::parser::parse_query;
use cobra::frontend::printer::print_query;
use cobra::frontend::{parse, QueryExpr};
use proptest::prelude::*;

fn no_outer(t: &str, a: &str) -> Result<Value, cobra::evaluator::RuntimeError> {
    Err(cobra::evaluator::RuntimeError::new(format!("unbound {t}.{a}")))
}

fn rel(schema: &[&str], rows: &[&[i64]]) -> Relation {
    Relation {
        schema: schema.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(|r| r.iter().map(|v| Value::Int(*v)).collect()).collect(),
    }
}

fn db(relations: Vec<(&str, Relation)>) -> Database {
    Database {
        relations: relations.into_iter().map(|(n, r)| (n.to_string(), r)).collect(),
        ..Database::default()
    }
}

fn rows(q: &str, d: &Database) -> Vec<Vec<(String, Value)>> {
    eval_query(&parse_query(q).unwrap(), d, &no_outer)
        .unwrap()
        .into_iter()
        .map(|r| (*r).clone())
        .collect()
}

fn sorted(mut v: Vec<Vec<(String, Value)>>) -> Vec<Vec<(String, Value)>> {
    for r in &mut v {
        r.sort();
    }
    v.sort();
    v
}

#[test]
fn running_sum_with_dependent_map() {
    let d = db(vec![("sales", rel(&["month", "sale_amt"], &[&[2, 5], &[1, 4], &[1, 6]]))]);
    let program = parse(cobra::samples::M0).unwrap();
    let out = run(&program, "mySum", &d).unwrap();
    let map = Value::Map(std::rc::Rc::new(BTreeMap::from([
        (Value::Int(1), Value::Int(10)),
        (Value::Int(2), Value::Int(15)),
    ])));
    assert_eq!(out.printed, vec![Value::Int(15), map]);
    assert_eq!(out.counters.queries, 1);
    assert_eq!(out.counters.rows, 3);
}

#[test]
fn join_matches_key_pairs() {
    let d = db(vec![
        ("orders", rel(&["o_id", "o_customer_sk"], &[&[1, 10], &[2, 20], &[3, 10], &[4, 30]])),
        ("customer", rel(&["c_customer_sk", "c_birth_year"], &[&[10, 1970], &[20, 1980]])),
    ]);
    let got = rows("join(o_customer_sk == c_customer_sk, scan(orders), scan(customer))", &d);
    assert_eq!(got.len(), 3);
    let ids: Vec<_> = got.iter().map(|r| r[0].1.clone()).collect();
    assert_eq!(ids, vec![Value::Int(1), Value::Int(2), Value::Int(3)]);
}

#[test]
fn grouped_aggregate_in_key_order() {
    let d = db(vec![("sales", rel(&["month", "sale_amt"], &[&[2, 5], &[1, 4], &[1, 6]]))]);
    let got = rows("aggregate(sum, sale_amt, month, scan(sales))", &d);
    let flat: Vec<Vec<Value>> = got.iter().map(|r| r.iter().map(|(_, v)| v.clone()).collect()).collect();
    assert_eq!(flat, vec![vec![Value::Int(1), Value::Int(10)], vec![Value::Int(2), Value::Int(5)]]);
}

#[test]
fn repeated_queries_are_counted_once() {
    let src = "fn f() {\n    a = executeQuery(scan(sales));\n    b = executeQuery(scan(sales));\n    return a;\n}\n";
    let d = db(vec![("sales", rel(&["month", "sale_amt"], &[&[1, 1]]))]);
    let out = run(&parse(src).unwrap(), "f", &d).unwrap();
    assert_eq!(out.counters.queries, 1);
}

#[test]
fn unknown_relation_is_a_runtime_error() {
    let src = "fn f() {\n    a = executeQuery(scan(nowhere));\n    return a;\n}\n";
    assert!(run(&parse(src).unwrap(), "f", &Database::default()).is_err());
}

#[test]
fn database_json_round_trip() {
    let d = db(vec![("sales", rel(&["month", "sale_amt"], &[&[1, 4], &[2, 5]]))]);
    assert_eq!(Database::from_json(&d.to_json()).unwrap().relations, d.relations);
    assert!(Database::from_json(r#"{"sales": {"schema": ["a"], "rows": [[1, 2]]}}"#).is_err());
}

fn table(name: &'static str, cols: [&'static str; 2]) -> impl Strategy<Value = (&'static str, Relation)> {
    prop::collection::vec((0i64..6, 0i64..6), 0..12).prop_map(move |rs| {
        (
            name,
            Relation {
                schema: cols.iter().map(|c| c.to_string()).collect(),
                rows: rs.into_iter().map(|(a, b)| vec![Value::Int(a), Value::Int(b)]).collect(),
            },
        )
    })
}

fn pair() -> impl Strategy<Value = Database> {
    (table("r", ["a", "b"]), table("s", ["c", "d"])).prop_map(|(r, s)| db(vec![r, s]))
}

fn query() -> impl Strategy<Value = QueryExpr> {
    let leaf = prop_oneof![Just(QueryExpr::scan("r")), Just(QueryExpr::scan("s"))];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), 0i64..6).prop_map(|(q, k)| {
                let col = if q.relations().contains(&"r") { "a" } else { "c" };
                parse_query(&format!("select({col} < {k}, {})", print_query(&q))).unwrap()
            }),
            inner.prop_map(|q| parse_query(&format!("orderby(b, {})", print_query(&q))).unwrap_or(q)),
        ]
    })
}

proptest! {
    #[test]
    fn conjunction_splits_into_cascaded_selections(d in pair(), k in 0i64..6, m in 0i64..6) {
        let both = rows(&format!("select(a < {k} && b > {m}, scan(r))"), &d);
        let cascade = rows(&format!("select(b > {m}, select(a < {k}, scan(r)))"), &d);
        prop_assert_eq!(both, cascade);
    }

    #[test]
    fn selections_commute(d in pair(), k in 0i64..6, m in 0i64..6) {
        let x = rows(&format!("select(b > {m}, select(a < {k}, scan(r)))"), &d);
        let y = rows(&format!("select(a < {k}, select(b > {m}, scan(r)))"), &d);
        prop_assert_eq!(x, y);
    }

    #[test]
    fn join_is_a_filtered_product(d in pair()) {
        let join = rows("join(a == c, scan(r), scan(s))", &d);
        let flipped = rows("join(a == c, scan(s), scan(r))", &d);
        prop_assert_eq!(sorted(join.clone()), sorted(flipped));
        let expected = d.relations["r"].rows.iter()
            .map(|x| d.relations["s"].rows.iter().filter(|y| y[0] == x[0]).count())
            .sum::<usize>();
        prop_assert_eq!(join.len(), expected);
    }

    #[test]
    fn selection_pushes_below_join(d in pair(), k in 0i64..6) {
        let above = rows(&format!("select(b < {k}, join(a == c, scan(r), scan(s)))"), &d);
        let below = rows(&format!("join(a == c, select(b < {k}, scan(r)), scan(s))"), &d);
        prop_assert_eq!(above, below);
    }

    #[test]
    fn sum_equals_client_side_sum(d in pair()) {
        let got = rows("aggregate(sum, b, scan(r))", &d);
        let want: i64 = d.relations["r"].rows.iter().map(|r| match r[1] { Value::Int(v) => v, _ => 0 }).sum();
        prop_assert_eq!(got[0][0].1.as_f64(), Some(want as f64));
    }

    #[test]
    fn printed_queries_parse_back(q in query()) {
        prop_assert_eq!(parse_query(&print_query(&q)).unwrap(), q);
    }
}
