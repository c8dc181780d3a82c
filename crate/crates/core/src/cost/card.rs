//! Cardinality, selectivity and row-width estimates.

use num_traits::Float;

use super::catalog::{QueryStats, RelationStats};
use super::CostError;
use crate::frontend::ast::{BinOp, Expr, UnOp};
use crate::frontend::query::{sql_expr, QueryExpr};

/// Bytes assumed for a computed column or an aggregate value.
const SCALAR_BYTES: f64 = 8.0;

fn num<S: Float>(x: f64) -> S {
    S::from(x).unwrap()
}

fn relation<'a, S>(stats: &'a QueryStats<S>, name: &str) -> Result<&'a RelationStats<S>, CostError> {
    stats
        .relations
        .get(name)
        .ok_or_else(|| CostError::UnknownRelation(name.to_string()))
}

/// First relation scanned by `q` that lists `column`; any relation when `q`
/// is absent.
fn owner<'a, S>(q: Option<&QueryExpr>, stats: &'a QueryStats<S>, column: &str) -> Option<&'a RelationStats<S>> {
    let has = |rel: &&RelationStats<S>| rel.columns.iter().any(|c| c == column) || rel.distinct.contains_key(column);
    match q {
        Some(q) => q.relations().into_iter().find_map(|r| stats.relations.get(r).filter(has)),
        None => stats.relations.values().find(has),
    }
}

fn distinct<S: Float>(q: Option<&QueryExpr>, stats: &QueryStats<S>, column: &str) -> Option<S> {
    owner(q, stats, column).and_then(|r| r.distinct.get(column).copied())
}

pub fn estimate_card<S: Float>(q: &QueryExpr, stats: &QueryStats<S>) -> Result<S, CostError> {
    Ok(match q {
        QueryExpr::Scan(r) => relation(stats, r)?.card,
        QueryExpr::Select(p, c) => estimate_card(c, stats)? * selectivity(p, Some(c), stats, None),
        QueryExpr::Project(_, c) | QueryExpr::OrderBy(_, c) => estimate_card(c, stats)?,
        QueryExpr::Aggregate { group_by, input, .. } => {
            let n = estimate_card(input, stats)?;
            match group_by {
                None => S::one(),
                Some(g) => distinct(Some(input), stats, g).map_or(n, |d| d.min(n)),
            }
        }
        QueryExpr::Join(p, l, r) => {
            let (nl, nr) = (estimate_card(l, stats)?, estimate_card(r, stats)?);
            match equi_columns(p) {
                Some((a, b)) => {
                    if references(l, a, r, b, stats) || references(l, b, r, a, stats) {
                        nl
                    } else if references(r, a, l, b, stats) || references(r, b, l, a, stats) {
                        nr
                    } else {
                        let da = distinct(Some(q), stats, a).unwrap_or(S::one());
                        let db = distinct(Some(q), stats, b).unwrap_or(S::one());
                        nl * nr / da.max(db).max(S::one())
                    }
                }
                None => {
                    let k = stats.selectivities.get(&sql_expr(p)).copied();
                    nl * nr * k.unwrap_or(stats.default_selectivity)
                }
            }
        }
    })
}

/// Whether column `a` of `many` is a foreign key onto column `b` of `one`.
fn references<S>(many: &QueryExpr, a: &str, one: &QueryExpr, b: &str, stats: &QueryStats<S>) -> bool {
    many.relations().iter().any(|m| {
        stats.relations.get(*m).is_some_and(|rel| {
            rel.fk
                .get(a)
                .is_some_and(|(r, c)| c == b && one.relations().contains(&r.as_str()))
        })
    })
}

fn equi_columns(p: &Expr) -> Option<(&str, &str)> {
    match p {
        Expr::Binary(BinOp::Eq, l, r) => match (l.as_ref(), r.as_ref()) {
            (Expr::Var(a), Expr::Var(b)) => Some((a, b)),
            _ => None,
        },
        _ => None,
    }
}

/// Fraction of rows of `input` satisfying `p`: a catalog override keyed by
/// the predicate's SQL text, else `1/distinct` for equality of a known
/// column with a value, else `fallback` (the default selectivity when absent).
pub fn selectivity<S: Float>(p: &Expr, input: Option<&QueryExpr>, stats: &QueryStats<S>, fallback: Option<S>) -> S {
    if let Some(s) = stats.selectivities.get(&sql_expr(p)) {
        return *s;
    }
    match p {
        Expr::Binary(BinOp::And, l, r) => {
            selectivity(l, input, stats, fallback) * selectivity(r, input, stats, fallback)
        }
        Expr::Unary(UnOp::Not, e) => S::one() - selectivity(e, input, stats, fallback),
        Expr::Binary(BinOp::Eq, l, r) => {
            let col = match (l.as_ref(), r.as_ref()) {
                (Expr::Var(c), other) | (other, Expr::Var(c)) if !matches!(other, Expr::Var(_)) => Some(c),
                _ => None,
            };
            match col.and_then(|c| distinct(input, stats, c)) {
                Some(d) if d >= S::one() => S::one() / d,
                _ => fallback.unwrap_or_else(|| default_selectivity(stats)),
            }
        }
        _ => fallback.unwrap_or_else(|| default_selectivity(stats)),
    }
}

fn default_selectivity<S: Float>(stats: &QueryStats<S>) -> S {
    stats.default_selectivity
}

/// Bytes per result row: projected column widths, else whole rows.
pub fn row_size<S: Float>(q: &QueryExpr, stats: &QueryStats<S>) -> Result<S, CostError> {
    Ok(match q {
        QueryExpr::Scan(r) => relation(stats, r)?.row_bytes,
        QueryExpr::Select(_, c) | QueryExpr::OrderBy(_, c) => row_size(c, stats)?,
        QueryExpr::Project(items, c) => {
            row_size(c, stats)?;
            items.iter().fold(S::zero(), |acc, i| {
                acc + match &i.expr {
                    Expr::Var(col) => column_width(c, stats, col),
                    _ => num(SCALAR_BYTES),
                }
            })
        }
        QueryExpr::Join(_, l, r) => row_size(l, stats)? + row_size(r, stats)?,
        QueryExpr::Aggregate { group_by, input, .. } => {
            row_size(input, stats)?;
            num::<S>(SCALAR_BYTES) + group_by.as_ref().map_or(S::zero(), |g| column_width(input, stats, g))
        }
    })
}

fn column_width<S: Float>(q: &QueryExpr, stats: &QueryStats<S>, col: &str) -> S {
    owner(Some(q), stats, col).map_or(num(SCALAR_BYTES), |r| r.width(col))
}

/// Rows the server reads: the summed cardinality of every scanned relation.
pub fn input_card<S: Float>(q: &QueryExpr, stats: &QueryStats<S>) -> Result<S, CostError> {
    q.relations()
        .into_iter()
        .try_fold(S::zero(), |acc, r| Ok(acc + relation(stats, r)?.card))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::catalog::parse_catalog;
    use crate::frontend::parser::parse_query;

    fn stats(orders: u64, customer: u64) -> QueryStats<f64> {
        let text = format!(
            r#"{{"relations": {{
                "orders": {{"card": {orders}, "row_bytes": 226, "columns": ["o_id", "o_customer_sk"],
                            "fk": {{"o_customer_sk": "customer.c_customer_sk"}}}},
                "customer": {{"card": {customer}, "row_bytes": 300, "columns": ["c_customer_sk", "c_birth_year"],
                              "distinct": {{"c_customer_sk": {customer}}}}}
            }}}}"#
        );
        parse_catalog(&text).unwrap().1
    }

    fn q(s: &str) -> QueryExpr {
        parse_query(s).unwrap()
    }

    #[test]
    fn scan_is_cardinality() {
        assert_eq!(estimate_card(&q("scan(orders)"), &stats(1_000_000, 73_000)).unwrap(), 1_000_000.0);
    }

    #[test]
    fn foreign_key_join_keeps_the_many_side() {
        let s = stats(10_000, 73_000);
        let j = q("join(o_customer_sk == c_customer_sk, scan(orders), scan(customer))");
        assert_eq!(estimate_card(&j, &s).unwrap(), 10_000.0);
        let flipped = q("join(c_customer_sk == o_customer_sk, scan(customer), scan(orders))");
        assert_eq!(estimate_card(&flipped, &s).unwrap(), 10_000.0);
    }

    #[test]
    fn scalar_aggregate_is_one_row() {
        let s = stats(10, 10);
        assert_eq!(estimate_card(&q("aggregate(sum, o_id, scan(orders))"), &s).unwrap(), 1.0);
    }

    #[test]
    fn key_lookup_selects_one_row() {
        let s = stats(10, 73_000);
        let sel = q("select(c_customer_sk == o.o_customer_sk, scan(customer))");
        assert!((estimate_card(&sel, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_relation_is_reported() {
        let e = estimate_card(&q("scan(nowhere)"), &stats(1, 1)).unwrap_err();
        assert_eq!(e, CostError::UnknownRelation("nowhere".into()));
    }

    #[test]
    fn join_rows_are_both_widths() {
        let s = stats(1, 1);
        let j = q("join(o_customer_sk == c_customer_sk, scan(orders), scan(customer))");
        assert_eq!(row_size(&j, &s).unwrap(), 526.0);
        assert_eq!(row_size(&q("project([o_id], scan(orders))"), &s).unwrap(), 113.0);
    }
}
