//! Relational algebra over in-memory relations.

use std::collections::BTreeMap;
use std::rc::Rc;

use super::interp::{apply_binary, apply_builtin, apply_unary, RuntimeError};
use super::{row_get, Database, Row, Value};
use crate::frontend::ast::{BinOp, Expr};
use crate::frontend::query::{AggFn, QueryExpr};

/// Resolves an outer reference `var.column`.
pub type Outer<'a> = &'a dyn Fn(&str, &str) -> Result<Value, RuntimeError>;

/// Rows of `q` in result order. Joins are nested loops with the left input
/// outermost; `orderby` is a stable sort; grouped aggregates come out in
/// group-key order.
pub fn eval_query(q: &QueryExpr, db: &Database, outer: Outer) -> Result<Vec<Row>, RuntimeError> {
    Ok(match q {
        QueryExpr::Scan(r) => db
            .scan(r)
            .ok_or_else(|| RuntimeError::new(format!("unknown relation `{r}`")))?,
        QueryExpr::Select(p, c) => {
            let mut out = Vec::new();
            for row in eval_query(c, db, outer)? {
                if scalar(p, &row, outer)?.truthy() {
                    out.push(row);
                }
            }
            out
        }
        QueryExpr::Project(items, c) => eval_query(c, db, outer)?
            .iter()
            .map(|row| {
                items
                    .iter()
                    .map(|i| Ok((i.output_name(), scalar(&i.expr, row, outer)?)))
                    .collect::<Result<Vec<_>, RuntimeError>>()
                    .map(Rc::new)
            })
            .collect::<Result<_, _>>()?,
        QueryExpr::Join(p, l, r) => {
            let right = eval_query(r, db, outer)?;
            let mut out = Vec::new();
            for a in eval_query(l, db, outer)? {
                for b in &right {
                    let row: Row = Rc::new(a.iter().chain(b.iter()).cloned().collect());
                    if scalar(p, &row, outer)?.truthy() {
                        out.push(row);
                    }
                }
            }
            out
        }
        QueryExpr::Aggregate {
            func,
            column,
            group_by,
            input,
        } => {
            let rows = eval_query(input, db, outer)?;
            match group_by {
                None => vec![Rc::new(vec![(func.name().to_string(), aggregate(*func, column, &rows)?)])],
                Some(g) => {
                    let mut groups: BTreeMap<Value, Vec<Row>> = BTreeMap::new();
                    for row in rows {
                        let key = column_of(&row, g)?;
                        groups.entry(key).or_default().push(row);
                    }
                    groups
                        .into_iter()
                        .map(|(k, rs)| Ok(Rc::new(vec![(g.clone(), k), (func.name().to_string(), aggregate(*func, column, &rs)?)])))
                        .collect::<Result<_, RuntimeError>>()?
                }
            }
        }
        QueryExpr::OrderBy(col, c) => {
            let rows = eval_query(c, db, outer)?;
            let mut keyed = rows
                .into_iter()
                .map(|r| Ok((column_of(&r, col)?, r)))
                .collect::<Result<Vec<_>, RuntimeError>>()?;
            keyed.sort_by(|a, b| compare(&a.0, &b.0));
            keyed.into_iter().map(|(_, r)| r).collect()
        }
    })
}

fn column_of(row: &Row, col: &str) -> Result<Value, RuntimeError> {
    row_get(row, col)
        .cloned()
        .ok_or_else(|| RuntimeError::new(format!("unknown column `{col}`")))
}

/// Numeric values compare by magnitude, others by the structural order.
pub fn compare(a: &Value, b: &Value) -> std::cmp::Ordering {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if !(matches!(a, Value::Int(_)) && matches!(b, Value::Int(_))) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn aggregate(func: AggFn, column: &str, rows: &[Row]) -> Result<Value, RuntimeError> {
    if func == AggFn::Count && column == "*" {
        return Ok(Value::Int(rows.len() as i64));
    }
    let values = rows.iter().map(|r| column_of(r, column)).collect::<Result<Vec<_>, _>>()?;
    let values = values.into_iter().filter(|v| *v != Value::Null);
    Ok(match func {
        AggFn::Count => Value::Int(values.count() as i64),
        AggFn::Sum => {
            let mut acc = Value::Int(0);
            for v in values {
                acc = apply_binary(BinOp::Add, &acc, &v)?;
            }
            acc
        }
        AggFn::Max | AggFn::Min => {
            let mut acc = Value::Null;
            for v in values {
                acc = apply_builtin(func.name(), &[acc, v])?.expect("max and min are builtins");
            }
            acc
        }
    })
}

/// Scalar expression in query context: bare names are columns of `row`.
pub fn scalar(e: &Expr, row: &Row, outer: Outer) -> Result<Value, RuntimeError> {
    Ok(match e {
        Expr::Int(i) => Value::Int(*i),
        Expr::Float(f) => Value::Float(*f),
        Expr::Str(s) => Value::str(s),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Var(c) => column_of(row, c)?,
        Expr::Field(base, c) => match base.as_ref() {
            Expr::Var(v) => outer(v, c)?,
            other => scalar(other, row, outer)?
                .field(c)
                .ok_or_else(|| RuntimeError::new(format!("no field `{c}`")))?,
        },
        Expr::Binary(BinOp::And, l, r) => {
            Value::Bool(scalar(l, row, outer)?.truthy() && scalar(r, row, outer)?.truthy())
        }
        Expr::Binary(BinOp::Or, l, r) => {
            Value::Bool(scalar(l, row, outer)?.truthy() || scalar(r, row, outer)?.truthy())
        }
        Expr::Binary(op, l, r) => apply_binary(*op, &scalar(l, row, outer)?, &scalar(r, row, outer)?)?,
        Expr::Unary(op, x) => apply_unary(*op, &scalar(x, row, outer)?)?,
        Expr::Call(n, args) => {
            let vals = args.iter().map(|a| scalar(a, row, outer)).collect::<Result<Vec<_>, _>>()?;
            apply_builtin(n, &vals)?.ok_or_else(|| RuntimeError::new(format!("unknown function `{n}` in query")))?
        }
    })
}
