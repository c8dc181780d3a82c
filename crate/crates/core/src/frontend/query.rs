//! Relational query algebra embedded in CobraLang, plus its SQL rendering.

use std::fmt;

use sha2::{Digest, Sha256};

use super::ast::{BinOp, Expr, UnOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFn {
    Sum,
    Count,
    Max,
    Min,
}

impl AggFn {
    pub fn name(self) -> &'static str {
        match self {
            AggFn::Sum => "sum",
            AggFn::Count => "count",
            AggFn::Max => "max",
            AggFn::Min => "min",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFn> {
        Some(match name {
            "sum" => AggFn::Sum,
            "count" => AggFn::Count,
            "max" => AggFn::Max,
            "min" => AggFn::Min,
            _ => return None,
        })
    }
}

/// One output column of a projection: a column expression and its name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProjItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

impl ProjItem {
    pub fn column(name: impl Into<String>) -> ProjItem {
        ProjItem {
            expr: Expr::Var(name.into()),
            alias: None,
        }
    }

    /// Name of the produced column.
    pub fn output_name(&self) -> String {
        match (&self.alias, &self.expr) {
            (Some(a), _) => a.clone(),
            (None, Expr::Var(c)) => c.clone(),
            (None, other) => format!("{other:?}"),
        }
    }

    pub fn is_plain_column(&self) -> bool {
        self.alias.is_none() && matches!(self.expr, Expr::Var(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryExpr {
    Scan(String),
    Select(Expr, Box<QueryExpr>),
    Project(Vec<ProjItem>, Box<QueryExpr>),
    Join(Expr, Box<QueryExpr>, Box<QueryExpr>),
    Aggregate {
        func: AggFn,
        column: String,
        group_by: Option<String>,
        input: Box<QueryExpr>,
    },
    OrderBy(String, Box<QueryExpr>),
}

impl QueryExpr {
    pub fn scan(rel: impl Into<String>) -> QueryExpr {
        QueryExpr::Scan(rel.into())
    }

    pub fn select(pred: Expr, input: QueryExpr) -> QueryExpr {
        QueryExpr::Select(pred, Box::new(input))
    }

    pub fn join(pred: Expr, left: QueryExpr, right: QueryExpr) -> QueryExpr {
        QueryExpr::Join(pred, Box::new(left), Box::new(right))
    }

    pub fn aggregate(func: AggFn, column: impl Into<String>, input: QueryExpr) -> QueryExpr {
        QueryExpr::Aggregate {
            func,
            column: column.into(),
            group_by: None,
            input: Box::new(input),
        }
    }

    /// Relations scanned by the query, in left-to-right order.
    pub fn relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |q| {
            if let QueryExpr::Scan(r) = q {
                out.push(r.as_str());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a QueryExpr)) {
        f(self);
        match self {
            QueryExpr::Scan(_) => {}
            QueryExpr::Select(_, c)
            | QueryExpr::Project(_, c)
            | QueryExpr::OrderBy(_, c)
            | QueryExpr::Aggregate { input: c, .. } => c.walk(f),
            QueryExpr::Join(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
        }
    }

    /// Scalar expressions embedded in the query (predicates and projections).
    pub fn exprs(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.walk(&mut |q| match q {
            QueryExpr::Select(p, _) | QueryExpr::Join(p, _, _) => out.push(p),
            QueryExpr::Project(items, _) => out.extend(items.iter().map(|i| &i.expr)),
            _ => {}
        });
        out
    }

    /// Program variables referenced as `x.col` inside the query.
    pub fn outer_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in self.exprs() {
            outer_refs(e, &mut |v, _| {
                if !out.iter().any(|o: &String| o == v) {
                    out.push(v.to_string());
                }
            });
        }
        out
    }

    /// True when the query reads no program variable.
    pub fn is_closed(&self) -> bool {
        self.outer_vars().is_empty()
    }

    pub fn is_scalar_aggregate(&self) -> bool {
        matches!(self, QueryExpr::Aggregate { group_by: None, .. })
    }

    /// Output columns, given the columns of each base relation.
    pub fn columns(&self, schema: &dyn Fn(&str) -> Option<Vec<String>>) -> Option<Vec<String>> {
        match self {
            QueryExpr::Scan(r) => schema(r),
            QueryExpr::Select(_, c) | QueryExpr::OrderBy(_, c) => c.columns(schema),
            QueryExpr::Project(items, _) => Some(items.iter().map(ProjItem::output_name).collect()),
            QueryExpr::Join(_, l, r) => {
                let mut cols = l.columns(schema)?;
                cols.extend(r.columns(schema)?);
                Some(cols)
            }
            QueryExpr::Aggregate { func, group_by, .. } => {
                let mut cols: Vec<String> = group_by.iter().cloned().collect();
                cols.push(func.name().to_string());
                Some(cols)
            }
        }
    }

    /// Canonical form: equality and inequality operands put in a fixed order.
    pub fn canonical(&self) -> QueryExpr {
        match self {
            QueryExpr::Scan(r) => QueryExpr::Scan(r.clone()),
            QueryExpr::Select(p, c) => QueryExpr::Select(canonical_expr(p), Box::new(c.canonical())),
            QueryExpr::Project(items, c) => QueryExpr::Project(
                items
                    .iter()
                    .map(|i| ProjItem {
                        expr: canonical_expr(&i.expr),
                        alias: i.alias.clone(),
                    })
                    .collect(),
                Box::new(c.canonical()),
            ),
            QueryExpr::Join(p, l, r) => QueryExpr::Join(
                canonical_expr(p),
                Box::new(l.canonical()),
                Box::new(r.canonical()),
            ),
            QueryExpr::Aggregate {
                func,
                column,
                group_by,
                input,
            } => QueryExpr::Aggregate {
                func: *func,
                column: column.clone(),
                group_by: group_by.clone(),
                input: Box::new(input.canonical()),
            },
            QueryExpr::OrderBy(c, q) => QueryExpr::OrderBy(c.clone(), Box::new(q.canonical())),
        }
    }

    /// Deterministic SQL text.
    pub fn to_sql(&self) -> String {
        let mut counter = 0;
        SqlBlock::build(self, &mut counter).render()
    }

    /// Stable identifier of the query: a hash of its canonical SQL text.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().to_sql().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Visits every `x.col` reference to a program variable inside a query expression.
pub fn outer_refs(e: &Expr, f: &mut impl FnMut(&str, &str)) {
    match e {
        Expr::Field(base, col) => {
            if let Expr::Var(v) = base.as_ref() {
                f(v, col)
            } else {
                outer_refs(base, f)
            }
        }
        Expr::Binary(_, l, r) => {
            outer_refs(l, f);
            outer_refs(r, f);
        }
        Expr::Unary(_, x) => outer_refs(x, f),
        Expr::Call(_, args) => args.iter().for_each(|a| outer_refs(a, f)),
        _ => {}
    }
}

/// Bare column names referenced inside a query expression.
pub fn column_refs(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Var(c) => {
            if !out.contains(c) {
                out.push(c.clone())
            }
        }
        Expr::Field(base, _) => {
            if !matches!(base.as_ref(), Expr::Var(_)) {
                column_refs(base, out)
            }
        }
        Expr::Binary(_, l, r) => {
            column_refs(l, out);
            column_refs(r, out);
        }
        Expr::Unary(_, x) => column_refs(x, out),
        Expr::Call(_, args) => args.iter().for_each(|a| column_refs(a, out)),
        _ => {}
    }
}

/// Orders the operands of `==` and `!=` so that `a == b` and `b == a` coincide.
pub fn canonical_expr(e: &Expr) -> Expr {
    match e {
        Expr::Binary(op, l, r) => {
            let (l, r) = (canonical_expr(l), canonical_expr(r));
            if matches!(op, BinOp::Eq | BinOp::Ne) && r < l {
                Expr::binary(*op, r, l)
            } else {
                Expr::binary(*op, l, r)
            }
        }
        Expr::Unary(op, x) => Expr::Unary(*op, Box::new(canonical_expr(x))),
        Expr::Field(b, c) => Expr::Field(Box::new(canonical_expr(b)), c.clone()),
        Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(canonical_expr).collect()),
        other => other.clone(),
    }
}

/// SQL rendering of a scalar expression in query context.
pub fn sql_expr(e: &Expr) -> String {
    fn go(e: &Expr, parent: u8) -> String {
        match e {
            Expr::Int(i) => i.to_string(),
            Expr::Float(f) => format!("{}", f.0),
            Expr::Str(s) => format!("'{}'", s.replace('\'', "''")),
            Expr::Bool(b) => b.to_string(),
            Expr::Var(c) => c.clone(),
            Expr::Field(base, col) => match base.as_ref() {
                Expr::Var(v) => format!(":{v}.{col}"),
                other => format!("{}.{col}", go(other, 9)),
            },
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let sym = match op {
                    BinOp::Eq => "=",
                    BinOp::Ne => "<>",
                    BinOp::And => "and",
                    BinOp::Or => "or",
                    other => other.symbol(),
                };
                let s = format!("{} {sym} {}", go(l, p), go(r, p + 1));
                if p < parent {
                    format!("({s})")
                } else {
                    s
                }
            }
            Expr::Unary(UnOp::Not, x) => format!("not {}", go(x, 8)),
            Expr::Unary(UnOp::Neg, x) => format!("-{}", go(x, 8)),
            Expr::Call(n, args) => format!(
                "{n}({})",
                args.iter().map(|a| go(a, 0)).collect::<Vec<_>>().join(", ")
            ),
        }
    }
    go(e, 0)
}

struct SqlBlock {
    select: Option<Vec<String>>,
    from: String,
    filters: Vec<String>,
    group_by: Option<String>,
    order_by: Vec<String>,
    aggregated: bool,
}

impl SqlBlock {
    fn table(from: String) -> SqlBlock {
        SqlBlock {
            select: None,
            from,
            filters: Vec::new(),
            group_by: None,
            order_by: Vec::new(),
            aggregated: false,
        }
    }

    fn is_plain_table(&self) -> bool {
        self.select.is_none()
            && self.filters.is_empty()
            && self.group_by.is_none()
            && self.order_by.is_empty()
            && !self.aggregated
            && !self.from.contains(' ')
    }

    fn wrap(self, counter: &mut usize) -> SqlBlock {
        *counter += 1;
        SqlBlock::table(format!("({}) as q{}", self.render(), counter))
    }

    fn build(q: &QueryExpr, counter: &mut usize) -> SqlBlock {
        match q {
            QueryExpr::Scan(r) => SqlBlock::table(r.clone()),
            QueryExpr::Select(p, c) => {
                let mut b = SqlBlock::build(c, counter);
                if b.select.is_some() || b.aggregated {
                    b = b.wrap(counter);
                }
                b.filters.push(sql_expr(p));
                b
            }
            QueryExpr::Project(items, c) => {
                let mut b = SqlBlock::build(c, counter);
                if b.select.is_some() || b.aggregated {
                    b = b.wrap(counter);
                }
                b.select = Some(
                    items
                        .iter()
                        .map(|i| match &i.alias {
                            Some(a) => format!("{} as {a}", sql_expr(&i.expr)),
                            None => sql_expr(&i.expr),
                        })
                        .collect(),
                );
                b
            }
            QueryExpr::Join(p, l, r) => {
                let mut lb = SqlBlock::build(l, counter);
                if lb.select.is_some() || lb.aggregated || !lb.order_by.is_empty() {
                    lb = lb.wrap(counter);
                }
                let mut rb = SqlBlock::build(r, counter);
                if !rb.is_plain_table() {
                    rb = rb.wrap(counter);
                }
                lb.from = format!("{} join {} on {}", lb.from, rb.from, sql_expr(p));
                lb
            }
            QueryExpr::Aggregate {
                func,
                column,
                group_by,
                input,
            } => {
                let mut b = SqlBlock::build(input, counter);
                if b.select.is_some() || b.aggregated {
                    b = b.wrap(counter);
                }
                b.order_by.clear();
                let agg = format!("{}({column})", func.name());
                b.select = Some(match group_by {
                    Some(g) => vec![g.clone(), agg],
                    None => vec![agg],
                });
                b.group_by = group_by.clone();
                b.aggregated = true;
                b
            }
            QueryExpr::OrderBy(col, c) => {
                let mut b = SqlBlock::build(c, counter);
                b.order_by.insert(0, col.clone());
                b
            }
        }
    }

    fn render(&self) -> String {
        let mut s = format!(
            "select {} from {}",
            self.select
                .as_ref()
                .map(|c| c.join(", "))
                .unwrap_or_else(|| "*".to_string()),
            self.from
        );
        if !self.filters.is_empty() {
            s.push_str(" where ");
            s.push_str(&self.filters.join(" and "));
        }
        if let Some(g) = &self.group_by {
            s.push_str(" group by ");
            s.push_str(g);
        }
        if !self.order_by.is_empty() {
            s.push_str(" order by ");
            s.push_str(&self.order_by.join(", "));
        }
        s
    }
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::print_query(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sales_query() -> QueryExpr {
        QueryExpr::OrderBy(
            "month".into(),
            Box::new(QueryExpr::Project(
                vec![ProjItem::column("month"), ProjItem::column("sale_amt")],
                Box::new(QueryExpr::scan("sales")),
            )),
        )
    }

    #[test]
    fn renders_cursor_query() {
        assert_eq!(
            sales_query().to_sql(),
            "select month, sale_amt from sales order by month"
        );
    }

    #[test]
    fn renders_scalar_aggregate() {
        let q = QueryExpr::aggregate(AggFn::Sum, "sale_amt", QueryExpr::scan("sales"));
        assert_eq!(q.to_sql(), "select sum(sale_amt) from sales");
    }

    #[test]
    fn renders_join_and_outer_reference() {
        let j = QueryExpr::join(
            Expr::binary(BinOp::Eq, Expr::var("o_customer_sk"), Expr::var("c_customer_sk")),
            QueryExpr::scan("orders"),
            QueryExpr::scan("customer"),
        );
        assert_eq!(
            j.to_sql(),
            "select * from orders join customer on o_customer_sk = c_customer_sk"
        );
        let lookup = QueryExpr::select(
            Expr::binary(
                BinOp::Eq,
                Expr::var("c_customer_sk"),
                Expr::field(Expr::var("o"), "o_customer_sk"),
            ),
            QueryExpr::scan("customer"),
        );
        assert_eq!(
            lookup.to_sql(),
            "select * from customer where c_customer_sk = :o.o_customer_sk"
        );
        assert_eq!(lookup.outer_vars(), vec!["o".to_string()]);
    }

    #[test]
    fn canonical_form_ignores_equality_operand_order() {
        let a = QueryExpr::select(
            Expr::binary(BinOp::Eq, Expr::var("x"), Expr::Int(1)),
            QueryExpr::scan("r"),
        );
        let b = QueryExpr::select(
            Expr::binary(BinOp::Eq, Expr::Int(1), Expr::var("x")),
            QueryExpr::scan("r"),
        );
        assert_ne!(a, b);
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn nested_shapes_use_subqueries() {
        let q = QueryExpr::select(
            Expr::binary(BinOp::Gt, Expr::var("sale_amt"), Expr::Int(7)),
            sales_query(),
        );
        assert_eq!(
            q.to_sql(),
            "select * from (select month, sale_amt from sales order by month) as q1 where sale_amt > 7"
        );
    }
}
