//! Rewrite rules over F-IR alternatives.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use super::lift::LoopToFold;
use super::{alternatives_where, extract, has_leaf, leaf, node, rewrite, to_alt, FirExpr};
use crate::frontend::ast::{BinOp, Expr};
use crate::frontend::query::{outer_refs, AggFn, ProjItem, QueryExpr};
use crate::regiondag::expand::Rule;
use crate::regiondag::{AltTree, AndId, CanonQuery, Op, OrId, RegionDag};

pub const ALL_RULES: &[&str] = &["loopToFold", "T1", "T2", "T3", "T4", "T5", "N1", "N2"];

/// `relation.column` references `ref_relation.ref_column`, which is a key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForeignKey {
    pub relation: String,
    pub column: String,
    pub ref_relation: String,
    pub ref_column: String,
}

/// Schema facts the rules consult.
#[derive(Clone, Debug, Default)]
pub struct RuleContext {
    pub columns: BTreeMap<String, Vec<String>>,
    pub foreign_keys: Vec<ForeignKey>,
    /// Restrict `loopToFold` to loops updating a single variable.
    pub legacy: bool,
}

impl RuleContext {
    fn columns_of(&self, q: &QueryExpr) -> Option<Vec<String>> {
        q.columns(&|r| self.columns.get(r).cloned())
    }

    fn disjoint(&self, a: &QueryExpr, b: &QueryExpr) -> bool {
        match (self.columns_of(a), self.columns_of(b)) {
            (Some(x), Some(y)) => x.iter().all(|c| !y.contains(c)),
            _ => false,
        }
    }
}

/// Rules named in `names`, in the fixed priority order.
pub fn rule_set(names: &[&str], ctx: &RuleContext) -> Result<Vec<Box<dyn Rule>>, String> {
    if let Some(bad) = names.iter().find(|n| !ALL_RULES.contains(n)) {
        return Err(format!("unknown rule `{bad}` (known: {})", ALL_RULES.join(", ")));
    }
    let ctx = Rc::new(ctx.clone());
    Ok(ALL_RULES
        .iter()
        .filter(|n| names.contains(n))
        .map(|n| -> Box<dyn Rule> {
            match *n {
                "loopToFold" => Box::new(LoopToFold { legacy: ctx.legacy }),
                name => Box::new(FirRule { name, ctx: ctx.clone() }),
            }
        })
        .collect())
}

struct FirRule {
    name: &'static str,
    ctx: Rc<RuleContext>,
}

impl Rule for FirRule {
    fn name(&self) -> &'static str {
        self.name
    }

    fn apply(&self, dag: &RegionDag, and: AndId) -> Vec<AltTree> {
        match self.name {
            "T1" => t1(dag, and),
            "T2" => t2(dag, and),
            "T3" => t3(dag, and, &self.ctx),
            "T4" => t4(dag, and, &self.ctx),
            "T5" => t5(dag, and),
            "N1" => n1(dag, and),
            "N2" => n2(dag, and),
            _ => vec![],
        }
    }
}

struct FoldParts {
    t: String,
    slots: Vec<String>,
    acc: OrId,
    init: OrId,
    query: QueryExpr,
}

fn fold_parts(dag: &RegionDag, and: AndId) -> Option<FoldParts> {
    let a = dag.and(and);
    let Op::Fold { tuple_var, slots } = &a.op else { return None };
    let query = query_of(dag, a.children[2])?;
    Some(FoldParts {
        t: tuple_var.clone(),
        slots: slots.clone(),
        acc: a.children[0],
        init: a.children[1],
        query,
    })
}

fn query_of(dag: &RegionDag, or: OrId) -> Option<QueryExpr> {
    dag.or(or).alternatives.iter().find_map(|a| match &dag.and(*a).op {
        Op::Query(q) => Some(q.query.clone()),
        _ => None,
    })
}

fn fold_tree(p: &FoldParts, acc: AltTree, init: AltTree, query: QueryExpr) -> AltTree {
    AltTree::node(
        Op::Fold {
            tuple_var: p.t.clone(),
            slots: p.slots.clone(),
        },
        vec![acc, init, AltTree::leaf(Op::Query(CanonQuery::new(query)))],
    )
}

fn first_of(dag: &RegionDag, or: OrId) -> FirExpr {
    extract(dag, or, &mut |d, o| d.or(o).alternatives[0])
}

fn param(v: &str) -> AltTree {
    AltTree::leaf(Op::Param(v.to_string()))
}

/// Predicate in query context: attributes of row `t` become columns and
/// attributes of other rows outer references.
pub fn fir_to_query_expr(e: &FirExpr, t: &str) -> Option<Expr> {
    Some(match &e.op {
        Op::TupleAttr(x, a) if x == t => Expr::Var(a.clone()),
        Op::TupleAttr(x, a) => Expr::field(Expr::var(x.clone()), a.clone()),
        Op::Const(c) if !matches!(c, Expr::Call(..)) => c.clone(),
        Op::Bin(op) => Expr::binary(
            *op,
            fir_to_query_expr(&e.children[0], t)?,
            fir_to_query_expr(&e.children[1], t)?,
        ),
        Op::Unary(op) => Expr::Unary(*op, Box::new(fir_to_query_expr(&e.children[0], t)?)),
        _ => return None,
    })
}

/// Inverse of [`fir_to_query_expr`].
pub fn query_expr_to_fir(e: &Expr, t: &str) -> Option<FirExpr> {
    Some(match e {
        Expr::Var(a) => leaf(Op::TupleAttr(t.to_string(), a.clone())),
        Expr::Field(b, a) => match b.as_ref() {
            Expr::Var(x) => leaf(Op::TupleAttr(x.clone(), a.clone())),
            _ => return None,
        },
        Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) => leaf(Op::Const(e.clone())),
        Expr::Binary(op, l, r) => node(Op::Bin(*op), vec![query_expr_to_fir(l, t)?, query_expr_to_fir(r, t)?]),
        Expr::Unary(op, x) => node(Op::Unary(*op), vec![query_expr_to_fir(x, t)?]),
        Expr::Call(..) => return None,
    })
}

fn reads_own_row(e: &FirExpr, t: &str) -> bool {
    e.any(&|n| matches!(&n.op, Op::TupleAttr(x, _) if x == t))
}

/// T1: a fold that only collects the rows of its source is the query result.
fn t1(dag: &RegionDag, and: AndId) -> Vec<AltTree> {
    let Some(p) = fold_parts(dag, and) else { return vec![] };
    if p.slots.len() != 1 || !has_leaf(dag, p.init, &Op::Const(Expr::call("list", vec![]))) {
        return vec![];
    }
    let collects = alternatives_where(dag, p.acc, |op| *op == Op::Insert).any(|a| {
        let kids = &dag.and(a).children;
        has_leaf(dag, kids[0], &Op::Param(p.slots[0].clone()))
            && has_leaf(dag, kids[1], &Op::TupleVar(p.t.clone()))
    });
    if !collects {
        return vec![];
    }
    vec![AltTree::leaf(Op::ExecuteQuery(CanonQuery::new(p.query)))]
}

/// Guard alternatives of `or` of the form `pred ? g : <v>`, as `(pred, g)`.
fn guards(dag: &RegionDag, or: OrId, v: &str) -> Vec<(OrId, OrId)> {
    alternatives_where(dag, or, |op| *op == Op::Guard)
        .filter_map(|a| {
            let k = &dag.and(a).children;
            has_leaf(dag, k[2], &Op::Param(v.to_string())).then_some((k[0], k[1]))
        })
        .collect()
}

/// T2: a guard on the whole accumulator moves into the source as a selection.
fn t2(dag: &RegionDag, and: AndId) -> Vec<AltTree> {
    let Some(p) = fold_parts(dag, and) else { return vec![] };
    let push = |pred: OrId| -> Option<Expr> {
        let e = first_of(dag, pred);
        if !reads_own_row(&e, &p.t) {
            return None;
        }
        fir_to_query_expr(&e, &p.t)
    };
    let mut out = Vec::new();
    if p.slots.len() == 1 {
        for (pred, g) in guards(dag, p.acc, &p.slots[0]) {
            if let Some(qp) = push(pred) {
                let src = QueryExpr::select(qp, p.query.clone());
                out.push(fold_tree(&p, AltTree::Or(g), AltTree::Or(p.init), src));
            }
        }
        return out;
    }
    for tuple in alternatives_where(dag, p.acc, |op| *op == Op::Tuple) {
        let comps = &dag.and(tuple).children;
        for (pred, _) in guards(dag, comps[0], &p.slots[0]) {
            let gs: Option<Vec<AltTree>> = comps
                .iter()
                .zip(&p.slots)
                .map(|(c, v)| {
                    guards(dag, *c, v)
                        .into_iter()
                        .find(|(q, _)| *q == pred)
                        .map(|(_, g)| AltTree::Or(g))
                })
                .collect();
            if let (Some(gs), Some(qp)) = (gs, push(pred)) {
                let src = QueryExpr::select(qp, p.query.clone());
                out.push(fold_tree(&p, AltTree::node(Op::Tuple, gs), AltTree::Or(p.init), src));
            }
        }
    }
    out
}

/// N2: the reverse of T2.
fn n2(dag: &RegionDag, and: AndId) -> Vec<AltTree> {
    let Some(p) = fold_parts(dag, and) else { return vec![] };
    let QueryExpr::Select(qp, inner) = &p.query else { return vec![] };
    let Some(pred) = query_expr_to_fir(qp, &p.t) else { return vec![] };
    let guard = |g: AltTree, v: &str| AltTree::node(Op::Guard, vec![to_alt(&pred), g, param(v)]);
    if p.slots.len() == 1 {
        let acc = guard(AltTree::Or(p.acc), &p.slots[0]);
        return vec![fold_tree(&p, acc, AltTree::Or(p.init), (**inner).clone())];
    }
    alternatives_where(dag, p.acc, |op| *op == Op::Tuple)
        .map(|tuple| {
            let comps = dag.and(tuple).children.iter().zip(&p.slots);
            let acc = AltTree::node(Op::Tuple, comps.map(|(c, v)| guard(AltTree::Or(*c), v)).collect());
            fold_tree(&p, acc, AltTree::Or(p.init), (**inner).clone())
        })
        .collect()
}

fn is_arith(op: BinOp) -> bool {
    matches!(op, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod)
}

/// Arithmetic over attributes of row `t` and numeric literals only.
fn pushable_arith(e: &FirExpr, t: &str) -> bool {
    match &e.op {
        Op::TupleAttr(x, _) => x == t,
        Op::Const(Expr::Int(_) | Expr::Float(_)) => true,
        Op::Bin(op) if is_arith(*op) => e.children.iter().all(|c| pushable_arith(c, t)),
        Op::Unary(crate::frontend::ast::UnOp::Neg) => pushable_arith(&e.children[0], t),
        _ => false,
    }
}

fn find_pushable(e: &FirExpr, t: &str) -> Option<FirExpr> {
    if matches!(e.op, Op::Bin(op) if is_arith(op)) && pushable_arith(e, t) && reads_own_row(e, t) {
        return Some(e.clone());
    }
    e.children.iter().find_map(|c| find_pushable(c, t))
}

/// Columns of row `t` read by `e`, in first-use order; `None` if the whole
/// row is used.
fn row_columns(e: &FirExpr, t: &str) -> Option<Vec<String>> {
    let mut cols: Vec<String> = Vec::new();
    let mut whole = false;
    e.walk(&mut |n| {
        let mut add = |c: &str| {
            if !cols.iter().any(|x| x == c) {
                cols.push(c.to_string());
            }
        };
        match &n.op {
            Op::TupleAttr(x, a) if x == t => add(a),
            Op::TupleVar(x) if x == t => whole = true,
            Op::Query(q) | Op::ExecuteQuery(q) => {
                for pe in q.exprs() {
                    outer_refs(pe, &mut |v, c| {
                        if v == t {
                            add(c)
                        }
                    });
                }
            }
            _ => {}
        }
    });
    (!whole).then_some(cols)
}

/// T3: arithmetic over the current row is computed by the query instead.
fn t3(dag: &RegionDag, and: AndId, ctx: &RuleContext) -> Vec<AltTree> {
    let Some(p) = fold_parts(dag, and) else { return vec![] };
    let acc = first_of(dag, p.acc);
    let Some(target) = find_pushable(&acc, &p.t) else { return vec![] };
    let Some(expr) = fir_to_query_expr(&target, &p.t) else { return vec![] };
    let mut taken = ctx.columns_of(&p.query).unwrap_or_default();
    let Some(used_before) = row_columns(&acc, &p.t) else { return vec![] };
    taken.extend(used_before);
    let name = (0..)
        .map(|i| format!("_c{i}"))
        .find(|n| !taken.contains(n))
        .unwrap();
    let attr = leaf(Op::TupleAttr(p.t.clone(), name.clone()));
    let new_acc = rewrite(&acc, &mut |n| (**n == *target).then(|| attr.clone()));
    let Some(cols) = row_columns(&new_acc, &p.t) else { return vec![] };
    let mut items: Vec<ProjItem> = cols.iter().filter(|c| **c != name).map(ProjItem::column).collect();
    items.push(ProjItem {
        expr,
        alias: Some(name),
    });
    let src = QueryExpr::Project(items, Box::new(p.query.clone()));
    vec![fold_tree(&p, to_alt(&new_acc), AltTree::Or(p.init), src)]
}

/// `A == t.B` in either operand order, as `(A, B)`.
fn key_equality(pred: &Expr, t: &str) -> Option<(String, String)> {
    let Expr::Binary(BinOp::Eq, l, r) = pred else { return None };
    let side = |a: &Expr, b: &Expr| match (a, b) {
        (Expr::Var(col), Expr::Field(base, key)) if matches!(base.as_ref(), Expr::Var(v) if v == t) => {
            Some((col.clone(), key.clone()))
        }
        _ => None,
    };
    side(l, r).or_else(|| side(r, l))
}

/// A per-row query `select(A == t.B, scan(R))`, as `(R, A, B)`.
fn lookup_pattern(q: &QueryExpr, t: &str) -> Option<(String, String, String)> {
    let QueryExpr::Select(pred, input) = q else { return None };
    let QueryExpr::Scan(rel) = input.as_ref() else { return None };
    let (a, b) = key_equality(pred, t)?;
    Some((rel.clone(), a, b))
}

fn per_row_query(acc: &FirExpr, t: &str) -> Option<(CanonQuery, (String, String, String))> {
    let mut found = None;
    acc.walk(&mut |n| {
        if let (None, Op::ExecuteQuery(q)) = (&found, &n.op) {
            if let Some(m) = lookup_pattern(q, t) {
                found = Some((q.clone(), m));
            }
        }
    });
    found
}

/// T4: a fold nested in a fold, filtering on an equality between the two
/// rows, becomes one fold over the join.
fn t4(dag: &RegionDag, and: AndId, ctx: &RuleContext) -> Vec<AltTree> {
    let Some(p) = fold_parts(dag, and) else { return vec![] };
    let mut out = Vec::new();
    for inner in alternatives_where(dag, p.acc, |op| matches!(op, Op::Fold { .. })) {
        if let Some(tree) = join_nested(dag, &p, inner, ctx) {
            out.push(tree);
        }
    }
    out.extend(join_lookup(dag, &p, ctx));
    out
}

fn join_nested(dag: &RegionDag, p: &FoldParts, inner: AndId, ctx: &RuleContext) -> Option<AltTree> {
    let q = fold_parts(dag, inner)?;
    if q.slots != p.slots || q.t == p.t {
        return None;
    }
    let init_is_running = if p.slots.len() == 1 {
        has_leaf(dag, q.init, &Op::Param(p.slots[0].clone()))
    } else {
        alternatives_where(dag, q.init, |op| *op == Op::Tuple).any(|a| {
            dag.and(a)
                .children
                .iter()
                .zip(&p.slots)
                .all(|(c, v)| has_leaf(dag, *c, &Op::Param(v.clone())))
        })
    };
    let QueryExpr::Select(pred, right) = &q.query else { return None };
    if !init_is_running || right.outer_vars().contains(&p.t) || !ctx.disjoint(&p.query, right) {
        return None;
    }
    let mut mentions_outer = false;
    outer_refs(pred, &mut |v, _| mentions_outer |= v == p.t);
    if !mentions_outer {
        return None;
    }
    let pred = unqualify(pred, &p.t);
    let acc = first_of(dag, q.acc);
    if acc.any(&|n| matches!(&n.op, Op::TupleVar(x) if *x == q.t)) {
        return None;
    }
    let mut inner_row_in_query = false;
    acc.walk(&mut |n| {
        if let Op::Query(cq) | Op::ExecuteQuery(cq) = &n.op {
            inner_row_in_query |= cq.outer_vars().contains(&q.t);
        }
    });
    if inner_row_in_query {
        return None;
    }
    let acc = rewrite(&acc, &mut |n| match &n.op {
        Op::TupleAttr(x, a) if *x == q.t => Some(leaf(Op::TupleAttr(p.t.clone(), a.clone()))),
        _ => None,
    });
    let src = QueryExpr::join(pred, p.query.clone(), (**right).clone());
    Some(fold_tree(p, to_alt(&acc), AltTree::Or(p.init), src))
}

/// Rewrites outer references `t.c` into bare columns `c`.
fn unqualify(e: &Expr, t: &str) -> Expr {
    match e {
        Expr::Field(b, c) if matches!(b.as_ref(), Expr::Var(v) if v == t) => Expr::Var(c.clone()),
        Expr::Field(b, c) => Expr::field(unqualify(b, t), c.clone()),
        Expr::Binary(op, l, r) => Expr::binary(*op, unqualify(l, t), unqualify(r, t)),
        Expr::Unary(op, x) => Expr::Unary(*op, Box::new(unqualify(x, t))),
        Expr::Call(n, args) => Expr::call(n.clone(), args.iter().map(|a| unqualify(a, t)).collect()),
        other => other.clone(),
    }
}

/// A per-row key lookup along a foreign key, used only through its fields,
/// becomes a join with the referenced relation.
fn join_lookup(dag: &RegionDag, p: &FoldParts, ctx: &RuleContext) -> Option<AltTree> {
    let acc = first_of(dag, p.acc);
    let (q, (rel, a, b)) = per_row_query(&acc, &p.t)?;
    let has_fk = ctx.foreign_keys.iter().any(|fk| {
        fk.column == b && fk.ref_relation == rel && fk.ref_column == a && p.query.relations().contains(&fk.relation.as_str())
    });
    let right = QueryExpr::scan(rel);
    if !has_fk || !ctx.columns_of(&p.query)?.contains(&b) || !ctx.disjoint(&p.query, &right) {
        return None;
    }
    let target = Op::ExecuteQuery(q);
    let acc = rewrite(&acc, &mut |n| match (&n.op, n.children.first()) {
        (Op::Field(x), Some(c)) if c.op == target => Some(leaf(Op::TupleAttr(p.t.clone(), x.clone()))),
        _ => None,
    });
    if acc.any(&|n| n.op == target) {
        return None;
    }
    let pred = Expr::binary(BinOp::Eq, Expr::var(b), Expr::var(a));
    let src = QueryExpr::join(pred, p.query.clone(), right);
    Some(fold_tree(p, to_alt(&acc), AltTree::Or(p.init), src))
}

/// N1: per-row key lookups become probes of a cache filled once.
fn n1(dag: &RegionDag, and: AndId) -> Vec<AltTree> {
    let a = dag.and(and);
    let Op::FirAssign(v) = &a.op else { return vec![] };
    let mut out = Vec::new();
    for fold in alternatives_where(dag, a.children[0], |op| matches!(op, Op::Fold { .. })) {
        let p = fold_parts(dag, fold).unwrap();
        let acc = first_of(dag, p.acc);
        let Some((q, (rel, col, key))) = per_row_query(&acc, &p.t) else { continue };
        let target = Op::ExecuteQuery(q);
        let lookup = node(
            Op::Lookup {
                relation: rel.clone(),
                column: col.clone(),
            },
            vec![leaf(Op::TupleAttr(p.t.clone(), key))],
        );
        let acc = rewrite(&acc, &mut |n| (n.op == target).then(|| lookup.clone()));
        let src = dag.and(fold).children[2];
        let fold = AltTree::node(
            dag.and(fold).op.clone(),
            vec![to_alt(&acc), AltTree::Or(p.init), AltTree::Or(src)],
        );
        out.push(AltTree::node(
            Op::Seq,
            vec![
                AltTree::leaf(Op::Prefetch {
                    relation: rel,
                    column: col,
                }),
                AltTree::node(Op::FirAssign(v.clone()), vec![fold]),
            ],
        ));
    }
    out
}

/// Aggregate computing `<v> op x` over all rows, for the accumulator
/// alternatives of `acc`.
fn aggregates(dag: &RegionDag, acc: OrId, v: &str, t: &str) -> Vec<(AggFn, String)> {
    let running = Op::Param(v.to_string());
    let attr = |or: OrId| {
        dag.or(or).alternatives.iter().find_map(|a| match &dag.and(*a).op {
            Op::TupleAttr(x, c) if x == t => Some(c.clone()),
            _ => None,
        })
    };
    let mut out = Vec::new();
    for &alt in &dag.or(acc).alternatives {
        let a = dag.and(alt);
        if a.children.len() != 2 {
            continue;
        }
        let other = if has_leaf(dag, a.children[0], &running) {
            a.children[1]
        } else if has_leaf(dag, a.children[1], &running) {
            a.children[0]
        } else {
            continue;
        };
        let found = match &a.op {
            Op::Bin(BinOp::Add) if has_leaf(dag, other, &Op::Const(Expr::Int(1))) => {
                Some((AggFn::Count, "*".to_string()))
            }
            Op::Bin(BinOp::Add) => attr(other).map(|c| (AggFn::Sum, c)),
            Op::Call(f) if f == "max" => attr(other).map(|c| (AggFn::Max, c)),
            Op::Call(f) if f == "min" => attr(other).map(|c| (AggFn::Min, c)),
            _ => None,
        };
        out.extend(found);
    }
    out
}

/// Ordering and plain projections do not change an aggregate.
fn strip(q: &QueryExpr) -> QueryExpr {
    match q {
        QueryExpr::OrderBy(_, c) => strip(c),
        QueryExpr::Project(items, c) if items.iter().all(|i| i.is_plain_column()) => strip(c),
        other => other.clone(),
    }
}

fn aggregate_tree(func: AggFn, column: String, query: &QueryExpr, init: OrId, dag: &RegionDag) -> AltTree {
    let agg = QueryExpr::aggregate(func, column, strip(query));
    let value = AltTree::leaf(Op::ExecuteQuery(CanonQuery::new(agg)));
    match func {
        AggFn::Sum | AggFn::Count if has_leaf(dag, init, &Op::Const(Expr::Int(0))) => value,
        AggFn::Sum | AggFn::Count => AltTree::node(Op::Bin(BinOp::Add), vec![AltTree::Or(init), value]),
        AggFn::Max | AggFn::Min => AltTree::node(Op::Call(func.name().into()), vec![AltTree::Or(init), value]),
    }
}

/// T5: an accumulation matching an aggregate function becomes a query.
fn t5(dag: &RegionDag, and: AndId) -> Vec<AltTree> {
    let a = dag.and(and);
    match &a.op {
        Op::Fold { .. } => {
            let p = fold_parts(dag, and).unwrap_or_else(|| unreachable!());
            if p.slots.len() != 1 {
                return vec![];
            }
            aggregates(dag, p.acc, &p.slots[0], &p.t)
                .into_iter()
                .map(|(f, c)| aggregate_tree(f, c, &p.query, p.init, dag))
                .collect()
        }
        Op::Project(i) => {
            let mut out = Vec::new();
            for fold in alternatives_where(dag, a.children[0], |op| matches!(op, Op::Fold { .. })) {
                let Some(p) = fold_parts(dag, fold) else { continue };
                let inits: Vec<OrId> = alternatives_where(dag, p.init, |op| *op == Op::Tuple)
                    .map(|t| dag.and(t).children[*i])
                    .collect();
                for tuple in alternatives_where(dag, p.acc, |op| *op == Op::Tuple) {
                    let comp = dag.and(tuple).children[*i];
                    for (f, c) in aggregates(dag, comp, &p.slots[*i], &p.t) {
                        for &init in &inits {
                            out.push(aggregate_tree(f, c.clone(), &p.query, init, dag));
                        }
                    }
                }
            }
            out
        }
        _ => vec![],
    }
}

/// Columns referenced as attributes of `t` anywhere in `e`.
pub fn attributes_of(e: &FirExpr, t: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.walk(&mut |n| {
        if let Op::TupleAttr(x, a) = &n.op {
            if x == t {
                out.insert(a.clone());
            }
        }
    });
    out
}
