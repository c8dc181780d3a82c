//! Lifting cursor loops into folds.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{constant, extract_and, leaf, node, share, to_alt, FirExpr};
use crate::frontend::ast::{Expr, Stmt, StmtKind};
use crate::frontend::cfg::IterSource;
use crate::frontend::query::QueryExpr;
use crate::regiondag::expand::{Event, Rule};
use crate::regiondag::{AltTree, AndId, CanonQuery, Op, OrId, RegionDag};

/// The `loopToFold` rewrite as a DAG rule.
#[derive(Clone, Debug, Default)]
pub struct LoopToFold {
    /// Reject loops updating more than one variable.
    pub legacy: bool,
}

impl Rule for LoopToFold {
    fn name(&self) -> &'static str {
        "loopToFold"
    }

    fn apply(&self, dag: &RegionDag, and: AndId) -> Vec<AltTree> {
        loop_to_fold(dag, and, self.legacy).map(|e| to_alt(&e)).into_iter().collect()
    }
}

/// Adds a fold alternative to every liftable cursor loop, innermost first.
pub fn to_fir(dag: &mut RegionDag, legacy: bool) -> Vec<Event> {
    let mut order = Vec::new();
    post_order(dag, dag.root, &mut BTreeSet::new(), &mut order);
    let mut events = Vec::new();
    for or in order {
        let and = dag.or(or).alternatives[0];
        if dag.and(and).op != Op::Loop {
            continue;
        }
        if let Some(e) = loop_to_fold(dag, and, legacy) {
            let before = dag.or(or).alternatives.len();
            if let Ok(new_and) = dag.add_alternative(or, &to_alt(&e)) {
                events.push(Event {
                    rule: "loopToFold",
                    or,
                    label: dag.or(or).label.clone(),
                    and: new_and,
                    fresh: dag.or(or).alternatives.len() > before,
                });
            }
        }
    }
    events
}

fn post_order(dag: &RegionDag, or: OrId, seen: &mut BTreeSet<OrId>, out: &mut Vec<OrId>) {
    if !seen.insert(or) {
        return;
    }
    for &c in &dag.first(or).children {
        post_order(dag, c, seen, out);
    }
    out.push(or);
}

/// Fold alternative for the loop AND node `and`, if the loop body has no
/// external dependences. One updated variable gives `v = fold(..)`; several
/// give a parallel assignment of projections of one tuple-valued fold.
pub fn loop_to_fold(dag: &RegionDag, and: AndId, legacy: bool) -> Option<FirExpr> {
    let Analysis {
        t,
        q,
        finals,
        order,
        relevant,
    } = analyse(dag, and)?;
    let region = dag.or(dag.and(and).or);
    if region.output.contains(&t) {
        return None;
    }
    let external = external_vars(&relevant, &finals);
    if !external.is_empty() {
        log::debug!("loopToFold: external dependences on {external:?}");
        return None;
    }
    let accs: Vec<String> = order.iter().filter(|v| relevant.contains(*v)).cloned().collect();
    if accs.is_empty() || (legacy && accs.len() > 1) {
        return None;
    }
    let mut inits = Vec::new();
    for v in &accs {
        match region.entry_constants.get(v) {
            Some(c) => inits.push(constant(c.clone())),
            None if region.input.contains(v) => inits.push(leaf(Op::Var(v.clone()))),
            None => return None,
        }
    }
    let source = leaf(Op::Query(CanonQuery::new(q)));
    let op = Op::Fold {
        tuple_var: t,
        slots: accs.clone(),
    };
    if accs.len() == 1 {
        let acc = share(&finals[&accs[0]]);
        let fold = node(op, vec![acc, inits.pop().unwrap(), source]);
        return Some(node(Op::FirAssign(accs[0].clone()), vec![fold]));
    }
    let acc = share(&node(Op::Tuple, accs.iter().map(|v| finals[v].clone()).collect()));
    let fold = node(op, vec![acc, node(Op::Tuple, inits), source]);
    let assigns = accs
        .iter()
        .enumerate()
        .map(|(i, v)| node(Op::FirAssign(v.clone()), vec![node(Op::Project(i), vec![fold.clone()])]))
        .collect();
    Some(node(Op::FirSeq, assigns))
}

struct Analysis {
    t: String,
    q: QueryExpr,
    /// Value of each written variable at the end of an iteration.
    finals: HashMap<String, FirExpr>,
    /// Written variables in order of first update.
    order: Vec<String>,
    /// Variables whose final value matters: live after the loop, or read by
    /// the next iteration of a variable that matters.
    relevant: BTreeSet<String>,
}

fn analyse(dag: &RegionDag, and: AndId) -> Option<Analysis> {
    let lp = dag.and(and);
    if lp.op != Op::Loop {
        return None;
    }
    let (t, q) = match &dag.first(lp.children[0]).op {
        Op::LoopHeader {
            var,
            source: IterSource::Query(q),
        } => (var.clone(), q.clone()),
        _ => return None,
    };
    let body = lp.children[1];
    let mut written = BTreeSet::new();
    written_vars(dag, body, &mut written);
    written.remove(&t);
    let mut lifter = Lifter {
        dag,
        t: t.clone(),
        w: written.clone(),
        env: written.iter().map(|v| (v.clone(), leaf(Op::Param(v.clone())))).collect(),
        order: Vec::new(),
    };
    lifter.exec(body)?;
    let finals = lifter.env;
    let mut relevant: BTreeSet<String> = written.intersection(&dag.or(lp.or).output).cloned().collect();
    loop {
        let more: BTreeSet<String> = relevant
            .iter()
            .flat_map(|u| finals[u].free_params())
            .filter(|p| !relevant.contains(p))
            .collect();
        if more.is_empty() {
            break;
        }
        relevant.extend(more);
    }
    Some(Analysis {
        t,
        q,
        finals,
        order: lifter.order,
        relevant,
    })
}

/// Relevant variables read by a later iteration whose update does not read
/// their own previous value.
fn external_vars(relevant: &BTreeSet<String>, finals: &HashMap<String, FirExpr>) -> BTreeSet<String> {
    let carried: BTreeSet<String> = relevant.iter().flat_map(|u| finals[u].free_params()).collect();
    carried
        .into_iter()
        .filter(|v| !finals[v].free_params().contains(v))
        .collect()
}

/// Variables written by the original computation of `or`.
pub fn written_vars(dag: &RegionDag, or: OrId, out: &mut BTreeSet<String>) {
    let and = dag.first(or);
    match &and.op {
        Op::Stmt(s) => stmt_writes(s, out),
        Op::BlackBox(stmts) => stmts.iter().for_each(|s| stmt_writes(s, out)),
        Op::LoopHeader { var, .. } => {
            out.insert(var.clone());
        }
        _ => {
            for &c in &and.children {
                written_vars(dag, c, out);
            }
        }
    }
}

fn stmt_writes(s: &Stmt, out: &mut BTreeSet<String>) {
    if let Some(v) = s.written_var() {
        out.insert(v.to_string());
    }
    if let StmtKind::QueryLoop { var, .. } | StmtKind::CollLoop { var, .. } = &s.kind {
        out.insert(var.clone());
    }
    for b in s.children() {
        b.iter().for_each(|c| stmt_writes(c, out));
    }
}

/// Symbolic execution of one loop iteration. `env` maps each variable
/// written in the body to its value at the end of the iteration, in terms of
/// `Param` (value at iteration start), `TupleAttr` of the current row, and
/// `Var` (variables the loop does not write).
struct Lifter<'a> {
    dag: &'a RegionDag,
    t: String,
    w: BTreeSet<String>,
    env: HashMap<String, FirExpr>,
    order: Vec<String>,
}

impl Lifter<'_> {
    fn set(&mut self, v: &str, e: FirExpr) {
        if !self.order.iter().any(|o| o == v) {
            self.order.push(v.to_string());
        }
        self.env.insert(v.to_string(), e);
    }

    fn current(&self, v: &str) -> FirExpr {
        if v == self.t {
            return leaf(Op::TupleVar(self.t.clone()));
        }
        self.env.get(v).cloned().unwrap_or_else(|| leaf(Op::Var(v.to_string())))
    }

    /// Queries may read the current row and loop-invariant variables only.
    fn query_ok(&self, q: &QueryExpr, tuple_vars: &[String]) -> bool {
        q.outer_vars()
            .iter()
            .all(|x| *x == self.t || tuple_vars.contains(x) || !self.w.contains(x))
    }

    fn exec(&mut self, or: OrId) -> Option<()> {
        let and = self.dag.first(or);
        match &and.op {
            Op::Seq => {
                for &c in &and.children {
                    self.exec(c)?;
                }
                Some(())
            }
            Op::Skip => Some(()),
            Op::Stmt(s) => self.stmt(s),
            Op::Cond => {
                let p = match &self.dag.first(and.children[0]).op {
                    Op::Predicate(e) => self.tr(e)?,
                    _ => return None,
                };
                let saved = self.env.clone();
                self.exec(and.children[1])?;
                let then_env = std::mem::replace(&mut self.env, saved.clone());
                self.exec(and.children[2])?;
                let else_env = std::mem::replace(&mut self.env, saved);
                let mut vars: Vec<&String> = then_env.keys().chain(else_env.keys()).collect();
                vars.sort();
                vars.dedup();
                for v in vars {
                    let (a, b) = (then_env.get(v)?, else_env.get(v)?);
                    let merged = if a == b {
                        a.clone()
                    } else {
                        node(Op::Guard, vec![p.clone(), a.clone(), b.clone()])
                    };
                    self.env.insert(v.clone(), merged);
                }
                Some(())
            }
            Op::Loop => self.nested(or),
            _ => None,
        }
    }

    fn stmt(&mut self, s: &Stmt) -> Option<()> {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let e = self.tr(value)?;
                self.set(target, e);
            }
            StmtKind::ExecQuery { target, query } => {
                if !self.query_ok(query, &[]) {
                    return None;
                }
                self.set(target, leaf(Op::ExecuteQuery(CanonQuery::new(query.clone()))));
            }
            StmtKind::Call {
                receiver: Some(r),
                method,
                args,
            } => {
                let coll = self.current(r);
                let args: Vec<FirExpr> = args.iter().map(|a| self.tr(a)).collect::<Option<_>>()?;
                let e = match (method.as_str(), args.len()) {
                    ("add", 1) => node(Op::Insert, vec![coll, args[0].clone()]),
                    ("put", 2) => node(Op::MapPut, vec![coll, args[0].clone(), args[1].clone()]),
                    _ => return None,
                };
                self.set(r, e);
            }
            _ => return None,
        }
        Some(())
    }

    /// A nested loop contributes the values of its own fold alternative.
    fn nested(&mut self, or: OrId) -> Option<()> {
        let dag = self.dag;
        let alt = dag.or(or).alternatives.iter().copied().find(|a| {
            matches!(dag.and(*a).op, Op::FirAssign(_) | Op::FirSeq)
        })?;
        let e = extract_and(dag, alt);
        let assigns: Vec<FirExpr> = match &e.op {
            Op::FirAssign(_) => vec![e.clone()],
            _ => e.children.clone(),
        };
        let mut updates = Vec::new();
        for a in &assigns {
            let Op::FirAssign(v) = &a.op else { return None };
            updates.push((v.clone(), self.subst(&a.children[0], &mut Vec::new(), &mut Vec::new())?));
        }
        for (v, e) in updates {
            self.set(&v, e);
        }
        Some(())
    }

    /// Replaces entry values of the nested computation by their values at
    /// this point of the outer iteration.
    fn subst(&self, e: &FirExpr, slots: &mut Vec<String>, tuple_vars: &mut Vec<String>) -> Option<FirExpr> {
        match &e.op {
            Op::Var(x) => {
                let r = self.current(x);
                if r.free_params().iter().any(|p| slots.contains(p)) {
                    return None;
                }
                Some(r)
            }
            Op::Query(q) | Op::ExecuteQuery(q) => self.query_ok(q, tuple_vars).then(|| e.clone()),
            Op::Fold { tuple_var, slots: own } => {
                let (n, m) = (slots.len(), tuple_vars.len());
                slots.extend(own.iter().cloned());
                tuple_vars.push(tuple_var.clone());
                let acc = self.subst(&e.children[0], slots, tuple_vars);
                slots.truncate(n);
                let init = self.subst(&e.children[1], slots, tuple_vars);
                let src = self.subst(&e.children[2], slots, tuple_vars);
                tuple_vars.truncate(m);
                Some(node(e.op.clone(), vec![acc?, init?, src?]))
            }
            _ => {
                let kids: Vec<FirExpr> = e
                    .children
                    .iter()
                    .map(|c| self.subst(c, slots, tuple_vars))
                    .collect::<Option<_>>()?;
                if let (Op::Field(a), Some(base)) = (&e.op, kids.first()) {
                    if let Op::TupleVar(t) = &base.op {
                        return Some(leaf(Op::TupleAttr(t.clone(), a.clone())));
                    }
                }
                Some(node(e.op.clone(), kids))
            }
        }
    }

    /// Value of an expression evaluated at this point of the iteration.
    fn tr(&self, e: &Expr) -> Option<FirExpr> {
        Some(match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) => constant(e.clone()),
            Expr::Var(x) => self.current(x),
            Expr::Field(b, a) => {
                let base = self.tr(b)?;
                match &base.op {
                    Op::TupleVar(t) => leaf(Op::TupleAttr(t.clone(), a.clone())),
                    _ => node(Op::Field(a.clone()), vec![base]),
                }
            }
            Expr::Binary(op, l, r) => node(Op::Bin(*op), vec![self.tr(l)?, self.tr(r)?]),
            Expr::Unary(op, x) => node(Op::Unary(*op), vec![self.tr(x)?]),
            Expr::Call(n, args) if args.is_empty() && (n == "list" || n == "map") => constant(e.clone()),
            Expr::Call(n, args) => node(
                Op::Call(n.clone()),
                args.iter().map(|a| self.tr(a)).collect::<Option<_>>()?,
            ),
        })
    }
}

/// Data dependences between the statements of a loop body.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DepGraph {
    /// Statement labels in textual order.
    pub nodes: Vec<String>,
    pub edges: Vec<DepEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepEdge {
    pub from: usize,
    pub to: usize,
    pub var: String,
    /// The read happens in a later iteration than the write.
    pub carried: bool,
    /// A carried dependence that is not an accumulator update.
    pub external: bool,
}

impl DepGraph {
    /// Dependence graph of the loop AND node `and`.
    pub fn build(dag: &RegionDag, and: AndId) -> DepGraph {
        let lp = dag.and(and);
        let mut rows: Vec<(String, BTreeSet<String>, BTreeSet<String>)> = Vec::new();
        if let Some(&body) = lp.children.get(1) {
            flatten(dag, body, &mut rows);
        }
        let external = Self::external_for(dag, and);
        let mut edges = Vec::new();
        for (i, (_, _, writes)) in rows.iter().enumerate() {
            for (j, (_, reads, _)) in rows.iter().enumerate() {
                for v in writes.intersection(reads) {
                    let carried = i >= j;
                    edges.push(DepEdge {
                        from: i,
                        to: j,
                        var: v.clone(),
                        carried,
                        external: carried && external.contains(v),
                    });
                }
            }
        }
        DepGraph {
            nodes: rows.into_iter().map(|r| r.0).collect(),
            edges,
        }
    }

    fn external_for(dag: &RegionDag, and: AndId) -> BTreeSet<String> {
        analyse(dag, and)
            .map(|a| external_vars(&a.relevant, &a.finals))
            .unwrap_or_default()
    }

    pub fn has_external(&self) -> bool {
        self.edges.iter().any(|e| e.external)
    }
}

impl fmt::Display for DepGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.edges {
            let kind = match (e.carried, e.external) {
                (_, true) => "external",
                (true, false) => "carried",
                _ => "internal",
            };
            writeln!(f, "{} -> {} [{}] {kind}", self.nodes[e.from], self.nodes[e.to], e.var)?;
        }
        Ok(())
    }
}

fn flatten(dag: &RegionDag, or: OrId, rows: &mut Vec<(String, BTreeSet<String>, BTreeSet<String>)>) {
    let and = dag.first(or);
    let mut reads: Vec<String> = Vec::new();
    let mut writes = BTreeSet::new();
    match &and.op {
        Op::Stmt(s) => {
            stmt_reads(s, &mut reads);
            stmt_writes(s, &mut writes);
        }
        Op::BlackBox(stmts) => {
            for s in stmts {
                stmt_reads(s, &mut reads);
                stmt_writes(s, &mut writes);
            }
        }
        Op::Predicate(e) | Op::WhileHeader(e) => e.vars(&mut reads),
        Op::LoopHeader { var, source } => {
            match source {
                IterSource::Query(q) => reads.extend(q.outer_vars()),
                IterSource::Coll(e) => e.vars(&mut reads),
            }
            writes.insert(var.clone());
        }
        _ => {
            for &c in &and.children {
                flatten(dag, c, rows);
            }
            return;
        }
    }
    rows.push((dag.or(or).label.clone(), reads.into_iter().collect(), writes));
}

fn stmt_reads(s: &Stmt, out: &mut Vec<String>) {
    match &s.kind {
        StmtKind::Assign { value, .. } => value.vars(out),
        StmtKind::QueryLoop { query, .. } | StmtKind::ExecQuery { query, .. } => out.extend(query.outer_vars()),
        StmtKind::CollLoop { coll, .. } => coll.vars(out),
        StmtKind::While { cond, .. } | StmtKind::If { cond, .. } => cond.vars(out),
        StmtKind::Call { receiver, args, .. } => {
            out.extend(receiver.iter().cloned());
            args.iter().for_each(|a| a.vars(out));
        }
        StmtKind::Return(e) => e.vars(out),
        StmtKind::CacheLookup { key, .. } => key.vars(out),
        StmtKind::Prefetch { .. } => {}
    }
    for b in s.children() {
        b.iter().for_each(|c| stmt_reads(c, out));
    }
}
