//! Code generation from a chosen alternative back to CobraLang statements.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use thiserror::Error;

use super::{FirExpr, FirNode};
use crate::frontend::ast::{Expr, Stmt, StmtKind};
use crate::frontend::cfg::IterSource;
use crate::regiondag::Op;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("no code template for operator `{0}`")]
pub struct UnloweredOperator(pub String);

type Result<T> = std::result::Result<T, UnloweredOperator>;

fn unlowered(e: &FirNode) -> UnloweredOperator {
    UnloweredOperator(e.op.label())
}

/// Source of fresh temporaries `_tN`.
#[derive(Clone, Debug, Default)]
pub struct Temps {
    pub next: usize,
}

impl Temps {
    pub fn starting_at(next: usize) -> Temps {
        Temps { next }
    }

    pub fn fresh(&mut self) -> String {
        let t = format!("_t{}", self.next);
        self.next += 1;
        t
    }
}

/// Statements computing `e`, a region operator tree possibly containing F-IR
/// assignments.
pub fn fir_to_code(e: &FirExpr, temps: &mut Temps) -> Result<Vec<Stmt>> {
    let mut l = Lowerer {
        temps,
        scopes: vec![Scope::default()],
    };
    let mut out = Vec::new();
    l.stmts(e, &mut out)?;
    Ok(out)
}

/// Bindings valid in one straight-line stretch of code.
#[derive(Default)]
struct Scope {
    /// Accumulator variable of each slot bound by the innermost fold.
    slots: HashMap<String, String>,
    /// Temporaries holding already computed shared subexpressions.
    memo: HashMap<*const FirNode, Expr>,
    /// Accumulator variables of folds already computed.
    folds: HashMap<*const FirNode, Vec<String>>,
    /// Whether slot bindings of enclosing scopes are still visible.
    inherits: bool,
}

struct Lowerer<'a> {
    temps: &'a mut Temps,
    scopes: Vec<Scope>,
}

/// Number of references to each node of `e`.
fn ref_counts(e: &FirExpr, counts: &mut HashMap<*const FirNode, usize>) {
    let c = counts.entry(Rc::as_ptr(e)).or_insert(0);
    *c += 1;
    if *c == 1 {
        e.children.iter().for_each(|k| ref_counts(k, counts));
    }
}

fn is_fold(e: &FirExpr) -> bool {
    matches!(e.op, Op::Fold { .. })
}

fn mentions_var(e: &FirExpr, names: &[String]) -> bool {
    e.any(&|n| matches!(&n.op, Op::Var(x) if names.contains(x)))
}

impl Lowerer<'_> {
    fn stmts(&mut self, e: &FirExpr, out: &mut Vec<Stmt>) -> Result<()> {
        match &e.op {
            Op::Seq => {
                for c in &e.children {
                    self.stmts(c, out)?;
                }
            }
            Op::Skip => {}
            Op::Stmt(s) => out.push(s.clone()),
            Op::BlackBox(ss) => out.extend(ss.iter().cloned()),
            Op::Prefetch { relation, column } => out.push(Stmt::new(StmtKind::Prefetch {
                relation: relation.clone(),
                column: column.clone(),
            })),
            Op::Cond => {
                let Op::Predicate(cond) = &e.children[0].op else {
                    return Err(unlowered(&e.children[0]));
                };
                let mut then_body = Vec::new();
                let mut else_body = Vec::new();
                self.stmts(&e.children[1], &mut then_body)?;
                self.stmts(&e.children[2], &mut else_body)?;
                out.push(Stmt::new(StmtKind::If {
                    cond: cond.clone(),
                    then_body,
                    else_body,
                }));
            }
            Op::Loop => {
                let mut body = Vec::new();
                self.stmts(&e.children[1], &mut body)?;
                let kind = match &e.children[0].op {
                    Op::LoopHeader {
                        var,
                        source: IterSource::Query(q),
                    } => StmtKind::QueryLoop {
                        var: var.clone(),
                        query: q.clone(),
                        body,
                    },
                    Op::LoopHeader {
                        var,
                        source: IterSource::Coll(c),
                    } => StmtKind::CollLoop {
                        var: var.clone(),
                        coll: c.clone(),
                        body,
                    },
                    Op::WhileHeader(c) => StmtKind::While { cond: c.clone(), body },
                    _ => return Err(unlowered(&e.children[0])),
                };
                out.push(Stmt::new(kind));
            }
            Op::FirAssign(v) => self.assign(v, &e.children[0], out)?,
            Op::FirSeq => self.parallel(e, out)?,
            _ => return Err(unlowered(e)),
        }
        Ok(())
    }

    fn assign(&mut self, v: &str, e: &FirExpr, out: &mut Vec<Stmt>) -> Result<()> {
        if let Op::Fold { slots, .. } = &e.op {
            if slots.len() == 1 && slots[0] == v && !mentions_var(e, slots) {
                self.fold(e, Some(slots), out)?;
                return Ok(());
            }
        }
        let value = self.value(e, out)?;
        out.push(Stmt::assign(v, value));
        Ok(())
    }

    /// `FirSeq`: every right-hand side reads the values before any target
    /// is assigned.
    fn parallel(&mut self, e: &FirExpr, out: &mut Vec<Stmt>) -> Result<()> {
        let mut targets: Vec<(String, FirExpr)> = Vec::new();
        for a in &e.children {
            let Op::FirAssign(v) = &a.op else { return Err(unlowered(a)) };
            targets.push((v.clone(), a.children[0].clone()));
        }
        // Distinct folds under projections, with whether each can update the
        // target variables directly.
        let mut folds: Vec<(FirExpr, bool)> = Vec::new();
        for (_, rhs) in &targets {
            if let (Op::Project(_), Some(f)) = (&rhs.op, rhs.children.first()) {
                if is_fold(f) && !folds.iter().any(|(g, _)| g == f) {
                    folds.push((f.clone(), true));
                }
            }
        }
        for (f, in_place) in &mut folds {
            let Op::Fold { slots, .. } = &f.op else { unreachable!() };
            *in_place = !mentions_var(e, slots)
                && targets.iter().all(|(v, rhs)| match (&rhs.op, rhs.children.first()) {
                    (Op::Project(i), Some(g)) if g == f => slots[*i] == *v,
                    _ => !slots.contains(v),
                });
        }
        let mut fold_vars: Vec<Vec<String>> = vec![vec![]; folds.len()];
        for (k, (f, in_place)) in folds.iter().enumerate() {
            if !in_place {
                fold_vars[k] = self.fold(f, None, out)?;
            }
        }
        let mut pending: Vec<(String, Expr)> = Vec::new();
        for (v, rhs) in &targets {
            let from_fold = match (&rhs.op, rhs.children.first()) {
                (Op::Project(i), Some(g)) => folds.iter().position(|(f, _)| f == g).map(|k| (k, *i)),
                _ => None,
            };
            match from_fold {
                Some((k, _)) if folds[k].1 => {}
                Some((k, i)) => pending.push((v.clone(), Expr::var(fold_vars[k][i].clone()))),
                None => {
                    let value = self.value(rhs, out)?;
                    let t = self.temps.fresh();
                    out.push(Stmt::assign(t.clone(), value));
                    pending.push((v.clone(), Expr::var(t)));
                }
            }
        }
        for (f, in_place) in &folds {
            if *in_place {
                let Op::Fold { slots, .. } = &f.op else { unreachable!() };
                self.fold(f, Some(slots), out)?;
            }
        }
        for (v, value) in pending {
            out.push(Stmt::assign(v, value));
        }
        Ok(())
    }

    fn slot_var(&self, v: &str) -> Option<String> {
        self.scopes.iter().rev().find_map(|s| s.slots.get(v).cloned())
    }

    fn memo_get(&self, e: &FirExpr) -> Option<Expr> {
        let key = Rc::as_ptr(e);
        for s in self.scopes.iter().rev() {
            if let Some(x) = s.memo.get(&key) {
                return Some(x.clone());
            }
            if !s.inherits {
                break;
            }
        }
        None
    }

    /// Emits a loop computing fold `f` and returns the accumulator variables.
    /// With `targets`, the accumulators are those variables, which hold the
    /// initial values already when the init is the variable itself.
    fn fold(&mut self, f: &FirExpr, targets: Option<&Vec<String>>, out: &mut Vec<Stmt>) -> Result<Vec<String>> {
        let Op::Fold { tuple_var, slots } = &f.op else { return Err(unlowered(f)) };
        let (acc, init, src) = (&f.children[0], &f.children[1], &f.children[2]);
        let Op::Query(q) = &src.op else { return Err(unlowered(src)) };
        let inits: Vec<FirExpr> = match (&init.op, slots.len()) {
            (_, 1) => vec![init.clone()],
            (Op::Tuple, n) if init.children.len() == n => init.children.clone(),
            _ => return Err(unlowered(init)),
        };
        let comps: Vec<FirExpr> = match (&acc.op, slots.len()) {
            (_, 1) => vec![acc.clone()],
            (Op::Tuple, n) if acc.children.len() == n => acc.children.clone(),
            _ => return Err(unlowered(acc)),
        };
        let vars: Vec<String> = match targets {
            Some(t) => t.clone(),
            None => slots.iter().map(|_| self.temps.fresh()).collect(),
        };
        let mut init_values = Vec::new();
        for (v, i) in vars.iter().zip(&inits) {
            if !matches!(&i.op, Op::Var(x) if x == v) {
                init_values.push((v.clone(), self.value(i, out)?));
            }
        }
        for (v, value) in init_values {
            out.push(Stmt::assign(v, value));
        }

        self.scopes.push(Scope {
            slots: slots.iter().cloned().zip(vars.iter().cloned()).collect(),
            ..Scope::default()
        });
        let body = self.fold_body(slots, &vars, &comps);
        self.scopes.pop();
        out.push(Stmt::new(StmtKind::QueryLoop {
            var: tuple_var.clone(),
            query: q.query.clone(),
            body: body?,
        }));
        Ok(vars)
    }

    /// One iteration: shared values and components read by other components
    /// go to temporaries first, then collection updates happen in place, then
    /// the remaining accumulators are assigned.
    fn fold_body(&mut self, slots: &[String], vars: &[String], comps: &[FirExpr]) -> Result<Vec<Stmt>> {
        let mut out = Vec::new();
        let reads: Vec<BTreeSet<String>> = comps.iter().map(|c| c.free_params()).collect();
        let read_by_other = |i: usize| (0..comps.len()).any(|j| j != i && reads[j].contains(&slots[i]));
        let mut counts = HashMap::new();
        for c in comps {
            ref_counts(c, &mut counts);
        }
        let mut mutations = Vec::new();
        let mut direct = Vec::new();
        let mut late = Vec::new();
        for (i, c) in comps.iter().enumerate() {
            if matches!(&c.op, Op::Param(p) if *p == slots[i]) {
                continue;
            }
            let own = Op::Param(slots[i].clone());
            let in_place = !read_by_other(i)
                && matches!(c.op, Op::Insert | Op::MapPut)
                && c.children[0].op == own
                && !c.children[1..].iter().any(|k| k.free_params().contains(&slots[i]));
            if in_place {
                let args = c.children[1..]
                    .iter()
                    .map(|k| self.shared_value(k, &counts, &mut out))
                    .collect::<Result<Vec<_>>>()?;
                let method = if c.op == Op::Insert { "add" } else { "put" };
                mutations.push(Stmt::new(StmtKind::Call {
                    receiver: Some(vars[i].clone()),
                    method: method.into(),
                    args,
                }));
                continue;
            }
            let value = self.shared_value(c, &counts, &mut out)?;
            if read_by_other(i) {
                let t = self.temps.fresh();
                out.push(Stmt::assign(t.clone(), value));
                late.push(Stmt::assign(vars[i].clone(), Expr::var(t)));
            } else {
                direct.push(Stmt::assign(vars[i].clone(), value));
            }
        }
        out.extend(mutations);
        out.extend(direct);
        out.extend(late);
        Ok(out)
    }

    /// Like `value`, but a non-leaf node referenced more than once is
    /// computed into a temporary the first time.
    fn shared_value(&mut self, e: &FirExpr, counts: &HashMap<*const FirNode, usize>, out: &mut Vec<Stmt>) -> Result<Expr> {
        let shared: Vec<*const FirNode> = counts.iter().filter(|(_, c)| **c > 1).map(|(k, _)| *k).collect();
        self.value_with(e, &shared, out)
    }

    fn value(&mut self, e: &FirExpr, out: &mut Vec<Stmt>) -> Result<Expr> {
        let mut counts = HashMap::new();
        ref_counts(e, &mut counts);
        self.shared_value(e, &counts, out)
    }

    fn value_with(&mut self, e: &FirExpr, shared: &[*const FirNode], out: &mut Vec<Stmt>) -> Result<Expr> {
        if let Some(x) = self.memo_get(e) {
            return Ok(x);
        }
        let x = self.compute(e, shared, out)?;
        let is_atom = matches!(x, Expr::Var(_) | Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_));
        if !e.children.is_empty() && shared.contains(&Rc::as_ptr(e)) {
            let x = if is_atom {
                x
            } else {
                let t = self.temps.fresh();
                out.push(Stmt::assign(t.clone(), x));
                Expr::var(t)
            };
            self.scopes.last_mut().unwrap().memo.insert(Rc::as_ptr(e), x.clone());
            return Ok(x);
        }
        Ok(x)
    }

    fn compute(&mut self, e: &FirExpr, shared: &[*const FirNode], out: &mut Vec<Stmt>) -> Result<Expr> {
        let kid = |l: &mut Self, i: usize, out: &mut Vec<Stmt>| l.value_with(&e.children[i], shared, out);
        Ok(match &e.op {
            Op::Const(c) => c.clone(),
            Op::Var(x) => Expr::var(x.clone()),
            Op::Param(v) => Expr::var(self.slot_var(v).ok_or_else(|| unlowered(e))?),
            Op::TupleAttr(t, a) => Expr::field(Expr::var(t.clone()), a.clone()),
            Op::TupleVar(t) => Expr::var(t.clone()),
            Op::Bin(op) => {
                let l = kid(self, 0, out)?;
                let r = kid(self, 1, out)?;
                Expr::binary(*op, l, r)
            }
            Op::Unary(op) => Expr::Unary(*op, Box::new(kid(self, 0, out)?)),
            Op::Call(n) => {
                let args = (0..e.children.len()).map(|i| kid(self, i, out)).collect::<Result<_>>()?;
                Expr::call(n.clone(), args)
            }
            Op::Field(a) => Expr::field(kid(self, 0, out)?, a.clone()),
            Op::Insert => {
                let args = (0..2).map(|i| kid(self, i, out)).collect::<Result<_>>()?;
                Expr::call("with_added", args)
            }
            Op::MapPut => {
                let args = (0..3).map(|i| kid(self, i, out)).collect::<Result<_>>()?;
                Expr::call("with_put", args)
            }
            Op::ExecuteQuery(q) => {
                let t = self.temps.fresh();
                out.push(Stmt::new(StmtKind::ExecQuery {
                    target: t.clone(),
                    query: q.query.clone(),
                }));
                Expr::var(t)
            }
            Op::Lookup { relation, column } => {
                let key = kid(self, 0, out)?;
                let t = self.temps.fresh();
                out.push(Stmt::new(StmtKind::CacheLookup {
                    target: t.clone(),
                    relation: relation.clone(),
                    column: column.clone(),
                    key,
                }));
                Expr::var(t)
            }
            Op::Guard => {
                let cond = kid(self, 0, out)?;
                let t = self.temps.fresh();
                let branch = |l: &mut Self, i: usize| -> Result<Vec<Stmt>> {
                    l.scopes.push(Scope {
                        inherits: true,
                        ..Scope::default()
                    });
                    let mut body = Vec::new();
                    let v = l.value_with(&e.children[i], shared, &mut body);
                    l.scopes.pop();
                    body.push(Stmt::assign(t.clone(), v?));
                    Ok(body)
                };
                let then_body = branch(self, 1)?;
                let else_body = branch(self, 2)?;
                out.push(Stmt::new(StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                }));
                Expr::var(t)
            }
            Op::Project(i) => {
                let inner = &e.children[0];
                match &inner.op {
                    Op::Tuple => kid_of(self, inner, *i, shared, out)?,
                    Op::Fold { .. } => {
                        let key = Rc::as_ptr(inner);
                        let known = self.scopes.iter().rev().find_map(|s| s.folds.get(&key).cloned());
                        let vars = match known {
                            Some(v) => v,
                            None => {
                                let v = self.fold(inner, None, out)?;
                                self.scopes.last_mut().unwrap().folds.insert(key, v.clone());
                                v
                            }
                        };
                        Expr::var(vars[*i].clone())
                    }
                    _ => return Err(unlowered(e)),
                }
            }
            Op::Fold { slots, .. } if slots.len() == 1 => Expr::var(self.fold(e, None, out)?.remove(0)),
            _ => return Err(unlowered(e)),
        })
    }
}

fn kid_of(l: &mut Lowerer, e: &FirExpr, i: usize, shared: &[*const FirNode], out: &mut Vec<Stmt>) -> Result<Expr> {
    l.value_with(&e.children[i], shared, out)
}
