//! The fold intermediate representation (F-IR): loops lifted into folds over
//! query results, and the rewrite rules that turn folds into queries.
//!
//! F-IR values live in the region DAG as AND nodes with F-IR operators.
//! `FirExpr` is a materialized tree of such operators, used while building
//! and inspecting alternatives; identical subtrees are shared by `Rc`.

pub mod lift;
pub mod lower;
pub mod rules;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::frontend::ast::Expr;
use crate::frontend::printer::print_expr;
use crate::regiondag::{AltTree, AndId, OrId, Op, RegionDag};

pub use lift::{loop_to_fold, to_fir, DepGraph, LoopToFold};
pub use lower::{fir_to_code, UnloweredOperator};
pub use rules::{rule_set, RuleContext, ALL_RULES};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FirNode {
    pub op: Op,
    pub children: Vec<FirExpr>,
}

pub type FirExpr = Rc<FirNode>;

pub fn node(op: Op, children: Vec<FirExpr>) -> FirExpr {
    Rc::new(FirNode { op, children })
}

pub fn leaf(op: Op) -> FirExpr {
    node(op, vec![])
}

pub fn constant(e: Expr) -> FirExpr {
    leaf(Op::Const(e))
}

impl FirNode {
    pub fn child(&self, i: usize) -> &FirExpr {
        &self.children[i]
    }

    /// Preorder visit of every node, shared nodes once per occurrence.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a FirNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn any(&self, pred: &impl Fn(&FirNode) -> bool) -> bool {
        pred(self) || self.children.iter().any(|c| c.any(pred))
    }

    /// Accumulator slots referenced but not bound by a fold inside `self`.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut Vec::new(), &mut out);
        out
    }

    fn collect_params(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match &self.op {
            Op::Param(v) if !bound.contains(v) => {
                out.insert(v.clone());
            }
            Op::Fold { slots, .. } => {
                let n = bound.len();
                bound.extend(slots.iter().cloned());
                self.children[0].collect_params(bound, out);
                bound.truncate(n);
                self.children[1].collect_params(bound, out);
                self.children[2].collect_params(bound, out);
            }
            _ => {
                for c in &self.children {
                    c.collect_params(bound, out);
                }
            }
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(|c| c.size()).sum::<usize>()
    }
}

/// Rebuilds `e` bottom-up, replacing each node for which `f` returns a value.
/// `f` sees the node after its children were rewritten.
pub fn rewrite(e: &FirExpr, f: &mut impl FnMut(&FirExpr) -> Option<FirExpr>) -> FirExpr {
    let mut memo: HashMap<*const FirNode, FirExpr> = HashMap::new();
    rewrite_memo(e, f, &mut memo)
}

fn rewrite_memo(
    e: &FirExpr,
    f: &mut impl FnMut(&FirExpr) -> Option<FirExpr>,
    memo: &mut HashMap<*const FirNode, FirExpr>,
) -> FirExpr {
    if let Some(r) = memo.get(&Rc::as_ptr(e)) {
        return r.clone();
    }
    let kids: Vec<FirExpr> = e.children.iter().map(|c| rewrite_memo(c, f, memo)).collect();
    let rebuilt = if kids.iter().zip(&e.children).all(|(a, b)| Rc::ptr_eq(a, b)) {
        e.clone()
    } else {
        node(e.op.clone(), kids)
    };
    let out = f(&rebuilt).unwrap_or(rebuilt);
    memo.insert(Rc::as_ptr(e), out.clone());
    out
}

/// Restores sharing: structurally equal subtrees become one `Rc`.
pub fn share(e: &FirExpr) -> FirExpr {
    fn go(e: &FirExpr, table: &mut HashMap<FirNode, FirExpr>) -> FirExpr {
        let kids: Vec<FirExpr> = e.children.iter().map(|c| go(c, table)).collect();
        let n = FirNode {
            op: e.op.clone(),
            children: kids,
        };
        table.entry(n.clone()).or_insert_with(|| Rc::new(n)).clone()
    }
    go(e, &mut HashMap::new())
}

pub fn to_alt(e: &FirExpr) -> AltTree {
    AltTree::node(e.op.clone(), e.children.iter().map(to_alt).collect())
}

/// Materializes the computation of `or`, letting `choose` pick one
/// alternative per OR node. Shared OR nodes become shared subtrees.
pub fn extract(dag: &RegionDag, or: OrId, choose: &mut dyn FnMut(&RegionDag, OrId) -> AndId) -> FirExpr {
    fn go(
        dag: &RegionDag,
        or: OrId,
        choose: &mut dyn FnMut(&RegionDag, OrId) -> AndId,
        memo: &mut HashMap<OrId, FirExpr>,
    ) -> FirExpr {
        if let Some(e) = memo.get(&or) {
            return e.clone();
        }
        let and = dag.and(choose(dag, or));
        let kids = and.children.iter().map(|c| go(dag, *c, choose, memo)).collect();
        let e = node(and.op.clone(), kids);
        memo.insert(or, e.clone());
        e
    }
    go(dag, or, choose, &mut HashMap::new())
}

/// The computation of AND node `and`, with every OR below it resolved to its
/// first alternative.
pub fn extract_and(dag: &RegionDag, and: AndId) -> FirExpr {
    let a = dag.and(and);
    let mut first = |d: &RegionDag, o: OrId| d.or(o).alternatives[0];
    let kids = a.children.iter().map(|c| extract(dag, *c, &mut first)).collect();
    node(a.op.clone(), kids)
}

/// Alternatives of `or` whose operator satisfies `pred`.
pub fn alternatives_where<'a>(
    dag: &'a RegionDag,
    or: OrId,
    pred: impl Fn(&Op) -> bool + 'a,
) -> impl Iterator<Item = AndId> + 'a {
    dag.or(or).alternatives.iter().copied().filter(move |a| pred(&dag.and(*a).op))
}

/// Whether some alternative of `or` is the leaf `op`.
pub fn has_leaf(dag: &RegionDag, or: OrId, op: &Op) -> bool {
    dag.or(or)
        .alternatives
        .iter()
        .any(|a| dag.and(*a).children.is_empty() && &dag.and(*a).op == op)
}

impl fmt::Display for FirNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kids = |f: &mut fmt::Formatter<'_>, from: usize| -> fmt::Result {
            for (i, c) in self.children[from..].iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{c}")?;
            }
            Ok(())
        };
        match &self.op {
            Op::Const(e) => write!(f, "{}", print_expr(e)),
            Op::Var(v) => write!(f, "{v}"),
            Op::Param(v) => write!(f, "<{v}>"),
            Op::TupleAttr(t, a) => write!(f, "{t}.{a}"),
            Op::TupleVar(t) => write!(f, "{t}"),
            Op::Query(q) => write!(f, "Q[{}]", q.to_sql()),
            Op::ExecuteQuery(q) => write!(f, "executeQuery[{}]", q.to_sql()),
            Op::Bin(op) => write!(f, "({} {} {})", self.children[0], op.symbol(), self.children[1]),
            Op::Field(a) => write!(f, "{}.{a}", self.children[0]),
            Op::FirAssign(v) => write!(f, "{v} = {}", self.children[0]),
            Op::Fold { tuple_var, .. } => {
                write!(f, "fold[{tuple_var}](")?;
                kids(f, 0)?;
                write!(f, ")")
            }
            other => {
                write!(f, "{}(", other.label())?;
                kids(f, 0)?;
                write!(f, ")")
            }
        }
    }
}
