//! Least-cost plan extraction from an expanded region DAG.

mod emit;
mod explain;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Float;

use crate::cost::{Cost, CostError, CostFunction, PlanView};
use crate::regiondag::{AndId, AndNode, OrId, RegionDag};

pub use emit::{emit_choice, emit_function, emit_program, EmitError};
pub use explain::{explain, list_alternatives};

/// Relative tolerance under which two costs tie.
pub const TIE_EPSILON: f64 = 1e-12;

/// One alternative per OR node of the chosen tree, plus the cost of every
/// alternative considered below the root.
#[derive(Clone, Debug)]
pub struct Plan<S> {
    pub root: OrId,
    /// Chosen alternative of each OR node in the plan tree.
    pub choice: BTreeMap<OrId, AndId>,
    /// Cheapest alternative of each OR node reachable from the root.
    pub best: BTreeMap<OrId, AndId>,
    /// Best cost of each OR node reachable from the root.
    pub or_costs: BTreeMap<OrId, Cost<S>>,
    /// Cost of each alternative given the best choices below it.
    pub and_costs: BTreeMap<AndId, Cost<S>>,
    /// Database requests of the best sub-plan of each OR node.
    pub queries: BTreeMap<OrId, usize>,
}

impl<S: Float> Plan<S> {
    pub fn cost(&self) -> Cost<S> {
        self.or_costs[&self.root]
    }

    pub fn query_count(&self) -> usize {
        self.queries[&self.root]
    }

    pub fn chosen(&self, or: OrId) -> AndId {
        self.choice[&or]
    }
}

/// Choices and costs filled in child-before-parent order.
struct Memo<'a, S> {
    dag: &'a RegionDag,
    choice: Vec<Option<AndId>>,
    cost: Vec<Option<Cost<S>>>,
}

impl<S: Float> PlanView<S> for Memo<'_, S> {
    fn chosen(&self, or: OrId) -> &AndNode {
        self.dag.and(self.choice[or].expect("children are costed before parents"))
    }

    fn or_cost(&self, or: OrId) -> Cost<S> {
        self.cost[or].expect("children are costed before parents")
    }
}

/// Whether `a` and `b` differ by at most the relative tie tolerance.
pub fn ties<S: Float>(a: S, b: S) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= S::from(TIE_EPSILON).unwrap() * scale
}

/// The minimum-cost plan: OR cost is the least alternative cost, AND cost
/// is the operator's cost over its children's OR costs.
pub fn best_plan<S: Float>(dag: &RegionDag, cost: &dyn CostFunction<S>) -> Result<Plan<S>, CostError> {
    best_plan_with(dag, dag.root, cost, &BTreeMap::new())
}

/// `best_plan` from `root`, with the OR nodes in `forced` restricted to the
/// given alternative.
pub fn best_plan_with<S: Float>(
    dag: &RegionDag,
    root: OrId,
    cost: &dyn CostFunction<S>,
    forced: &BTreeMap<OrId, AndId>,
) -> Result<Plan<S>, CostError> {
    let reachable = dag.reachable(root);
    let order = dag.topological_order().expect("expanded DAGs are acyclic");
    let mut memo = Memo {
        dag,
        choice: vec![None; dag.ors.len()],
        cost: vec![None; dag.ors.len()],
    };
    let mut queries = vec![0usize; dag.ors.len()];
    let mut and_costs = BTreeMap::new();
    for or in order.into_iter().filter(|o| reachable.contains(o)) {
        let mut scored: Vec<(AndId, Cost<S>, usize)> = Vec::new();
        for &a in &dag.or(or).alternatives {
            if forced.get(&or).is_some_and(|f| *f != a) {
                continue;
            }
            let and = dag.and(a);
            let kids: Vec<Cost<S>> = and.children.iter().map(|c| memo.or_cost(*c)).collect();
            let c = cost.and_cost(and, &kids, &memo)?;
            let q = and.op.query_count() + and.children.iter().map(|c| queries[*c]).sum::<usize>();
            and_costs.insert(a, c);
            scored.push((a, c, q));
        }
        let (a, c, q) = tie_break(dag, &scored);
        memo.choice[or] = Some(a);
        memo.cost[or] = Some(c);
        queries[or] = q;
    }
    let mut choice = BTreeMap::new();
    let mut stack = vec![root];
    while let Some(o) = stack.pop() {
        if choice.contains_key(&o) {
            continue;
        }
        let a = memo.choice[o].expect("every reachable OR is costed");
        choice.insert(o, a);
        stack.extend(dag.and(a).children.iter().copied());
    }
    let or_costs = reachable.iter().map(|&o| (o, memo.or_cost(o))).collect();
    Ok(Plan {
        root,
        choice,
        best: reachable.iter().map(|&o| (o, memo.choice[o].unwrap())).collect(),
        or_costs,
        and_costs,
        queries: reachable.iter().map(|&o| (o, queries[o])).collect(),
    })
}

/// Among the cheapest candidates (within the tie tolerance): fewest
/// database requests, then an alternative of the original program, then
/// the lowest id.
pub fn tie_break<S: Float>(dag: &RegionDag, scored: &[(AndId, Cost<S>, usize)]) -> (AndId, Cost<S>, usize) {
    let min = scored
        .iter()
        .map(|s| s.1.seconds())
        .fold(S::infinity(), |a, b| a.min(b));
    *scored
        .iter()
        .filter(|s| ties(s.1.seconds(), min) || s.1.seconds() == min)
        .min_by_key(|s| (s.2, !dag.is_initial(s.0), s.0))
        .expect("every OR node has an alternative")
}

/// Every complete plan below `root`, as one alternative per OR node of the
/// plan tree; `None` when there are more than `limit`.
pub fn enumerate_plans(dag: &RegionDag, root: OrId, limit: usize) -> Option<Vec<BTreeMap<OrId, AndId>>> {
    fn go(
        dag: &RegionDag,
        pending: &mut Vec<OrId>,
        choice: &mut BTreeMap<OrId, AndId>,
        out: &mut Vec<BTreeMap<OrId, AndId>>,
        limit: usize,
    ) -> bool {
        let Some(or) = pending.pop() else {
            out.push(choice.clone());
            return out.len() <= limit;
        };
        if choice.contains_key(&or) {
            let ok = go(dag, pending, choice, out, limit);
            pending.push(or);
            return ok;
        }
        for &a in &dag.or(or).alternatives {
            choice.insert(or, a);
            let kids = &dag.and(a).children;
            let mark = pending.len();
            pending.extend(kids.iter().rev().copied());
            let ok = go(dag, pending, choice, out, limit);
            pending.truncate(mark);
            choice.remove(&or);
            if !ok {
                return false;
            }
        }
        pending.push(or);
        true
    }
    let mut out = Vec::new();
    go(dag, &mut vec![root], &mut BTreeMap::new(), &mut out, limit).then_some(out)
}

/// Cost of the plan fixing `choice` at every OR node it names.
pub fn plan_cost<S: Float>(
    dag: &RegionDag,
    root: OrId,
    cost: &dyn CostFunction<S>,
    choice: &BTreeMap<OrId, AndId>,
) -> Result<Cost<S>, CostError> {
    Ok(best_plan_with(dag, root, cost, choice)?.cost())
}

/// OR nodes of the plan tree in first-visit order.
pub fn plan_ors(dag: &RegionDag, root: OrId, choice: &BTreeMap<OrId, AndId>) -> Vec<OrId> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(o) = stack.pop() {
        if seen.insert(o) {
            out.push(o);
            stack.extend(dag.and(choice[&o]).children.iter().rev().copied());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::Expr;
    use crate::regiondag::{AltTree, Op};

    struct Weights(BTreeMap<AndId, f64>);

    impl CostFunction<f64> for Weights {
        fn and_cost(&self, and: &AndNode, kids: &[Cost<f64>], _: &dyn PlanView<f64>) -> Result<Cost<f64>, CostError> {
            Ok(kids.iter().fold(Cost::cpu(self.0[&and.id]), |a, b| a + *b))
        }
    }

    fn leaf(n: i64) -> AltTree {
        AltTree::leaf(Op::Const(Expr::Int(n)))
    }

    #[test]
    fn picks_the_cheaper_alternative() {
        let mut dag = RegionDag::new();
        dag.root = dag.intern(&leaf(1));
        let b = dag.add_alternative(dag.root, &leaf(2)).unwrap();
        let w = Weights([(0, 3.0), (b, 2.0)].into_iter().collect());
        let plan = best_plan(&dag, &w).unwrap();
        assert_eq!(plan.chosen(dag.root), b);
        assert_eq!(plan.cost().seconds(), 2.0);
    }

    #[test]
    fn full_tie_takes_the_lowest_id() {
        let mut dag = RegionDag::new();
        dag.root = dag.intern(&leaf(1));
        let b = dag.add_alternative(dag.root, &leaf(2)).unwrap();
        let w = Weights([(0, 1.0), (b, 1.0)].into_iter().collect());
        dag.initial_ands = 0;
        assert_eq!(best_plan(&dag, &w).unwrap().chosen(dag.root), 0);
    }

    #[test]
    fn tie_prefers_the_original_program() {
        let mut dag = RegionDag::new();
        let x = dag.intern(&leaf(1));
        let y = dag.intern(&leaf(2));
        dag.root = dag.intern(&AltTree::node(Op::Seq, vec![AltTree::Or(x), AltTree::Or(y)]));
        dag.initial_ands = dag.ands.len();
        let r = dag.add_alternative(dag.root, &AltTree::node(Op::Tuple, vec![AltTree::Or(y), AltTree::Or(x)])).unwrap();
        let w = Weights([(0, 1.0), (1, 1.0), (2, 0.5), (r, 0.5)].into_iter().collect());
        assert_eq!(best_plan(&dag, &w).unwrap().chosen(dag.root), 2);
    }

    #[test]
    fn tie_prefers_fewer_queries() {
        use crate::frontend::query::QueryExpr;
        use crate::regiondag::CanonQuery;
        let mut dag = RegionDag::new();
        dag.root = dag.intern(&AltTree::leaf(Op::ExecuteQuery(CanonQuery::new(QueryExpr::scan("r")))));
        dag.initial_ands = 0;
        let b = dag.add_alternative(dag.root, &leaf(2)).unwrap();
        let w = Weights([(0, 1.0), (b, 1.0)].into_iter().collect());
        assert_eq!(best_plan(&dag, &w).unwrap().chosen(dag.root), b);
    }

    #[test]
    fn enumeration_respects_the_limit() {
        let mut dag = RegionDag::new();
        let x = dag.intern(&leaf(1));
        dag.add_alternative(x, &leaf(2)).unwrap();
        let y = dag.intern(&leaf(3));
        dag.add_alternative(y, &leaf(4)).unwrap();
        dag.root = dag.intern(&AltTree::node(Op::Seq, vec![AltTree::Or(x), AltTree::Or(y)]));
        assert_eq!(enumerate_plans(&dag, dag.root, 10).unwrap().len(), 4);
        assert!(enumerate_plans(&dag, dag.root, 3).is_none());
    }
}
