//! Exhaustive search over small random AND-OR DAGs, independent of the planner.

use std::collections::BTreeMap;

use cobra::cost::{Cost, CostError, CostFunction, PlanView};
use cobra::regiondag::{AltTree, AndId, AndNode, Op, OrId, RegionDag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Each AND node costs a fixed amount plus its children.
pub struct Fixed(pub BTreeMap<AndId, f64>);

impl CostFunction<f64> for Fixed {
    fn and_cost(&self, and: &AndNode, children: &[Cost<f64>], _: &dyn PlanView<f64>) -> Result<Cost<f64>, CostError> {
        Ok(children.iter().fold(Cost::cpu(self.0[&and.id]), |acc, c| acc + *c))
    }
}

/// A DAG of at most 12 OR nodes where OR `i` only points at larger ids,
/// with 1 to 3 alternatives per node and a positive cost per alternative.
pub fn random_dag(seed: u64) -> (RegionDag, Fixed) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12);
    let mut dag = RegionDag::new();
    for i in 0..n {
        dag.new_or(format!("o{i}"));
    }
    let mut costs = BTreeMap::new();
    let mut tag = 0;
    for i in (0..n).rev() {
        for _ in 0..rng.gen_range(1..=3) {
            let kids: Vec<AltTree> = if i + 1 < n {
                (0..rng.gen_range(0..=3)).map(|_| AltTree::Or(rng.gen_range(i + 1..n))).collect()
            } else {
                vec![]
            };
            tag += 1;
            let a = dag.add_alternative(i, &AltTree::And(Op::Var(format!("a{tag}")), kids)).unwrap();
            costs.insert(a, rng.gen_range(0.001..10.0));
        }
    }
    dag.root = 0;
    (dag, Fixed(costs))
}

/// Every consistent choice of alternatives below `root`, enumerated
/// independently of the planner.
pub fn all_choices(dag: &RegionDag, root: OrId) -> Vec<BTreeMap<OrId, AndId>> {
    let mut out = Vec::new();
    let mut todo = vec![(vec![root], BTreeMap::new())];
    while let Some((mut pending, choice)) = todo.pop() {
        let Some(or) = pending.pop() else {
            out.push(choice);
            continue;
        };
        if choice.contains_key(&or) {
            todo.push((pending, choice));
            continue;
        }
        for &a in &dag.or(or).alternatives {
            let mut p = pending.clone();
            p.extend(dag.and(a).children.iter().copied());
            let mut c = choice.clone();
            c.insert(or, a);
            todo.push((p, c));
        }
    }
    out
}

pub fn tree_cost(dag: &RegionDag, costs: &Fixed, or: OrId, choice: &BTreeMap<OrId, AndId>) -> f64 {
    let a = choice[&or];
    dag.and(a)
        .children
        .iter()
        .fold(costs.0[&a], |acc, c| acc + tree_cost(dag, costs, *c, choice))
}
