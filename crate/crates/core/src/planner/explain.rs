//! Human-readable cost reports.

use std::fmt::Write;

use num_traits::Float;

use super::{enumerate_plans, plan_cost, plan_ors, Plan};
use crate::cost::{Cost, CostError, CostFunction};
use crate::regiondag::RegionDag;

fn seconds<S: Float>(x: S) -> String {
    format!("{:.9}", x.to_f64().unwrap_or(f64::NAN))
}

fn breakdown<S: Float>(c: &Cost<S>) -> String {
    format!(
        "{:>16} {:>14} {:>14} {:>14}",
        seconds(c.seconds()),
        seconds(c.network),
        seconds(c.server),
        seconds(c.cpu)
    )
}

/// Every alternative of every OR node reachable from the root, with its cost
/// under the best choices below it; `*` marks the winner.
pub fn explain<S: Float>(plan: &Plan<S>, dag: &RegionDag) -> String {
    let mut out = String::new();
    let total = plan.cost();
    writeln!(
        out,
        "plan cost {} s ({} database requests)",
        seconds(total.seconds()),
        plan.query_count()
    )
    .unwrap();
    writeln!(
        out,
        "  {:<6} {:<40} {:>16} {:>14} {:>14} {:>14}",
        "AND", "operator", "total_s", "network_s", "server_s", "cpu_s"
    )
    .unwrap();
    for (&or, best) in &plan.or_costs {
        let node = dag.or(or);
        let in_plan = if plan.choice.contains_key(&or) { "" } else { " (not in plan)" };
        writeln!(out, "OR {or} {}{in_plan}: best {} s", node.label, seconds(best.seconds())).unwrap();
        let chosen = plan.best.get(&or).copied();
        for &a in &node.alternatives {
            let Some(c) = plan.and_costs.get(&a) else { continue };
            let mark = if Some(a) == chosen { '*' } else { ' ' };
            let mut label = dag.and(a).op.label().replace('\n', " ");
            if label.chars().count() > 40 {
                label = label.chars().take(37).collect::<String>() + "...";
            }
            writeln!(out, "{mark} {a:<6} {label:<40} {}", breakdown(c)).unwrap();
        }
    }
    out
}

/// Each complete plan with its cost, cheapest first, described by its
/// choices at OR nodes that have more than one alternative.
pub fn list_alternatives<S: Float>(
    dag: &RegionDag,
    cost: &dyn CostFunction<S>,
    limit: usize,
) -> Result<String, CostError> {
    let mut out = String::new();
    let Some(plans) = enumerate_plans(dag, dag.root, limit) else {
        writeln!(out, "more than {limit} complete plans; not listed").unwrap();
        return Ok(out);
    };
    let mut rows = Vec::new();
    for choice in &plans {
        let c = plan_cost(dag, dag.root, cost, choice)?;
        let picks: Vec<String> = plan_ors(dag, dag.root, choice)
            .into_iter()
            .filter(|o| dag.or(*o).alternatives.len() > 1)
            .map(|o| format!("{}={}", dag.or(o).label, choice[&o]))
            .collect();
        let queries: usize = plan_ors(dag, dag.root, choice)
            .into_iter()
            .map(|o| dag.and(choice[&o]).op.query_count())
            .sum();
        rows.push((c, queries, picks.join(" ")));
    }
    rows.sort_by(|a, b| a.0.seconds().partial_cmp(&b.0.seconds()).unwrap_or(std::cmp::Ordering::Equal));
    writeln!(
        out,
        "{:<4} {:>16} {:>14} {:>14} {:>14} {:>8}  choices",
        "#", "total_s", "network_s", "server_s", "cpu_s", "queries"
    )
    .unwrap();
    for (i, (c, q, picks)) in rows.iter().enumerate() {
        writeln!(out, "{:<4} {} {q:>8}  {picks}", i + 1, breakdown(c)).unwrap();
    }
    Ok(out)
}
