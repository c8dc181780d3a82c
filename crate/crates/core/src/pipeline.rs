//! Source text to expanded region DAG, and from there to a costed plan.

use thiserror::Error;

use crate::cost::{CostCatalog, CostError, CostModel, QueryStats};
use crate::fir::{rule_set, RuleContext};
use crate::frontend::{self, build_cfg, FrontendError, FunctionDef, Program};
use crate::planner::{best_plan, emit_program, EmitError, Plan};
use crate::regiondag::expand::{expand, BudgetExceeded, ExpansionReport, Rule, DEFAULT_BUDGET};
use crate::regiondag::{init_dag, RegionDag};
use crate::regions::{build_region_tree, RegionTree};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("no function named `{0}`")]
    UnknownFunction(String),
    #[error("the program defines {0} functions; name one with --entry")]
    AmbiguousEntry(usize),
    #[error("{0}")]
    Rules(String),
    #[error(transparent)]
    Budget(#[from] BudgetExceeded),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

/// The entry function, named or the only one.
pub fn entry_function<'a>(program: &'a Program, entry: Option<&str>) -> Result<&'a FunctionDef, PipelineError> {
    match entry {
        Some(name) => program
            .functions
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| PipelineError::UnknownFunction(name.to_string())),
        None => match &program.functions[..] {
            [f] => Ok(f),
            fs => Err(PipelineError::AmbiguousEntry(fs.len())),
        },
    }
}

pub struct Expanded {
    pub program: Program,
    pub entry: String,
    pub tree: RegionTree,
    pub dag: RegionDag,
    pub report: ExpansionReport,
}

/// Parses `source` and expands the entry function's DAG with `rules`.
pub fn expand_source(
    source: &str,
    entry: Option<&str>,
    rules: &[&str],
    ctx: &RuleContext,
) -> Result<Expanded, PipelineError> {
    let program = frontend::parse(source)?;
    let f = entry_function(&program, entry)?;
    let cfg = build_cfg(f);
    let tree = build_region_tree(f, &cfg);
    let mut dag = init_dag(f, &cfg, &tree);
    let boxed = rule_set(rules, ctx).map_err(PipelineError::Rules)?;
    let refs: Vec<&dyn Rule> = boxed.iter().map(|r| r.as_ref()).collect();
    let report = expand(&mut dag, &refs, DEFAULT_BUDGET)?;
    Ok(Expanded {
        entry: f.name.clone(),
        program,
        tree,
        dag,
        report,
    })
}

pub struct Optimized {
    pub expanded: Expanded,
    pub plan: Plan<f64>,
    pub text: String,
}

/// The full optimization: expand, cost, choose and emit.
pub fn optimize(
    source: &str,
    entry: Option<&str>,
    rules: &[&str],
    catalog: &CostCatalog<f64>,
    stats: &QueryStats<f64>,
    legacy: bool,
) -> Result<Optimized, PipelineError> {
    let expanded = expand_source(source, entry, rules, &stats.rule_context(legacy))?;
    let plan = best_plan(&expanded.dag, &CostModel::new(catalog, stats))?;
    let text = emit_program(&plan, &expanded.dag, &expanded.program, &expanded.entry)?;
    Ok(Optimized { expanded, plan, text })
}
