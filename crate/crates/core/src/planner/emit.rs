//! Program text for a chosen plan.

use std::collections::BTreeMap;

use thiserror::Error;

use super::Plan;
use crate::fir::lower::Temps;
use crate::fir::{extract, fir_to_code, UnloweredOperator};
use crate::frontend::ast::{FunctionDef, Program, Stmt, StmtKind};
use crate::frontend::cfg::first_free_temp;
use crate::frontend::printer::print_program;
use crate::regiondag::{is_constant, AndId, OrId, RegionDag};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error(transparent)]
    Unlowered(#[from] UnloweredOperator),
    #[error("no function named `{0}`")]
    UnknownFunction(String),
}

/// `f` with its body replaced by the code of the plan.
pub fn emit_function<S>(plan: &Plan<S>, dag: &RegionDag, f: &FunctionDef) -> Result<FunctionDef, UnloweredOperator> {
    emit_choice(dag, plan.root, &plan.choice, f)
}

/// `f` with its body replaced by the code of the plan below `root` that
/// takes `choice` at every OR node.
pub fn emit_choice(
    dag: &RegionDag,
    root: OrId,
    choice: &BTreeMap<OrId, AndId>,
    f: &FunctionDef,
) -> Result<FunctionDef, UnloweredOperator> {
    let e = extract(dag, root, &mut |_, or| choice[&or]);
    let mut body = fir_to_code(&e, &mut Temps::starting_at(first_free_temp(f)))?;
    drop_repeated_constants(&mut body);
    let mut out = FunctionDef {
        body,
        ..f.clone()
    };
    out.number_statements();
    Ok(out)
}

/// Removes `x = c;` directly after an identical `x = c;` for a literal or
/// empty constructor `c`. A fold's initial value repeats the assignment
/// that preceded the loop it replaced.
fn drop_repeated_constants(stmts: &mut Vec<Stmt>) {
    stmts.dedup_by(|next, prev| {
        next.kind == prev.kind && matches!(&next.kind, StmtKind::Assign { value, .. } if is_constant(value))
    });
    for s in stmts {
        match &mut s.kind {
            StmtKind::QueryLoop { body, .. } | StmtKind::CollLoop { body, .. } | StmtKind::While { body, .. } => {
                drop_repeated_constants(body)
            }
            StmtKind::If {
                then_body, else_body, ..
            } => {
                drop_repeated_constants(then_body);
                drop_repeated_constants(else_body);
            }
            _ => {}
        }
    }
}

/// Source text of `program` with function `entry` rewritten to the plan.
pub fn emit_program<S>(plan: &Plan<S>, dag: &RegionDag, program: &Program, entry: &str) -> Result<String, EmitError> {
    let mut p = program.clone();
    let f = p
        .functions
        .iter_mut()
        .find(|f| f.name == entry)
        .ok_or_else(|| EmitError::UnknownFunction(entry.to_string()))?;
    *f = emit_function(plan, dag, f)?;
    Ok(print_program(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;
    use crate::frontend::printer::print_stmts;

    fn body(src: &str) -> Vec<Stmt> {
        parse(src).unwrap().functions.remove(0).body
    }

    #[test]
    fn repeated_constant_assignment_is_dropped() {
        let mut b = body("fn f() {\n    r = list();\n    r = list();\n    if (r) {\n        n = 0;\n        n = 0;\n    }\n}\n");
        drop_repeated_constants(&mut b);
        assert_eq!(print_stmts(&b, 0), print_stmts(&body("fn f() {\n    r = list();\n    if (r) {\n        n = 0;\n    }\n}\n"), 0));
    }

    #[test]
    fn repeated_computed_assignment_is_kept() {
        let mut b = body("fn f(x) {\n    x = x + 1;\n    x = x + 1;\n}\n");
        drop_repeated_constants(&mut b);
        assert_eq!(b.len(), 2);
    }
}
