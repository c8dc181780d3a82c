//! CobraLang: lexing, parsing, validation, printing and CFG construction.

pub mod ast;
pub mod cfg;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod query;

use std::collections::HashSet;

use thiserror::Error;

pub use ast::{Expr, FunctionDef, Program, Stmt, StmtKind};
pub use cfg::{build_cfg, Cfg};
pub use query::QueryExpr;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
    pub expected: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{line}:{col}: variable `{name}` is used before it is defined")]
    UndefinedVariable { name: String, line: u32, col: u32 },
    #[error("{line}:{col}: statement after `return` is unreachable")]
    Unreachable { line: u32, col: u32 },
    #[error("{line}:{col}: duplicate function `{name}`")]
    DuplicateFunction { name: String, line: u32, col: u32 },
    #[error("{line}:{col}: unknown relation `{name}`")]
    UnknownRelation { name: String, line: u32, col: u32 },
}

impl FrontendError {
    pub fn position(&self) -> (u32, u32) {
        match self {
            FrontendError::Syntax(e) => (e.line, e.col),
            FrontendError::UndefinedVariable { line, col, .. }
            | FrontendError::Unreachable { line, col }
            | FrontendError::DuplicateFunction { line, col, .. }
            | FrontendError::UnknownRelation { line, col, .. } => (*line, *col),
        }
    }
}

/// Parses and validates a program.
pub fn parse(source: &str) -> Result<Program, FrontendError> {
    let program = parser::parse(source)?;
    validate(&program)?;
    Ok(program)
}

/// Scoping checks: every use follows a definition in textual order, and no
/// statement follows a `return` in the same block.
pub fn validate(program: &Program) -> Result<(), FrontendError> {
    let mut names = HashSet::new();
    for f in &program.functions {
        if !names.insert(&f.name) {
            return Err(FrontendError::DuplicateFunction {
                name: f.name.clone(),
                line: f.span.line,
                col: f.span.col,
            });
        }
        let mut defined: HashSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
        check_block(&f.body, &mut defined)?;
    }
    Ok(())
}

fn check_block(stmts: &[Stmt], defined: &mut HashSet<String>) -> Result<(), FrontendError> {
    for (i, s) in stmts.iter().enumerate() {
        if matches!(s.kind, StmtKind::Return(_)) {
            if let Some(next) = stmts.get(i + 1) {
                return Err(FrontendError::Unreachable {
                    line: next.span.line,
                    col: next.span.col,
                });
            }
        }
        check_stmt(s, defined)?;
    }
    Ok(())
}

fn check_stmt(s: &Stmt, defined: &mut HashSet<String>) -> Result<(), FrontendError> {
    let need = |vars: Vec<String>, defined: &HashSet<String>| -> Result<(), FrontendError> {
        match vars.into_iter().find(|v| !defined.contains(v)) {
            Some(name) => Err(FrontendError::UndefinedVariable {
                name,
                line: s.span.line,
                col: s.span.col,
            }),
            None => Ok(()),
        }
    };
    let expr_vars = |e: &Expr| {
        let mut v = Vec::new();
        e.vars(&mut v);
        v
    };
    match &s.kind {
        StmtKind::Assign { target, value } => {
            need(expr_vars(value), defined)?;
            defined.insert(target.clone());
        }
        StmtKind::QueryLoop { var, query, body } => {
            need(query.outer_vars(), defined)?;
            defined.insert(var.clone());
            check_block(body, defined)?;
        }
        StmtKind::CollLoop { var, coll, body } => {
            need(expr_vars(coll), defined)?;
            defined.insert(var.clone());
            check_block(body, defined)?;
        }
        StmtKind::While { cond, body } => {
            need(expr_vars(cond), defined)?;
            check_block(body, defined)?;
        }
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            need(expr_vars(cond), defined)?;
            check_block(then_body, defined)?;
            check_block(else_body, defined)?;
        }
        StmtKind::Call { receiver, args, .. } => {
            let mut vars: Vec<String> = receiver.iter().cloned().collect();
            for a in args {
                a.vars(&mut vars);
            }
            need(vars, defined)?;
        }
        StmtKind::Return(e) => need(expr_vars(e), defined)?,
        StmtKind::ExecQuery { target, query } => {
            need(query.outer_vars(), defined)?;
            defined.insert(target.clone());
        }
        StmtKind::Prefetch { .. } => {}
        StmtKind::CacheLookup { target, key, .. } => {
            need(expr_vars(key), defined)?;
            defined.insert(target.clone());
        }
    }
    Ok(())
}

/// Reports the first query that names a relation for which `known` is false.
pub fn check_relations(program: &Program, known: &dyn Fn(&str) -> bool) -> Result<(), FrontendError> {
    for f in &program.functions {
        for s in f.statements() {
            let mut rels: Vec<&str> = Vec::new();
            match &s.kind {
                StmtKind::QueryLoop { query, .. } | StmtKind::ExecQuery { query, .. } => {
                    rels = query.relations()
                }
                StmtKind::Prefetch { relation, .. } | StmtKind::CacheLookup { relation, .. } => {
                    rels.push(relation)
                }
                _ => {}
            }
            if let Some(r) = rels.into_iter().find(|r| !known(r)) {
                return Err(FrontendError::UnknownRelation {
                    name: r.to_string(),
                    line: s.span.line,
                    col: s.span.col,
                });
            }
        }
    }
    Ok(())
}
