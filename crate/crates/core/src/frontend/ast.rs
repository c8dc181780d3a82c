//! Abstract syntax of CobraLang.
//!
//! Source positions live in [`Span`], which compares equal to every other
//! span so that structural equality and hashing of the tree ignore layout.

use std::fmt;
use std::hash::{Hash, Hasher};

use ordered_float::OrderedFloat;

use super::query::QueryExpr;

/// Source position of a statement or function. Ignored by `==` and `Hash`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    /// Line of the terminating `;` or closing `}`.
    pub end_line: u32,
    /// Preorder statement number within the enclosing function.
    pub id: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl Hash for Span {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength used by the parser and the printer.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or
        )
    }

    /// The operator obtained by swapping operands, for comparisons.
    pub fn flipped(self) -> Option<BinOp> {
        Some(match self {
            BinOp::Eq => BinOp::Eq,
            BinOp::Ne => BinOp::Ne,
            BinOp::Lt => BinOp::Gt,
            BinOp::Le => BinOp::Ge,
            BinOp::Gt => BinOp::Lt,
            BinOp::Ge => BinOp::Le,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Not,
    Neg,
}

/// Scalar expression.
///
/// Inside a query a bare `Var` names a column of the current row and
/// `Field(Var(x), c)` refers to column `c` of the program variable `x`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Int(i64),
    Float(OrderedFloat<f64>),
    Str(String),
    Bool(bool),
    Var(String),
    Field(Box<Expr>, String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn field(base: Expr, name: impl Into<String>) -> Expr {
        Expr::Field(Box::new(base), name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(name: impl Into<String>, args: Vec<Expr>) -> Expr {
        Expr::Call(name.into(), args)
    }

    /// Program variables read by this expression (outside query context).
    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone())
                }
            }
            Expr::Field(base, _) => base.vars(out),
            Expr::Binary(_, l, r) => {
                l.vars(out);
                r.vars(out);
            }
            Expr::Unary(_, e) => e.vars(out),
            Expr::Call(_, args) => args.iter().for_each(|a| a.vars(out)),
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) => {}
        }
    }

    /// Number of operator nodes (binary, unary, call, field access).
    pub fn operator_count(&self) -> usize {
        match self {
            Expr::Field(base, _) => 1 + base.operator_count(),
            Expr::Binary(_, l, r) => 1 + l.operator_count() + r.operator_count(),
            Expr::Unary(_, e) => 1 + e.operator_count(),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::operator_count).sum::<usize>(),
            _ => 0,
        }
    }

    /// Calls to functions that are not language builtins.
    pub fn opaque_calls(&self) -> usize {
        match self {
            Expr::Field(base, _) => base.opaque_calls(),
            Expr::Binary(_, l, r) => l.opaque_calls() + r.opaque_calls(),
            Expr::Unary(_, e) => e.opaque_calls(),
            Expr::Call(name, args) => {
                usize::from(!is_builtin(name)) + args.iter().map(Expr::opaque_calls).sum::<usize>()
            }
            _ => 0,
        }
    }
}

/// Functions with fixed semantics in the interpreter; every other call is opaque.
pub const BUILTINS: &[&str] = &[
    "list",
    "map",
    "with_added",
    "with_put",
    "len",
    "max",
    "min",
    "abs",
    "get",
    "contains",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Assign {
        target: String,
        value: Expr,
    },
    /// Cursor loop over the rows of a query, in result order.
    QueryLoop {
        var: String,
        query: QueryExpr,
        body: Vec<Stmt>,
    },
    CollLoop {
        var: String,
        coll: Expr,
        body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    /// `recv.method(args);` or `function(args);`
    Call {
        receiver: Option<String>,
        method: String,
        args: Vec<Expr>,
    },
    Return(Expr),
    ExecQuery {
        target: String,
        query: QueryExpr,
    },
    /// `cacheByColumn(relation, column);`
    Prefetch {
        relation: String,
        column: String,
    },
    /// `target = lookupCache(relation, column, key);`
    CacheLookup {
        target: String,
        relation: String,
        column: String,
        key: Expr,
    },
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt {
            kind,
            span: Span::default(),
        }
    }

    pub fn assign(target: impl Into<String>, value: Expr) -> Stmt {
        Stmt::new(StmtKind::Assign {
            target: target.into(),
            value,
        })
    }

    pub fn is_compound(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::QueryLoop { .. }
                | StmtKind::CollLoop { .. }
                | StmtKind::While { .. }
                | StmtKind::If { .. }
        )
    }

    /// Nested statement lists, in textual order.
    pub fn children(&self) -> Vec<&Vec<Stmt>> {
        match &self.kind {
            StmtKind::QueryLoop { body, .. }
            | StmtKind::CollLoop { body, .. }
            | StmtKind::While { body, .. } => vec![body],
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
            _ => vec![],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Vec<Stmt>> {
        match &mut self.kind {
            StmtKind::QueryLoop { body, .. }
            | StmtKind::CollLoop { body, .. }
            | StmtKind::While { body, .. } => vec![body],
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
            _ => vec![],
        }
    }

    /// Variable written by a simple statement, if any. Mutating method calls
    /// (`x.add(..)`) count as writes of the receiver.
    pub fn written_var(&self) -> Option<&str> {
        match &self.kind {
            StmtKind::Assign { target, .. }
            | StmtKind::ExecQuery { target, .. }
            | StmtKind::CacheLookup { target, .. } => Some(target),
            StmtKind::Call {
                receiver: Some(r), ..
            } => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl FunctionDef {
    /// Renumbers statements in preorder, starting at 0.
    pub fn number_statements(&mut self) {
        fn walk(stmts: &mut [Stmt], next: &mut usize) {
            for s in stmts {
                s.span.id = *next;
                *next += 1;
                for body in s.children_mut() {
                    walk(body, next);
                }
            }
        }
        let mut next = 0;
        walk(&mut self.body, &mut next);
    }

    /// All statements in preorder.
    pub fn statements(&self) -> Vec<&Stmt> {
        fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a Stmt>) {
            for s in stmts {
                out.push(s);
                for body in s.children() {
                    walk(body, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    pub fn statement(&self, id: usize) -> Option<&Stmt> {
        self.statements().into_iter().find(|s| s.span.id == id)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub functions: Vec<FunctionDef>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::print_program(self))
    }
}
