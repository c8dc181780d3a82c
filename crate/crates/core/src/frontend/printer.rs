//! Pretty printer producing source text that parses back to the same tree.

use super::ast::*;
use super::query::QueryExpr;

pub fn print_program(p: &Program) -> String {
    p.functions
        .iter()
        .map(print_function)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn print_function(f: &FunctionDef) -> String {
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| match &p.ty {
            Some(t) => format!("{}: {t}", p.name),
            None => p.name.clone(),
        })
        .collect();
    let mut out = format!("fn {}({}) {{\n", f.name, params.join(", "));
    print_block(&f.body, 1, &mut out);
    out.push_str("}\n");
    out
}

pub fn print_stmts(stmts: &[Stmt], depth: usize) -> String {
    let mut out = String::new();
    print_block(stmts, depth, &mut out);
    out
}

fn print_block(stmts: &[Stmt], depth: usize, out: &mut String) {
    for s in stmts {
        print_stmt(s, depth, out);
    }
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn print_stmt(s: &Stmt, depth: usize, out: &mut String) {
    indent(depth, out);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            out.push_str(&format!("{target} = {};\n", print_expr(value)));
        }
        StmtKind::QueryLoop { var, query, body } => {
            out.push_str(&format!(
                "for ({var} : query {{ {} }}) {{\n",
                print_query(query)
            ));
            print_block(body, depth + 1, out);
            indent(depth, out);
            out.push_str("}\n");
        }
        StmtKind::CollLoop { var, coll, body } => {
            out.push_str(&format!("for ({var} : {}) {{\n", print_expr(coll)));
            print_block(body, depth + 1, out);
            indent(depth, out);
            out.push_str("}\n");
        }
        StmtKind::While { cond, body } => {
            out.push_str(&format!("while ({}) {{\n", print_expr(cond)));
            print_block(body, depth + 1, out);
            indent(depth, out);
            out.push_str("}\n");
        }
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            out.push_str(&format!("if ({}) {{\n", print_expr(cond)));
            print_block(then_body, depth + 1, out);
            indent(depth, out);
            if else_body.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                print_block(else_body, depth + 1, out);
                indent(depth, out);
                out.push_str("}\n");
            }
        }
        StmtKind::Call {
            receiver,
            method,
            args,
        } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            match receiver {
                Some(r) => out.push_str(&format!("{r}.{method}({});\n", args.join(", "))),
                None => out.push_str(&format!("{method}({});\n", args.join(", "))),
            }
        }
        StmtKind::Return(e) => out.push_str(&format!("return {};\n", print_expr(e))),
        StmtKind::ExecQuery { target, query } => {
            out.push_str(&format!(
                "{target} = executeQuery({});\n",
                print_query(query)
            ));
        }
        StmtKind::Prefetch { relation, column } => {
            out.push_str(&format!("cacheByColumn({relation}, {column});\n"));
        }
        StmtKind::CacheLookup {
            target,
            relation,
            column,
            key,
        } => {
            out.push_str(&format!(
                "{target} = lookupCache({relation}, {column}, {});\n",
                print_expr(key)
            ));
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    fn go(e: &Expr, parent: u8) -> String {
        match e {
            Expr::Int(i) if *i < 0 && parent > 0 => format!("({i})"),
            Expr::Int(i) => i.to_string(),
            Expr::Float(f) => {
                let s = format!("{:?}", f.0);
                if f.0 < 0.0 && parent > 0 {
                    format!("({s})")
                } else {
                    s
                }
            }
            Expr::Str(s) => format!(
                "\"{}\"",
                s.replace('\\', "\\\\")
                    .replace('"', "\\\"")
                    .replace('\n', "\\n")
                    .replace('\t', "\\t")
            ),
            Expr::Bool(b) => b.to_string(),
            Expr::Var(v) => v.clone(),
            Expr::Field(base, name) => format!("{}.{name}", go(base, 9)),
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let s = format!("{} {} {}", go(l, p), op.symbol(), go(r, p + 1));
                if p < parent {
                    format!("({s})")
                } else {
                    s
                }
            }
            Expr::Unary(op, x) => {
                let sym = match op {
                    UnOp::Not => "!",
                    UnOp::Neg => "-",
                };
                format!("{sym}{}", go(x, 8))
            }
            Expr::Call(n, args) => format!(
                "{n}({})",
                args.iter().map(|a| go(a, 0)).collect::<Vec<_>>().join(", ")
            ),
        }
    }
    go(e, 0)
}

pub fn print_query(q: &QueryExpr) -> String {
    match q {
        QueryExpr::Scan(r) => format!("scan({r})"),
        QueryExpr::Select(p, c) => format!("select({}, {})", print_expr(p), print_query(c)),
        QueryExpr::Project(items, c) => {
            let items: Vec<String> = items
                .iter()
                .map(|i| match &i.alias {
                    Some(a) => format!("{} as {a}", print_expr(&i.expr)),
                    None => print_expr(&i.expr),
                })
                .collect();
            format!("project([{}], {})", items.join(", "), print_query(c))
        }
        QueryExpr::Join(p, l, r) => format!(
            "join({}, {}, {})",
            print_expr(p),
            print_query(l),
            print_query(r)
        ),
        QueryExpr::Aggregate {
            func,
            column,
            group_by,
            input,
        } => match group_by {
            Some(g) => format!(
                "aggregate({}, {column}, {g}, {})",
                func.name(),
                print_query(input)
            ),
            None => format!("aggregate({}, {column}, {})", func.name(), print_query(input)),
        },
        QueryExpr::OrderBy(c, q) => format!("orderby({c}, {})", print_query(q)),
    }
}
