//! Recursive-descent parser for CobraLang.

use ordered_float::OrderedFloat;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::query::{AggFn, ProjItem, QueryExpr};
use super::SyntaxError;

pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut functions = Vec::new();
    while !p.at_eof() {
        functions.push(p.function()?);
    }
    Ok(Program { functions })
}

/// Parses a standalone query expression such as `scan(orders)`.
pub fn parse_query(source: &str) -> Result<QueryExpr, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let q = p.query()?;
    if !p.at_eof() {
        return p.error(&["end of input"]);
    }
    Ok(q)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)].tok
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let t = self.peek();
        Err(SyntaxError {
            line: t.line,
            col: t.col,
            message: format!(
                "expected {}, found {}",
                expected.join(" or "),
                t.tok.describe()
            ),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> PResult<Token> {
        if self.is_punct(p) {
            Ok(self.bump())
        } else {
            let quoted = format!("`{p}`");
            self.error(&[quoted.as_str()])
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Token> {
        if self.is_keyword(kw) {
            Ok(self.bump())
        } else {
            let quoted = format!("`{kw}`");
            self.error(&[quoted.as_str()])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_reserved(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        let start = self.expect_keyword("fn")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let pname = self.ident()?;
                let ty = if self.eat_punct(":") {
                    Some(self.ident()?)
                } else {
                    None
                };
                params.push(Param { name: pname, ty });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let (body, end_line) = self.block()?;
        let mut f = FunctionDef {
            name,
            params,
            body,
            span: Span {
                line: start.line,
                col: start.col,
                end_line,
                id: 0,
            },
        };
        f.number_statements();
        Ok(f)
    }

    /// Parses `{ stmt* }`, returning the statements and the line of `}`.
    fn block(&mut self) -> PResult<(Vec<Stmt>, u32)> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error(&["`}`"]);
            }
            stmts.push(self.stmt()?);
        }
        let close = self.bump();
        Ok((stmts, close.line))
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.peek().clone();
        let span = |end_line: u32| Span {
            line: start.line,
            col: start.col,
            end_line,
            id: 0,
        };
        if self.is_keyword("for") {
            self.bump();
            self.expect_punct("(")?;
            let var = self.ident()?;
            self.expect_punct(":")?;
            let source = if self.is_keyword("query") && matches!(self.peek_at(1), Tok::Punct("{")) {
                self.bump();
                self.expect_punct("{")?;
                let q = self.query()?;
                self.expect_punct("}")?;
                Some(q)
            } else {
                None
            };
            let coll = match source {
                Some(_) => None,
                None => Some(self.expr()?),
            };
            self.expect_punct(")")?;
            let (body, end) = self.block()?;
            let kind = match (source, coll) {
                (Some(query), _) => StmtKind::QueryLoop { var, query, body },
                (None, Some(coll)) => StmtKind::CollLoop { var, coll, body },
                _ => unreachable!(),
            };
            return Ok(Stmt {
                kind,
                span: span(end),
            });
        }
        if self.is_keyword("while") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let (body, end) = self.block()?;
            return Ok(Stmt {
                kind: StmtKind::While { cond, body },
                span: span(end),
            });
        }
        if self.is_keyword("if") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let (then_body, mut end) = self.block()?;
            let else_body = if self.is_keyword("else") {
                self.bump();
                if self.is_keyword("if") {
                    let nested = self.stmt()?;
                    end = nested.span.end_line;
                    vec![nested]
                } else {
                    let (b, e) = self.block()?;
                    end = e;
                    b
                }
            } else {
                Vec::new()
            };
            return Ok(Stmt {
                kind: StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                },
                span: span(end),
            });
        }
        if self.is_keyword("return") {
            self.bump();
            let e = self.expr()?;
            let semi = self.expect_punct(";")?;
            return Ok(Stmt {
                kind: StmtKind::Return(e),
                span: span(semi.line),
            });
        }
        let name = match &self.peek().tok {
            Tok::Ident(s) if !is_reserved(s) => s.clone(),
            _ => return self.error(&["statement"]),
        };
        self.bump();
        let kind = if self.eat_punct("=") {
            if self.is_keyword("executeQuery") && matches!(self.peek_at(1), Tok::Punct("(")) {
                self.bump();
                self.expect_punct("(")?;
                let query = self.query()?;
                self.expect_punct(")")?;
                StmtKind::ExecQuery {
                    target: name,
                    query,
                }
            } else if self.is_keyword("lookupCache") && matches!(self.peek_at(1), Tok::Punct("(")) {
                self.bump();
                self.expect_punct("(")?;
                let relation = self.ident()?;
                self.expect_punct(",")?;
                let column = self.ident()?;
                self.expect_punct(",")?;
                let key = self.expr()?;
                self.expect_punct(")")?;
                StmtKind::CacheLookup {
                    target: name,
                    relation,
                    column,
                    key,
                }
            } else {
                StmtKind::Assign {
                    target: name,
                    value: self.expr()?,
                }
            }
        } else if self.eat_punct(".") {
            let method = self.ident()?;
            let args = self.args()?;
            StmtKind::Call {
                receiver: Some(name),
                method,
                args,
            }
        } else if self.is_punct("(") {
            if name == "cacheByColumn" {
                self.bump();
                let relation = self.ident()?;
                self.expect_punct(",")?;
                let column = self.ident()?;
                self.expect_punct(")")?;
                StmtKind::Prefetch { relation, column }
            } else {
                let args = self.args()?;
                StmtKind::Call {
                    receiver: None,
                    method: name,
                    args,
                }
            }
        } else {
            return self.error(&["`=`", "`.`", "`(`"]);
        };
        let semi = self.expect_punct(";")?;
        Ok(Stmt {
            kind,
            span: span(semi.line),
        })
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = match &self.peek().tok {
            Tok::Punct(p) => binop_of(p).filter(|op| op.precedence() >= min_prec),
            _ => None,
        } {
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.eat_punct("-") {
            return Ok(match self.unary()? {
                Expr::Int(i) => Expr::Int(-i),
                Expr::Float(f) => Expr::Float(OrderedFloat(-f.0)),
                other => Expr::Unary(UnOp::Neg, Box::new(other)),
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_punct(".") {
            let name = self.ident()?;
            e = Expr::field(e, name);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Int(i))
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Float(OrderedFloat(f)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::Ident(ref s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(ref s) if !is_reserved(s) => {
                let name = s.clone();
                self.bump();
                if self.is_punct("(") {
                    let args = self.args()?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => self.error(&["expression"]),
        }
    }

    fn query(&mut self) -> PResult<QueryExpr> {
        let op = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return self.error(&["query operator"]),
        };
        let q = match op.as_str() {
            "scan" => {
                self.bump();
                self.expect_punct("(")?;
                let r = self.ident()?;
                self.expect_punct(")")?;
                QueryExpr::Scan(r)
            }
            "select" => {
                self.bump();
                self.expect_punct("(")?;
                let pred = self.expr()?;
                self.expect_punct(",")?;
                let input = self.query()?;
                self.expect_punct(")")?;
                QueryExpr::select(pred, input)
            }
            "project" => {
                self.bump();
                self.expect_punct("(")?;
                self.expect_punct("[")?;
                let mut items = Vec::new();
                loop {
                    let expr = self.expr()?;
                    let alias = if self.is_keyword("as") {
                        self.bump();
                        Some(self.ident()?)
                    } else {
                        None
                    };
                    if alias.is_none() && !matches!(expr, Expr::Var(_)) {
                        return self.error(&["`as`"]);
                    }
                    items.push(ProjItem { expr, alias });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("]")?;
                self.expect_punct(",")?;
                let input = self.query()?;
                self.expect_punct(")")?;
                QueryExpr::Project(items, Box::new(input))
            }
            "join" => {
                self.bump();
                self.expect_punct("(")?;
                let pred = self.expr()?;
                self.expect_punct(",")?;
                let l = self.query()?;
                self.expect_punct(",")?;
                let r = self.query()?;
                self.expect_punct(")")?;
                QueryExpr::join(pred, l, r)
            }
            "aggregate" => {
                self.bump();
                self.expect_punct("(")?;
                let fname = self.ident()?;
                let func = match AggFn::from_name(&fname) {
                    Some(f) => f,
                    None => {
                        self.pos -= 1;
                        return self.error(&["`sum`", "`count`", "`max`", "`min`"]);
                    }
                };
                self.expect_punct(",")?;
                let column = if self.eat_punct("*") {
                    "*".to_string()
                } else {
                    self.ident()?
                };
                self.expect_punct(",")?;
                let group_by = if matches!(self.peek_at(1), Tok::Punct(",")) {
                    let g = self.ident()?;
                    self.expect_punct(",")?;
                    Some(g)
                } else {
                    None
                };
                let input = self.query()?;
                self.expect_punct(")")?;
                QueryExpr::Aggregate {
                    func,
                    column,
                    group_by,
                    input: Box::new(input),
                }
            }
            "orderby" => {
                self.bump();
                self.expect_punct("(")?;
                let col = self.ident()?;
                self.expect_punct(",")?;
                let input = self.query()?;
                self.expect_punct(")")?;
                QueryExpr::OrderBy(col, Box::new(input))
            }
            _ => {
                return self.error(&[
                    "`scan`",
                    "`select`",
                    "`project`",
                    "`join`",
                    "`aggregate`",
                    "`orderby`",
                ])
            }
        };
        Ok(q)
    }
}

fn binop_of(p: &str) -> Option<BinOp> {
    Some(match p {
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "/" => BinOp::Div,
        "%" => BinOp::Mod,
        "==" => BinOp::Eq,
        "!=" => BinOp::Ne,
        "<" => BinOp::Lt,
        "<=" => BinOp::Le,
        ">" => BinOp::Gt,
        ">=" => BinOp::Ge,
        "&&" => BinOp::And,
        "||" => BinOp::Or,
        _ => return None,
    })
}

pub(crate) fn is_reserved(word: &str) -> bool {
    matches!(
        word,
        "fn" | "for" | "while" | "if" | "else" | "return" | "true" | "false"
    )
}
