//! Big-step interpretation of CobraLang functions.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use thiserror::Error;

use super::query::{compare, eval_query};
use super::{Database, Row, Value};
use crate::frontend::ast::{is_builtin, BinOp, Expr, FunctionDef, Program, Stmt, StmtKind, UnOp};
use crate::frontend::query::{outer_refs, QueryExpr};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}{message}", position.map(|(l, c)| format!("{l}:{c}: ")).unwrap_or_default())]
pub struct RuntimeError {
    pub message: String,
    pub position: Option<(u32, u32)>,
}

impl RuntimeError {
    pub fn new(message: impl Into<String>) -> RuntimeError {
        RuntimeError {
            message: message.into(),
            position: None,
        }
    }
}

/// Work done by one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    /// Database requests: distinct bound queries and prefetches.
    pub queries: usize,
    /// Rows shipped by those requests.
    pub rows: usize,
    /// Arithmetic, comparison and function evaluations.
    pub operations: usize,
}

/// Observable result of a run: final parameter values, the returned value
/// and everything printed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputState {
    pub vars: BTreeMap<String, Value>,
    pub returned: Option<Value>,
    pub printed: Vec<Value>,
    pub counters: Counters,
}

impl OutputState {
    /// Equality of everything but the counters.
    pub fn same_result(&self, other: &OutputState) -> bool {
        self.vars == other.vars && self.returned == other.returned && self.printed == other.printed
    }
}

const STEP_LIMIT: usize = 50_000_000;

/// Runs `entry` with every parameter bound to null.
pub fn run(program: &Program, entry: &str, db: &Database) -> Result<OutputState, RuntimeError> {
    run_with(program, entry, db, &BTreeMap::new())
}

pub fn run_with(
    program: &Program,
    entry: &str,
    db: &Database,
    args: &BTreeMap<String, Value>,
) -> Result<OutputState, RuntimeError> {
    let f = program
        .function(entry)
        .ok_or_else(|| RuntimeError::new(format!("no function `{entry}`")))?;
    let mut m = Machine {
        db,
        vars: HashMap::new(),
        cache: HashMap::new(),
        prefetched: HashMap::new(),
        counters: Counters::default(),
        printed: Vec::new(),
        steps: 0,
    };
    for p in &f.params {
        m.vars.insert(p.name.clone(), args.get(&p.name).cloned().unwrap_or(Value::Null));
    }
    let returned = match m.block(&f.body)? {
        Flow::Return(v) => Some(v),
        Flow::Normal => None,
    };
    Ok(OutputState {
        vars: params_of(f)
            .map(|p| (p.clone(), m.vars.get(p).cloned().unwrap_or(Value::Null)))
            .collect(),
        returned,
        printed: m.printed,
        counters: m.counters,
    })
}

fn params_of(f: &FunctionDef) -> impl Iterator<Item = &String> {
    f.params.iter().map(|p| &p.name)
}

enum Flow {
    Normal,
    Return(Value),
}

struct Machine<'a> {
    db: &'a Database,
    vars: HashMap<String, Value>,
    /// Results of bound queries already sent in this run.
    cache: HashMap<(QueryExpr, Vec<Value>), Rc<Vec<Row>>>,
    /// `(relation, column)` → rows by key value.
    prefetched: HashMap<(String, String), HashMap<Value, Vec<Row>>>,
    counters: Counters,
    printed: Vec<Value>,
    steps: usize,
}

impl Machine<'_> {
    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, RuntimeError> {
        for s in stmts {
            self.steps += 1;
            if self.steps > STEP_LIMIT {
                return Err(RuntimeError::new("step limit exceeded"));
            }
            let flow = self.stmt(s).map_err(|mut e| {
                e.position.get_or_insert((s.span.line, s.span.col));
                e
            })?;
            if let Flow::Return(_) = flow {
                return Ok(flow);
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, RuntimeError> {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let v = self.expr(value)?;
                self.vars.insert(target.clone(), v);
            }
            StmtKind::ExecQuery { target, query } => {
                let rows = self.query(query)?;
                let v = if query.is_scalar_aggregate() {
                    rows.first().and_then(|r| r.first()).map(|c| c.1.clone()).unwrap_or(Value::Null)
                } else {
                    Value::rows(&rows)
                };
                self.vars.insert(target.clone(), v);
            }
            StmtKind::QueryLoop { var, query, body } => {
                let rows = self.query(query)?;
                for row in rows.iter() {
                    self.vars.insert(var.clone(), Value::Row(row.clone()));
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::CollLoop { var, coll, body } => {
                let items: Vec<Value> = match self.expr(coll)? {
                    Value::List(l) => l.as_ref().clone(),
                    Value::Map(m) => m.keys().cloned().collect(),
                    Value::Null => vec![],
                    other => return Err(RuntimeError::new(format!("cannot iterate over {other}"))),
                };
                for item in items {
                    self.vars.insert(var.clone(), item);
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::While { cond, body } => {
                while self.expr(cond)?.truthy() {
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                    self.steps += 1;
                    if self.steps > STEP_LIMIT {
                        return Err(RuntimeError::new("step limit exceeded"));
                    }
                }
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let branch = if self.expr(cond)?.truthy() { then_body } else { else_body };
                return self.block(branch);
            }
            StmtKind::Call {
                receiver: Some(r),
                method,
                args,
            } => {
                let args = args.iter().map(|a| self.expr(a)).collect::<Result<Vec<_>, _>>()?;
                let target = self
                    .vars
                    .get_mut(r)
                    .ok_or_else(|| RuntimeError::new(format!("undefined variable `{r}`")))?;
                mutate(target, method, args)?;
            }
            StmtKind::Call {
                receiver: None,
                method,
                args,
            } => {
                let args = args.iter().map(|a| self.expr(a)).collect::<Result<Vec<_>, _>>()?;
                if method == "print" {
                    self.printed.extend(args);
                } else {
                    self.call(method, args)?;
                }
            }
            StmtKind::Return(e) => return Ok(Flow::Return(self.expr(e)?)),
            StmtKind::Prefetch { relation, column } => {
                let key = (relation.clone(), column.clone());
                if !self.prefetched.contains_key(&key) {
                    let rows = self
                        .db
                        .scan(relation)
                        .ok_or_else(|| RuntimeError::new(format!("unknown relation `{relation}`")))?;
                    self.counters.queries += 1;
                    self.counters.rows += rows.len();
                    let mut index: HashMap<Value, Vec<Row>> = HashMap::new();
                    for row in rows {
                        let k = super::row_get(&row, column)
                            .cloned()
                            .ok_or_else(|| RuntimeError::new(format!("unknown column `{column}`")))?;
                        index.entry(k).or_default().push(row);
                    }
                    self.prefetched.insert(key, index);
                }
            }
            StmtKind::CacheLookup {
                target,
                relation,
                column,
                key,
            } => {
                let k = self.expr(key)?;
                let index = self
                    .prefetched
                    .get(&(relation.clone(), column.clone()))
                    .ok_or_else(|| RuntimeError::new(format!("`{relation}.{column}` was not prefetched")))?;
                let rows = index.get(&k).map(|r| r.as_slice()).unwrap_or(&[]);
                let v = Value::rows(rows);
                self.vars.insert(target.clone(), v);
            }
        }
        Ok(Flow::Normal)
    }

    /// Sends `q` unless the same bound query was sent before in this run.
    fn query(&mut self, q: &QueryExpr) -> Result<Rc<Vec<Row>>, RuntimeError> {
        let mut refs = Vec::new();
        for e in q.exprs() {
            outer_refs(e, &mut |v, c| refs.push((v.to_string(), c.to_string())));
        }
        let bound = refs
            .iter()
            .map(|(v, c)| self.outer(v, c))
            .collect::<Result<Vec<_>, _>>()?;
        let key = (q.canonical(), bound);
        if let Some(rows) = self.cache.get(&key) {
            return Ok(rows.clone());
        }
        let vars = &self.vars;
        let outer = |v: &str, c: &str| lookup_field(vars, v, c);
        let rows = Rc::new(eval_query(q, self.db, &outer)?);
        self.counters.queries += 1;
        self.counters.rows += rows.len();
        self.cache.insert(key, rows.clone());
        Ok(rows)
    }

    fn outer(&self, v: &str, c: &str) -> Result<Value, RuntimeError> {
        lookup_field(&self.vars, v, c)
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        self.counters.operations += 1;
        Ok(match apply_builtin(name, &args)? {
            Some(v) => v,
            // Opaque functions are modelled as deterministic and pure.
            None => {
                let mut items = vec![Value::str(name)];
                items.extend(args);
                Value::list(items)
            }
        })
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, RuntimeError> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Float(f) => Value::Float(*f),
            Expr::Str(s) => Value::str(s),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Var(x) => self
                .vars
                .get(x)
                .cloned()
                .ok_or_else(|| RuntimeError::new(format!("undefined variable `{x}`")))?,
            Expr::Field(base, c) => {
                let b = self.expr(base)?;
                b.field(c)
                    .ok_or_else(|| RuntimeError::new(format!("no field `{c}` in {b}")))?
            }
            Expr::Binary(BinOp::And, l, r) => {
                self.counters.operations += 1;
                Value::Bool(self.expr(l)?.truthy() && self.expr(r)?.truthy())
            }
            Expr::Binary(BinOp::Or, l, r) => {
                self.counters.operations += 1;
                Value::Bool(self.expr(l)?.truthy() || self.expr(r)?.truthy())
            }
            Expr::Binary(op, l, r) => {
                let (a, b) = (self.expr(l)?, self.expr(r)?);
                self.counters.operations += 1;
                apply_binary(*op, &a, &b)?
            }
            Expr::Unary(op, x) => {
                let a = self.expr(x)?;
                self.counters.operations += 1;
                apply_unary(*op, &a)?
            }
            Expr::Call(n, args) => {
                let vals = args.iter().map(|a| self.expr(a)).collect::<Result<Vec<_>, _>>()?;
                self.call(n, vals)?
            }
        })
    }
}

fn lookup_field(vars: &HashMap<String, Value>, v: &str, c: &str) -> Result<Value, RuntimeError> {
    let base = vars
        .get(v)
        .ok_or_else(|| RuntimeError::new(format!("undefined variable `{v}`")))?;
    base.field(c)
        .ok_or_else(|| RuntimeError::new(format!("no field `{c}` in {base}")))
}

fn mutate(target: &mut Value, method: &str, args: Vec<Value>) -> Result<(), RuntimeError> {
    match (target, method, args.as_slice()) {
        (Value::List(l), "add", [x]) => Rc::make_mut(l).push(x.clone()),
        (Value::Map(m), "put", [k, v]) => {
            Rc::make_mut(m).insert(k.clone(), v.clone());
        }
        (t, m, _) => return Err(RuntimeError::new(format!("no method `{m}` on {t}"))),
    }
    Ok(())
}

fn numeric(op: BinOp, a: f64, b: f64) -> Result<Value, RuntimeError> {
    Ok(Value::float(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Mod => a % b,
        _ => unreachable!("arithmetic operators only"),
    }))
}

pub fn apply_binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    use Value::*;
    if op.is_comparison() {
        let ord = compare(a, b);
        let numeric_eq = matches!((a.as_f64(), b.as_f64()), (Some(x), Some(y)) if x == y);
        return Ok(Bool(match op {
            BinOp::Eq => a == b || numeric_eq,
            BinOp::Ne => !(a == b || numeric_eq),
            BinOp::Lt => ord.is_lt(),
            BinOp::Le => ord.is_le(),
            BinOp::Gt => ord.is_gt(),
            BinOp::Ge => ord.is_ge(),
            _ => unreachable!(),
        }));
    }
    Ok(match (op, a, b) {
        (BinOp::And, _, _) => Bool(a.truthy() && b.truthy()),
        (BinOp::Or, _, _) => Bool(a.truthy() || b.truthy()),
        (_, Null, _) | (_, _, Null) => Null,
        (BinOp::Div | BinOp::Mod, Int(_), Int(0)) => return Err(RuntimeError::new("division by zero")),
        (BinOp::Add, Int(x), Int(y)) => Int(x.wrapping_add(*y)),
        (BinOp::Sub, Int(x), Int(y)) => Int(x.wrapping_sub(*y)),
        (BinOp::Mul, Int(x), Int(y)) => Int(x.wrapping_mul(*y)),
        (BinOp::Div, Int(x), Int(y)) => Int(x.wrapping_div(*y)),
        (BinOp::Mod, Int(x), Int(y)) => Int(x.wrapping_rem(*y)),
        (BinOp::Add, Str(x), Str(y)) => Value::str(&format!("{x}{y}")),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => numeric(op, x, y)?,
            _ => return Err(RuntimeError::new(format!("cannot apply `{}` to {a} and {b}", op.symbol()))),
        },
    })
}

pub fn apply_unary(op: UnOp, a: &Value) -> Result<Value, RuntimeError> {
    Ok(match (op, a) {
        (UnOp::Not, v) => Value::Bool(!v.truthy()),
        (UnOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
        (UnOp::Neg, Value::Float(f)) => Value::float(-f.0),
        (UnOp::Neg, Value::Null) => Value::Null,
        (UnOp::Neg, v) => return Err(RuntimeError::new(format!("cannot negate {v}"))),
    })
}

/// Builtin functions; `None` for names that are not builtins. `max` and
/// `min` ignore nulls.
pub fn apply_builtin(name: &str, args: &[Value]) -> Result<Option<Value>, RuntimeError> {
    if !is_builtin(name) {
        return Ok(None);
    }
    let bad = || RuntimeError::new(format!("bad arguments to `{name}`"));
    Ok(Some(match (name, args) {
        ("list", []) => Value::list(vec![]),
        ("map", []) => Value::Map(Rc::new(BTreeMap::new())),
        ("with_added", [Value::List(l), x]) => {
            let mut l = l.clone();
            Rc::make_mut(&mut l).push(x.clone());
            Value::List(l)
        }
        ("with_put", [Value::Map(m), k, v]) => {
            let mut m = m.clone();
            Rc::make_mut(&mut m).insert(k.clone(), v.clone());
            Value::Map(m)
        }
        ("len", [Value::List(l)]) => Value::Int(l.len() as i64),
        ("len", [Value::Map(m)]) => Value::Int(m.len() as i64),
        ("len", [Value::Str(s)]) => Value::Int(s.chars().count() as i64),
        ("max" | "min", [a, Value::Null]) => a.clone(),
        ("max" | "min", [Value::Null, b]) => b.clone(),
        ("max", [a, b]) => if compare(a, b).is_lt() { b.clone() } else { a.clone() },
        ("min", [a, b]) => if compare(b, a).is_lt() { b.clone() } else { a.clone() },
        ("get", [Value::Map(m), k]) => m.get(k).cloned().unwrap_or(Value::Null),
        ("get", [Value::List(l), Value::Int(i)]) => l.get(*i as usize).cloned().unwrap_or(Value::Null),
        ("contains", [Value::Map(m), k]) => Value::Bool(m.contains_key(k)),
        ("contains", [Value::List(l), x]) => Value::Bool(l.contains(x)),
        ("abs", [Value::Int(i)]) => Value::Int(i.wrapping_abs()),
        ("abs", [Value::Float(f)]) => Value::float(f.0.abs()),
        _ => return Err(bad()),
    }))
}
