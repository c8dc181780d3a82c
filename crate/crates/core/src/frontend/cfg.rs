//! Three-address lowering and control-flow graph construction.
//!
//! Block 0 is the empty entry node and block 1 the empty exit node. A block
//! that ends in a two-way jump lists its true successor first.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::ast::*;
use super::printer::{print_expr, print_query};
use super::query::QueryExpr;

/// What a loop header iterates over.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IterSource {
    Query(QueryExpr),
    /// An atom naming the collection.
    Coll(Expr),
}

/// Operands are atoms (variables or literals); `Assign::rvalue` holds at most
/// one operator.
#[derive(Clone, Debug, PartialEq)]
pub enum TacKind {
    Assign {
        dst: String,
        rvalue: Expr,
    },
    CallStmt {
        receiver: Option<String>,
        method: String,
        args: Vec<Expr>,
    },
    ExecQuery {
        dst: String,
        query: QueryExpr,
    },
    Prefetch {
        relation: String,
        column: String,
    },
    CacheLookup {
        dst: String,
        relation: String,
        column: String,
        key: Expr,
    },
    /// Two-way jump on `cond`. `source` is the source condition this jump
    /// tests; `partial` marks one link of a decomposed `&&`/`||` chain.
    Branch {
        cond: Expr,
        source: Expr,
        partial: bool,
    },
    /// Binds `var` to the next element, or leaves the loop.
    IterNext {
        var: String,
        source: IterSource,
    },
    Return(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tac {
    pub kind: TacKind,
    /// Id of the source statement this instruction was lowered from.
    pub stmt: usize,
}

impl Tac {
    /// Variables read.
    pub fn uses(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.kind {
            TacKind::Assign { rvalue, .. } => rvalue.vars(&mut out),
            TacKind::CallStmt { receiver, args, .. } => {
                out.extend(receiver.iter().cloned());
                args.iter().for_each(|a| a.vars(&mut out));
            }
            TacKind::ExecQuery { query, .. } => out = query.outer_vars(),
            TacKind::Prefetch { .. } => {}
            TacKind::CacheLookup { key, .. } => key.vars(&mut out),
            TacKind::Branch { cond, .. } => cond.vars(&mut out),
            TacKind::IterNext { source, .. } => match source {
                IterSource::Query(q) => out = q.outer_vars(),
                IterSource::Coll(e) => e.vars(&mut out),
            },
            TacKind::Return(e) => e.vars(&mut out),
        }
        out
    }

    /// Variable written, if any. A method call writes its receiver.
    pub fn def(&self) -> Option<&str> {
        match &self.kind {
            TacKind::Assign { dst, .. }
            | TacKind::ExecQuery { dst, .. }
            | TacKind::CacheLookup { dst, .. } => Some(dst),
            TacKind::CallStmt {
                receiver: Some(r), ..
            } => Some(r),
            TacKind::IterNext { var, .. } => Some(var),
            _ => None,
        }
    }

    /// Whether the def fully overwrites the previous value.
    pub fn kills(&self) -> bool {
        !matches!(self.kind, TacKind::CallStmt { .. })
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self.kind,
            TacKind::Branch { .. } | TacKind::IterNext { .. } | TacKind::Return(_)
        )
    }
}

impl fmt::Display for Tac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |args: &[Expr]| args.iter().map(print_expr).collect::<Vec<_>>().join(", ");
        match &self.kind {
            TacKind::Assign { dst, rvalue } => write!(f, "{dst} = {}", print_expr(rvalue)),
            TacKind::CallStmt {
                receiver: Some(r),
                method,
                args,
            } => write!(f, "{r}.{method}({})", list(args)),
            TacKind::CallStmt { method, args, .. } => write!(f, "{method}({})", list(args)),
            TacKind::ExecQuery { dst, query } => {
                write!(f, "{dst} = executeQuery({})", print_query(query))
            }
            TacKind::Prefetch { relation, column } => write!(f, "cacheByColumn({relation}, {column})"),
            TacKind::CacheLookup {
                dst,
                relation,
                column,
                key,
            } => write!(f, "{dst} = lookupCache({relation}, {column}, {})", print_expr(key)),
            TacKind::Branch { cond, .. } => write!(f, "branch {}", print_expr(cond)),
            TacKind::IterNext { var, source } => match source {
                IterSource::Query(q) => write!(f, "{var} = next query {{ {} }}", print_query(q)),
                IterSource::Coll(e) => write!(f, "{var} = next {}", print_expr(e)),
            },
            TacKind::Return(e) => write!(f, "return {}", print_expr(e)),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Block {
    pub tac: Vec<Tac>,
    pub succs: Vec<usize>,
    pub preds: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    pub entry: usize,
    pub exit: usize,
    pub params: Vec<String>,
    /// Number of instructions emitted by lowering.
    pub lowered: usize,
    /// Source line range of every statement id.
    pub stmt_lines: HashMap<usize, (u32, u32)>,
}

pub fn is_temp(name: &str) -> bool {
    name.starts_with("_t") && name[2..].chars().all(|c| c.is_ascii_digit()) && name.len() > 2
}

/// Smallest `n` such that no variable `_tk` with `k >= n` occurs in `f`.
pub fn first_free_temp(f: &FunctionDef) -> usize {
    let mut names: Vec<String> = f.params.iter().map(|p| p.name.clone()).collect();
    for s in f.statements() {
        names.extend(s.written_var().map(str::to_string));
        match &s.kind {
            StmtKind::Assign { value: e, .. }
            | StmtKind::CollLoop { coll: e, .. }
            | StmtKind::While { cond: e, .. }
            | StmtKind::If { cond: e, .. }
            | StmtKind::Return(e)
            | StmtKind::CacheLookup { key: e, .. } => e.vars(&mut names),
            StmtKind::Call { args, .. } => args.iter().for_each(|a| a.vars(&mut names)),
            StmtKind::QueryLoop { query, .. } | StmtKind::ExecQuery { query, .. } => {
                names.extend(query.outer_vars())
            }
            StmtKind::Prefetch { .. } => {}
        }
        if let StmtKind::QueryLoop { var, .. } | StmtKind::CollLoop { var, .. } = &s.kind {
            names.push(var.clone());
        }
    }
    names
        .iter()
        .filter(|n| is_temp(n))
        .filter_map(|n| n[2..].parse::<usize>().ok())
        .map(|k| k + 1)
        .max()
        .unwrap_or(0)
}

pub fn build_cfg(f: &FunctionDef) -> Cfg {
    let mut b = Builder {
        blocks: vec![Block::default(), Block::default()],
        cur: 0,
        temps: first_free_temp(f),
        lowered: 0,
        stmt: 0,
    };
    let first = b.new_block();
    b.edge(0, first);
    b.cur = first;
    b.lower_stmts(&f.body);
    let last = b.cur;
    b.edge(last, 1);
    let mut stmt_lines = HashMap::new();
    for s in f.statements() {
        stmt_lines.insert(s.span.id, (s.span.line, s.span.end_line));
    }
    let mut cfg = Cfg {
        blocks: b.blocks,
        entry: 0,
        exit: 1,
        params: f.params.iter().map(|p| p.name.clone()).collect(),
        lowered: b.lowered,
        stmt_lines,
    };
    cfg.cleanup();
    cfg
}

struct Builder {
    blocks: Vec<Block>,
    cur: usize,
    temps: usize,
    lowered: usize,
    stmt: usize,
}

impl Builder {
    fn new_block(&mut self) -> usize {
        self.blocks.push(Block::default());
        self.blocks.len() - 1
    }

    fn edge(&mut self, from: usize, to: usize) {
        self.blocks[from].succs.push(to);
    }

    fn emit(&mut self, kind: TacKind) {
        self.lowered += 1;
        let stmt = self.stmt;
        self.blocks[self.cur].tac.push(Tac { kind, stmt });
    }

    fn fresh(&mut self) -> String {
        let t = format!("_t{}", self.temps);
        self.temps += 1;
        t
    }

    /// Reduces `e` to an atom, emitting temporaries for its operators.
    fn atom(&mut self, e: &Expr) -> Expr {
        match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) | Expr::Var(_) => e.clone(),
            _ => {
                let rvalue = self.single_op(e);
                let dst = self.fresh();
                self.emit(TacKind::Assign {
                    dst: dst.clone(),
                    rvalue,
                });
                Expr::Var(dst)
            }
        }
    }

    /// Rewrites `e` so that its operands are atoms.
    fn single_op(&mut self, e: &Expr) -> Expr {
        match e {
            Expr::Field(base, name) => Expr::field(self.atom(base), name.clone()),
            Expr::Binary(op, l, r) => {
                let l = self.atom(l);
                let r = self.atom(r);
                Expr::binary(*op, l, r)
            }
            Expr::Unary(op, x) => Expr::Unary(*op, Box::new(self.atom(x))),
            Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(|a| self.atom(a)).collect()),
            atom => atom.clone(),
        }
    }

    fn lower_stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.lower_stmt(s);
        }
    }

    fn start_header(&mut self) -> usize {
        let h = self.new_block();
        let cur = self.cur;
        self.edge(cur, h);
        self.cur = h;
        h
    }

    fn lower_stmt(&mut self, s: &Stmt) {
        self.stmt = s.span.id;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let rvalue = self.single_op(value);
                self.emit(TacKind::Assign {
                    dst: target.clone(),
                    rvalue,
                });
            }
            StmtKind::Call {
                receiver,
                method,
                args,
            } => {
                let args = args.iter().map(|a| self.atom(a)).collect();
                self.emit(TacKind::CallStmt {
                    receiver: receiver.clone(),
                    method: method.clone(),
                    args,
                });
            }
            StmtKind::Return(e) => {
                let a = self.atom(e);
                self.emit(TacKind::Return(a));
                let cur = self.cur;
                self.edge(cur, 1);
                self.cur = self.new_block();
            }
            StmtKind::ExecQuery { target, query } => self.emit(TacKind::ExecQuery {
                dst: target.clone(),
                query: query.clone(),
            }),
            StmtKind::Prefetch { relation, column } => self.emit(TacKind::Prefetch {
                relation: relation.clone(),
                column: column.clone(),
            }),
            StmtKind::CacheLookup {
                target,
                relation,
                column,
                key,
            } => {
                let key = self.atom(key);
                self.emit(TacKind::CacheLookup {
                    dst: target.clone(),
                    relation: relation.clone(),
                    column: column.clone(),
                    key,
                });
            }
            StmtKind::QueryLoop { var, query, body } => {
                self.lower_loop(var, IterSource::Query(query.clone()), body);
            }
            StmtKind::CollLoop { var, coll, body } => {
                let h = self.start_header();
                let a = self.atom(coll);
                self.cur = h;
                self.lower_loop_from_header(h, var, IterSource::Coll(a), body);
            }
            StmtKind::While { cond, body } => {
                let h = self.start_header();
                let body_b = self.new_block();
                let after = self.new_block();
                self.lower_cond(cond, body_b, after, is_short_circuit(cond));
                self.cur = body_b;
                self.lower_stmts(body);
                let cur = self.cur;
                self.edge(cur, h);
                self.cur = after;
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.start_header();
                let then_b = self.new_block();
                let else_b = self.new_block();
                let join = self.new_block();
                self.lower_cond(cond, then_b, else_b, is_short_circuit(cond));
                self.cur = then_b;
                self.lower_stmts(then_body);
                let cur = self.cur;
                self.edge(cur, join);
                self.cur = else_b;
                self.lower_stmts(else_body);
                let cur = self.cur;
                self.edge(cur, join);
                self.cur = join;
            }
        }
    }

    fn lower_loop(&mut self, var: &str, source: IterSource, body: &[Stmt]) {
        let h = self.start_header();
        self.lower_loop_from_header(h, var, source, body);
    }

    fn lower_loop_from_header(&mut self, h: usize, var: &str, source: IterSource, body: &[Stmt]) {
        let stmt = self.stmt;
        self.emit(TacKind::IterNext {
            var: var.to_string(),
            source,
        });
        let body_b = self.new_block();
        let after = self.new_block();
        self.edge(h, body_b);
        self.edge(h, after);
        self.cur = body_b;
        self.lower_stmts(body);
        let cur = self.cur;
        self.edge(cur, h);
        self.stmt = stmt;
        self.cur = after;
    }

    fn lower_cond(&mut self, e: &Expr, t: usize, f: usize, decomposed: bool) {
        let stmt = self.stmt;
        match e {
            Expr::Binary(BinOp::And, l, r) => {
                let rb = self.new_block();
                self.lower_cond(l, rb, f, decomposed);
                self.cur = rb;
                self.stmt = stmt;
                self.lower_cond(r, t, f, decomposed);
            }
            Expr::Binary(BinOp::Or, l, r) => {
                let rb = self.new_block();
                self.lower_cond(l, t, rb, decomposed);
                self.cur = rb;
                self.stmt = stmt;
                self.lower_cond(r, t, f, decomposed);
            }
            _ => {
                let cond = self.atom(e);
                self.emit(TacKind::Branch {
                    cond,
                    source: e.clone(),
                    partial: decomposed,
                });
                let cur = self.cur;
                self.edge(cur, t);
                self.edge(cur, f);
            }
        }
    }
}

fn is_short_circuit(e: &Expr) -> bool {
    matches!(e, Expr::Binary(BinOp::And | BinOp::Or, _, _))
}

impl Cfg {
    /// Drops unreachable blocks, bypasses empty interior blocks and renumbers.
    fn cleanup(&mut self) {
        loop {
            let reach = self.reachable();
            let victim = (2..self.blocks.len()).find(|&b| {
                reach.contains(&b) && self.blocks[b].tac.is_empty() && self.blocks[b].succs.len() == 1
                    && self.blocks[b].succs[0] != b
            });
            let Some(v) = victim else { break };
            let target = self.blocks[v].succs[0];
            for blk in &mut self.blocks {
                for s in &mut blk.succs {
                    if *s == v {
                        *s = target;
                    }
                }
            }
            self.blocks[v].succs.clear();
        }
        let reach = self.reachable();
        let mut remap = HashMap::new();
        let mut kept = Vec::new();
        for (i, blk) in self.blocks.iter().enumerate() {
            if i < 2 || reach.contains(&i) {
                remap.insert(i, kept.len());
                kept.push(blk.clone());
            }
        }
        for blk in &mut kept {
            blk.succs = blk.succs.iter().map(|s| remap[s]).collect();
            blk.preds.clear();
        }
        for i in 0..kept.len() {
            for s in kept[i].succs.clone() {
                kept[s].preds.push(i);
            }
        }
        self.blocks = kept;
    }

    fn reachable(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry];
        while let Some(b) = stack.pop() {
            if seen.insert(b) {
                stack.extend(self.blocks[b].succs.iter().copied());
            }
        }
        seen
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.tac.len()).sum()
    }

    /// Checks graph well-formedness, returning a description of each violation.
    pub fn audit(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !self.blocks[self.entry].tac.is_empty() || !self.blocks[self.exit].tac.is_empty() {
            errs.push("entry or exit block is not empty".into());
        }
        if !self.blocks[self.entry].preds.is_empty() {
            errs.push("entry has predecessors".into());
        }
        if !self.blocks[self.exit].succs.is_empty() {
            errs.push("exit has successors".into());
        }
        let reach = self.reachable();
        for i in 0..self.blocks.len() {
            if !reach.contains(&i) {
                errs.push(format!("block {i} unreachable from entry"));
            }
        }
        let mut back = BTreeSet::new();
        let mut stack = vec![self.exit];
        while let Some(b) = stack.pop() {
            if back.insert(b) {
                stack.extend(self.blocks[b].preds.iter().copied());
            }
        }
        for i in 0..self.blocks.len() {
            if !back.contains(&i) {
                errs.push(format!("exit unreachable from block {i}"));
            }
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            let two_way = blk.tac.last().map(|t| !matches!(t.kind, TacKind::Return(_)) && t.is_terminator());
            let want = match (i == self.exit, two_way) {
                (true, _) => 0,
                (false, Some(true)) => 2,
                _ => 1,
            };
            if blk.succs.len() != want {
                errs.push(format!("block {i} has {} successors, expected {want}", blk.succs.len()));
            }
            if blk.tac.iter().rev().skip(1).any(Tac::is_terminator) {
                errs.push(format!("block {i} has a jump before its last instruction"));
            }
        }
        if self.instruction_count() != self.lowered {
            errs.push(format!(
                "{} instructions in blocks, {} lowered",
                self.instruction_count(),
                self.lowered
            ));
        }
        errs
    }

    /// Per-instruction liveness. Returns the live-in set of every
    /// instruction, keyed by (block, index); `(b, len)` is the block's live-out.
    pub fn liveness(&self, exit_live: &BTreeSet<String>) -> HashMap<(usize, usize), BTreeSet<String>> {
        let n = self.blocks.len();
        let mut live_in: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
        live_in[self.exit] = exit_live.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for b in (0..n).rev() {
                if b == self.exit {
                    continue;
                }
                let mut live = self.live_out(b, &live_in);
                for t in self.blocks[b].tac.iter().rev() {
                    transfer(t, &mut live);
                }
                if live != live_in[b] {
                    live_in[b] = live;
                    changed = true;
                }
            }
        }
        let mut out = HashMap::new();
        for b in 0..n {
            let mut live = if b == self.exit {
                exit_live.clone()
            } else {
                self.live_out(b, &live_in)
            };
            let len = self.blocks[b].tac.len();
            out.insert((b, len), live.clone());
            for (i, t) in self.blocks[b].tac.iter().enumerate().rev() {
                transfer(t, &mut live);
                out.insert((b, i), live.clone());
            }
        }
        out
    }

    fn live_out(&self, b: usize, live_in: &[BTreeSet<String>]) -> BTreeSet<String> {
        let mut live = BTreeSet::new();
        for &s in &self.blocks[b].succs {
            live.extend(live_in[s].iter().cloned());
        }
        live
    }

    /// Variables that hold results at function exit: parameters and returned values.
    pub fn exit_live(&self) -> BTreeSet<String> {
        let mut live: BTreeSet<String> = self.params.iter().cloned().collect();
        for b in &self.blocks {
            for t in &b.tac {
                if let TacKind::Return(e) = &t.kind {
                    let mut vs = Vec::new();
                    e.vars(&mut vs);
                    live.extend(vs.into_iter().filter(|v| !is_temp(v)));
                }
            }
        }
        live
    }
}

fn transfer(t: &Tac, live: &mut BTreeSet<String>) {
    if let Some(d) = t.def() {
        if t.kills() {
            live.remove(d);
        }
    }
    live.extend(t.uses());
}
impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            let name = match i {
                0 => " (entry)",
                1 => " (exit)",
                _ => "",
            };
            writeln!(f, "block {i}{name} -> {:?}", b.succs)?;
            for t in &b.tac {
                writeln!(f, "    {t}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn cfg_of(src: &str) -> Cfg {
        let p = parse(src).unwrap();
        build_cfg(&p.functions[0])
    }

    #[test]
    fn straight_line_is_one_block() {
        let cfg = cfg_of("fn f(){ a = 1; b = a + 2; c = b * a; }");
        assert_eq!(cfg.blocks.len(), 3);
        assert_eq!(cfg.blocks[2].tac.len(), 3);
        assert!(cfg.audit().is_empty(), "{:?}", cfg.audit());
    }

    #[test]
    fn temporaries_are_numbered_left_to_right() {
        let cfg = cfg_of("fn f(o, c){ v = g(o.a, c.b); }");
        let text: Vec<String> = cfg.blocks[2].tac.iter().map(|t| t.to_string()).collect();
        assert_eq!(text, vec!["_t0 = o.a", "_t1 = c.b", "v = g(_t0, _t1)"]);
    }

    #[test]
    fn conjunction_becomes_two_predicate_blocks() {
        let cfg = cfg_of("fn f(a, b){ x = 0; if (a && b) { x = 1; } y = x; }");
        let preds: Vec<usize> = (0..cfg.blocks.len())
            .filter(|&i| matches!(cfg.blocks[i].tac.last().map(|t| &t.kind), Some(TacKind::Branch { .. })))
            .collect();
        assert_eq!(preds.len(), 2);
        let (p1, p2) = (preds[0], preds[1]);
        assert_eq!(cfg.blocks[p1].succs[0], p2);
        let join = cfg.blocks[p1].succs[1];
        assert_eq!(cfg.blocks[p2].succs[1], join);
        assert!(cfg.audit().is_empty(), "{:?}", cfg.audit());
    }

    #[test]
    fn unknown_temp_names_are_not_temps() {
        assert!(is_temp("_t12"));
        assert!(!is_temp("_t"));
        assert!(!is_temp("_tx"));
        assert!(!is_temp("t1"));
    }
}
