//! The Region AND-OR DAG.
//!
//! OR nodes stand for computations (a region, or an F-IR value) and list
//! alternative AND nodes; AND nodes are operators over child OR nodes. AND
//! nodes are hash-consed on `(op, children)`, so an identical alternative is
//! never stored twice.

pub mod dot;
pub mod expand;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::frontend::ast::{BinOp, Expr, FunctionDef, Stmt, StmtKind, UnOp};
use crate::frontend::cfg::{Cfg, IterSource, TacKind};
use crate::frontend::printer::{print_expr, print_query};
use crate::frontend::query::QueryExpr;
use crate::regions::{live_boundary, Leaf, Region, RegionKind, RegionTree};

pub type OrId = usize;
pub type AndId = usize;

/// Operator of an AND node. Region operators come first, then F-IR operators.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    /// Children run in order.
    Seq,
    /// Children: `[predicate, then, else]`.
    Cond,
    /// Children: `[header, body]`.
    Loop,
    Stmt(Stmt),
    LoopHeader { var: String, source: IterSource },
    WhileHeader(Expr),
    Predicate(Expr),
    Skip,
    BlackBox(Vec<Stmt>),
    Prefetch { relation: String, column: String },

    /// `var = child`.
    FirAssign(String),
    /// Parallel assignment: every child is a `FirAssign` reading entry values.
    FirSeq,
    /// Children: `[acc, init, source]`. Inside `acc`, `Param(slots[i])` is the
    /// running value of slot `i` and `tuple_var` the current row.
    Fold { tuple_var: String, slots: Vec<String> },
    Tuple,
    Project(usize),
    /// Children: `[pred, then, else]`.
    Guard,
    Bin(BinOp),
    Unary(UnOp),
    Call(String),
    /// Column of the first row of a row-valued child.
    Field(String),
    /// Children: `[collection, element]`.
    Insert,
    /// Children: `[map, key, value]`.
    MapPut,
    /// A literal, `list()` or `map()`.
    Const(Expr),
    /// Value of a program variable when the enclosing computation starts.
    Var(String),
    /// Running accumulator slot of the nearest enclosing fold naming it.
    Param(String),
    TupleAttr(String, String),
    TupleVar(String),
    /// Fold source.
    Query(CanonQuery),
    ExecuteQuery(CanonQuery),
    /// Children: `[key]`. Rows of `relation` cached by `column` equal to key.
    Lookup { relation: String, column: String },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Seq => "seq",
            Op::Cond => "cond",
            Op::Loop => "loop",
            Op::Stmt(_) => "stmt",
            Op::LoopHeader { .. } => "header",
            Op::WhileHeader(_) => "while",
            Op::Predicate(_) => "pred",
            Op::Skip => "skip",
            Op::BlackBox(_) => "blackbox",
            Op::Prefetch { .. } => "prefetch",
            Op::FirAssign(_) => "assign",
            Op::FirSeq => "seq",
            Op::Fold { .. } => "fold",
            Op::Tuple => "tuple",
            Op::Project(_) => "project",
            Op::Guard => "?",
            Op::Bin(_) => "bin",
            Op::Unary(_) => "unary",
            Op::Call(_) => "call",
            Op::Field(_) => "field",
            Op::Insert => "insert",
            Op::MapPut => "map_put",
            Op::Const(_) => "const",
            Op::Var(_) => "var",
            Op::Param(_) => "param",
            Op::TupleAttr(..) => "attr",
            Op::TupleVar(_) => "tuple_var",
            Op::Query(_) => "query",
            Op::ExecuteQuery(_) => "executeQuery",
            Op::Lookup { .. } => "lookup",
        }
    }

    pub fn is_fir(&self) -> bool {
        !matches!(
            self,
            Op::Seq
                | Op::Cond
                | Op::Loop
                | Op::Stmt(_)
                | Op::LoopHeader { .. }
                | Op::WhileHeader(_)
                | Op::Predicate(_)
                | Op::Skip
                | Op::BlackBox(_)
                | Op::Prefetch { .. }
        )
    }

    /// Whether the operator issues a database request when evaluated.
    pub fn query_count(&self) -> usize {
        match self {
            Op::Stmt(s) => match &s.kind {
                StmtKind::ExecQuery { .. } | StmtKind::Prefetch { .. } => 1,
                _ => 0,
            },
            Op::BlackBox(stmts) => stmts_queries(stmts),
            Op::LoopHeader {
                source: IterSource::Query(_),
                ..
            }
            | Op::Prefetch { .. }
            | Op::Query(_)
            | Op::ExecuteQuery(_) => 1,
            _ => 0,
        }
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match self {
            Op::Stmt(s) => crate::frontend::printer::print_stmts(std::slice::from_ref(s), 0)
                .trim()
                .to_string(),
            Op::LoopHeader { var, source } => match source {
                IterSource::Query(q) => format!("for {var} : {}", print_query(q)),
                IterSource::Coll(e) => format!("for {var} : {}", print_expr(e)),
            },
            Op::WhileHeader(e) => format!("while {}", print_expr(e)),
            Op::Predicate(e) => format!("if {}", print_expr(e)),
            Op::BlackBox(stmts) => format!("blackbox[{}]", stmts.len()),
            Op::Prefetch { relation, column } => format!("prefetch {relation}.{column}"),
            Op::FirAssign(v) => format!("{v} ="),
            Op::Fold { tuple_var, slots } => format!("fold {tuple_var} [{}]", slots.join(", ")),
            Op::Project(i) => format!("project{i}"),
            Op::Bin(op) => op.symbol().to_string(),
            Op::Unary(UnOp::Not) => "!".into(),
            Op::Unary(UnOp::Neg) => "neg".into(),
            Op::Call(n) => format!("{n}()"),
            Op::Field(f) => format!(".{f}"),
            Op::Const(e) => print_expr(e),
            Op::Var(v) => v.clone(),
            Op::Param(v) => format!("<{v}>"),
            Op::TupleAttr(t, a) => format!("{t}.{a}"),
            Op::TupleVar(t) => t.clone(),
            Op::Query(q) => print_query(q),
            Op::ExecuteQuery(q) => format!("executeQuery {}", q.to_sql()),
            Op::Lookup { relation, column } => format!("lookup {relation}.{column}"),
            other => other.name().to_string(),
        }
    }
}

fn stmts_queries(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| {
            let own = match &s.kind {
                StmtKind::ExecQuery { .. } | StmtKind::Prefetch { .. } | StmtKind::QueryLoop { .. } => 1,
                _ => 0,
            };
            own + s.children().iter().map(|b| stmts_queries(b)).sum::<usize>()
        })
        .sum()
}

/// Query payload compared and hashed by canonical form, keeping the
/// operand order it was built with.
#[derive(Clone, Debug)]
pub struct CanonQuery {
    pub query: QueryExpr,
    canon: QueryExpr,
}

impl CanonQuery {
    pub fn new(query: QueryExpr) -> CanonQuery {
        let canon = query.canonical();
        CanonQuery { query, canon }
    }
}

impl PartialEq for CanonQuery {
    fn eq(&self, other: &Self) -> bool {
        self.canon == other.canon
    }
}

impl Eq for CanonQuery {}

impl std::hash::Hash for CanonQuery {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.canon.hash(state)
    }
}

impl std::ops::Deref for CanonQuery {
    type Target = QueryExpr;
    fn deref(&self) -> &QueryExpr {
        &self.query
    }
}

/// Description of an alternative: existing OR nodes at the leaves, new
/// operators above them.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AltTree {
    Or(OrId),
    And(Op, Vec<AltTree>),
}

impl AltTree {
    pub fn leaf(op: Op) -> AltTree {
        AltTree::And(op, vec![])
    }

    pub fn node(op: Op, children: Vec<AltTree>) -> AltTree {
        AltTree::And(op, children)
    }
}

#[derive(Clone, Debug)]
pub struct OrNode {
    pub id: OrId,
    pub label: String,
    pub alternatives: Vec<AndId>,
    /// Live variables at region entry and exit; empty for F-IR values.
    pub input: BTreeSet<String>,
    pub output: BTreeSet<String>,
    /// Variables whose only definition reaching a loop region is a literal.
    pub entry_constants: BTreeMap<String, Expr>,
    pub region: Option<RegionKind>,
}

#[derive(Clone, Debug)]
pub struct AndNode {
    pub id: AndId,
    pub op: Op,
    pub children: Vec<OrId>,
    /// OR node the alternative was first added to.
    pub or: OrId,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("adding the alternative would make OR {0} its own ancestor")]
    Cycle(OrId),
    #[error("unknown OR node {0}")]
    UnknownOr(OrId),
}

#[derive(Clone, Debug, Default)]
pub struct RegionDag {
    pub ors: Vec<OrNode>,
    pub ands: Vec<AndNode>,
    index: HashMap<(Op, Vec<OrId>), AndId>,
    pub root: OrId,
    /// AND nodes with smaller ids were built by `init_dag`.
    pub initial_ands: usize,
}

impl RegionDag {
    pub fn new() -> RegionDag {
        RegionDag::default()
    }

    pub fn or(&self, id: OrId) -> &OrNode {
        &self.ors[id]
    }

    pub fn and(&self, id: AndId) -> &AndNode {
        &self.ands[id]
    }

    pub fn is_initial(&self, and: AndId) -> bool {
        and < self.initial_ands
    }

    /// First alternative: the original computation for region nodes.
    pub fn first(&self, or: OrId) -> &AndNode {
        &self.ands[self.ors[or].alternatives[0]]
    }

    pub fn lookup(&self, op: &Op, children: &[OrId]) -> Option<AndId> {
        self.index.get(&(op.clone(), children.to_vec())).copied()
    }

    pub fn new_or(&mut self, label: impl Into<String>) -> OrId {
        let id = self.ors.len();
        self.ors.push(OrNode {
            id,
            label: label.into(),
            alternatives: vec![],
            input: BTreeSet::new(),
            output: BTreeSet::new(),
            entry_constants: BTreeMap::new(),
            region: None,
        });
        id
    }

    fn new_and(&mut self, or: OrId, op: Op, children: Vec<OrId>) -> AndId {
        let id = self.ands.len();
        self.index.insert((op.clone(), children.clone()), id);
        self.ands.push(AndNode {
            id,
            op,
            children,
            or,
        });
        self.ors[or].alternatives.push(id);
        id
    }

    /// OR node computing `tree`, reusing existing nodes where they match.
    pub fn intern(&mut self, tree: &AltTree) -> OrId {
        match tree {
            AltTree::Or(id) => *id,
            AltTree::And(op, children) => {
                let kids: Vec<OrId> = children.iter().map(|c| self.intern(c)).collect();
                if let Some(a) = self.lookup(op, &kids) {
                    return self.ands[a].or;
                }
                let label = format!("{}#{}", op.name(), self.ors.len());
                let or = self.new_or(label);
                self.new_and(or, op.clone(), kids);
                or
            }
        }
    }

    /// Adds `tree` as an alternative of `target`. Adding an alternative the
    /// node already has returns its id without change.
    pub fn add_alternative(&mut self, target: OrId, tree: &AltTree) -> Result<AndId, DagError> {
        if target >= self.ors.len() {
            return Err(DagError::UnknownOr(target));
        }
        let (op, children) = match tree {
            AltTree::Or(id) => {
                // Aliasing two OR nodes is expressed by sharing their alternatives.
                let alts = self.ors[*id].alternatives.clone();
                let mut last = Err(DagError::UnknownOr(*id));
                for a in alts {
                    let and = self.ands[a].clone();
                    let t = AltTree::And(
                        and.op,
                        and.children.into_iter().map(AltTree::Or).collect(),
                    );
                    last = self.add_alternative(target, &t);
                }
                return last;
            }
            AltTree::And(op, children) => (op, children),
        };
        let kids: Vec<OrId> = children.iter().map(|c| self.intern(c)).collect();
        if let Some(a) = self.lookup(op, &kids) {
            if !self.ors[target].alternatives.contains(&a) {
                if self.reaches_any(&kids, target) {
                    return Err(DagError::Cycle(target));
                }
                self.ors[target].alternatives.push(a);
            }
            return Ok(a);
        }
        if self.reaches_any(&kids, target) {
            return Err(DagError::Cycle(target));
        }
        Ok(self.new_and(target, op.clone(), kids))
    }

    fn reaches_any(&self, from: &[OrId], target: OrId) -> bool {
        let mut seen = HashSet::new();
        let mut stack: Vec<OrId> = from.to_vec();
        while let Some(o) = stack.pop() {
            if o == target {
                return true;
            }
            if !seen.insert(o) {
                continue;
            }
            for &a in &self.ors[o].alternatives {
                stack.extend(self.ands[a].children.iter().copied());
            }
        }
        false
    }

    /// OR nodes reachable from `or`, including itself.
    pub fn reachable(&self, or: OrId) -> BTreeSet<OrId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![or];
        while let Some(o) = stack.pop() {
            if seen.insert(o) {
                for &a in &self.ors[o].alternatives {
                    stack.extend(self.ands[a].children.iter().copied());
                }
            }
        }
        seen
    }

    /// OR nodes in child-before-parent order; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<OrId>> {
        let n = self.ors.len();
        let mut state = vec![0u8; n];
        let mut out = Vec::with_capacity(n);
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut stack: Vec<(OrId, usize)> = vec![(start, 0)];
            state[start] = 1;
            while let Some(&mut (o, ref mut next)) = stack.last_mut() {
                let kids: Vec<OrId> = self.ors[o]
                    .alternatives
                    .iter()
                    .flat_map(|a| self.ands[*a].children.iter().copied())
                    .collect();
                if *next < kids.len() {
                    let c = kids[*next];
                    *next += 1;
                    match state[c] {
                        0 => {
                            state[c] = 1;
                            stack.push((c, 0));
                        }
                        1 => return None,
                        _ => {}
                    }
                } else {
                    state[o] = 2;
                    out.push(o);
                    stack.pop();
                }
            }
        }
        Some(out)
    }

    /// Structural checks; returns a description of each violation.
    pub fn audit(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.topological_order().is_none() {
            errs.push("the DAG has a cycle".to_string());
        }
        let mut keys = HashSet::new();
        for a in &self.ands {
            if !keys.insert((a.op.clone(), a.children.clone())) {
                errs.push(format!("AND {} duplicates another node", a.id));
            }
            if !self.ors[a.or].alternatives.contains(&a.id) {
                errs.push(format!("AND {} missing from its OR {}", a.id, a.or));
            }
        }
        for o in &self.ors {
            if o.alternatives.is_empty() {
                errs.push(format!("OR {} has no alternative", o.id));
            }
        }
        errs
    }

    pub fn alternative_count(&self) -> usize {
        self.ors.iter().map(|o| o.alternatives.len()).sum()
    }

    /// Region OR node labelled `label`.
    pub fn find(&self, label: &str) -> Option<OrId> {
        self.ors.iter().find(|o| o.label == label).map(|o| o.id)
    }
}

impl fmt::Display for RegionDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.ors {
            writeln!(f, "OR {} {}", o.id, o.label)?;
            for &a in &o.alternatives {
                let and = &self.ands[a];
                let kids: Vec<String> = and.children.iter().map(|c| c.to_string()).collect();
                writeln!(f, "  AND {} {} -> [{}]", a, and.op.label(), kids.join(", "))?;
            }
        }
        Ok(())
    }
}

/// Builds the initial DAG: one OR per region and one AND per operator.
pub fn init_dag(f: &FunctionDef, cfg: &Cfg, tree: &RegionTree) -> RegionDag {
    let mut dag = RegionDag::new();
    let stmts: HashMap<usize, &Stmt> = f.statements().into_iter().map(|s| (s.span.id, s)).collect();
    let rd = ReachingDefs::compute(cfg);
    let root = build(&mut dag, &tree.root, &stmts, cfg, f, &rd);
    dag.root = root;
    dag.initial_ands = dag.ands.len();
    dag
}

fn build(
    dag: &mut RegionDag,
    r: &Region,
    stmts: &HashMap<usize, &Stmt>,
    cfg: &Cfg,
    f: &FunctionDef,
    rd: &ReachingDefs,
) -> OrId {
    let kids: Vec<OrId> = r
        .children
        .iter()
        .map(|c| build(dag, c, stmts, cfg, f, rd))
        .collect();
    let op = match (r.kind, &r.leaf) {
        (RegionKind::BasicBlock, Some(Leaf::Stmt(s))) => Op::Stmt(stmts[s].clone()),
        (RegionKind::BasicBlock, Some(Leaf::Header(s))) => match &stmts[s].kind {
            StmtKind::QueryLoop { var, query, .. } => Op::LoopHeader {
                var: var.clone(),
                source: IterSource::Query(query.clone()),
            },
            StmtKind::CollLoop { var, coll, .. } => Op::LoopHeader {
                var: var.clone(),
                source: IterSource::Coll(coll.clone()),
            },
            StmtKind::While { cond, .. } => Op::WhileHeader(cond.clone()),
            StmtKind::If { cond, .. } => Op::Predicate(cond.clone()),
            _ => unreachable!("headers are compound statements"),
        },
        (RegionKind::BasicBlock, _) => Op::Skip,
        (RegionKind::Sequential, _) => Op::Seq,
        (RegionKind::Conditional, _) => Op::Cond,
        (RegionKind::Loop, _) => Op::Loop,
        (RegionKind::BlackBox, _) => Op::BlackBox(r.stmts.iter().map(|s| stmts[s].clone()).collect()),
    };
    let (input, output) = live_boundary(r, cfg);
    let constants = if r.kind == RegionKind::Loop {
        rd.entry_constants(cfg, loop_blocks(cfg, r, f))
    } else {
        BTreeMap::new()
    };
    if let Some(a) = dag.lookup(&op, &kids) {
        let or = dag.ands[a].or;
        if dag.ors[or].entry_constants != constants {
            dag.ors[or].entry_constants.clear();
        }
        return or;
    }
    let or = dag.new_or(r.name.clone());
    dag.new_and(or, op, kids);
    let node = &mut dag.ors[or];
    node.input = input;
    node.output = output;
    node.entry_constants = constants;
    node.region = Some(r.kind);
    or
}


/// Blocks holding instructions of the loop statement (header and body).
fn loop_blocks(cfg: &Cfg, r: &Region, f: &FunctionDef) -> BTreeSet<usize> {
    let mut ids = BTreeSet::new();
    for s in &r.stmts {
        if let Some(stmt) = f.statement(*s) {
            fn collect(s: &Stmt, ids: &mut BTreeSet<usize>) {
                ids.insert(s.span.id);
                for b in s.children() {
                    for c in b {
                        collect(c, ids);
                    }
                }
            }
            collect(stmt, &mut ids);
        }
    }
    (0..cfg.blocks.len())
        .filter(|&b| cfg.blocks[b].tac.iter().any(|t| ids.contains(&t.stmt)))
        .collect()
}

/// Reaching definitions at block exits. A definition is `(var, constant)`,
/// where `constant` is the literal assigned, if any; parameters are defined
/// at entry by a non-constant definition.
struct ReachingDefs {
    out: Vec<BTreeSet<(String, usize, usize)>>,
    consts: HashMap<(usize, usize), Expr>,
}

const PARAM_SITE: usize = usize::MAX;

impl ReachingDefs {
    fn compute(cfg: &Cfg) -> ReachingDefs {
        let n = cfg.blocks.len();
        let mut consts = HashMap::new();
        for (b, blk) in cfg.blocks.iter().enumerate() {
            for (i, t) in blk.tac.iter().enumerate() {
                if let TacKind::Assign { rvalue, .. } = &t.kind {
                    if is_constant(rvalue) {
                        consts.insert((b, i), rvalue.clone());
                    }
                }
            }
        }
        let mut out: Vec<BTreeSet<(String, usize, usize)>> = vec![BTreeSet::new(); n];
        let params: BTreeSet<(String, usize, usize)> = cfg
            .params
            .iter()
            .map(|p| (p.clone(), PARAM_SITE, PARAM_SITE))
            .collect();
        let mut changed = true;
        while changed {
            changed = false;
            for b in 0..n {
                let mut set: BTreeSet<(String, usize, usize)> = if b == cfg.entry {
                    params.clone()
                } else {
                    cfg.blocks[b]
                        .preds
                        .iter()
                        .flat_map(|p| out[*p].iter().cloned())
                        .collect()
                };
                for (i, t) in cfg.blocks[b].tac.iter().enumerate() {
                    if let Some(v) = t.def() {
                        if t.kills() {
                            set.retain(|(w, _, _)| w != v);
                        }
                        set.insert((v.to_string(), b, i));
                    }
                }
                if set != out[b] {
                    out[b] = set;
                    changed = true;
                }
            }
        }
        ReachingDefs { out, consts }
    }

    fn entry_constants(&self, cfg: &Cfg, inside: BTreeSet<usize>) -> BTreeMap<String, Expr> {
        let mut defs: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for &b in &inside {
            for &p in &cfg.blocks[b].preds {
                if inside.contains(&p) {
                    continue;
                }
                for (v, db, di) in &self.out[p] {
                    let e = defs.entry(v.clone()).or_default();
                    if !e.contains(&(*db, *di)) {
                        e.push((*db, *di));
                    }
                }
            }
        }
        defs.into_iter()
            .filter_map(|(v, sites)| match sites[..] {
                [site] => self.consts.get(&site).map(|c| (v, c.clone())),
                _ => None,
            })
            .collect()
    }
}

pub fn is_constant(e: &Expr) -> bool {
    match e {
        Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) => true,
        Expr::Call(n, args) => args.is_empty() && (n == "list" || n == "map"),
        _ => false,
    }
}
