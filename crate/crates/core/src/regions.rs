//! Region tree recovery by structural analysis of a function's CFG.
//!
//! Analysis runs on the statement graph: every CFG block is split into one
//! node per source statement, so leaves are single statements, loop headers
//! or predicates. Reduction applies loop, conditional and sequence templates
//! until one node remains; when none applies, the earliest branching fragment
//! that is closed under whole statements becomes a BlackBox.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::frontend::ast::{Expr, FunctionDef, Stmt, StmtKind};
use crate::frontend::cfg::{is_temp, Cfg, TacKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionKind {
    BasicBlock,
    Sequential,
    Conditional,
    Loop,
    BlackBox,
}

/// Content of a basic-block region.
#[derive(Clone, Debug, PartialEq)]
pub enum Leaf {
    /// A simple statement.
    Stmt(usize),
    /// The header of a loop or the predicate of an `if` or `while`.
    Header(usize),
    /// One link of a decomposed `&&`/`||` condition of statement `stmt`.
    Partial { stmt: usize, source: Expr },
    /// No statements: an absent `else` or an empty body.
    Empty,
}

/// A program point: an instruction index within a CFG block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Point {
    pub block: usize,
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct Region {
    pub kind: RegionKind,
    /// Loop: `[header, body]`. Conditional: `[predicate, then, else]`.
    pub children: Vec<Region>,
    pub leaf: Option<Leaf>,
    /// Top-level statements covered, in textual order.
    pub stmts: Vec<usize>,
    pub lines: Option<(u32, u32)>,
    pub name: String,
    /// First instruction executed in the region.
    pub entry: Point,
    /// First instruction executed after the region.
    pub exit: Point,
}

impl Region {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Preorder traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Region)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Statement ids of the leaves, in tree order.
    pub fn leaf_statements(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk(&mut |r| match &r.leaf {
            Some(Leaf::Stmt(s)) | Some(Leaf::Header(s)) => out.push(*s),
            Some(Leaf::Partial { stmt, .. }) if out.last() != Some(stmt) => out.push(*stmt),
            _ => {}
        });
        out
    }

    pub fn find(&self, name: &str) -> Option<&Region> {
        let mut hit = None;
        self.walk(&mut |r| {
            if hit.is_none() && r.name == name {
                hit = Some(r)
            }
        });
        hit
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.children.is_empty() {
            f.write_str(" { ")?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    f.write_str("; ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(" }")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RegionTree {
    pub root: Region,
}

impl RegionTree {
    /// Indented multi-line rendering, one region per line.
    pub fn dump(&self) -> String {
        fn go(r: &Region, depth: usize, out: &mut String) {
            out.push_str(&"  ".repeat(depth));
            out.push_str(&r.name);
            if r.kind == RegionKind::BlackBox {
                out.push_str(" (black box)");
            }
            out.push('\n');
            for c in &r.children {
                go(c, depth + 1, out);
            }
        }
        let mut out = String::new();
        go(&self.root, 0, &mut out);
        out
    }
}

const ENTRY: usize = 0;
const EXIT: usize = 1;

struct Graph<'a> {
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
    alive: Vec<bool>,
    regions: Vec<Option<Region>>,
    /// Base nodes inside each abstract node.
    members: Vec<BTreeSet<usize>>,
    /// Textual order key of each abstract node.
    order: Vec<(usize, usize)>,
    points: Vec<Point>,
    stmts: HashMap<usize, &'a Stmt>,
    parent: HashMap<usize, usize>,
    /// Base nodes of every statement including its descendants.
    stmt_nodes: HashMap<usize, BTreeSet<usize>>,
    exit_point: Point,
}

pub fn build_region_tree(f: &FunctionDef, cfg: &Cfg) -> RegionTree {
    let mut g = Graph::new(f, cfg);
    g.reduce();
    let root_id = (2..g.alive.len())
        .find(|&n| g.alive[n])
        .expect("at least one node");
    let mut root = g.regions[root_id].take().unwrap_or_else(|| g.empty(g.exit_point));
    finish(&mut root, &g.stmts);
    RegionTree { root }
}

impl<'a> Graph<'a> {
    fn new(f: &'a FunctionDef, cfg: &Cfg) -> Graph<'a> {
        let mut stmts = HashMap::new();
        let mut parent = HashMap::new();
        fn index<'a>(
            body: &'a [Stmt],
            up: Option<usize>,
            stmts: &mut HashMap<usize, &'a Stmt>,
            parent: &mut HashMap<usize, usize>,
        ) {
            for s in body {
                stmts.insert(s.span.id, s);
                if let Some(p) = up {
                    parent.insert(s.span.id, p);
                }
                for b in s.children() {
                    index(b, Some(s.span.id), stmts, parent);
                }
            }
        }
        index(&f.body, None, &mut stmts, &mut parent);

        let exit_point = Point {
            block: cfg.exit,
            index: 0,
        };
        let mut g = Graph {
            succs: vec![vec![], vec![]],
            preds: vec![vec![], vec![]],
            alive: vec![false, false],
            regions: vec![None, None],
            members: vec![BTreeSet::new(), BTreeSet::new()],
            order: vec![(0, 0), (usize::MAX, 0)],
            points: vec![
                Point {
                    block: cfg.entry,
                    index: 0,
                },
                exit_point,
            ],
            stmts,
            parent,
            stmt_nodes: HashMap::new(),
            exit_point,
        };

        let mut first_node = HashMap::new();
        let mut last_node = HashMap::new();
        first_node.insert(cfg.entry, ENTRY);
        last_node.insert(cfg.entry, ENTRY);
        first_node.insert(cfg.exit, EXIT);
        for (b, block) in cfg.blocks.iter().enumerate() {
            if b == cfg.entry || b == cfg.exit {
                continue;
            }
            let mut i = 0;
            let mut prev: Option<usize> = None;
            while i < block.tac.len() {
                let stmt = block.tac[i].stmt;
                let mut j = i;
                while j < block.tac.len() && block.tac[j].stmt == stmt {
                    j += 1;
                }
                let leaf = match &block.tac[j - 1].kind {
                    TacKind::Branch {
                        partial: true,
                        source,
                        ..
                    } => Leaf::Partial {
                        stmt,
                        source: source.clone(),
                    },
                    TacKind::Branch { .. } | TacKind::IterNext { .. } => Leaf::Header(stmt),
                    _ => Leaf::Stmt(stmt),
                };
                let point = Point { block: b, index: i };
                let n = g.add_node(leaf, point);
                if let Some(p) = prev {
                    g.succs[p].push(n);
                } else {
                    first_node.insert(b, n);
                }
                prev = Some(n);
                i = j;
            }
            last_node.insert(b, prev.expect("interior blocks are non-empty"));
        }
        for (b, block) in cfg.blocks.iter().enumerate() {
            if b == cfg.exit {
                continue;
            }
            let from = last_node[&b];
            for s in &block.succs {
                g.succs[from].push(first_node[s]);
            }
        }
        for n in 0..g.succs.len() {
            for s in g.succs[n].clone() {
                g.preds[s].push(n);
            }
        }
        for n in 2..g.succs.len() {
            let stmt = g.order[n].0;
            let mut s = Some(stmt);
            while let Some(id) = s {
                g.stmt_nodes.entry(id).or_default().insert(n);
                s = g.parent.get(&id).copied();
            }
        }
        g
    }

    fn add_node(&mut self, leaf: Leaf, point: Point) -> usize {
        let n = self.succs.len();
        let stmt = match &leaf {
            Leaf::Stmt(s) | Leaf::Header(s) | Leaf::Partial { stmt: s, .. } => *s,
            Leaf::Empty => unreachable!(),
        };
        let top = vec![stmt];
        self.succs.push(vec![]);
        self.preds.push(vec![]);
        self.alive.push(true);
        self.members.push([n].into_iter().collect());
        self.order.push((stmt, n));
        self.points.push(point);
        self.regions.push(Some(Region {
            kind: RegionKind::BasicBlock,
            children: vec![],
            leaf: Some(leaf),
            stmts: top,
            lines: None,
            name: String::new(),
            entry: point,
            exit: point,
        }));
        n
    }

    fn empty(&self, at: Point) -> Region {
        Region {
            kind: RegionKind::BasicBlock,
            children: vec![],
            leaf: Some(Leaf::Empty),
            stmts: vec![],
            lines: None,
            name: String::new(),
            entry: at,
            exit: at,
        }
    }

    fn header_stmt(&self, n: usize) -> Option<&'a Stmt> {
        match self.regions[n].as_ref()?.leaf.as_ref()? {
            Leaf::Header(s) => Some(self.stmts[s]),
            _ => None,
        }
    }

    fn is_loop_header(&self, n: usize) -> bool {
        self.header_stmt(n).is_some_and(|s| {
            matches!(
                s.kind,
                StmtKind::QueryLoop { .. } | StmtKind::CollLoop { .. } | StmtKind::While { .. }
            )
        })
    }

    fn is_if_header(&self, n: usize) -> bool {
        self.header_stmt(n)
            .is_some_and(|s| matches!(s.kind, StmtKind::If { .. }))
    }

    fn is_branching_leaf(&self, n: usize) -> bool {
        matches!(
            self.regions[n].as_ref().and_then(|r| r.leaf.as_ref()),
            Some(Leaf::Header(_)) | Some(Leaf::Partial { .. })
        )
    }

    fn live_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (2..self.alive.len()).filter(|&n| self.alive[n]).collect();
        v.sort_by_key(|&n| self.order[n]);
        v
    }

    fn reduce(&mut self) {
        loop {
            let nodes = self.live_nodes();
            if nodes.len() <= 1 {
                return;
            }
            if nodes.iter().any(|&n| self.try_loop(n))
                || nodes.iter().any(|&n| self.try_cond(n))
                || nodes.iter().any(|&n| self.try_seq(n))
            {
                continue;
            }
            if !nodes.iter().any(|&n| self.try_black_box(n)) {
                self.wrap_all(&nodes);
            }
        }
    }

    fn single(v: &[usize]) -> Option<usize> {
        let first = *v.first()?;
        v.iter().all(|&x| x == first).then_some(first)
    }

    fn try_loop(&mut self, h: usize) -> bool {
        if !self.is_loop_header(h) || self.succs[h].len() != 2 {
            return false;
        }
        let (b, x) = (self.succs[h][0], self.succs[h][1]);
        if x == h {
            return false;
        }
        if b == h {
            let body = self.empty(self.points[h]);
            self.collapse(&[h], RegionKind::Loop, vec![body], x);
            return true;
        }
        if b == EXIT || Self::single(&self.preds[b]) != Some(h) || Self::single(&self.succs[b]) != Some(h) {
            return false;
        }
        self.collapse(&[h, b], RegionKind::Loop, vec![], x);
        true
    }

    fn try_cond(&mut self, p: usize) -> bool {
        if !self.is_if_header(p) || self.succs[p].len() != 2 {
            return false;
        }
        let (t, e) = (self.succs[p][0], self.succs[p][1]);
        let only_from_p = |g: &Self, n: usize| n != EXIT && Self::single(&g.preds[n]) == Some(p);
        if t == e {
            let (et, ee) = (self.empty(self.points[t]), self.empty(self.points[t]));
            self.collapse(&[p], RegionKind::Conditional, vec![et, ee], t);
            return true;
        }
        let t_to = Self::single(&self.succs[t]);
        let e_to = Self::single(&self.succs[e]);
        if let Some(j) = t_to.filter(|_| only_from_p(self, t) && only_from_p(self, e) && t_to == e_to) {
            if j != p && j != t && j != e {
                self.collapse(&[p, t, e], RegionKind::Conditional, vec![], j);
                return true;
            }
        }
        if only_from_p(self, t) && t_to == Some(e) {
            let else_r = self.empty(self.points[e]);
            self.collapse_with_slots(p, Some(t), None, else_r, e);
            return true;
        }
        if only_from_p(self, e) && e_to == Some(t) {
            let then_r = self.empty(self.points[t]);
            self.collapse_with_slots(p, None, Some(e), then_r, t);
            return true;
        }
        false
    }

    fn try_seq(&mut self, a: usize) -> bool {
        if self.is_branching_leaf(a) {
            return false;
        }
        let Some(b) = Self::single(&self.succs[a]) else {
            return false;
        };
        if b == EXIT || b == a || self.is_branching_leaf(b) || Self::single(&self.preds[b]) != Some(a) {
            return false;
        }
        let x = match Self::single(&self.succs[b]) {
            Some(x) => x,
            None => return false,
        };
        if x == a {
            return false;
        }
        self.collapse(&[a, b], RegionKind::Sequential, vec![], x);
        true
    }

    /// Earliest fragment starting at branching node `n` and ending before its
    /// immediate postdominator, if it is single-entry and statement-closed.
    fn try_black_box(&mut self, n: usize) -> bool {
        let distinct: BTreeSet<usize> = self.succs[n].iter().copied().collect();
        if distinct.len() < 2 {
            return false;
        }
        let ipdom = self.immediate_postdominator(n);
        let mut set = BTreeSet::new();
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            if m == ipdom || m == EXIT || !set.insert(m) {
                continue;
            }
            stack.extend(self.succs[m].iter().copied());
        }
        for &m in &set {
            if m != n && self.preds[m].iter().any(|p| !set.contains(p)) {
                return false;
            }
        }
        if self.preds[n].iter().filter(|p| !set.contains(p)).count() == 0 {
            return false;
        }
        if !self.statement_closed(&set) {
            return false;
        }
        let nodes: Vec<usize> = {
            let mut v: Vec<usize> = set.into_iter().collect();
            v.sort_by_key(|&m| self.order[m]);
            v
        };
        self.collapse(&nodes, RegionKind::BlackBox, vec![], ipdom);
        true
    }

    fn wrap_all(&mut self, nodes: &[usize]) {
        self.collapse(nodes, RegionKind::BlackBox, vec![], EXIT);
    }

    fn statement_closed(&self, set: &BTreeSet<usize>) -> bool {
        let base: BTreeSet<usize> = set.iter().flat_map(|m| self.members[*m].iter().copied()).collect();
        base.iter().all(|b| {
            let stmt = self.order[*b].0;
            self.stmt_nodes[&stmt].is_subset(&base)
        })
    }

    fn immediate_postdominator(&self, n: usize) -> usize {
        let nodes: Vec<usize> = (0..self.alive.len())
            .filter(|&m| m == EXIT || m == ENTRY || self.alive[m])
            .collect();
        let all: BTreeSet<usize> = nodes.iter().copied().collect();
        let mut pdom: HashMap<usize, BTreeSet<usize>> = nodes
            .iter()
            .map(|&m| {
                let s = if m == EXIT {
                    [EXIT].into_iter().collect()
                } else {
                    all.clone()
                };
                (m, s)
            })
            .collect();
        let mut changed = true;
        while changed {
            changed = false;
            for &m in &nodes {
                if m == EXIT {
                    continue;
                }
                let mut acc: Option<BTreeSet<usize>> = None;
                for s in &self.succs[m] {
                    acc = Some(match acc {
                        None => pdom[s].clone(),
                        Some(a) => a.intersection(&pdom[s]).copied().collect(),
                    });
                }
                let mut new = acc.unwrap_or_default();
                new.insert(m);
                if new != pdom[&m] {
                    pdom.insert(m, new);
                    changed = true;
                }
            }
        }
        // Strict postdominators form a chain; the nearest has the largest set.
        pdom[&n]
            .iter()
            .copied()
            .filter(|&m| m != n)
            .max_by_key(|c| pdom[c].len())
            .unwrap_or(EXIT)
    }

    /// Replaces `nodes` (first = entry) by one node of the given kind whose
    /// single successor is `next`. Children default to the nodes' regions.
    fn collapse(&mut self, nodes: &[usize], kind: RegionKind, extra: Vec<Region>, next: usize) {
        let mut children: Vec<Region> = nodes
            .iter()
            .map(|&n| self.regions[n].take().expect("live node has a region"))
            .collect();
        children.extend(extra);
        let children = if kind == RegionKind::Sequential {
            children
                .into_iter()
                .flat_map(|c| {
                    if c.kind == RegionKind::Sequential {
                        c.children
                    } else {
                        vec![c]
                    }
                })
                .collect()
        } else {
            children
        };
        self.install(nodes, kind, children, next);
    }

    fn collapse_with_slots(&mut self, p: usize, t: Option<usize>, e: Option<usize>, empty: Region, next: usize) {
        let pred = self.regions[p].take().expect("predicate region");
        let then_r = match t {
            Some(t) => self.regions[t].take().expect("then region"),
            None => empty.clone(),
        };
        let else_r = match e {
            Some(e) => self.regions[e].take().expect("else region"),
            None => empty,
        };
        let mut nodes = vec![p];
        nodes.extend(t);
        nodes.extend(e);
        self.install(&nodes, RegionKind::Conditional, vec![pred, then_r, else_r], next);
    }

    fn install(&mut self, nodes: &[usize], kind: RegionKind, children: Vec<Region>, next: usize) {
        let head = nodes[0];
        let group: HashSet<usize> = nodes.iter().copied().collect();
        let mut stmts: Vec<usize> = children.iter().flat_map(|c| c.stmts.iter().copied()).collect();
        stmts.sort();
        stmts.dedup();
        let top: Vec<usize> = stmts
            .iter()
            .copied()
            .filter(|s| !self.parent.get(s).is_some_and(|p| stmts.contains(p)))
            .collect();
        let exit = self.points[next];
        let region = Region {
            kind,
            children,
            leaf: None,
            stmts: top,
            lines: None,
            name: String::new(),
            entry: self.points[head],
            exit,
        };
        let outside_preds: Vec<usize> = self.preds[head]
            .iter()
            .copied()
            .filter(|p| !group.contains(p))
            .collect();
        for &n in &nodes[1..] {
            self.alive[n] = false;
            let m = std::mem::take(&mut self.members[n]);
            self.members[head].extend(m);
        }
        for p in &outside_preds {
            for s in &mut self.succs[*p] {
                if group.contains(s) {
                    *s = head;
                }
            }
        }
        for n in 0..self.preds.len() {
            if !group.contains(&n) {
                let mut ps: Vec<usize> = self.preds[n]
                    .iter()
                    .map(|p| if group.contains(p) { head } else { *p })
                    .collect();
                ps.dedup();
                self.preds[n] = ps;
            }
        }
        self.preds[head] = outside_preds;
        self.succs[head] = vec![next];
        if !self.preds[next].contains(&head) {
            self.preds[next].push(head);
        }
        let key = nodes.iter().map(|&n| self.order[n]).min().expect("non-empty");
        self.order[head] = key;
        self.regions[head] = Some(region);
    }
}

/// Groups basic-block runs in mixed sequences, then assigns lines and names.
fn finish(r: &mut Region, stmts: &HashMap<usize, &Stmt>) {
    for c in &mut r.children {
        finish(c, stmts);
    }
    if r.kind == RegionKind::Sequential {
        let mixed = r.children.iter().any(|c| c.kind != RegionKind::BasicBlock);
        if mixed {
            let old = std::mem::take(&mut r.children);
            let mut run: Vec<Region> = Vec::new();
            let flush = |run: &mut Vec<Region>, out: &mut Vec<Region>| {
                if run.len() >= 2 {
                    let mut seq = Region {
                        kind: RegionKind::Sequential,
                        children: std::mem::take(run),
                        leaf: None,
                        stmts: vec![],
                        lines: None,
                        name: String::new(),
                        entry: Point { block: 0, index: 0 },
                        exit: Point { block: 0, index: 0 },
                    };
                    seq.entry = seq.children[0].entry;
                    seq.exit = seq.children.last().unwrap().exit;
                    seq.stmts = seq.children.iter().flat_map(|c| c.stmts.clone()).collect();
                    name_region(&mut seq, stmts);
                    out.push(seq);
                } else {
                    out.append(run);
                }
            };
            for c in old {
                if c.kind == RegionKind::BasicBlock {
                    run.push(c);
                } else {
                    flush(&mut run, &mut r.children);
                    r.children.push(c);
                }
            }
            flush(&mut run, &mut r.children);
        }
        for i in 0..r.children.len().saturating_sub(1) {
            let next_entry = r.children[i + 1].entry;
            r.children[i].exit = next_entry;
        }
    }
    name_region(r, stmts);
}

fn name_region(r: &mut Region, stmts: &HashMap<usize, &Stmt>) {
    let lines = match (&r.kind, &r.leaf) {
        (_, Some(Leaf::Empty)) => None,
        (_, Some(Leaf::Header(s))) | (_, Some(Leaf::Partial { stmt: s, .. })) => {
            Some((stmts[s].span.line, stmts[s].span.line))
        }
        (_, Some(Leaf::Stmt(s))) => Some((stmts[s].span.line, stmts[s].span.end_line)),
        _ => {
            let lo = r.stmts.iter().map(|s| stmts[s].span.line).min();
            let hi = r.stmts.iter().map(|s| stmts[s].span.end_line).max();
            lo.zip(hi)
        }
    };
    r.lines = lines;
    let prefix = match r.kind {
        RegionKind::BasicBlock => "B",
        RegionKind::Sequential => "S",
        RegionKind::Conditional => "C",
        RegionKind::Loop => "L",
        RegionKind::BlackBox => "X",
    };
    r.name = match (r.kind, lines) {
        (_, None) => "E".to_string(),
        (RegionKind::BasicBlock, Some((a, _))) => format!("B{a}"),
        (_, Some((a, b))) => format!("{prefix}{a}-{b}"),
    };
}

/// Non-temporary variables live at region entry and at region exit.
pub fn live_boundary(region: &Region, cfg: &Cfg) -> (BTreeSet<String>, BTreeSet<String>) {
    let live = cfg.liveness(&cfg.exit_live());
    let at = |p: Point| -> BTreeSet<String> {
        let set = if p.block == cfg.exit {
            cfg.exit_live()
        } else {
            live.get(&(p.block, p.index)).cloned().unwrap_or_default()
        };
        set.into_iter().filter(|v| !is_temp(v)).collect()
    };
    (at(region.entry), at(region.exit))
}
