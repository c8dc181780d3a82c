//! Cost model: per-query cost, prefetch amortization and region operators.
//!
//! Costs are seconds, generic over the float type.

pub mod card;
pub mod catalog;

use std::collections::BTreeMap;
use std::ops::{Add, Sub};

use num_traits::Float;
use thiserror::Error;

use crate::frontend::ast::{Expr, Stmt, StmtKind};
use crate::frontend::query::QueryExpr;
use crate::frontend::cfg::IterSource;
use crate::regiondag::{AndNode, Op, OrId, RegionDag};

pub use card::{estimate_card, row_size};
pub use catalog::{load_catalog, parse_catalog, CatalogError, CostCatalog, NetworkProfile, QueryStats};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("relation `{0}` has no statistics in the catalog")]
    UnknownRelation(String),
    #[error("amortization factor {af} for query {fingerprint} is below 1")]
    InvalidAf { fingerprint: String, af: String },
}

/// Seconds split by where they are spent; the total is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cost<S> {
    pub network: S,
    pub server: S,
    pub cpu: S,
}

impl<S: Float> Cost<S> {
    pub fn zero() -> Cost<S> {
        Cost {
            network: S::zero(),
            server: S::zero(),
            cpu: S::zero(),
        }
    }

    pub fn cpu(seconds: S) -> Cost<S> {
        Cost {
            cpu: seconds,
            ..Cost::zero()
        }
    }

    pub fn seconds(&self) -> S {
        self.network + self.server + self.cpu
    }

    pub fn scale(self, k: S) -> Cost<S> {
        Cost {
            network: self.network * k,
            server: self.server * k,
            cpu: self.cpu * k,
        }
    }
}

impl<S: Float> Add for Cost<S> {
    type Output = Cost<S>;
    fn add(self, o: Cost<S>) -> Cost<S> {
        Cost {
            network: self.network + o.network,
            server: self.server + o.server,
            cpu: self.cpu + o.cpu,
        }
    }
}

impl<S: Float> Sub for Cost<S> {
    type Output = Cost<S>;
    fn sub(self, o: Cost<S>) -> Cost<S> {
        Cost {
            network: self.network - o.network,
            server: self.server - o.server,
            cpu: self.cpu - o.cpu,
        }
    }
}

/// Choices already made below the node being costed.
pub trait PlanView<S> {
    /// The chosen alternative of `or`.
    fn chosen(&self, or: OrId) -> &AndNode;
    fn or_cost(&self, or: OrId) -> Cost<S>;
}

/// Cost of one AND node given the costs of its child OR nodes.
pub trait CostFunction<S> {
    fn and_cost(&self, and: &AndNode, children: &[Cost<S>], view: &dyn PlanView<S>) -> Result<Cost<S>, CostError>;
}

/// Inputs of the per-query formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryTerms<S> {
    pub nrt: S,
    pub bandwidth: S,
    pub cqf: S,
    pub cql: S,
    pub nq: S,
    pub srow: S,
}

impl<S: Float> QueryTerms<S> {
    /// `C_NRT + C_F + max(N * S_row / BW, C_L - C_F)`; the larger term of
    /// the max is booked as network (transfer) or server (residual) time.
    pub fn cost(&self) -> Cost<S> {
        let transfer = self.nq * self.srow / self.bandwidth;
        let residual = self.cql - self.cqf;
        if transfer >= residual {
            Cost {
                network: self.nrt + transfer,
                server: self.cqf,
                cpu: S::zero(),
            }
        } else {
            Cost {
                network: self.nrt,
                server: self.cqf + residual,
                cpu: S::zero(),
            }
        }
    }
}

pub struct CostModel<'a, S> {
    pub catalog: &'a CostCatalog<S>,
    pub stats: &'a QueryStats<S>,
}

impl<'a, S: Float> CostModel<'a, S> {
    pub fn new(catalog: &'a CostCatalog<S>, stats: &'a QueryStats<S>) -> Self {
        CostModel { catalog, stats }
    }

    /// Result rows of `q`: the catalog's `nq` override, else the estimate.
    pub fn rows(&self, q: &QueryExpr) -> Result<S, CostError> {
        match self.stats.overrides.get(&q.fingerprint()).and_then(|o| o.nq) {
            Some(n) => Ok(n),
            None => estimate_card(q, self.stats),
        }
    }

    pub fn query_terms(&self, q: &QueryExpr) -> Result<QueryTerms<S>, CostError> {
        let ov = self.stats.overrides.get(&q.fingerprint()).copied().unwrap_or(catalog::QueryOverride {
            cqf: None,
            cql: None,
            nq: None,
            srow: None,
        });
        let k = &self.catalog.constants;
        let nq = self.rows(q)?;
        let srow = match ov.srow {
            Some(s) => s,
            None => row_size(q, self.stats)?,
        };
        let cqf = match ov.cqf {
            Some(f) => f,
            None => k.server_first + k.server_per_input_row * card::input_card(q, self.stats)?,
        };
        let cql = ov.cql.unwrap_or(cqf + k.server_per_output_row * nq).max(cqf);
        Ok(QueryTerms {
            nrt: self.catalog.network.nrt,
            bandwidth: self.catalog.network.bandwidth,
            cqf,
            cql,
            nq,
            srow,
        })
    }

    pub fn query_cost(&self, q: &QueryExpr) -> Result<Cost<S>, CostError> {
        Ok(self.query_terms(q)?.cost())
    }

    /// The global override, else the per-query factor, else 1.
    pub fn amortization(&self, q: &QueryExpr) -> Result<S, CostError> {
        let fp = q.fingerprint();
        let af = self
            .catalog
            .global_af
            .or_else(|| self.catalog.amortization.get(&fp).copied())
            .unwrap_or_else(S::one);
        if af.is_nan() || af < S::one() {
            return Err(CostError::InvalidAf {
                fingerprint: fp,
                af: af.to_f64().map_or("NaN".into(), |x| x.to_string()),
            });
        }
        Ok(af)
    }

    /// `C_Q / AF_Q`; an infinite factor makes the prefetch free.
    pub fn prefetch_cost(&self, q: &QueryExpr) -> Result<Cost<S>, CostError> {
        let af = self.amortization(q)?;
        let c = self.query_cost(q)?;
        Ok(if af.is_infinite() { Cost::zero() } else { c.scale(S::one() / af) })
    }

    /// Probability that a branch condition holds, from the selectivity of
    /// its row attributes; `default_prob` when statistics say nothing.
    pub fn branch_probability(&self, cond: &Expr) -> S {
        let p = card::selectivity(
            &attribute_predicate(cond),
            None,
            self.stats,
            Some(self.catalog.constants.default_prob),
        );
        p.max(S::zero()).min(S::one())
    }

    fn operators(&self, e: &Expr) -> Cost<S> {
        Cost::cpu(self.catalog.constants.cy * S::from(e.operator_count().max(1)).unwrap())
    }

    fn iterations(&self) -> S {
        self.catalog.constants.default_iters
    }

    /// Cost of source statements kept verbatim.
    pub fn stmts_cost(&self, stmts: &[Stmt]) -> Result<Cost<S>, CostError> {
        stmts.iter().try_fold(Cost::zero(), |acc, s| Ok(acc + self.stmt_cost(s)?))
    }

    pub fn stmt_cost(&self, s: &Stmt) -> Result<Cost<S>, CostError> {
        let k = &self.catalog.constants;
        Ok(match &s.kind {
            StmtKind::ExecQuery { query, .. } => self.query_cost(query)?,
            StmtKind::Prefetch { relation, .. } => self.prefetch_cost(&QueryExpr::scan(relation.clone()))?,
            StmtKind::QueryLoop { query, body, .. } => {
                self.query_cost(query)? + self.stmts_cost(body)?.scale(self.rows(query)?)
            }
            StmtKind::CollLoop { body, .. } => {
                (Cost::cpu(k.cz) + self.stmts_cost(body)?).scale(self.iterations())
            }
            StmtKind::While { cond, body } => (self.operators(cond) + self.stmts_cost(body)?).scale(self.iterations()),
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let p = self.branch_probability(cond);
                self.operators(cond)
                    + self.stmts_cost(then_body)?.scale(p)
                    + self.stmts_cost(else_body)?.scale(S::one() - p)
            }
            _ => Cost::cpu(k.cz),
        })
    }
}

impl<S: Float> CostFunction<S> for CostModel<'_, S> {
    fn and_cost(&self, and: &AndNode, c: &[Cost<S>], view: &dyn PlanView<S>) -> Result<Cost<S>, CostError> {
        let k = &self.catalog.constants;
        let sum = || c.iter().fold(Cost::zero(), |a, b| a + *b);
        Ok(match &and.op {
            Op::Seq => sum(),
            Op::Cond => {
                let p = match &view.chosen(and.children[0]).op {
                    Op::Predicate(e) => self.branch_probability(e),
                    _ => k.default_prob,
                };
                c[0] + c[1].scale(p) + c[2].scale(S::one() - p)
            }
            Op::Loop => match &view.chosen(and.children[0]).op {
                Op::LoopHeader {
                    source: IterSource::Query(q),
                    ..
                } => c[0] + c[1].scale(self.rows(q)?),
                _ => (c[0] + c[1]).scale(self.iterations()),
            },
            Op::Stmt(s) => self.stmt_cost(s)?,
            Op::LoopHeader { source, .. } => match source {
                IterSource::Query(q) => self.query_cost(q)?,
                IterSource::Coll(_) => Cost::cpu(k.cz),
            },
            Op::WhileHeader(e) | Op::Predicate(e) => self.operators(e),
            Op::Skip => Cost::zero(),
            Op::BlackBox(stmts) => self.stmts_cost(stmts)?,
            Op::Prefetch { relation, .. } => self.prefetch_cost(&QueryExpr::scan(relation.clone()))?,
            Op::FirAssign(_) => Cost::cpu(k.cz) + c[0],
            Op::FirSeq => sum() - shared_fold_discount(and, view),
            Op::Fold { .. } => {
                let n = match &view.chosen(and.children[2]).op {
                    Op::Query(q) => self.rows(q)?,
                    _ => self.iterations(),
                };
                c[0].scale(n) + c[1] + c[2]
            }
            Op::Guard => Cost::cpu(k.cy) + c[0] + c[1].scale(k.default_prob) + c[2].scale(S::one() - k.default_prob),
            Op::Const(_) | Op::Var(_) | Op::Param(_) | Op::TupleAttr(..) | Op::TupleVar(_) => Cost::zero(),
            Op::Query(q) | Op::ExecuteQuery(q) => self.query_cost(q)?,
            Op::Tuple
            | Op::Project(_)
            | Op::Bin(_)
            | Op::Unary(_)
            | Op::Call(_)
            | Op::Field(_)
            | Op::Insert
            | Op::MapPut
            | Op::Lookup { .. } => Cost::cpu(k.cy) + sum(),
        })
    }
}

/// A fold read by several projections of one parallel assignment runs once;
/// every extra reader's copy of its cost is returned for subtraction.
fn shared_fold_discount<S: Float>(and: &AndNode, view: &dyn PlanView<S>) -> Cost<S> {
    let mut readers: BTreeMap<OrId, usize> = BTreeMap::new();
    for &c in &and.children {
        let assign = view.chosen(c);
        let [value] = assign.children[..] else { continue };
        let proj = view.chosen(value);
        if let (Op::Project(_), [fold]) = (&proj.op, &proj.children[..]) {
            if matches!(view.chosen(*fold).op, Op::Fold { .. }) {
                *readers.entry(*fold).or_default() += 1;
            }
        }
    }
    readers
        .into_iter()
        .fold(Cost::zero(), |acc, (f, k)| acc + view.or_cost(f).scale(S::from(k - 1).unwrap()))
}

/// A branch condition with row attributes `t.a` read as columns `a` and
/// program variables made opaque, so that query selectivity applies.
fn attribute_predicate(e: &Expr) -> Expr {
    match e {
        Expr::Field(base, a) if matches!(base.as_ref(), Expr::Var(_)) => Expr::Var(a.clone()),
        Expr::Var(v) => Expr::Call(format!("${v}"), vec![]),
        Expr::Field(base, a) => Expr::Field(Box::new(attribute_predicate(base)), a.clone()),
        Expr::Binary(op, l, r) => Expr::binary(*op, attribute_predicate(l), attribute_predicate(r)),
        Expr::Unary(op, x) => Expr::Unary(*op, Box::new(attribute_predicate(x))),
        Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(attribute_predicate).collect()),
        other => other.clone(),
    }
}

/// Number of database requests of the plan rooted at `or`.
pub fn plan_queries(dag: &RegionDag, or: OrId, chosen: &dyn Fn(OrId) -> usize) -> usize {
    let and = dag.and(chosen(or));
    and.op.query_count() + and.children.iter().map(|&c| plan_queries(dag, c, chosen)).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(nq: f64) -> QueryTerms<f64> {
        QueryTerms {
            nrt: 0.5,
            bandwidth: 62_500.0,
            cqf: 0.01,
            cql: 0.05,
            nq,
            srow: 100.0,
        }
    }

    #[test]
    fn formula_takes_the_larger_term() {
        let c = terms(1000.0).cost();
        assert!((c.seconds() - 2.11).abs() < 1e-12);
        assert!((c.network - 2.1).abs() < 1e-12);
        let empty = terms(0.0).cost();
        assert!((empty.seconds() - (0.5 + 0.01 + 0.04)).abs() < 1e-12);
        assert_eq!(empty.network, 0.5);
    }

    #[test]
    fn unbounded_bandwidth_is_server_bound() {
        let c = QueryTerms {
            bandwidth: f64::INFINITY,
            ..terms(1000.0)
        }
        .cost();
        assert!((c.seconds() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn attribute_predicates_become_column_predicates() {
        let e = Expr::binary(
            crate::frontend::ast::BinOp::Gt,
            Expr::field(Expr::var("t"), "sale_amt"),
            Expr::var("limit"),
        );
        let p = attribute_predicate(&e);
        assert_eq!(crate::frontend::query::sql_expr(&p), crate::frontend::query::sql_expr(&Expr::binary(
            crate::frontend::ast::BinOp::Gt,
            Expr::var("sale_amt"),
            Expr::call("$limit", vec![]),
        )));
    }
}
