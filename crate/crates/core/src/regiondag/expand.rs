//! Rule-driven expansion of the DAG to saturation.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::{AltTree, AndId, OrId, RegionDag};

pub const DEFAULT_BUDGET: usize = 10_000;

/// A rewrite rule: given an AND node, proposes equivalent alternatives for
/// the OR node it was found in.
pub trait Rule {
    fn name(&self) -> &'static str;
    fn apply(&self, dag: &RegionDag, and: AndId) -> Vec<AltTree>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub rule: &'static str,
    pub or: OrId,
    pub label: String,
    pub and: AndId,
    /// False when the proposed alternative was already present.
    pub fresh: bool,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule={} or={} new_and={}", self.rule, self.label, self.and)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExpansionReport {
    pub events: Vec<Event>,
    /// Proposals rejected because they would create a cycle.
    pub rejected: usize,
}

impl ExpansionReport {
    pub fn applications(&self) -> usize {
        self.events.len()
    }

    pub fn count(&self, rule: &str) -> usize {
        self.events.iter().filter(|e| e.rule == rule).count()
    }

    pub fn trace(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("rule budget of {budget} applications exhausted")]
pub struct BudgetExceeded {
    pub budget: usize,
    pub report: ExpansionReport,
}

/// Applies `rules` in priority order, visiting OR nodes in id order and
/// their alternatives in insertion order, until no rule proposes anything new.
pub fn expand(dag: &mut RegionDag, rules: &[&dyn Rule], budget: usize) -> Result<ExpansionReport, BudgetExceeded> {
    let mut report = ExpansionReport::default();
    let mut seen: HashSet<(usize, OrId, AltTree)> = HashSet::new();
    loop {
        let mut progress = false;
        let mut or = 0;
        while or < dag.ors.len() {
            let mut k = 0;
            while k < dag.ors[or].alternatives.len() {
                let and = dag.ors[or].alternatives[k];
                for (ri, rule) in rules.iter().enumerate() {
                    for tree in rule.apply(dag, and) {
                        if !seen.insert((ri, or, tree.clone())) {
                            continue;
                        }
                        if report.events.len() >= budget {
                            return Err(BudgetExceeded { budget, report });
                        }
                        let before = dag.ors[or].alternatives.len();
                        match dag.add_alternative(or, &tree) {
                            Ok(new_and) => {
                                let fresh = dag.ors[or].alternatives.len() > before;
                                progress |= fresh;
                                let event = Event {
                                    rule: rule.name(),
                                    or,
                                    label: dag.ors[or].label.clone(),
                                    and: new_and,
                                    fresh,
                                };
                                log::debug!("{event}");
                                report.events.push(event);
                            }
                            Err(e) => {
                                log::debug!("rule {} rejected: {e}", rule.name());
                                report.rejected += 1;
                            }
                        }
                    }
                }
                k += 1;
            }
            or += 1;
        }
        if !progress {
            return Ok(report);
        }
    }
}
