//! Cost-based rewriting of imperative programs with embedded relational
//! queries.
//!
//! A function is split into single-entry single-exit regions, each region
//! becomes an OR node of an AND-OR DAG, rewrite rules add equivalent
//! alternatives, and the planner keeps the cheapest one under a
//! network-aware cost model.

pub mod cli;
pub mod cost;
pub mod evaluator;
pub mod fir;
pub mod frontend;
pub mod pipeline;
pub mod planner;
pub mod regiondag;
pub mod regions;
pub mod samples;

pub type Cost64 = cost::Cost<f64>;
pub type Cost32 = cost::Cost<f32>;
pub type CostCatalog64 = cost::CostCatalog<f64>;
pub type CostCatalog32 = cost::CostCatalog<f32>;
pub type QueryStats64 = cost::QueryStats<f64>;
pub type QueryStats32 = cost::QueryStats<f32>;
pub type CostModel64<'a> = cost::CostModel<'a, f64>;
pub type CostModel32<'a> = cost::CostModel<'a, f32>;
pub type Plan64 = planner::Plan<f64>;
pub type Plan32 = planner::Plan<f32>;
