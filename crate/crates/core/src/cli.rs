//! Command-line surface: `optimize`, `run`, `dump-regions` and `dump-dag`.
//!
//! Exit status 0 on success, 1 on user error, 2 on an internal invariant
//! failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::cost::{load_catalog, CostCatalog, CostModel, NetworkProfile, QueryStats};
use crate::evaluator::{random_database, run, Database, GenConfig, OutputState};
use crate::fir::{RuleContext, ALL_RULES};
use crate::frontend::{self, build_cfg};
use crate::pipeline::{entry_function, expand_source, optimize, Expanded, PipelineError};
use crate::planner::{explain, list_alternatives};
use crate::regiondag::dot::export_dot;
use crate::regions::build_region_tree;

#[derive(Parser, Debug)]
#[command(name = "cobra", version, about = "Cost-based rewriting of database-backed programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the cheapest equivalent program.
    Optimize(OptimizeArgs),
    /// Interpret a program against a JSON database.
    Run(RunArgs),
    /// Print the region tree of the entry function.
    DumpRegions(SourceArgs),
    /// Print the expanded region DAG of the entry function.
    DumpDag(DagArgs),
}

#[derive(Args, Debug)]
pub struct SourceArgs {
    pub file: PathBuf,
    /// Function to process; optional when the program has one function.
    #[arg(long)]
    pub entry: Option<String>,
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    /// Comma-separated rule names, applied in priority order.
    #[arg(long, value_delimiter = ',')]
    pub rules: Option<Vec<String>>,
    /// Apply loopToFold's single-accumulator precondition.
    #[arg(long)]
    pub legacy: bool,
    /// Print every rule application to stderr.
    #[arg(long)]
    pub trace_rules: bool,
    /// Write the expanded DAG in DOT format to this path.
    #[arg(long)]
    pub emit_dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub catalog: PathBuf,
    #[command(flatten)]
    pub expand: ExpandArgs,
    /// Per-node cost report on stderr.
    #[arg(long)]
    pub explain: bool,
    /// Every complete plan with its cost, on stderr.
    #[arg(long)]
    pub list_alternatives: bool,
    /// Amortization factor for every prefetch: a number at least 1, or `inf`.
    #[arg(long)]
    pub af: Option<String>,
    /// Replace the catalog's network parameters.
    #[arg(long)]
    pub network: Option<String>,
    /// Check the output against the input on a seeded random database.
    #[arg(long)]
    pub self_check: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Database as `{relation: {schema: [...], rows: [[...]]}}`.
    #[arg(long)]
    pub db: PathBuf,
}

#[derive(Args, Debug)]
pub struct DagArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Catalog supplying schemas and foreign keys to the rules.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub expand: ExpandArgs,
}

/// A failure and the exit status it maps to.
struct Failure {
    code: i32,
    message: String,
}

fn user(message: impl ToString) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn internal(message: impl ToString) -> Failure {
    Failure {
        code: 2,
        message: format!("internal error: {}", message.to_string()),
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Failure {
        match e {
            PipelineError::Emit(_) | PipelineError::Budget(_) => internal(e),
            _ => user(e),
        }
    }
}

/// Runs the command line `argv` (program name first), writing results to
/// `out` and diagnostics to `err`; returns the exit status.
pub fn main_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli, out, err)));
    let outcome = match result {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(internal(msg))
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "cobra: {}", f.message);
            f.code
        }
    }
}

fn read_source(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            user(format!("{}: no such file", path.display()))
        } else {
            user(format!("{}: {e}", path.display()))
        }
    })
}

fn rules(args: &ExpandArgs) -> Vec<&str> {
    match &args.rules {
        Some(r) => r.iter().map(String::as_str).filter(|s| !s.is_empty()).collect(),
        None => ALL_RULES.to_vec(),
    }
}

fn after_expand(ex: &Expanded, args: &ExpandArgs, err: &mut dyn Write) -> Result<(), Failure> {
    if args.trace_rules {
        let _ = write!(err, "{}", ex.report.trace());
    }
    let problems = ex.dag.audit();
    if !problems.is_empty() {
        return Err(internal(format!("malformed DAG: {}", problems.join("; "))));
    }
    if let Some(p) = &args.emit_dot {
        std::fs::write(p, export_dot(&ex.dag)).map_err(|e| user(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<(CostCatalog<f64>, QueryStats<f64>), Failure> {
    if !path.exists() {
        return Err(user(format!("{}: no such file", path.display())));
    }
    load_catalog(path).map_err(user)
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Optimize(a) => optimize_cmd(a, out, err),
        Command::Run(a) => {
            let src = read_source(&a.source.file)?;
            let program = frontend::parse(&src).map_err(user)?;
            let f = entry_function(&program, a.source.entry.as_deref())?;
            let db_text = read_source(&a.db)?;
            let db = Database::from_json(&db_text).map_err(user)?;
            let state = run(&program, &f.name, &db).map_err(|e| user(format!("runtime error: {}", e.message)))?;
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&state_json(&state)).unwrap());
            Ok(())
        }
        Command::DumpRegions(a) => {
            let src = read_source(&a.file)?;
            let program = frontend::parse(&src).map_err(user)?;
            let f = entry_function(&program, a.entry.as_deref())?;
            let tree = build_region_tree(f, &build_cfg(f));
            let _ = write!(out, "{}", tree.dump());
            Ok(())
        }
        Command::DumpDag(a) => {
            let src = read_source(&a.source.file)?;
            let ctx = match &a.catalog {
                Some(p) => load(p)?.1.rule_context(a.expand.legacy),
                None => RuleContext {
                    legacy: a.expand.legacy,
                    ..RuleContext::default()
                },
            };
            let ex = expand_source(&src, a.source.entry.as_deref(), &rules(&a.expand), &ctx)?;
            after_expand(&ex, &a.expand, err)?;
            let _ = write!(out, "{}", ex.dag);
            Ok(())
        }
    }
}

fn optimize_cmd(a: &OptimizeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let src = read_source(&a.source.file)?;
    let (mut catalog, stats) = load(&a.catalog)?;
    if let Some(af) = &a.af {
        let v: f64 = crate::cost::catalog::parse_af_text(af).map_err(user)?;
        if v.is_nan() || v < 1.0 {
            return Err(user(format!("--af {af}: amortization factor must be at least 1")));
        }
        catalog.global_af = Some(v);
    }
    if let Some(n) = &a.network {
        let profile = NetworkProfile::parse(n)
            .ok_or_else(|| user(format!("--network {n}: expected slow-remote, fast-local or custom")))?;
        if let Some(net) = profile.network() {
            catalog.network = net;
        }
    }
    let program = frontend::parse(&src).map_err(user)?;
    frontend::check_relations(&program, &|r| stats.relations.contains_key(r)).map_err(user)?;
    let opt = optimize(&src, a.source.entry.as_deref(), &rules(&a.expand), &catalog, &stats, a.expand.legacy)?;
    after_expand(&opt.expanded, &a.expand, err)?;
    if a.explain {
        let _ = write!(err, "{}", explain(&opt.plan, &opt.expanded.dag));
    }
    if a.list_alternatives {
        let model = CostModel::new(&catalog, &stats);
        let table = list_alternatives(&opt.expanded.dag, &model, 256).map_err(user)?;
        let _ = write!(err, "{table}");
    }
    let emitted = frontend::parse(&opt.text).map_err(|e| internal(format!("emitted program does not parse: {e}")))?;
    if a.self_check {
        let ctx = stats.rule_context(false);
        let db = random_database(&ctx.columns, &ctx.foreign_keys, &GenConfig::default());
        let entry = &opt.expanded.entry;
        let before = run(&opt.expanded.program, entry, &db);
        let after = run(&emitted, entry, &db);
        match (before, after) {
            (Ok(b), Ok(x)) if b.same_result(&x) => {
                let _ = writeln!(err, "self-check passed");
            }
            (Err(_), Err(_)) => {
                let _ = writeln!(err, "self-check skipped: the input fails on the random database");
            }
            _ => return Err(internal("self-check failed: output differs from input")),
        }
    }
    let _ = write!(out, "{}", opt.text);
    Ok(())
}

/// JSON rendering of a run's observable state and counters.
pub fn state_json(s: &OutputState) -> serde_json::Value {
    json!({
        "vars": s.vars.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<_, _>>(),
        "returned": s.returned.as_ref().map(|v| v.to_json()),
        "printed": s.printed.iter().map(|v| v.to_json()).collect::<Vec<_>>(),
        "counters": {
            "queries": s.counters.queries,
            "rows": s.counters.rows,
            "operations": s.counters.operations,
        },
    })
}
