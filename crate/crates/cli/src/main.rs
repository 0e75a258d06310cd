//! `ers`: check, run and translate `.ers` specifications.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ers_core::explore::{self, Bounds, Exploration, SearchResult, Semantics, Verdict};
use ers_core::formula::Formula;
use ers_core::split::PlainModule;
use ers_core::syntax::diag::code;
use ers_core::syntax::{self, pretty, Diagnostic, Loaded, Resolved};
use ers_core::Term;

#[derive(Parser)]
#[command(name = "ers", version, about = "Egalitarian rewrite systems: check, explore and split specifications")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and resolve files, printing diagnostics.
    Check { files: Vec<PathBuf> },
    /// Normalize a term and print it with its least sort.
    Reduce {
        #[command(flatten)]
        m: ModArgs,
        term: String,
    },
    /// Print the successors of a stage.
    Step {
        #[command(flatten)]
        m: ModArgs,
        term: String,
    },
    /// Explore the reachable stages breadth first.
    Explore {
        #[command(flatten)]
        m: ModArgs,
        #[command(flatten)]
        b: BoundArgs,
        /// Write the graph in Graphviz format.
        #[arg(long, conflicts_with = "json")]
        dot: Option<PathBuf>,
        /// Write the graph as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check that a formula holds at every reachable stage.
    Invariant {
        #[command(flatten)]
        m: ModArgs,
        #[arg(short = 'f', long = "formula")]
        formula: String,
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Find a shortest trace to a stage satisfying a goal.
    Search {
        #[command(flatten)]
        m: ModArgs,
        #[arg(short = 'g', long = "goal")]
        goal: String,
        #[command(flatten)]
        b: BoundArgs,
    },
    /// Translate a module into a plain rewrite system.
    Split {
        #[command(flatten)]
        m: ModArgs,
        /// Decide membership conditions statically and drop dead rules.
        #[arg(long)]
        prune: bool,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModArgs {
    file: PathBuf,
    #[arg(short = 'm', long = "module")]
    module: String,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 100_000)]
    max_nodes: usize,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl BoundArgs {
    fn bounds(&self) -> Bounds {
        Bounds { max_nodes: self.max_nodes, max_depth: self.max_depth }
    }
}

/// Exit status: 0 holds/found/ok, 1 violated/not found, 2 error.
struct Fail(String);

type Out = Result<(u8, Value, String), Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.format == Format::Json;
    match run(cli.cmd) {
        Ok((status, v, text)) => {
            if json {
                let mut v = v;
                v["schema"] = json!(1);
                println!("{}", serde_json::to_string_pretty(&v).unwrap());
            } else if !text.is_empty() {
                print!("{text}");
            }
            ExitCode::from(status)
        }
        Err(Fail(msg)) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&json!({ "schema": 1, "error": msg })).unwrap());
            } else {
                eprint!("{msg}");
                if !msg.ends_with('\n') {
                    eprintln!();
                }
            }
            ExitCode::from(2)
        }
    }
}

fn diag_text(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| format!("{d}\n")).collect()
}

fn load(files: &[PathBuf]) -> Result<Loaded, Fail> {
    syntax::load_files(files).map_err(|e| Fail(format!("cannot read input: {e}")))
}

/// Loads the file and picks the module; any error diagnostic aborts.
fn module(m: &ModArgs) -> Result<(Loaded, Resolved), Fail> {
    let l = load(std::slice::from_ref(&m.file))?;
    if l.has_errors() {
        return Err(Fail(diag_text(&l.diagnostics)));
    }
    let r = l.get(&m.module).map_err(|e| Fail(e.to_string()))?.clone();
    Ok((l, r))
}

fn err(e: ers_core::Error) -> Fail {
    Fail(e.to_string())
}

fn kind_name(r: &Resolved) -> &'static str {
    match r {
        Resolved::Atomic(_) => "atomic",
        Resolved::Composed(_) => "composed",
        Resolved::Plain(_) => "plain",
    }
}

fn trace_json(sem: &dyn Semantics, t: &[Term]) -> Result<Value, Fail> {
    t.iter()
        .map(|s| Ok(json!({ "term": s.to_string(), "sort": sem.sort_label(s).map_err(err)? })))
        .collect::<Result<Vec<_>, Fail>>()
        .map(Value::Array)
}

fn trace_text(sem: &dyn Semantics, t: &[Term]) -> Result<String, Fail> {
    let mut s = String::new();
    for (i, x) in t.iter().enumerate() {
        s.push_str(&format!("  {i:>3}  {x} : {}\n", sem.sort_label(x).map_err(err)?));
    }
    Ok(s)
}

fn stats_json(g: &Exploration) -> Value {
    json!({ "nodes": g.terms.len(), "edges": g.edges.len(), "truncated": g.truncated, "frontier": g.frontier })
}

fn run(cmd: Cmd) -> Out {
    match cmd {
        Cmd::Check { files } => {
            if files.is_empty() {
                return Err(Fail("check needs at least one file".into()));
            }
            let l = load(&files)?;
            let mods: Vec<Value> = l
                .order
                .iter()
                .filter_map(|n| l.modules.get(n).map(|m| json!({ "name": n, "kind": kind_name(m) })))
                .collect();
            let mut text = diag_text(&l.diagnostics);
            let errors = l.errors().count();
            let warnings = l.diagnostics.len() - errors;
            text.push_str(&format!("{} modules, {errors} errors, {warnings} warnings\n", l.modules.len()));
            let v = json!({ "modules": mods, "diagnostics": l.diagnostics });
            Ok((if errors > 0 { 2 } else { 0 }, v, text))
        }
        Cmd::Reduce { m, term } => {
            let (_, r) = module(&m)?;
            let sem = r.semantics();
            let t = syntax::parse_stage(&r, &term).map_err(err)?;
            let sort = sem.sort_label(&t).map_err(err)?;
            Ok((0, json!({ "term": t.to_string(), "sort": sort }), format!("{t} : {sort}\n")))
        }
        Cmd::Step { m, term } => {
            let (_, r) = module(&m)?;
            let sem = r.semantics();
            let t = syntax::parse_stage(&r, &term).map_err(err)?;
            let next = sem.successors(&t).map_err(err)?;
            let mut text = String::new();
            for n in &next {
                text.push_str(&format!("{n} : {}\n", sem.sort_label(n).map_err(err)?));
            }
            if next.is_empty() {
                text.push_str("no successors\n");
            }
            Ok((0, json!({ "from": t.to_string(), "successors": trace_json(&*sem, &next)? }), text))
        }
        Cmd::Explore { m, b, dot, json: json_path } => {
            let (_, r) = module(&m)?;
            let sem = r.semantics();
            let g = explore::explore(&*sem, b.bounds()).map_err(err)?;
            if let Some(p) = dot {
                write_file(&p, &explore::to_dot(&*sem, &g).map_err(err)?)?;
            }
            if let Some(p) = json_path {
                let graph = explore::annotate(&*sem, &g).map_err(err)?;
                write_file(&p, &serde_json::to_string_pretty(&graph).unwrap())?;
            }
            let text = format!(
                "{}: {} stages, {} edges{}\n",
                sem.name(),
                g.terms.len(),
                g.edges.len(),
                if g.truncated {
                    format!(" (truncated, {} stages left unexplored)", g.frontier)
                } else {
                    String::new()
                }
            );
            Ok((0, stats_json(&g), text))
        }
        Cmd::Invariant { m, formula, b } => {
            let (_, r) = module(&m)?;
            let sem = r.semantics();
            let f = Formula::parse(&formula).map_err(err)?;
            let (v, g) = explore::check_invariant(&*sem, &f, b.bounds()).map_err(err)?;
            let stats = stats_json(&g);
            Ok(match v {
                Verdict::HoldsExhaustive => (
                    0,
                    json!({ "verdict": "holds", "exhaustive": true, "stats": stats }),
                    format!("HOLDS (exhaustive, {} stages)\n", g.terms.len()),
                ),
                Verdict::HoldsWithinBounds => (
                    0,
                    json!({ "verdict": "holds", "exhaustive": false, "stats": stats }),
                    format!("HOLDS within bounds ({} stages, {} left unexplored)\n", g.terms.len(), g.frontier),
                ),
                Verdict::Violated(t) => (
                    1,
                    json!({ "verdict": "violated", "trace": trace_json(&*sem, &t)?, "stats": stats }),
                    format!("VIOLATED after {} half-steps:\n{}", t.len() - 1, trace_text(&*sem, &t)?),
                ),
            })
        }
        Cmd::Search { m, goal, b } => {
            let (_, r) = module(&m)?;
            let sem = r.semantics();
            let (res, g) = explore::search(&*sem, &goal, b.bounds()).map_err(err)?;
            let stats = stats_json(&g);
            Ok(match res {
                SearchResult::Found(t) => (
                    0,
                    json!({ "found": true, "trace": trace_json(&*sem, &t)?, "stats": stats }),
                    format!("FOUND after {} half-steps:\n{}", t.len() - 1, trace_text(&*sem, &t)?),
                ),
                SearchResult::NotFound { truncated } => (
                    1,
                    json!({ "found": false, "exhaustive": !truncated, "stats": stats }),
                    format!("NOT FOUND ({})\n", if truncated { "within bounds" } else { "exhaustive" }),
                ),
            })
        }
        Cmd::Split { m, prune, output } => {
            let (_, r) = module(&m)?;
            let mut p = r.split().map_err(err)?;
            if prune {
                match &mut p {
                    PlainModule::Product(pp) => pp.prune().map_err(err)?,
                    PlainModule::Flat(_) => {}
                }
            }
            let mut warnings = Vec::new();
            if let PlainModule::Product(pp) = &p {
                for c in &pp.partial_endpoints {
                    warnings.push(Diagnostic::warning(
                        code::PARTIAL_CRITERION,
                        format!(
                            "criterion {c} relates properties not declared [total]; the membership uses agree(_,_)"
                        ),
                        None,
                    ));
                }
            }
            let src = pretty::print_plain(&p);
            let mut text = diag_text(&warnings);
            let mut v = json!({ "module": p.name().to_string(), "rules": p.rule_count(), "diagnostics": warnings });
            if let PlainModule::Product(pp) = &p {
                let s = &pp.stats;
                v["stats"] = json!({
                    "combinations": s.combinations, "generated": s.generated, "distinct": s.distinct,
                    "deleted": s.deleted, "conditions_removed": s.conditions_removed, "pruned": s.pruned,
                });
                text.push_str(&format!(
                    "{}: {} combinations of rules, {} generated, {} distinct{}\n",
                    pp.name,
                    s.combinations,
                    s.generated,
                    s.distinct,
                    if s.pruned {
                        format!("; pruning deleted {} and removed {} conditions", s.deleted, s.conditions_removed)
                    } else {
                        String::new()
                    }
                ));
            }
            match output {
                Some(path) => {
                    write_file(&path, &src)?;
                    text.push_str(&format!("wrote {} rules to {}\n", p.rule_count(), path.display()));
                    v["output"] = json!(path.display().to_string());
                }
                None => {
                    text.push_str(&src);
                    v["source"] = json!(src);
                }
            }
            Ok((0, v, text))
        }
    }
}

fn write_file(p: &Path, s: &str) -> Result<(), Fail> {
    std::fs::write(p, s).map_err(|e| Fail(format!("cannot write {}: {e}", p.display())))
}
