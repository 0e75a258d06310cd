//! Bounded breadth-first exploration, invariants, search and graph export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compose::ComposedSystem;
use crate::egrw::{AtomicModule, StageKind};
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::kernel::matching::match_term;
use crate::kernel::term::{Subst, Term};
use crate::mel::{PropValue, Theory};

/// A pattern over a whole stage (`part = None`) or one tuple part.
#[derive(Clone, Debug)]
pub struct StagePattern {
    pub part: Option<usize>,
    pub pattern: Term,
}

/// A transition system explored by the engine.
pub trait Semantics: Sync {
    fn name(&self) -> String;
    fn initial(&self) -> Result<Term>;
    fn successors(&self, t: &Term) -> Result<Vec<Term>>;
    /// Sort shown for a node (`State`, `Trans`, ...).
    fn sort_label(&self, t: &Term) -> Result<String>;
    /// Drawn as a box.
    fn is_transition(&self, t: &Term) -> Result<bool>;
    fn property_paths(&self) -> Vec<String>;
    fn eval_path(&self, path: &str, t: &Term) -> Result<PropValue>;
    /// Fails when `path` names no property.
    fn check_path(&self, path: &str) -> Result<()>;
    fn compile_pattern(&self, component: Option<&str>, text: &str) -> Result<StagePattern>;
    /// Theory used to match a pattern part.
    fn pattern_theory(&self, part: Option<usize>) -> &Theory;
}

pub fn pattern_matches(sem: &dyn Semantics, p: &StagePattern, t: &Term) -> Result<bool> {
    let subject = match p.part {
        None => t.clone(),
        Some(i) => t.args().get(i).cloned().ok_or_else(|| Error::IllFormed(format!("{t} has no part {i}")))?,
    };
    let th = p_theory(sem, p);
    let ev = th.eval();
    Ok(!match_term(&ev, &p.pattern, &subject, &Subst::new())?.is_empty())
}

fn p_theory<'a>(sem: &'a dyn Semantics, p: &StagePattern) -> &'a Theory {
    sem.pattern_theory(p.part)
}

pub struct AtomicSemantics(pub Arc<AtomicModule>);

impl Semantics for AtomicSemantics {
    fn name(&self) -> String {
        self.0.name.to_string()
    }
    fn initial(&self) -> Result<Term> {
        self.0.init_stage()
    }
    fn successors(&self, t: &Term) -> Result<Vec<Term>> {
        self.0.half_successors(t)
    }
    fn sort_label(&self, t: &Term) -> Result<String> {
        let ls = self.0.theory.least_sort(t)?;
        Ok(self.0.theory.sig().ref_name(ls))
    }
    fn is_transition(&self, t: &Term) -> Result<bool> {
        Ok(self.0.classify(t)? == Some(StageKind::Trans))
    }
    fn property_paths(&self) -> Vec<String> {
        self.0.theory.sig().props().keys().map(|k| k.to_string()).collect()
    }
    fn eval_path(&self, path: &str, t: &Term) -> Result<PropValue> {
        let p = strip_self(path, &self.0.name);
        self.0.eval_property(p, t)
    }
    fn check_path(&self, path: &str) -> Result<()> {
        let p = strip_self(path, &self.0.name);
        self.0.theory.sig().prop(p).map(|_| ()).ok_or_else(|| Error::Resolve(format!("unknown property {path}")))
    }
    fn compile_pattern(&self, component: Option<&str>, text: &str) -> Result<StagePattern> {
        if let Some(c) = component {
            if c != &*self.0.name {
                return Err(Error::Resolve(format!("{} has no component {c}", self.0.name)));
            }
        }
        let pattern = crate::syntax::parse_pattern(&self.0.theory, text)?;
        Ok(StagePattern { part: None, pattern })
    }
    fn pattern_theory(&self, _part: Option<usize>) -> &Theory {
        &self.0.theory
    }
}

fn strip_self<'a>(path: &'a str, name: &str) -> &'a str {
    path.strip_prefix(name).and_then(|r| r.strip_prefix('.')).unwrap_or(path)
}

pub struct ComposedSemantics(pub Arc<ComposedSystem>);

impl Semantics for ComposedSemantics {
    fn name(&self) -> String {
        self.0.name.to_string()
    }
    fn initial(&self) -> Result<Term> {
        self.0.init_stage()
    }
    fn successors(&self, t: &Term) -> Result<Vec<Term>> {
        self.0.successors(t)
    }
    fn sort_label(&self, t: &Term) -> Result<String> {
        composed_sort_label(&self.0, t)
    }
    fn is_transition(&self, t: &Term) -> Result<bool> {
        Ok(composed_sort_label(&self.0, t)? != "State")
    }
    fn property_paths(&self) -> Vec<String> {
        self.0.property_paths()
    }
    fn eval_path(&self, path: &str, t: &Term) -> Result<PropValue> {
        self.0.eval_path(strip_self(path, &self.0.name), t)
    }
    fn check_path(&self, path: &str) -> Result<()> {
        self.0.resolve_path(strip_self(path, &self.0.name)).map(|_| ())
    }
    fn compile_pattern(&self, component: Option<&str>, text: &str) -> Result<StagePattern> {
        let c = component.ok_or_else(|| {
            Error::Resolve(format!("patterns over {} must name a component: COMP{{pattern}}", self.0.name))
        })?;
        let i = *self
            .0
            .leaf_index()
            .get(c)
            .ok_or_else(|| Error::Resolve(format!("{} has no atomic component {c}", self.0.name)))?;
        let pattern = crate::syntax::parse_pattern(&self.0.leaves()[i].module.theory, text)?;
        Ok(StagePattern { part: Some(i), pattern })
    }
    fn pattern_theory(&self, part: Option<usize>) -> &Theory {
        &self.0.leaves()[part.unwrap_or(0)].module.theory
    }
}

/// `State` when every part is a state, `Trans` when every part is a
/// transition, `Stage` otherwise.
pub fn composed_sort_label(sys: &ComposedSystem, t: &Term) -> Result<String> {
    let parts = sys.parts(t)?;
    let mut kinds = BTreeSet::new();
    for (l, p) in sys.leaves().iter().zip(parts) {
        kinds.insert(l.module.classify(p)?);
    }
    Ok(match (kinds.len(), kinds.iter().next()) {
        (1, Some(Some(StageKind::State))) => "State".into(),
        (1, Some(Some(StageKind::Trans))) => "Trans".into(),
        _ => "Stage".into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub max_nodes: usize,
    pub max_depth: Option<usize>,
}

impl Default for Bounds {
    fn default() -> Bounds {
        Bounds { max_nodes: 100_000, max_depth: None }
    }
}

/// Explored fragment with BFS parents, kept as terms.
#[derive(Clone, Debug, Default)]
pub struct Exploration {
    pub terms: Vec<Term>,
    pub depth: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub edges: Vec<(usize, usize)>,
    pub truncated: bool,
    pub frontier: usize,
    pub index: HashMap<Term, usize>,
}

impl Exploration {
    pub fn trace_to(&self, mut id: usize) -> Vec<Term> {
        let mut out = vec![self.terms[id].clone()];
        while let Some(p) = self.parent[id] {
            out.push(self.terms[p].clone());
            id = p;
        }
        out.reverse();
        out
    }
}

pub fn explore(sem: &dyn Semantics, bounds: Bounds) -> Result<Exploration> {
    Ok(explore_until(sem, bounds, &mut |_| Ok(false))?.0)
}

/// BFS by depth levels, nodes numbered in canonical order within a level.
/// Stops at the first admitted node for which `stop` holds.
pub fn explore_until(
    sem: &dyn Semantics,
    bounds: Bounds,
    stop: &mut dyn FnMut(&Term) -> Result<bool>,
) -> Result<(Exploration, Option<usize>)> {
    let mut g = Exploration::default();
    let init = sem.initial()?;
    g.terms.push(init.clone());
    g.depth.push(0);
    g.parent.push(None);
    g.index.insert(init.clone(), 0);
    if stop(&init)? {
        return Ok((g, Some(0)));
    }
    if bounds.max_nodes == 0 {
        g.truncated = true;
        return Ok((g, None));
    }
    let mut level: Vec<usize> = vec![0];
    let mut depth = 0;
    while !level.is_empty() {
        if bounds.max_depth.is_some_and(|d| depth >= d) {
            let mut open = 0;
            for &id in &level {
                let t = g.terms[id].clone();
                let succ = sem.successors(&t).map_err(|e| e.with_stage(&t.to_string()))?;
                if succ.iter().any(|s| !g.index.contains_key(s)) {
                    open += 1;
                }
            }
            if open > 0 {
                g.truncated = true;
                g.frontier = open;
            }
            break;
        }
        let mut pending: Vec<(usize, Term)> = Vec::new();
        let mut fresh: BTreeMap<Term, usize> = BTreeMap::new();
        for &id in &level {
            let t = g.terms[id].clone();
            let succ = sem.successors(&t).map_err(|e| e.with_stage(&t.to_string()))?;
            for s in succ {
                if !g.index.contains_key(&s) {
                    fresh.entry(s.clone()).or_insert(id);
                }
                pending.push((id, s));
            }
        }
        let room = bounds.max_nodes.saturating_sub(g.terms.len());
        let mut next = Vec::new();
        let mut hit = None;
        let total_fresh = fresh.len();
        for (t, parent) in fresh.into_iter().take(room) {
            let id = g.terms.len();
            g.terms.push(t.clone());
            g.depth.push(depth + 1);
            g.parent.push(Some(parent));
            g.index.insert(t, id);
            next.push(id);
        }
        for (from, s) in pending {
            if let Some(&to) = g.index.get(&s) {
                g.edges.push((from, to));
            }
        }
        g.edges.sort();
        g.edges.dedup();
        for &id in &next {
            if stop(&g.terms[id])? {
                hit = Some(id);
                break;
            }
        }
        if hit.is_some() {
            return Ok((g, hit));
        }
        if total_fresh > room {
            g.truncated = true;
            g.frontier = next.len() + (total_fresh - room);
            break;
        }
        level = next;
        depth += 1;
    }
    Ok((g, None))
}

/// A formula with its atoms resolved against a system.
pub enum Compiled {
    Const(bool),
    Prop(String),
    Cmp(String, Term, bool),
    Pattern(StagePattern),
    Not(Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
    Or(Box<Compiled>, Box<Compiled>),
    Implies(Box<Compiled>, Box<Compiled>),
}

pub fn compile(sem: &dyn Semantics, f: &Formula) -> Result<Compiled> {
    let b = |x: &Formula| compile(sem, x).map(Box::new);
    Ok(match f {
        Formula::Const(c) => Compiled::Const(*c),
        Formula::Prop(p) => {
            sem.check_path(p)?;
            Compiled::Prop(p.clone())
        }
        Formula::Cmp { path, lit, eq } => {
            sem.check_path(path)?;
            Compiled::Cmp(path.clone(), lit.clone(), *eq)
        }
        Formula::Pattern { component, text } => Compiled::Pattern(sem.compile_pattern(component.as_deref(), text)?),
        Formula::Not(a) => Compiled::Not(b(a)?),
        Formula::And(x, y) => Compiled::And(b(x)?, b(y)?),
        Formula::Or(x, y) => Compiled::Or(b(x)?, b(y)?),
        Formula::Implies(x, y) => Compiled::Implies(b(x)?, b(y)?),
    })
}

impl Compiled {
    pub fn eval(&self, sem: &dyn Semantics, t: &Term) -> Result<bool> {
        Ok(match self {
            Compiled::Const(c) => *c,
            Compiled::Prop(p) => sem.eval_path(p, t)?.is_true(),
            Compiled::Cmp(p, lit, eq) => match sem.eval_path(p, t)? {
                PropValue::Defined(v) => (&v == lit) == *eq,
                PropValue::Undefined => false,
            },
            Compiled::Pattern(p) => pattern_matches(sem, p, t)?,
            Compiled::Not(a) => !a.eval(sem, t)?,
            Compiled::And(a, b) => a.eval(sem, t)? && b.eval(sem, t)?,
            Compiled::Or(a, b) => a.eval(sem, t)? || b.eval(sem, t)?,
            Compiled::Implies(a, b) => !a.eval(sem, t)? || b.eval(sem, t)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    HoldsExhaustive,
    HoldsWithinBounds,
    Violated(Vec<Term>),
}

pub fn check_invariant(sem: &dyn Semantics, f: &Formula, bounds: Bounds) -> Result<(Verdict, Exploration)> {
    let c = compile(sem, f)?;
    let (g, hit) = explore_until(sem, bounds, &mut |t| Ok(!c.eval(sem, t)?))?;
    let v = match hit {
        Some(id) => Verdict::Violated(g.trace_to(id)),
        None if g.truncated => Verdict::HoldsWithinBounds,
        None => Verdict::HoldsExhaustive,
    };
    Ok((v, g))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchResult {
    Found(Vec<Term>),
    NotFound { truncated: bool },
}

/// Shortest trace to a stage satisfying the goal. A goal that does not parse
/// or resolve as a formula is read as a bare pattern over the whole stage.
pub fn search(sem: &dyn Semantics, goal: &str, bounds: Bounds) -> Result<(SearchResult, Exploration)> {
    let compiled = match Formula::parse(goal).and_then(|f| compile(sem, &f)) {
        Ok(c) => c,
        Err(first) => match sem.compile_pattern(None, goal) {
            Ok(p) => Compiled::Pattern(p),
            Err(_) => return Err(first),
        },
    };
    let (g, hit) = explore_until(sem, bounds, &mut |t| compiled.eval(sem, t))?;
    let r = match hit {
        Some(id) => SearchResult::Found(g.trace_to(id)),
        None => SearchResult::NotFound { truncated: g.truncated },
    };
    Ok((r, g))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub term: String,
    pub sort: String,
    pub props: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateGraph {
    pub schema: u32,
    pub system: String,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<[usize; 2]>,
    pub init: usize,
    pub truncated: bool,
    pub frontier: usize,
}

pub fn annotate(sem: &dyn Semantics, g: &Exploration) -> Result<StateGraph> {
    let paths = sem.property_paths();
    let mut nodes = Vec::new();
    for (id, t) in g.terms.iter().enumerate() {
        let mut props = BTreeMap::new();
        for p in &paths {
            props.insert(p.clone(), sem.eval_path(p, t)?.to_string());
        }
        nodes.push(GraphNode { id, term: t.to_string(), sort: sem.sort_label(t)?, props });
    }
    Ok(StateGraph {
        schema: 1,
        system: sem.name(),
        nodes,
        edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
        init: 0,
        truncated: g.truncated,
        frontier: g.frontier,
    })
}

/// Compares two graphs by node text; returns the first difference.
pub fn graphs_equal(a: &StateGraph, b: &StateGraph) -> std::result::Result<(), String> {
    let nodes = |g: &StateGraph| -> BTreeMap<String, BTreeMap<String, String>> {
        g.nodes.iter().map(|n| (n.term.clone(), n.props.clone())).collect()
    };
    let (na, nb) = (nodes(a), nodes(b));
    for t in na.keys() {
        if !nb.contains_key(t) {
            return Err(format!("node {t} only in the first graph"));
        }
    }
    for t in nb.keys() {
        if !na.contains_key(t) {
            return Err(format!("node {t} only in the second graph"));
        }
    }
    let init = |g: &StateGraph| g.nodes[g.init].term.clone();
    if init(a) != init(b) {
        return Err(format!("initial nodes differ: {} vs {}", init(a), init(b)));
    }
    let edges = |g: &StateGraph| -> BTreeSet<(String, String)> {
        g.edges.iter().map(|[x, y]| (g.nodes[*x].term.clone(), g.nodes[*y].term.clone())).collect()
    };
    let (ea, eb) = (edges(a), edges(b));
    if let Some((x, y)) = ea.difference(&eb).next() {
        return Err(format!("edge {x} -> {y} only in the first graph"));
    }
    if let Some((x, y)) = eb.difference(&ea).next() {
        return Err(format!("edge {x} -> {y} only in the second graph"));
    }
    for (t, pa) in &na {
        let pb = &nb[t];
        if pa != pb {
            for (k, v) in pa {
                if pb.get(k) != Some(v) {
                    return Err(format!(
                        "annotation {k} at {t}: {v} vs {}",
                        pb.get(k).map(|s| s.as_str()).unwrap_or("(missing)")
                    ));
                }
            }
            return Err(format!("annotations at {t} differ"));
        }
    }
    Ok(())
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz text; transitions are boxes, everything else ellipses.
pub fn to_dot(sem: &dyn Semantics, g: &Exploration) -> Result<String> {
    let mut s = String::new();
    s.push_str(&format!("digraph \"{}\" {{\n", dot_escape(&sem.name())));
    for (id, t) in g.terms.iter().enumerate() {
        let shape = if sem.is_transition(t)? { "box" } else { "ellipse" };
        let extra = if id == 0 { ", penwidth=2" } else { "" };
        s.push_str(&format!("  n{id} [label=\"{}\", shape={shape}{extra}];\n", dot_escape(&t.to_string())));
    }
    for (a, b) in &g.edges {
        s.push_str(&format!("  n{a} -> n{b};\n"));
    }
    s.push_str("}\n");
    Ok(s)
}
