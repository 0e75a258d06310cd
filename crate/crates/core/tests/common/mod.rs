#![allow(dead_code)]

pub mod props;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use ers_core::compose::ComposedSystem;
use ers_core::egrw::{rule_text, AtomicModule, EgRule};
use ers_core::explore::{annotate, explore, Bounds, Semantics, StateGraph};
use ers_core::kernel::term::{Subst, Term, Var};
use ers_core::mel::Condition;
use ers_core::syntax::{self, Loaded, Resolved};

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub const CORPUS: &[&str] = &["trains", "mutex", "computer", "connectors", "diagrams", "finiteset"];

pub fn corpus(file: &str) -> Loaded {
    let path = models_dir().join(format!("{file}.ers"));
    let l = syntax::load_files(&[path]).expect("corpus file is readable");
    let errs: Vec<String> = l.errors().map(|d| d.to_string()).collect();
    assert!(errs.is_empty(), "{file}: {errs:#?}");
    l
}

pub fn golden(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(p).expect("golden file")
}

pub fn atomic(l: &Loaded, name: &str) -> Arc<AtomicModule> {
    match l.get(name).unwrap() {
        Resolved::Atomic(a) => a.clone(),
        other => panic!("{} is not atomic", other.name()),
    }
}

pub fn composed(l: &Loaded, name: &str) -> Arc<ComposedSystem> {
    match l.get(name).unwrap() {
        Resolved::Composed(c) => c.clone(),
        other => panic!("{} is not composed", other.name()),
    }
}

pub fn graph(sem: &dyn Semantics, depth: Option<usize>) -> StateGraph {
    let g = explore(sem, Bounds { max_nodes: 100_000, max_depth: depth }).unwrap();
    annotate(sem, &g).unwrap()
}

/// Graph of a module and of its materialized split, both to the given depth.
pub fn split_pair(m: &Resolved, depth: usize) -> (StateGraph, StateGraph) {
    let a = graph(&*m.semantics(), Some(depth));
    let plain = m.split().unwrap();
    let b = graph(&ers_core::split::PlainSemantics(&plain), Some(depth));
    (a, b)
}

/// Composed systems of the corpus and a few atomic ones, as `(file, module)`.
pub fn commutation_targets() -> Vec<(&'static str, &'static str)> {
    vec![
        ("trains", "TRAIN"),
        ("trains", "RECKONER"),
        ("trains", "CONTROLLER"),
        ("trains", "RECKONED-TRAINS"),
        ("trains", "CONTROLLED-TRAINS"),
        ("mutex", "MUTEX"),
        ("mutex", "MUTEX-TRAINS"),
        ("computer", "MEMORY"),
        ("computer", "COMPUTER"),
        ("connectors", "ADDER"),
        ("connectors", "ORDERED"),
        ("diagrams", "DIAGRAM-L"),
        ("diagrams", "DIAGRAM-LX"),
        ("diagrams", "DIAGRAM-LY"),
        ("diagrams", "DIAGRAM-LZ"),
        ("diagrams", "DIAGRAM-LXY"),
        ("finiteset", "CELL"),
    ]
}

fn int_at(sem: &dyn Semantics, path: &str, t: &ers_core::kernel::term::Term) -> Option<i64> {
    sem.eval_path(path, t).unwrap().defined().and_then(|v| v.as_int())
}

/// Exhaustive check of the adder: `(stages with all three values defined,
/// violations of n' = n1 + n2)`.
pub fn adder_check() -> (usize, usize) {
    let l = corpus("connectors");
    let sem = ers_core::explore::ComposedSemantics(composed(&l, "ADDER"));
    let g = explore(&sem, Bounds::default()).unwrap();
    assert!(!g.truncated);
    let (mut seen, mut bad) = (0, 0);
    for t in &g.terms {
        if let (Some(a), Some(b), Some(s)) =
            (int_at(&sem, "S1.n", t), int_at(&sem, "S2.n", t), int_at(&sem, "DISPLAY.n'", t))
        {
            seen += 1;
            if a + b != s {
                bad += 1;
            }
        }
    }
    (seen, bad)
}

/// Exhaustive check of the ordering connector: `(state stages, violations
/// of LOW.p < HIGH.p)`.
pub fn ordered_check() -> (usize, usize) {
    let l = corpus("connectors");
    let sem = ers_core::explore::ComposedSemantics(composed(&l, "ORDERED"));
    let g = explore(&sem, Bounds::default()).unwrap();
    assert!(!g.truncated);
    let (mut seen, mut bad) = (0, 0);
    for t in &g.terms {
        if sem.sort_label(t).unwrap() != "State" {
            continue;
        }
        seen += 1;
        match (int_at(&sem, "LOW.p", t), int_at(&sem, "HIGH.p", t)) {
            (Some(p), Some(q)) if p < q => {}
            _ => bad += 1,
        }
    }
    (seen, bad)
}

/// Renames variables to V0, V1, ... in order of first occurrence.
pub fn alpha(r: &EgRule) -> String {
    let mut ren = Subst::new();
    let mut n = 0;
    let mut visit = |t: &Term, ren: &mut Subst| {
        for v in ordered_vars(t) {
            if !ren.contains(&v) {
                ren.insert(v.clone(), Term::var(&format!("V{n}"), &v.sort));
                n += 1;
            }
        }
    };
    for t in [&r.lhs, &r.label, &r.rhs] {
        visit(t, &mut ren);
    }
    for c in &r.conds {
        match c {
            Condition::Eq(a, b) | Condition::Match(a, b) => {
                visit(a, &mut ren);
                visit(b, &mut ren);
            }
            Condition::Sort(a, _) => visit(a, &mut ren),
        }
    }
    rule_text(&EgRule {
        lhs: r.lhs.substitute(&ren),
        label: r.label.substitute(&ren),
        rhs: r.rhs.substitute(&ren),
        conds: r.conds.iter().map(|c| c.map_terms(&mut |t| t.substitute(&ren))).collect(),
    })
}

pub fn ordered_vars(t: &Term) -> Vec<Var> {
    let mut out = Vec::new();
    fn go(t: &Term, out: &mut Vec<Var>) {
        if let Some(v) = t.as_var() {
            out.push(v.clone());
        }
        for a in t.args() {
            go(a, out);
        }
    }
    go(t, &mut out);
    out
}

pub fn ints(r: std::ops::RangeInclusive<i64>) -> Vec<Term> {
    r.map(Term::int).collect()
}

pub type Edges = BTreeSet<(String, String)>;

pub fn edge_table(file: &str, module: &str) -> Edges {
    let l = corpus(file);
    let m = atomic(&l, module);
    let mut out = BTreeSet::new();
    let mut todo: Vec<Term> = (0..2).map(|i| Term::app("t", vec![Term::int(i)])).collect();
    let mut seen = BTreeSet::new();
    while let Some(s) = todo.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        for n in m.half_successors(&s).unwrap() {
            out.insert((s.to_string(), n.to_string()));
            todo.push(n);
        }
    }
    out
}

pub fn edges(list: &[(&str, &str)]) -> Edges {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

/// Expected half-step tables of the five diagram modules.
pub fn diagram_cases() -> Vec<(&'static str, Edges)> {
    let l_only = edges(&[("t(0)", "l"), ("t(1)", "l"), ("l", "t'(0)"), ("l", "t'(1)")]);
    let l_x = edges(&[
        ("t(0)", "l(0)"),
        ("t(1)", "l(1)"),
        ("l(0)", "t'(0)"),
        ("l(0)", "t'(1)"),
        ("l(1)", "t'(0)"),
        ("l(1)", "t'(1)"),
    ]);
    let l_y = edges(&[
        ("t(0)", "l(0)"),
        ("t(0)", "l(1)"),
        ("t(1)", "l(0)"),
        ("t(1)", "l(1)"),
        ("l(0)", "t'(0)"),
        ("l(1)", "t'(1)"),
    ]);
    let l_z = edges(&[
        ("t(0)", "l(0)"),
        ("t(0)", "l(1)"),
        ("t(1)", "l(0)"),
        ("t(1)", "l(1)"),
        ("l(0)", "t'(0)"),
        ("l(0)", "t'(1)"),
        ("l(1)", "t'(0)"),
        ("l(1)", "t'(1)"),
    ]);
    let l_xy = edges(&[
        ("t(0)", "l(0, 0)"),
        ("t(0)", "l(0, 1)"),
        ("t(1)", "l(1, 0)"),
        ("t(1)", "l(1, 1)"),
        ("l(0, 0)", "t'(0)"),
        ("l(0, 1)", "t'(1)"),
        ("l(1, 0)", "t'(0)"),
        ("l(1, 1)", "t'(1)"),
    ]);
    vec![("DIAGRAM-L", l_only), ("DIAGRAM-LX", l_x), ("DIAGRAM-LY", l_y), ("DIAGRAM-LZ", l_z), ("DIAGRAM-LXY", l_xy)]
}
