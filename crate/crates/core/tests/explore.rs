mod common;

use std::time::Instant;

use common::*;
use ers_core::explore::{
    annotate, check_invariant, explore, search, to_dot, Bounds, ComposedSemantics, SearchResult, Semantics, StateGraph,
    Verdict,
};
use ers_core::formula::Formula;
use ers_core::kernel::term::Term;
use ers_core::syntax;
use proptest::prelude::*;

fn invariant(file: &str, module: &str, f: &str, bounds: Bounds) -> Verdict {
    let l = corpus(file);
    let sem = l.get(module).unwrap().semantics();
    check_invariant(&*sem, &Formula::parse(f).unwrap(), bounds).unwrap().0
}

fn shown(trace: &[Term]) -> Vec<String> {
    trace.iter().map(|t| t.to_string()).collect()
}

fn valid_trace(sem: &dyn Semantics, trace: &[Term]) -> bool {
    trace[0] == sem.initial().unwrap() && trace.windows(2).all(|w| sem.successors(&w[0]).unwrap().contains(&w[1]))
}

#[test]
fn mutual_exclusion_holds_in_both_forms() {
    let start = Instant::now();
    for f in ["not (TRAIN1.isCrossing and TRAIN2.isCrossing)", "not (MUTEX.grants1 and MUTEX.grants2)"] {
        assert_eq!(invariant("mutex", "MUTEX-TRAINS", f, Bounds::default()), Verdict::HoldsExhaustive, "{f}");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn mutex_without_the_controller_can_crash() {
    let extra = "mod FREE-TRAINS is pr TRAIN1 || TRAIN2 . endm";
    let text = std::fs::read_to_string(models_dir().join("mutex.ers")).unwrap() + extra;
    let l = syntax::load_ok(&text).unwrap();
    let sem = l.get("FREE-TRAINS").unwrap().semantics();
    let f = Formula::parse("not (TRAIN1.isCrossing and TRAIN2.isCrossing)").unwrap();
    let (v, _) = check_invariant(&*sem, &f, Bounds::default()).unwrap();
    let Verdict::Violated(trace) = v else { panic!("expected a violation") };
    assert!(valid_trace(&*sem, &trace));
}

#[test]
fn controlled_trains_do_not_crash_within_bounds() {
    let b = Bounds { max_nodes: 50_000, max_depth: Some(12) };
    assert_eq!(invariant("trains", "CONTROLLED-TRAINS", "not RECKONER.crash", b), Verdict::HoldsWithinBounds);
}

#[test]
fn reckoned_trains_crash_after_four_half_steps() {
    let l = corpus("trains");
    let sem = l.get("RECKONED-TRAINS").unwrap().semantics();
    let b = Bounds { max_nodes: 50_000, max_depth: Some(12) };
    let (v, _) = check_invariant(&*sem, &Formula::parse("not RECKONER.crash").unwrap(), b).unwrap();
    let Verdict::Violated(trace) = v else { panic!("expected a violation") };
    assert_eq!(
        shown(&trace),
        [
            "< stopped, stopped, 2 >",
            "< moving, stopped, lmoving | 2 >",
            "< stopped, stopped, 1 >",
            "< moving, stopped, lmoving | 1 >",
            "< stopped, stopped, 0 >",
        ]
    );
    assert!(valid_trace(&*sem, &trace));
}

#[test]
fn search_finds_shortest_traces() {
    let l = corpus("trains");
    let sem = l.get("CONTROLLED-TRAINS").unwrap().semantics();
    let (r, _) = search(&*sem, "CONTROLLER{consec} and RECKONER.areConsec", Bounds::default()).unwrap();
    let SearchResult::Found(trace) = r else { panic!("not found") };
    assert!(valid_trace(&*sem, &trace));
    assert_eq!(trace.len(), 3);

    let bounded = Bounds { max_nodes: 1000, max_depth: Some(6) };
    let (r, _) = search(&*sem, "RECKONER.crash", bounded).unwrap();
    assert_eq!(r, SearchResult::NotFound { truncated: true });

    let l = corpus("computer");
    let sem = l.get("COMPUTER").unwrap().semantics();
    let (r, _) = search(&*sem, "MEMORY{mem((1, 5) M:Mem)} and PROGRAM{at(4)}", Bounds::default()).unwrap();
    assert!(matches!(r, SearchResult::Found(_)));
    let (r, _) = search(&*sem, "MEMORY{mem((1, 0) M:Mem)} and PROGRAM{at(4)}", Bounds::default()).unwrap();
    assert_eq!(r, SearchResult::NotFound { truncated: false });
}

#[test]
fn computer_runs_its_program() {
    let l = corpus("computer");
    let g = graph(&*l.get("COMPUTER").unwrap().semantics(), None);
    assert!(!g.truncated);
    let outs: std::collections::BTreeSet<usize> = g.edges.iter().map(|e| e[0]).collect();
    let ends: Vec<&str> = g.nodes.iter().filter(|n| !outs.contains(&n.id)).map(|n| n.term.as_str()).collect();
    assert_eq!(ends, ["< at(4), proc(4, void, 0), mem((0, 0) (1, 5)) >"]);
}

#[test]
fn connectors_respect_their_relations() {
    let (seen, bad) = adder_check();
    assert!(seen > 0);
    assert_eq!(bad, 0);
    let (seen, bad) = ordered_check();
    assert!(seen > 0);
    assert_eq!(bad, 0);
}

#[test]
fn properties_are_defined_or_undefined_everywhere() {
    for f in CORPUS {
        let l = corpus(f);
        for name in &l.order {
            let sem = l.get(name).unwrap().semantics();
            let Ok(g) = explore(&*sem, Bounds { max_nodes: 2000, max_depth: Some(6) }) else { continue };
            annotate(&*sem, &g).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}

#[test]
fn dot_and_json_outputs() {
    let l = corpus("trains");
    let sem = l.get("TRAIN").unwrap().semantics();
    let g = explore(&*sem, Bounds::default()).unwrap();
    let dot = to_dot(&*sem, &g).unwrap();
    assert!(dot.contains("[label=\"stopped\", shape=ellipse, penwidth=2]"));
    assert!(dot.contains("[label=\"moving\", shape=box]"));
    let sg = annotate(&*sem, &g).unwrap();
    let json = serde_json::to_string(&sg).unwrap();
    let back: StateGraph = serde_json::from_str(&json).unwrap();
    assert_eq!(back, sg);
    assert_eq!(sg.nodes[1].props["isMoving"], "true");
}

#[test]
fn exploration_respects_bounds() {
    let l = corpus("trains");
    let sem = ComposedSemantics(composed(&l, "CONTROLLED-TRAINS"));
    let g = explore(&sem, Bounds { max_nodes: 10, max_depth: None }).unwrap();
    assert_eq!(g.terms.len(), 10);
    assert!(g.truncated && g.frontier > 0);
    let g = explore(&sem, Bounds { max_nodes: 100_000, max_depth: Some(3) }).unwrap();
    assert!(g.depth.iter().all(|&d| d <= 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_bfs_trace_is_valid(depth in 1usize..9, pick in any::<prop::sample::Index>()) {
        let l = corpus("trains");
        let sem = ComposedSemantics(composed(&l, "CONTROLLED-TRAINS"));
        let g = explore(&sem, Bounds { max_nodes: 100_000, max_depth: Some(depth) }).unwrap();
        let id = pick.index(g.terms.len());
        let trace = g.trace_to(id);
        prop_assert_eq!(trace.len(), g.depth[id] + 1);
        prop_assert!(valid_trace(&sem, &trace));
    }
}
