//! One PASS/FAIL line per acceptance criterion. Exits nonzero on any failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::props::{self, arith, bipartite, matching, toys};
use common::*;
use ers_core::egrw::{half_successors_enumerated, is_readable_syntactic, make_readable};
use ers_core::explore::{check_invariant, graphs_equal, Bounds, Verdict};
use ers_core::formula::Formula;
use ers_core::kernel::term::Term;
use ers_core::split::{split_composed, PlainModule};
use ers_core::syntax::{self, pretty};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn invariant(l: &syntax::Loaded, module: &str, f: &str, bounds: Bounds) -> Result<Verdict, String> {
    let sem = l.get(module).map_err(|e| e.to_string())?.semantics();
    let f = Formula::parse(f).map_err(|e| e.to_string())?;
    Ok(check_invariant(&*sem, &f, bounds).map_err(|e| e.to_string())?.0)
}

fn mutex() -> Result<String, String> {
    let start = Instant::now();
    let l = corpus("mutex");
    for f in ["not (TRAIN1.isCrossing and TRAIN2.isCrossing)", "not (MUTEX.grants1 and MUTEX.grants2)"] {
        let v = invariant(&l, "MUTEX-TRAINS", f, Bounds::default())?;
        ensure(v == Verdict::HoldsExhaustive, format!("{f}: {v:?}"))?;
    }
    let t = start.elapsed().as_secs_f64();
    ensure(t < 1.0, format!("took {t:.2}s"))?;
    Ok(format!("both invariants hold exhaustively in {t:.3}s"))
}

fn trains() -> Result<String, String> {
    let start = Instant::now();
    let l = corpus("trains");
    let b = Bounds { max_nodes: 50_000, max_depth: Some(12) };
    let v = invariant(&l, "CONTROLLED-TRAINS", "not RECKONER.crash", b)?;
    ensure(v == Verdict::HoldsWithinBounds, format!("controlled: {v:?}"))?;
    let v = invariant(&l, "RECKONED-TRAINS", "not RECKONER.crash", b)?;
    let Verdict::Violated(trace) = v else { return Err(format!("reckoned: {v:?}")) };
    let shown: Vec<String> = trace.iter().map(|t| t.to_string()).collect();
    ensure(
        shown
            == [
                "< stopped, stopped, 2 >",
                "< moving, stopped, lmoving | 2 >",
                "< stopped, stopped, 1 >",
                "< moving, stopped, lmoving | 1 >",
                "< stopped, stopped, 0 >",
            ],
        format!("trace {shown:?}"),
    )?;
    let t = start.elapsed().as_secs_f64();
    ensure(t < 5.0, format!("took {t:.2}s"))?;
    Ok(format!("no crash to depth 12, crash after 4 half-steps without controller ({t:.2}s)"))
}

fn commutation() -> Result<String, String> {
    let targets = commutation_targets();
    let mut worst = 0.0f64;
    for (f, m) in &targets {
        let start = Instant::now();
        let l = corpus(f);
        let (a, b) = split_pair(l.get(m).unwrap(), 8);
        graphs_equal(&a, &b).map_err(|e| format!("{m}: {e}"))?;
        let t = start.elapsed().as_secs_f64();
        ensure(t < 10.0, format!("{m} took {t:.2}s"))?;
        worst = worst.max(t);
    }
    Ok(format!("{} systems agree to depth 8, slowest {worst:.2}s", targets.len()))
}

fn split_counts() -> Result<String, String> {
    let l = corpus("trains");
    let mut p = split_composed(&composed(&l, "RECKONED-TRAINS")).map_err(|e| e.to_string())?;
    let s = &p.stats;
    ensure((s.combinations, s.generated, s.distinct) == (24, 168, 144), format!("{s:?}"))?;
    p.prune().map_err(|e| e.to_string())?;
    ensure(p.rules.len() == 6, format!("{} rules after pruning", p.rules.len()))?;
    ensure(pretty::print_plain(&PlainModule::Product(p)) == golden("reckoned_trains_pruned.ers"), "golden mismatch")?;
    Ok("24 combinations, 168 rules, 144 distinct, 6 after pruning".into())
}

fn readability() -> Result<String, String> {
    let l = syntax::load_ok(
        "mod R is subsort Int < State . op a : -> Trans . var X : Int . rl X =[ a ]=> X . endm
         mod P is subsort Int < State . op a : -> Trans . vars Xt Xu Xt' Xu' : Int .
           crl Xt =[ a ]=> Xu if Xt = Xu' /\\ Xt' = Xu . endm",
    )
    .map_err(|e| format!("{e:?}"))?;
    let m = atomic(&l, "R");
    let input = &m.rules[0];
    let out = make_readable(input);
    ensure(alpha(&out) == alpha(&atomic(&l, "P").rules[0]), alpha(&out))?;
    ensure(is_readable_syntactic(&out) && !is_readable_syntactic(input), "readability check")?;
    let domain: Vec<Term> = ints(-3..=3).into_iter().chain([Term::constant("a")]).collect();
    for s in &domain {
        let a = half_successors_enumerated(&m, input, s, &domain).map_err(|e| e.to_string())?;
        let b = half_successors_enumerated(&m, &out, s, &domain).map_err(|e| e.to_string())?;
        ensure(a == b, format!("from {s}"))?;
    }
    Ok("X =[ a ]=> X becomes a readable rule with the same half-steps".into())
}

fn diagrams() -> Result<String, String> {
    for (m, want) in diagram_cases() {
        let got = edge_table("diagrams", m);
        ensure(got == want, format!("{m}: {got:?}"))?;
        let two: BTreeSet<_> =
            got.iter().flat_map(|(a, b)| got.iter().filter(move |(c, _)| b == c).map(move |(_, d)| (a, d))).collect();
        ensure(two.len() == 4, format!("{m}: {} two-step pairs", two.len()))?;
    }
    Ok("all five transition-term choices give the expected graphs".into())
}

fn connectors() -> Result<String, String> {
    let (seen, bad) = adder_check();
    ensure(seen > 0 && bad == 0, format!("adder: {bad} of {seen} stages wrong"))?;
    let (seen2, bad) = ordered_check();
    ensure(seen2 > 0 && bad == 0, format!("ordered: {bad} of {seen2} stages wrong"))?;
    Ok(format!("adder ({seen} stages) and ordered pair ({seen2} states) respect their relations"))
}

fn algebra() -> Result<String, String> {
    props::run(100, 0u32..(1 << 15), toys::algebra_laws)?;
    Ok("100 random criterion sets".into())
}

fn properties() -> Result<String, String> {
    props::run(1000, matching::case_strategy(), matching::agrees_with_brute_force)
        .map_err(|e| format!("matching: {e}"))?;
    props::run(1000, matching::canon_strategy(), matching::canonicalize_idempotent)
        .map_err(|e| format!("canonicalize: {e}"))?;
    props::run(1000, arith::expr(), arith::normal_form_is_fixpoint).map_err(|e| format!("normalize: {e}"))?;
    props::run(1000, toys::restriction_strategy(), toys::added_criteria_only_remove)
        .map_err(|e| format!("restriction: {e}"))?;
    props::run(1000, bipartite::strategy(), bipartite::alternates).map_err(|e| format!("alternation: {e}"))?;
    Ok("5 properties x 1000 cases".into())
}

fn main() {
    let checks: &[(&str, Check)] = &[
        ("mutex-invariant", mutex),
        ("train-crash", trains),
        ("split-commutes", commutation),
        ("split-counts", split_counts),
        ("readability", readability),
        ("five-diagrams", diagrams),
        ("connectors", connectors),
        ("composition-algebra", algebra),
        ("property-suites", properties),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let r = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match r {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
