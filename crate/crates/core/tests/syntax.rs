mod common;

use common::*;
use ers_core::compose::Component;
use ers_core::syntax::diag::code;
use ers_core::syntax::{self, pretty, Resolved};

fn codes(text: &str) -> Vec<String> {
    syntax::load_str(text).diagnostics.iter().map(|d| d.code.to_string()).collect()
}

fn without_headers(s: &str) -> String {
    s.lines().filter(|l| !l.trim_start().starts_with("---")).collect::<Vec<_>>().join("\n")
}

fn print_all(l: &syntax::Loaded) -> String {
    l.order.iter().map(|n| pretty::print_resolved(l.get(n).unwrap())).collect::<Vec<_>>().join("\n")
}

#[test]
fn corpus_loads_cleanly_and_is_topmost() {
    for f in CORPUS {
        let l = corpus(f);
        for (name, m) in &l.modules {
            if let Resolved::Atomic(a) = m {
                assert!(a.check_topmost().is_empty(), "{f}: {name} is not topmost");
            }
        }
    }
}

#[test]
fn trains_corpus_has_no_diagnostics() {
    let l = corpus("trains");
    assert!(l.diagnostics.is_empty(), "{:?}", l.diagnostics);
    assert_eq!(
        l.order,
        ["TRAIN", "LTRAIN", "RTRAIN", "RECKONER", "CONTROLLER", "RECKONED-TRAINS", "CONTROLLED-TRAINS"]
    );
}

#[test]
fn controlled_trains_is_a_two_level_tree() {
    let l = corpus("trains");
    let c = composed(&l, "CONTROLLED-TRAINS");
    let leaves: Vec<&str> = c.leaves().iter().map(|l| &*l.name).collect();
    assert_eq!(leaves, ["LTRAIN", "RTRAIN", "RECKONER", "CONTROLLER"]);
    let comp = Component::Composed(c.clone());
    let atoms: Vec<String> = comp.atomic_components().into_iter().map(|n| n.to_string()).collect();
    assert_eq!(atoms, ["CONTROLLER", "LTRAIN", "RECKONER", "RTRAIN"]);
    assert_eq!(c.criteria_set().len(), 5);
}

#[test]
fn every_corpus_file_round_trips() {
    for f in CORPUS {
        let l = corpus(f);
        let once = print_all(&l);
        let again = syntax::load_ok(&once).unwrap_or_else(|e| panic!("{f}: reprint does not load: {e}\n{once}"));
        assert_eq!(without_headers(&print_all(&again)), without_headers(&once), "{f}");
    }
}

#[test]
fn split_outputs_round_trip() {
    for (f, m) in [("trains", "RECKONED-TRAINS"), ("trains", "RECKONER"), ("mutex", "MUTEX-TRAINS")] {
        let l = corpus(f);
        let plain = l.get(m).unwrap().split().unwrap();
        let once = pretty::print_plain(&plain);
        let again = syntax::load_ok(&once).unwrap_or_else(|e| panic!("{m}: {e}\n{once}"));
        let twice = pretty::print_resolved(again.get(m).unwrap());
        assert_eq!(without_headers(&twice), without_headers(&once), "{m}");
    }
}

#[test]
fn criterion_between_bool_and_int_is_rejected() {
    let src = "
        mod A is op a : -> State . prop p : Bool . eq p @ a = true . eq init = a . endm
        mod B is op b : -> State . prop q : Int . eq q @ b = 1 . eq init = b . endm
        mod AB is pr A || B sync on A.p = B.q . endm";
    assert!(codes(src).contains(&code::CRITERION_KIND.to_string()));
}

#[test]
fn unknown_property_in_criterion() {
    let src = "
        mod A is op a : -> State . prop p : Bool . eq p @ a = true . eq init = a . endm
        mod B is op b : -> State . eq init = b . endm
        mod AB is pr A || B sync on A.p = B.nope . endm";
    assert!(codes(src).contains(&code::UNKNOWN_PROP.to_string()));
}

#[test]
fn import_cycle_and_unknown_module() {
    let c = codes("mod A is pr B . endm mod B is pr A . endm");
    assert!(c.contains(&code::IMPORT_CYCLE.to_string()), "{c:?}");
    let c = codes("mod A is pr NOPE . endm");
    assert!(c.contains(&code::UNKNOWN_MODULE.to_string()), "{c:?}");
}

#[test]
fn duplicate_module() {
    let c = codes("mod A is op a : -> State . endm mod A is op b : -> State . endm");
    assert_eq!(c, [code::DUP_MODULE]);
}

#[test]
fn standard_rule_gets_a_hint() {
    let l = syntax::load_str("mod A is ops a b : -> State . rl [go] : a => b . endm");
    let d = &l.diagnostics[0];
    assert_eq!(d.code, code::LABEL_REQUIRED);
    assert!(d.message.contains("=[ go ]=>"));
}

#[test]
fn auto_label_rule_loads() {
    let l = syntax::load_ok("mod A is ops a b : -> State . rl a =[*]=> b . eq init = a . endm").unwrap();
    let g = graph(&*l.get("A").unwrap().semantics(), None);
    assert_eq!(g.nodes.len(), 3);
}

#[test]
fn non_topmost_component_cannot_be_composed() {
    let src = "
        mod N is op s : State -> State . op a : -> State . op t : -> Trans .
          rl a =[ t ]=> s(a) . eq init = a . endm
        mod M is op m : -> State . eq init = m . endm
        mod NM is pr N || M . endm";
    let c = codes(src);
    assert!(c.contains(&code::TOPMOST.to_string()), "{c:?}");
    assert!(c.contains(&code::TOPMOST_ERR.to_string()), "{c:?}");
}

#[test]
fn unbound_variable_is_flagged() {
    let c = codes("mod A is op a : Int -> State . op t : -> Trans . var X : Int . rl a(1) =[ t ]=> a(X) . endm");
    assert!(c.contains(&code::ADMISSIBLE.to_string()), "{c:?}");
}

#[test]
fn stage_and_pattern_parsing() {
    let l = corpus("trains");
    let c = l.get("RECKONED-TRAINS").unwrap();
    let st = syntax::parse_stage(c, "< stopped, moving, rmoving | 1 + 1 >").unwrap();
    assert_eq!(st.to_string(), "< stopped, moving, rmoving | 2 >");
    assert!(syntax::parse_stage(c, "< stopped, moving >").is_err());
    let r = atomic(&l, "RECKONER");
    let p = syntax::parse_pattern(&r.theory, "lmoving | D:Int").unwrap();
    assert!(!p.is_ground());
}
