mod common;

use std::collections::BTreeSet;

use common::props::toys::{self, *};
use common::*;

use ers_core::explore::{explore, graphs_equal, Bounds, ComposedSemantics};
use ers_core::kernel::term::Term;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn algebra_laws_on_random_criterion_sets(mask in 0u32..(1 << 15)) {
        toys::algebra_laws(mask)?;
    }
}

#[test]
fn groupings_give_the_same_graph() {
    for mask in [0u32, 0b1, 0b100001, 0b10000100001, 0x7fff, 0x1234] {
        let l = load(&groupings(&subset(mask)));
        let g = |n: &str| {
            explore(&ComposedSemantics(composed(&l, n)), Bounds::default())
                .map(|_| graph(&ComposedSemantics(composed(&l, n)), None))
        };
        match (g("LEFT"), g("RIGHT"), g("FLAT")) {
            (Ok(a), Ok(b), Ok(c)) => {
                graphs_equal(&a, &b).unwrap();
                graphs_equal(&a, &c).unwrap();
            }
            // an incompatible initial tuple is rejected by every grouping
            (Err(_), Err(_), Err(_)) => {}
            _ => panic!("groupings disagree on mask {mask:#x}"),
        }
    }
}

#[test]
fn no_criteria_means_any_nonempty_subset_steps() {
    let l = load(&compose("FREE", "T1 || T3", &[]));
    let sys = composed(&l, "FREE");
    let (t1, t3) = (atomic(&l, "T1"), atomic(&l, "T3"));
    let stages = |m: &ers_core::egrw::AtomicModule| -> Vec<Term> {
        ["a", "b", "x", "y"].iter().map(|s| Term::constant(s)).filter(|t| m.classify(t).unwrap().is_some()).collect()
    };
    for s1 in stages(&t1) {
        for s3 in stages(&t3) {
            let n1 = t1.half_successors(&s1).unwrap();
            let n3 = t3.half_successors(&s3).unwrap();
            let mut want = BTreeSet::new();
            for a in n1.iter().cloned().map(Some).chain([None]) {
                for b in n3.iter().cloned().map(Some).chain([None]) {
                    if a.is_none() && b.is_none() {
                        continue;
                    }
                    want.insert(sys.tuple(vec![a.clone().unwrap_or(s1.clone()), b.unwrap_or(s3.clone())]));
                }
            }
            let got: BTreeSet<Term> =
                sys.successors(&sys.tuple(vec![s1.clone(), s3.clone()])).unwrap().into_iter().collect();
            assert_eq!(got, want, "from {s1}, {s3}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn added_criteria_only_remove_successors(case in toys::restriction_strategy()) {
        toys::added_criteria_only_remove(case)?;
    }
}
