//! Property bodies shared by the proptest suites and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

/// Runs a property outside the proptest macro; the error names the failing input.
pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub mod matching {
    use std::collections::BTreeSet;

    use ers_core::kernel::matching::{match_term, SyntacticEnv};
    use ers_core::kernel::signature::{OpSpec, SigSpec};
    use ers_core::kernel::term::{Subst, Term, Var};
    use ers_core::Signature;
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;

    pub fn memory_sig() -> Signature {
        let mut s = SigSpec::prelude();
        s.add_sort("Cell");
        s.add_sort("Mem");
        s.add_subsort("Cell", "Mem");
        s.add_op(OpSpec::user("(_,_)", &["Int", "Int"], "Cell"));
        s.add_op(OpSpec::user("empty", &[], "Mem"));
        s.add_op(OpSpec::user("f", &["Mem", "Mem"], "Mem"));
        let mut j = OpSpec::user("__", &["Mem", "Mem"], "Mem");
        j.attrs.assoc = true;
        j.attrs.comm = true;
        j.attrs.id = Some(Term::constant("empty"));
        s.add_op(j);
        Signature::build(s).unwrap()
    }

    #[derive(Clone, Debug)]
    pub enum IntP {
        Var(u8),
        Lit(i64),
    }

    #[derive(Clone, Debug)]
    pub enum MemP {
        Cells(Vec<(IntP, IntP)>, bool),
        F(Box<MemP>, Box<MemP>),
        Var,
    }

    pub fn int_p() -> impl Strategy<Value = IntP> {
        prop_oneof![(0u8..2).prop_map(IntP::Var), (0i64..2).prop_map(IntP::Lit)]
    }

    pub fn mem_p() -> impl Strategy<Value = MemP> {
        let leaf = prop_oneof![
            (prop::collection::vec((int_p(), int_p()), 1..3), any::<bool>()).prop_map(|(c, r)| MemP::Cells(c, r)),
            Just(MemP::Var),
        ];
        leaf.prop_recursive(2, 8, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner).prop_map(|(a, b)| MemP::F(Box::new(a), Box::new(b))),
                (prop::collection::vec((int_p(), int_p()), 1..3), any::<bool>()).prop_map(|(c, r)| MemP::Cells(c, r)),
            ]
        })
    }

    pub fn int_term(p: &IntP) -> Term {
        match p {
            IntP::Var(i) => Term::var(["X", "Y"][*i as usize], "Int"),
            IntP::Lit(n) => Term::int(*n),
        }
    }

    pub fn juxt(mut parts: Vec<Term>) -> Term {
        let mut t = parts.pop().unwrap();
        while let Some(p) = parts.pop() {
            t = Term::app("__", vec![p, t]);
        }
        t
    }

    pub fn mem_term(p: &MemP) -> Term {
        match p {
            MemP::Cells(cells, rest) => {
                let mut parts: Vec<Term> =
                    cells.iter().map(|(a, b)| Term::app("(_,_)", vec![int_term(a), int_term(b)])).collect();
                if *rest {
                    parts.push(Term::var("M", "Mem"));
                }
                juxt(parts)
            }
            MemP::F(a, b) => Term::app("f", vec![mem_term(a), mem_term(b)]),
            MemP::Var => Term::var("M", "Mem"),
        }
    }

    pub fn cell(a: i64, b: i64) -> Term {
        Term::app("(_,_)", vec![Term::int(a), Term::int(b)])
    }

    /// Every memory of at most three cells over {0,1}, plus `empty`.
    pub fn small_memories(sig: &Signature) -> Vec<Term> {
        let cells: Vec<Term> = (0..2).flat_map(|a| (0..2).map(move |b| cell(a, b))).collect();
        let mut out = BTreeSet::from([Term::constant("empty")]);
        for i in 0..4 {
            out.insert(cells[i].clone());
            for j in i..4 {
                out.insert(sig.canonicalize(&juxt(vec![cells[i].clone(), cells[j].clone()])));
                for k in j..4 {
                    out.insert(sig.canonicalize(&juxt(vec![cells[i].clone(), cells[j].clone(), cells[k].clone()])));
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn brute_force(sig: &Signature, p: &Term, s: &Term, mems: &[Term]) -> BTreeSet<Subst> {
        let vars: Vec<Var> = p.vars().into_iter().collect();
        let choices: Vec<Vec<Term>> = vars
            .iter()
            .map(|v| if &*v.sort == "Int" { vec![Term::int(0), Term::int(1)] } else { mems.to_vec() })
            .collect();
        let mut out = BTreeSet::new();
        let mut idx = vec![0usize; vars.len()];
        loop {
            let th: Subst =
                vars.iter().cloned().zip(idx.iter().enumerate().map(|(k, &i)| choices[k][i].clone())).collect();
            if sig.canonicalize(&sig.apply(&th, p)) == *s {
                out.insert(th);
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                return out;
            }
        }
    }

    pub fn case_strategy() -> impl Strategy<Value = (MemP, Vec<usize>, bool, MemP)> {
        (mem_p(), prop::collection::vec(0usize..64, 3), any::<bool>(), mem_p())
    }

    /// Matches are sound, and complete with respect to small bindings.
    pub fn agrees_with_brute_force(
        (p, inst, direct, other): (MemP, Vec<usize>, bool, MemP),
    ) -> Result<(), TestCaseError> {
        let sig = memory_sig();
        let mems = small_memories(&sig);
        let pat = sig.canonicalize(&mem_term(&p));
        prop_assume!(sig.check_pattern(&pat).is_ok());
        // the subject is an instance of the pattern or of an unrelated one
        let source = if direct { pat.clone() } else { sig.canonicalize(&mem_term(&other)) };
        let th: Subst = source
            .vars()
            .into_iter()
            .zip(&inst)
            .map(|(v, &i)| {
                let t = if &*v.sort == "Int" { Term::int((i % 2) as i64) } else { mems[i % mems.len()].clone() };
                (v, t)
            })
            .collect();
        let subject = sig.canonicalize(&sig.apply(&th, &source));
        prop_assume!(subject.is_ground());
        let env = SyntacticEnv(&sig);
        let got: BTreeSet<Subst> = match_term(&env, &pat, &subject, &Subst::new()).unwrap().into_iter().collect();
        for m in &got {
            prop_assert_eq!(sig.canonicalize(&sig.apply(m, &pat)), subject.clone(), "unsound {}", m);
        }
        // brute force only sees small bindings, so it bounds the matches from below
        for m in brute_force(&sig, &pat, &subject, &mems) {
            prop_assert!(got.contains(&m), "missed {} for {} against {}", m, pat, subject);
        }
        if direct {
            prop_assert!(!got.is_empty());
        }
        Ok(())
    }

    pub fn canon_strategy() -> impl Strategy<Value = (Vec<(i64, i64)>, bool)> {
        (prop::collection::vec((0i64..3, 0i64..3), 1..6), any::<bool>())
    }

    pub fn canonicalize_idempotent((cells, nest): (Vec<(i64, i64)>, bool)) -> Result<(), TestCaseError> {
        let sig = memory_sig();
        let parts: Vec<Term> = cells.iter().map(|&(a, b)| cell(a, b)).collect();
        let mut rev = parts.clone();
        rev.reverse();
        let mut t = juxt(parts);
        let mut u = juxt(rev);
        if nest {
            t = Term::app("f", vec![t.clone(), Term::app("__", vec![Term::constant("empty"), t])]);
            u = Term::app("f", vec![u.clone(), u]);
        }
        let c = sig.canonicalize(&t);
        prop_assert_eq!(sig.canonicalize(&c), c.clone());
        prop_assert_eq!(sig.canonicalize(&u), c);
        Ok(())
    }
}

pub mod arith {
    use ers_core::syntax;
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;

    #[derive(Clone, Debug)]
    pub enum Expr {
        Lit(i64),
        Add(Box<Expr>, Box<Expr>),
        Sub(Box<Expr>, Box<Expr>),
        Mul(Box<Expr>, Box<Expr>),
        F(Box<Expr>),
        G(Box<Expr>, Box<Expr>),
        If(Box<Expr>, Box<Expr>, Box<Expr>),
    }

    pub fn expr() -> impl Strategy<Value = Expr> {
        (-3i64..4).prop_map(Expr::Lit).prop_recursive(3, 24, 3, |e| {
            prop_oneof![
                (e.clone(), e.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (e.clone(), e.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (e.clone(), e.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                e.clone().prop_map(|a| Expr::F(Box::new(a))),
                (e.clone(), e.clone()).prop_map(|(a, b)| Expr::G(Box::new(a), Box::new(b))),
                (e.clone(), e.clone(), e).prop_map(|(a, b, c)| Expr::If(Box::new(a), Box::new(b), Box::new(c))),
            ]
        })
    }

    pub fn text(e: &Expr) -> String {
        match e {
            Expr::Lit(n) => format!("({n})"),
            Expr::Add(a, b) => format!("({} + {})", text(a), text(b)),
            Expr::Sub(a, b) => format!("({} - {})", text(a), text(b)),
            Expr::Mul(a, b) => format!("({} * {})", text(a), text(b)),
            Expr::F(a) => format!("f({})", text(a)),
            Expr::G(a, b) => format!("g({}, {})", text(a), text(b)),
            Expr::If(a, b, c) => format!("h({}, {}, {})", text(a), text(b), text(c)),
        }
    }

    pub fn value(e: &Expr) -> i64 {
        match e {
            Expr::Lit(n) => *n,
            Expr::Add(a, b) => value(a) + value(b),
            Expr::Sub(a, b) => value(a) - value(b),
            Expr::Mul(a, b) => value(a) * value(b),
            Expr::F(a) => 2 * value(a) + 1,
            Expr::G(a, b) => 2 * value(a) + 1 - value(b),
            Expr::If(a, b, c) => {
                if value(a) < value(b) {
                    value(c)
                } else {
                    0
                }
            }
        }
    }

    pub const ARITH: &str = "mod ARITH is
      op f : Int -> Int .
      op g : Int Int -> Int .
      op h : Int Int Int -> Int .
      vars X Y Z : Int .
      eq f(X) = X * 2 + 1 .
      eq g(X, Y) = f(X) - Y .
      ceq h(X, Y, Z) = Z if X < Y = true .
      eq h(X, Y, Z) = 0 [otherwise] .
    endm";

    pub fn normal_form_is_fixpoint(e: Expr) -> Result<(), TestCaseError> {
        let l = syntax::load_ok(ARITH).unwrap();
        let syntax::Resolved::Atomic(m) = l.get("ARITH").unwrap() else { unreachable!() };
        let t = syntax::parse_term(&m.theory, &text(&e), None).unwrap();
        let n = m.theory.normalize(&t).unwrap();
        prop_assert_eq!(m.theory.normalize(&n).unwrap(), n.clone());
        prop_assert_eq!(n.as_int(), Some(value(&e)));
        Ok(())
    }
}

pub mod toys {
    use std::collections::BTreeSet;

    use ers_core::compose::{equivalent, Component};
    use ers_core::explore::ComposedSemantics;
    use ers_core::kernel::term::Term;
    use ers_core::syntax::{self, Loaded};
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;

    use crate::common::{composed, graph};

    pub const TOYS: &str = "
    mod TOY is
      ops a b : -> State .
      ops x y : -> Trans .
      rl a =[ x ]=> b .
      rl b =[ y ]=> a .
      props p r : Bool .
      prop q : Int .
      eq p @ a = true .
      eq p @ b = false .
      eq p @ x = true .
      eq p @ y = false .
      eq r @ x = true .
      eq r @ a = true .
      eq q @ a = 0 .
      eq q @ b = 1 .
      eq q @ x = 1 .
    endm
    mod T1 is pr TOY . eq init = a . endm
    mod T2 is pr TOY . rl a =[ y ]=> a . eq init = a . endm
    mod T3 is pr TOY . rl b =[ x ]=> b . eq init = a . endm
    ";

    /// `(i, j, pi, pj)`: component `Ti.pi = Tj.pj`.
    pub type Crit = (u8, u8, &'static str, &'static str);

    pub fn candidates() -> Vec<Crit> {
        let mut out = Vec::new();
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            for (a, b) in [("p", "p"), ("p", "r"), ("r", "p"), ("r", "r"), ("q", "q")] {
                out.push((i, j, a, b));
            }
        }
        out
    }

    pub fn text(c: &Crit) -> String {
        format!("T{}.{} = T{}.{}", c.0, c.2, c.1, c.3)
    }

    pub fn swapped(c: &Crit) -> String {
        format!("T{}.{} = T{}.{}", c.1, c.3, c.0, c.2)
    }

    pub fn compose(name: &str, parts: &str, crits: &[String]) -> String {
        if crits.is_empty() {
            format!("mod {name} is pr {parts} . endm\n")
        } else {
            format!("mod {name} is pr {parts} sync on {} . endm\n", crits.join(" /\\ "))
        }
    }

    pub fn subset(mask: u32) -> Vec<Crit> {
        candidates().into_iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, c)| c).collect()
    }

    pub fn load(extra: &str) -> Loaded {
        syntax::load_ok(&format!("{TOYS}{extra}")).unwrap()
    }

    pub fn comp(l: &Loaded, name: &str) -> Component {
        Component::Composed(composed(l, name))
    }

    /// Both groupings of a three-way composition with criteria `z`.
    pub fn groupings(z: &[Crit]) -> String {
        let on = |f: &dyn Fn(&Crit) -> bool| z.iter().filter(|c| f(c)).map(text).collect::<Vec<_>>();
        let y = on(&|c| (c.0, c.1) == (1, 2));
        let y1 = on(&|c| (c.0, c.1) != (1, 2));
        let y3 = on(&|c| (c.0, c.1) == (2, 3));
        let y2 = on(&|c| (c.0, c.1) != (2, 3));
        let mut s = compose("L12", "T1 || T2", &y);
        s += &compose("LEFT", "L12 || T3", &y1);
        s += &compose("R23", "T2 || T3", &y3);
        s += &compose("RIGHT", "T1 || R23", &y2);
        s += &compose("FLAT", "T1 || T2 || T3", &z.iter().map(text).collect::<Vec<_>>());
        s
    }

    /// Regrouping, reordering and dropping criteria on one random criterion set.
    pub fn algebra_laws(mask: u32) -> Result<(), TestCaseError> {
        let z = subset(mask);
        let l = load(&groupings(&z));
        let (left, right, flat) = (comp(&l, "LEFT"), comp(&l, "RIGHT"), comp(&l, "FLAT"));
        prop_assert!(equivalent(&left, &right));
        prop_assert!(equivalent(&left, &flat));

        let y: Vec<Crit> = z.iter().filter(|c| (c.0, c.1) == (1, 2)).cloned().collect();
        let l = load(
            &(compose("A", "T1 || T2", &y.iter().map(text).collect::<Vec<_>>())
                + &compose("B", "T2 || T1", &y.iter().map(swapped).collect::<Vec<_>>())),
        );
        prop_assert_eq!(composed(&l, "A").criteria_set(), composed(&l, "B").criteria_set());
        prop_assert!(equivalent(&comp(&l, "A"), &comp(&l, "B")));

        if let Some((first, rest)) = z.split_first() {
            let mut s = compose("FEWER", "T1 || T2 || T3", &rest.iter().map(text).collect::<Vec<_>>());
            s += &compose("ALL", "T1 || T2 || T3", &z.iter().map(text).collect::<Vec<_>>());
            let l = load(&s);
            prop_assert!(!equivalent(&comp(&l, "FEWER"), &comp(&l, "ALL")), "dropping {:?}", first);
        }
        Ok(())
    }

    pub fn restriction_strategy() -> impl Strategy<Value = (u32, usize)> {
        (0u32..(1 << 15), 0usize..15)
    }

    /// Adding a criterion never adds a successor.
    pub fn added_criteria_only_remove((mask, extra): (u32, usize)) -> Result<(), TestCaseError> {
        let z = subset(mask);
        let mut more = z.clone();
        let c = candidates()[extra];
        if !more.contains(&c) {
            more.push(c);
        }
        let mut s = compose("LOOSE", "T1 || T2 || T3", &z.iter().map(text).collect::<Vec<_>>());
        s += &compose("TIGHT", "T1 || T2 || T3", &more.iter().map(text).collect::<Vec<_>>());
        let l = load(&s);
        let (loose, tight) = (composed(&l, "LOOSE"), composed(&l, "TIGHT"));
        prop_assume!(loose.init_stage().is_ok());
        let g = graph(&ComposedSemantics(loose.clone()), None);
        for n in &g.nodes {
            let t = syntax::parse_stage(l.get("LOOSE").unwrap(), &n.term).unwrap();
            let a: BTreeSet<Term> = loose.successors(&t).unwrap().into_iter().collect();
            let b: BTreeSet<Term> = tight.successors(&t).unwrap().into_iter().collect();
            prop_assert!(b.is_subset(&a), "at {}", n.term);
        }
        Ok(())
    }
}

pub mod bipartite {
    use ers_core::syntax;
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;

    use crate::common::graph;

    pub fn random_module(rules: &[(u8, u8, u8)]) -> String {
        let mut s = String::from("mod RND is ops s0 s1 s2 : -> State . ops t0 t1 t2 : -> Trans .\n");
        for (a, b, c) in rules {
            s += &format!("rl s{a} =[ t{b} ]=> s{c} .\n");
        }
        s + "eq init = s0 . endm"
    }

    pub fn strategy() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..3, 0u8..3, 0u8..3), 1..7)
    }

    /// Every edge of an atomic graph joins a state and a transition.
    pub fn alternates(rules: Vec<(u8, u8, u8)>) -> Result<(), TestCaseError> {
        let l = syntax::load_ok(&random_module(&rules)).unwrap();
        let g = graph(&*l.get("RND").unwrap().semantics(), None);
        for [a, b] in &g.edges {
            let (x, y) = (&g.nodes[*a].sort, &g.nodes[*b].sort);
            prop_assert!(x != y, "{} -> {}", g.nodes[*a].term, g.nodes[*b].term);
            prop_assert!(x == "State" || x == "Trans");
        }
        Ok(())
    }
}
