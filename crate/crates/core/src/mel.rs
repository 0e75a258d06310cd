//! Membership equational evaluation: normalization, least sorts, conditions and
//! property values.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::kernel::matching::{match_term, MatchEnv};
use crate::kernel::signature::{Builtin, OpOrigin, SigSpec, Signature, SortId, SortRef};
use crate::kernel::term::{Name, Node, Subst, Term, Var};

pub const DEFAULT_BUDGET: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Condition {
    Eq(Term, Term),
    /// `pattern := target`
    Match(Term, Term),
    Sort(Term, SortRef),
}

impl Condition {
    pub fn vars(&self) -> std::collections::BTreeSet<Var> {
        let mut out = std::collections::BTreeSet::new();
        match self {
            Condition::Eq(a, b) | Condition::Match(a, b) => {
                a.collect_vars(&mut out);
                b.collect_vars(&mut out);
            }
            Condition::Sort(a, _) => a.collect_vars(&mut out),
        }
        out
    }

    pub fn map_terms(&self, f: &mut dyn FnMut(&Term) -> Term) -> Condition {
        match self {
            Condition::Eq(a, b) => Condition::Eq(f(a), f(b)),
            Condition::Match(a, b) => Condition::Match(f(a), f(b)),
            Condition::Sort(a, s) => Condition::Sort(f(a), *s),
        }
    }
}

/// Variables bound by evaluating `conds` left to right starting from `known`;
/// returns the first unbound variable on a non-pattern side.
pub fn check_condition_flow(conds: &[Condition], known: &mut HashSet<Var>) -> Option<Var> {
    for c in conds {
        let needed = match c {
            Condition::Eq(a, b) => {
                let mut v = a.vars();
                v.extend(b.vars());
                v
            }
            Condition::Match(_, t) => t.vars(),
            Condition::Sort(t, _) => t.vars(),
        };
        if let Some(v) = needed.into_iter().find(|v| !known.contains(v)) {
            return Some(v);
        }
        if let Condition::Match(p, _) = c {
            known.extend(p.vars());
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub lhs: Term,
    pub rhs: Term,
    pub conds: Vec<Condition>,
    pub owise: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    pub subject: Term,
    pub sort: SortId,
    pub conds: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PropValue {
    Defined(Term),
    Undefined,
}

impl PropValue {
    pub fn defined(&self) -> Option<&Term> {
        match self {
            PropValue::Defined(t) => Some(t),
            PropValue::Undefined => None,
        }
    }
    pub fn is_true(&self) -> bool {
        matches!(self, PropValue::Defined(t) if t.as_bool() == Some(true))
    }
}

impl std::fmt::Display for PropValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PropValue::Defined(t) => write!(f, "{t}"),
            PropValue::Undefined => f.write_str("UNDEFINED"),
        }
    }
}

type Key = (Name, usize);

/// An equational theory: signature, equations and memberships.
pub struct Theory {
    sig: Signature,
    eqs: Vec<Equation>,
    mbs: Vec<Membership>,
    eq_index: HashMap<Key, Vec<usize>>,
    mb_index: HashMap<Key, Vec<usize>>,
    defined: HashSet<Name>,
    pub budget: usize,
    nf_cache: Mutex<HashMap<Term, Term>>,
    sort_cache: Mutex<HashMap<Term, SortRef>>,
}

impl Clone for Theory {
    fn clone(&self) -> Theory {
        Theory {
            sig: self.sig.clone(),
            eqs: self.eqs.clone(),
            mbs: self.mbs.clone(),
            eq_index: self.eq_index.clone(),
            mb_index: self.mb_index.clone(),
            defined: self.defined.clone(),
            budget: self.budget,
            nf_cache: Mutex::new(HashMap::new()),
            sort_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl std::fmt::Debug for Theory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Theory").field("eqs", &self.eqs.len()).field("mbs", &self.mbs.len()).finish()
    }
}

fn key_of(t: &Term) -> Option<Key> {
    t.symbol().map(|(n, a)| (n.clone(), a))
}

impl Theory {
    pub fn new(sig: Signature, eqs: Vec<Equation>, mbs: Vec<Membership>) -> Result<Theory> {
        let mut eq_index: HashMap<Key, Vec<usize>> = HashMap::new();
        let mut defined = HashSet::new();
        for (i, e) in eqs.iter().enumerate() {
            let k = key_of(&e.lhs)
                .ok_or_else(|| Error::Decl(format!("equation left-hand side {} is not an application", e.lhs)))?;
            sig.check_pattern(&e.lhs)?;
            for c in &e.conds {
                if let Condition::Match(p, _) = c {
                    sig.check_pattern(p)?;
                }
            }
            defined.insert(k.0.clone());
            eq_index.entry(k).or_default().push(i);
        }
        for f in sig.all_families() {
            if f.builtin.is_some() || matches!(f.origin, OpOrigin::Property(_)) {
                defined.insert(f.name.clone());
            }
        }
        let mut mb_index: HashMap<Key, Vec<usize>> = HashMap::new();
        for (i, m) in mbs.iter().enumerate() {
            let k = key_of(&m.subject)
                .ok_or_else(|| Error::Decl(format!("membership subject {} must not be a bare variable", m.subject)))?;
            sig.check_pattern(&m.subject)?;
            mb_index.entry(k).or_default().push(i);
        }
        // non-owise equations first, declaration order within each stratum
        for v in eq_index.values_mut() {
            v.sort_by_key(|&i| (eqs[i].owise, i));
        }
        Ok(Theory {
            sig,
            eqs,
            mbs,
            eq_index,
            mb_index,
            defined,
            budget: DEFAULT_BUDGET,
            nf_cache: Mutex::new(HashMap::new()),
            sort_cache: Mutex::new(HashMap::new()),
        })
    }

    /// The prelude alone.
    pub fn prelude() -> &'static Theory {
        static P: OnceLock<Theory> = OnceLock::new();
        P.get_or_init(|| {
            Theory::new(Signature::build(SigSpec::prelude()).expect("prelude signature"), vec![], vec![])
                .expect("prelude theory")
        })
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }
    pub fn equations(&self) -> &[Equation] {
        &self.eqs
    }
    pub fn memberships(&self) -> &[Membership] {
        &self.mbs
    }
    /// Symbols that no equation or builtin can rewrite at the root.
    pub fn is_constructor(&self, name: &str) -> bool {
        !self.defined.contains(name)
    }

    pub fn eval(&self) -> Eval<'_> {
        Eval::new(self, false)
    }
    pub fn normalize(&self, t: &Term) -> Result<Term> {
        self.eval().normalize(t)
    }
    pub fn least_sort(&self, t: &Term) -> Result<SortRef> {
        let e = self.eval();
        let n = e.normalize(t)?;
        e.least_sort(&n)
    }
    pub fn solve(&self, conds: &[Condition], th: &Subst) -> Result<Vec<Subst>> {
        self.eval().solve(conds, th)
    }
    pub fn eval_property(&self, prop: &str, stage: &Term) -> Result<PropValue> {
        self.eval().eval_property(prop, stage)
    }
}

/// One evaluation session. In symbolic mode subject variables are opaque
/// constants, and any step whose outcome could differ for some instance sets
/// the `uncertain` flag.
pub struct Eval<'a> {
    th: &'a Theory,
    steps: Cell<usize>,
    uncertain: Cell<bool>,
    symbolic: bool,
    in_progress: RefCell<HashMap<Term, SortRef>>,
}

impl<'a> Eval<'a> {
    pub fn new(th: &'a Theory, symbolic: bool) -> Eval<'a> {
        Eval {
            th,
            steps: Cell::new(0),
            uncertain: Cell::new(false),
            symbolic,
            in_progress: RefCell::new(HashMap::new()),
        }
    }
    pub fn theory(&self) -> &Theory {
        self.th
    }
    pub fn is_uncertain(&self) -> bool {
        self.uncertain.get()
    }
    pub fn mark_uncertain(&self) {
        self.uncertain.set(true);
    }

    fn tick(&self, t: &Term) -> Result<()> {
        let n = self.steps.get() + 1;
        self.steps.set(n);
        if n > self.th.budget {
            return Err(Error::Budget { budget: self.th.budget, term: t.to_string() });
        }
        Ok(())
    }

    pub fn normalize(&self, t: &Term) -> Result<Term> {
        if t.is_ground() {
            if let Some(n) = self.th.nf_cache.lock().unwrap().get(t) {
                return Ok(n.clone());
            }
        }
        let mut cur = self.normalize_args(t)?;
        loop {
            match self.rewrite_root(&cur)? {
                None => break,
                Some(next) => {
                    self.tick(t)?;
                    cur = self.normalize_args(&next)?;
                }
            }
        }
        if t.is_ground() {
            let mut c = self.th.nf_cache.lock().unwrap();
            c.insert(t.clone(), cur.clone());
            c.insert(cur.clone(), cur.clone());
        }
        Ok(cur)
    }

    fn normalize_args(&self, t: &Term) -> Result<Term> {
        match t.node() {
            Node::App(f, a) if !a.is_empty() => {
                let args = a.iter().map(|x| self.normalize(x)).collect::<Result<Vec<_>>>()?;
                Ok(self.th.sig.canonical_root(f, args))
            }
            Node::Ac(f, a) => {
                let kids = a.iter().map(|x| self.normalize(x)).collect::<Result<Vec<_>>>()?;
                let mut it = kids.into_iter();
                let first = it.next().unwrap();
                Ok(it.fold(first, |acc, k| self.th.sig.canonical_root(f, vec![acc, k])))
            }
            _ => Ok(t.clone()),
        }
    }

    fn rewrite_root(&self, t: &Term) -> Result<Option<Term>> {
        let Some(key) = key_of(t) else { return Ok(None) };
        if let Some(r) = self.builtin(t)? {
            return Ok(Some(r));
        }
        let Some(idx) = self.th.eq_index.get(&key) else { return Ok(None) };
        for &i in idx {
            let e = &self.th.eqs[i];
            for m in match_term(self, &e.lhs, t, &Subst::new())? {
                if let Some(s) = self.solve(&e.conds, &m)?.into_iter().next() {
                    return Ok(Some(self.th.sig.apply(&s, &e.rhs)));
                }
            }
        }
        Ok(None)
    }

    fn builtin(&self, t: &Term) -> Result<Option<Term>> {
        let Node::App(_, a) = t.node() else { return Ok(None) };
        let fams = self.th.sig.families(t.head().unwrap(), a.len());
        if fams.is_empty() {
            return Ok(None);
        }
        let fam = match self.th.sig.family_of(t) {
            Ok(f) => f,
            Err(_) => return Ok(None),
        };
        let Some(b) = fam.builtin else { return Ok(None) };
        let ints = || -> Option<(i64, i64)> { Some((a[0].as_int()?, a[1].as_int()?)) };
        let ovf = || Error::Overflow(t.to_string());
        let r = match b {
            Builtin::Add | Builtin::Sub | Builtin::Mul => {
                let Some((x, y)) = ints() else { return Ok(None) };
                let v = match b {
                    Builtin::Add => x.checked_add(y),
                    Builtin::Sub => x.checked_sub(y),
                    _ => x.checked_mul(y),
                };
                Term::int(v.ok_or_else(ovf)?)
            }
            Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => {
                let Some((x, y)) = ints() else { return Ok(None) };
                Term::boolean(match b {
                    Builtin::Lt => x < y,
                    Builtin::Le => x <= y,
                    Builtin::Gt => x > y,
                    _ => x >= y,
                })
            }
            Builtin::Eq | Builtin::Neq => {
                let eq = if a[0] == a[1] {
                    true
                } else if a[0].is_ground() && a[1].is_ground() {
                    false
                } else {
                    return Ok(None);
                };
                Term::boolean(eq == (b == Builtin::Eq))
            }
            Builtin::Not => match a[0].as_bool() {
                Some(x) => Term::boolean(!x),
                None => return Ok(None),
            },
            Builtin::And | Builtin::Or => {
                let absorbing = b == Builtin::Or;
                match (a[0].as_bool(), a[1].as_bool()) {
                    (Some(x), _) if x == absorbing => Term::boolean(absorbing),
                    (_, Some(y)) if y == absorbing => Term::boolean(absorbing),
                    (Some(_), _) => a[1].clone(),
                    (_, Some(_)) => a[0].clone(),
                    _ => return Ok(None),
                }
            }
            Builtin::Agree => {
                if !(a[0].is_ground() && a[1].is_ground()) {
                    return Ok(None);
                }
                let unsorted = |x: &Term| -> Result<bool> { Ok(matches!(self.least_sort(x)?, SortRef::Kind(_))) };
                Term::boolean(unsorted(&a[0])? || unsorted(&a[1])? || a[0] == a[1])
            }
        };
        Ok(Some(r))
    }

    /// Least sort of a term in normal form, memberships included.
    pub fn least_sort(&self, t: &Term) -> Result<SortRef> {
        let sig = &self.th.sig;
        match t.node() {
            Node::Var(v) => return sig.var_sort(v),
            Node::Int(_) => return Ok(sig.int_sort()),
            Node::Bool(_) => return Ok(sig.bool_sort()),
            _ => {}
        }
        if t.is_ground() {
            if let Some(s) = self.th.sort_cache.lock().unwrap().get(t) {
                return Ok(*s);
            }
        }
        if let Some(s) = self.in_progress.borrow().get(t) {
            return Ok(*s);
        }
        let kids = t.args().iter().map(|a| self.least_sort(a)).collect::<Result<Vec<_>>>()?;
        let mut cur = sig.sort_from_args(t, &kids)?;
        let key = key_of(t).unwrap();
        if let Some(idx) = self.th.mb_index.get(&key) {
            self.in_progress.borrow_mut().insert(t.clone(), cur);
            let mut derived: Vec<SortId> = match cur {
                SortRef::Sort(s) => vec![s],
                SortRef::Kind(_) => vec![],
            };
            let result = (|| -> Result<SortRef> {
                loop {
                    let mut changed = false;
                    for &i in idx {
                        let m = &self.th.mbs[i];
                        if derived.iter().any(|&d| sig.leq_sort(d, m.sort)) {
                            continue;
                        }
                        let mut holds = false;
                        for th in match_term(self, &m.subject, t, &Subst::new())? {
                            if !self.solve(&m.conds, &th)?.is_empty() {
                                holds = true;
                                break;
                            }
                        }
                        if holds {
                            derived.retain(|&d| !sig.leq_sort(m.sort, d));
                            derived.push(m.sort);
                            changed = true;
                        }
                    }
                    let now = match derived.len() {
                        0 => cur,
                        1 => SortRef::Sort(derived[0]),
                        _ => {
                            return Err(Error::SortAmbiguity {
                                term: t.to_string(),
                                sorts: derived
                                    .iter()
                                    .map(|s| sig.sort_name(*s).to_string())
                                    .collect::<Vec<_>>()
                                    .join(", "),
                            })
                        }
                    };
                    cur = now;
                    self.in_progress.borrow_mut().insert(t.clone(), cur);
                    if !changed {
                        return Ok(cur);
                    }
                }
            })();
            self.in_progress.borrow_mut().remove(t);
            cur = result?;
        }
        if t.is_ground() {
            self.th.sort_cache.lock().unwrap().insert(t.clone(), cur);
        }
        Ok(cur)
    }

    /// All extensions of `th` satisfying the conditions, evaluated left to right.
    pub fn solve(&self, conds: &[Condition], th: &Subst) -> Result<Vec<Subst>> {
        let mut cur = vec![th.clone()];
        for c in conds {
            let mut next = Vec::new();
            for s in cur {
                self.solve_one(c, &s, &mut next)?;
            }
            if next.is_empty() {
                return Ok(next);
            }
            cur = next;
        }
        Ok(cur)
    }

    fn bound(&self, t: &Term, th: &Subst, what: &str) -> Result<()> {
        if let Some(v) = t.vars().into_iter().find(|v| !th.contains(v)) {
            return Err(Error::Admissibility { context: what.to_string(), var: v.name.to_string() });
        }
        Ok(())
    }

    fn solve_one(&self, c: &Condition, th: &Subst, out: &mut Vec<Subst>) -> Result<()> {
        let sig = &self.th.sig;
        match c {
            Condition::Eq(l, r) => {
                self.bound(l, th, &format!("condition {l} = {r}"))?;
                self.bound(r, th, &format!("condition {l} = {r}"))?;
                let a = self.normalize(&sig.apply(th, l))?;
                let b = self.normalize(&sig.apply(th, r))?;
                if a == b {
                    out.push(th.clone());
                } else if self.symbolic && !(a.is_ground() && b.is_ground()) {
                    self.mark_uncertain();
                }
            }
            Condition::Sort(t, s) => {
                self.bound(t, th, &format!("condition {t} : {}", sig.ref_name(*s)))?;
                let a = self.normalize(&sig.apply(th, t))?;
                let ls = self.least_sort(&a)?;
                if sig.leq(ls, *s) {
                    out.push(th.clone());
                } else if self.symbolic && !a.is_ground() && sig.overlap(ls, *s) {
                    self.mark_uncertain();
                }
            }
            Condition::Match(p, t) => {
                self.bound(t, th, &format!("condition {p} := {t}"))?;
                let a = self.normalize(&sig.apply(th, t))?;
                out.extend(match_term(self, p, &a, th)?);
            }
        }
        Ok(())
    }

    pub fn eval_property(&self, prop: &str, stage: &Term) -> Result<PropValue> {
        let sig = &self.th.sig;
        let info = sig.prop(prop).ok_or_else(|| Error::Property(format!("unknown property {prop}")))?;
        let n = self.normalize(&Term::app(info.op.clone(), vec![stage.clone()]))?;
        let ls = self.least_sort(&n)?;
        let cod = SortRef::Sort(info.codomain);
        if sig.leq(ls, cod) {
            return Ok(PropValue::Defined(n));
        }
        if sig.kind_of_ref(ls) != sig.kind_of_sort(info.codomain) {
            return Err(Error::Property(format!(
                "{prop} @ {stage} evaluates to {n} of sort {}, outside the kind of {}",
                sig.ref_name(ls),
                sig.sort_name(info.codomain)
            )));
        }
        // a stuck open term stays stuck under instantiation unless some match
        // along the way was undecided, which already flagged the evaluator
        Ok(PropValue::Undefined)
    }
}

impl MatchEnv for Eval<'_> {
    fn sig(&self) -> &Signature {
        &self.th.sig
    }
    fn has_sort(&self, t: &Term, s: SortRef) -> Result<bool> {
        let ls = self.least_sort(t)?;
        if self.th.sig.leq(ls, s) {
            return Ok(true);
        }
        if self.symbolic && !t.is_ground() && self.th.sig.overlap(ls, s) {
            self.mark_uncertain();
        }
        Ok(false)
    }
    fn mismatch(&self, p: &Term, s: &Term) {
        if !self.symbolic || s.is_ground() || self.uncertain.get() {
            return;
        }
        if let Some(g) = s.head() {
            if self.th.is_constructor(g) && p.head() != Some(g) {
                return;
            }
        }
        let sig = &self.th.sig;
        let overlap = match (sig.least_sort_syntactic(p), self.least_sort(s)) {
            (Ok(a), Ok(b)) => sig.overlap(a, b),
            _ => true,
        };
        if overlap {
            self.mark_uncertain();
        }
    }
}

/// Shared, thread-safe handle.
pub type TheoryRef = Arc<Theory>;
