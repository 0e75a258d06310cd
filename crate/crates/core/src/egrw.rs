//! Atomic egalitarian rewrite systems and the half-rewrite relation.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::kernel::signature::{OpOrigin, SortRef};
use crate::kernel::term::{Name, Subst, Term, Var};
use crate::mel::{check_condition_flow, Condition, PropValue, Theory};

/// `lhs =[ label ]=> rhs if conds`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EgRule {
    pub lhs: Term,
    pub label: Term,
    pub rhs: Term,
    pub conds: Vec<Condition>,
}

impl EgRule {
    pub fn new(lhs: Term, label: Term, rhs: Term, conds: Vec<Condition>) -> EgRule {
        EgRule { lhs, label, rhs, conds }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut v = self.lhs.vars();
        v.extend(self.label.vars());
        v.extend(self.rhs.vars());
        for c in &self.conds {
            v.extend(c.vars());
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageKind {
    State,
    Trans,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmIssue {
    pub context: String,
    /// 1 = origin state to transition, 2 = transition to destination state.
    pub half: Option<u8>,
    pub var: Name,
}

impl std::fmt::Display for AdmIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.half {
            Some(h) => write!(f, "{}: variable {} is unbound in half {}", self.context, self.var, h),
            None => write!(f, "{}: variable {} is unbound", self.context, self.var),
        }
    }
}

#[derive(Debug)]
pub struct AtomicModule {
    pub name: Name,
    pub theory: Theory,
    pub rules: Vec<EgRule>,
    pub init: Option<Term>,
    /// Transition constants synthesized for `=[*]=>` rules.
    pub auto_labels: Vec<Name>,
}

impl AtomicModule {
    pub fn new(name: &str, theory: Theory, rules: Vec<EgRule>, init: Option<Term>) -> Result<AtomicModule> {
        for r in &rules {
            theory.sig().check_pattern(&r.lhs)?;
            theory.sig().check_pattern(&r.label)?;
            for c in &r.conds {
                if let Condition::Match(p, _) = c {
                    theory.sig().check_pattern(p)?;
                }
            }
        }
        Ok(AtomicModule { name: name.into(), theory, rules, init, auto_labels: vec![] })
    }

    fn sort(&self, n: &str) -> SortRef {
        self.theory.sig().sort_ref(n).unwrap_or_else(|| panic!("atomic module lacks sort {n}"))
    }
    pub fn state_sort(&self) -> SortRef {
        self.sort("State")
    }
    pub fn trans_sort(&self) -> SortRef {
        self.sort("Trans")
    }
    pub fn stage_sort(&self) -> SortRef {
        self.sort("Stage")
    }

    /// Whether a normal-form term is a state, a transition, or neither.
    pub fn classify(&self, t: &Term) -> Result<Option<StageKind>> {
        let sig = self.theory.sig();
        let ls = self.theory.eval().least_sort(t)?;
        Ok(if sig.leq(ls, self.state_sort()) {
            Some(StageKind::State)
        } else if sig.leq(ls, self.trans_sort()) {
            Some(StageKind::Trans)
        } else {
            None
        })
    }

    pub fn init_stage(&self) -> Result<Term> {
        let init = self.init.as_ref().ok_or_else(|| Error::Init(format!("module {} declares no init", self.name)))?;
        let n = self.theory.normalize(init)?;
        if self.classify(&n)?.is_none() {
            return Err(Error::Init(format!("init of {} normalizes to {n}, which is not a stage", self.name)));
        }
        Ok(n)
    }

    /// Half-rewrite successors of a canonical ground stage.
    pub fn half_successors(&self, stage: &Term) -> Result<Vec<Term>> {
        let kind = self
            .classify(stage)?
            .ok_or_else(|| Error::IllFormed(format!("{stage} is neither a state nor a transition of {}", self.name)))?;
        let ev = self.theory.eval();
        let sig = self.theory.sig();
        let mut out = BTreeSet::new();
        for (i, r) in self.rules.iter().enumerate() {
            let (from, to, want) = match kind {
                StageKind::State => (&r.lhs, &r.label, StageKind::Trans),
                StageKind::Trans => (&r.label, &r.rhs, StageKind::State),
            };
            for m in crate::kernel::matching::match_term(&ev, from, stage, &Subst::new())? {
                for s in ev.solve(&r.conds, &m)? {
                    let t = ev.normalize(&sig.apply(&s, to))?;
                    if let Some(v) = t.vars().into_iter().next() {
                        return Err(Error::Admissibility {
                            context: format!("rule {} of {} ({})", i + 1, self.name, rule_text(r)),
                            var: v.name.to_string(),
                        });
                    }
                    if self.classify(&t)? == Some(want) {
                        out.insert(t);
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    pub fn eval_property(&self, prop: &str, stage: &Term) -> Result<PropValue> {
        self.theory.eval_property(prop, stage)
    }

    /// Operators that can build a stage containing a proper stage subterm.
    pub fn check_topmost(&self) -> Vec<Name> {
        let sig = self.theory.sig();
        let SortRef::Sort(stage) = self.stage_sort() else { return vec![] };
        let stage_kind = sig.kind_of_sort(stage);
        let is_data = |r: usize| ["Int", "Bool"].iter().any(|d| sig.sort_id(d).is_some_and(|d| sig.leq_sort(r, d)));
        let user = |o: &OpOrigin| matches!(o, OpOrigin::User | OpOrigin::AutoLabel | OpOrigin::Common);
        // does some stage constructor lie in the constructor closure of `start`?
        let reaches_stage = |start: SortRef| -> bool {
            let mut seen: HashSet<SortRef> = HashSet::new();
            let mut work = vec![start];
            while let Some(x) = work.pop() {
                if !seen.insert(x) {
                    continue;
                }
                for f in sig.all_families().iter().filter(|f| user(&f.origin)) {
                    for d in &f.decls {
                        let hit = match (d.result, x) {
                            (SortRef::Sort(r), _) => sig.leq(SortRef::Sort(r), x),
                            (SortRef::Kind(k), SortRef::Kind(k2)) => k == k2,
                            _ => false,
                        };
                        if !hit {
                            continue;
                        }
                        if let SortRef::Sort(r) = d.result {
                            if sig.leq_sort(r, stage) && !is_data(r) {
                                return true;
                            }
                        }
                        work.extend(d.args.iter().copied());
                    }
                }
            }
            false
        };
        let mut bad = Vec::new();
        for f in sig.all_families() {
            if !matches!(f.origin, OpOrigin::User) || f.result_kind != stage_kind || f.arity == 0 {
                continue;
            }
            let offending =
                f.decls.iter().any(|d| d.args.iter().any(|a| sig.kind_of_ref(*a) == stage_kind && reaches_stage(*a)));
            if offending && !bad.contains(&f.name) {
                bad.push(f.name.clone());
            }
        }
        bad
    }

    /// Per-half variable coverage of rules and coverage of equations.
    pub fn check_admissible(&self) -> Vec<AdmIssue> {
        let mut out = Vec::new();
        for (i, r) in self.rules.iter().enumerate() {
            let ctx = format!("rule {} ({})", i + 1, rule_text(r));
            for (half, from, to) in [(1u8, &r.lhs, &r.label), (2u8, &r.label, &r.rhs)] {
                let mut known: HashSet<Var> = from.vars().into_iter().collect();
                if let Some(v) = check_condition_flow(&r.conds, &mut known) {
                    out.push(AdmIssue { context: ctx.clone(), half: Some(half), var: v.name });
                    continue;
                }
                if let Some(v) = to.vars().into_iter().find(|v| !known.contains(v)) {
                    out.push(AdmIssue { context: ctx.clone(), half: Some(half), var: v.name });
                }
            }
        }
        for e in self.theory.equations() {
            let mut known: HashSet<Var> = e.lhs.vars().into_iter().collect();
            let ctx = format!("equation {} = {}", e.lhs, e.rhs);
            if let Some(v) = check_condition_flow(&e.conds, &mut known) {
                out.push(AdmIssue { context: ctx, half: None, var: v.name });
            } else if let Some(v) = e.rhs.vars().into_iter().find(|v| !known.contains(v)) {
                out.push(AdmIssue { context: ctx, half: None, var: v.name });
            }
        }
        out
    }
}

pub fn rule_text(r: &EgRule) -> String {
    let mut s = format!("{} =[ {} ]=> {}", r.lhs, r.label, r.rhs);
    if !r.conds.is_empty() {
        s.push_str(" if ");
        s.push_str(&r.conds.iter().map(condition_text).collect::<Vec<_>>().join(" /\\ "));
    }
    s
}

pub fn condition_text(c: &Condition) -> String {
    match c {
        Condition::Eq(a, b) => format!("{a} = {b}"),
        Condition::Match(a, b) => format!("{a} := {b}"),
        Condition::Sort(a, s) => format!("{a} : {s:?}"),
    }
}

/// Conservative readability test: shared variables of the two halves flow
/// only through the transition term.
pub fn is_readable_syntactic(rule: &EgRule) -> bool {
    let lhs = rule.lhs.vars();
    let rhs = rule.rhs.vars();
    let label = rule.label.vars();
    if lhs.intersection(&rhs).any(|v| !label.contains(v)) {
        return false;
    }
    let cond_sets: Vec<BTreeSet<Var>> =
        rule.conds.iter().map(|c| c.vars().into_iter().filter(|v| !label.contains(v)).collect()).collect();
    let closure = |seed: BTreeSet<Var>| {
        let mut set: BTreeSet<Var> = seed.into_iter().filter(|v| !label.contains(v)).collect();
        loop {
            let before = set.len();
            for c in &cond_sets {
                if c.iter().any(|v| set.contains(v)) {
                    set.extend(c.iter().cloned());
                }
            }
            if set.len() == before {
                return set;
            }
        }
    };
    let l = closure(lhs);
    let r = closure(rhs);
    l.is_disjoint(&r)
}

fn primed(name: &str) -> String {
    match name.find('_') {
        Some(i) => format!("{}'{}", &name[..i], &name[i..]),
        None => format!("{name}'"),
    }
}

fn fresh(base: &str, taken: &mut HashSet<Name>, first: impl Fn(&str) -> String) -> Name {
    let mut n = first(base);
    while taken.contains(n.as_str()) {
        n = primed(&n);
    }
    let n: Name = n.into();
    taken.insert(n.clone());
    n
}

/// Makes a rule readable: rename shared variables apart with linking
/// equations, then split the conditions into a copy for each half.
pub fn make_readable(rule: &EgRule) -> EgRule {
    let t = rule.lhs.vars();
    let l = rule.label.vars();
    let tp = rule.rhs.vars();
    let mut taken: HashSet<Name> = rule.vars().into_iter().map(|v| v.name).collect();
    let (mut in_t, mut in_l, mut in_tp) = (Subst::new(), Subst::new(), Subst::new());
    let mut in_c = Subst::new();
    let mut links = Vec::new();
    let all: BTreeSet<Var> = t.iter().chain(&l).chain(&tp).cloned().collect();
    for x in all {
        let (a, b, c) = (t.contains(&x), l.contains(&x), tp.contains(&x));
        if (a as u8 + b as u8 + c as u8) < 2 {
            continue;
        }
        let mk = |suffix: &str, taken: &mut HashSet<Name>| {
            Term::from_var(Var { name: fresh(&x.name, taken, |n| format!("{n}_{suffix}")), sort: x.sort.clone() })
        };
        let xt = a.then(|| mk("t", &mut taken));
        let xl = b.then(|| mk("l", &mut taken));
        let xtp = c.then(|| mk("t'", &mut taken));
        match (&xt, &xl, &xtp) {
            (Some(xt), Some(xl), None) => links.push(Condition::Eq(xl.clone(), xt.clone())),
            (None, Some(xl), Some(xtp)) => links.push(Condition::Eq(xl.clone(), xtp.clone())),
            (Some(xt), None, Some(xtp)) => links.push(Condition::Eq(xt.clone(), xtp.clone())),
            (Some(xt), Some(xl), Some(xtp)) => {
                links.push(Condition::Eq(xl.clone(), xt.clone()));
                links.push(Condition::Eq(xl.clone(), xtp.clone()));
            }
            _ => unreachable!(),
        }
        if let Some(v) = &xt {
            in_t.insert(x.clone(), v.clone());
        }
        if let Some(v) = &xl {
            in_l.insert(x.clone(), v.clone());
        }
        if let Some(v) = &xtp {
            in_tp.insert(x.clone(), v.clone());
        }
        let rep = xl.or(xt).or(xtp).unwrap();
        in_c.insert(x.clone(), rep);
    }
    let lhs = rule.lhs.substitute(&in_t);
    let label = rule.label.substitute(&in_l);
    let rhs = rule.rhs.substitute(&in_tp);
    let mut c0 = links;
    c0.extend(rule.conds.iter().map(|c| c.map_terms(&mut |x| x.substitute(&in_c))));
    let freshen = |keep: BTreeSet<Var>, taken: &mut HashSet<Name>| -> Vec<Condition> {
        let mut ren = Subst::new();
        for c in &c0 {
            for v in c.vars() {
                if !keep.contains(&v) && !ren.contains(&v) {
                    let n = fresh(&v.name, taken, primed);
                    ren.insert(v.clone(), Term::from_var(Var { name: n, sort: v.sort.clone() }));
                }
            }
        }
        c0.iter().map(|c| c.map_terms(&mut |x| x.substitute(&ren))).collect()
    };
    let mut first_keep = lhs.vars();
    first_keep.extend(label.vars());
    let mut second_keep = label.vars();
    second_keep.extend(rhs.vars());
    let mut conds = freshen(first_keep, &mut taken);
    conds.extend(freshen(second_keep, &mut taken));
    EgRule { lhs, label, rhs, conds }
}

/// Reference semantics for one rule on a bounded domain: every variable not
/// fixed by matching ranges over `domain` (filtered by sort). Exponential;
/// meant for cross-checking.
pub fn half_successors_enumerated(
    module: &AtomicModule,
    rule: &EgRule,
    stage: &Term,
    domain: &[Term],
) -> Result<BTreeSet<Term>> {
    let th = &module.theory;
    let ev = th.eval();
    let sig = th.sig();
    let Some(kind) = module.classify(stage)? else { return Ok(BTreeSet::new()) };
    let (from, to, want) = match kind {
        StageKind::State => (&rule.lhs, &rule.label, StageKind::Trans),
        StageKind::Trans => (&rule.label, &rule.rhs, StageKind::State),
    };
    let mut out = BTreeSet::new();
    for m in crate::kernel::matching::match_term(&ev, from, stage, &Subst::new())? {
        let free: Vec<Var> = rule.vars().into_iter().filter(|v| !m.contains(v)).collect();
        let mut choices: Vec<Vec<Term>> = Vec::new();
        for v in &free {
            let s = sig.var_sort(v)?;
            let mut c = Vec::new();
            for d in domain {
                if sig.leq(ev.least_sort(d)?, s) {
                    c.push(d.clone());
                }
            }
            choices.push(c);
        }
        let mut idx = vec![0usize; free.len()];
        if choices.iter().any(|c| c.is_empty()) {
            continue;
        }
        loop {
            let mut th_full = m.clone();
            for (k, v) in free.iter().enumerate() {
                th_full.insert(v.clone(), choices[k][idx[k]].clone());
            }
            if conditions_hold(module, &rule.conds, &th_full)? {
                let t = th.normalize(&sig.apply(&th_full, to))?;
                if module.classify(&t)? == Some(want) {
                    out.insert(t);
                }
            }
            // odometer
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
                break;
            }
        }
    }
    Ok(out)
}

fn conditions_hold(module: &AtomicModule, conds: &[Condition], th: &Subst) -> Result<bool> {
    let ev = module.theory.eval();
    let sig = module.theory.sig();
    for c in conds {
        let ok = match c {
            Condition::Eq(a, b) => ev.normalize(&sig.apply(th, a))? == ev.normalize(&sig.apply(th, b))?,
            Condition::Sort(a, s) => sig.leq(ev.least_sort(&ev.normalize(&sig.apply(th, a))?)?, *s),
            Condition::Match(p, t) => {
                let target = ev.normalize(&sig.apply(th, t))?;
                let inst = ev.normalize(&sig.apply(th, p))?;
                inst == target
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Half-successor map of a rule set over the given stages.
pub fn successor_map(module: &AtomicModule, stages: &[Term]) -> Result<BTreeMap<Term, Vec<Term>>> {
    stages.iter().map(|s| Ok((s.clone(), module.half_successors(s)?))).collect()
}
