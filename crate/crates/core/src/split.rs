//! The split translation to plain rewrite systems, static pruning of the
//! product rules, and one-step plain rewriting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

use crate::compose::{tuple_op, ComposedSystem, FlatCriterion, FlatEval};
use crate::egrw::AtomicModule;
use crate::error::{Error, Result};
use crate::kernel::matching::match_term;
use crate::kernel::signature::{Signature, SortRef};
use crate::kernel::term::{Name, Node, Subst, Term, Var};
use crate::mel::{Condition, Equation, Eval, Membership, PropValue, Theory};

/// Sort renaming of the split: `State` becomes `State'`, `Stage` becomes `State`.
pub fn split_sort_name(s: &str) -> String {
    if let Some(inner) = s.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
        return format!("[{}]", split_sort_name(inner));
    }
    match s {
        "State" => "State'".into(),
        "Stage" => "State".into(),
        _ => s.into(),
    }
}

fn rename_term(t: &Term, map: &dyn Fn(&str) -> String) -> Term {
    t.map_vars(&mut |v| Term::from_var(Var { name: v.name.clone(), sort: map(&v.sort).into() }))
}

fn rename_cond(c: &Condition, old: &Signature, new: &Signature, map: &dyn Fn(&str) -> String) -> Result<Condition> {
    Ok(match c {
        Condition::Eq(a, b) => Condition::Eq(rename_term(a, map), rename_term(b, map)),
        Condition::Match(a, b) => Condition::Match(rename_term(a, map), rename_term(b, map)),
        Condition::Sort(a, s) => {
            let name = map(&old.ref_name(*s));
            let r = match s {
                SortRef::Sort(_) => new.sort_ref(&name),
                // kinds keep their maximal-sort names
                SortRef::Kind(_) => {
                    new.sort_ref(&format!("[{}]", map(old.sort_name(old.kind(old.kind_of_ref(*s)).maximal[0]))))
                }
            }
            .ok_or_else(|| Error::Decl(format!("sort {name} lost in renaming")))?;
            Condition::Sort(rename_term(a, map), r)
        }
    })
}

/// Rebuilds a theory under a sort renaming.
pub fn rename_theory(th: &Theory, map: &dyn Fn(&str) -> String) -> Result<Theory> {
    let old = th.sig();
    let sig = Signature::build(old.spec().renamed(map))?;
    let rc = |c: &Condition| rename_cond(c, old, &sig, map);
    let eqs = th
        .equations()
        .iter()
        .map(|e| {
            Ok(Equation {
                lhs: rename_term(&e.lhs, map),
                rhs: rename_term(&e.rhs, map),
                conds: e.conds.iter().map(rc).collect::<Result<_>>()?,
                owise: e.owise,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mbs = th
        .memberships()
        .iter()
        .map(|m| {
            let name = map(old.sort_name(m.sort));
            Ok(Membership {
                subject: rename_term(&m.subject, map),
                sort: sig.sort_id(&name).ok_or_else(|| Error::Decl(format!("sort {name} lost in renaming")))?,
                conds: m.conds.iter().map(rc).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Theory::new(sig, eqs, mbs)?;
    out.budget = th.budget;
    Ok(out)
}

/// `lhs => rhs if conds`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainRule {
    pub lhs: Term,
    pub rhs: Term,
    pub conds: Vec<Condition>,
}

/// A split atomic system: every stage is a state.
#[derive(Debug)]
pub struct PlainAtomic {
    pub name: Name,
    pub theory: Theory,
    pub rules: Vec<PlainRule>,
    pub init: Option<Term>,
}

impl PlainAtomic {
    pub fn state_sort(&self) -> SortRef {
        self.theory.sig().sort_ref("State").expect("plain module has State")
    }

    pub fn init_state(&self) -> Result<Term> {
        let init = self.init.as_ref().ok_or_else(|| Error::Init(format!("module {} declares no init", self.name)))?;
        self.theory.normalize(init)
    }

    pub fn is_state(&self, t: &Term) -> Result<bool> {
        let ls = self.theory.eval().least_sort(t)?;
        Ok(self.theory.sig().leq(ls, self.state_sort()))
    }

    /// One-step rewrites at the root.
    pub fn successors(&self, t: &Term) -> Result<Vec<Term>> {
        let ev = self.theory.eval();
        let sig = self.theory.sig();
        let mut out = BTreeSet::new();
        for (i, r) in self.rules.iter().enumerate() {
            for m in match_term(&ev, &r.lhs, t, &Subst::new())? {
                for s in ev.solve(&r.conds, &m)? {
                    let n = ev.normalize(&sig.apply(&s, &r.rhs))?;
                    if let Some(v) = n.vars().into_iter().next() {
                        return Err(Error::Admissibility {
                            context: format!("plain rule {} of {}", i + 1, self.name),
                            var: v.name.to_string(),
                        });
                    }
                    out.insert(n);
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

/// Cuts every egalitarian rule in two and renames the top sorts.
pub fn split_atomic(m: &AtomicModule) -> Result<PlainAtomic> {
    let map = |s: &str| split_sort_name(s);
    let theory = rename_theory(&m.theory, &map)?;
    let old = m.theory.sig();
    let mut rules = Vec::new();
    for r in &m.rules {
        let conds: Vec<Condition> =
            r.conds.iter().map(|c| rename_cond(c, old, theory.sig(), &map)).collect::<Result<_>>()?;
        let (lhs, label, rhs) = (rename_term(&r.lhs, &map), rename_term(&r.label, &map), rename_term(&r.rhs, &map));
        rules.push(PlainRule { lhs, rhs: label.clone(), conds: conds.clone() });
        rules.push(PlainRule { lhs: label, rhs, conds });
    }
    Ok(PlainAtomic { name: m.name.clone(), theory, rules, init: m.init.clone() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProductCond {
    /// A condition of one component's rule.
    Part(usize, Condition),
    /// `< ... > : State`, the compatibility membership.
    Member(Vec<Term>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductRule {
    pub lhs: Vec<Term>,
    pub rhs: Vec<Term>,
    pub conds: Vec<ProductCond>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplitStats {
    /// One plain rule per component.
    pub combinations: usize,
    /// Combinations times nonempty stepping subsets.
    pub generated: usize,
    /// Left after merging rules equal up to variable renaming.
    pub distinct: usize,
    pub deleted: usize,
    pub conditions_removed: usize,
    pub pruned: bool,
}

/// An exported property of the split system as a flat expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainExport {
    pub name: Name,
    pub codomain: Name,
    pub expr: Term,
}

/// The materialized plain composition over tuples of component stages.
#[derive(Debug)]
pub struct PlainProduct {
    pub name: Name,
    pub leaves: Vec<PlainAtomic>,
    pub index: HashMap<Name, usize>,
    pub criteria: Vec<FlatCriterion>,
    pub exported: Vec<PlainExport>,
    pub rules: Vec<ProductRule>,
    pub stats: SplitStats,
    /// Criterion endpoints not declared total.
    pub partial_endpoints: Vec<String>,
    groups: Vec<(Vec<Term>, Vec<usize>)>,
    cache: Mutex<HashMap<(usize, Name, Term), PropValue>>,
}

#[derive(Debug)]
pub enum PlainModule {
    Flat(PlainAtomic),
    Product(PlainProduct),
}

impl PlainModule {
    pub fn name(&self) -> &Name {
        match self {
            PlainModule::Flat(p) => &p.name,
            PlainModule::Product(p) => &p.name,
        }
    }
    pub fn rule_count(&self) -> usize {
        match self {
            PlainModule::Flat(p) => p.rules.len(),
            PlainModule::Product(p) => p.rules.len(),
        }
    }
}

fn term_vars(ts: &[Term]) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    for t in ts {
        t.collect_vars(&mut out);
    }
    out
}

impl ProductRule {
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut v = term_vars(&self.lhs);
        v.extend(term_vars(&self.rhs));
        for c in &self.conds {
            match c {
                ProductCond::Part(_, c) => v.extend(c.vars()),
                ProductCond::Member(t) => v.extend(term_vars(t)),
            }
        }
        v
    }

    fn map_vars(&self, f: &mut dyn FnMut(&Var) -> Term) -> ProductRule {
        let mut mt = |t: &Term| t.map_vars(f);
        let lhs = self.lhs.iter().map(&mut mt).collect();
        let rhs = self.rhs.iter().map(&mut mt).collect();
        let conds = self
            .conds
            .iter()
            .map(|c| match c {
                ProductCond::Part(i, c) => ProductCond::Part(*i, c.map_terms(&mut mt)),
                ProductCond::Member(t) => ProductCond::Member(t.iter().map(&mut mt).collect()),
            })
            .collect();
        ProductRule { lhs, rhs, conds }
    }

    /// Variables renamed by order of first occurrence, for alpha-equivalence.
    fn alpha_key(&self) -> ProductRule {
        let mut order: Vec<Var> = Vec::new();
        let mut note = |t: &Term| {
            let mut seen = Vec::new();
            collect_ordered(t, &mut seen);
            for v in seen {
                if !order.contains(&v) {
                    order.push(v);
                }
            }
        };
        self.lhs.iter().for_each(&mut note);
        self.rhs.iter().for_each(&mut note);
        for c in &self.conds {
            match c {
                ProductCond::Part(_, Condition::Eq(a, b)) | ProductCond::Part(_, Condition::Match(a, b)) => {
                    note(a);
                    note(b)
                }
                ProductCond::Part(_, Condition::Sort(a, _)) => note(a),
                ProductCond::Member(t) => t.iter().for_each(&mut note),
            }
        }
        let idx: HashMap<Var, usize> = order.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        self.map_vars(&mut |v| Term::var(&format!("#{}", idx[v]), &v.sort))
    }
}

fn collect_ordered(t: &Term, out: &mut Vec<Var>) {
    match t.node() {
        Node::Var(v) => out.push(v.clone()),
        Node::App(_, a) | Node::Ac(_, a) => a.iter().for_each(|x| collect_ordered(x, out)),
        _ => {}
    }
}

/// Variable renaming that keeps components apart: a name used by more than
/// one component gets primes in all but the first.
fn apart_renaming(leaves: &[PlainAtomic]) -> Vec<HashMap<Var, Var>> {
    let mut owner: HashMap<Name, usize> = HashMap::new();
    let mut taken: HashSet<Name> = HashSet::new();
    let mut per_leaf: Vec<BTreeSet<Var>> = Vec::new();
    for l in leaves {
        let mut vs = BTreeSet::new();
        for r in &l.rules {
            vs.extend(r.lhs.vars());
            vs.extend(r.rhs.vars());
            for c in &r.conds {
                vs.extend(c.vars());
            }
        }
        taken.extend(vs.iter().map(|v| v.name.clone()));
        per_leaf.push(vs);
    }
    let mut out = Vec::new();
    for (i, vs) in per_leaf.iter().enumerate() {
        let mut m = HashMap::new();
        for v in vs {
            let o = *owner.entry(v.name.clone()).or_insert(i);
            if o == i {
                continue;
            }
            let mut n = format!("{}'", v.name);
            while taken.contains(n.as_str()) {
                n.push('\'');
            }
            let n: Name = n.into();
            taken.insert(n.clone());
            m.insert(v.clone(), Var { name: n, sort: v.sort.clone() });
        }
        out.push(m);
    }
    out
}

fn rename_rule(r: &PlainRule, m: &HashMap<Var, Var>) -> PlainRule {
    let mut f = |v: &Var| Term::from_var(m.get(v).cloned().unwrap_or_else(|| v.clone()));
    PlainRule {
        lhs: r.lhs.map_vars(&mut f),
        rhs: r.rhs.map_vars(&mut f),
        conds: r.conds.iter().map(|c| c.map_terms(&mut |t| t.map_vars(&mut f))).collect(),
    }
}

/// Materializes the plain composition of the split components.
pub fn split_composed(sys: &ComposedSystem) -> Result<PlainProduct> {
    let mut leaves = Vec::new();
    for l in sys.leaves() {
        let mut p = split_atomic(&l.module)?;
        p.name = l.name.clone();
        leaves.push(p);
    }
    let ren = apart_renaming(&leaves);
    let rules_per: Vec<Vec<PlainRule>> =
        leaves.iter().zip(&ren).map(|(l, m)| l.rules.iter().map(|r| rename_rule(r, m)).collect()).collect();
    let n = leaves.len();
    let combinations: usize = rules_per.iter().map(|r| r.len()).product();
    let subsets = (1usize << n) - 1;
    let mut stats = SplitStats { combinations, generated: combinations * subsets, ..Default::default() };
    let mut rules = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    if combinations > 0 {
        let mut choice = vec![0usize; n];
        loop {
            for mask in 1..=subsets {
                let mut lhs = Vec::new();
                let mut rhs = Vec::new();
                let mut conds = Vec::new();
                for i in 0..n {
                    let r = &rules_per[i][choice[i]];
                    lhs.push(r.lhs.clone());
                    if mask & (1 << i) != 0 {
                        rhs.push(r.rhs.clone());
                        conds.extend(r.conds.iter().map(|c| ProductCond::Part(i, c.clone())));
                    } else {
                        rhs.push(r.lhs.clone());
                    }
                }
                conds.push(ProductCond::Member(lhs.clone()));
                conds.push(ProductCond::Member(rhs.clone()));
                let rule = ProductRule { lhs, rhs, conds };
                if seen.insert(format!("{:?}", rule.alpha_key())) {
                    rules.push(rule);
                }
            }
            let mut k = 0;
            while k < n {
                choice[k] += 1;
                if choice[k] < rules_per[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    stats.distinct = rules.len();
    let exported = sys
        .exported
        .iter()
        .map(|e| {
            Ok(PlainExport { name: e.name.clone(), codomain: e.codomain.clone(), expr: sys.resolve_path(&e.name)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut partial = Vec::new();
    for c in sys.flat_criteria() {
        if !c.total {
            partial.push(c.label.clone());
        }
    }
    Ok(PlainProduct::new(sys.name.clone(), leaves, sys.flat_criteria().to_vec(), exported, rules, stats, partial))
}

impl PlainProduct {
    pub fn new(
        name: Name,
        leaves: Vec<PlainAtomic>,
        criteria: Vec<FlatCriterion>,
        exported: Vec<PlainExport>,
        rules: Vec<ProductRule>,
        stats: SplitStats,
        partial_endpoints: Vec<String>,
    ) -> PlainProduct {
        let index = leaves.iter().enumerate().map(|(i, l)| (l.name.clone(), i)).collect();
        let mut p = PlainProduct {
            name,
            leaves,
            index,
            criteria,
            exported,
            rules,
            stats,
            partial_endpoints,
            groups: vec![],
            cache: Mutex::new(HashMap::new()),
        };
        p.regroup();
        p
    }

    fn regroup(&mut self) {
        let mut by: BTreeMap<String, usize> = BTreeMap::new();
        let mut groups: Vec<(Vec<Term>, Vec<usize>)> = Vec::new();
        for (i, r) in self.rules.iter().enumerate() {
            let key = format!("{:?}", r.lhs);
            match by.get(&key) {
                Some(&g) => groups[g].1.push(i),
                None => {
                    by.insert(key, groups.len());
                    groups.push((r.lhs.clone(), vec![i]));
                }
            }
        }
        self.groups = groups;
    }

    pub fn evaluator(&self, cached: bool) -> FlatEval<'_> {
        FlatEval {
            theories: self.leaves.iter().map(|l| &l.theory).collect(),
            index: &self.index,
            cache: cached.then_some(&self.cache),
        }
    }

    pub fn tuple(&self, parts: Vec<Term>) -> Term {
        Term::app(tuple_op(parts.len()), parts)
    }

    pub fn parts<'t>(&self, t: &'t Term) -> Result<&'t [Term]> {
        match t.node() {
            Node::App(f, a) if a.len() == self.leaves.len() && crate::compose::is_tuple_op(f) => Ok(a),
            _ => Err(Error::IllFormed(format!("{t} is not a state of {}", self.name))),
        }
    }

    /// The compatibility membership on ground parts.
    pub fn member(&self, parts: &[Term]) -> Result<bool> {
        for (l, p) in self.leaves.iter().zip(parts) {
            if !l.is_state(p)? {
                return Ok(false);
            }
        }
        let ev = self.evaluator(true);
        for c in &self.criteria {
            if ev.criterion(c, parts, false)? == Some(false) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn init_state(&self) -> Result<Term> {
        let parts = self.leaves.iter().map(|l| l.init_state()).collect::<Result<Vec<_>>>()?;
        if !self.member(&parts)? {
            return Err(Error::Init(format!("initial tuple {} of {} is not a State", self.tuple(parts), self.name)));
        }
        Ok(self.tuple(parts))
    }

    fn instantiate(&self, ts: &[Term], s: &Subst) -> Result<Vec<Term>> {
        ts.iter().zip(&self.leaves).map(|(t, l)| l.theory.normalize(&l.theory.sig().apply(s, t))).collect()
    }

    /// One-step rewrites of a ground tuple by the product rules.
    pub fn successors(&self, t: &Term) -> Result<Vec<Term>> {
        let parts = self.parts(t)?;
        let evs: Vec<Eval<'_>> = self.leaves.iter().map(|l| l.theory.eval()).collect();
        let mut out = BTreeSet::new();
        for (lhs, members) in &self.groups {
            let mut substs = vec![Subst::new()];
            for i in 0..parts.len() {
                let mut next = Vec::new();
                for s in &substs {
                    next.extend(match_term(&evs[i], &lhs[i], &parts[i], s)?);
                }
                substs = next;
                if substs.is_empty() {
                    break;
                }
            }
            for s0 in &substs {
                for &ri in members {
                    let r = &self.rules[ri];
                    let mut cur = vec![s0.clone()];
                    for c in &r.conds {
                        let mut next = Vec::new();
                        for s in cur {
                            match c {
                                ProductCond::Part(i, c) => next.extend(evs[*i].solve(std::slice::from_ref(c), &s)?),
                                ProductCond::Member(ts) => {
                                    if let Some(v) = term_vars(ts).into_iter().find(|v| !s.contains(v)) {
                                        return Err(Error::Admissibility {
                                            context: format!("membership condition of a rule of {}", self.name),
                                            var: v.name.to_string(),
                                        });
                                    }
                                    if self.member(&self.instantiate(ts, &s)?)? {
                                        next.push(s);
                                    }
                                }
                            }
                        }
                        cur = next;
                        if cur.is_empty() {
                            break;
                        }
                    }
                    for s in cur {
                        let res = self.instantiate(&r.rhs, &s)?;
                        if let Some(v) = term_vars(&res).into_iter().next() {
                            return Err(Error::Admissibility {
                                context: format!("rule of {} rewriting {t}", self.name),
                                var: v.name.to_string(),
                            });
                        }
                        out.insert(self.tuple(res));
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Decides the membership conditions that do not depend on rule
    /// variables: rules with a false one are deleted, true ones are dropped.
    pub fn prune(&mut self) -> Result<()> {
        let mut kept = Vec::new();
        let mut deleted = 0;
        let mut removed = 0;
        for r in std::mem::take(&mut self.rules) {
            let mut conds = Vec::new();
            let mut dead = false;
            for c in &r.conds {
                let ProductCond::Member(ts) = c else {
                    conds.push(c.clone());
                    continue;
                };
                match self.decide_member(ts)? {
                    Some(true) => removed += 1,
                    Some(false) => {
                        dead = true;
                        break;
                    }
                    None => conds.push(c.clone()),
                }
            }
            if dead {
                deleted += 1;
            } else {
                kept.push(ProductRule { conds, ..r });
            }
        }
        self.rules = kept;
        self.stats.deleted += deleted;
        self.stats.conditions_removed += removed;
        self.stats.pruned = true;
        self.regroup();
        Ok(())
    }

    /// Symbolic evaluation of `< ts > : State`.
    pub fn decide_member(&self, ts: &[Term]) -> Result<Option<bool>> {
        let mut parts = Vec::new();
        let mut all_states = true;
        for (t, l) in ts.iter().zip(&self.leaves) {
            let ev = Eval::new(&l.theory, true);
            let n = ev.normalize(t)?;
            let ls = ev.least_sort(&n)?;
            let sig = l.theory.sig();
            if !sig.leq(ls, l.state_sort()) {
                if n.is_ground() || !sig.overlap(ls, l.state_sort()) {
                    return Ok(Some(false));
                }
                all_states = false;
            }
            if ev.is_uncertain() {
                all_states = false;
            }
            parts.push(n);
        }
        let ev = self.evaluator(false);
        let mut undecided = !all_states;
        for c in &self.criteria {
            match ev.criterion(c, &parts, true)? {
                Some(false) => return Ok(Some(false)),
                Some(true) => {}
                None => undecided = true,
            }
        }
        Ok(if undecided { None } else { Some(true) })
    }

    pub fn eval_path(&self, path: &str, t: &Term) -> Result<PropValue> {
        let expr = self.resolve_path(path)?;
        let parts = self.parts(t)?;
        Ok(self.evaluator(true).eval(&expr, parts, false)?.0)
    }

    pub fn resolve_path(&self, path: &str) -> Result<Term> {
        if let Some(e) = self.exported.iter().find(|e| &*e.name == path) {
            return Ok(e.expr.clone());
        }
        if let Some((leaf, prop)) = path.rsplit_once('.') {
            if let Some(&i) = self.index.get(leaf) {
                if self.leaves[i].theory.sig().prop(prop).is_some() {
                    return Ok(Term::app(format!("{prop}@_"), vec![Term::from_var(crate::compose::leaf_var(leaf))]));
                }
            }
        }
        Err(Error::Resolve(format!("unknown property {path} of {}", self.name)))
    }

    pub fn property_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.leaves {
            for p in l.theory.sig().props().keys() {
                out.push(format!("{}.{p}", l.name));
            }
        }
        for e in &self.exported {
            out.push(e.name.to_string());
        }
        out
    }
}

impl PlainModule {
    pub fn initial(&self) -> Result<Term> {
        match self {
            PlainModule::Flat(p) => p.init_state(),
            PlainModule::Product(p) => p.init_state(),
        }
    }
    pub fn successors(&self, t: &Term) -> Result<Vec<Term>> {
        match self {
            PlainModule::Flat(p) => p.successors(t),
            PlainModule::Product(p) => p.successors(t),
        }
    }
}

pub struct PlainSemantics<'a>(pub &'a PlainModule);

impl crate::explore::Semantics for PlainSemantics<'_> {
    fn name(&self) -> String {
        self.0.name().to_string()
    }
    fn initial(&self) -> Result<Term> {
        self.0.initial()
    }
    fn successors(&self, t: &Term) -> Result<Vec<Term>> {
        self.0.successors(t)
    }
    fn sort_label(&self, t: &Term) -> Result<String> {
        match self.0 {
            PlainModule::Flat(p) => {
                let ls = p.theory.least_sort(t)?;
                Ok(p.theory.sig().ref_name(ls))
            }
            PlainModule::Product(p) => Ok(if p.member(p.parts(t)?)? { "State".into() } else { "[State]".into() }),
        }
    }
    fn is_transition(&self, _t: &Term) -> Result<bool> {
        Ok(false)
    }
    fn property_paths(&self) -> Vec<String> {
        match self.0 {
            PlainModule::Flat(p) => p.theory.sig().props().keys().map(|k| k.to_string()).collect(),
            PlainModule::Product(p) => p.property_paths(),
        }
    }
    fn eval_path(&self, path: &str, t: &Term) -> Result<PropValue> {
        match self.0 {
            PlainModule::Flat(p) => {
                let q = path.strip_prefix(&*p.name).and_then(|r| r.strip_prefix('.')).unwrap_or(path);
                p.theory.eval_property(q, t)
            }
            PlainModule::Product(p) => p.eval_path(path, t),
        }
    }
    fn check_path(&self, path: &str) -> Result<()> {
        match self.0 {
            PlainModule::Flat(p) => {
                let q = path.strip_prefix(&*p.name).and_then(|r| r.strip_prefix('.')).unwrap_or(path);
                p.theory.sig().prop(q).map(|_| ()).ok_or_else(|| Error::Resolve(format!("unknown property {path}")))
            }
            PlainModule::Product(p) => p.resolve_path(path).map(|_| ()),
        }
    }
    fn compile_pattern(&self, component: Option<&str>, text: &str) -> Result<crate::explore::StagePattern> {
        match self.0 {
            PlainModule::Flat(p) => {
                Ok(crate::explore::StagePattern { part: None, pattern: crate::syntax::parse_pattern(&p.theory, text)? })
            }
            PlainModule::Product(p) => {
                let c =
                    component.ok_or_else(|| Error::Resolve("patterns over a product must name a component".into()))?;
                let i = *p.index.get(c).ok_or_else(|| Error::Resolve(format!("{} has no component {c}", p.name)))?;
                Ok(crate::explore::StagePattern {
                    part: Some(i),
                    pattern: crate::syntax::parse_pattern(&p.leaves[i].theory, text)?,
                })
            }
        }
    }
    fn pattern_theory(&self, part: Option<usize>) -> &Theory {
        match self.0 {
            PlainModule::Flat(p) => &p.theory,
            PlainModule::Product(p) => &p.leaves[part.unwrap_or(0)].theory,
        }
    }
}
