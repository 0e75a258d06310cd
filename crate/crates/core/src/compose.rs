//! Synchronous composition of egalitarian systems.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::egrw::AtomicModule;
use crate::error::{Error, Result};
use crate::kernel::term::{Name, Node, Term, Var};
use crate::mel::{Eval, PropValue, Theory};

/// `path.prop`, the path being component names below the system that owns
/// the criterion.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub path: Vec<Name>,
    pub prop: Name,
}

impl Endpoint {
    pub fn parse(text: &str) -> Endpoint {
        let mut parts: Vec<Name> = text.split('.').map(Name::from).collect();
        let prop = parts.pop().unwrap_or_else(|| "".into());
        Endpoint { path: parts, prop }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.path {
            write!(f, "{p}.")?;
        }
        f.write_str(&self.prop)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Criterion {
    pub left: Endpoint,
    pub right: Endpoint,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

/// `eq name @ var = expr .` where `expr` reaches the stage only through
/// projections `CHILD(var)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportedProp {
    pub name: Name,
    pub codomain: Name,
    pub total: bool,
    pub var: Var,
    pub expr: Term,
}

#[derive(Clone, Debug)]
pub enum Component {
    Atomic(Arc<AtomicModule>),
    Composed(Arc<ComposedSystem>),
}

impl Component {
    pub fn name(&self) -> &Name {
        match self {
            Component::Atomic(m) => &m.name,
            Component::Composed(c) => &c.name,
        }
    }
    pub fn atomic_components(&self) -> BTreeSet<Name> {
        match self {
            Component::Atomic(m) => BTreeSet::from([m.name.clone()]),
            Component::Composed(c) => c.atomic_components(),
        }
    }
    pub fn criteria_set(&self) -> BTreeSet<(Term, Term)> {
        match self {
            Component::Atomic(_) => BTreeSet::new(),
            Component::Composed(c) => c.criteria_set(),
        }
    }
}

/// Same atoms and same criteria.
pub fn equivalent(a: &Component, b: &Component) -> bool {
    a.atomic_components() == b.atomic_components() && a.criteria_set() == b.criteria_set()
}

#[derive(Clone, Debug)]
pub struct Leaf {
    pub name: Name,
    pub module: Arc<AtomicModule>,
}

/// A criterion over leaf stages: both sides are expressions whose atoms are
/// `p @ LEAF` with `LEAF` a variable naming a leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatCriterion {
    pub left: Term,
    pub right: Term,
    pub label: String,
    pub max_leaf: usize,
    /// Both sides are atoms of properties declared total.
    pub total: bool,
}

pub fn leaf_var(leaf: &str) -> Var {
    Var::new(leaf, &format!("{leaf}.Stage"))
}

pub fn tuple_op(n: usize) -> String {
    let mut s = String::from("<_");
    for _ in 1..n {
        s.push_str(",_");
    }
    s.push('>');
    s
}

pub fn is_tuple_op(name: &str) -> bool {
    name.starts_with("<_") && name.ends_with('>') && name[1..name.len() - 1].split(',').all(|x| x == "_")
}

/// Property atom `p @ LEAF`: returns (leaf, prop).
pub fn as_atom(t: &Term) -> Option<(&Name, &str)> {
    let Node::App(f, a) = t.node() else { return None };
    let prop = f.strip_suffix("@_")?;
    if a.len() != 1 {
        return None;
    }
    let v = a[0].as_var()?;
    Some((&v.name, prop))
}

/// Evaluates flat property expressions against per-leaf theories.
pub struct FlatEval<'a> {
    pub theories: Vec<&'a Theory>,
    pub index: &'a HashMap<Name, usize>,
    pub cache: Option<&'a Mutex<HashMap<(usize, Name, Term), PropValue>>>,
}

impl FlatEval<'_> {
    /// Value of `expr` at the given parts; in symbolic mode also reports
    /// whether the value could depend on the parts' variables.
    pub fn eval(&self, expr: &Term, parts: &[Term], symbolic: bool) -> Result<(PropValue, bool)> {
        let mut unc = false;
        let v = self.go(expr, parts, symbolic, &mut unc)?;
        Ok((v, unc))
    }

    fn go(&self, expr: &Term, parts: &[Term], symbolic: bool, unc: &mut bool) -> Result<PropValue> {
        if let Some((leaf, prop)) = as_atom(expr) {
            let i = *self.index.get(leaf).ok_or_else(|| Error::Resolve(format!("unknown component {leaf}")))?;
            let stage = &parts[i];
            if !symbolic || stage.is_ground() {
                let key = (i, Name::from(prop), stage.clone());
                if let Some(c) = self.cache {
                    if let Some(v) = c.lock().unwrap().get(&key) {
                        return Ok(v.clone());
                    }
                }
                let v = self.theories[i].eval_property(prop, stage)?;
                if let Some(c) = self.cache {
                    c.lock().unwrap().insert(key, v.clone());
                }
                return Ok(v);
            }
            let ev = Eval::new(self.theories[i], true);
            let v = ev.eval_property(prop, stage)?;
            *unc |= ev.is_uncertain();
            return Ok(v);
        }
        match expr.node() {
            Node::Int(_) | Node::Bool(_) => Ok(PropValue::Defined(expr.clone())),
            Node::Var(v) => Err(Error::Property(format!("stage variable {} used as a value", v.name))),
            Node::App(f, args) | Node::Ac(f, args) => {
                let mut vals = Vec::new();
                for a in args {
                    match self.go(a, parts, symbolic, unc)? {
                        PropValue::Defined(t) => vals.push(t),
                        PropValue::Undefined => return Ok(PropValue::Undefined),
                    }
                }
                let pre = Theory::prelude();
                let ev = Eval::new(pre, symbolic);
                let n = ev.normalize(&pre.sig().canonical_root(f, vals))?;
                *unc |= ev.is_uncertain();
                match ev.least_sort(&n)? {
                    crate::SortRef::Sort(_) => {
                        if symbolic && !n.is_ground() {
                            *unc = true;
                        }
                        Ok(PropValue::Defined(n))
                    }
                    crate::SortRef::Kind(_) => Ok(PropValue::Undefined),
                }
            }
        }
    }

    /// Some(true/false) when decided; None when it depends on variables.
    pub fn criterion(&self, c: &FlatCriterion, parts: &[Term], symbolic: bool) -> Result<Option<bool>> {
        let (l, ul) = self.eval(&c.left, parts, symbolic)?;
        let (r, ur) = self.eval(&c.right, parts, symbolic)?;
        let certain_undef = |v: &PropValue, u: bool| matches!(v, PropValue::Undefined) && !u;
        if certain_undef(&l, ul) || certain_undef(&r, ur) {
            return Ok(Some(true));
        }
        if ul || ur {
            return Ok(None);
        }
        Ok(Some(match (l, r) {
            (PropValue::Defined(a), PropValue::Defined(b)) => {
                if a == b {
                    true
                } else if a.is_ground() && b.is_ground() {
                    false
                } else {
                    return Ok(None);
                }
            }
            _ => true,
        }))
    }
}

#[derive(Debug)]
pub struct ComposedSystem {
    pub name: Name,
    pub children: Vec<(Name, Component)>,
    pub criteria: Vec<Criterion>,
    pub exported: Vec<ExportedProp>,
    leaves: Vec<Leaf>,
    index: HashMap<Name, usize>,
    flat: Vec<FlatCriterion>,
    by_max: Vec<Vec<usize>>,
    half_cache: Mutex<HashMap<(usize, Term), Arc<Vec<Term>>>>,
    prop_cache: Mutex<HashMap<(usize, Name, Term), PropValue>>,
}

fn collect_leaves(children: &[(Name, Component)], out: &mut Vec<Leaf>) {
    for (n, c) in children {
        match c {
            Component::Atomic(m) => out.push(Leaf { name: n.clone(), module: m.clone() }),
            Component::Composed(s) => collect_leaves(&s.children, out),
        }
    }
}

impl ComposedSystem {
    pub fn new(
        name: &str,
        children: Vec<(Name, Component)>,
        criteria: Vec<Criterion>,
        exported: Vec<ExportedProp>,
    ) -> Result<ComposedSystem> {
        let mut seen = BTreeSet::new();
        for (n, _) in &children {
            if !seen.insert(n.clone()) {
                return Err(Error::Resolve(format!("component {n} appears twice in {name}")));
            }
        }
        let mut leaves = Vec::new();
        collect_leaves(&children, &mut leaves);
        let mut index = HashMap::new();
        for (i, l) in leaves.iter().enumerate() {
            if index.insert(l.name.clone(), i).is_some() {
                return Err(Error::Resolve(format!("atomic component {} occurs twice in {name}", l.name)));
            }
        }
        let mut sys = ComposedSystem {
            name: name.into(),
            children,
            criteria,
            exported,
            leaves,
            index,
            flat: vec![],
            by_max: vec![],
            half_cache: Mutex::new(HashMap::new()),
            prop_cache: Mutex::new(HashMap::new()),
        };
        for e in &sys.exported {
            sys.flatten_expr(&e.expr, &e.var, 0)?;
        }
        let mut flat = Vec::new();
        for (c, own) in sys.all_criteria() {
            let _ = own;
            let (lc, ltotal) = sys.endpoint_info(&c.left)?;
            let (rc, rtotal) = sys.endpoint_info(&c.right)?;
            for (ep, cod) in [(&c.left, &lc), (&c.right, &rc)] {
                if !matches!(&**cod, "Int" | "Bool") {
                    return Err(Error::Resolve(format!(
                        "criterion endpoint {ep} has codomain {cod}; only Int and Bool can be synchronized"
                    )));
                }
            }
            if lc != rc {
                return Err(Error::Resolve(format!(
                    "criterion {c} relates codomains {lc} and {rc} of different kinds"
                )));
            }
            let left = sys.resolve_endpoint(&c.left)?;
            let right = sys.resolve_endpoint(&c.right)?;
            let max_leaf = left.vars().iter().chain(right.vars().iter()).map(|v| sys.index[&v.name]).max().unwrap_or(0);
            flat.push(FlatCriterion { left, right, label: c.to_string(), max_leaf, total: ltotal && rtotal });
        }
        let mut by_max = vec![Vec::new(); sys.leaves.len()];
        for (i, c) in flat.iter().enumerate() {
            by_max[c.max_leaf].push(i);
        }
        sys.flat = flat;
        sys.by_max = by_max;
        Ok(sys)
    }

    /// Own criteria followed by every descendant's, each resolved relative to
    /// this system (descendant endpoints get their path prefixed).
    fn all_criteria(&self) -> Vec<(Criterion, bool)> {
        let mut out: Vec<(Criterion, bool)> = self.criteria.iter().map(|c| (c.clone(), true)).collect();
        for (n, c) in &self.children {
            if let Component::Composed(s) = c {
                for (cr, _) in s.all_criteria() {
                    let pre = |e: &Endpoint| {
                        let mut path = vec![n.clone()];
                        path.extend(e.path.iter().cloned());
                        Endpoint { path, prop: e.prop.clone() }
                    };
                    out.push((Criterion { left: pre(&cr.left), right: pre(&cr.right) }, false));
                }
            }
        }
        out
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }
    pub fn leaf_index(&self) -> &HashMap<Name, usize> {
        &self.index
    }
    pub fn flat_criteria(&self) -> &[FlatCriterion] {
        &self.flat
    }

    pub fn atomic_components(&self) -> BTreeSet<Name> {
        self.leaves.iter().map(|l| l.name.clone()).collect()
    }

    pub fn criteria_set(&self) -> BTreeSet<(Term, Term)> {
        self.flat
            .iter()
            .map(
                |c| {
                    if c.left <= c.right {
                        (c.left.clone(), c.right.clone())
                    } else {
                        (c.right.clone(), c.left.clone())
                    }
                },
            )
            .collect()
    }

    fn child(&self, name: &str) -> Option<&Component> {
        self.children.iter().find(|(n, _)| &**n == name).map(|(_, c)| c)
    }

    /// Finds the unique descendant named `name`, returning its path.
    fn find_descendant(&self, name: &str) -> Vec<Vec<Name>> {
        let mut out = Vec::new();
        for (n, c) in &self.children {
            if &**n == name {
                out.push(vec![n.clone()]);
            }
            if let Component::Composed(s) = c {
                for mut p in s.find_descendant(name) {
                    p.insert(0, n.clone());
                    out.push(p);
                }
            }
        }
        out
    }

    fn normalize_path(&self, path: &[Name]) -> Result<Vec<Name>> {
        if path.is_empty() || self.child(&path[0]).is_some() {
            return Ok(path.to_vec());
        }
        let found = self.find_descendant(&path[0]);
        match found.len() {
            1 => {
                let mut p = found[0].clone();
                p.extend(path[1..].iter().cloned());
                Ok(p)
            }
            0 => Err(Error::Resolve(format!("{} has no component {}", self.name, path[0]))),
            _ => Err(Error::Resolve(format!("component name {} is ambiguous in {}", path[0], self.name))),
        }
    }

    /// Codomain and totality of an endpoint.
    pub fn endpoint_info(&self, e: &Endpoint) -> Result<(Name, bool)> {
        let path = self.normalize_path(&e.path)?;
        self.info_at(&path, &e.prop)
    }

    fn info_at(&self, path: &[Name], prop: &str) -> Result<(Name, bool)> {
        let Some(first) = path.first() else {
            if let Some(x) = self.exported.iter().find(|x| &*x.name == prop) {
                return Ok((x.codomain.clone(), x.total));
            }
            let ep = Endpoint::parse(prop);
            if !ep.path.is_empty() {
                return self.endpoint_info(&ep);
            }
            return Err(Error::Resolve(format!("unknown property {prop} of {}", self.name)));
        };
        match self.child(first) {
            Some(Component::Atomic(m)) if path.len() == 1 => {
                let sig = m.theory.sig();
                let p = sig.prop(prop).ok_or_else(|| Error::Resolve(format!("unknown property {first}.{prop}")))?;
                Ok((sig.sort_name(p.codomain).clone(), p.total))
            }
            Some(Component::Composed(s)) => s.info_at(&path[1..], prop),
            _ => Err(Error::Resolve(format!(
                "unknown property {}.{prop}",
                path.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(".")
            ))),
        }
    }

    /// Flat expression of an endpoint relative to this system.
    pub fn resolve_endpoint(&self, e: &Endpoint) -> Result<Term> {
        let path = self.normalize_path(&e.path)?;
        self.resolve_at(&path, &e.prop, 0)
    }

    /// Resolves `A.B.p` style paths, or an exported property name.
    pub fn resolve_path(&self, text: &str) -> Result<Term> {
        self.resolve_endpoint(&Endpoint::parse(text))
    }

    fn resolve_at(&self, path: &[Name], prop: &str, depth: usize) -> Result<Term> {
        if depth > 64 {
            return Err(Error::Resolve(format!("property {prop} of {} is defined circularly", self.name)));
        }
        let Some(first) = path.first() else {
            if let Some(x) = self.exported.iter().find(|x| &*x.name == prop) {
                return self.flatten_expr(&x.expr, &x.var, depth + 1);
            }
            let ep = Endpoint::parse(prop);
            if !ep.path.is_empty() {
                let p = self.normalize_path(&ep.path)?;
                return self.resolve_at(&p, &ep.prop, depth + 1);
            }
            return Err(Error::Resolve(format!("unknown property {prop} of {}", self.name)));
        };
        match self.child(first) {
            Some(Component::Atomic(m)) if path.len() == 1 => {
                if m.theory.sig().prop(prop).is_none() {
                    return Err(Error::Resolve(format!("unknown property {first}.{prop}")));
                }
                Ok(Term::app(format!("{prop}@_"), vec![Term::from_var(leaf_var(first))]))
            }
            Some(Component::Composed(s)) => s.resolve_at(&path[1..], prop, depth + 1),
            _ => Err(Error::Resolve(format!("unknown property {first}.{prop} in {}", self.name))),
        }
    }

    fn flatten_expr(&self, expr: &Term, g: &Var, depth: usize) -> Result<Term> {
        match expr.node() {
            Node::App(f, a) if f.ends_with("@_") && a.len() == 1 => {
                let prop = &f[..f.len() - 2];
                if a[0].as_var() == Some(g) {
                    return self.resolve_at(&[], prop, depth + 1);
                }
                if let Node::App(c, ca) = a[0].node() {
                    if ca.len() == 1 && ca[0].as_var() == Some(g) && self.child(c).is_some() {
                        return self.resolve_at(std::slice::from_ref(c), prop, depth + 1);
                    }
                }
                Err(Error::Resolve(format!("property argument {} must be {} or a projection of it", a[0], g.name)))
            }
            Node::App(f, a) => {
                let args = a.iter().map(|x| self.flatten_expr(x, g, depth)).collect::<Result<Vec<_>>>()?;
                Ok(Term::app(f.clone(), args))
            }
            Node::Ac(f, a) => {
                let args = a.iter().map(|x| self.flatten_expr(x, g, depth)).collect::<Result<Vec<_>>>()?;
                Ok(Term::ac_raw(f.clone(), args))
            }
            Node::Var(v) => Err(Error::Resolve(format!("variable {} can only appear under a projection", v.name))),
            _ => Ok(expr.clone()),
        }
    }

    pub fn evaluator(&self) -> FlatEval<'_> {
        FlatEval {
            theories: self.leaves.iter().map(|l| &l.module.theory).collect(),
            index: &self.index,
            cache: Some(&self.prop_cache),
        }
    }

    pub fn tuple(&self, parts: Vec<Term>) -> Term {
        Term::app(tuple_op(parts.len()), parts)
    }

    pub fn parts<'t>(&self, t: &'t Term) -> Result<&'t [Term]> {
        match t.node() {
            Node::App(f, a) if a.len() == self.leaves.len() && is_tuple_op(f) => Ok(a),
            _ => Err(Error::IllFormed(format!("{t} is not a stage of {}", self.name))),
        }
    }

    /// Index of the first violated criterion, if any.
    pub fn violated(&self, parts: &[Term]) -> Result<Option<usize>> {
        let ev = self.evaluator();
        for (i, c) in self.flat.iter().enumerate() {
            if ev.criterion(c, parts, false)? == Some(false) {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn compatible(&self, parts: &[Term]) -> Result<bool> {
        Ok(self.violated(parts)?.is_none())
    }

    pub fn init_stage(&self) -> Result<Term> {
        let parts = self.leaves.iter().map(|l| l.module.init_stage()).collect::<Result<Vec<_>>>()?;
        if let Some(i) = self.violated(&parts)? {
            return Err(Error::Init(format!(
                "initial stage {} of {} violates criterion {}",
                self.tuple(parts.clone()),
                self.name,
                self.flat[i].label
            )));
        }
        Ok(self.tuple(parts))
    }

    fn half(&self, i: usize, stage: &Term) -> Result<Arc<Vec<Term>>> {
        let key = (i, stage.clone());
        if let Some(v) = self.half_cache.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(self.leaves[i].module.half_successors(stage)?);
        self.half_cache.lock().unwrap().insert(key, v.clone());
        Ok(v)
    }

    /// Compatible tuples reachable by letting a nonempty subset of leaves take
    /// one half-rewrite each.
    pub fn successors(&self, stage: &Term) -> Result<Vec<Term>> {
        let parts = self.parts(stage)?.to_vec();
        let mut out = BTreeSet::new();
        let mut cur = parts.clone();
        let ev = self.evaluator();
        self.dfs(0, &parts, &mut cur, false, &ev, &mut out)?;
        Ok(out.into_iter().collect())
    }

    fn dfs(
        &self,
        i: usize,
        orig: &[Term],
        cur: &mut Vec<Term>,
        moved: bool,
        ev: &FlatEval<'_>,
        out: &mut BTreeSet<Term>,
    ) -> Result<()> {
        if i == self.leaves.len() {
            if moved {
                out.insert(self.tuple(cur.clone()));
            }
            return Ok(());
        }
        let succ = self.half(i, &orig[i])?;
        let options = std::iter::once((orig[i].clone(), false)).chain(succ.iter().map(|s| (s.clone(), true)));
        for (s, mv) in options {
            cur[i] = s;
            let mut ok = true;
            for &c in &self.by_max[i] {
                if ev.criterion(&self.flat[c], cur, false)? == Some(false) {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.dfs(i + 1, orig, cur, moved || mv, ev, out)?;
            }
        }
        cur[i] = orig[i].clone();
        Ok(())
    }

    /// Value of a property path (`LEAF.p`, `CHILD.p`, or an exported name) at a stage.
    pub fn eval_path(&self, path: &str, stage: &Term) -> Result<PropValue> {
        let expr = self.resolve_path(path)?;
        let parts = self.parts(stage)?;
        Ok(self.evaluator().eval(&expr, parts, false)?.0)
    }

    /// Property paths annotated on explored nodes: every leaf property and
    /// this system's exported properties.
    pub fn property_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.leaves {
            for p in l.module.theory.sig().props().keys() {
                out.push(format!("{}.{p}", l.name));
            }
        }
        for e in &self.exported {
            out.push(e.name.to_string());
        }
        out
    }
}
