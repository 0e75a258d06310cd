//! Order-sorted signatures with kind completion.

use std::collections::{BTreeMap, HashMap};

use super::term::{Name, Node, Subst, Term, Var};
use crate::error::{Error, Result};

pub type SortId = usize;
pub type KindId = usize;
pub type FamId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SortRef {
    Sort(SortId),
    Kind(KindId),
}

/// A sort or kind as written in a declaration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SortSpec {
    Sort(Name),
    /// `[S]`: the kind of sort `S`.
    Kind(Name),
}

impl SortSpec {
    pub fn sort(n: &str) -> SortSpec {
        SortSpec::Sort(n.into())
    }
    pub fn kind(n: &str) -> SortSpec {
        SortSpec::Kind(n.into())
    }
    pub fn parse(text: &str) -> SortSpec {
        match text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            Some(inner) => SortSpec::Kind(inner.split(',').next().unwrap_or("").trim().into()),
            None => SortSpec::Sort(text.into()),
        }
    }
    pub fn base(&self) -> &Name {
        match self {
            SortSpec::Sort(n) | SortSpec::Kind(n) => n,
        }
    }
    pub fn text(&self) -> String {
        match self {
            SortSpec::Sort(n) => n.to_string(),
            SortSpec::Kind(n) => format!("[{n}]"),
        }
    }
    pub fn renamed(&self, map: &dyn Fn(&str) -> String) -> SortSpec {
        match self {
            SortSpec::Sort(n) => SortSpec::Sort(map(n).into()),
            SortSpec::Kind(n) => SortSpec::Kind(map(n).into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gather {
    /// `E`: argument precedence at most the operator's.
    Le,
    /// `e`: argument precedence strictly below the operator's.
    Lt,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpAttrs {
    pub assoc: bool,
    pub comm: bool,
    pub id: Option<Term>,
    pub prec: Option<u32>,
    pub gather: Option<Vec<Gather>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Neq,
    And,
    Or,
    Not,
    Agree,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpOrigin {
    Prelude,
    Common,
    User,
    AutoLabel,
    Property(Name),
    Projection(Name),
    Tuple,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpSpec {
    pub name: Name,
    pub args: Vec<SortSpec>,
    pub result: SortSpec,
    pub attrs: OpAttrs,
    pub origin: OpOrigin,
    pub builtin: Option<Builtin>,
    pub poly: bool,
}

impl OpSpec {
    pub fn user(name: &str, args: &[&str], result: &str) -> OpSpec {
        OpSpec {
            name: name.into(),
            args: args.iter().map(|a| SortSpec::parse(a)).collect(),
            result: SortSpec::parse(result),
            attrs: OpAttrs::default(),
            origin: OpOrigin::User,
            builtin: None,
            poly: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropSpec {
    pub name: Name,
    pub codomain: Name,
    pub domain: SortSpec,
    pub total: bool,
}

/// Declarative input to `Signature::build`; kept so signatures can be rebuilt
/// under sort renaming.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SigSpec {
    pub sorts: Vec<Name>,
    pub subsorts: Vec<(Name, Name)>,
    pub ops: Vec<OpSpec>,
    pub props: Vec<PropSpec>,
}

impl SigSpec {
    pub fn add_sort(&mut self, s: &str) {
        if !self.sorts.iter().any(|x| &**x == s) {
            self.sorts.push(s.into());
        }
    }
    pub fn add_subsort(&mut self, a: &str, b: &str) {
        let p = (Name::from(a), Name::from(b));
        if !self.subsorts.contains(&p) {
            self.subsorts.push(p);
        }
    }
    pub fn add_op(&mut self, op: OpSpec) {
        if !self.ops.contains(&op) {
            self.ops.push(op);
        }
    }

    /// Int and Bool with their built-in operators.
    pub fn prelude() -> SigSpec {
        let mut s = SigSpec::default();
        s.add_sort("Int");
        s.add_sort("Bool");
        let mut op = |name: &str, args: &[&str], res: &str, b: Builtin, prec: u32, g: &[Gather]| {
            let mut o = OpSpec::user(name, args, res);
            o.origin = OpOrigin::Prelude;
            o.builtin = Some(b);
            o.attrs.prec = Some(prec);
            if !g.is_empty() {
                o.attrs.gather = Some(g.to_vec());
            }
            if matches!(b, Builtin::Eq | Builtin::Neq | Builtin::Agree) {
                o.poly = true;
            }
            s.ops.push(o);
        };
        use Gather::{Le as E, Lt as e};
        op("_+_", &["Int", "Int"], "Int", Builtin::Add, 33, &[E, e]);
        op("_-_", &["Int", "Int"], "Int", Builtin::Sub, 33, &[E, e]);
        op("_*_", &["Int", "Int"], "Int", Builtin::Mul, 31, &[E, e]);
        op("_<_", &["Int", "Int"], "Bool", Builtin::Lt, 37, &[e, e]);
        op("_<=_", &["Int", "Int"], "Bool", Builtin::Le, 37, &[e, e]);
        op("_>_", &["Int", "Int"], "Bool", Builtin::Gt, 37, &[e, e]);
        op("_>=_", &["Int", "Int"], "Bool", Builtin::Ge, 37, &[e, e]);
        op("_==_", &["Bool", "Bool"], "Bool", Builtin::Eq, 51, &[e, e]);
        op("_=/=_", &["Bool", "Bool"], "Bool", Builtin::Neq, 51, &[e, e]);
        op("not_", &["Bool"], "Bool", Builtin::Not, 53, &[E]);
        op("_and_", &["Bool", "Bool"], "Bool", Builtin::And, 55, &[E, e]);
        op("_or_", &["Bool", "Bool"], "Bool", Builtin::Or, 59, &[E, e]);
        op("agree", &["Bool", "Bool"], "Bool", Builtin::Agree, 0, &[]);
        s
    }

    /// The common module of egalitarian systems (`plain` gives its split form).
    pub fn add_common(&mut self, plain: bool) {
        let (state, top) = if plain { ("State'", "State") } else { ("State", "Stage") };
        self.add_sort(state);
        self.add_sort("Trans");
        self.add_sort(top);
        self.add_subsort(state, top);
        self.add_subsort("Trans", top);
        let mut init = OpSpec::user("init", &[], top);
        init.origin = OpOrigin::Common;
        self.add_op(init);
    }

    pub fn renamed(&self, map: &dyn Fn(&str) -> String) -> SigSpec {
        SigSpec {
            sorts: self.sorts.iter().map(|s| map(s).into()).collect(),
            subsorts: self.subsorts.iter().map(|(a, b)| (map(a).into(), map(b).into())).collect(),
            ops: self
                .ops
                .iter()
                .map(|o| OpSpec {
                    args: o.args.iter().map(|a| a.renamed(map)).collect(),
                    result: o.result.renamed(map),
                    ..o.clone()
                })
                .collect(),
            props: self
                .props
                .iter()
                .map(|p| PropSpec { codomain: map(&p.codomain).into(), domain: p.domain.renamed(map), ..p.clone() })
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SortInfo {
    pub name: Name,
    pub kind: KindId,
}

#[derive(Clone, Debug)]
pub struct KindInfo {
    pub name: Name,
    pub sorts: Vec<SortId>,
    pub maximal: Vec<SortId>,
}

#[derive(Clone, Debug)]
pub struct OpDecl {
    pub args: Vec<SortRef>,
    pub result: SortRef,
}

#[derive(Clone, Debug)]
pub struct OpFamily {
    pub name: Name,
    pub arity: usize,
    pub arg_kinds: Vec<KindId>,
    pub result_kind: KindId,
    pub decls: Vec<OpDecl>,
    pub attrs: OpAttrs,
    pub builtin: Option<Builtin>,
    pub origin: OpOrigin,
    pub poly: bool,
}

impl OpFamily {
    pub fn is_ac(&self) -> bool {
        self.attrs.assoc && self.attrs.comm
    }
}

#[derive(Clone, Debug)]
pub struct PropInfo {
    pub name: Name,
    pub op: Name,
    pub codomain: SortId,
    pub domain: SortRef,
    pub total: bool,
}

pub fn prop_op_name(prop: &str) -> String {
    format!("{prop}@_")
}

#[derive(Clone, Debug)]
pub struct Signature {
    spec: SigSpec,
    sorts: Vec<SortInfo>,
    sort_index: HashMap<Name, SortId>,
    leq: Vec<Vec<bool>>,
    kinds: Vec<KindInfo>,
    fams: Vec<OpFamily>,
    by_sym: HashMap<(Name, usize), Vec<FamId>>,
    props: BTreeMap<Name, PropInfo>,
}

fn find(uf: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while uf[r] != r {
        r = uf[r];
    }
    let mut c = x;
    while uf[c] != r {
        let n = uf[c];
        uf[c] = r;
        c = n;
    }
    r
}

impl Signature {
    /// Kind completion: kinds are the weakly connected components of the
    /// subsort graph; `leq` is the reflexive-transitive closure.
    pub fn build(spec: SigSpec) -> Result<Signature> {
        let mut sorts: Vec<SortInfo> = Vec::new();
        let mut sort_index = HashMap::new();
        for s in &spec.sorts {
            if sort_index.contains_key(s) {
                continue;
            }
            sort_index.insert(s.clone(), sorts.len());
            sorts.push(SortInfo { name: s.clone(), kind: 0 });
        }
        let n = sorts.len();
        let lookup = |s: &Name| -> Result<SortId> {
            sort_index.get(s).copied().ok_or_else(|| Error::Decl(format!("unknown sort {s}")))
        };
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        let mut uf: Vec<usize> = (0..n).collect();
        for (a, b) in &spec.subsorts {
            let (a, b) = (lookup(a)?, lookup(b)?);
            leq[a][b] = true;
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            uf[ra] = rb;
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return Err(Error::Decl(format!(
                        "cycle in subsort relation between {} and {}",
                        sorts[i].name, sorts[j].name
                    )));
                }
            }
        }
        let mut kinds: Vec<KindInfo> = Vec::new();
        let mut root_kind: HashMap<usize, KindId> = HashMap::new();
        for i in 0..n {
            let r = find(&mut uf, i);
            let k = *root_kind.entry(r).or_insert_with(|| {
                kinds.push(KindInfo { name: "".into(), sorts: vec![], maximal: vec![] });
                kinds.len() - 1
            });
            sorts[i].kind = k;
            kinds[k].sorts.push(i);
        }
        for k in kinds.iter_mut() {
            k.maximal = k.sorts.iter().copied().filter(|&s| !k.sorts.iter().any(|&t| t != s && leq[s][t])).collect();
            let names: Vec<&str> = k.maximal.iter().map(|&s| &*sorts[s].name).collect();
            k.name = format!("[{}]", names.join(",")).into();
        }
        let mut sig = Signature {
            spec: SigSpec::default(),
            sorts,
            sort_index,
            leq,
            kinds,
            fams: vec![],
            by_sym: HashMap::new(),
            props: BTreeMap::new(),
        };
        let mut ops = spec.ops.clone();
        for p in &spec.props {
            let codomain = sig.sort_spec(&SortSpec::Sort(p.codomain.clone()))?;
            let SortRef::Sort(cod) = codomain else { unreachable!() };
            let domain = sig.sort_spec(&p.domain)?;
            let op = prop_op_name(&p.name);
            if sig.props.contains_key(&p.name) {
                return Err(Error::Decl(format!("property {} declared twice", p.name)));
            }
            sig.props.insert(
                p.name.clone(),
                PropInfo { name: p.name.clone(), op: op.clone().into(), codomain: cod, domain, total: p.total },
            );
            ops.push(OpSpec {
                name: op.into(),
                args: vec![SortSpec::Kind(p.domain.base().clone())],
                result: SortSpec::Kind(p.codomain.clone()),
                attrs: OpAttrs { prec: Some(100), gather: Some(vec![Gather::Le]), ..Default::default() },
                origin: OpOrigin::Property(p.name.clone()),
                builtin: None,
                poly: false,
            });
        }
        for op in &ops {
            sig.add_op(op)?;
        }
        sig.spec = spec;
        Ok(sig)
    }

    fn add_op(&mut self, op: &OpSpec) -> Result<()> {
        let args: Vec<SortRef> = op.args.iter().map(|a| self.sort_spec(a)).collect::<Result<_>>()?;
        let result = self.sort_spec(&op.result)?;
        let arg_kinds: Vec<KindId> = args.iter().map(|a| self.kind_of_ref(*a)).collect();
        let result_kind = self.kind_of_ref(result);
        let key = (op.name.clone(), args.len());
        let existing = self.by_sym.get(&key).cloned().unwrap_or_default();
        for fid in &existing {
            let f = &self.fams[*fid];
            if f.poly || op.poly || f.arg_kinds == arg_kinds {
                if f.result_kind != result_kind && !f.poly {
                    return Err(Error::Decl(format!(
                        "operator {} redeclared with result in a different kind",
                        op.name
                    )));
                }
                let f = &mut self.fams[*fid];
                if op.origin == OpOrigin::User || op.origin == OpOrigin::AutoLabel {
                    merge_attrs(&mut f.attrs, &op.attrs);
                }
                f.decls.push(OpDecl { args, result });
                return Ok(());
            }
        }
        if args.is_empty() && !existing.is_empty() {
            return Err(Error::Decl(format!("constant {} declared in two kinds", op.name)));
        }
        if op.attrs.assoc || op.attrs.comm || op.attrs.id.is_some() {
            if args.len() != 2 || arg_kinds[0] != arg_kinds[1] || arg_kinds[0] != result_kind {
                return Err(Error::Decl(format!(
                    "assoc/comm/id on {} requires a binary operator within one kind",
                    op.name
                )));
            }
            if op.attrs.assoc != op.attrs.comm {
                return Err(Error::Decl(format!(
                    "{}: assoc is supported only together with comm, and comm only together with assoc",
                    op.name
                )));
            }
        }
        let fid = self.fams.len();
        self.fams.push(OpFamily {
            name: op.name.clone(),
            arity: args.len(),
            arg_kinds,
            result_kind,
            decls: vec![OpDecl { args, result }],
            attrs: op.attrs.clone(),
            builtin: op.builtin,
            origin: op.origin.clone(),
            poly: op.poly,
        });
        self.by_sym.entry(key).or_default().push(fid);
        Ok(())
    }

    pub fn spec(&self) -> &SigSpec {
        &self.spec
    }

    pub fn sort_spec(&self, s: &SortSpec) -> Result<SortRef> {
        match s {
            SortSpec::Sort(n) => {
                self.sort_id(n).map(SortRef::Sort).ok_or_else(|| Error::Decl(format!("unknown sort {n}")))
            }
            SortSpec::Kind(n) => self
                .sort_id(n)
                .map(|id| SortRef::Kind(self.sorts[id].kind))
                .ok_or_else(|| Error::Decl(format!("unknown sort {n} in kind [{n}]"))),
        }
    }

    pub fn sort_id(&self, name: &str) -> Option<SortId> {
        self.sort_index.get(name).copied()
    }
    /// Resolves a sort name or `[S]` kind name.
    pub fn sort_ref(&self, name: &str) -> Option<SortRef> {
        self.sort_spec(&SortSpec::parse(name)).ok()
    }
    pub fn sort_name(&self, s: SortId) -> &Name {
        &self.sorts[s].name
    }
    pub fn ref_name(&self, r: SortRef) -> String {
        match r {
            SortRef::Sort(s) => self.sorts[s].name.to_string(),
            SortRef::Kind(k) => self.kinds[k].name.to_string(),
        }
    }
    pub fn sort_count(&self) -> usize {
        self.sorts.len()
    }
    pub fn sort_names(&self) -> impl Iterator<Item = &Name> {
        self.sorts.iter().map(|s| &s.name)
    }
    pub fn kind_of_sort(&self, s: SortId) -> KindId {
        self.sorts[s].kind
    }
    pub fn kind_of_ref(&self, r: SortRef) -> KindId {
        match r {
            SortRef::Sort(s) => self.sorts[s].kind,
            SortRef::Kind(k) => k,
        }
    }
    pub fn kind(&self, k: KindId) -> &KindInfo {
        &self.kinds[k]
    }
    pub fn kind_count(&self) -> usize {
        self.kinds.len()
    }
    pub fn leq_sort(&self, a: SortId, b: SortId) -> bool {
        self.leq[a][b]
    }
    pub fn leq(&self, a: SortRef, b: SortRef) -> bool {
        match (a, b) {
            (SortRef::Sort(x), SortRef::Sort(y)) => self.leq[x][y],
            (SortRef::Sort(x), SortRef::Kind(k)) => self.sorts[x].kind == k,
            (SortRef::Kind(j), SortRef::Kind(k)) => j == k,
            (SortRef::Kind(_), SortRef::Sort(_)) => false,
        }
    }
    /// Some sort lies below both (terms of both could coincide).
    pub fn overlap(&self, a: SortRef, b: SortRef) -> bool {
        match (a, b) {
            (SortRef::Sort(x), SortRef::Sort(y)) => {
                self.sorts[x].kind == self.sorts[y].kind
                    && (0..self.sorts.len()).any(|z| self.leq[z][x] && self.leq[z][y])
            }
            _ => self.kind_of_ref(a) == self.kind_of_ref(b),
        }
    }

    pub fn families(&self, name: &str, arity: usize) -> &[FamId] {
        self.by_sym.get(&(Name::from(name), arity)).map(|v| v.as_slice()).unwrap_or(&[])
    }
    pub fn family(&self, f: FamId) -> &OpFamily {
        &self.fams[f]
    }
    pub fn all_families(&self) -> &[OpFamily] {
        &self.fams
    }
    pub fn has_symbol(&self, name: &str) -> bool {
        self.by_sym.keys().any(|(n, _)| &**n == name)
    }

    pub fn props(&self) -> &BTreeMap<Name, PropInfo> {
        &self.props
    }
    pub fn prop(&self, name: &str) -> Option<&PropInfo> {
        self.props.get(name)
    }

    pub fn var_sort(&self, v: &Var) -> Result<SortRef> {
        self.sort_ref(&v.sort)
            .ok_or_else(|| Error::IllFormed(format!("variable {} has unknown sort {}", v.name, v.sort)))
    }

    pub fn int_sort(&self) -> SortRef {
        SortRef::Sort(self.sort_id("Int").expect("prelude Int"))
    }
    pub fn bool_sort(&self) -> SortRef {
        SortRef::Sort(self.sort_id("Bool").expect("prelude Bool"))
    }

    pub fn kind_of(&self, t: &Term) -> Result<KindId> {
        match t.node() {
            Node::Int(_) => Ok(self.kind_of_ref(self.int_sort())),
            Node::Bool(_) => Ok(self.kind_of_ref(self.bool_sort())),
            Node::Var(v) => Ok(self.kind_of_ref(self.var_sort(v)?)),
            Node::App(..) | Node::Ac(..) => Ok(self.family_of(t)?.result_kind),
        }
    }

    /// The operator family an application belongs to (disambiguated by argument kinds).
    pub fn family_of(&self, t: &Term) -> Result<&OpFamily> {
        let (name, arity) = t.symbol().ok_or_else(|| Error::IllFormed(format!("{t} has no operator")))?;
        let fams = self.families(name, arity);
        match fams.len() {
            0 => Err(Error::IllFormed(format!("unknown operator {name}/{arity} in {t}"))),
            1 => Ok(&self.fams[fams[0]]),
            _ => {
                let kinds: Vec<KindId> = if matches!(t.node(), Node::Ac(..)) {
                    let k = self.kind_of(&t.args()[0])?;
                    vec![k, k]
                } else {
                    t.args().iter().map(|a| self.kind_of(a)).collect::<Result<_>>()?
                };
                fams.iter()
                    .map(|f| &self.fams[*f])
                    .find(|f| f.poly || f.arg_kinds == kinds)
                    .ok_or_else(|| Error::IllFormed(format!("no declaration of {name} fits the argument kinds in {t}")))
            }
        }
    }

    /// Minimal result sort of `fam` on arguments of the given sorts.
    pub fn result_sort(&self, fam: &OpFamily, args: &[SortRef], t: &Term) -> Result<SortRef> {
        let mut cands: Vec<SortId> = Vec::new();
        for d in &fam.decls {
            let SortRef::Sort(r) = d.result else { continue };
            let fits =
                fam.poly || (d.args.len() == args.len() && args.iter().zip(&d.args).all(|(a, b)| self.leq(*a, *b)));
            if fits && !cands.contains(&r) {
                cands.push(r);
            }
        }
        let minimal: Vec<SortId> =
            cands.iter().copied().filter(|&s| !cands.iter().any(|&o| o != s && self.leq[o][s])).collect();
        match minimal.len() {
            0 => Ok(SortRef::Kind(fam.result_kind)),
            1 => Ok(SortRef::Sort(minimal[0])),
            _ => Err(Error::SortAmbiguity {
                term: t.to_string(),
                sorts: minimal.iter().map(|s| self.sorts[*s].name.to_string()).collect::<Vec<_>>().join(", "),
            }),
        }
    }

    /// Sort from the operator's argument sorts, folding AC children pairwise.
    pub fn sort_from_args(&self, t: &Term, arg_sorts: &[SortRef]) -> Result<SortRef> {
        let fam = self.family_of(t)?;
        if matches!(t.node(), Node::Ac(..)) {
            let mut cur = arg_sorts[0];
            for s in &arg_sorts[1..] {
                cur = self.result_sort(fam, &[cur, *s], t)?;
            }
            Ok(cur)
        } else {
            self.result_sort(fam, arg_sorts, t)
        }
    }

    pub fn least_sort_syntactic(&self, t: &Term) -> Result<SortRef> {
        match t.node() {
            Node::Int(_) => Ok(self.int_sort()),
            Node::Bool(_) => Ok(self.bool_sort()),
            Node::Var(v) => self.var_sort(v),
            Node::App(_, a) | Node::Ac(_, a) => {
                let sorts: Vec<SortRef> = a.iter().map(|x| self.least_sort_syntactic(x)).collect::<Result<_>>()?;
                self.sort_from_args(t, &sorts)
            }
        }
    }

    fn ac_family(&self, name: &Name, args: &[Term]) -> Option<&OpFamily> {
        if args.len() != 2 {
            return None;
        }
        let fams = self.families(name, 2);
        let f = match fams.len() {
            0 => return None,
            1 => &self.fams[fams[0]],
            _ => {
                let k = self.kind_of(&args[0]).ok()?;
                fams.iter().map(|f| &self.fams[*f]).find(|f| f.arg_kinds[0] == k)?
            }
        };
        (f.attrs.assoc || f.attrs.comm).then_some(f)
    }

    /// Canonical form of an application whose arguments are already canonical.
    pub fn canonical_root(&self, name: &Name, args: Vec<Term>) -> Term {
        let Some(fam) = self.ac_family(name, &args) else {
            return Term::app(name.clone(), args);
        };
        let id = fam.attrs.id.clone();
        let mut kids = Vec::new();
        for a in args {
            match a.node() {
                Node::Ac(g, cs) if g == name => kids.extend(cs.iter().cloned()),
                _ => kids.push(a),
            }
        }
        if let Some(id) = &id {
            kids.retain(|k| k != id);
        }
        kids.sort();
        match kids.len() {
            0 => id.unwrap_or_else(|| Term::app(name.clone(), vec![])),
            1 => kids.pop().unwrap(),
            _ => Term::ac_raw(name.clone(), kids),
        }
    }

    pub fn canonicalize(&self, t: &Term) -> Term {
        match t.node() {
            Node::App(f, a) => {
                let args = a.iter().map(|x| self.canonicalize(x)).collect();
                self.canonical_root(f, args)
            }
            Node::Ac(f, a) => {
                let kids: Vec<Term> = a.iter().map(|x| self.canonicalize(x)).collect();
                let mut it = kids.into_iter();
                let first = it.next().unwrap();
                it.fold(first, |acc, k| self.canonical_root(f, vec![acc, k]))
            }
            _ => t.clone(),
        }
    }

    pub fn apply(&self, s: &Subst, t: &Term) -> Term {
        if t.is_ground() {
            return t.clone();
        }
        self.canonicalize(&t.substitute(s))
    }

    /// Identity element and collector test for an AC symbol occurrence.
    pub fn ac_identity(&self, t: &Term) -> Option<Term> {
        self.family_of(t).ok().and_then(|f| f.attrs.id.clone())
    }

    /// A variable under an AC symbol can absorb several elements when its
    /// sort admits the symbol's results.
    pub fn is_collector(&self, fam: &OpFamily, v: &Var) -> bool {
        match self.var_sort(v) {
            Ok(SortRef::Kind(_)) => true,
            Ok(SortRef::Sort(s)) => fam.decls.iter().any(|d| match d.result {
                SortRef::Sort(r) => self.leq[r][s],
                SortRef::Kind(_) => false,
            }),
            Err(_) => false,
        }
    }

    /// Checks the "elements plus at most one collector" restriction.
    pub fn check_pattern(&self, t: &Term) -> Result<()> {
        if let Node::Ac(_, kids) = t.node() {
            let fam = self.family_of(t)?;
            let collectors = kids.iter().filter_map(|k| k.as_var()).filter(|v| self.is_collector(fam, v)).count();
            if collectors > 1 {
                return Err(Error::UnsupportedPattern(format!(
                    "{t}: at most one collector variable is allowed under {}",
                    fam.name
                )));
            }
        }
        t.args().iter().try_for_each(|a| self.check_pattern(a))
    }
}

fn merge_attrs(into: &mut OpAttrs, from: &OpAttrs) {
    into.assoc |= from.assoc;
    into.comm |= from.comm;
    if from.id.is_some() {
        into.id = from.id.clone();
    }
    if from.prec.is_some() {
        into.prec = from.prec;
    }
    if from.gather.is_some() {
        into.gather = from.gather.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common() -> SigSpec {
        let mut s = SigSpec::prelude();
        s.add_common(false);
        s
    }

    #[test]
    fn kinds_are_connected_components() {
        let sig = Signature::build(common()).unwrap();
        let st = sig.sort_id("State").unwrap();
        let tr = sig.sort_id("Trans").unwrap();
        let sg = sig.sort_id("Stage").unwrap();
        assert_eq!(sig.kind_of_sort(st), sig.kind_of_sort(sg));
        assert_eq!(sig.kind_of_sort(tr), sig.kind_of_sort(sg));
        let i = sig.sort_id("Int").unwrap();
        let b = sig.sort_id("Bool").unwrap();
        assert_ne!(sig.kind_of_sort(i), sig.kind_of_sort(b));
        assert_ne!(sig.kind_of_sort(i), sig.kind_of_sort(sg));
    }

    #[test]
    fn int_under_state_merges_kinds() {
        let mut s = common();
        s.add_subsort("Int", "State");
        let sig = Signature::build(s).unwrap();
        let i = sig.sort_id("Int").unwrap();
        let sg = sig.sort_id("Stage").unwrap();
        assert_eq!(sig.kind_of_sort(i), sig.kind_of_sort(sg));
        assert!(sig.leq_sort(i, sg));
    }

    #[test]
    fn subsort_cycle_rejected() {
        let mut s = SigSpec::default();
        s.add_sort("A");
        s.add_sort("B");
        s.add_subsort("A", "B");
        s.add_subsort("B", "A");
        assert!(matches!(Signature::build(s), Err(Error::Decl(_))));
    }

    #[test]
    fn least_sorts_of_sample_terms() {
        let mut s = common();
        s.add_subsort("Int", "State");
        s.add_op(OpSpec::user("lmoving|_", &["Int"], "Trans"));
        s.add_op(OpSpec::user("stopped", &[], "State"));
        s.add_op(OpSpec::user("<_,_>", &["State", "State"], "[State]"));
        let sig = Signature::build(s).unwrap();
        let t = Term::app("lmoving|_", vec![Term::int(2)]);
        assert_eq!(sig.least_sort_syntactic(&t).unwrap(), SortRef::Sort(sig.sort_id("Trans").unwrap()));
        let st = Term::constant("stopped");
        assert_eq!(sig.least_sort_syntactic(&st).unwrap(), SortRef::Sort(sig.sort_id("State").unwrap()));
        let tup = Term::app("<_,_>", vec![st.clone(), st]);
        assert!(matches!(sig.least_sort_syntactic(&tup).unwrap(), SortRef::Kind(_)));
    }

    #[test]
    fn canonical_ac_with_identity() {
        let mut s = SigSpec::prelude();
        s.add_sort("Cell");
        s.add_sort("Mem");
        s.add_subsort("Cell", "Mem");
        s.add_op(OpSpec::user("(_,_)", &["Int", "Int"], "Cell"));
        s.add_op(OpSpec::user("empty", &[], "Mem"));
        let mut j = OpSpec::user("__", &["Mem", "Mem"], "Mem");
        j.attrs.assoc = true;
        j.attrs.comm = true;
        j.attrs.id = Some(Term::constant("empty"));
        s.add_op(j);
        let sig = Signature::build(s).unwrap();
        let c = |a, b| Term::app("(_,_)", vec![Term::int(a), Term::int(b)]);
        let t = Term::app("__", vec![c(1, 0), Term::app("__", vec![c(0, 0), Term::constant("empty")])]);
        let n = sig.canonicalize(&t);
        assert_eq!(n.to_string(), "(0, 0) (1, 0)");
        assert_eq!(sig.canonicalize(&n), n);
        let swapped = Term::app("__", vec![c(0, 0), c(1, 0)]);
        assert_eq!(sig.canonicalize(&swapped), n);
    }
}
