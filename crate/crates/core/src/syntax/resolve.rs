//! Module resolution: imports, signatures, statements, compositions and
//! plain modules.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use super::diag::{code, Diagnostic, Span};
use super::lexer::Tok;
use super::mixfix::{Grammar, TermParser};
use super::parser::{split_top, CondAst, Item, ItemKind, LabelAst, ModKind, ModuleAst, SourceUnit};
use crate::compose::{
    as_atom, leaf_var, tuple_op, Component, ComposedSystem, Criterion, Endpoint, ExportedProp, FlatCriterion,
};
use crate::egrw::{AtomicModule, EgRule};
use crate::error::Error;
use crate::kernel::signature::{
    Gather, KindId, OpAttrs, OpOrigin, OpSpec, PropSpec, SigSpec, Signature, SortRef, SortSpec,
};
use crate::kernel::term::{Name, Node, Term, Var};
use crate::mel::{Condition, Equation, Membership, Theory};
use crate::split::{
    PlainAtomic, PlainExport, PlainModule, PlainProduct, PlainRule, ProductCond, ProductRule, SplitStats,
};

#[derive(Clone, Debug)]
pub enum Resolved {
    Atomic(Arc<AtomicModule>),
    Composed(Arc<ComposedSystem>),
    Plain(Arc<PlainModule>),
}

impl Resolved {
    pub fn name(&self) -> &Name {
        match self {
            Resolved::Atomic(m) => &m.name,
            Resolved::Composed(c) => &c.name,
            Resolved::Plain(p) => p.name(),
        }
    }
}

type File<'s> = Option<&'s str>;

struct Resolver<'s> {
    asts: HashMap<String, (&'s ModuleAst, File<'s>)>,
    done: BTreeMap<String, Resolved>,
    failed: HashSet<String>,
    stack: Vec<String>,
    diags: Vec<Diagnostic>,
}

fn err_at(code: &'static str, msg: impl Into<String>, span: Span, file: File<'_>) -> Diagnostic {
    let mut d = Diagnostic::error(code, msg, Some(span));
    d.file = file.map(|s| s.to_string());
    d
}

fn warn_at(code: &'static str, msg: impl Into<String>, span: Span, file: File<'_>) -> Diagnostic {
    let mut d = Diagnostic::warning(code, msg, Some(span));
    d.file = file.map(|s| s.to_string());
    d
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::UnsupportedPattern(_) => code::PATTERN,
        Error::Syntax(_) => code::SYNTAX,
        _ => code::DECL,
    }
}

fn is_prelude_sort(s: &str) -> bool {
    matches!(s, "Int" | "Bool")
}

/// Resolves parsed sources into modules, collecting diagnostics.
pub fn resolve_units(units: &[SourceUnit]) -> (BTreeMap<String, Resolved>, Vec<String>, Vec<Diagnostic>) {
    let mut r =
        Resolver { asts: HashMap::new(), done: BTreeMap::new(), failed: HashSet::new(), stack: vec![], diags: vec![] };
    let mut order = Vec::new();
    for u in units {
        for m in &u.modules {
            if let Some((prev, pf)) = r.asts.get(&m.name) {
                let msg = format!(
                    "module {} is declared twice (first at {}line {})",
                    m.name,
                    pf.map(|f| format!("{f}, ")).unwrap_or_default(),
                    prev.span.line
                );
                r.diags.push(err_at(code::DUP_MODULE, msg, m.span, u.path.as_deref()));
                continue;
            }
            r.asts.insert(m.name.clone(), (m, u.path.as_deref()));
            order.push(m.name.clone());
        }
    }
    for n in &order {
        r.resolve(n, None);
    }
    (r.done, order, r.diags)
}

impl<'s> Resolver<'s> {
    fn resolve(&mut self, name: &str, used_at: Option<(Span, File<'s>)>) -> Option<Resolved> {
        if let Some(m) = self.done.get(name) {
            return Some(m.clone());
        }
        if self.failed.contains(name) {
            return None;
        }
        if self.stack.iter().any(|s| s == name) {
            let (span, file) = used_at.unwrap_or_default();
            let mut cyc = self.stack.clone();
            cyc.push(name.to_string());
            self.diags.push(err_at(code::IMPORT_CYCLE, format!("import cycle: {}", cyc.join(" -> ")), span, file));
            return None;
        }
        let Some(&(ast, file)) = self.asts.get(name) else {
            let (span, file) = used_at.unwrap_or_default();
            self.diags.push(err_at(code::UNKNOWN_MODULE, format!("unknown module {name}"), span, file));
            return None;
        };
        self.stack.push(name.to_string());
        let out = match ast.kind {
            ModKind::Plain => self.plain(ast, file).map(|p| Resolved::Plain(Arc::new(p))),
            ModKind::Egal if ast.items.iter().any(|i| matches!(i.kind, ItemKind::Compose { .. })) => {
                self.composed(ast, file).map(|c| Resolved::Composed(Arc::new(c)))
            }
            ModKind::Egal => self.atomic(ast, file).map(|m| Resolved::Atomic(Arc::new(m))),
        };
        self.stack.pop();
        match &out {
            Some(m) => {
                self.done.insert(name.to_string(), m.clone());
            }
            None => {
                self.failed.insert(name.to_string());
            }
        }
        out
    }

    /// Own items with imports expanded in place; each imported statement once.
    fn flatten(&mut self, ast: &'s ModuleAst, file: File<'s>) -> Option<Vec<(&'s Item, File<'s>)>> {
        let mut out = Vec::new();
        let mut seen: HashSet<(String, usize)> = HashSet::new();
        let mut ok = true;
        self.flatten_into(ast, file, &mut out, &mut seen, &mut ok);
        ok.then_some(out)
    }

    fn flatten_into(
        &mut self,
        ast: &'s ModuleAst,
        file: File<'s>,
        out: &mut Vec<(&'s Item, File<'s>)>,
        seen: &mut HashSet<(String, usize)>,
        ok: &mut bool,
    ) {
        for (k, it) in ast.items.iter().enumerate() {
            if let ItemKind::Import(x) = &it.kind {
                match self.resolve(x, Some((it.span, file))) {
                    Some(Resolved::Atomic(_)) => {
                        let (sub, sf) = self.asts[x.as_str()];
                        self.flatten_into(sub, sf, out, seen, ok);
                    }
                    Some(_) => {
                        self.diags.push(err_at(
                            code::COMPOSE,
                            format!("{x} is not an atomic module; compose it with '||' instead of importing it"),
                            it.span,
                            file,
                        ));
                        *ok = false;
                    }
                    None => *ok = false,
                }
                continue;
            }
            if seen.insert((ast.name.clone(), k)) {
                out.push((it, file));
            }
        }
    }

    fn atomic(&mut self, ast: &'s ModuleAst, file: File<'s>) -> Option<AtomicModule> {
        let items = self.flatten(ast, file)?;
        let b = self.build_flat(&ast.name, &items, false, ast.span, file)?;
        let rules = b
            .rules
            .into_iter()
            .map(|r| EgRule::new(r.lhs, r.label.expect("egalitarian rule label"), r.rhs, r.conds))
            .collect();
        let mut m = match AtomicModule::new(&ast.name, b.theory, rules, b.init) {
            Ok(m) => m,
            Err(e) => {
                self.diags.push(err_at(error_code(&e), e.to_string(), ast.span, file));
                return None;
            }
        };
        m.auto_labels = b.auto_labels;
        for op in m.check_topmost() {
            self.diags.push(warn_at(
                code::TOPMOST,
                format!(
                    "{}: operator {op} builds a stage from a stage argument, so the module is not topmost",
                    ast.name
                ),
                ast.span,
                file,
            ));
        }
        for i in m.check_admissible() {
            self.diags.push(warn_at(code::ADMISSIBLE, format!("{}: {i}", ast.name), ast.span, file));
        }
        Some(m)
    }

    /// Signature, equations, memberships and rules of a flat module.
    fn build_flat(
        &mut self,
        name: &str,
        items: &[(&'s Item, File<'s>)],
        plain: bool,
        mspan: Span,
        mfile: File<'s>,
    ) -> Option<Flat> {
        let before = self.diags.iter().filter(|d| d.is_error()).count();
        let mut spec = SigSpec::prelude();
        spec.add_common(plain);
        let top = if plain { "State" } else { "Stage" };
        for (it, _) in items {
            if let ItemKind::Sorts(ss) = &it.kind {
                for s in ss {
                    spec.add_sort(s);
                }
            }
        }
        let known = |spec: &SigSpec, s: &str| {
            let base = s.strip_prefix('[').and_then(|x| x.strip_suffix(']')).unwrap_or(s);
            spec.sorts.iter().any(|x| &**x == base)
        };
        let mut auto_labels: Vec<Name> = Vec::new();
        let mut id_terms: Vec<(usize, &'s [Tok], Span, File<'s>)> = Vec::new();
        for &(it, file) in items {
            match &it.kind {
                ItemKind::Subsorts(chain) => {
                    for w in chain.windows(2) {
                        for a in &w[0] {
                            for b in &w[1] {
                                let mut good = true;
                                for s in [a, b] {
                                    if !known(&spec, s) {
                                        self.diags.push(err_at(
                                            code::UNKNOWN_SORT,
                                            format!("unknown sort {s}"),
                                            it.span,
                                            file,
                                        ));
                                        good = false;
                                    }
                                }
                                if good {
                                    spec.add_subsort(a, b);
                                }
                            }
                        }
                    }
                }
                ItemKind::Ops { names, args, result, attrs } => {
                    let mut good = true;
                    for s in args.iter().chain(std::iter::once(result)) {
                        if !known(&spec, s) {
                            self.diags.push(err_at(code::UNKNOWN_SORT, format!("unknown sort {s}"), it.span, file));
                            good = false;
                        }
                    }
                    let Some((a, id)) = self.op_attrs(attrs, it.span, file) else { continue };
                    if !good {
                        continue;
                    }
                    for n in names {
                        let mut o = OpSpec::user(n, &args.iter().map(|s| s.as_str()).collect::<Vec<_>>(), result);
                        o.attrs = a.clone();
                        if let Some(id) = id {
                            id_terms.push((spec.ops.len(), id, it.span, file));
                        }
                        spec.ops.push(o);
                    }
                }
                ItemKind::Prop { name: p, codomain, total } => {
                    if !known(&spec, codomain) || codomain.starts_with('[') {
                        self.diags.push(err_at(
                            code::UNKNOWN_SORT,
                            format!("unknown codomain sort {codomain}"),
                            it.span,
                            file,
                        ));
                        continue;
                    }
                    if spec.props.iter().any(|x| &*x.name == p.as_str()) {
                        self.diags.push(err_at(code::DECL, format!("property {p} declared twice"), it.span, file));
                        continue;
                    }
                    spec.props.push(PropSpec {
                        name: p.as_str().into(),
                        codomain: codomain.as_str().into(),
                        domain: SortSpec::sort(top),
                        total: *total,
                    });
                }
                ItemKind::Rule { label: Some(LabelAst::Auto), .. } => {
                    let mut k = auto_labels.len() + 1;
                    let taken = |n: &str| spec.ops.iter().any(|o| &*o.name == n);
                    while taken(&format!("auto{k}")) {
                        k += 1;
                    }
                    let n = format!("auto{k}");
                    let mut o = OpSpec::user(&n, &[], "Trans");
                    o.origin = OpOrigin::AutoLabel;
                    spec.ops.push(o);
                    auto_labels.push(n.as_str().into());
                    self.diags.push(warn_at(
                        code::AUTO_LABEL,
                        format!("'=[*]=>' synthesized the transition constant {n}"),
                        it.span,
                        file,
                    ));
                }
                ItemKind::Compose { .. } | ItemKind::Sync(_) => {
                    self.diags.push(err_at(
                        code::COMPOSE,
                        "composition blocks cannot be mixed with declarations of an atomic module",
                        it.span,
                        file,
                    ));
                }
                ItemKind::Component(_) => {
                    self.diags.push(err_at(
                        code::COMPOSE,
                        "'component' sections are only allowed in plain product modules",
                        it.span,
                        file,
                    ));
                }
                _ => {}
            }
        }
        if self.diags.iter().filter(|d| d.is_error()).count() > before {
            return None;
        }
        let sig0 = match Signature::build(spec.clone()) {
            Ok(s) => s,
            Err(e) => {
                self.diags.push(err_at(code::DECL, format!("{name}: {e}"), mspan, mfile));
                return None;
            }
        };
        if !id_terms.is_empty() {
            let g = Grammar::new(&sig0);
            let vars = HashMap::new();
            let p = TermParser { sig: &sig0, grammar: &g, vars: &vars };
            for (k, toks, span, file) in &id_terms {
                match p.parse(toks, None) {
                    Ok(t) if t.is_ground() => spec.ops[*k].attrs.id = Some(t),
                    Ok(t) => self.diags.push(err_at(
                        code::DECL,
                        format!("identity element {t} must be ground"),
                        *span,
                        *file,
                    )),
                    Err(mut d) => {
                        d.file = file.map(|s| s.to_string());
                        self.diags.push(d)
                    }
                }
            }
        }
        let sig = match Signature::build(spec) {
            Ok(s) => s,
            Err(e) => {
                self.diags.push(err_at(code::DECL, format!("{name}: {e}"), mspan, mfile));
                return None;
            }
        };
        let grammar = Grammar::new(&sig);
        let stage_kind = sig.sort_ref(top).map(|r| sig.kind_of_ref(r));
        let mut vars: HashMap<String, Var> = HashMap::new();
        let mut eqs = Vec::new();
        let mut mbs = Vec::new();
        let mut rules = Vec::new();
        let mut init = None;
        let mut auto_iter = auto_labels.iter();
        for &(it, file) in items {
            let mut sc = StmtCtx { sig: &sig, grammar: &grammar, file, diags: &mut self.diags };
            match &it.kind {
                ItemKind::Vars { names, sort } => {
                    if sig.sort_ref(sort).is_none() {
                        sc.diags.push(err_at(code::UNKNOWN_SORT, format!("unknown sort {sort}"), it.span, file));
                        continue;
                    }
                    for n in names {
                        vars.insert(n.clone(), Var::new(n, sort));
                    }
                }
                ItemKind::Eq { lhs, rhs, conds, owise } => {
                    let Some(l) = sc.term(&vars, lhs, None) else { continue };
                    let Some(r) = sc.term(&vars, rhs, sig.kind_of(&l).ok()) else { continue };
                    let Some(cs) = sc.conds(&vars, conds) else { continue };
                    if !sc.pattern_ok(&l, it.span) || !cs.iter().all(|c| sc.cond_pattern_ok(c, it.span)) {
                        continue;
                    }
                    if l.head().is_some_and(|h| &**h == "init") && l.args().is_empty() {
                        init = Some(r.clone());
                    }
                    eqs.push(Equation { lhs: l, rhs: r, conds: cs, owise: *owise });
                }
                ItemKind::Mb { subject, sort, conds } => {
                    let Some(s) = sig.sort_id(sort) else {
                        sc.diags.push(err_at(
                            code::UNKNOWN_SORT,
                            format!("unknown sort {sort} in membership"),
                            it.span,
                            file,
                        ));
                        continue;
                    };
                    let Some(t) = sc.term(&vars, subject, Some(sig.kind_of_sort(s))) else { continue };
                    let Some(cs) = sc.conds(&vars, conds) else { continue };
                    if t.as_var().is_some() {
                        sc.diags.push(err_at(
                            code::DECL,
                            "membership subject must not be a bare variable",
                            it.span,
                            file,
                        ));
                        continue;
                    }
                    if !sc.pattern_ok(&t, it.span) {
                        continue;
                    }
                    mbs.push(Membership { subject: t, sort: s, conds: cs });
                }
                ItemKind::Rule { lhs, label, rhs, conds } => {
                    let Some(l) = sc.term(&vars, lhs, stage_kind) else { continue };
                    let lab = match label {
                        None => None,
                        Some(LabelAst::Term(ts)) => match sc.term(&vars, ts, stage_kind) {
                            Some(t) => Some(t),
                            None => continue,
                        },
                        Some(LabelAst::Auto) => Some(Term::constant(auto_iter.next().expect("auto label"))),
                    };
                    let Some(r) = sc.term(&vars, rhs, stage_kind) else { continue };
                    let Some(cs) = sc.conds(&vars, conds) else { continue };
                    if !sc.pattern_ok(&l, it.span) || lab.as_ref().is_some_and(|t| !sc.pattern_ok(t, it.span)) {
                        continue;
                    }
                    if !cs.iter().all(|c| sc.cond_pattern_ok(c, it.span)) {
                        continue;
                    }
                    if !plain {
                        let want = [
                            ("State", &l, "left-hand side"),
                            ("Trans", lab.as_ref().unwrap(), "transition term"),
                            ("State", &r, "right-hand side"),
                        ];
                        let mut good = true;
                        for (s, t, what) in want {
                            if let (Ok(SortRef::Sort(ls)), Some(SortRef::Sort(w))) =
                                (sig.least_sort_syntactic(t), sig.sort_ref(s))
                            {
                                if !sig.leq_sort(ls, w) {
                                    sc.diags.push(err_at(
                                        code::DECL,
                                        format!("{what} {t} has sort {}, expected {s}", sig.sort_name(ls)),
                                        it.span,
                                        file,
                                    ));
                                    good = false;
                                }
                            }
                        }
                        if !good {
                            continue;
                        }
                    }
                    rules.push(RawRule { lhs: l, label: lab, rhs: r, conds: cs });
                }
                _ => {}
            }
        }
        if self.diags.iter().filter(|d| d.is_error()).count() > before {
            return None;
        }
        let theory = match Theory::new(sig, eqs, mbs) {
            Ok(t) => t,
            Err(e) => {
                self.diags.push(err_at(error_code(&e), format!("{name}: {e}"), mspan, mfile));
                return None;
            }
        };
        Some(Flat { theory, rules, init, auto_labels })
    }

    fn op_attrs(&mut self, attrs: &'s [Tok], span: Span, file: File<'s>) -> Option<(OpAttrs, Option<&'s [Tok]>)> {
        let mut a = OpAttrs::default();
        let mut id = None;
        let mut i = 0;
        let kw = |t: &Tok| matches!(t.text.as_str(), "assoc" | "comm" | "id:" | "prec" | "gather" | "ctor");
        while i < attrs.len() {
            let t = &attrs[i];
            match t.text.as_str() {
                "assoc" => a.assoc = true,
                "comm" => a.comm = true,
                "ctor" => {}
                "prec" => {
                    let n = attrs.get(i + 1).and_then(|x| x.text.parse::<u32>().ok());
                    match n {
                        Some(n) => a.prec = Some(n),
                        None => {
                            self.diags.push(err_at(code::SYNTAX, "'prec' needs a natural number", t.span, file));
                            return None;
                        }
                    }
                    i += 1;
                }
                "gather" => {
                    let mut g = Vec::new();
                    let mut j = i + 1;
                    if !attrs.get(j).is_some_and(|x| x.is("(")) {
                        self.diags.push(err_at(code::SYNTAX, "'gather' needs a list like (E e)", t.span, file));
                        return None;
                    }
                    j += 1;
                    while j < attrs.len() && !attrs[j].is(")") {
                        match attrs[j].text.as_str() {
                            "E" => g.push(Gather::Le),
                            "e" => g.push(Gather::Lt),
                            other => {
                                self.diags.push(err_at(
                                    code::SYNTAX,
                                    format!("unknown gather symbol {other}; use E or e"),
                                    attrs[j].span,
                                    file,
                                ));
                                return None;
                            }
                        }
                        j += 1;
                    }
                    a.gather = Some(g);
                    i = j;
                }
                "id:" => {
                    let start = i + 1;
                    let mut j = start;
                    while j < attrs.len() && !kw(&attrs[j]) {
                        j += 1;
                    }
                    if j == start {
                        self.diags.push(err_at(code::SYNTAX, "'id:' needs a term", t.span, file));
                        return None;
                    }
                    id = Some(&attrs[start..j]);
                    i = j;
                    continue;
                }
                other => {
                    self.diags.push(err_at(
                        code::SYNTAX,
                        format!("unknown operator attribute '{other}'"),
                        t.span,
                        file,
                    ));
                    return None;
                }
            }
            i += 1;
        }
        let _ = span;
        Some((a, id))
    }

    fn composed(&mut self, ast: &'s ModuleAst, file: File<'s>) -> Option<ComposedSystem> {
        let before = self.diags.iter().filter(|d| d.is_error()).count();
        let mut parts: Vec<(String, Span)> = Vec::new();
        let mut syncs: Vec<(String, String, Span)> = Vec::new();
        for it in &ast.items {
            match &it.kind {
                ItemKind::Compose { parts: p } => {
                    if !parts.is_empty() {
                        self.diags.push(err_at(
                            code::COMPOSE,
                            "a composed module has a single '||' block",
                            it.span,
                            file,
                        ));
                    }
                    parts = p.clone();
                }
                ItemKind::Sync(c) => syncs.extend(c.iter().cloned()),
                ItemKind::Prop { .. } | ItemKind::Vars { .. } | ItemKind::Eq { .. } => {}
                _ => self.diags.push(err_at(
                    code::COMPOSE,
                    "composed modules contain only the '||' block, 'sync on', and exported properties",
                    it.span,
                    file,
                )),
            }
        }
        let mut children: Vec<(Name, Component)> = Vec::new();
        for (p, span) in &parts {
            match self.resolve(p, Some((*span, file))) {
                Some(Resolved::Atomic(m)) => {
                    let bad = m.check_topmost();
                    if !bad.is_empty() {
                        self.diags.push(err_at(
                            code::TOPMOST_ERR,
                            format!(
                                "component {p} is not topmost (operators {}); only topmost systems can be composed",
                                bad.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
                            ),
                            *span,
                            file,
                        ));
                    }
                    children.push((p.as_str().into(), Component::Atomic(m)));
                }
                Some(Resolved::Composed(c)) => children.push((p.as_str().into(), Component::Composed(c))),
                Some(Resolved::Plain(_)) => {
                    self.diags.push(err_at(
                        code::COMPOSE,
                        format!("{p} is a plain module and cannot be composed"),
                        *span,
                        file,
                    ));
                }
                None => {}
            }
        }
        if self.diags.iter().filter(|d| d.is_error()).count() > before {
            return None;
        }
        let base = match ComposedSystem::new(&ast.name, children.clone(), vec![], vec![]) {
            Ok(b) => b,
            Err(e) => {
                self.diags.push(err_at(code::COMPOSE, e.to_string(), ast.span, file));
                return None;
            }
        };
        let mut criteria = Vec::new();
        for (l, r, span) in &syncs {
            let (le, re) = (Endpoint::parse(l), Endpoint::parse(r));
            let mut infos = Vec::new();
            for e in [&le, &re] {
                if e.path.is_empty() {
                    self.diags.push(err_at(
                        code::UNKNOWN_PROP,
                        format!("criterion endpoint {e} must be qualified by a component name"),
                        *span,
                        file,
                    ));
                    continue;
                }
                match base.endpoint_info(e) {
                    Ok(i) => infos.push(i),
                    Err(x) => self.diags.push(err_at(code::UNKNOWN_PROP, x.to_string(), *span, file)),
                }
            }
            if infos.len() == 2 {
                let (lc, rc) = (&infos[0].0, &infos[1].0);
                if !is_prelude_sort(lc) || !is_prelude_sort(rc) {
                    self.diags.push(err_at(
                        code::CRITERION_KIND,
                        format!("criterion {l} = {r} relates codomains {lc} and {rc}; only Int and Bool properties can be synchronized"),
                        *span,
                        file,
                    ));
                } else if lc != rc {
                    self.diags.push(err_at(
                        code::CRITERION_KIND,
                        format!("criterion {l} = {r} relates a {lc} property with a {rc} property"),
                        *span,
                        file,
                    ));
                }
            }
            criteria.push(Criterion { left: le, right: re });
        }
        let exported = self.exported(ast, file, &children)?;
        if self.diags.iter().filter(|d| d.is_error()).count() > before {
            return None;
        }
        match ComposedSystem::new(&ast.name, children, criteria, exported) {
            Ok(s) => Some(s),
            Err(e) => {
                self.diags.push(err_at(code::COMPOSE, e.to_string(), ast.span, file));
                None
            }
        }
    }

    /// `prop p : S .` with `eq p @ G = expr .` over projections `CHILD(G)`.
    fn exported(
        &mut self,
        ast: &'s ModuleAst,
        file: File<'s>,
        children: &[(Name, Component)],
    ) -> Option<Vec<ExportedProp>> {
        let mut spec = SigSpec::prelude();
        spec.add_sort("Stage");
        let prop_op = |name: &str, dom: &str, cod: &str, origin: OpOrigin| OpSpec {
            name: format!("{name}@_").into(),
            args: vec![SortSpec::kind(dom)],
            result: SortSpec::kind(cod),
            attrs: OpAttrs { prec: Some(100), gather: Some(vec![Gather::Le]), ..Default::default() },
            origin,
            builtin: None,
            poly: false,
        };
        let mut own: Vec<(String, String, bool, Span)> = Vec::new();
        for it in &ast.items {
            if let ItemKind::Prop { name, codomain, total } = &it.kind {
                if !is_prelude_sort(codomain) {
                    self.diags.push(err_at(
                        code::DECL,
                        format!("exported property {name} must have codomain Int or Bool"),
                        it.span,
                        file,
                    ));
                    continue;
                }
                if own.iter().any(|o| o.0 == *name) {
                    self.diags.push(err_at(code::DECL, format!("property {name} declared twice"), it.span, file));
                    continue;
                }
                spec.add_op(prop_op(name, "Stage", codomain, OpOrigin::Property(name.as_str().into())));
                own.push((name.clone(), codomain.clone(), *total, it.span));
            }
        }
        for (cname, comp) in children {
            let cs = format!("{cname}.Stage");
            spec.add_sort(&cs);
            let mut proj = OpSpec::user(cname, &["Stage"], &cs);
            proj.origin = OpOrigin::Projection(cname.clone());
            spec.add_op(proj);
            let props: Vec<(String, String)> = match comp {
                Component::Atomic(m) => {
                    let sig = m.theory.sig();
                    sig.props().values().map(|p| (p.name.to_string(), sig.sort_name(p.codomain).to_string())).collect()
                }
                Component::Composed(c) => {
                    c.exported.iter().map(|x| (x.name.to_string(), x.codomain.to_string())).collect()
                }
            };
            for (p, cod) in props {
                if is_prelude_sort(&cod) {
                    spec.add_op(prop_op(&p, &cs, &cod, OpOrigin::Property(p.as_str().into())));
                }
            }
        }
        let sig = match Signature::build(spec) {
            Ok(s) => s,
            Err(e) => {
                self.diags.push(err_at(code::DECL, e.to_string(), ast.span, file));
                return None;
            }
        };
        let grammar = Grammar::new(&sig);
        let mut vars: HashMap<String, Var> = HashMap::new();
        let mut out: Vec<ExportedProp> = Vec::new();
        for it in &ast.items {
            let mut sc = StmtCtx { sig: &sig, grammar: &grammar, file, diags: &mut self.diags };
            match &it.kind {
                ItemKind::Vars { names, sort } => {
                    if sig.sort_ref(sort).is_none() {
                        sc.diags.push(err_at(
                            code::UNKNOWN_SORT,
                            format!("unknown sort {sort} (composed modules know Stage and CHILD.Stage)"),
                            it.span,
                            file,
                        ));
                        continue;
                    }
                    for n in names {
                        vars.insert(n.clone(), Var::new(n, sort));
                    }
                }
                ItemKind::Eq { lhs, rhs, conds, owise } => {
                    if !conds.is_empty() || *owise {
                        sc.diags.push(err_at(
                            code::COMPOSE,
                            "exported property equations are unconditional",
                            it.span,
                            file,
                        ));
                        continue;
                    }
                    let Some(l) = sc.term(&vars, lhs, None) else { continue };
                    let target = match l.node() {
                        Node::App(f, a) if f.ends_with("@_") && a.len() == 1 && a[0].as_var().is_some() => {
                            let p = &f[..f.len() - 2];
                            own.iter().find(|o| o.0 == p).map(|o| (o.clone(), a[0].as_var().unwrap().clone()))
                        }
                        _ => None,
                    };
                    let Some(((name, cod, total, _), g)) = target else {
                        sc.diags.push(err_at(
                            code::COMPOSE,
                            format!("expected 'eq p @ G = ...' for a property p declared here, found {l}"),
                            it.span,
                            file,
                        ));
                        continue;
                    };
                    let Some(r) = sc.term(&vars, rhs, sig.kind_of(&l).ok()) else { continue };
                    if out.iter().any(|x| *x.name == *name) {
                        sc.diags.push(err_at(code::DECL, format!("property {name} is defined twice"), it.span, file));
                        continue;
                    }
                    out.push(ExportedProp {
                        name: name.as_str().into(),
                        codomain: cod.as_str().into(),
                        total,
                        var: g,
                        expr: r,
                    });
                }
                _ => {}
            }
        }
        for (name, _, _, span) in &own {
            if !out.iter().any(|x| *x.name == **name) {
                self.diags.push(err_at(
                    code::DECL,
                    format!("property {name} is declared but has no defining equation"),
                    *span,
                    file,
                ));
            }
        }
        Some(out)
    }

    fn plain(&mut self, ast: &'s ModuleAst, file: File<'s>) -> Option<PlainModule> {
        let comps: Vec<&ModuleAst> = ast
            .items
            .iter()
            .filter_map(|i| match &i.kind {
                ItemKind::Component(m) => Some(&**m),
                _ => None,
            })
            .collect();
        if comps.is_empty() {
            let items = self.flatten(ast, file)?;
            let f = self.build_flat(&ast.name, &items, true, ast.span, file)?;
            let rules = f.rules.into_iter().map(|r| PlainRule { lhs: r.lhs, rhs: r.rhs, conds: r.conds }).collect();
            return Some(PlainModule::Flat(PlainAtomic {
                name: ast.name.as_str().into(),
                theory: f.theory,
                rules,
                init: f.init,
            }));
        }
        self.product(ast, file, comps)
    }

    fn product(&mut self, ast: &'s ModuleAst, file: File<'s>, comps: Vec<&'s ModuleAst>) -> Option<PlainModule> {
        let before = self.diags.iter().filter(|d| d.is_error()).count();
        let mut leaves: Vec<PlainAtomic> = Vec::new();
        for c in &comps {
            let items: Vec<(&Item, File)> = c.items.iter().map(|i| (i, file)).collect();
            if items.iter().any(|(i, _)| matches!(i.kind, ItemKind::Import(_))) {
                self.diags.push(err_at(code::COMPOSE, "component sections cannot import modules", c.span, file));
                return None;
            }
            let f = self.build_flat(&c.name, &items, true, c.span, file)?;
            let rules = f.rules.into_iter().map(|r| PlainRule { lhs: r.lhs, rhs: r.rhs, conds: r.conds }).collect();
            leaves.push(PlainAtomic { name: c.name.as_str().into(), theory: f.theory, rules, init: f.init });
        }
        let n = leaves.len();
        let leaf_index: HashMap<String, usize> =
            leaves.iter().enumerate().map(|(i, l)| (l.name.to_string(), i)).collect();
        let grammars: Vec<Grammar> = leaves.iter().map(|l| Grammar::new(l.theory.sig())).collect();
        // property expressions over `p @ V` with V naming a tuple part
        let mut fspec = SigSpec::prelude();
        for l in &leaves {
            let s = format!("{}.Stage", l.name);
            fspec.add_sort(&s);
            let sig = l.theory.sig();
            for p in sig.props().values() {
                let cod = sig.sort_name(p.codomain).to_string();
                if is_prelude_sort(&cod) {
                    fspec.add_op(OpSpec {
                        name: p.op.clone(),
                        args: vec![SortSpec::kind(&s)],
                        result: SortSpec::kind(&cod),
                        attrs: OpAttrs { prec: Some(100), gather: Some(vec![Gather::Le]), ..Default::default() },
                        origin: OpOrigin::Property(p.name.clone()),
                        builtin: None,
                        poly: false,
                    });
                }
            }
        }
        let mut own_props: Vec<(String, String)> = Vec::new();
        for it in &ast.items {
            if let ItemKind::Prop { name, codomain, .. } = &it.kind {
                own_props.push((name.clone(), codomain.clone()));
            }
        }
        let fsig = match Signature::build(fspec) {
            Ok(s) => s,
            Err(e) => {
                self.diags.push(err_at(code::DECL, e.to_string(), ast.span, file));
                return None;
            }
        };
        let fgrammar = Grammar::new(&fsig);
        let mut pvars: HashMap<String, (usize, Var)> = HashMap::new();
        let mut criteria: Option<Vec<FlatCriterion>> = None;
        let mut exported: Vec<PlainExport> = Vec::new();
        let mut rules: Vec<ProductRule> = Vec::new();
        let mut init: Option<Vec<Term>> = None;
        for it in &ast.items {
            let pc = ProductCtx { leaves: &leaves, grammars: &grammars, fsig: &fsig, fgrammar: &fgrammar, file };
            match &it.kind {
                ItemKind::Component(_) | ItemKind::Prop { .. } => {}
                ItemKind::Ops { names, .. } => {
                    if names.len() != 1 || names[0] != tuple_op(n) {
                        self.diags.push(err_at(
                            code::COMPOSE,
                            format!("a product module declares only the tuple operator {}", tuple_op(n)),
                            it.span,
                            file,
                        ));
                    }
                }
                ItemKind::Vars { names, sort } => {
                    let Some((leaf, s)) = sort.split_once('.').and_then(|(l, s)| leaf_index.get(l).map(|i| (*i, s)))
                    else {
                        self.diags.push(err_at(
                            code::UNKNOWN_SORT,
                            format!("product variables need a component-qualified sort, found {sort}"),
                            it.span,
                            file,
                        ));
                        continue;
                    };
                    if leaves[leaf].theory.sig().sort_ref(s).is_none() {
                        self.diags.push(err_at(code::UNKNOWN_SORT, format!("unknown sort {sort}"), it.span, file));
                        continue;
                    }
                    for v in names {
                        pvars.insert(v.clone(), (leaf, Var::new(v, s)));
                    }
                }
                ItemKind::Mb { subject, sort, conds } => {
                    if sort != "State" {
                        self.diags.push(err_at(
                            code::COMPOSE,
                            "the product membership concludes ': State'",
                            it.span,
                            file,
                        ));
                        continue;
                    }
                    let Some(tv) = pc.tuple_vars(subject, &pvars, &mut self.diags, it.span) else { continue };
                    let mut cs = Vec::new();
                    for c in conds {
                        let CondAst::Eq(a, b) = c else {
                            self.diags.push(err_at(
                                code::COMPOSE,
                                "compatibility conditions are property equalities",
                                it.span,
                                file,
                            ));
                            continue;
                        };
                        let (Some(ta), Some(tb)) =
                            (pc.flat_expr(a, &tv, &mut self.diags), pc.flat_expr(b, &tv, &mut self.diags))
                        else {
                            continue;
                        };
                        let (left, right, total) = match (ta.node(), tb.as_bool()) {
                            (Node::App(f, x), Some(true)) if &**f == "agree" && x.len() == 2 => {
                                (x[0].clone(), x[1].clone(), false)
                            }
                            _ => (ta, tb, true),
                        };
                        let label = match (as_atom(&left), as_atom(&right)) {
                            (Some((a, p)), Some((b, q))) => format!("{a}.{p} = {b}.{q}"),
                            _ => format!("{left} = {right}"),
                        };
                        let max_leaf = left
                            .vars()
                            .iter()
                            .chain(right.vars().iter())
                            .filter_map(|v| leaf_index.get(&*v.name).copied())
                            .max()
                            .unwrap_or(0);
                        cs.push(FlatCriterion { left, right, label, max_leaf, total });
                    }
                    if criteria.is_some() {
                        self.diags.push(err_at(
                            code::COMPOSE,
                            "the product membership is declared twice",
                            it.span,
                            file,
                        ));
                    }
                    criteria = Some(cs);
                }
                ItemKind::Eq { lhs, rhs, conds, .. } => {
                    // `eq init = < ... >` or `ceq p @ < ... > = expr if < ... > : State`
                    if lhs.len() == 1 && lhs[0].is("init") {
                        let Some(parts) = pc.tuple(rhs, &pvars, &mut self.diags, it.span) else { continue };
                        init = Some(parts);
                        continue;
                    }
                    let Some(at) = lhs.iter().position(|t| t.is("@")) else {
                        self.diags.push(err_at(
                            code::COMPOSE,
                            "expected 'eq init = < ... >' or 'ceq p @ < ... > = ...'",
                            it.span,
                            file,
                        ));
                        continue;
                    };
                    let name: String = lhs[..at].iter().map(|t| t.text.as_str()).collect();
                    let Some((_, cod)) = own_props.iter().find(|p| p.0 == name) else {
                        self.diags.push(err_at(
                            code::UNKNOWN_PROP,
                            format!("property {name} is not declared"),
                            it.span,
                            file,
                        ));
                        continue;
                    };
                    let Some(tv) = pc.tuple_vars(&lhs[at + 1..], &pvars, &mut self.diags, it.span) else { continue };
                    let _ = conds;
                    let Some(expr) = pc.flat_expr(rhs, &tv, &mut self.diags) else { continue };
                    exported.push(PlainExport { name: name.as_str().into(), codomain: cod.as_str().into(), expr });
                }
                ItemKind::Rule { lhs, rhs, conds, label: None } => {
                    let Some(l) = pc.tuple(lhs, &pvars, &mut self.diags, it.span) else { continue };
                    let Some(r) = pc.tuple(rhs, &pvars, &mut self.diags, it.span) else { continue };
                    let mut cs = Vec::new();
                    let mut good = true;
                    for c in conds {
                        match pc.product_cond(c, &pvars, &mut self.diags, it.span) {
                            Some(x) => cs.push(x),
                            None => good = false,
                        }
                    }
                    if good {
                        rules.push(ProductRule { lhs: l, rhs: r, conds: cs });
                    }
                }
                _ => self.diags.push(err_at(code::COMPOSE, "unexpected statement in a product module", it.span, file)),
            }
        }
        if let Some(parts) = init {
            for (l, p) in leaves.iter_mut().zip(parts) {
                l.init = Some(p);
            }
        }
        for (p, _) in &own_props {
            if !exported.iter().any(|e| *e.name == **p) {
                self.diags.push(err_at(
                    code::DECL,
                    format!("property {p} is declared but has no defining equation"),
                    ast.span,
                    file,
                ));
            }
        }
        if self.diags.iter().filter(|d| d.is_error()).count() > before {
            return None;
        }
        let criteria = criteria.unwrap_or_default();
        let partial = criteria.iter().filter(|c| !c.total).map(|c| c.label.clone()).collect();
        let stats = SplitStats { distinct: rules.len(), ..Default::default() };
        Some(PlainModule::Product(PlainProduct::new(
            ast.name.as_str().into(),
            leaves,
            criteria,
            exported,
            rules,
            stats,
            partial,
        )))
    }
}

struct Flat {
    theory: Theory,
    rules: Vec<RawRule>,
    init: Option<Term>,
    auto_labels: Vec<Name>,
}

struct RawRule {
    lhs: Term,
    label: Option<Term>,
    rhs: Term,
    conds: Vec<Condition>,
}

struct StmtCtx<'a, 's> {
    sig: &'a Signature,
    grammar: &'a Grammar,
    file: File<'s>,
    diags: &'a mut Vec<Diagnostic>,
}

impl StmtCtx<'_, '_> {
    fn term(&mut self, vars: &HashMap<String, Var>, toks: &[Tok], expected: Option<KindId>) -> Option<Term> {
        let p = TermParser { sig: self.sig, grammar: self.grammar, vars };
        match p.parse(toks, expected) {
            Ok(t) => Some(t),
            Err(mut d) => {
                d.file = self.file.map(|s| s.to_string());
                self.diags.push(d);
                None
            }
        }
    }

    fn conds(&mut self, vars: &HashMap<String, Var>, cs: &[CondAst]) -> Option<Vec<Condition>> {
        let mut out = Vec::new();
        let mut ok = true;
        for c in cs {
            let r = match c {
                CondAst::Eq(a, b) => self.pair(vars, a, b).map(|(x, y)| Condition::Eq(x, y)),
                CondAst::Match(a, b) => self.pair(vars, a, b).map(|(x, y)| Condition::Match(x, y)),
                CondAst::Sort(t, s) => match self.sig.sort_ref(s) {
                    Some(r) => self.term(vars, t, Some(self.sig.kind_of_ref(r))).map(|x| Condition::Sort(x, r)),
                    None => {
                        let span = t.first().map(|x| x.span).unwrap_or_default();
                        self.diags.push(err_at(
                            code::UNKNOWN_SORT,
                            format!("unknown sort {s} in condition"),
                            span,
                            self.file,
                        ));
                        None
                    }
                },
                CondAst::Bool(t) => {
                    let k = self.sig.kind_of_ref(self.sig.bool_sort());
                    self.term(vars, t, Some(k)).map(|x| Condition::Eq(x, Term::boolean(true)))
                }
            };
            match r {
                Some(c) => out.push(c),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn pair(&mut self, vars: &HashMap<String, Var>, a: &[Tok], b: &[Tok]) -> Option<(Term, Term)> {
        let p = TermParser { sig: self.sig, grammar: self.grammar, vars };
        match p.parse(a, None) {
            Ok(x) => {
                let y = self.term(vars, b, self.sig.kind_of(&x).ok())?;
                Some((x, y))
            }
            Err(d) if d.code == code::AMBIGUOUS => {
                let y = self.term(vars, b, None)?;
                let x = self.term(vars, a, self.sig.kind_of(&y).ok())?;
                Some((x, y))
            }
            Err(mut d) => {
                d.file = self.file.map(|s| s.to_string());
                self.diags.push(d);
                None
            }
        }
    }

    fn pattern_ok(&mut self, t: &Term, span: Span) -> bool {
        match self.sig.check_pattern(t) {
            Ok(()) => true,
            Err(e) => {
                self.diags.push(err_at(code::PATTERN, e.to_string(), span, self.file));
                false
            }
        }
    }

    fn cond_pattern_ok(&mut self, c: &Condition, span: Span) -> bool {
        match c {
            Condition::Match(p, _) => self.pattern_ok(p, span),
            _ => true,
        }
    }
}

struct ProductCtx<'a, 's> {
    leaves: &'a [PlainAtomic],
    grammars: &'a [Grammar],
    fsig: &'a Signature,
    fgrammar: &'a Grammar,
    file: File<'s>,
}

impl ProductCtx<'_, '_> {
    fn leaf_vars(&self, pvars: &HashMap<String, (usize, Var)>, i: usize) -> HashMap<String, Var> {
        pvars.iter().filter(|(_, (l, _))| *l == i).map(|(n, (_, v))| (n.clone(), v.clone())).collect()
    }

    fn parse_in(
        &self,
        i: usize,
        toks: &[Tok],
        pvars: &HashMap<String, (usize, Var)>,
        expected: Option<KindId>,
    ) -> Result<Term, Diagnostic> {
        let vars = self.leaf_vars(pvars, i);
        let sig = self.leaves[i].theory.sig();
        TermParser { sig, grammar: &self.grammars[i], vars: &vars }.parse(toks, expected).map(|t| sig.canonicalize(&t))
    }

    /// Splits `< t1, ..., tn >` and parses each part in its component.
    fn tuple(
        &self,
        toks: &[Tok],
        pvars: &HashMap<String, (usize, Var)>,
        diags: &mut Vec<Diagnostic>,
        span: Span,
    ) -> Option<Vec<Term>> {
        let n = self.leaves.len();
        if toks.len() < 2 || !toks[0].is("<") || !toks[toks.len() - 1].is(">") {
            diags.push(err_at(code::COMPOSE, format!("expected a tuple {}", tuple_op(n)), span, self.file));
            return None;
        }
        let parts = split_top(&toks[1..toks.len() - 1], ",");
        if parts.len() != n {
            diags.push(err_at(
                code::COMPOSE,
                format!("expected {n} tuple parts, found {}", parts.len()),
                span,
                self.file,
            ));
            return None;
        }
        let mut out = Vec::new();
        for (i, p) in parts.iter().enumerate() {
            match self.parse_in(i, p, pvars, None) {
                Ok(t) => out.push(t),
                Err(mut d) => {
                    d.file = self.file.map(|s| s.to_string());
                    diags.push(d);
                    return None;
                }
            }
        }
        Some(out)
    }

    /// A tuple of variables, one per component; returns the variable names.
    fn tuple_vars(
        &self,
        toks: &[Tok],
        pvars: &HashMap<String, (usize, Var)>,
        diags: &mut Vec<Diagnostic>,
        span: Span,
    ) -> Option<Vec<String>> {
        let parts = self.tuple(toks, pvars, diags, span)?;
        let mut out = Vec::new();
        for p in parts {
            match p.as_var() {
                Some(v) => out.push(v.name.to_string()),
                None => {
                    diags.push(err_at(
                        code::COMPOSE,
                        format!("expected a variable in the tuple, found {p}"),
                        span,
                        self.file,
                    ));
                    return None;
                }
            }
        }
        Some(out)
    }

    /// Parses an expression over `p @ V`, V a tuple variable, into leaf atoms.
    fn flat_expr(&self, toks: &[Tok], tv: &[String], diags: &mut Vec<Diagnostic>) -> Option<Term> {
        let vars: HashMap<String, Var> =
            tv.iter().zip(self.leaves).map(|(v, l)| (v.clone(), Var::new(v, &format!("{}.Stage", l.name)))).collect();
        let t = match (TermParser { sig: self.fsig, grammar: self.fgrammar, vars: &vars }).parse(toks, None) {
            Ok(t) => t,
            Err(mut d) => {
                d.file = self.file.map(|s| s.to_string());
                diags.push(d);
                return None;
            }
        };
        Some(t.map_vars(&mut |v| match v.sort.strip_suffix(".Stage") {
            Some(leaf) => Term::from_var(leaf_var(leaf)),
            None => Term::from_var(v.clone()),
        }))
    }

    fn product_cond(
        &self,
        c: &CondAst,
        pvars: &HashMap<String, (usize, Var)>,
        diags: &mut Vec<Diagnostic>,
        span: Span,
    ) -> Option<ProductCond> {
        if let CondAst::Sort(t, s) = c {
            if s == "State" && t.first().is_some_and(|x| x.is("<")) {
                return self.tuple(t, pvars, diags, span).map(ProductCond::Member);
            }
        }
        let toks: Vec<&Tok> = match c {
            CondAst::Eq(a, b) | CondAst::Match(a, b) => a.iter().chain(b.iter()).collect(),
            CondAst::Sort(a, _) | CondAst::Bool(a) => a.iter().collect(),
        };
        let mut leaves: Vec<usize> = toks.iter().filter_map(|t| pvars.get(&t.text).map(|x| x.0)).collect();
        leaves.sort();
        leaves.dedup();
        let candidates: Vec<usize> = match leaves.len() {
            0 => (0..self.leaves.len()).collect(),
            1 => leaves,
            _ => {
                diags.push(err_at(
                    code::COMPOSE,
                    "a rule condition mixes variables of different components",
                    span,
                    self.file,
                ));
                return None;
            }
        };
        let mut last = None;
        for i in candidates {
            let sig = self.leaves[i].theory.sig();
            let vars = self.leaf_vars(pvars, i);
            let mut local = Vec::new();
            let mut sc = StmtCtx { sig, grammar: &self.grammars[i], file: self.file, diags: &mut local };
            if let Some(mut cs) = sc.conds(&vars, std::slice::from_ref(c)) {
                let c = cs.pop().unwrap().map_terms(&mut |t| sig.canonicalize(t));
                return Some(ProductCond::Part(i, c));
            }
            last = local.into_iter().next();
        }
        diags.push(
            last.unwrap_or_else(|| {
                err_at(code::NO_PARSE, "condition does not parse in any component", span, self.file)
            }),
        );
        None
    }
}
