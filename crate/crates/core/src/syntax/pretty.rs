//! Printing modules back to source. The output re-parses to the same module.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

use crate::compose::{leaf_var, tuple_op, ComposedSystem};
use crate::egrw::AtomicModule;
use crate::kernel::signature::{Gather, OpOrigin, OpSpec, SigSpec, Signature};
use crate::kernel::term::{Printer, Term, Var, VarStyle};
use crate::mel::{Condition, Theory};
use crate::split::{PlainAtomic, PlainModule, PlainProduct, ProductCond};

use super::resolve::Resolved;

pub fn print_resolved(m: &Resolved) -> String {
    match m {
        Resolved::Atomic(a) => print_atomic(a),
        Resolved::Composed(c) => print_composed(c),
        Resolved::Plain(p) => print_plain(p),
    }
}

fn attrs_text(o: &OpSpec, pr: &Printer) -> String {
    let a = &o.attrs;
    let mut v: Vec<String> = Vec::new();
    if a.assoc {
        v.push("assoc".into());
    }
    if a.comm {
        v.push("comm".into());
    }
    if let Some(id) = &a.id {
        v.push(format!("id: {}", pr.print(id)));
    }
    if let Some(p) = a.prec {
        v.push(format!("prec {p}"));
    }
    if let Some(g) = &a.gather {
        let s: Vec<&str> = g.iter().map(|x| if *x == Gather::Le { "E" } else { "e" }).collect();
        v.push(format!("gather ({})", s.join(" ")));
    }
    if v.is_empty() {
        String::new()
    } else {
        format!(" [{}]", v.join(" "))
    }
}

fn common_sort(s: &str, plain: bool) -> bool {
    let common: &[&str] =
        if plain { &["Int", "Bool", "State'", "Trans", "State"] } else { &["Int", "Bool", "State", "Trans", "Stage"] };
    common.contains(&s)
}

/// Sorts, subsorts, operators and properties a user wrote.
fn print_decls(spec: &SigSpec, plain: bool, ind: &str, out: &mut String) {
    let sorts: Vec<&str> = spec.sorts.iter().map(|s| &**s).filter(|s| !common_sort(s, plain)).collect();
    if !sorts.is_empty() {
        let kw = if sorts.len() == 1 { "sort" } else { "sorts" };
        let _ = writeln!(out, "{ind}{kw} {} .", sorts.join(" "));
    }
    let (state, top) = if plain { ("State'", "State") } else { ("State", "Stage") };
    for (a, b) in &spec.subsorts {
        if (&**a == state || &**a == "Trans") && &**b == top {
            continue;
        }
        let _ = writeln!(out, "{ind}subsort {a} < {b} .");
    }
    let pr = Printer::default();
    // consecutive operators with one profile share an `ops` line
    let mut groups: Vec<(Vec<&str>, String)> = Vec::new();
    for o in spec.ops.iter().filter(|o| matches!(o.origin, OpOrigin::User | OpOrigin::AutoLabel)) {
        let args: Vec<String> = o.args.iter().map(|a| a.text()).collect();
        let profile = format!(
            ": {}{}-> {}{}",
            args.join(" "),
            if args.is_empty() { "" } else { " " },
            o.result.text(),
            attrs_text(o, &pr)
        );
        match groups.last_mut() {
            Some((names, p)) if *p == profile && !o.name.contains(' ') => names.push(&o.name),
            _ => groups.push((vec![&o.name], profile)),
        }
    }
    for (names, profile) in groups {
        let kw = if names.len() == 1 { "op" } else { "ops" };
        let _ = writeln!(out, "{ind}{kw} {} {profile} .", names.join(" "));
    }
    for p in &spec.props {
        let total = if p.total { " [total]" } else { "" };
        let _ = writeln!(out, "{ind}prop {} : {}{total} .", p.name, p.codomain);
    }
}

fn cond_text(c: &Condition, sig: &Signature, pr: &Printer) -> String {
    match c {
        Condition::Eq(a, b) => format!("{} = {}", pr.print(a), pr.print(b)),
        Condition::Match(a, b) => format!("{} := {}", pr.print(a), pr.print(b)),
        Condition::Sort(a, s) => format!("{} : {}", pr.print(a), sig.ref_name(*s)),
    }
}

fn conds_text(cs: &[Condition], sig: &Signature, pr: &Printer) -> String {
    if cs.is_empty() {
        return String::new();
    }
    format!(" if {}", cs.iter().map(|c| cond_text(c, sig, pr)).collect::<Vec<_>>().join(" /\\ "))
}

/// Declares every variable by sort; a name used at two sorts is written
/// inline as `X:Sort` everywhere instead.
fn var_decls(vars: &BTreeSet<Var>, ind: &str, prefix: &str, out: &mut String) -> Printer {
    let mut by_name: BTreeMap<&str, Vec<&Var>> = BTreeMap::new();
    for v in vars {
        by_name.entry(&v.name).or_default().push(v);
    }
    let mut inline = HashSet::new();
    let mut by_sort: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (n, vs) in &by_name {
        if vs.len() > 1 {
            inline.extend(vs.iter().map(|v| (*v).clone()));
        } else {
            by_sort.entry(&vs[0].sort).or_default().push(n);
        }
    }
    for (s, ns) in by_sort {
        let kw = if ns.len() == 1 { "var" } else { "vars" };
        let _ = writeln!(out, "{ind}{kw} {} : {prefix}{s} .", ns.join(" "));
    }
    if inline.is_empty() {
        Printer::default()
    } else {
        Printer { vars: VarStyle::InlineOnly(inline) }
    }
}

fn theory_vars(th: &Theory) -> BTreeSet<Var> {
    let mut vs = BTreeSet::new();
    for e in th.equations() {
        vs.extend(e.lhs.vars());
        vs.extend(e.rhs.vars());
        e.conds.iter().for_each(|c| vs.extend(c.vars()));
    }
    for m in th.memberships() {
        vs.extend(m.subject.vars());
        m.conds.iter().for_each(|c| vs.extend(c.vars()));
    }
    vs
}

fn print_statements(th: &Theory, pr: &Printer, ind: &str, out: &mut String) {
    let sig = th.sig();
    for e in th.equations() {
        let kw = if e.conds.is_empty() { "eq" } else { "ceq" };
        let ow = if e.owise { " [otherwise]" } else { "" };
        let _ = writeln!(
            out,
            "{ind}{kw} {} = {}{}{ow} .",
            pr.print(&e.lhs),
            pr.print(&e.rhs),
            conds_text(&e.conds, sig, pr)
        );
    }
    for m in th.memberships() {
        let kw = if m.conds.is_empty() { "mb" } else { "cmb" };
        let _ = writeln!(
            out,
            "{ind}{kw} {} : {}{} .",
            pr.print(&m.subject),
            sig.sort_name(m.sort),
            conds_text(&m.conds, sig, pr)
        );
    }
}

pub fn print_atomic(m: &AtomicModule) -> String {
    let mut out = format!("mod {} is\n", m.name);
    let th = &m.theory;
    print_decls(th.sig().spec(), false, "  ", &mut out);
    let mut vs = theory_vars(th);
    for r in &m.rules {
        vs.extend(r.vars());
    }
    let pr = var_decls(&vs, "  ", "", &mut out);
    print_statements(th, &pr, "  ", &mut out);
    for r in &m.rules {
        let kw = if r.conds.is_empty() { "rl" } else { "crl" };
        let _ = writeln!(
            out,
            "  {kw} {} =[ {} ]=> {}{} .",
            pr.print(&r.lhs),
            pr.print(&r.label),
            pr.print(&r.rhs),
            conds_text(&r.conds, th.sig(), &pr)
        );
    }
    out.push_str("endm\n");
    out
}

pub fn print_composed(c: &ComposedSystem) -> String {
    let mut out = format!("mod {} is\n", c.name);
    let names: Vec<&str> = c.children.iter().map(|(n, _)| &**n).collect();
    let _ = write!(out, "  pr {}", names.join(" || "));
    for (i, k) in c.criteria.iter().enumerate() {
        let _ = write!(out, "{}{k}", if i == 0 { "\n  sync on " } else { "\n       /\\ " });
    }
    out.push_str(" .\n");
    if !c.exported.is_empty() {
        let pr = Printer::default();
        for e in &c.exported {
            let total = if e.total { " [total]" } else { "" };
            let _ = writeln!(out, "  prop {} : {}{total} .", e.name, e.codomain);
        }
        let vars: BTreeSet<&Var> = c.exported.iter().map(|e| &e.var).collect();
        for v in vars {
            let _ = writeln!(out, "  var {} : {} .", v.name, v.sort);
        }
        for e in &c.exported {
            let _ = writeln!(out, "  eq {} @ {} = {} .", e.name, e.var.name, pr.print(&e.expr));
        }
    }
    out.push_str("endm\n");
    out
}

fn print_flat_body(p: &PlainAtomic, ind: &str, out: &mut String) {
    let th = &p.theory;
    print_decls(th.sig().spec(), true, ind, out);
    let mut vs = theory_vars(th);
    for r in &p.rules {
        vs.extend(r.lhs.vars());
        vs.extend(r.rhs.vars());
        r.conds.iter().for_each(|c| vs.extend(c.vars()));
    }
    let pr = var_decls(&vs, ind, "", out);
    print_statements(th, &pr, ind, out);
    for r in &p.rules {
        let kw = if r.conds.is_empty() { "rl" } else { "crl" };
        let _ = writeln!(
            out,
            "{ind}{kw} {} => {}{} .",
            pr.print(&r.lhs),
            pr.print(&r.rhs),
            conds_text(&r.conds, th.sig(), &pr)
        );
    }
}

pub fn print_plain(m: &PlainModule) -> String {
    match m {
        PlainModule::Flat(p) => {
            let mut out = format!("pmod {} is\n", p.name);
            print_flat_body(p, "  ", &mut out);
            out.push_str("endm\n");
            out
        }
        PlainModule::Product(p) => print_product(p),
    }
}

fn print_product(p: &PlainProduct) -> String {
    let n = p.leaves.len();
    let st = &p.stats;
    let mut out = format!("pmod {} is\n", p.name);
    let names: Vec<&str> = p.leaves.iter().map(|l| &*l.name).collect();
    let _ = writeln!(out, "  --- split of {} over {} components: {}", p.name, n, names.join(", "));
    let _ = writeln!(out, "  --- {} synchronization criteria", p.criteria.len());
    let _ = writeln!(
        out,
        "  --- {} combinations of rules, {} generated, {} distinct",
        st.combinations, st.generated, st.distinct
    );
    if st.pruned {
        let _ = writeln!(
            out,
            "  --- pruned: {} rules deleted, {} membership conditions removed, {} rules left",
            st.deleted,
            st.conditions_removed,
            p.rules.len()
        );
    }
    if !p.partial_endpoints.is_empty() {
        let _ = writeln!(
            out,
            "  --- agree(x, y) holds when x = y or either side is undefined; used for criteria over partial properties"
        );
    }
    for l in &p.leaves {
        let _ = writeln!(out, "  component {} is", l.name);
        print_flat_body(l, "    ", &mut out);
        out.push_str("  endc\n");
    }
    let args: Vec<String> = p.leaves.iter().map(|l| format!("{}.State'", l.name)).collect();
    let _ = writeln!(out, "  op {} : {} -> [State] .", tuple_op(n), args.join(" "));

    // rule variables, qualified by the component they belong to
    let mut rule_vars: BTreeSet<(usize, Var)> = BTreeSet::new();
    for r in &p.rules {
        for i in 0..n {
            r.lhs[i].vars().into_iter().chain(r.rhs[i].vars()).for_each(|v| {
                rule_vars.insert((i, v));
            });
        }
        for c in &r.conds {
            match c {
                ProductCond::Part(i, c) => c.vars().into_iter().for_each(|v| {
                    rule_vars.insert((*i, v));
                }),
                ProductCond::Member(ts) => {
                    for (i, t) in ts.iter().enumerate() {
                        t.vars().into_iter().for_each(|v| {
                            rule_vars.insert((i, v));
                        });
                    }
                }
            }
        }
    }
    let taken: HashSet<String> = rule_vars.iter().map(|(_, v)| v.name.to_string()).collect();
    let mut g = String::from("G");
    while (1..=n).any(|i| taken.contains(&format!("{g}{i}"))) {
        g.push('\'');
    }
    let tv: Vec<String> = (1..=n).map(|i| format!("{g}{i}")).collect();
    for (v, l) in tv.iter().zip(&p.leaves) {
        let _ = writeln!(out, "  var {v} : {}.State .", l.name);
    }
    let tuple = |parts: &[String]| format!("< {} >", parts.join(", "));
    let pr = Printer::default();
    let flat = |t: &Term| {
        let r = t.map_vars(&mut |v| match p.index.get(&v.name).filter(|_| *v == leaf_var(&v.name)) {
            Some(&i) => Term::var(&tv[i], &v.sort),
            None => Term::from_var(v.clone()),
        });
        pr.print(&r)
    };
    if !p.criteria.is_empty() {
        let cs: Vec<String> = p
            .criteria
            .iter()
            .map(|c| {
                if c.total {
                    format!("{} = {}", flat(&c.left), flat(&c.right))
                } else {
                    format!("agree({}, {}) = true", flat(&c.left), flat(&c.right))
                }
            })
            .collect();
        let _ = writeln!(out, "  cmb {} : State\n    if {} .", tuple(&tv), cs.join("\n    /\\ "));
    }
    for e in &p.exported {
        let _ = writeln!(out, "  prop {} : {} .", e.name, e.codomain);
    }
    for e in &p.exported {
        let _ = writeln!(out, "  eq {} @ {} = {} .", e.name, tuple(&tv), flat(&e.expr));
    }
    if let Some(inits) = p.leaves.iter().map(|l| l.init.as_ref().map(|t| pr.print(t))).collect::<Option<Vec<_>>>() {
        let _ = writeln!(out, "  eq init = {} .", tuple(&inits));
    }
    let mut by_sort: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (i, v) in &rule_vars {
        by_sort.entry(format!("{}.{}", p.leaves[*i].name, v.sort)).or_default().push(&v.name);
    }
    for (s, ns) in by_sort {
        let kw = if ns.len() == 1 { "var" } else { "vars" };
        let _ = writeln!(out, "  {kw} {} : {s} .", ns.join(" "));
    }
    let show = |ts: &[Term]| tuple(&ts.iter().map(|t| pr.print(t)).collect::<Vec<_>>());
    for r in &p.rules {
        let conds: Vec<String> = r
            .conds
            .iter()
            .map(|c| match c {
                ProductCond::Part(i, c) => cond_text(c, p.leaves[*i].theory.sig(), &pr),
                ProductCond::Member(ts) => format!("{} : State", show(ts)),
            })
            .collect();
        let kw = if conds.is_empty() { "rl" } else { "crl" };
        let _ = write!(out, "  {kw} {}\n    => {}", show(&r.lhs), show(&r.rhs));
        if !conds.is_empty() {
            let _ = write!(out, "\n    if {}", conds.join("\n    /\\ "));
        }
        out.push_str(" .\n");
    }
    out.push_str("endm\n");
    out
}
