//! Matching modulo assoc/comm/identity for "elements + one collector" patterns.

use super::signature::{Signature, SortRef};
use super::term::{Node, Subst, Term};
use crate::error::Result;

/// Sort information consulted while matching.
pub trait MatchEnv {
    fn sig(&self) -> &Signature;
    /// Whether `t` may be bound to a variable of sort `s`.
    fn has_sort(&self, t: &Term, s: SortRef) -> Result<bool>;
    /// Called whenever a pattern position fails against a subject position.
    fn mismatch(&self, _pattern: &Term, _subject: &Term) {}
}

/// Uses syntactic least sorts only.
pub struct SyntacticEnv<'a>(pub &'a Signature);

impl MatchEnv for SyntacticEnv<'_> {
    fn sig(&self) -> &Signature {
        self.0
    }
    fn has_sort(&self, t: &Term, s: SortRef) -> Result<bool> {
        Ok(self.0.leq(self.0.least_sort_syntactic(t)?, s))
    }
}

/// All substitutions extending `init` under which `pattern` equals `subject`.
pub fn match_term(env: &dyn MatchEnv, pattern: &Term, subject: &Term, init: &Subst) -> Result<Vec<Subst>> {
    let mut out = Vec::new();
    go(env, pattern, subject, init.clone(), &mut out)?;
    if out.len() > 1 {
        out.sort();
        out.dedup();
    }
    Ok(out)
}

fn go(env: &dyn MatchEnv, p: &Term, s: &Term, th: Subst, out: &mut Vec<Subst>) -> Result<()> {
    match p.node() {
        Node::Var(v) => {
            if let Some(b) = th.get(v) {
                if b == s {
                    out.push(th);
                } else {
                    env.mismatch(p, s);
                }
                return Ok(());
            }
            let sort = env.sig().var_sort(v)?;
            if env.has_sort(s, sort)? {
                let mut th = th;
                th.insert(v.clone(), s.clone());
                out.push(th);
            }
            Ok(())
        }
        Node::Int(_) | Node::Bool(_) => {
            if p == s {
                out.push(th);
            } else {
                env.mismatch(p, s);
            }
            Ok(())
        }
        Node::App(f, ps) => {
            let Node::App(g, ss) = s.node() else {
                env.mismatch(p, s);
                return Ok(());
            };
            if f != g || ps.len() != ss.len() {
                env.mismatch(p, s);
                return Ok(());
            }
            if p.is_ground() && s.is_ground() {
                if p == s {
                    out.push(th);
                } else {
                    env.mismatch(p, s);
                }
                return Ok(());
            }
            let mut cur = vec![th];
            for (pa, sa) in ps.iter().zip(ss) {
                let mut next = Vec::new();
                for t in cur {
                    go(env, pa, sa, t, &mut next)?;
                }
                if next.is_empty() {
                    return Ok(());
                }
                cur = next;
            }
            out.extend(cur);
            Ok(())
        }
        Node::Ac(f, ps) => match_ac(env, p, f, ps, s, th, out),
    }
}

fn match_ac(
    env: &dyn MatchEnv,
    p: &Term,
    f: &str,
    ps: &[Term],
    s: &Term,
    th: Subst,
    out: &mut Vec<Subst>,
) -> Result<()> {
    let sig = env.sig();
    let fam = sig.family_of(p)?;
    let identity = fam.attrs.id.clone();
    let subject: Vec<Term> = match s.node() {
        Node::Ac(g, ss) if &**g == f => ss.clone(),
        Node::Var(_) => {
            env.mismatch(p, s);
            return Ok(());
        }
        _ if identity.as_ref() == Some(s) => vec![],
        _ => vec![s.clone()],
    };
    let mut elems: Vec<&Term> = Vec::new();
    let mut collector = None;
    for c in ps {
        match c.as_var() {
            Some(v) if collector.is_none() && sig.is_collector(fam, v) => collector = Some(c),
            _ => elems.push(c),
        }
    }
    if elems.len() > subject.len() || (collector.is_none() && elems.len() != subject.len()) {
        env.mismatch(p, s);
        return Ok(());
    }
    let before = out.len();
    let mut used = vec![false; subject.len()];
    assign(env, f, &identity, &elems, collector, &subject, &mut used, th, out)?;
    if out.len() == before {
        env.mismatch(p, s);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn assign(
    env: &dyn MatchEnv,
    f: &str,
    identity: &Option<Term>,
    elems: &[&Term],
    collector: Option<&Term>,
    subject: &[Term],
    used: &mut Vec<bool>,
    th: Subst,
    out: &mut Vec<Subst>,
) -> Result<()> {
    let Some((first, rest)) = elems.split_first() else {
        let remaining: Vec<Term> =
            subject.iter().zip(used.iter()).filter(|(_, u)| !**u).map(|(t, _)| t.clone()).collect();
        match collector {
            None => {
                if remaining.is_empty() {
                    out.push(th);
                }
            }
            Some(c) => {
                let value = match remaining.len() {
                    0 => match identity {
                        Some(id) => id.clone(),
                        None => return Ok(()),
                    },
                    1 => remaining[0].clone(),
                    _ => Term::ac_raw(f, remaining),
                };
                go(env, c, &value, th, out)?;
            }
        }
        return Ok(());
    };
    for j in 0..subject.len() {
        if used[j] {
            continue;
        }
        // equal unused children give identical branches
        if (0..j).any(|k| !used[k] && subject[k] == subject[j]) {
            continue;
        }
        let mut got = Vec::new();
        go(env, first, &subject[j], th.clone(), &mut got)?;
        if got.is_empty() {
            continue;
        }
        used[j] = true;
        for t in got {
            assign(env, f, identity, rest, collector, subject, used, t, out)?;
        }
        used[j] = false;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::signature::{OpSpec, SigSpec};

    fn memory_sig() -> Signature {
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
        Signature::build(s).unwrap()
    }

    fn cell(a: Term, b: Term) -> Term {
        Term::app("(_,_)", vec![a, b])
    }

    #[test]
    fn collector_takes_the_rest() {
        let sig = memory_sig();
        let env = SyntacticEnv(&sig);
        let pat = sig.canonicalize(&Term::app(
            "__",
            vec![cell(Term::var("A", "Int"), Term::var("D''", "Int")), Term::var("Rest", "Mem")],
        ));
        let subj = sig
            .canonicalize(&Term::app("__", vec![cell(Term::int(1), Term::int(0)), cell(Term::int(0), Term::int(0))]));
        let ms = match_term(&env, &pat, &subj, &Subst::new()).unwrap();
        assert_eq!(ms.len(), 2);
        let shown: Vec<String> = ms.iter().map(|m| m.to_string()).collect();
        assert!(shown.contains(&"{A |-> 0, D'' |-> 0, Rest |-> (1, 0)}".to_string()));
        assert!(shown.contains(&"{A |-> 1, D'' |-> 0, Rest |-> (0, 0)}".to_string()));
    }

    #[test]
    fn empty_remainder_binds_identity() {
        let sig = memory_sig();
        let env = SyntacticEnv(&sig);
        let pat = sig.canonicalize(&Term::app(
            "__",
            vec![cell(Term::var("A", "Int"), Term::var("D", "Int")), Term::var("Rest", "Mem")],
        ));
        let subj = cell(Term::int(4), Term::int(5));
        let ms = match_term(&env, &pat, &subj, &Subst::new()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].to_string(), "{A |-> 4, D |-> 5, Rest |-> empty}");
    }

    #[test]
    fn head_mismatch_fails() {
        let mut s = SigSpec::prelude();
        s.add_common(false);
        s.add_op(OpSpec::user("lmoving|_", &["Int"], "Trans"));
        s.add_op(OpSpec::user("rmoving|_", &["Int"], "Trans"));
        let sig = Signature::build(s).unwrap();
        let env = SyntacticEnv(&sig);
        let p = Term::app("lmoving|_", vec![Term::var("D", "Int")]);
        let subj = Term::app("rmoving|_", vec![Term::int(2)]);
        assert!(match_term(&env, &p, &subj, &Subst::new()).unwrap().is_empty());
        let subj = Term::app("lmoving|_", vec![Term::int(2)]);
        assert_eq!(match_term(&env, &p, &subj, &Subst::new()).unwrap()[0].to_string(), "{D |-> 2}");
    }
}
