use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

pub type Name = Arc<str>;

/// Characters that always form a token of their own in source text.
pub fn is_special(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | '{' | '}' | ',' | '|' | '@')
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Name,
    /// Sort name, or `[S]` for a kind-level variable.
    pub sort: Name,
}

impl Var {
    pub fn new(name: &str, sort: &str) -> Var {
        Var { name: name.into(), sort: sort.into() }
    }
}

#[derive(Debug)]
pub enum Node {
    Var(Var),
    Int(i64),
    Bool(bool),
    App(Name, Vec<Term>),
    /// Flattened associative-commutative application; children are sorted.
    Ac(Name, Vec<Term>),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
    ground: bool,
}

#[derive(Clone)]
pub struct Term(Arc<Inner>);

impl Term {
    fn mk(node: Node) -> Term {
        let mut h = DefaultHasher::new();
        let ground = match &node {
            Node::Var(v) => {
                0u8.hash(&mut h);
                v.hash(&mut h);
                false
            }
            Node::Int(i) => {
                1u8.hash(&mut h);
                i.hash(&mut h);
                true
            }
            Node::Bool(b) => {
                2u8.hash(&mut h);
                b.hash(&mut h);
                true
            }
            Node::App(f, args) | Node::Ac(f, args) => {
                let tag = if matches!(node, Node::App(..)) { 3u8 } else { 4u8 };
                tag.hash(&mut h);
                f.hash(&mut h);
                for a in args {
                    a.0.hash.hash(&mut h);
                }
                args.iter().all(|a| a.0.ground)
            }
        };
        Term(Arc::new(Inner { node, hash: h.finish(), ground }))
    }

    pub fn var(name: &str, sort: &str) -> Term {
        Term::mk(Node::Var(Var::new(name, sort)))
    }
    pub fn from_var(v: Var) -> Term {
        Term::mk(Node::Var(v))
    }
    pub fn int(i: i64) -> Term {
        Term::mk(Node::Int(i))
    }
    pub fn boolean(b: bool) -> Term {
        Term::mk(Node::Bool(b))
    }
    pub fn app(name: impl Into<Name>, args: Vec<Term>) -> Term {
        Term::mk(Node::App(name.into(), args))
    }
    pub fn constant(name: &str) -> Term {
        Term::app(name, vec![])
    }
    /// Builds an AC node directly; callers must pass flattened, sorted children.
    pub fn ac_raw(name: impl Into<Name>, children: Vec<Term>) -> Term {
        Term::mk(Node::Ac(name.into(), children))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }
    pub fn is_ground(&self) -> bool {
        self.0.ground
    }
    pub fn head(&self) -> Option<&Name> {
        match self.node() {
            Node::App(f, _) | Node::Ac(f, _) => Some(f),
            _ => None,
        }
    }
    /// Symbol key: name and declared arity (AC nodes are binary symbols).
    pub fn symbol(&self) -> Option<(&Name, usize)> {
        match self.node() {
            Node::App(f, a) => Some((f, a.len())),
            Node::Ac(f, _) => Some((f, 2)),
            _ => None,
        }
    }
    pub fn args(&self) -> &[Term] {
        match self.node() {
            Node::App(_, a) | Node::Ac(_, a) => a,
            _ => &[],
        }
    }
    pub fn as_var(&self) -> Option<&Var> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }
    pub fn as_int(&self) -> Option<i64> {
        match self.node() {
            Node::Int(i) => Some(*i),
            _ => None,
        }
    }
    pub fn as_bool(&self) -> Option<bool> {
        match self.node() {
            Node::Bool(b) => Some(*b),
            _ => None,
        }
    }
    pub fn is_literal(&self) -> bool {
        matches!(self.node(), Node::Int(_) | Node::Bool(_))
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }
    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        if self.is_ground() {
            return;
        }
        match self.node() {
            Node::Var(v) => {
                out.insert(v.clone());
            }
            Node::App(_, a) | Node::Ac(_, a) => a.iter().for_each(|t| t.collect_vars(out)),
            _ => {}
        }
    }

    /// Rebuilds the term bottom-up, replacing variables by `f`. No canonicalization.
    pub fn map_vars(&self, f: &mut dyn FnMut(&Var) -> Term) -> Term {
        if self.is_ground() {
            return self.clone();
        }
        match self.node() {
            Node::Var(v) => f(v),
            Node::App(n, a) => Term::app(n.clone(), a.iter().map(|t| t.map_vars(f)).collect()),
            Node::Ac(n, a) => Term::ac_raw(n.clone(), a.iter().map(|t| t.map_vars(f)).collect()),
            _ => self.clone(),
        }
    }

    /// Raw simultaneous replacement; unbound variables stay. Use `Signature::apply`
    /// when the result must be canonical.
    pub fn substitute(&self, s: &Subst) -> Term {
        self.map_vars(&mut |v| s.get(v).cloned().unwrap_or_else(|| Term::from_var(v.clone())))
    }

    pub fn size(&self) -> usize {
        1 + self.args().iter().map(|a| a.size()).sum::<usize>()
    }

    pub fn contains_symbol(&self, name: &str) -> bool {
        self.head().is_some_and(|h| &**h == name) || self.args().iter().any(|a| a.contains_symbol(name))
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash {
            return false;
        }
        match (self.node(), other.node()) {
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Int(a), Node::Int(b)) => a == b,
            (Node::Bool(a), Node::Bool(b)) => a == b,
            (Node::App(f, a), Node::App(g, b)) | (Node::Ac(f, a), Node::Ac(g, b)) => f == g && a == b,
            _ => false,
        }
    }
}
impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state)
    }
}

fn rank(n: &Node) -> u8 {
    match n {
        Node::Int(_) => 0,
        Node::Bool(_) => 1,
        Node::App(..) | Node::Ac(..) => 2,
        Node::Var(_) => 3,
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Term) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (a, b) = (self.node(), other.node());
        rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
            (Node::Int(x), Node::Int(y)) => x.cmp(y),
            (Node::Bool(x), Node::Bool(y)) => x.cmp(y),
            (Node::Var(x), Node::Var(y)) => x.cmp(y),
            _ => {
                let (f, xs) = (self.head().unwrap(), self.args());
                let (g, ys) = (other.head().unwrap(), other.args());
                f.cmp(g)
                    .then(xs.len().cmp(&ys.len()))
                    .then_with(|| xs.cmp(ys))
                    .then_with(|| matches!(a, Node::Ac(..)).cmp(&matches!(b, Node::Ac(..))))
            }
        })
    }
}
impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Term) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A finite map from variables to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subst(BTreeMap<Var, Term>);

impl Subst {
    pub fn new() -> Subst {
        Subst::default()
    }
    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.0.get(v)
    }
    pub fn contains(&self, v: &Var) -> bool {
        self.0.contains_key(v)
    }
    pub fn insert(&mut self, v: Var, t: Term) {
        self.0.insert(v, t);
    }
    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.0.iter()
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn domain(&self) -> BTreeSet<Var> {
        self.0.keys().cloned().collect()
    }
}

impl FromIterator<(Var, Term)> for Subst {
    fn from_iter<I: IntoIterator<Item = (Var, Term)>>(iter: I) -> Subst {
        Subst(iter.into_iter().collect())
    }
}

impl fmt::Display for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, t)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{} |-> {}", v.name, t)?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    Hole,
    Tok(String),
}

/// Splits a mixfix operator name into tokens and `_` placeholders.
pub fn name_pieces(name: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<Piece>| {
        if !cur.is_empty() {
            out.push(Piece::Tok(std::mem::take(cur)));
        }
    };
    for c in name.chars() {
        if c == '_' {
            flush(&mut cur, &mut out);
            out.push(Piece::Hole);
        } else if is_special(c) {
            flush(&mut cur, &mut out);
            out.push(Piece::Tok(c.to_string()));
        } else if c.is_whitespace() {
            flush(&mut cur, &mut out);
        } else {
            cur.push(c);
        }
    }
    flush(&mut cur, &mut out);
    out
}

pub fn is_mixfix(name: &str) -> bool {
    name.contains('_')
}

/// Pieces used to print or parse an application of `name` with `arity` arguments;
/// names without placeholders use prefix-call notation.
pub fn syntax_pieces(name: &str, arity: usize) -> Vec<Piece> {
    if is_mixfix(name) {
        return name_pieces(name);
    }
    let mut p = vec![Piece::Tok(name.to_string())];
    if arity > 0 {
        p.push(Piece::Tok("(".into()));
        for i in 0..arity {
            if i > 0 {
                p.push(Piece::Tok(",".into()));
            }
            p.push(Piece::Hole);
        }
        p.push(Piece::Tok(")".into()));
    }
    p
}

#[derive(Clone, Debug, Default)]
pub enum VarStyle {
    #[default]
    Bare,
    Inline,
    InlineOnly(HashSet<Var>),
}

/// Term printer. Output re-parses to the same term: any open mixfix argument
/// sitting at an operator boundary is parenthesized.
#[derive(Clone, Debug, Default)]
pub struct Printer {
    pub vars: VarStyle,
}

impl Printer {
    pub fn inline() -> Printer {
        Printer { vars: VarStyle::Inline }
    }

    pub fn print(&self, t: &Term) -> String {
        let mut s = String::new();
        self.write(t, &mut s);
        s
    }

    fn is_open(t: &Term) -> bool {
        match t.node() {
            Node::App(f, a) => {
                let p = syntax_pieces(f, a.len());
                matches!(p.first(), Some(Piece::Hole)) || matches!(p.last(), Some(Piece::Hole))
            }
            Node::Ac(..) => true,
            _ => false,
        }
    }

    fn write(&self, t: &Term, out: &mut String) {
        match t.node() {
            Node::Int(i) => out.push_str(&i.to_string()),
            Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Node::Var(v) => {
                out.push_str(&v.name);
                let inline = match &self.vars {
                    VarStyle::Bare => false,
                    VarStyle::Inline => true,
                    VarStyle::InlineOnly(s) => s.contains(v),
                };
                if inline {
                    out.push(':');
                    out.push_str(&v.sort);
                }
            }
            Node::App(f, args) => {
                if !is_mixfix(f) {
                    out.push_str(f);
                    if !args.is_empty() {
                        out.push('(');
                        for (i, a) in args.iter().enumerate() {
                            if i > 0 {
                                out.push_str(", ");
                            }
                            self.write(a, out);
                        }
                        out.push(')');
                    }
                    return;
                }
                let pieces = name_pieces(f);
                if pieces.iter().filter(|p| **p == Piece::Hole).count() == args.len() {
                    self.write_pieces(&pieces, args, out);
                } else {
                    self.write_assoc(&pieces, args, out);
                }
            }
            Node::Ac(f, args) => {
                let pieces = name_pieces(f);
                self.write_assoc(&pieces, args, out);
            }
        }
    }

    fn write_assoc(&self, pieces: &[Piece], args: &[Term], out: &mut String) {
        // binary pattern `_ op _` applied to n children
        let sep: Vec<Piece> = pieces[1..pieces.len().saturating_sub(1)].to_vec();
        let mut expanded = Vec::new();
        for i in 0..args.len() {
            if i > 0 {
                expanded.extend(sep.iter().cloned());
            }
            expanded.push(Piece::Hole);
        }
        self.write_pieces(&expanded, args, out);
    }

    fn write_pieces(&self, pieces: &[Piece], args: &[Term], out: &mut String) {
        let mut frags: Vec<String> = Vec::new();
        let mut k = 0;
        for (i, p) in pieces.iter().enumerate() {
            match p {
                Piece::Tok(s) => frags.push(s.clone()),
                Piece::Hole => {
                    let interior = pieces[..i].iter().any(|q| matches!(q, Piece::Tok(_)))
                        && pieces[i + 1..].iter().any(|q| matches!(q, Piece::Tok(_)));
                    let interior = interior
                        && matches!(pieces.first(), Some(Piece::Tok(_)))
                        && matches!(pieces.last(), Some(Piece::Tok(_)));
                    let a = &args[k];
                    k += 1;
                    let mut s = String::new();
                    if !interior && Printer::is_open(a) {
                        s.push('(');
                        self.write(a, &mut s);
                        s.push(')');
                    } else {
                        self.write(a, &mut s);
                    }
                    frags.push(s);
                }
            }
        }
        for (i, fr) in frags.iter().enumerate() {
            if i > 0 {
                let prev = &frags[i - 1];
                if !(fr == "," || fr == ")" || prev == "(") {
                    out.push(' ');
                }
            }
            out.push_str(fr);
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&Printer::default().print(self))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&Printer::inline().print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_split_specials() {
        assert_eq!(name_pieces("lmoving|_"), vec![Piece::Tok("lmoving".into()), Piece::Tok("|".into()), Piece::Hole]);
        assert_eq!(name_pieces("__"), vec![Piece::Hole, Piece::Hole]);
        assert_eq!(name_pieces("2moving|_")[0], Piece::Tok("2moving".into()));
    }

    #[test]
    fn prints_mixfix_shapes() {
        let d = Term::var("D", "Int");
        let t = Term::app("lmoving|_", vec![d.clone()]);
        assert_eq!(t.to_string(), "lmoving | D");
        let tup = Term::app("<_,_,_>", vec![Term::constant("moving"), Term::constant("stopped"), t.clone()]);
        assert_eq!(tup.to_string(), "< moving, stopped, lmoving | D >");
        let p = Term::app("isLMoving@_", vec![t]);
        assert_eq!(p.to_string(), "isLMoving @ (lmoving | D)");
        let m = Term::app("_-_", vec![d, Term::int(1)]);
        assert_eq!(m.to_string(), "D - 1");
        let pair = Term::app("(_,_)", vec![Term::int(0), Term::int(5)]);
        assert_eq!(pair.to_string(), "(0, 5)");
        assert_eq!(Term::app("crit", vec![Term::int(1)]).to_string(), "crit(1)");
    }

    #[test]
    fn order_is_name_arity_children() {
        let a = Term::app("f", vec![Term::int(2)]);
        let b = Term::app("f", vec![Term::int(10)]);
        let c = Term::app("g", vec![]);
        assert!(a < b);
        assert!(b < c);
        assert!(Term::int(-3) < Term::boolean(false));
    }
}
