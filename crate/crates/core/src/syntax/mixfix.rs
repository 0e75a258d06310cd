//! Chart parser for mixfix terms over a signature.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use super::diag::{code, Diagnostic, Span};
use super::lexer::Tok;
use crate::kernel::signature::{Gather, KindId, Signature};
use crate::kernel::term::{syntax_pieces, Piece, Term, Var};

/// Precedence of user operators that declare none.
pub const DEFAULT_PREC: u32 = 41;

#[derive(Clone, Debug)]
struct Syn {
    name: String,
    arity: usize,
    pieces: Vec<Piece>,
    prec: u32,
    /// Per hole: `None` means unrestricted.
    gather: Vec<Option<Gather>>,
}

/// Operator syntax table for one signature.
#[derive(Clone, Debug)]
pub struct Grammar {
    syns: Vec<Syn>,
    /// Indices by leading token; `None` key for operators starting with a hole.
    by_first: HashMap<Option<String>, Vec<usize>>,
    words: HashSet<String>,
}

impl Grammar {
    pub fn new(sig: &Signature) -> Grammar {
        let mut syns: Vec<Syn> = Vec::new();
        let mut seen = HashSet::new();
        for f in sig.all_families() {
            if !seen.insert((f.name.clone(), f.arity)) {
                continue;
            }
            let pieces = syntax_pieces(&f.name, f.arity);
            let holes = pieces.iter().filter(|p| **p == Piece::Hole).count();
            if holes != f.arity {
                continue;
            }
            let closed = matches!(pieces.first(), Some(Piece::Tok(_))) && matches!(pieces.last(), Some(Piece::Tok(_)));
            let prec = f.attrs.prec.unwrap_or(if closed { 0 } else { DEFAULT_PREC });
            let gather: Vec<Option<Gather>> = match &f.attrs.gather {
                Some(g) if g.len() == holes => g.iter().map(|x| Some(*x)).collect(),
                _ => {
                    let mut k = 0;
                    let n = pieces.len();
                    pieces
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p == Piece::Hole)
                        .map(|(i, _)| {
                            k += 1;
                            let boundary = i == 0 || i == n - 1;
                            if !boundary {
                                None
                            } else if f.attrs.assoc && k == 1 {
                                Some(Gather::Le)
                            } else {
                                Some(Gather::Lt)
                            }
                        })
                        .collect()
                }
            };
            syns.push(Syn { name: f.name.to_string(), arity: f.arity, pieces, prec, gather });
        }
        let mut by_first: HashMap<Option<String>, Vec<usize>> = HashMap::new();
        let mut words = HashSet::new();
        for (i, s) in syns.iter().enumerate() {
            let key = match &s.pieces[0] {
                Piece::Tok(t) => Some(t.clone()),
                Piece::Hole => None,
            };
            by_first.entry(key).or_default().push(i);
            for p in &s.pieces {
                if let Piece::Tok(t) = p {
                    words.insert(t.clone());
                }
            }
        }
        Grammar { syns, by_first, words }
    }
}

pub struct TermParser<'a> {
    pub sig: &'a Signature,
    pub grammar: &'a Grammar,
    pub vars: &'a HashMap<String, Var>,
}

type Cands = Rc<Vec<(Term, u32)>>;

const MAX_CANDS: usize = 64;

struct Chart<'a, 'b> {
    p: &'b TermParser<'a>,
    toks: &'b [Tok],
    memo: HashMap<(usize, usize), Cands>,
    /// Matching close bracket for each open bracket.
    close: Vec<Option<usize>>,
}

fn is_int(s: &str) -> bool {
    let d = s.strip_prefix('-').unwrap_or(s);
    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
}

impl<'a> TermParser<'a> {
    fn atom(&self, text: &str) -> Option<Term> {
        if is_int(text) {
            return text.parse::<i64>().ok().map(Term::int);
        }
        match text {
            "true" => return Some(Term::boolean(true)),
            "false" => return Some(Term::boolean(false)),
            _ => {}
        }
        if let Some(v) = self.vars.get(text) {
            return Some(Term::from_var(v.clone()));
        }
        if let Some((name, sort)) = text.rsplit_once(':') {
            if !name.is_empty() && !sort.is_empty() && self.sig.sort_ref(sort).is_some() {
                return Some(Term::var(name, sort));
            }
        }
        None
    }

    fn build(&self, name: &str, args: Vec<Term>) -> Option<Term> {
        let kinds: Vec<KindId> = args.iter().map(|a| self.sig.kind_of(a).ok()).collect::<Option<_>>()?;
        let fams = self.sig.families(name, args.len());
        let fam = fams.iter().map(|f| self.sig.family(*f)).find(|f| {
            if f.poly {
                kinds.windows(2).all(|w| w[0] == w[1])
            } else {
                f.arg_kinds == kinds
            }
        })?;
        if fam.is_ac() {
            Some(self.sig.canonical_root(&fam.name, args))
        } else {
            Some(Term::app(fam.name.clone(), args))
        }
    }

    /// Parses a token run; `expected` filters candidates by kind.
    pub fn parse(&self, toks: &[Tok], expected: Option<KindId>) -> Result<Term, Diagnostic> {
        let span = match (toks.first(), toks.last()) {
            (Some(a), Some(b)) => a.span.join(b.span),
            _ => Span::default(),
        };
        if toks.is_empty() {
            return Err(Diagnostic::error(code::NO_PARSE, "expected a term", Some(span)));
        }
        let mut close = vec![None; toks.len()];
        let mut stack = Vec::new();
        for (i, t) in toks.iter().enumerate() {
            match t.text.as_str() {
                "(" => stack.push(i),
                ")" => {
                    if let Some(o) = stack.pop() {
                        close[o] = Some(i);
                    } else {
                        return Err(Diagnostic::error(code::NO_PARSE, "unbalanced ')'", Some(t.span)));
                    }
                }
                _ => {}
            }
        }
        if let Some(o) = stack.pop() {
            return Err(Diagnostic::error(code::NO_PARSE, "unbalanced '('", Some(toks[o].span)));
        }
        let mut chart = Chart { p: self, toks, memo: HashMap::new(), close };
        let cands = chart.span(0, toks.len());
        let mut found: Vec<Term> = Vec::new();
        for (t, _) in cands.iter() {
            if let Some(k) = expected {
                if self.sig.kind_of(t).ok() != Some(k) {
                    continue;
                }
            }
            if !found.contains(t) {
                found.push(t.clone());
            }
        }
        match found.len() {
            1 => Ok(found.pop().unwrap()),
            0 => {
                let text: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
                if let Some(bad) = toks.iter().find(|t| {
                    !self.grammar.words.contains(&t.text)
                        && self.atom(&t.text).is_none()
                        && !matches!(t.text.as_str(), "(" | ")")
                }) {
                    let what = if bad.text.contains(':') {
                        "variable with unknown sort"
                    } else {
                        "unknown operator or variable"
                    };
                    return Err(Diagnostic::error(
                        code::NO_PARSE,
                        format!("{what} '{}' in '{}'", bad.text, text.join(" ")),
                        Some(bad.span),
                    ));
                }
                let msg = if cands.is_empty() {
                    format!("no parse for '{}'", text.join(" "))
                } else {
                    format!("'{}' has no parse of the expected kind", text.join(" "))
                };
                Err(Diagnostic::error(code::NO_PARSE, msg, Some(span)))
            }
            _ => {
                let shown: Vec<String> = found.iter().take(3).map(|t| format!("{t:?}")).collect();
                Err(Diagnostic::error(
                    code::AMBIGUOUS,
                    format!("ambiguous term, add parentheses; parses include {}", shown.join(" and ")),
                    Some(span),
                ))
            }
        }
    }
}

impl Chart<'_, '_> {
    fn span(&mut self, i: usize, j: usize) -> Cands {
        if let Some(c) = self.memo.get(&(i, j)) {
            return c.clone();
        }
        // guards left recursion through holes at the span start
        self.memo.insert((i, j), Rc::new(vec![]));
        let mut out: Vec<(Term, u32)> = Vec::new();
        let push = |out: &mut Vec<(Term, u32)>, t: Term, p: u32| {
            if out.len() < MAX_CANDS && !out.iter().any(|(u, q)| *u == t && *q == p) {
                out.push((t, p));
            }
        };
        if j == i + 1 {
            if let Some(t) = self.p.atom(&self.toks[i].text) {
                push(&mut out, t, 0);
            }
        }
        if self.toks[i].is("(") && self.close[i] == Some(j - 1) && j - i > 2 {
            let inner = self.span(i + 1, j - 1);
            for (t, _) in inner.iter() {
                push(&mut out, t.clone(), 0);
            }
        }
        let mut ops: Vec<usize> =
            self.p.grammar.by_first.get(&Some(self.toks[i].text.clone())).cloned().unwrap_or_default();
        ops.extend(self.p.grammar.by_first.get(&None).cloned().unwrap_or_default());
        for oi in ops {
            let syn = &self.p.grammar.syns[oi];
            if let Some(Piece::Tok(last)) = syn.pieces.last() {
                if self.toks[j - 1].text != *last {
                    continue;
                }
            }
            if syn.pieces.len() > j - i && syn.arity > 0 {
                continue;
            }
            let mut assigns = Vec::new();
            self.fit(&syn.pieces, 0, i, j, &mut vec![], &mut assigns);
            let syn = syn.clone();
            for holes in assigns {
                let mut per: Vec<Vec<Term>> = Vec::new();
                let mut ok = true;
                for (k, (a, b)) in holes.iter().enumerate() {
                    let c = self.span(*a, *b);
                    let admissible: Vec<Term> = c
                        .iter()
                        .filter(|(_, q)| match syn.gather[k] {
                            None => true,
                            Some(Gather::Le) => *q <= syn.prec,
                            Some(Gather::Lt) => *q < syn.prec,
                        })
                        .map(|(t, _)| t.clone())
                        .collect();
                    if admissible.is_empty() {
                        ok = false;
                        break;
                    }
                    per.push(admissible);
                }
                if !ok {
                    continue;
                }
                let mut combos: Vec<Vec<Term>> = vec![vec![]];
                for opts in &per {
                    let mut next = Vec::new();
                    for c in &combos {
                        for o in opts {
                            if next.len() >= MAX_CANDS {
                                break;
                            }
                            let mut v = c.clone();
                            v.push(o.clone());
                            next.push(v);
                        }
                    }
                    combos = next;
                }
                for args in combos {
                    if let Some(t) = self.p.build(&syn.name, args) {
                        push(&mut out, t, syn.prec);
                    }
                }
            }
        }
        let rc = Rc::new(out);
        self.memo.insert((i, j), rc.clone());
        rc
    }

    /// Enumerates hole spans for `pieces` covering exactly `[pos, end)`.
    fn fit(
        &self,
        pieces: &[Piece],
        k: usize,
        pos: usize,
        end: usize,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if k == pieces.len() {
            if pos == end {
                out.push(cur.clone());
            }
            return;
        }
        if pos >= end {
            return;
        }
        match &pieces[k] {
            Piece::Tok(t) => {
                if self.toks[pos].text == *t {
                    self.fit(pieces, k + 1, pos + 1, end, cur, out);
                }
            }
            Piece::Hole => {
                if k + 1 == pieces.len() {
                    cur.push((pos, end));
                    out.push(cur.clone());
                    cur.pop();
                    return;
                }
                let next_tok = match &pieces[k + 1] {
                    Piece::Tok(t) => Some(t),
                    Piece::Hole => None,
                };
                let mut q = pos + 1;
                while q < end {
                    if next_tok.is_none_or(|t| self.toks[q].text == *t) {
                        cur.push((pos, q));
                        self.fit(pieces, k + 1, q, end, cur, out);
                        cur.pop();
                    }
                    // skip over a bracketed group: holes never split one
                    if self.toks[q].is("(") {
                        if let Some(c) = self.close[q] {
                            q = c + 1;
                            continue;
                        }
                    }
                    q += 1;
                }
            }
        }
    }
}
