//! Module grammar. Terms are kept as token runs and parsed later against the
//! module's signature.

use super::diag::{code, Diagnostic, Span};
use super::lexer::{lex, Tok};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModKind {
    /// `mod ... endm`: egalitarian, atomic or composed.
    Egal,
    /// `pmod ... endm`: plain.
    Plain,
}

#[derive(Clone, Debug)]
pub struct ModuleAst {
    pub name: String,
    pub kind: ModKind,
    pub span: Span,
    pub items: Vec<Item>,
}

#[derive(Clone, Debug)]
pub struct Item {
    pub kind: ItemKind,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum CondAst {
    Eq(Vec<Tok>, Vec<Tok>),
    Match(Vec<Tok>, Vec<Tok>),
    Sort(Vec<Tok>, String),
    /// A boolean term, read as `t = true`.
    Bool(Vec<Tok>),
}

#[derive(Clone, Debug)]
pub enum LabelAst {
    Term(Vec<Tok>),
    /// `=[*]=>`: synthesize a transition constant.
    Auto,
}

#[derive(Clone, Debug)]
pub enum ItemKind {
    Import(String),
    Compose {
        parts: Vec<(String, Span)>,
    },
    Sync(Vec<(String, String, Span)>),
    Sorts(Vec<String>),
    /// Chains `A B < C < D`.
    Subsorts(Vec<Vec<String>>),
    Ops {
        names: Vec<String>,
        args: Vec<String>,
        result: String,
        attrs: Vec<Tok>,
    },
    Vars {
        names: Vec<String>,
        sort: String,
    },
    Prop {
        name: String,
        codomain: String,
        total: bool,
    },
    Eq {
        lhs: Vec<Tok>,
        rhs: Vec<Tok>,
        conds: Vec<CondAst>,
        owise: bool,
    },
    Mb {
        subject: Vec<Tok>,
        sort: String,
        conds: Vec<CondAst>,
    },
    Rule {
        lhs: Vec<Tok>,
        label: Option<LabelAst>,
        rhs: Vec<Tok>,
        conds: Vec<CondAst>,
    },
    Component(Box<ModuleAst>),
}

#[derive(Clone, Debug, Default)]
pub struct SourceUnit {
    pub path: Option<String>,
    pub modules: Vec<ModuleAst>,
}

struct P<'a> {
    toks: &'a [Tok],
    pos: usize,
    diags: Vec<Diagnostic>,
}

type PResult<T> = std::result::Result<T, Diagnostic>;

fn err(msg: impl Into<String>, span: Span) -> Diagnostic {
    Diagnostic::error(code::SYNTAX, msg, Some(span))
}

fn span_of(ts: &[Tok]) -> Span {
    match (ts.first(), ts.last()) {
        (Some(a), Some(b)) => a.span.join(b.span),
        _ => Span::default(),
    }
}

/// Index of the first token equal to `s` at bracket depth 0.
fn find_top(ts: &[Tok], s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in ts.iter().enumerate() {
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            _ => {}
        }
        if depth == 0 && t.text == s {
            return Some(i);
        }
    }
    None
}

fn rfind_top(ts: &[Tok], s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for i in (0..ts.len()).rev() {
        match ts[i].text.as_str() {
            ")" | "]" | "}" => depth += 1,
            "(" | "[" | "{" => depth -= 1,
            _ => {}
        }
        if depth == 0 && ts[i].text == s {
            return Some(i);
        }
    }
    None
}

pub fn split_top<'t>(ts: &'t [Tok], sep: &str) -> Vec<&'t [Tok]> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in ts.iter().enumerate() {
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            _ => {}
        }
        if depth == 0 && t.text == sep {
            out.push(&ts[start..i]);
            start = i + 1;
        }
    }
    out.push(&ts[start..]);
    out
}

/// Splits at `||`, which lexes as two glued `|` tokens.
fn split_bars(ts: &[Tok]) -> Vec<&[Tok]> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut i = 0;
    while i < ts.len() {
        match ts[i].text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            _ => {}
        }
        if depth == 0 && ts[i].is("|") && ts.get(i + 1).is_some_and(|t| t.is("|") && t.glued) {
            out.push(&ts[start..i]);
            start = i + 2;
            i += 2;
            continue;
        }
        i += 1;
    }
    out.push(&ts[start..]);
    out
}

/// Joins glued tokens: `lmoving|_` lexes as three tokens but names one operator.
fn glue_words(ts: &[Tok]) -> Vec<(String, Span)> {
    let mut out: Vec<(String, Span)> = Vec::new();
    for t in ts {
        match out.last_mut() {
            Some((w, s)) if t.glued => {
                w.push_str(&t.text);
                *s = s.join(t.span);
            }
            _ => out.push((t.text.clone(), t.span)),
        }
    }
    out
}

/// A sort name or kind `[S]` / `[S,T]`.
fn sort_words(ts: &[Tok]) -> PResult<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < ts.len() {
        if ts[i].is("[") {
            let close = ts[i..]
                .iter()
                .position(|t| t.is("]"))
                .map(|k| k + i)
                .ok_or_else(|| err("unclosed '[' in sort", ts[i].span))?;
            let inner: String = ts[i + 1..close].iter().map(|t| t.text.as_str()).collect();
            out.push(format!("[{inner}]"));
            i = close + 1;
        } else {
            out.push(ts[i].text.clone());
            i += 1;
        }
    }
    Ok(out)
}

fn one_sort(ts: &[Tok], what: &str) -> PResult<String> {
    let v = sort_words(ts)?;
    if v.len() != 1 {
        return Err(err(format!("expected one sort in {what}"), span_of(ts)));
    }
    Ok(v.into_iter().next().unwrap())
}

fn parse_conds(ts: &[Tok]) -> PResult<Vec<CondAst>> {
    let mut out = Vec::new();
    for c in split_top(ts, "/\\") {
        if c.is_empty() {
            // tolerate a doubled `/\`
            continue;
        }
        if let Some(i) = find_top(c, ":=") {
            out.push(CondAst::Match(c[..i].to_vec(), c[i + 1..].to_vec()));
        } else if let Some(i) = find_top(c, "=") {
            out.push(CondAst::Eq(c[..i].to_vec(), c[i + 1..].to_vec()));
        } else if let Some(i) = rfind_top(c, ":") {
            out.push(CondAst::Sort(c[..i].to_vec(), one_sort(&c[i + 1..], "sort test")?));
        } else {
            out.push(CondAst::Bool(c.to_vec()));
        }
    }
    Ok(out)
}

/// Trailing `[ ... ]` attribute block.
fn strip_attrs(ts: &[Tok]) -> (&[Tok], &[Tok]) {
    if ts.last().is_some_and(|t| t.is("]")) {
        if let Some(open) = rfind_top(ts, "[") {
            return (&ts[..open], &ts[open + 1..ts.len() - 1]);
        }
    }
    (ts, &[])
}

/// Splits `l if c` at the first top-level `if`.
fn split_if(ts: &[Tok]) -> (&[Tok], Option<&[Tok]>) {
    match find_top(ts, "if") {
        Some(i) => (&ts[..i], Some(&ts[i + 1..])),
        None => (ts, None),
    }
}

impl P<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn unit(&mut self) -> Vec<ModuleAst> {
        let mut mods = Vec::new();
        while let Some(t) = self.peek() {
            match t.text.as_str() {
                "mod" | "pmod" => match self.module() {
                    Ok(m) => mods.push(m),
                    Err(d) => {
                        self.diags.push(d);
                        self.skip_past("endm");
                    }
                },
                _ => {
                    let d = err(format!("expected 'mod' or 'pmod', found '{}'", t.text), t.span);
                    self.diags.push(d);
                    self.skip_past("endm");
                }
            }
        }
        mods
    }

    fn skip_past(&mut self, word: &str) {
        while let Some(t) = self.peek() {
            let hit = t.is(word);
            self.pos += 1;
            if hit {
                break;
            }
        }
    }

    fn expect_word(&mut self, what: &str) -> PResult<Tok> {
        match self.peek() {
            Some(t) => {
                let t = t.clone();
                self.pos += 1;
                Ok(t)
            }
            None => Err(err(format!("unexpected end of input, expected {what}"), self.end_span())),
        }
    }

    fn end_span(&self) -> Span {
        self.toks.last().map(|t| t.span).unwrap_or_default()
    }

    fn module(&mut self) -> PResult<ModuleAst> {
        let kw = self.expect_word("mod")?;
        let kind = if kw.is("pmod") { ModKind::Plain } else { ModKind::Egal };
        self.module_body(kind, kw.span, "endm")
    }

    fn module_body(&mut self, kind: ModKind, start: Span, end_kw: &str) -> PResult<ModuleAst> {
        let name = self.expect_word("module name")?;
        let is = self.expect_word("'is'")?;
        if !is.is("is") {
            return Err(err(format!("expected 'is' after module name, found '{}'", is.text), is.span));
        }
        let mut items = Vec::new();
        loop {
            let Some(t) = self.peek().cloned() else {
                return Err(err(format!("module {} is missing '{end_kw}'", name.text), name.span));
            };
            if t.is(end_kw) {
                self.pos += 1;
                return Ok(ModuleAst { name: name.text, kind, span: start.join(t.span), items });
            }
            if t.is("component") && kind == ModKind::Plain {
                self.pos += 1;
                match self.module_body(ModKind::Plain, t.span, "endc") {
                    Ok(m) => {
                        let span = m.span;
                        items.push(Item { kind: ItemKind::Component(Box::new(m)), span });
                    }
                    Err(d) => {
                        self.diags.push(d);
                        self.skip_past("endc");
                    }
                }
                continue;
            }
            // one statement up to the terminating `.`
            let begin = self.pos;
            let mut depth = 0i32;
            let mut end = None;
            while let Some(t) = self.toks.get(self.pos) {
                match t.text.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    "." if depth <= 0 => {
                        end = Some(self.pos);
                        break;
                    }
                    "endm" | "endc" => break,
                    _ => {}
                }
                self.pos += 1;
            }
            let Some(end) = end else {
                let ts = &self.toks[begin..self.pos];
                self.diags.push(err("statement is missing its terminating '.'", span_of(ts)));
                continue;
            };
            self.pos = end + 1;
            let stmt = &self.toks[begin..end];
            match statement(stmt, kind) {
                Ok(mut v) => items.append(&mut v),
                Err(d) => self.diags.push(d),
            }
        }
    }
}

fn statement(ts: &[Tok], kind: ModKind) -> PResult<Vec<Item>> {
    let span = span_of(ts);
    let Some(kw) = ts.first() else { return Err(err("empty statement", span)) };
    let body = &ts[1..];
    let item = |k: ItemKind| Ok(vec![Item { kind: k, span }]);
    match kw.text.as_str() {
        "pr" | "protecting" | "inc" | "including" => {
            let (head, sync) = match find_top(body, "sync") {
                Some(i) => (&body[..i], Some(&body[i..])),
                None => (body, None),
            };
            let parts: Vec<&[Tok]> = split_bars(head);
            let mut out = Vec::new();
            if parts.len() == 1 && sync.is_none() {
                let words = glue_words(parts[0]);
                if words.len() != 1 {
                    return Err(err("expected one module name after 'pr'", span));
                }
                out.push(Item { kind: ItemKind::Import(words[0].0.clone()), span });
                return Ok(out);
            }
            let mut names = Vec::new();
            for p in parts {
                let w = glue_words(p);
                if w.len() != 1 {
                    return Err(err("expected a module name between '||'", span_of(p)));
                }
                names.push(w[0].clone());
            }
            out.push(Item { kind: ItemKind::Compose { parts: names }, span });
            if let Some(s) = sync {
                out.push(Item { kind: ItemKind::Sync(sync_body(s)?), span: span_of(s) });
            }
            Ok(out)
        }
        "sync" => item(ItemKind::Sync(sync_body(ts)?)),
        "sort" | "sorts" => item(ItemKind::Sorts(sort_words(body)?)),
        "subsort" | "subsorts" => {
            let chain: Vec<Vec<String>> = split_top(body, "<").into_iter().map(sort_words).collect::<PResult<_>>()?;
            if chain.len() < 2 || chain.iter().any(|c| c.is_empty()) {
                return Err(err("expected 'subsort A < B'", span));
            }
            item(ItemKind::Subsorts(chain))
        }
        "op" | "ops" => {
            let colon = find_top(body, ":").ok_or_else(|| err("expected ':' in operator declaration", span))?;
            let names: Vec<String> = glue_words(&body[..colon]).into_iter().map(|w| w.0).collect();
            if names.is_empty() || (kw.is("op") && names.len() != 1) {
                return Err(err("expected one operator name after 'op' (use 'ops' for several)", span));
            }
            let rest = &body[colon + 1..];
            let arrow = find_top(rest, "->").ok_or_else(|| err("expected '->' in operator declaration", span))?;
            let args = sort_words(&rest[..arrow])?;
            let tail = &rest[arrow + 1..];
            // result sort, possibly a kind `[S]`, then an optional attribute block
            let res_len = if tail.first().is_some_and(|t| t.is("[")) {
                tail.iter().position(|t| t.is("]")).map(|k| k + 1).ok_or_else(|| err("unclosed '[' in sort", span))?
            } else {
                1.min(tail.len())
            };
            let result = one_sort(&tail[..res_len], "operator result")?;
            let extra = &tail[res_len..];
            let attrs: &[Tok] = if extra.is_empty() {
                &[]
            } else if extra.len() >= 2 && extra[0].is("[") && extra[extra.len() - 1].is("]") {
                &extra[1..extra.len() - 1]
            } else {
                return Err(err("expected '[ attributes ]' after the result sort", span_of(extra)));
            };
            item(ItemKind::Ops { names, args, result, attrs: attrs.to_vec() })
        }
        "var" | "vars" => {
            let colon = find_top(body, ":").ok_or_else(|| err("expected ':' in variable declaration", span))?;
            let names: Vec<String> = body[..colon].iter().map(|t| t.text.clone()).collect();
            if names.is_empty() {
                return Err(err("expected variable names", span));
            }
            item(ItemKind::Vars { names, sort: one_sort(&body[colon + 1..], "variable declaration")? })
        }
        "prop" | "props" => {
            let colon = find_top(body, ":").ok_or_else(|| err("expected 'prop name : Sort'", span))?;
            let (rest, attrs) = strip_attrs(&body[colon + 1..]);
            let total = attrs.iter().any(|t| t.is("total"));
            if let Some(a) = attrs.iter().find(|t| !t.is("total")) {
                return Err(err(format!("unknown property attribute '{}'", a.text), a.span));
            }
            let names = glue_words(&body[..colon]);
            if names.is_empty() || (kw.is("prop") && names.len() != 1) {
                return Err(err("expected one property name after 'prop' (use 'props' for several)", span));
            }
            let codomain = one_sort(rest, "property codomain")?;
            Ok(names
                .into_iter()
                .map(|(name, _)| Item { kind: ItemKind::Prop { name, codomain: codomain.clone(), total }, span })
                .collect())
        }
        "eq" | "ceq" => {
            let (main, attrs) = strip_attrs(body);
            let owise = attrs.iter().any(|t| t.is("otherwise") || t.is("owise"));
            if let Some(a) = attrs.iter().find(|t| !(t.is("otherwise") || t.is("owise"))) {
                return Err(err(format!("unknown equation attribute '{}'", a.text), a.span));
            }
            let eqi = find_top(main, "=").ok_or_else(|| err("expected '=' in equation", span))?;
            let lhs = &main[..eqi];
            let (rhs, cond) = split_if(&main[eqi + 1..]);
            if kw.is("eq") && cond.is_some() {
                return Err(err("conditional equations use 'ceq'", span));
            }
            if kw.is("ceq") && cond.is_none() {
                return Err(err("'ceq' needs an 'if' part", span));
            }
            let conds = cond.map(parse_conds).transpose()?.unwrap_or_default();
            item(ItemKind::Eq { lhs: lhs.to_vec(), rhs: rhs.to_vec(), conds, owise })
        }
        "mb" | "cmb" => {
            let (main, cond) = split_if(body);
            let colon = rfind_top(main, ":").ok_or_else(|| err("expected ':' in membership", span))?;
            let conds = cond.map(parse_conds).transpose()?.unwrap_or_default();
            if kw.is("cmb") != cond.is_some() {
                return Err(err("conditional memberships use 'cmb ... if ...'", span));
            }
            item(ItemKind::Mb {
                subject: main[..colon].to_vec(),
                sort: one_sort(&main[colon + 1..], "membership")?,
                conds,
            })
        }
        "rl" | "crl" => rule(kw, body, kind, span),
        other => Err(err(format!("unknown statement keyword '{other}'"), kw.span)),
    }
}

fn sync_body(ts: &[Tok]) -> PResult<Vec<(String, String, Span)>> {
    let span = span_of(ts);
    if !(ts.len() >= 2 && ts[0].is("sync") && ts[1].is("on")) {
        return Err(err("expected 'sync on'", span));
    }
    let mut out = Vec::new();
    for c in split_top(&ts[2..], "/\\") {
        let i = find_top(c, "=").ok_or_else(|| err("expected 'A.p = B.q' in synchronization criterion", span_of(c)))?;
        let l = glue_words(&c[..i]);
        let r = glue_words(&c[i + 1..]);
        if l.len() != 1 || r.len() != 1 {
            return Err(err("a criterion relates two component-qualified properties", span_of(c)));
        }
        out.push((l[0].0.clone(), r[0].0.clone(), span_of(c)));
    }
    Ok(out)
}

fn rule(kw: &Tok, body: &[Tok], kind: ModKind, span: Span) -> PResult<Vec<Item>> {
    let (main, cond) = split_if(body);
    if kw.is("rl") && cond.is_some() {
        return Err(err("conditional rules use 'crl'", span));
    }
    if kw.is("crl") && cond.is_none() {
        return Err(err("'crl' needs an 'if' part", span));
    }
    let conds = cond.map(parse_conds).transpose()?.unwrap_or_default();
    // egalitarian form `l =[ t ]=> r`
    let open = main.windows(2).position(|w| w[0].is("=") && w[1].is("[") && w[1].glued);
    if let Some(o) = open {
        let close = main
            .windows(2)
            .rposition(|w| w[0].is("]") && w[1].is("=>") && w[1].glued)
            .ok_or_else(|| err("expected ']=>' after the transition term", span))?;
        if close < o + 2 {
            return Err(err("malformed '=[ ... ]=>'", span));
        }
        if kind == ModKind::Plain {
            return Err(err("plain modules have unlabeled rules 'rl l => r'", span));
        }
        let label_toks = &main[o + 2..close];
        let label = if label_toks.len() == 1 && label_toks[0].is("*") {
            LabelAst::Auto
        } else if label_toks.is_empty() {
            return Err(Diagnostic::error(code::LABEL_REQUIRED, "empty transition term", Some(span)));
        } else {
            LabelAst::Term(label_toks.to_vec())
        };
        return Ok(vec![Item {
            kind: ItemKind::Rule {
                lhs: main[..o].to_vec(),
                label: Some(label),
                rhs: main[close + 2..].to_vec(),
                conds,
            },
            span,
        }]);
    }
    let arrow = find_top(main, "=>").ok_or_else(|| err("expected '=>' or '=[ t ]=>' in rule", span))?;
    if kind == ModKind::Egal {
        let hint = if main.first().is_some_and(|t| t.is("[")) {
            let name = main.get(1).map(|t| t.text.as_str()).unwrap_or("t");
            format!("egalitarian rules need a transition term: write 'rl lhs =[ {name} ]=> rhs', or '=[*]=>' for a fresh constant")
        } else {
            "egalitarian rules need a transition term: write 'rl lhs =[ t ]=> rhs', or '=[*]=>' for a fresh constant"
                .to_string()
        };
        return Err(Diagnostic::error(code::LABEL_REQUIRED, hint, Some(span)));
    }
    Ok(vec![Item {
        kind: ItemKind::Rule { lhs: main[..arrow].to_vec(), label: None, rhs: main[arrow + 1..].to_vec(), conds },
        span,
    }])
}

pub fn parse_source(text: &str, path: Option<&str>) -> (SourceUnit, Vec<Diagnostic>) {
    let toks = lex(text);
    let mut p = P { toks: &toks, pos: 0, diags: vec![] };
    let modules = p.unit();
    let mut diags = p.diags;
    for d in &mut diags {
        d.file = path.map(|s| s.to_string());
    }
    (SourceUnit { path: path.map(|s| s.to_string()), modules }, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rules_and_labels() {
        let (u, d) = parse_source("mod T is op s : -> State . op m : -> Trans . rl s =[ m ]=> s . endm", None);
        assert!(d.is_empty(), "{d:?}");
        let m = &u.modules[0];
        assert!(matches!(&m.items[2].kind, ItemKind::Rule { label: Some(LabelAst::Term(t)), .. } if t[0].is("m")));
    }

    #[test]
    fn unlabeled_rule_needs_label() {
        let (_, d) = parse_source("mod T is rl a => b . rl [r] : a => b . endm", None);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|x| x.code == code::LABEL_REQUIRED));
        assert!(d[1].message.contains("=[ r ]=>"));
    }

    #[test]
    fn recovers_after_bad_statement() {
        let (u, d) = parse_source("mod T is sort . frob x . sorts A B . endm", None);
        assert_eq!(d.len(), 1);
        assert!(
            matches!(&u.modules[0].items[..], [Item { kind: ItemKind::Sorts(s), .. }, Item { kind: ItemKind::Sorts(t), .. }] if s.is_empty() && t.len() == 2)
        );
    }

    #[test]
    fn composition_block() {
        let src = "mod C is pr A || B || K sync on A.p = K.q /\\ B.p = K.r . endm";
        let (u, d) = parse_source(src, None);
        assert!(d.is_empty(), "{d:?}");
        let items = &u.modules[0].items;
        assert!(matches!(&items[0].kind, ItemKind::Compose { parts } if parts.len() == 3));
        assert!(matches!(&items[1].kind, ItemKind::Sync(c) if c.len() == 2 && c[0].0 == "A.p"));
    }
}
