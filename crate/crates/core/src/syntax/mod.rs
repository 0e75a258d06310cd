//! Surface language: lexing, module parsing, mixfix terms, resolution and
//! printing back to source.

pub mod diag;
pub mod lexer;
pub mod mixfix;
pub mod parser;
pub mod pretty;
pub mod resolve;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

pub use diag::{Diagnostic, Severity, Span};
pub use resolve::Resolved;

use crate::error::{Error, Result};
use crate::explore::{AtomicSemantics, ComposedSemantics, Semantics};
use crate::kernel::signature::KindId;
use crate::kernel::term::Term;
use crate::mel::Theory;
use crate::split::{PlainModule, PlainSemantics};
use mixfix::{Grammar, TermParser};

/// Every module of a set of sources, plus what went wrong loading them.
#[derive(Debug, Default)]
pub struct Loaded {
    pub modules: BTreeMap<String, Resolved>,
    /// Declaration order across all sources.
    pub order: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Loaded {
    pub fn get(&self, name: &str) -> Result<&Resolved> {
        self.modules.get(name).ok_or_else(|| {
            if self.order.iter().any(|n| n == name) {
                Error::Resolve(format!("module {name} did not load; see the diagnostics"))
            } else {
                Error::Resolve(format!("unknown module {name}"))
            }
        })
    }

    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.is_error())
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }
}

/// Loads `(path, text)` pairs together, so modules may refer across files.
pub fn load_sources(sources: &[(Option<String>, String)]) -> Loaded {
    let mut diags = Vec::new();
    let mut units = Vec::new();
    for (path, text) in sources {
        let (u, d) = parser::parse_source(text, path.as_deref());
        diags.extend(d);
        units.push(u);
    }
    let (modules, order, d) = resolve::resolve_units(&units);
    diags.extend(d);
    Loaded { modules, order, diagnostics: diags }
}

pub fn load_str(text: &str) -> Loaded {
    load_sources(&[(None, text.to_string())])
}

pub fn load_files<P: AsRef<Path>>(paths: &[P]) -> std::io::Result<Loaded> {
    let mut sources = Vec::new();
    for p in paths {
        let p = p.as_ref();
        sources.push((Some(p.display().to_string()), std::fs::read_to_string(p)?));
    }
    Ok(load_sources(&sources))
}

/// Loads sources that must be free of errors; the message lists them all.
pub fn load_ok(text: &str) -> Result<Loaded> {
    let l = load_str(text);
    if l.has_errors() {
        let msg = l.errors().map(|d| d.to_string()).collect::<Vec<_>>().join("\n");
        return Err(Error::Syntax(msg));
    }
    Ok(l)
}

impl Resolved {
    pub fn semantics(&self) -> Box<dyn Semantics + '_> {
        match self {
            Resolved::Atomic(m) => Box::new(AtomicSemantics(m.clone())),
            Resolved::Composed(c) => Box::new(ComposedSemantics(c.clone())),
            Resolved::Plain(p) => Box::new(PlainSemantics(p)),
        }
    }
}

fn syntax_err(d: Diagnostic) -> Error {
    Error::Syntax(d.to_string())
}

/// Parses a term in a theory; variables must be written inline as `X:Sort`.
pub fn parse_term(th: &Theory, text: &str, expected: Option<KindId>) -> Result<Term> {
    let toks = lexer::lex(text);
    if toks.is_empty() {
        return Err(Error::Syntax("empty term".into()));
    }
    let sig = th.sig();
    let g = Grammar::new(sig);
    let vars = HashMap::new();
    let t = TermParser { sig, grammar: &g, vars: &vars }.parse(&toks, expected).map_err(syntax_err)?;
    Ok(sig.canonicalize(&t))
}

/// A pattern for search and invariants. Ground patterns are normalized so
/// they match the normal forms the explorer produces.
pub fn parse_pattern(th: &Theory, text: &str) -> Result<Term> {
    let t = parse_term(th, text, None)?;
    th.sig().check_pattern(&t)?;
    if t.is_ground() {
        th.normalize(&t)
    } else {
        Ok(t)
    }
}

fn tuple_parts(text: &str) -> Option<Vec<String>> {
    let toks = lexer::lex(text);
    if toks.len() < 2 || !toks[0].is("<") || !toks[toks.len() - 1].is(">") {
        return None;
    }
    let inner = &toks[1..toks.len() - 1];
    let parts = parser::split_top(inner, ",");
    Some(
        parts
            .iter()
            .map(|p| match (p.first(), p.last()) {
                (Some(a), Some(b)) => text[a.span.start..b.span.end].to_string(),
                _ => String::new(),
            })
            .collect(),
    )
}

/// Parses and normalizes a ground stage of a module. Composed and product
/// stages are written `< t1, ..., tn >`, one part per component.
pub fn parse_stage(m: &Resolved, text: &str) -> Result<Term> {
    let per_part = |theories: Vec<&Theory>, mk: &dyn Fn(Vec<Term>) -> Term| -> Result<Term> {
        let parts = tuple_parts(text)
            .ok_or_else(|| Error::Syntax(format!("expected a tuple of {} parts: < ..., ... >", theories.len())))?;
        if parts.len() != theories.len() {
            return Err(Error::Syntax(format!("expected {} tuple parts, found {}", theories.len(), parts.len())));
        }
        let mut out = Vec::new();
        for (th, p) in theories.iter().zip(parts) {
            let t = parse_term(th, &p, None)?;
            out.push(th.normalize(&t)?);
        }
        Ok(mk(out))
    };
    match m {
        Resolved::Atomic(a) => {
            let t = parse_term(&a.theory, text, None)?;
            a.theory.normalize(&t)
        }
        Resolved::Plain(p) => match &**p {
            PlainModule::Flat(f) => {
                let t = parse_term(&f.theory, text, None)?;
                f.theory.normalize(&t)
            }
            PlainModule::Product(pp) => per_part(pp.leaves.iter().map(|l| &l.theory).collect(), &|v| pp.tuple(v)),
        },
        Resolved::Composed(c) => per_part(c.leaves().iter().map(|l| &l.module.theory).collect(), &|v| c.tuple(v)),
    }
}

impl Resolved {
    /// The plain form of an egalitarian module.
    pub fn split(&self) -> Result<PlainModule> {
        match self {
            Resolved::Atomic(a) => {
                if let Some(op) = a.check_topmost().first() {
                    return Err(Error::Decl(format!("{} is not topmost (operator {op}); it cannot be split", a.name)));
                }
                Ok(PlainModule::Flat(crate::split::split_atomic(a)?))
            }
            Resolved::Composed(c) => Ok(PlainModule::Product(crate::split::split_composed(c)?)),
            Resolved::Plain(_) => Err(Error::Decl(format!("{} is already a plain module", self.name()))),
        }
    }
}
