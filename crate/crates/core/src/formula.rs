//! Boolean state formulas for invariants and search goals.

use crate::error::{Error, Result};
use crate::kernel::term::Term;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Const(bool),
    /// A boolean property; UNDEFINED reads as false.
    Prop(String),
    /// `path == lit` or `path != lit`; UNDEFINED satisfies neither.
    Cmp {
        path: String,
        lit: Term,
        eq: bool,
    },
    /// `COMP{pattern}`, or `{pattern}` for the whole stage.
    Pattern {
        component: Option<String>,
        text: String,
    },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    Not,
    And,
    Or,
    Implies,
    EqEq,
    NotEq,
    Word(String),
    Braced(String),
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | '-' | '_' | '\'' | '$' | '#')
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let cs: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two: String = cs[i..(i + 2).min(cs.len())].iter().collect();
        match two.as_str() {
            "&&" => {
                out.push(Tok::And);
                i += 2;
                continue;
            }
            "||" => {
                out.push(Tok::Or);
                i += 2;
                continue;
            }
            "==" => {
                out.push(Tok::EqEq);
                i += 2;
                continue;
            }
            "!=" => {
                out.push(Tok::NotEq);
                i += 2;
                continue;
            }
            "->" => {
                out.push(Tok::Implies);
                i += 2;
                continue;
            }
            _ => {}
        }
        match c {
            '(' => out.push(Tok::LParen),
            ')' => out.push(Tok::RParen),
            '!' => out.push(Tok::Not),
            '{' => {
                let mut depth = 1;
                let start = i + 1;
                let mut j = start;
                while j < cs.len() {
                    match cs[j] {
                        '{' => depth += 1,
                        '}' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                if j >= cs.len() {
                    return Err(Error::Syntax("unclosed '{' in formula".into()));
                }
                out.push(Tok::Braced(cs[start..j].iter().collect::<String>().trim().to_string()));
                i = j + 1;
                continue;
            }
            _ if is_word_char(c) => {
                let start = i;
                while i < cs.len() && is_word_char(cs[i]) {
                    i += 1;
                }
                let w: String = cs[start..i].iter().collect();
                out.push(match w.as_str() {
                    "not" => Tok::Not,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "implies" => Tok::Implies,
                    _ => Tok::Word(w),
                });
                continue;
            }
            _ => return Err(Error::Syntax(format!("unexpected character '{c}' in formula"))),
        }
        i += 1;
    }
    Ok(out)
}

struct P {
    toks: Vec<Tok>,
    pos: usize,
}

impl P {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }
    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }
    fn implies(&mut self) -> Result<Formula> {
        let l = self.or()?;
        if self.peek() == Some(&Tok::Implies) {
            self.pos += 1;
            let r = self.implies()?;
            return Ok(Formula::Implies(Box::new(l), Box::new(r)));
        }
        Ok(l)
    }
    fn or(&mut self) -> Result<Formula> {
        let mut l = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            l = Formula::Or(Box::new(l), Box::new(self.and()?));
        }
        Ok(l)
    }
    fn and(&mut self) -> Result<Formula> {
        let mut l = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            l = Formula::And(Box::new(l), Box::new(self.unary()?));
        }
        Ok(l)
    }
    fn unary(&mut self) -> Result<Formula> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }
    fn primary(&mut self) -> Result<Formula> {
        match self.next() {
            Some(Tok::LParen) => {
                let f = self.implies()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(f),
                    _ => Err(Error::Syntax("expected ')' in formula".into())),
                }
            }
            Some(Tok::Braced(text)) => Ok(Formula::Pattern { component: None, text }),
            Some(Tok::Word(w)) if w == "true" => Ok(Formula::Const(true)),
            Some(Tok::Word(w)) if w == "false" => Ok(Formula::Const(false)),
            Some(Tok::Word(w)) => {
                if let Some(Tok::Braced(text)) = self.peek().cloned() {
                    self.pos += 1;
                    return Ok(Formula::Pattern { component: Some(w), text });
                }
                match self.peek() {
                    Some(Tok::EqEq) | Some(Tok::NotEq) => {
                        let eq = self.next() == Some(Tok::EqEq);
                        let lit = match self.next() {
                            Some(Tok::Word(l)) => parse_literal(&l)?,
                            _ => return Err(Error::Syntax(format!("expected a literal after {w}"))),
                        };
                        Ok(Formula::Cmp { path: w, lit, eq })
                    }
                    _ => Ok(Formula::Prop(w)),
                }
            }
            Some(t) => Err(Error::Syntax(format!("unexpected {t:?} in formula"))),
            None => Err(Error::Syntax("unexpected end of formula".into())),
        }
    }
}

pub fn parse_literal(w: &str) -> Result<Term> {
    match w {
        "true" => Ok(Term::boolean(true)),
        "false" => Ok(Term::boolean(false)),
        _ => w.parse::<i64>().map(Term::int).map_err(|_| Error::Syntax(format!("{w} is not an Int or Bool literal"))),
    }
}

impl Formula {
    pub fn parse(text: &str) -> Result<Formula> {
        let mut p = P { toks: lex(text)?, pos: 0 };
        let f = p.implies()?;
        if p.pos < p.toks.len() {
            return Err(Error::Syntax(format!("trailing input in formula at token {:?}", p.toks[p.pos])));
        }
        Ok(f)
    }

    pub fn atoms(&self) -> Vec<&Formula> {
        match self {
            Formula::Not(a) => a.atoms(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                let mut v = a.atoms();
                v.extend(b.atoms());
                v
            }
            Formula::Const(_) => vec![],
            atom => vec![atom],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mutex_invariant() {
        let f = Formula::parse("not (TRAIN1.isCrossing and TRAIN2.isCrossing)").unwrap();
        assert_eq!(
            f,
            Formula::Not(Box::new(Formula::And(
                Box::new(Formula::Prop("TRAIN1.isCrossing".into())),
                Box::new(Formula::Prop("TRAIN2.isCrossing".into()))
            )))
        );
        assert_eq!(Formula::parse("!a && b || c").unwrap(), Formula::parse("((not a) and b) or c").unwrap());
    }

    #[test]
    fn parses_patterns_and_comparisons() {
        let f = Formula::parse("CONTROLLER{consec} and RECKONER.dist != 1").unwrap();
        let atoms = f.atoms();
        assert_eq!(atoms[0], &Formula::Pattern { component: Some("CONTROLLER".into()), text: "consec".into() });
        assert_eq!(atoms[1], &Formula::Cmp { path: "RECKONER.dist".into(), lit: Term::int(1), eq: false });
        assert!(Formula::parse("a and").is_err());
    }
}
