//! Tokenizer: whitespace-separated words, single-character specials, and
//! `---` / `***` line comments.

use super::diag::Span;
use crate::kernel::term::is_special;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tok {
    pub text: String,
    pub span: Span,
    /// No whitespace between this token and the previous one.
    pub glued: bool,
}

impl Tok {
    pub fn is(&self, s: &str) -> bool {
        self.text == s
    }
}

pub fn lex(src: &str) -> Vec<Tok> {
    let mut out: Vec<Tok> = Vec::new();
    let mut line = 1;
    let mut line_start = 0;
    let mut it = src.char_indices().peekable();
    let mut glued = false;
    while let Some(&(i, c)) = it.peek() {
        if c == '\n' {
            it.next();
            line += 1;
            line_start = i + 1;
            glued = false;
            continue;
        }
        if c.is_whitespace() {
            it.next();
            glued = false;
            continue;
        }
        let rest = &src[i..];
        if (rest.starts_with("---") || rest.starts_with("***")) && !glued {
            while let Some(&(_, c)) = it.peek() {
                if c == '\n' {
                    break;
                }
                it.next();
            }
            continue;
        }
        let col = src[line_start..i].chars().count() + 1;
        if is_special(c) {
            it.next();
            let end = i + c.len_utf8();
            out.push(Tok { text: c.to_string(), span: Span { start: i, end, line, col }, glued });
            glued = true;
            continue;
        }
        let mut end = i;
        while let Some(&(j, c)) = it.peek() {
            if c.is_whitespace() || is_special(c) {
                break;
            }
            end = j + c.len_utf8();
            it.next();
        }
        let word = &src[i..end];
        // a trailing `.` ends the statement
        if word.len() > 1 && word.ends_with('.') && !word.ends_with("..") {
            let w = &word[..word.len() - 1];
            out.push(Tok { text: w.to_string(), span: Span { start: i, end: end - 1, line, col }, glued });
            let dc = col + w.chars().count();
            out.push(Tok { text: ".".into(), span: Span { start: end - 1, end, line, col: dc }, glued: true });
        } else {
            out.push(Tok { text: word.to_string(), span: Span { start: i, end, line, col }, glued });
        }
        glued = true;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        lex(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_specials_and_rule_arrows() {
        assert_eq!(
            texts("rl D =[ lmoving|D ]=> D - 1 ."),
            ["rl", "D", "=", "[", "lmoving", "|", "D", "]", "=>", "D", "-", "1", "."]
        );
        assert_eq!(texts("eq x = 1. --- comment\n"), ["eq", "x", "=", "1", "."]);
        assert_eq!(texts("op (_,_) : A B -> C ."), ["op", "(", "_", ",", "_", ")", ":", "A", "B", "->", "C", "."]);
    }

    #[test]
    fn tracks_glue_and_positions() {
        let t = lex("ops a|_ b : X .\n  c");
        assert!(!t[1].glued && t[2].glued && t[3].glued);
        assert!(!t[4].glued);
        let c = t.last().unwrap();
        assert_eq!((c.span.line, c.span.col), (2, 3));
    }
}
