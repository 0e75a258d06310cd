//! Diagnostics with stable codes and source spans.

use std::fmt;

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Span {
    /// Byte offsets into the source.
    pub start: usize,
    pub end: usize,
    /// 1-based.
    pub line: usize,
    pub col: usize,
}

impl Span {
    pub fn join(self, other: Span) -> Span {
        if other.end <= self.start {
            return self;
        }
        Span { end: other.end.max(self.end), ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

pub mod code {
    pub const SYNTAX: &str = "E-SYNTAX";
    pub const LABEL_REQUIRED: &str = "E-LABEL-REQUIRED";
    pub const DUP_MODULE: &str = "E-DUP-MODULE";
    pub const UNKNOWN_MODULE: &str = "E-UNKNOWN-MODULE";
    pub const IMPORT_CYCLE: &str = "E-IMPORT-CYCLE";
    pub const DECL: &str = "E-DECL";
    pub const UNKNOWN_SORT: &str = "E-UNKNOWN-SORT";
    pub const UNKNOWN_VAR: &str = "E-UNKNOWN-VAR";
    pub const NO_PARSE: &str = "E-NO-PARSE";
    pub const AMBIGUOUS: &str = "E-AMBIGUOUS";
    pub const PATTERN: &str = "E-UNSUPPORTED-PATTERN";
    pub const UNKNOWN_PROP: &str = "E-UNKNOWN-PROP";
    pub const CRITERION_KIND: &str = "E-CRITERION-KIND";
    pub const COMPOSE: &str = "E-COMPOSE";
    pub const TOPMOST_ERR: &str = "E-TOPMOST";
    pub const TOPMOST: &str = "W-TOPMOST";
    pub const ADMISSIBLE: &str = "W-ADMISSIBLE";
    pub const AUTO_LABEL: &str = "W-AUTO-LABEL";
    pub const PARTIAL_CRITERION: &str = "W-PARTIAL-CRITERION";
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub file: Option<String>,
    pub span: Option<Span>,
}

impl Diagnostic {
    pub fn error(code: &'static str, message: impl Into<String>, span: Option<Span>) -> Diagnostic {
        Diagnostic { severity: Severity::Error, code, message: message.into(), file: None, span }
    }
    pub fn warning(code: &'static str, message: impl Into<String>, span: Option<Span>) -> Diagnostic {
        Diagnostic { severity: Severity::Warning, code, message: message.into(), file: None, span }
    }
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        if let Some(s) = &self.span {
            write!(f, "{}:{}: ", s.line, s.col)?;
        } else if self.file.is_some() {
            f.write_str(" ")?;
        }
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}
