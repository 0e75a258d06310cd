use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("declaration error: {0}")]
    Decl(String),
    #[error("ill-formed term: {0}")]
    IllFormed(String),
    #[error("rewrite budget of {budget} steps exceeded while normalizing {term}")]
    Budget { budget: usize, term: String },
    #[error("sort ambiguity for {term}: incomparable sorts {sorts}")]
    SortAmbiguity { term: String, sorts: String },
    #[error("admissibility violation in {context}: variable {var} is unbound")]
    Admissibility { context: String, var: String },
    #[error("unsupported pattern: {0}")]
    UnsupportedPattern(String),
    #[error("arithmetic overflow evaluating {0}")]
    Overflow(String),
    #[error("property error: {0}")]
    Property(String),
    #[error("initialization error: {0}")]
    Init(String),
    #[error("name resolution error: {0}")]
    Resolve(String),
    #[error("{0}")]
    Syntax(String),
}

impl Error {
    pub fn with_stage(self, stage: &str) -> Error {
        match self {
            Error::Budget { budget, term } => {
                Error::Budget { budget, term: format!("{term} (exploring stage {stage})") }
            }
            other => other,
        }
    }
}
