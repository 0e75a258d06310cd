pub mod matching;
pub mod signature;
pub mod term;
