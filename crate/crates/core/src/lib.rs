//! Egalitarian rewrite systems: order-sorted terms, equational evaluation,
//! synchronous composition, the split translation and bounded exploration.

pub mod compose;
pub mod egrw;
pub mod error;
pub mod explore;
pub mod formula;
pub mod kernel;
pub mod mel;
pub mod split;
pub mod syntax;

pub use error::{Error, Result};
pub use kernel::signature::{Signature, SortRef};
pub use kernel::term::{Term, Var};
