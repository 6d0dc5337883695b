//! Core policy domain types: identifiers, set expressions, rules, atomic
//! rules and the policy database. Nothing in here does I/O.

mod db;
mod expr;
mod ident;
mod resolve;
mod rule;

pub use db::{PolicyDb, TypeTransition};
pub use expr::SetExpr;
pub use ident::{is_ident_char, Ident, Interner, SELF};
pub use resolve::{resolve, Resolver};
pub use rule::{AccessKey, AtomicRule, Label, Op, Origin, PolicyRule};
