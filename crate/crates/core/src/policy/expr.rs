use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Ident;

/// A set-valued expression over types and attributes.
///
/// `All` is the universe of declared concrete types; `Not` complements
/// relative to that universe. `And(vec![])` is the universe and
/// `Or(vec![])` is empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetExpr {
    Name(Ident),
    All,
    And(Vec<SetExpr>),
    Or(Vec<SetExpr>),
    Not(Box<SetExpr>),
}

impl SetExpr {
    pub fn name(id: Ident) -> Self {
        SetExpr::Name(id)
    }

    pub fn not(inner: SetExpr) -> Self {
        SetExpr::Not(Box::new(inner))
    }

    /// Union that collapses a single operand to itself.
    pub fn or(mut items: Vec<SetExpr>) -> Self {
        if items.len() == 1 {
            items.pop().unwrap()
        } else {
            SetExpr::Or(items)
        }
    }

    /// Intersection that collapses a single operand to itself.
    pub fn and(mut items: Vec<SetExpr>) -> Self {
        if items.len() == 1 {
            items.pop().unwrap()
        } else {
            SetExpr::And(items)
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            SetExpr::Name(_) | SetExpr::All => 1,
            SetExpr::Not(e) => 1 + e.depth(),
            SetExpr::And(v) | SetExpr::Or(v) => 1 + v.iter().map(SetExpr::depth).max().unwrap_or(0),
        }
    }

    /// Every identifier referenced anywhere in the tree.
    pub fn names(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<Ident>) {
        match self {
            SetExpr::Name(n) => {
                out.insert(n.clone());
            }
            SetExpr::All => {}
            SetExpr::Not(e) => e.collect_names(out),
            SetExpr::And(v) | SetExpr::Or(v) => v.iter().for_each(|e| e.collect_names(out)),
        }
    }

    /// Splits a rule target into the `self` flag and the remaining expression.
    ///
    /// `self` is only recognized as the whole target or as a direct operand
    /// of a top-level union; anywhere else it is an ordinary name.
    pub fn split_self(&self) -> (bool, Option<SetExpr>) {
        match self {
            SetExpr::Name(n) if n.is_self() => (true, None),
            SetExpr::Or(items) if items.iter().any(is_self_name) => {
                let rest: Vec<_> = items.iter().filter(|e| !is_self_name(e)).cloned().collect();
                if rest.is_empty() {
                    (true, None)
                } else {
                    (true, Some(SetExpr::or(rest)))
                }
            }
            other => (false, Some(other.clone())),
        }
    }
}

fn is_self_name(e: &SetExpr) -> bool {
    matches!(e, SetExpr::Name(n) if n.is_self())
}

/// Renders in CIL expression syntax.
impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Name(n) => write!(f, "{n}"),
            SetExpr::All => write!(f, "(all)"),
            SetExpr::Not(e) => write!(f, "(not {e})"),
            SetExpr::And(v) | SetExpr::Or(v) => {
                let op = if matches!(self, SetExpr::And(_)) { "and" } else { "or" };
                write!(f, "({op}")?;
                for e in v {
                    write!(f, " {e}")?;
                }
                write!(f, ")")
            }
        }
    }
}
