use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Ident, SetExpr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Allow,
    Neverallow,
}

/// Permission identifier of an atomic rule: the op it was derived from.
pub type Label = Op;

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Allow => "allow",
            Op::Neverallow => "neverallow",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "allow" => Ok(Op::Allow),
            "neverallow" => Ok(Op::Neverallow),
            _ => Err(format!("expected allow or neverallow, got {s:?}")),
        }
    }
}

/// Where a statement came from.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub file: Arc<str>,
    pub line: usize,
}

impl Origin {
    pub fn new(file: &str, line: usize) -> Self {
        Origin {
            file: Arc::from(file),
            line,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// A type enforcement statement before attribute expansion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub op: Op,
    pub subject: SetExpr,
    pub target: SetExpr,
    pub class: Ident,
    /// Non-empty, deduplicated.
    pub permissions: BTreeSet<Ident>,
    pub origin: Origin,
}

impl PolicyRule {
    /// Returns `None` when the permission set is empty.
    pub fn new(
        op: Op,
        subject: SetExpr,
        target: SetExpr,
        class: Ident,
        permissions: impl IntoIterator<Item = Ident>,
        origin: Origin,
    ) -> Option<Self> {
        let permissions: BTreeSet<_> = permissions.into_iter().collect();
        if permissions.is_empty() {
            return None;
        }
        Some(PolicyRule {
            op,
            subject,
            target,
            class,
            permissions,
            origin,
        })
    }
}

/// One irreducible access: a single permission of one concrete subject type
/// on one concrete target type. The derived order (subject, target, class,
/// permission, label) is the canonical order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AtomicRule {
    pub subject: Ident,
    pub target: Ident,
    pub class: Ident,
    pub permission: Ident,
    pub label: Label,
}

/// The four-tuple without the label, used where labels are ignored.
pub type AccessKey = (Ident, Ident, Ident, Ident);

impl AtomicRule {
    pub fn new(subject: Ident, target: Ident, class: Ident, permission: Ident, label: Label) -> Self {
        AtomicRule {
            subject,
            target,
            class,
            permission,
            label,
        }
    }

    pub fn key(&self) -> AccessKey {
        (
            self.subject.clone(),
            self.target.clone(),
            self.class.clone(),
            self.permission.clone(),
        )
    }

    pub fn with_label(&self, label: Label) -> Self {
        AtomicRule {
            label,
            ..self.clone()
        }
    }

    pub fn fields(&self) -> [&Ident; 4] {
        [&self.subject, &self.target, &self.class, &self.permission]
    }
}

impl fmt::Display for AtomicRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}:{} {}",
            self.label, self.subject, self.target, self.class, self.permission
        )
    }
}
