use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Ident, Origin, PolicyRule, SetExpr};
use crate::error::{Error, Result};

/// `typetransition source exec_type:class result`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeTransition {
    pub source: Ident,
    pub exec_type: Ident,
    pub class: Ident,
    pub result: Ident,
    pub origin: Origin,
}

/// Declarations, attribute memberships, rules and type transitions gathered
/// from one or more policy sources.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyDb {
    pub types: BTreeSet<Ident>,
    pub attributes: BTreeSet<Ident>,
    /// attribute -> member expression
    pub memberships: BTreeMap<Ident, SetExpr>,
    /// class -> declared permissions
    #[serde(default)]
    pub classes: BTreeMap<Ident, BTreeSet<Ident>>,
    pub rules: Vec<PolicyRule>,
    pub transitions: Vec<TypeTransition>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Statements or forms that were recognized as syntax but not modeled.
    #[serde(default)]
    pub skipped: usize,
    /// Types that were never declared and were synthesized on first use.
    #[serde(default)]
    pub synthesized: BTreeSet<Ident>,
}

impl PolicyDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_type(&mut self, name: Ident) {
        if self.attributes.contains(&name) {
            self.warn(format!("`{name}` declared as both attribute and type; keeping attribute"));
            return;
        }
        self.synthesized.remove(&name);
        self.types.insert(name);
    }

    pub fn declare_attribute(&mut self, name: Ident) {
        if self.types.remove(&name) && !self.synthesized.remove(&name) {
            self.warn(format!("`{name}` declared as both type and attribute; keeping attribute"));
        }
        self.attributes.insert(name);
    }

    /// Unions `expr` into the attribute's membership, declaring the attribute.
    pub fn add_membership(&mut self, attribute: Ident, expr: SetExpr) {
        self.declare_attribute(attribute.clone());
        match self.memberships.remove(&attribute) {
            None => {
                self.memberships.insert(attribute, expr);
            }
            Some(SetExpr::Or(mut items)) => {
                items.push(expr);
                self.memberships.insert(attribute, SetExpr::Or(items));
            }
            Some(prev) => {
                self.memberships.insert(attribute, SetExpr::Or(vec![prev, expr]));
            }
        }
    }

    pub fn declare_class_perms(&mut self, class: Ident, perms: impl IntoIterator<Item = Ident>) {
        self.classes.entry(class).or_default().extend(perms);
    }

    pub fn is_type(&self, name: &Ident) -> bool {
        self.types.contains(name)
    }

    pub fn is_attribute(&self, name: &Ident) -> bool {
        self.attributes.contains(name)
    }

    pub fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Names used by rules, memberships and transitions in subject/target
    /// position (classes and permissions are not included).
    pub fn referenced_type_names(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        for rule in &self.rules {
            out.extend(rule.subject.names());
            out.extend(rule.target.names().into_iter().filter(|n| !n.is_self()));
        }
        for expr in self.memberships.values() {
            out.extend(expr.names());
        }
        for tr in &self.transitions {
            out.insert(tr.source.clone());
            out.insert(tr.exec_type.clone());
            out.insert(tr.result.clone());
        }
        out
    }

    /// Checks that every referenced name is declared. Undeclared names become
    /// concrete types with a warning, or an error in strict mode.
    pub fn finalize(&mut self, strict: bool) -> Result<()> {
        let undeclared: Vec<Ident> = self
            .referenced_type_names()
            .into_iter()
            .filter(|n| !self.types.contains(n) && !self.attributes.contains(n))
            .collect();
        if strict {
            if let Some(first) = undeclared.into_iter().next() {
                return Err(Error::UnknownName(first));
            }
            return Ok(());
        }
        for name in undeclared {
            self.warn(format!("undeclared name `{name}` treated as a type"));
            self.types.insert(name.clone());
            self.synthesized.insert(name);
        }
        Ok(())
    }

    /// Folds `other` into `self`. Callers merge in a fixed (file-name) order
    /// so the result is deterministic.
    pub fn merge(&mut self, other: PolicyDb) {
        for a in other.attributes {
            self.declare_attribute(a);
        }
        for t in other.types {
            if self.attributes.contains(&t) {
                if !other.synthesized.contains(&t) {
                    self.warn(format!("`{t}` declared as both type and attribute; keeping attribute"));
                }
                continue;
            }
            let synthesized = other.synthesized.contains(&t);
            let already = self.types.contains(&t);
            self.types.insert(t.clone());
            if synthesized && !already {
                self.synthesized.insert(t);
            } else if !synthesized {
                self.synthesized.remove(&t);
            }
        }
        for (attr, expr) in other.memberships {
            self.add_membership(attr, expr);
        }
        for (class, perms) in other.classes {
            self.declare_class_perms(class, perms);
        }
        self.rules.extend(other.rules);
        self.transitions.extend(other.transitions);
        self.warnings.extend(other.warnings);
        self.skipped += other.skipped;
    }
}
