use std::collections::{BTreeSet, HashMap};

use fixedbitset::FixedBitSet;
use log::warn;

use super::{Ident, PolicyDb, SetExpr};
use crate::error::{Error, Result};

/// Upper bound on membership fixpoint sweeps. Monotone memberships converge
/// long before this; only cyclic definitions through `not` can oscillate.
const MAX_SWEEPS: usize = 256;

/// Evaluates set expressions against a policy's concrete type universe.
///
/// Construction resolves every attribute's membership to a fixpoint once;
/// afterwards evaluation is a walk over the expression tree with bitset
/// operations.
#[derive(Debug, Clone)]
pub struct Resolver {
    universe: Vec<Ident>,
    index: HashMap<Ident, usize>,
    attrs: HashMap<Ident, FixedBitSet>,
    converged: bool,
}

impl Resolver {
    pub fn new(db: &PolicyDb) -> Result<Self> {
        let universe: Vec<Ident> = db.types.iter().cloned().collect();
        let index = universe.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut resolver = Resolver {
            universe,
            index,
            attrs: db
                .attributes
                .iter()
                .map(|a| (a.clone(), FixedBitSet::new()))
                .collect(),
            converged: true,
        };
        for a in db.attributes.iter() {
            resolver.attrs.get_mut(a).unwrap().grow(resolver.universe.len());
        }

        // Gauss-Seidel sweeps in attribute order until nothing changes.
        let ordered: Vec<(&Ident, &SetExpr)> = db.memberships.iter().collect();
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let mut changed = false;
            for (attr, expr) in &ordered {
                let bits = resolver.eval(expr)?;
                let slot = resolver.attrs.get_mut(*attr).expect("membership key is an attribute");
                if *slot != bits {
                    *slot = bits;
                    changed = true;
                }
            }
            if !changed {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!("attribute memberships did not reach a fixpoint after {MAX_SWEEPS} sweeps");
        }
        resolver.converged = converged;
        Ok(resolver)
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn universe(&self) -> &[Ident] {
        &self.universe
    }

    pub fn type_at(&self, i: usize) -> &Ident {
        &self.universe[i]
    }

    pub fn type_index(&self, name: &Ident) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Resolved members of an attribute.
    pub fn members(&self, attribute: &Ident) -> Option<&FixedBitSet> {
        self.attrs.get(attribute)
    }

    /// Whether concrete type `ty` belongs to `name` (itself or one of its
    /// attributes).
    pub fn belongs(&self, ty: &Ident, name: &Ident) -> bool {
        if ty == name {
            return self.index.contains_key(ty);
        }
        match (self.index.get(ty), self.attrs.get(name)) {
            (Some(&i), Some(bits)) => bits.contains(i),
            _ => false,
        }
    }

    pub fn eval(&self, expr: &SetExpr) -> Result<FixedBitSet> {
        let n = self.universe.len();
        Ok(match expr {
            SetExpr::Name(name) => {
                if let Some(&i) = self.index.get(name) {
                    let mut bits = FixedBitSet::with_capacity(n);
                    bits.insert(i);
                    bits
                } else if let Some(bits) = self.attrs.get(name) {
                    bits.clone()
                } else {
                    return Err(Error::UnknownName(name.clone()));
                }
            }
            SetExpr::All => full(n),
            SetExpr::Not(inner) => {
                let mut bits = self.eval(inner)?;
                bits.toggle_range(..);
                bits
            }
            SetExpr::And(items) => {
                let mut acc = full(n);
                for item in items {
                    acc.intersect_with(&self.eval(item)?);
                }
                acc
            }
            SetExpr::Or(items) => {
                let mut acc = FixedBitSet::with_capacity(n);
                for item in items {
                    acc.union_with(&self.eval(item)?);
                }
                acc
            }
        })
    }

    pub fn resolve(&self, expr: &SetExpr) -> Result<BTreeSet<Ident>> {
        Ok(self.names_of(&self.eval(expr)?))
    }

    pub fn names_of(&self, bits: &FixedBitSet) -> BTreeSet<Ident> {
        bits.ones().map(|i| self.universe[i].clone()).collect()
    }
}

fn full(n: usize) -> FixedBitSet {
    let mut bits = FixedBitSet::with_capacity(n);
    bits.insert_range(..);
    bits
}

/// The concrete types denoted by `expr` in `db`.
pub fn resolve(expr: &SetExpr, db: &PolicyDb) -> Result<BTreeSet<Ident>> {
    Resolver::new(db)?.resolve(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> Ident {
        Ident::new(s).unwrap()
    }

    fn name(s: &str) -> SetExpr {
        SetExpr::Name(id(s))
    }

    fn set(names: &[&str]) -> BTreeSet<Ident> {
        names.iter().map(|s| id(s)).collect()
    }

    fn app_db() -> PolicyDb {
        let mut db = PolicyDb::new();
        for t in ["shell", "con_monitor_app", "untrusted_app", "init"] {
            db.declare_type(id(t));
        }
        db.add_membership(
            id("appdomain"),
            SetExpr::Or(vec![name("shell"), name("con_monitor_app"), name("untrusted_app")]),
        );
        db
    }

    #[test]
    fn negation_excludes_members() {
        let db = app_db();
        let expr = SetExpr::And(vec![
            name("appdomain"),
            SetExpr::not(SetExpr::Or(vec![name("shell"), name("con_monitor_app")])),
        ]);
        assert_eq!(resolve(&expr, &db).unwrap(), set(&["untrusted_app"]));
    }

    #[test]
    fn concrete_name_is_identity() {
        let db = app_db();
        assert_eq!(resolve(&name("untrusted_app"), &db).unwrap(), set(&["untrusted_app"]));
    }

    #[test]
    fn all_and_complement_use_declared_types() {
        let db = app_db();
        assert_eq!(resolve(&SetExpr::All, &db).unwrap().len(), 4);
        assert_eq!(resolve(&SetExpr::not(name("appdomain")), &db).unwrap(), set(&["init"]));
    }

    #[test]
    fn unknown_name_is_an_error() {
        let db = app_db();
        let err = resolve(&name("nope"), &db).unwrap_err();
        assert!(matches!(err, Error::UnknownName(n) if n.as_str() == "nope"));
    }

    #[test]
    fn cyclic_memberships_reach_least_fixpoint() {
        let mut db = PolicyDb::new();
        db.declare_type(id("x"));
        db.declare_type(id("y"));
        db.add_membership(id("a"), SetExpr::Or(vec![name("b"), name("x")]));
        db.add_membership(id("b"), SetExpr::Or(vec![name("a"), name("y")]));
        let r = Resolver::new(&db).unwrap();
        assert!(r.converged());
        assert_eq!(r.resolve(&name("a")).unwrap(), set(&["x", "y"]));
        assert_eq!(r.resolve(&name("b")).unwrap(), set(&["x", "y"]));
    }

    #[test]
    fn nested_attributes_resolve() {
        let mut db = app_db();
        db.add_membership(id("domain"), SetExpr::Or(vec![name("appdomain"), name("init")]));
        let r = Resolver::new(&db).unwrap();
        assert_eq!(r.resolve(&name("domain")).unwrap().len(), 4);
        assert!(r.belongs(&id("shell"), &id("domain")));
        assert!(!r.belongs(&id("init"), &id("appdomain")));
    }
}
