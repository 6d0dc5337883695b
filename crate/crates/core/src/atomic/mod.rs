//! Attribute expansion into atomic rules, negation-based augmentation and
//! differential analysis against a reference policy.

mod corpus;

pub use corpus::{read_atomics, write_atomics, AtomicRecord};

use std::collections::{BTreeMap, BTreeSet, HashSet};

use fixedbitset::FixedBitSet;
use log::warn;
use rayon::prelude::*;

use crate::error::Result;
use crate::policy::{AccessKey, AtomicRule, Op, Origin, PolicyDb, PolicyRule, Resolver, SetExpr};

/// Expands one rule against a prepared resolver.
pub fn expand_rule(resolver: &Resolver, rule: &PolicyRule) -> Result<Vec<AtomicRule>> {
    let subjects = resolver.eval(&rule.subject)?;
    let (with_self, rest) = rule.target.split_self();
    let targets = match rest {
        Some(expr) => resolver.eval(&expr)?,
        None => FixedBitSet::with_capacity(resolver.universe().len()),
    };
    let mut out = Vec::new();
    for s in subjects.ones() {
        let subject = resolver.type_at(s);
        let mut emit = |t: usize| {
            for p in &rule.permissions {
                out.push(AtomicRule::new(
                    subject.clone(),
                    resolver.type_at(t).clone(),
                    rule.class.clone(),
                    p.clone(),
                    rule.op,
                ));
            }
        };
        for t in targets.ones() {
            emit(t);
        }
        if with_self && !targets.contains(s) {
            emit(s);
        }
    }
    Ok(out)
}

/// Every atomic rule of `db` with the origin of the first statement (in
/// rule order) that produced it.
pub fn expand_with_origins(db: &PolicyDb) -> Result<BTreeMap<AtomicRule, Origin>> {
    let resolver = Resolver::new(db)?;
    let per_rule: Vec<Vec<AtomicRule>> = db
        .rules
        .par_iter()
        .map(|rule| expand_rule(&resolver, rule))
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for (rule, atomics) in db.rules.iter().zip(per_rule) {
        for a in atomics {
            out.entry(a).or_insert_with(|| rule.origin.clone());
        }
    }
    Ok(out)
}

/// Deduplicated, canonically ordered atomic rules of `db`.
pub fn expand(db: &PolicyDb) -> Result<BTreeSet<AtomicRule>> {
    let resolver = Resolver::new(db)?;
    let per_rule: Vec<Vec<AtomicRule>> = db
        .rules
        .par_iter()
        .map(|rule| expand_rule(&resolver, rule))
        .collect::<Result<_>>()?;
    Ok(per_rule.into_iter().flatten().collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Augmentation {
    /// Allow-labeled atomics inferred from negations, at most `cap` of them.
    pub atomics: BTreeSet<AtomicRule>,
    /// Candidates before the cap was applied.
    pub candidates: usize,
    /// Candidates equal to a neverallow atomic of the policy.
    pub dropped_contradictions: usize,
    /// Neverallow rules whose negation appears in an unsupported position.
    pub skipped_shapes: usize,
}

enum NegationShape {
    None,
    Excluded(FixedBitSet),
    Unsupported,
}

fn contains_not(expr: &SetExpr) -> bool {
    match expr {
        SetExpr::Not(_) => true,
        SetExpr::And(items) | SetExpr::Or(items) => items.iter().any(contains_not),
        SetExpr::Name(_) | SetExpr::All => false,
    }
}

/// Types that the negation in `expr` carves out of an otherwise larger set.
/// Handles `And(.., Not(S))` and `Or(.., Not(S))`, looking through one level
/// of attribute name.
fn negation_shape(resolver: &Resolver, db: &PolicyDb, expr: &SetExpr, follow_name: bool) -> Result<NegationShape> {
    match expr {
        SetExpr::Name(name) if follow_name => match db.memberships.get(name) {
            Some(inner) => negation_shape(resolver, db, inner, false),
            None => Ok(NegationShape::None),
        },
        SetExpr::And(items) if items.iter().any(|e| matches!(e, SetExpr::Not(_))) => {
            let mut positive = Vec::new();
            let mut excluded = FixedBitSet::with_capacity(resolver.universe().len());
            for item in items {
                match item {
                    SetExpr::Not(inner) => excluded.union_with(&resolver.eval(inner)?),
                    other => positive.push(other.clone()),
                }
            }
            excluded.intersect_with(&resolver.eval(&SetExpr::And(positive))?);
            Ok(NegationShape::Excluded(excluded))
        }
        SetExpr::Or(items) if items.iter().any(|e| matches!(e, SetExpr::Not(_))) => {
            let mut others = Vec::new();
            let mut excluded = FixedBitSet::with_capacity(resolver.universe().len());
            for item in items {
                match item {
                    SetExpr::Not(inner) => excluded.union_with(&resolver.eval(inner)?),
                    other => others.push(other.clone()),
                }
            }
            excluded.difference_with(&resolver.eval(&SetExpr::Or(others))?);
            Ok(NegationShape::Excluded(excluded))
        }
        other if contains_not(other) => Ok(NegationShape::Unsupported),
        _ => Ok(NegationShape::None),
    }
}

/// Infers allow atomics from negations in neverallow subjects: a type carved
/// out of a neverallow's subject set is taken to be permitted the access.
///
/// Candidates that contradict a neverallow atomic of `db` are dropped and
/// ones already allowed by `db` are not repeated. At most `cap` atomics are
/// returned, the canonically least ones.
pub fn augment_from_negations(db: &PolicyDb, cap: usize) -> Result<Augmentation> {
    let resolver = Resolver::new(db)?;
    let mut existing_allow: HashSet<AccessKey> = HashSet::new();
    let mut forbidden: HashSet<AccessKey> = HashSet::new();
    for rule in &db.rules {
        for a in expand_rule(&resolver, rule)? {
            match a.label {
                Op::Allow => existing_allow.insert(a.key()),
                Op::Neverallow => forbidden.insert(a.key()),
            };
        }
    }

    let mut out = Augmentation::default();
    let mut candidates = BTreeSet::new();
    for rule in db.rules.iter().filter(|r| r.op == Op::Neverallow) {
        let excluded = match negation_shape(&resolver, db, &rule.subject, true)? {
            NegationShape::None => continue,
            NegationShape::Unsupported => {
                out.skipped_shapes += 1;
                continue;
            }
            NegationShape::Excluded(bits) => bits,
        };
        let inferred = PolicyRule {
            op: Op::Allow,
            subject: SetExpr::Or(excluded.ones().map(|i| SetExpr::Name(resolver.type_at(i).clone())).collect()),
            ..rule.clone()
        };
        for a in expand_rule(&resolver, &inferred)? {
            let key = a.key();
            if forbidden.contains(&key) {
                warn!("dropping inferred {a}: contradicts a neverallow rule");
                out.dropped_contradictions += 1;
            } else if !existing_allow.contains(&key) {
                candidates.insert(a);
            }
        }
    }
    out.candidates = candidates.len();
    out.atomics = candidates.into_iter().take(cap).collect();
    Ok(out)
}

/// Atomics of `device` whose four-tuple is absent from `reference`. Labels
/// are ignored on both sides.
pub fn diff(device: &BTreeSet<AtomicRule>, reference: &BTreeSet<AtomicRule>) -> BTreeSet<AtomicRule> {
    let reference: HashSet<AccessKey> = reference.iter().map(AtomicRule::key).collect();
    device.iter().filter(|a| !reference.contains(&a.key())).cloned().collect()
}

/// Customized allow atomics of a device: its allow atomics whose
/// four-tuple is not allowed by the reference. Neverallow atomics on either
/// side take no part.
pub fn customized(device: &BTreeSet<AtomicRule>, reference: &BTreeSet<AtomicRule>) -> BTreeSet<AtomicRule> {
    let allow = |s: &BTreeSet<AtomicRule>| -> BTreeSet<AtomicRule> { s.iter().filter(|a| a.label == Op::Allow).cloned().collect() };
    diff(&allow(device), &allow(reference))
}

/// Union of several images' atomic sets with per-rule image counts.
pub fn dedupe_corpus(images: &[BTreeSet<AtomicRule>]) -> (BTreeSet<AtomicRule>, BTreeMap<AtomicRule, usize>) {
    let mut counts: BTreeMap<AtomicRule, usize> = BTreeMap::new();
    for image in images {
        for a in image {
            *counts.entry(a.clone()).or_default() += 1;
        }
    }
    (counts.keys().cloned().collect(), counts)
}
