//! Nearest-neighbour rule classifier. Neighbours of a rule are the training
//! atomics that agree with it in exactly three of the four fields.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::policy::{AccessKey, AtomicRule, Ident, Op};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Allow,
    Neverallow,
    Unclassified,
}

impl Verdict {
    pub fn op(self) -> Option<Op> {
        match self {
            Verdict::Allow => Some(Op::Allow),
            Verdict::Neverallow => Some(Op::Neverallow),
            Verdict::Unclassified => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborVerdict {
    pub verdict: Verdict,
    pub neighbor_count: usize,
    /// Share of the majority label among neighbours, 0 without neighbours.
    pub majority_fraction: f64,
}

impl NeighborVerdict {
    /// Majority label when there are at least `m` neighbours and the
    /// majority share reaches `sigma`; exact ties stay unclassified.
    pub fn from_counts(allow: usize, never: usize, m: usize, sigma: f64) -> Self {
        let total = allow + never;
        let majority_fraction = if total == 0 {
            0.0
        } else {
            allow.max(never) as f64 / total as f64
        };
        let verdict = if total < m || total == 0 || majority_fraction < sigma || allow == never {
            Verdict::Unclassified
        } else if allow > never {
            Verdict::Allow
        } else {
            Verdict::Neverallow
        };
        NeighborVerdict {
            verdict,
            neighbor_count: total,
            majority_fraction,
        }
    }
}

fn matching_fields(a: &AtomicRule, b: &AtomicRule) -> usize {
    a.fields().into_iter().zip(b.fields()).filter(|(x, y)| x == y).count()
}

/// Direct scan over the training set.
pub fn nn_classify(train: &[AtomicRule], target: &AtomicRule, m: usize, sigma: f64) -> NeighborVerdict {
    let (mut allow, mut never) = (0, 0);
    for a in train.iter().filter(|a| matching_fields(a, target) == 3) {
        match a.label {
            Op::Allow => allow += 1,
            Op::Neverallow => never += 1,
        }
    }
    NeighborVerdict::from_counts(allow, never, m, sigma)
}

type Partial = [Ident; 3];

/// Label counts keyed by each three-field projection, for fast repeated
/// neighbour queries. A training atomic equal to the target in all four
/// fields shows up in all four projections and is subtracted back out.
#[derive(Clone, Debug, Default)]
pub struct NeighborIndex {
    omitted: [HashMap<Partial, [usize; 2]>; 4],
    exact: HashMap<AccessKey, [usize; 2]>,
}

fn project(a: &AtomicRule, skip: usize) -> Partial {
    let f = a.fields();
    let mut out = Vec::with_capacity(3);
    for (i, v) in f.iter().enumerate() {
        if i != skip {
            out.push((*v).clone());
        }
    }
    out.try_into().expect("three fields")
}

fn slot(op: Op) -> usize {
    match op {
        Op::Allow => 0,
        Op::Neverallow => 1,
    }
}

impl NeighborIndex {
    pub fn new(train: &[AtomicRule]) -> Self {
        let mut index = NeighborIndex::default();
        for a in train {
            for skip in 0..4 {
                index.omitted[skip].entry(project(a, skip)).or_default()[slot(a.label)] += 1;
            }
            index.exact.entry(a.key()).or_default()[slot(a.label)] += 1;
        }
        index
    }

    /// (allow, neverallow) neighbour counts.
    pub fn counts(&self, target: &AtomicRule) -> (usize, usize) {
        let exact = self.exact.get(&target.key()).copied().unwrap_or_default();
        let mut c = [0usize; 2];
        for skip in 0..4 {
            let bucket = self.omitted[skip].get(&project(target, skip)).copied().unwrap_or_default();
            for k in 0..2 {
                c[k] += bucket[k] - exact[k];
            }
        }
        (c[0], c[1])
    }

    pub fn classify(&self, target: &AtomicRule, m: usize, sigma: f64) -> NeighborVerdict {
        let (allow, never) = self.counts(target);
        NeighborVerdict::from_counts(allow, never, m, sigma)
    }
}
