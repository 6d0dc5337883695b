mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{fixture, RandomPolicy, Tuple};
use sepal_core::atomic::{augment_from_negations, expand};
use sepal_core::parse::{parse_cil, parse_flat, write_flat, ParseOptions};
use sepal_core::policy::{AccessKey, AtomicRule, Op};

fn tuples(atomics: &BTreeSet<AtomicRule>) -> BTreeSet<Tuple> {
    atomics
        .iter()
        .map(|a| {
            (
                a.subject.to_string(),
                a.target.to_string(),
                a.class.to_string(),
                a.permission.to_string(),
                a.label == Op::Neverallow,
            )
        })
        .collect()
}

fn parsed(policy: &RandomPolicy) -> sepal_core::policy::PolicyDb {
    parse_cil(&policy.to_cil(), &ParseOptions::default()).unwrap()
}

proptest! {
    #[test]
    fn expansion_matches_brute_force(seed in any::<u64>()) {
        let policy = RandomPolicy::generate(seed);
        let got = tuples(&expand(&parsed(&policy)).unwrap());
        prop_assert_eq!(got, policy.brute_force());
    }

    #[test]
    fn flat_rendering_round_trips(seed in any::<u64>()) {
        let db = parsed(&RandomPolicy::generate(seed));
        let text = write_flat(&db).unwrap();
        let again = parse_flat(&text, &ParseOptions::default()).unwrap();
        prop_assert_eq!(expand(&again).unwrap(), expand(&db).unwrap());
    }

    #[test]
    fn inferred_allows_are_new_and_uncontradicted(seed in any::<u64>(), cap in 0usize..20) {
        let db = parsed(&RandomPolicy::generate(seed));
        let existing = expand(&db).unwrap();
        let keys = |op: Op| -> BTreeSet<AccessKey> {
            existing.iter().filter(|a| a.label == op).map(AtomicRule::key).collect()
        };
        let (allowed, forbidden) = (keys(Op::Allow), keys(Op::Neverallow));
        let aug = augment_from_negations(&db, cap).unwrap();
        prop_assert!(aug.atomics.len() <= cap);
        prop_assert_eq!(aug.atomics.len(), cap.min(aug.candidates));
        for a in &aug.atomics {
            prop_assert_eq!(a.label, Op::Allow);
            prop_assert!(!allowed.contains(&a.key()));
            prop_assert!(!forbidden.contains(&a.key()));
        }
    }

    #[test]
    fn raising_the_cap_only_adds(seed in any::<u64>(), cap in 0usize..10) {
        let db = parsed(&RandomPolicy::generate(seed));
        let small = augment_from_negations(&db, cap).unwrap().atomics;
        let large = augment_from_negations(&db, cap + 5).unwrap().atomics;
        prop_assert!(small.is_subset(&large));
    }
}

#[test]
fn cil_and_flat_listings_expand_identically() {
    let opts = ParseOptions::default();
    let from_cil = expand(&parse_cil(&fixture("equivalence/policy.cil"), &opts).unwrap()).unwrap();
    let from_flat = expand(&parse_flat(&fixture("equivalence/binary.txt"), &opts).unwrap()).unwrap();
    assert_eq!(from_cil, from_flat);
    assert_eq!(from_cil.len(), 18);
}

#[test]
fn fixture_policies_round_trip_through_flat_text() {
    let opts = ParseOptions::default();
    for rel in ["augmentation/aosp_like.cil", "augmentation/base_typeattr_293.cil", "uid/policy.cil"] {
        let db = parse_cil(&fixture(rel), &opts).unwrap();
        let again = parse_flat(&write_flat(&db).unwrap(), &opts).unwrap();
        assert_eq!(expand(&again).unwrap(), expand(&db).unwrap(), "{rel}");
        assert_eq!(again.transitions, db.transitions, "{rel}");
    }
}
