//! Glue between the stages, shared by the command line and the tests.

use std::collections::BTreeSet;

use log::info;

use crate::atomic::{augment_from_negations, expand, Augmentation};
use crate::error::Result;
use crate::nlp::{embed_docs, parse_conllu, triplet_docs, Corpus, Doc2VecConfig, Embedding};
use crate::parse::{parse_file_contexts, parse_rc, parse_seapp};
use crate::policy::{AtomicRule, Op, PolicyDb};
use crate::uid::{infer_users, AidTable, UidInference, UidMap};

/// Augmentation cap that brings the allow count up to the neverallow count
/// and no further.
pub fn balance_cap(atomics: &BTreeSet<AtomicRule>) -> usize {
    let allow = atomics.iter().filter(|a| a.label == Op::Allow).count();
    (atomics.len() - allow).saturating_sub(allow)
}

/// Expanded reference atomics plus negation-inferred allows up to `cap`
/// (the balancing cap when `None`), in canonical order.
pub fn training_atomics(reference: &PolicyDb, cap: Option<usize>) -> Result<(Vec<AtomicRule>, Augmentation)> {
    let mut atomics = expand(reference)?;
    let cap = cap.unwrap_or_else(|| balance_cap(&atomics));
    let aug = augment_from_negations(reference, cap)?;
    info!(
        "{} reference atomics, {} inferred allows of {} candidates ({} contradictions dropped)",
        atomics.len(),
        aug.atomics.len(),
        aug.candidates,
        aug.dropped_contradictions
    );
    atomics.extend(aug.atomics.iter().cloned());
    Ok((atomics.into_iter().collect(), aug))
}

/// Text of the three uid sources of one policy.
#[derive(Clone, Copy, Debug, Default)]
pub struct UidSources<'a> {
    pub file_contexts: &'a str,
    pub init_rc: &'a str,
    pub seapp_contexts: &'a str,
}

/// Infers uids for `db` from each source set. A domain mapped by several
/// sets gets the most privileged bucket.
pub fn infer_uids(db: &PolicyDb, sources: &[UidSources<'_>], aid: &AidTable) -> UidInference {
    let mut out = UidInference::default();
    for s in sources {
        let fc = parse_file_contexts(s.file_contexts);
        let rc = parse_rc(s.init_rc);
        let seapp = parse_seapp(s.seapp_contexts);
        let part = infer_users(db, &fc.entries, &rc.entries, &seapp.entries, aid);
        out.warnings.extend(part.warnings);
        merge_into(&mut out.map, part.map);
    }
    out
}

fn merge_into(out: &mut UidMap, map: UidMap) {
    for (k, v) in map {
        out.entry(k).and_modify(|b| *b = b.higher(v)).or_insert(v);
    }
}

/// Merges several uid maps, keeping the most privileged bucket of a domain.
pub fn merge_uid_maps(maps: impl IntoIterator<Item = UidMap>) -> UidMap {
    let mut out = UidMap::new();
    for m in maps {
        merge_into(&mut out, m);
    }
    out
}

/// Parses every CoNLL-U text, extracts keyword triplets and embeds the
/// resulting documents together.
pub fn comment_vectors(conllu: &[&str], corpus: &Corpus, cfg: &Doc2VecConfig) -> Result<Embedding> {
    let mut sentences = Vec::new();
    for text in conllu {
        sentences.extend(parse_conllu(text)?);
    }
    let docs = triplet_docs(&sentences, corpus)?;
    info!("{} comment sentences in {} documents", sentences.len(), docs.len());
    embed_docs(&docs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_cil, ParseOptions};
    use crate::policy::Ident;
    use crate::uid::UidBucket;

    const POLICY: &str = "
        (type a) (type b) (type c) (type d) (type t)
        (typeattribute dom)
        (typeattributeset dom (a b c d))
        (typeattribute base_typeattr_1)
        (typeattributeset base_typeattr_1 (and (dom) (not (a b c))))
        (allow a t (file (read)))
        (neverallow base_typeattr_1 t (file (read write open getattr)))
    ";

    #[test]
    fn balanced_augmentation_stops_at_the_neverallow_count() {
        let db = parse_cil(POLICY, &ParseOptions::default()).unwrap();
        let atomics = expand(&db).unwrap();
        assert_eq!(balance_cap(&atomics), 3);
        let (all, aug) = training_atomics(&db, None).unwrap();
        assert_eq!(aug.atomics.len(), 3);
        assert_eq!(aug.candidates, 11);
        let allow = all.iter().filter(|a| a.label == Op::Allow).count();
        assert_eq!(allow, all.len() - allow);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn explicit_cap_overrides_balance() {
        let db = parse_cil(POLICY, &ParseOptions::default()).unwrap();
        assert_eq!(training_atomics(&db, Some(0)).unwrap().0.len(), 5);
        assert_eq!(training_atomics(&db, Some(100)).unwrap().0.len(), 16);
    }

    #[test]
    fn merged_uid_maps_prefer_known_buckets() {
        let id = |s: &str| Ident::new(s).unwrap();
        let first = UidMap::from([(id("x"), UidBucket::Unknown), (id("y"), UidBucket::App)]);
        let second = UidMap::from([(id("x"), UidBucket::Media), (id("y"), UidBucket::Unknown)]);
        let merged = merge_uid_maps([first, second]);
        assert_eq!(merged[&id("x")], UidBucket::Media);
        assert_eq!(merged[&id("y")], UidBucket::App);
    }

    #[test]
    fn comment_vectors_cover_every_document() {
        let text = "# unit = a\n# polarity = allow\n1\tread\tread\tVERB\t_\t_\t0\troot\t_\t_\n2\tlogs\tlog\tNOUN\t_\t_\t1\tobj\t_\t_\n\n";
        let cfg = Doc2VecConfig {
            dim: 8,
            epochs: 2,
            ..Doc2VecConfig::default()
        };
        let emb = comment_vectors(&[text, text], &Corpus::bundled(), &cfg).unwrap();
        assert_eq!(emb.vectors.len(), 1);
        assert_eq!(emb.vectors[0].vector.len(), 8);
    }
}
