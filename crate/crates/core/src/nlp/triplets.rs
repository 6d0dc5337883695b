//! Keyword triplet extraction over a dependency tree.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, DepSentence, DepToken};
use crate::error::{Error, Result};
use crate::policy::{Ident, Op};

/// (action, complement, resource). The complement is the sorted,
/// space-joined lemmas of the resource's modifiers, or empty.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeywordTriplet {
    pub action: String,
    pub complement: String,
    pub resource: String,
}

impl KeywordTriplet {
    pub fn new(action: &str, complement: &str, resource: &str) -> Self {
        KeywordTriplet {
            action: action.to_string(),
            complement: complement.to_string(),
            resource: resource.to_string(),
        }
    }

    /// The triplet as a short normalized sentence: action, complement words,
    /// resource, skipping empty parts.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.action.as_str())
            .chain(self.complement.split_whitespace())
            .chain(std::iter::once(self.resource.as_str()))
            .filter(|t| !t.is_empty())
    }
}

fn base_rel(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

fn lemma(t: &DepToken) -> String {
    t.lemma.to_lowercase()
}

struct Tree<'a> {
    sentence: &'a DepSentence,
    children: Vec<Vec<usize>>,
}

impl<'a> Tree<'a> {
    fn new(sentence: &'a DepSentence) -> Self {
        let mut children = vec![Vec::new(); sentence.tokens.len() + 1];
        for t in &sentence.tokens {
            children[t.head].push(t.index);
        }
        Tree { sentence, children }
    }

    fn tok(&self, i: usize) -> &'a DepToken {
        &self.sentence.tokens[i - 1]
    }

    fn children(&self, i: usize) -> impl Iterator<Item = &'a DepToken> + '_ {
        self.children[i].iter().map(|&c| self.tok(c))
    }

    fn is_direct_object(&self, i: usize) -> bool {
        match base_rel(&self.tok(i).deprel) {
            "obj" | "dobj" => true,
            "obl" => !self
                .children(i)
                .any(|c| base_rel(&c.deprel) == "case" && matches!(lemma(c).as_str(), "to" | "into")),
            _ => false,
        }
    }

    /// Direct objects and their conjuncts.
    fn objects(&self) -> BTreeSet<usize> {
        let mut objects: BTreeSet<usize> = (1..=self.sentence.tokens.len())
            .filter(|&i| self.is_direct_object(i))
            .collect();
        let mut frontier: Vec<usize> = objects.iter().copied().collect();
        while let Some(o) = frontier.pop() {
            for c in self.children(o) {
                if base_rel(&c.deprel) == "conj" && objects.insert(c.index) {
                    frontier.push(c.index);
                }
            }
        }
        objects
    }

    /// The token an object hangs off once conjunct links are climbed.
    fn governor(&self, mut i: usize) -> usize {
        while base_rel(&self.tok(i).deprel) == "conj" && self.tok(i).head != 0 {
            i = self.tok(i).head;
        }
        self.tok(i).head
    }

    fn complement(&self, i: usize) -> String {
        let mut words: Vec<String> = self
            .children(i)
            .filter(|c| matches!(base_rel(&c.deprel), "compound" | "amod" | "nmod"))
            .map(lemma)
            .collect();
        words.sort();
        words.join(" ")
    }

    fn predicate(&self, i: usize) -> String {
        match self.governor(i) {
            0 => String::new(),
            g if self.tok(g).upos == "VERB" => lemma(self.tok(g)),
            _ => String::new(),
        }
    }
}

pub fn extract_triplets(sentence: &DepSentence, corpus: &Corpus) -> Result<BTreeSet<KeywordTriplet>> {
    sentence.validate()?;
    let tree = Tree::new(sentence);
    let objects = tree.objects();
    let mut kt = BTreeSet::new();

    for verb in sentence.tokens.iter().filter(|t| t.upos == "VERB") {
        let action = lemma(verb);
        if !corpus.is_action(&action) {
            continue;
        }
        for &res in objects.iter().filter(|&&o| tree.governor(o) == verb.index) {
            kt.insert(KeywordTriplet {
                action: action.clone(),
                complement: tree.complement(res),
                resource: lemma(tree.tok(res)),
            });
        }
    }
    for &obj in &objects {
        let resource = lemma(tree.tok(obj));
        if !corpus.is_resource(&resource) {
            continue;
        }
        kt.insert(KeywordTriplet {
            action: tree.predicate(obj),
            complement: tree.complement(obj),
            resource,
        });
    }
    Ok(kt)
}

/// Keyword triplets of one (unit, polarity) document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletDoc {
    pub unit: Ident,
    pub polarity: Op,
    /// Per-sentence triplets concatenated; repeats across sentences kept.
    pub triplets: Vec<KeywordTriplet>,
}

/// Groups sentences by their unit and polarity comments, ordered by
/// (unit, polarity), and extracts each sentence's triplets.
pub fn triplet_docs(sentences: &[DepSentence], corpus: &Corpus) -> Result<Vec<TripletDoc>> {
    let per_sentence: Vec<BTreeSet<KeywordTriplet>> = sentences
        .par_iter()
        .map(|s| extract_triplets(s, corpus))
        .collect::<Result<_>>()?;
    let mut docs: BTreeMap<(Ident, Op), Vec<KeywordTriplet>> = BTreeMap::new();
    for (i, (s, triplets)) in sentences.iter().zip(per_sentence).enumerate() {
        let (Some(unit), Some(polarity)) = (&s.unit, s.polarity) else {
            return Err(Error::Format(format!("sentence {} lacks unit or polarity comments", i + 1)));
        };
        docs.entry((unit.clone(), polarity)).or_default().extend(triplets);
    }
    Ok(docs
        .into_iter()
        .map(|((unit, polarity), triplets)| TripletDoc {
            unit,
            polarity,
            triplets,
        })
        .collect())
}
