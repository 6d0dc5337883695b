//! Paragraph vectors, distributed bag of words with negative sampling.
//!
//! Each document vector is trained to predict the tokens of its keyword
//! triplets against noise tokens drawn from the unigram distribution raised
//! to 0.75. Training is single-threaded and fully determined by the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TripletDoc;
use crate::error::{Error, Result};
use crate::policy::{Ident, Op};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Doc2VecConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negative: usize,
    pub lr_start: f32,
    pub lr_end: f32,
    pub seed: u64,
}

impl Default for Doc2VecConfig {
    fn default() -> Self {
        Doc2VecConfig {
            dim: 300,
            epochs: 40,
            negative: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub unit: Ident,
    pub polarity: Op,
    pub vector: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub vectors: Vec<DocVector>,
    /// Mean negative-sampling loss over all (document, token) pairs with a
    /// fixed set of noise tokens, before and after training.
    pub loss_before: f64,
    pub loss_after: f64,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Trainer {
    dim: usize,
    docs: Vec<f32>,
    out: Vec<f32>,
}

impl Trainer {
    fn doc(&self, d: usize) -> &[f32] {
        &self.docs[d * self.dim..(d + 1) * self.dim]
    }

    fn word(&self, w: usize) -> &[f32] {
        &self.out[w * self.dim..(w + 1) * self.dim]
    }

    /// One SGD step on document `d` predicting `word` against `noise`.
    fn step(&mut self, d: usize, word: usize, noise: &[usize], lr: f32, grad: &mut [f32]) {
        let dim = self.dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let targets = std::iter::once((word, 1.0f32)).chain(noise.iter().filter(|&&n| n != word).map(|&n| (n, 0.0)));
        for (w, label) in targets {
            let g = (label - sigmoid(dot(self.doc(d), self.word(w)))) * lr;
            let (dv, ov) = (&self.docs[d * dim..(d + 1) * dim], &mut self.out[w * dim..(w + 1) * dim]);
            for k in 0..dim {
                grad[k] += g * ov[k];
                ov[k] += g * dv[k];
            }
        }
        for (v, g) in self.docs[d * dim..(d + 1) * dim].iter_mut().zip(grad.iter()) {
            *v += g;
        }
    }

    fn loss(&self, pairs: &[(usize, usize)], noise: &[Vec<usize>]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let mut total = 0.0f64;
        for (&(d, w), negs) in pairs.iter().zip(noise) {
            let mut l = -(sigmoid(dot(self.doc(d), self.word(w))) as f64).max(1e-12).ln();
            for &n in negs.iter().filter(|&&n| n != w) {
                l -= (sigmoid(-dot(self.doc(d), self.word(n))) as f64).max(1e-12).ln();
            }
            total += l;
        }
        total / pairs.len() as f64
    }
}

pub fn embed_docs(docs: &[TripletDoc], cfg: &Doc2VecConfig) -> Result<Embedding> {
    let token_lists: Vec<Vec<&str>> = docs
        .iter()
        .map(|d| d.triplets.iter().flat_map(|t| t.tokens()).collect())
        .collect();
    if token_lists.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &token_lists {
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
    }
    let vocab: BTreeMap<&str, usize> = counts.keys().enumerate().map(|(i, t)| (*t, i)).collect();
    let noise_dist =
        WeightedIndex::new(counts.values().map(|&c| (c as f64).powf(0.75))).expect("non-empty positive weights");

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = 0.5 / dim as f32;
    let mut docs_init: Vec<f32> = (0..docs.len() * dim).map(|_| rng.gen_range(-half..half)).collect();
    for (d, tokens) in token_lists.iter().enumerate() {
        if tokens.is_empty() {
            docs_init[d * dim..(d + 1) * dim].fill(0.0);
        }
    }
    let mut trainer = Trainer {
        dim,
        docs: docs_init,
        out: vec![0.0; vocab.len() * dim],
    };

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (d, tokens) in token_lists.iter().enumerate() {
        pairs.extend(tokens.iter().map(|t| (d, vocab[t])));
    }
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let eval_noise: Vec<Vec<usize>> = pairs
        .iter()
        .map(|_| (0..cfg.negative).map(|_| noise_dist.sample(&mut eval_rng)).collect())
        .collect();
    let loss_before = trainer.loss(&pairs, &eval_noise);

    let total = (cfg.epochs * pairs.len()).max(1) as f32;
    let mut order = pairs.clone();
    let mut noise = vec![0usize; cfg.negative];
    let mut grad = vec![0.0f32; dim];
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &(d, w) in &order {
            let lr = cfg.lr_start - (cfg.lr_start - cfg.lr_end) * (step as f32 / total);
            for n in noise.iter_mut() {
                *n = noise_dist.sample(&mut rng);
            }
            trainer.step(d, w, &noise, lr, &mut grad);
            step += 1;
        }
    }
    let loss_after = trainer.loss(&pairs, &eval_noise);

    let vectors = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| DocVector {
            unit: doc.unit.clone(),
            polarity: doc.polarity,
            vector: trainer.doc(d).to_vec(),
        })
        .collect();
    Ok(Embedding {
        vectors,
        loss_before,
        loss_after,
    })
}

/// `unit<TAB>polarity<TAB>v1 v2 ...` per line. Floats print in their
/// shortest round-trip form.
pub fn write_vectors(vectors: &[DocVector]) -> String {
    let mut out = String::new();
    for v in vectors {
        write!(out, "{}\t{}\t", v.unit, v.polarity).unwrap();
        for (i, x) in v.vector.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_vectors(text: &str) -> Result<Vec<DocVector>> {
    let mut out = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |msg: &str| Error::Format(format!("vector file line {}: {msg}", i + 1));
        let mut fields = line.splitn(3, '\t');
        let (Some(unit), Some(polarity), Some(values)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad("expected three tab-separated fields"));
        };
        let vector = values
            .split_whitespace()
            .map(|x| x.parse::<f32>().map_err(|_| bad("bad float")))
            .collect::<Result<Vec<f32>>>()?;
        if *dim.get_or_insert(vector.len()) != vector.len() {
            return Err(bad("dimension differs from earlier lines"));
        }
        out.push(DocVector {
            unit: Ident::new(unit)?,
            polarity: polarity.parse().map_err(|e: String| bad(&e))?,
            vector,
        });
    }
    Ok(out)
}

/// Lookup of comment vectors by (unit, polarity).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DocVectors {
    pub dim: usize,
    map: BTreeMap<(Ident, Op), Vec<f32>>,
}

impl DocVectors {
    pub fn new(dim: usize, vectors: Vec<DocVector>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for v in vectors {
            if v.vector.len() != dim {
                return Err(Error::Format(format!(
                    "vector for {} has {} components, expected {dim}",
                    v.unit,
                    v.vector.len()
                )));
            }
            map.insert((v.unit, v.polarity), v.vector);
        }
        Ok(DocVectors { dim, map })
    }

    /// Builds from a vector list, taking the dimension from its first entry
    /// (or `default_dim` when empty).
    pub fn from_list(vectors: Vec<DocVector>, default_dim: usize) -> Result<Self> {
        let dim = vectors.first().map_or(default_dim, |v| v.vector.len());
        Self::new(dim, vectors)
    }

    pub fn get(&self, unit: &Ident, polarity: Op) -> Option<&[f32]> {
        self.map.get(&(unit.clone(), polarity)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Ident, Op), &[f32])> {
        self.map.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
