//! Joint wide and deep classifier over encoded atomic rules, the violation
//! predicate, gradient checking and the nearest-neighbour baseline.
//!
//! The wide part is a sparse logistic regression over one-hot and hashed
//! cross features. The deep part looks up subject, target, class and
//! permission embeddings, concatenates them with both comment vectors, the
//! flags and the uid one-hot, and feeds four ReLU layers into one logit.
//! Both logits and a shared bias add up before the sigmoid.
//!
//! Parameters are kept in `f64` while training; model files store `f32`.

mod baseline;
mod gradcheck;
mod io;
mod net;
mod params;
mod train;

pub use baseline::{nn_classify, NeighborIndex, NeighborVerdict, Verdict};
pub use gradcheck::{gradient_check, GradCheck, GroupCheck};
pub use io::{read_model, write_model, SEPM_VERSION};
pub use params::{Architecture, DeepParams, Dense, WideWeights};
pub use train::{train, Trained};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::AtomicRecord;
use crate::error::Result;
use crate::features::{EncodedExample, EncoderContext, FlagSpec, FlagTable, Vocabulary, WideLayout, DEFAULT_HASH_BUCKETS};
use crate::nlp::DocVectors;
use crate::policy::{AtomicRule, Ident, Op};
use crate::report::Finding;
use crate::uid::UidMap;

/// Probability at or above which a rule is classified allow.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// AdaGrad rate for the wide part and shared bias.
    pub lr_wide: f64,
    /// Plain SGD rate for the deep part.
    pub lr_deep: f64,
    pub test_frac: f64,
    pub hash_buckets: u32,
    pub emb_dims: [usize; 4],
    pub hidden: Vec<usize>,
    pub flag_spec: FlagSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            epochs: 20,
            batch_size: 256,
            lr_wide: 0.1,
            lr_deep: 0.01,
            test_frac: 0.10,
            hash_buckets: DEFAULT_HASH_BUCKETS,
            emb_dims: [64, 64, 8, 8],
            hidden: vec![256, 128, 64, 32],
            flag_spec: FlagSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub arch: Architecture,
    pub wide: WideWeights,
    pub deep: DeepParams,
}

impl Model {
    /// Zero wide weights; deep parameters drawn from `rng`.
    pub fn init(config: TrainConfig, vocab: Vocabulary, vec_dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let layout = WideLayout::new(config.hash_buckets, &vocab);
        let arch = Architecture {
            wide_dim: layout.dim as usize,
            emb_rows: vocab.rows(),
            emb_dims: config.emb_dims,
            vec_dim,
            hidden: config.hidden.clone(),
        };
        let deep = DeepParams::init(&arch, rng);
        Model {
            wide: WideWeights::zeros(arch.wide_dim),
            deep,
            arch,
            vocab,
            config,
        }
    }

    pub fn layout(&self) -> WideLayout {
        WideLayout::new(self.config.hash_buckets, &self.vocab)
    }

    /// Encoder for this model's vocabulary with the given side inputs.
    pub fn encoder(
        &self,
        flags: FlagTable,
        uids: UidMap,
        vectors: DocVectors,
        units: BTreeMap<Ident, Ident>,
    ) -> EncoderContext {
        EncoderContext::new(self.vocab.clone(), self.config.hash_buckets, flags, uids, vectors, units)
    }

    pub fn logit(&self, e: &EncodedExample) -> f64 {
        net::forward(&self.arch, &self.wide, &self.deep, &[e]).logits()[0]
    }

    pub fn predict(&self, e: &EncodedExample) -> f64 {
        net::sigmoid(self.logit(e))
    }

    /// Probabilities for many examples, computed in fixed-size chunks.
    pub fn predict_all(&self, examples: &[EncodedExample]) -> Vec<f64> {
        examples
            .par_chunks(256)
            .flat_map_iter(|chunk| {
                let refs: Vec<&EncodedExample> = chunk.iter().collect();
                net::forward(&self.arch, &self.wide, &self.deep, &refs)
                    .logits()
                    .into_iter()
                    .map(net::sigmoid)
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn classify(&self, e: &EncodedExample) -> Op {
        classify_probability(self.predict(e))
    }

    /// Mean logistic loss.
    pub fn loss(&self, examples: &[EncodedExample]) -> f64 {
        let refs: Vec<&EncodedExample> = examples.iter().collect();
        net::mean_loss(&self.arch, &self.wide, &self.deep, &refs)
    }
}

pub fn classify_probability(p: f64) -> Op {
    if p >= THRESHOLD {
        Op::Allow
    } else {
        Op::Neverallow
    }
}

/// Binary metrics with allow as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Metrics {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Op, Op)>) -> Self {
        let mut m = Metrics::default();
        for (truth, predicted) in pairs {
            m.n += 1;
            match (truth, predicted) {
                (Op::Allow, Op::Allow) => m.tp += 1,
                (Op::Neverallow, Op::Allow) => m.fp += 1,
                (Op::Neverallow, Op::Neverallow) => m.tn += 1,
                (Op::Allow, Op::Neverallow) => m.fn_ += 1,
            }
        }
        m
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.n)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate(model: &Model, examples: &[EncodedExample]) -> Metrics {
    let probs = model.predict_all(examples);
    Metrics::from_pairs(examples.iter().zip(probs).map(|(e, p)| {
        let truth = if e.label == 1 { Op::Allow } else { Op::Neverallow };
        (truth, classify_probability(p))
    }))
}

/// A customized allow rule is unregulated when the model classifies it
/// neverallow. Findings come back in input order.
pub fn flag_unregulated(model: &Model, encoder: &EncoderContext, customized: &[AtomicRecord]) -> Vec<Finding> {
    let allow: Vec<&AtomicRecord> = customized.iter().filter(|r| r.label == Op::Allow).collect();
    let atomics: Vec<AtomicRule> = allow.iter().map(|r| r.rule()).collect();
    let examples = encoder.encode_all(&atomics);
    let probs = model.predict_all(&examples);
    allow
        .into_iter()
        .zip(atomics)
        .zip(probs)
        .filter(|(_, p)| classify_probability(*p) == Op::Neverallow)
        .map(|((record, atomic), probability)| Finding::new(atomic, probability, record.source.clone()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Uniformly random atomics.
    Random,
    /// Whole (subject, target) pairs, so test pairs never occur in training.
    UnseenPair,
}

/// Splits into (train, test), each in canonical order. The test part holds
/// `round(frac * n)` atomics (at least that many for pair splits).
pub fn split_atomics(atomics: &[AtomicRule], frac: f64, seed: u64, mode: SplitMode) -> (Vec<AtomicRule>, Vec<AtomicRule>) {
    let mut rng = params::seeded_rng(seed ^ 0x5917);
    let want = (frac * atomics.len() as f64).round() as usize;
    let mut test_idx: BTreeSet<usize> = BTreeSet::new();
    match mode {
        SplitMode::Random => {
            let mut order: Vec<usize> = (0..atomics.len()).collect();
            order.shuffle(&mut rng);
            test_idx.extend(order.into_iter().take(want));
        }
        SplitMode::UnseenPair => {
            let mut groups: BTreeMap<(&Ident, &Ident), Vec<usize>> = BTreeMap::new();
            for (i, a) in atomics.iter().enumerate() {
                groups.entry((&a.subject, &a.target)).or_default().push(i);
            }
            let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            for g in groups {
                if test_idx.len() >= want {
                    break;
                }
                test_idx.extend(g);
            }
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, a) in atomics.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(a.clone());
        } else {
            train.push(a.clone());
        }
    }
    train.sort();
    test.sort();
    (train, test)
}

/// Side inputs of the encoder besides the vocabulary.
#[derive(Clone, Debug, Default)]
pub struct SideInputs {
    pub flags: FlagTable,
    pub uids: UidMap,
    pub vectors: DocVectors,
    pub units: BTreeMap<Ident, Ident>,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: Model,
    pub encoder: EncoderContext,
    pub train: Vec<AtomicRule>,
    pub test: Vec<AtomicRule>,
    pub metrics: Metrics,
    pub epoch_losses: Vec<f64>,
}

/// Splits `atomics`, builds the vocabulary from the training part, trains
/// and evaluates on the held-out part.
pub fn fit(atomics: &[AtomicRule], side: SideInputs, cfg: &TrainConfig, mode: SplitMode) -> Result<FitReport> {
    let (train_atomics, test_atomics) = split_atomics(atomics, cfg.test_frac, cfg.seed, mode);
    let vocab = Vocabulary::build(&train_atomics);
    let encoder = EncoderContext::new(vocab.clone(), cfg.hash_buckets, side.flags, side.uids, side.vectors, side.units);
    let train_examples = encoder.encode_all(&train_atomics);
    let trained = train(&train_examples, vocab, encoder.vec_dim(), cfg)?;
    let test_examples = encoder.encode_all(&test_atomics);
    let metrics = evaluate(&trained.model, &test_examples);
    Ok(FitReport {
        model: trained.model,
        encoder,
        train: train_atomics,
        test: test_atomics,
        metrics,
        epoch_losses: trained.epoch_losses,
    })
}

/// Accuracy of the baseline on `test` given `train`: over all rules
/// (unclassified counted wrong) and over classified rules only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub n: usize,
    pub correct: usize,
    pub unclassified: usize,
}

impl BaselineScore {
    pub fn accuracy_all(&self) -> f64 {
        ratio(self.correct, self.n)
    }

    pub fn accuracy_classified(&self) -> f64 {
        ratio(self.correct, self.n - self.unclassified)
    }
}

pub fn score_baseline(train: &[AtomicRule], test: &[AtomicRule], m: usize, sigma: f64) -> BaselineScore {
    let index = NeighborIndex::new(train);
    let mut score = BaselineScore::default();
    let verdicts: Vec<Verdict> = test.par_iter().map(|a| index.classify(a, m, sigma).verdict).collect();
    for (a, v) in test.iter().zip(verdicts) {
        score.n += 1;
        match v.op() {
            None => score.unclassified += 1,
            Some(op) if op == a.label => score.correct += 1,
            Some(_) => {}
        }
    }
    score
}

#[cfg(test)]
mod tests;
