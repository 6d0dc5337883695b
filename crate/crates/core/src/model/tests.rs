use std::collections::BTreeMap;

use super::*;
use crate::error::Error;
use crate::features::FlagTable;
use crate::nlp::{DocVector, DocVectors};
use crate::uid::UidBucket;

fn id(s: &str) -> Ident {
    Ident::new(s).unwrap()
}

fn atomic(s: &str, t: &str, c: &str, p: &str, label: Op) -> AtomicRule {
    AtomicRule::new(id(s), id(t), id(c), id(p), label)
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        batch_size: 8,
        hash_buckets: 1024,
        emb_dims: [4, 4, 2, 2],
        hidden: vec![8, 6, 4, 3],
        ..TrainConfig::default()
    }
}

/// Accesses to `secret_t` are forbidden, everything else is allowed.
fn toy_atomics() -> Vec<AtomicRule> {
    let mut out = Vec::new();
    for s in 0..6 {
        for t in ["a_t", "b_t", "c_t", "secret_t"] {
            for p in ["read", "write"] {
                let label = if t == "secret_t" { Op::Neverallow } else { Op::Allow };
                out.push(atomic(&format!("d{s}"), t, "file", p, label));
            }
        }
    }
    out
}

fn vectors() -> DocVectors {
    let vecs = (0..6)
        .flat_map(|s| {
            [Op::Allow, Op::Neverallow].map(|pol| DocVector {
                unit: id(&format!("d{s}")),
                polarity: pol,
                vector: vec![0.1 * s as f32, -0.2, if pol == Op::Allow { 0.3 } else { -0.3 }],
            })
        })
        .collect();
    DocVectors::new(3, vecs).unwrap()
}

fn toy_encoder(atomics: &[AtomicRule], cfg: &TrainConfig) -> EncoderContext {
    let uids: UidMap = BTreeMap::from([(id("d0"), UidBucket::Media), (id("d1"), UidBucket::App)]);
    EncoderContext::new(
        Vocabulary::build(atomics),
        cfg.hash_buckets,
        FlagTable::default(),
        uids,
        vectors(),
        BTreeMap::new(),
    )
}

fn random_model(cfg: &TrainConfig, enc: &EncoderContext, seed: u64) -> Model {
    let mut rng = params::seeded_rng(seed);
    let mut model = Model::init(cfg.clone(), enc.vocab.clone(), enc.vec_dim(), &mut rng);
    use rand::Rng;
    for w in model.wide.w.iter_mut() {
        *w = rng.gen_range(-0.3..0.3);
    }
    model.wide.b = 0.17;
    for (_, block) in model.deep.blocks_mut() {
        for v in block.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    model
}

/// Plain-loop forward pass written independently of the batched one.
fn reference_logit(m: &Model, e: &EncodedExample) -> f64 {
    let mut wide = m.wide.b;
    for &i in &e.wide {
        wide += m.wide.w[i as usize];
    }
    let mut x: Vec<f64> = Vec::new();
    for f in 0..4 {
        for j in 0..m.arch.emb_dims[f] {
            x.push(m.deep.emb[f][[e.deep_ids[f] as usize, j]]);
        }
    }
    x.extend(e.allow_vec.iter().map(|&v| v as f64));
    x.extend(e.neverallow_vec.iter().map(|&v| v as f64));
    x.extend(e.flags.to_array().iter().map(|&b| if b { 1.0 } else { 0.0 }));
    for k in 0..UidBucket::ALL.len() {
        x.push(if k == e.uid.index() { 1.0 } else { 0.0 });
    }
    for layer in &m.deep.layers {
        let (rows, cols) = layer.w.dim();
        assert_eq!(cols, x.len());
        let mut next = vec![0.0; rows];
        for r in 0..rows {
            let mut z = layer.b[r];
            for c in 0..cols {
                z += layer.w[[r, c]] * x[c];
            }
            next[r] = if z > 0.0 { z } else { 0.0 };
        }
        x = next;
    }
    let deep: f64 = x.iter().zip(m.deep.out.iter()).map(|(a, b)| a * b).sum();
    wide + deep
}

#[test]
fn zero_weights_predict_one_half() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let mut model = random_model(&cfg, &enc, 1);
    model.wide = WideWeights::zeros(model.arch.wide_dim);
    model.deep = model.deep.zeros_like();
    for e in enc.encode_all(&atomics) {
        assert_eq!(model.predict(&e), 0.5);
    }
}

#[test]
fn batched_forward_matches_reference() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let model = random_model(&cfg, &enc, 2);
    let examples = enc.encode_all(&atomics[..20]);
    let probs = model.predict_all(&examples);
    for (e, p) in examples.iter().zip(probs) {
        let z = reference_logit(&model, e);
        assert!((model.logit(e) - z).abs() < 1e-10);
        assert!((p - net::sigmoid(z)).abs() < 1e-10);
    }
}

#[test]
fn prediction_is_monotone_in_active_wide_weight() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let mut model = random_model(&cfg, &enc, 3);
    let e = enc.encode(&atomics[0]);
    let mut last = model.predict(&e);
    for _ in 0..5 {
        model.wide.w[e.wide[0] as usize] += 0.5;
        let p = model.predict(&e);
        assert!(p > last);
        last = p;
    }
}

#[test]
fn zero_deep_part_leaves_wide_logistic_regression() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let mut model = random_model(&cfg, &enc, 4);
    model.deep.out.fill(0.0);
    for e in enc.encode_all(&atomics) {
        let z: f64 = e.wide.iter().map(|&i| model.wide.w[i as usize]).sum::<f64>() + model.wide.b;
        assert!((model.logit(&e) - z).abs() < 1e-12);
    }
}

#[test]
fn wide_gradient_is_residual_times_count() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let model = random_model(&cfg, &enc, 5);
    let e = enc.encode(&atomics[3]);
    let g = net::gradients(&model.arch, &model.wide, &model.deep, &[&e]);
    let residual = model.predict(&e) - e.target();
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for &i in &e.wide {
        *counts.entry(i).or_default() += 1.0;
    }
    assert_eq!(g.wide.len(), counts.len());
    for (i, c) in counts {
        assert!((g.wide[&i] - residual * c).abs() < 1e-12);
    }
    assert!((g.bias - residual).abs() < 1e-12);
}

#[test]
fn unused_embedding_rows_get_no_gradient() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let model = random_model(&cfg, &enc, 6);
    let e = enc.encode(&atomics[0]);
    let g = net::gradients(&model.arch, &model.wide, &model.deep, &[&e]);
    for f in 0..4 {
        for (row, values) in g.deep.emb[f].outer_iter().enumerate() {
            if row != e.deep_ids[f] as usize {
                assert!(values.iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn gradient_check_passes_on_random_examples() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let model = random_model(&cfg, &enc, 7);
    let examples = enc.encode_all(&[atomics[0].clone(), atomics[7].clone(), atomics[30].clone()]);
    let check = gradient_check(&model, &examples, 1e-6);
    assert_eq!(check.groups.len(), 2 + 4 + 2 * cfg.hidden.len() + 1);
    assert!(check.max_rel_error < 1e-4, "{check:?}");
}

#[test]
fn single_example_is_memorized() {
    let cfg = TrainConfig {
        epochs: 50,
        ..small_config()
    };
    let a = atomic("d0", "a_t", "file", "read", Op::Allow);
    let enc = toy_encoder(std::slice::from_ref(&a), &cfg);
    let examples = enc.encode_all(std::slice::from_ref(&a));
    let trained = train(&examples, enc.vocab.clone(), enc.vec_dim(), &cfg).unwrap();
    assert!(trained.model.predict(&examples[0]) > 0.9);
}

#[test]
fn training_learns_toy_rule_and_loss_falls() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let examples = enc.encode_all(&atomics);
    let trained = train(&examples, enc.vocab.clone(), enc.vec_dim(), &cfg).unwrap();
    let losses = &trained.epoch_losses;
    assert_eq!(losses.len(), cfg.epochs);
    assert!(losses.last().unwrap() < &(losses[0] * 0.5));
    assert_eq!(evaluate(&trained.model, &examples).accuracy(), 1.0);
}

#[test]
fn training_is_deterministic_and_files_round_trip() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let examples = enc.encode_all(&atomics);
    let bytes = |m: &Model| {
        let mut buf = Vec::new();
        write_model(&mut buf, m).unwrap();
        buf
    };
    let a = train(&examples, enc.vocab.clone(), enc.vec_dim(), &cfg).unwrap();
    let b = train(&examples, enc.vocab.clone(), enc.vec_dim(), &cfg).unwrap();
    assert_eq!(bytes(&a.model), bytes(&b.model));
    assert_eq!(a.epoch_losses, b.epoch_losses);

    let file = bytes(&a.model);
    let back = read_model(&mut file.as_slice()).unwrap();
    assert_eq!(bytes(&back), file);
    for e in &examples {
        assert!((back.predict(e) - a.model.predict(e)).abs() < 1e-4);
    }
    assert!(read_model(&mut &file[..file.len() - 1]).is_err());
    assert!(read_model(&mut &b"SEPX"[..]).is_err());
}

#[test]
fn degenerate_training_sets_are_rejected() {
    let cfg = small_config();
    let atomics: Vec<AtomicRule> = toy_atomics().into_iter().filter(|a| a.label == Op::Allow).collect();
    let enc = toy_encoder(&atomics, &cfg);
    let examples = enc.encode_all(&atomics);
    let err = |r: Result<Trained>| matches!(r, Err(Error::DegenerateData(_)));
    assert!(err(train(&examples, enc.vocab.clone(), 3, &cfg)));
    assert!(err(train(&[], enc.vocab.clone(), 3, &cfg)));
    let both = enc.encode_all(&toy_atomics());
    let zero_batch = TrainConfig {
        batch_size: 0,
        ..cfg.clone()
    };
    assert!(err(train(&both, enc.vocab.clone(), 3, &zero_batch)));
}

#[test]
fn flags_only_allow_rules_predicted_neverallow() {
    let cfg = small_config();
    let atomics = toy_atomics();
    let enc = toy_encoder(&atomics, &cfg);
    let examples = enc.encode_all(&atomics);
    let model = train(&examples, enc.vocab.clone(), enc.vec_dim(), &cfg).unwrap().model;
    let custom = vec![
        AtomicRecord::new(&atomic("d2", "secret_t", "file", "read", Op::Allow), "img-a"),
        AtomicRecord::new(&atomic("d2", "a_t", "file", "read", Op::Allow), "img-a"),
        AtomicRecord::new(&atomic("d3", "secret_t", "file", "write", Op::Neverallow), "img-b"),
    ];
    let found = flag_unregulated(&model, &enc, &custom);
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].atomic.target.as_str(), "secret_t");
    assert_eq!(found[0].source_image, "img-a");
    assert!(found[0].probability < THRESHOLD);
    assert!(flag_unregulated(&model, &enc, &[]).is_empty());
}

#[test]
fn metrics_count_allow_as_positive() {
    let m = Metrics::from_pairs([
        (Op::Allow, Op::Allow),
        (Op::Allow, Op::Neverallow),
        (Op::Neverallow, Op::Neverallow),
        (Op::Neverallow, Op::Allow),
        (Op::Allow, Op::Allow),
    ]);
    assert_eq!((m.tp, m.fn_, m.tn, m.fp), (2, 1, 1, 1));
    assert_eq!(m.accuracy(), 0.6);
    assert!((m.recall() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(Metrics::default().accuracy(), 0.0);
}

#[test]
fn random_split_sizes_and_disjointness() {
    let atomics = toy_atomics();
    let (train, test) = split_atomics(&atomics, 0.25, 9, SplitMode::Random);
    assert_eq!(test.len(), 12);
    assert_eq!(train.len() + test.len(), atomics.len());
    assert!(test.iter().all(|a| !train.contains(a)));
    assert!(train.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(split_atomics(&atomics, 0.25, 9, SplitMode::Random), (train, test));
}

#[test]
fn unseen_pair_split_keeps_pairs_apart() {
    let atomics = toy_atomics();
    let (train, test) = split_atomics(&atomics, 0.2, 3, SplitMode::UnseenPair);
    assert!(test.len() >= 10);
    let pairs: BTreeSet<(&Ident, &Ident)> = train.iter().map(|a| (&a.subject, &a.target)).collect();
    assert!(test.iter().all(|a| !pairs.contains(&(&a.subject, &a.target))));
    assert_eq!(train.len() + test.len(), atomics.len());
}

#[test]
fn fit_reports_held_out_metrics() {
    let cfg = TrainConfig {
        test_frac: 0.25,
        ..small_config()
    };
    let report = fit(&toy_atomics(), SideInputs::default(), &cfg, SplitMode::Random).unwrap();
    assert_eq!(report.metrics.n, report.test.len());
    assert!(report.metrics.accuracy() >= 0.9, "{:?}", report.metrics);
}

fn neighbours_fixture(allow: usize, never: usize) -> (Vec<AtomicRule>, AtomicRule) {
    let target = atomic("app", "data_t", "file", "read", Op::Allow);
    let mut train = Vec::new();
    for i in 0..allow + never {
        let label = if i < allow { Op::Allow } else { Op::Neverallow };
        // Alternate which field differs so every neighbour shares exactly three.
        let n = match i % 4 {
            0 => atomic(&format!("s{i}"), "data_t", "file", "read", label),
            1 => atomic("app", &format!("t{i}"), "file", "read", label),
            2 => atomic("app", "data_t", &format!("c{i}"), "read", label),
            _ => atomic("app", "data_t", "file", &format!("p{i}"), label),
        };
        train.push(n);
    }
    // Two-field differences and an exact duplicate are not neighbours.
    train.push(atomic("x", "y", "file", "read", Op::Neverallow));
    train.push(atomic("app", "data_t", "file", "read", Op::Neverallow));
    (train, target)
}

#[test]
fn six_of_ten_neighbours_classify_allow() {
    let (train, target) = neighbours_fixture(6, 4);
    let v = nn_classify(&train, &target, 10, 0.55);
    assert_eq!((v.verdict, v.neighbor_count), (Verdict::Allow, 10));
    assert_eq!(v.majority_fraction, 0.6);
    assert_eq!(NeighborIndex::new(&train).classify(&target, 10, 0.55), v);
    assert_eq!(nn_classify(&train, &target, 10, 0.75).verdict, Verdict::Unclassified);
}

#[test]
fn nine_neighbours_stay_unclassified() {
    let (train, target) = neighbours_fixture(9, 0);
    let v = nn_classify(&train, &target, 10, 0.55);
    assert_eq!((v.verdict, v.neighbor_count), (Verdict::Unclassified, 9));
    assert_eq!(nn_classify(&train, &target, 9, 0.55).verdict, Verdict::Allow);
}

#[test]
fn ties_are_unclassified() {
    let (train, target) = neighbours_fixture(5, 5);
    assert_eq!(nn_classify(&train, &target, 10, 0.5).verdict, Verdict::Unclassified);
}

#[test]
fn baseline_score_counts_unclassified() {
    let (train, target) = neighbours_fixture(6, 4);
    let test = vec![target, atomic("lonely", "z", "file", "read", Op::Allow)];
    let s = score_baseline(&train, &test, 10, 0.55);
    assert_eq!((s.n, s.correct, s.unclassified), (2, 1, 1));
    assert_eq!(s.accuracy_all(), 0.5);
    assert_eq!(s.accuracy_classified(), 1.0);
}
