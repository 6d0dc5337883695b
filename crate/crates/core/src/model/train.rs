use log::info;
use rand::seq::SliceRandom;

use super::net;
use super::params::seeded_rng;
use super::{Model, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{EncodedExample, Vocabulary};

const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch training of the joint model: AdaGrad on the wide weights and
/// shared bias, plain SGD on the deep parameters. Batches follow a seeded
/// shuffle per epoch; updates are applied in a fixed order on one thread.
///
/// A single example may be fit on its own; two or more examples must carry
/// both labels.
pub fn train(examples: &[EncodedExample], vocab: Vocabulary, vec_dim: usize, cfg: &TrainConfig) -> Result<Trained> {
    if examples.is_empty() {
        return Err(Error::DegenerateData("no training examples".into()));
    }
    if examples.len() > 1 && examples.iter().all(|e| e.label == examples[0].label) {
        return Err(Error::DegenerateData(format!(
            "all {} training examples share label {}",
            examples.len(),
            examples[0].label
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::DegenerateData("batch size must be positive".into()));
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut model = Model::init(cfg.clone(), vocab, vec_dim, &mut rng);
    let mut acc = vec![0.0f64; model.wide.w.len()];
    let mut acc_b = 0.0f64;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let g = net::gradients(&model.arch, &model.wide, &model.deep, &batch);
            total += g.loss;
            batches += 1;

            for (&i, &gi) in &g.wide {
                let i = i as usize;
                acc[i] += gi * gi;
                model.wide.w[i] -= cfg.lr_wide * gi / (acc[i].sqrt() + ADAGRAD_EPS);
            }
            acc_b += g.bias * g.bias;
            model.wide.b -= cfg.lr_wide * g.bias / (acc_b.sqrt() + ADAGRAD_EPS);

            for ((_, p), (_, gp)) in model.deep.blocks_mut().into_iter().zip(g.deep.blocks()) {
                for (w, d) in p.iter_mut().zip(gp) {
                    *w -= cfg.lr_deep * d;
                }
            }
        }
        let mean = total / batches as f64;
        info!("epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(Trained { model, epoch_losses })
}
