//! Batched forward and backward passes.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Axis};

use super::params::{Architecture, DeepParams, WideWeights};
use crate::features::{EncodedExample, FLAG_COUNT};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss of logit `z` against target `y` in {0, 1}.
pub(crate) fn logistic_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

pub(crate) struct Forward {
    pub inputs: Array2<f64>,
    /// Post-activation output of each hidden layer.
    pub acts: Vec<Array2<f64>>,
    pub wide_logits: Array1<f64>,
    pub deep_logits: Array1<f64>,
}

impl Forward {
    pub fn logits(&self) -> Array1<f64> {
        &self.wide_logits + &self.deep_logits
    }
}

/// Gradients of the mean logistic loss over a batch.
pub(crate) struct Grads {
    pub loss: f64,
    /// Summed per index; indices absent have zero gradient.
    pub wide: BTreeMap<u32, f64>,
    pub bias: f64,
    pub deep: DeepParams,
}

pub(crate) fn deep_inputs(arch: &Architecture, deep: &DeepParams, examples: &[&EncodedExample]) -> Array2<f64> {
    let mut x = Array2::zeros((examples.len(), arch.input_dim()));
    for (mut row, e) in x.outer_iter_mut().zip(examples) {
        let row = row.as_slice_mut().expect("standard layout");
        let mut at = 0;
        for f in 0..4 {
            let d = arch.emb_dims[f];
            let id = (e.deep_ids[f] as usize).min(arch.emb_rows[f] - 1);
            row[at..at + d].copy_from_slice(deep.emb[f].row(id).as_slice().expect("standard layout"));
            at += d;
        }
        for v in [&e.allow_vec, &e.neverallow_vec] {
            for (dst, &src) in row[at..at + arch.vec_dim].iter_mut().zip(v.iter()) {
                *dst = src as f64;
            }
            at += arch.vec_dim;
        }
        for (k, on) in e.flags.to_array().into_iter().enumerate() {
            row[at + k] = on as u8 as f64;
        }
        at += FLAG_COUNT;
        row[at + e.uid.index()] = 1.0;
    }
    x
}

pub(crate) fn wide_logit(wide: &WideWeights, e: &EncodedExample) -> f64 {
    e.wide.iter().map(|&i| wide.w.get(i as usize).copied().unwrap_or(0.0)).sum::<f64>() + wide.b
}

pub(crate) fn forward(
    arch: &Architecture,
    wide: &WideWeights,
    deep: &DeepParams,
    examples: &[&EncodedExample],
) -> Forward {
    let inputs = deep_inputs(arch, deep, examples);
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(deep.layers.len());
    for layer in &deep.layers {
        let prev = acts.last().unwrap_or(&inputs);
        let mut z = prev.dot(&layer.w.t());
        z += &layer.b;
        z.mapv_inplace(|v| v.max(0.0));
        acts.push(z);
    }
    let deep_logits = acts.last().unwrap_or(&inputs).dot(&deep.out);
    let wide_logits = examples.iter().map(|e| wide_logit(wide, e)).collect();
    Forward {
        inputs,
        acts,
        wide_logits,
        deep_logits,
    }
}

pub(crate) fn gradients(
    arch: &Architecture,
    wide: &WideWeights,
    deep: &DeepParams,
    examples: &[&EncodedExample],
) -> Grads {
    let n = examples.len().max(1) as f64;
    let fwd = forward(arch, wide, deep, examples);
    let logits = fwd.logits();
    let mut loss = 0.0;
    let mut dz = Array1::zeros(examples.len());
    for (i, e) in examples.iter().enumerate() {
        let y = e.target();
        loss += logistic_loss(logits[i], y);
        dz[i] = (sigmoid(logits[i]) - y) / n;
    }

    let mut wide_grad: BTreeMap<u32, f64> = BTreeMap::new();
    for (e, &d) in examples.iter().zip(dz.iter()) {
        for &i in &e.wide {
            *wide_grad.entry(i).or_default() += d;
        }
    }

    let mut g = deep.zeros_like();
    let last = fwd.acts.last().unwrap_or(&fwd.inputs);
    g.out = last.t().dot(&dz);
    let mut dh = dz
        .view()
        .insert_axis(Axis(1))
        .dot(&deep.out.view().insert_axis(Axis(0)));
    for k in (0..deep.layers.len()).rev() {
        let mut dzk = std::mem::take(&mut dh);
        dzk.zip_mut_with(&fwd.acts[k], |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        let prev = if k == 0 { &fwd.inputs } else { &fwd.acts[k - 1] };
        g.layers[k].w = dzk.t().dot(prev);
        g.layers[k].b = dzk.sum_axis(Axis(0));
        if k > 0 {
            dh = dzk.dot(&deep.layers[k].w);
        } else {
            let w_emb = deep.layers[0].w.slice(s![.., 0..arch.emb_width()]);
            let dx = dzk.dot(&w_emb);
            for (row, e) in dx.outer_iter().zip(examples) {
                let mut at = 0;
                for f in 0..4 {
                    let d = arch.emb_dims[f];
                    let id = (e.deep_ids[f] as usize).min(arch.emb_rows[f] - 1);
                    let mut dst = g.emb[f].row_mut(id);
                    dst += &row.slice(s![at..at + d]);
                    at += d;
                }
            }
        }
    }

    Grads {
        loss: loss / n,
        wide: wide_grad,
        bias: dz.sum(),
        deep: g,
    }
}

/// Mean logistic loss without gradients.
pub(crate) fn mean_loss(
    arch: &Architecture,
    wide: &WideWeights,
    deep: &DeepParams,
    examples: &[&EncodedExample],
) -> f64 {
    let logits = forward(arch, wide, deep, examples).logits();
    let total: f64 = examples
        .iter()
        .zip(logits.iter())
        .map(|(e, &z)| logistic_loss(z, e.target()))
        .sum();
    total / examples.len().max(1) as f64
}
