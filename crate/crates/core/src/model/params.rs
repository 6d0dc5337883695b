use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FLAG_COUNT, UID_COUNT};

/// Linear weights over the wide index space plus the shared output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct WideWeights {
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Embedding tables, hidden layers and the output projection (no bias; the
/// shared bias lives in [`WideWeights`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DeepParams {
    /// Subject, target, class and permission tables, `rows × dim`. Row 0 is
    /// the out-of-vocabulary row.
    pub emb: [Array2<f64>; 4],
    pub layers: Vec<Dense>,
    pub out: Array1<f64>,
}

/// Shapes of the network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub wide_dim: usize,
    pub emb_rows: [usize; 4],
    pub emb_dims: [usize; 4],
    pub vec_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn emb_width(&self) -> usize {
        self.emb_dims.iter().sum()
    }

    /// Embeddings, both comment vectors, flags and the uid one-hot.
    pub fn input_dim(&self) -> usize {
        self.emb_width() + 2 * self.vec_dim + FLAG_COUNT + UID_COUNT
    }
}

fn uniform(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    rng.gen_range(-limit..limit)
}

impl DeepParams {
    /// He-uniform dense layers, small uniform embeddings with a zero
    /// out-of-vocabulary row, Glorot-uniform output projection.
    pub fn init(arch: &Architecture, rng: &mut ChaCha8Rng) -> Self {
        let emb = std::array::from_fn(|f| {
            let mut t = Array2::from_shape_fn((arch.emb_rows[f], arch.emb_dims[f]), |_| uniform(rng, 0.05));
            t.row_mut(0).fill(0.0);
            t
        });
        let mut layers = Vec::new();
        let mut fan_in = arch.input_dim();
        for &width in &arch.hidden {
            let limit = (6.0 / fan_in as f64).sqrt();
            layers.push(Dense {
                w: Array2::from_shape_fn((width, fan_in), |_| uniform(rng, limit)),
                b: Array1::zeros(width),
            });
            fan_in = width;
        }
        let limit = (6.0 / (fan_in + 1) as f64).sqrt();
        let out = Array1::from_shape_fn(fan_in, |_| uniform(rng, limit));
        DeepParams { emb, layers, out }
    }

    pub fn zeros_like(&self) -> Self {
        DeepParams {
            emb: std::array::from_fn(|f| Array2::zeros(self.emb[f].raw_dim())),
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
            out: Array1::zeros(self.out.len()),
        }
    }

    /// Parameter blocks in declared order: embeddings, then each layer's
    /// weights and bias, then the output projection.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let names = ["emb.subject", "emb.target", "emb.class", "emb.permission"];
        let mut out: Vec<(String, &[f64])> = names
            .iter()
            .zip(&self.emb)
            .map(|(n, t)| (n.to_string(), t.as_slice().expect("standard layout")))
            .collect();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("dense{i}.w"), l.w.as_slice().expect("standard layout")));
            out.push((format!("dense{i}.b"), l.b.as_slice().expect("standard layout")));
        }
        out.push(("out.w".to_string(), self.out.as_slice().expect("standard layout")));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let names = ["emb.subject", "emb.target", "emb.class", "emb.permission"];
        let mut out: Vec<(String, &mut [f64])> = names
            .iter()
            .zip(self.emb.iter_mut())
            .map(|(n, t)| (n.to_string(), t.as_slice_mut().expect("standard layout")))
            .collect();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("dense{i}.w"), l.w.as_slice_mut().expect("standard layout")));
            out.push((format!("dense{i}.b"), l.b.as_slice_mut().expect("standard layout")));
        }
        out.push(("out.w".to_string(), self.out.as_slice_mut().expect("standard layout")));
        out
    }
}

impl WideWeights {
    pub fn zeros(dim: usize) -> Self {
        WideWeights { w: vec![0.0; dim], b: 0.0 }
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
