use std::collections::BTreeSet;

use rand::seq::index::sample;

use super::net;
use super::params::seeded_rng;
use super::Model;
use crate::features::EncodedExample;

/// Coordinates compared per parameter group at most.
const MAX_COORDS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub groups: Vec<GroupCheck>,
    pub max_rel_error: f64,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn set_deep(model: &mut Model, block: usize, i: usize, value: f64) {
    model.deep.blocks_mut()[block].1[i] = value;
}

/// Picks up to `MAX_COORDS` of `candidates` with a fixed seed.
fn pick(candidates: Vec<usize>, salt: u64) -> Vec<usize> {
    if candidates.len() <= MAX_COORDS {
        return candidates;
    }
    let mut rng = seeded_rng(0x6c4ec4 ^ salt);
    let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), MAX_COORDS)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Compares analytic gradients of the mean logistic loss on `examples`
/// with central differences of step `eps`, over every parameter group.
///
/// Wide weights are checked at the active indices, embeddings at the rows
/// the examples use; other groups at a fixed sample of coordinates.
pub fn gradient_check(model: &Model, examples: &[EncodedExample], eps: f64) -> GradCheck {
    let refs: Vec<&EncodedExample> = examples.iter().collect();
    let grads = net::gradients(&model.arch, &model.wide, &model.deep, &refs);
    let mut work = model.clone();
    let loss_at = |m: &Model| net::mean_loss(&m.arch, &m.wide, &m.deep, &refs);
    let mut groups = Vec::new();

    // Wide weights.
    let active: BTreeSet<usize> = examples.iter().flat_map(|e| e.wide.iter().map(|&i| i as usize)).collect();
    let mut worst = 0.0f64;
    let coords = pick(active.into_iter().collect(), 0);
    for &i in &coords {
        let orig = work.wide.w[i];
        work.wide.w[i] = orig + eps;
        let up = loss_at(&work);
        work.wide.w[i] = orig - eps;
        let down = loss_at(&work);
        work.wide.w[i] = orig;
        let analytic = grads.wide.get(&(i as u32)).copied().unwrap_or(0.0);
        worst = worst.max(rel_error(analytic, (up - down) / (2.0 * eps)));
    }
    groups.push(GroupCheck {
        name: "wide.w".into(),
        checked: coords.len(),
        max_rel_error: worst,
    });

    let orig = work.wide.b;
    work.wide.b = orig + eps;
    let up = loss_at(&work);
    work.wide.b = orig - eps;
    let down = loss_at(&work);
    work.wide.b = orig;
    groups.push(GroupCheck {
        name: "wide.b".into(),
        checked: 1,
        max_rel_error: rel_error(grads.bias, (up - down) / (2.0 * eps)),
    });

    // Deep blocks, in declared order.
    let analytic: Vec<Vec<f64>> = grads.deep.blocks().into_iter().map(|(_, g)| g.to_vec()).collect();
    let names: Vec<String> = model.deep.blocks().into_iter().map(|(n, _)| n).collect();
    for (b, name) in names.iter().enumerate() {
        let len = analytic[b].len();
        let candidates: Vec<usize> = if b < 4 {
            let dim = model.arch.emb_dims[b];
            let rows: BTreeSet<usize> = examples
                .iter()
                .map(|e| (e.deep_ids[b] as usize).min(model.arch.emb_rows[b] - 1))
                .collect();
            rows.into_iter().flat_map(|r| r * dim..(r + 1) * dim).collect()
        } else {
            (0..len).collect()
        };
        let coords = pick(candidates, b as u64 + 1);
        let mut worst = 0.0f64;
        for &i in &coords {
            let orig = model.deep.blocks()[b].1[i];
            set_deep(&mut work, b, i, orig + eps);
            let up = loss_at(&work);
            set_deep(&mut work, b, i, orig - eps);
            let down = loss_at(&work);
            set_deep(&mut work, b, i, orig);
            worst = worst.max(rel_error(analytic[b][i], (up - down) / (2.0 * eps)));
        }
        groups.push(GroupCheck {
            name: name.clone(),
            checked: coords.len(),
            max_rel_error: worst,
        });
    }

    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    GradCheck { groups, max_rel_error }
}
