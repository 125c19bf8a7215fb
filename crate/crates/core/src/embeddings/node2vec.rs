//! node2vec: second-order biased random walks and skip-gram with negative
//! sampling over node-id sequences.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::numkit::rng::keyed_rng;
use crate::numkit::Tensor;
use crate::scenegraph::PlainGraph;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Node2VecConfig {
    /// Return parameter: weight `1/p` for stepping back to the previous node.
    pub p: f64,
    /// In-out parameter: weight `1/q` for moving away from the previous node.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub embedding_dim: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Node2VecConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            walk_length: 20,
            walks_per_node: 10,
            window: 5,
            embedding_dim: 32,
            negative_samples: 5,
            epochs: 5,
            seed: 0,
        }
    }
}

impl Node2VecConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(EmbedError::Config(format!(
                "p and q must be positive (p={}, q={})",
                self.p, self.q
            )));
        }
        if self.walk_length < 2 || self.embedding_dim == 0 {
            return Err(EmbedError::Config(
                "walk_length must be at least 2 and embedding_dim at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized transition distribution from `cur`, having arrived from
/// `prev`. With no previous node the distribution is uniform.
pub fn transition_probs(
    g: &PlainGraph,
    prev: Option<usize>,
    cur: usize,
    p: f64,
    q: f64,
) -> Vec<(usize, f64)> {
    let weights: Vec<(usize, f64)> = g
        .neighbors(cur)
        .iter()
        .map(|&x| {
            let w = match prev {
                None => 1.0,
                Some(t) if x == t => 1.0 / p,
                Some(t) if g.has_edge(t, x) => 1.0,
                Some(_) => 1.0 / q,
            };
            (x, w)
        })
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    weights.into_iter().map(|(x, w)| (x, w / total)).collect()
}

/// `walks_per_node` walks from every node, ordered by (start node, walk
/// index). Each walk draws from its own stream keyed by that pair.
pub fn node2vec_walks(g: &PlainGraph, cfg: &Node2VecConfig) -> Result<Vec<Vec<usize>>, EmbedError> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(EmbedError::Config("cannot walk an empty graph".into()));
    }
    let mut walks = Vec::with_capacity(g.len() * cfg.walks_per_node);
    for start in 0..g.len() {
        for w in 0..cfg.walks_per_node {
            let mut rng = keyed_rng(
                cfg.seed,
                "node2vec-walk",
                (start * cfg.walks_per_node + w) as u64,
            );
            let mut walk = vec![start];
            while walk.len() < cfg.walk_length {
                let cur = *walk.last().expect("walk is non-empty");
                if g.degree(cur) == 0 {
                    break;
                }
                let prev = walk.len().checked_sub(2).map(|i| walk[i]);
                let probs = transition_probs(g, prev, cur, cfg.p, cfg.q);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = probs.last().expect("degree > 0").0;
                for (x, pr) in &probs {
                    acc += pr;
                    if u < acc {
                        next = *x;
                        break;
                    }
                }
                walk.push(next);
            }
            walks.push(walk);
        }
    }
    Ok(walks)
}

/// Skip-gram with negative sampling. Returns one unit-norm row per node.
///
/// Negatives are drawn from the unigram distribution raised to 3/4; the
/// learning rate decays linearly from 0.025 to 1e-4 over all updates.
pub fn skipgram_train(
    walks: &[Vec<usize>],
    num_nodes: usize,
    cfg: &Node2VecConfig,
) -> Result<Tensor, EmbedError> {
    cfg.validate()?;
    if walks.is_empty() || num_nodes == 0 {
        return Err(EmbedError::Config(
            "skip-gram needs at least one walk".into(),
        ));
    }
    if let Some(bad) = walks.iter().flatten().find(|&&v| v >= num_nodes) {
        return Err(EmbedError::Config(format!(
            "walk visits node {bad} of {num_nodes}"
        )));
    }
    let d = cfg.embedding_dim;
    let mut rng = keyed_rng(cfg.seed, "skipgram", 0);
    let mut w_in: Vec<f64> = (0..num_nodes * d)
        .map(|_| (rng.random::<f64>() - 0.5) / d as f64)
        .collect();
    let mut w_out = vec![0.0; num_nodes * d];

    let mut counts = vec![0.0f64; num_nodes];
    for &v in walks.iter().flatten() {
        counts[v] += 1.0;
    }
    let weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let sampler = WeightedIndex::new(&weights).ok();

    let pairs_per_epoch: usize = walks
        .iter()
        .map(|w| {
            (0..w.len())
                .map(|i| context(i, w.len(), cfg.window).count())
                .sum::<usize>()
        })
        .sum();
    let total = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let (lr0, lr_min) = (0.025, 1e-4);
    let mut seen = 0usize;
    let mut grad_in = vec![0.0; d];

    for _ in 0..cfg.epochs {
        for walk in walks {
            for i in 0..walk.len() {
                let center = walk[i];
                for j in context(i, walk.len(), cfg.window) {
                    let lr = (lr0 * (1.0 - seen as f64 / total)).max(lr_min);
                    seen += 1;
                    let target = walk[j];
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    sgns_update(&w_in, &mut w_out, center, target, 1.0, lr, d, &mut grad_in);
                    if let Some(s) = &sampler {
                        for _ in 0..cfg.negative_samples {
                            let neg = s.sample(&mut rng);
                            if neg != target {
                                sgns_update(
                                    &w_in,
                                    &mut w_out,
                                    center,
                                    neg,
                                    0.0,
                                    lr,
                                    d,
                                    &mut grad_in,
                                );
                            }
                        }
                    }
                    for (w, g) in w_in[center * d..(center + 1) * d].iter_mut().zip(&grad_in) {
                        *w += g;
                    }
                }
            }
        }
    }

    for v in 0..num_nodes {
        let row = &mut w_in[v * d..(v + 1) * d];
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        } else {
            row.iter_mut().for_each(|x| *x = 0.0);
            row[0] = 1.0;
        }
    }
    Ok(Tensor::new(vec![num_nodes, d], w_in).expect("n×d buffer"))
}

fn context(i: usize, len: usize, window: usize) -> impl Iterator<Item = usize> {
    let lo = i.saturating_sub(window);
    let hi = (i + window + 1).min(len);
    (lo..hi).filter(move |&j| j != i)
}

/// One logistic step on the pair (center, other) with target `label`;
/// the center-side gradient accumulates into `grad_in`.
#[allow(clippy::too_many_arguments)]
fn sgns_update(
    w_in: &[f64],
    w_out: &mut [f64],
    center: usize,
    other: usize,
    label: f64,
    lr: f64,
    d: usize,
    grad_in: &mut [f64],
) {
    let vin = &w_in[center * d..(center + 1) * d];
    let vout = &mut w_out[other * d..(other + 1) * d];
    let dot: f64 = vin.iter().zip(vout.iter()).map(|(a, b)| a * b).sum();
    let g = lr * (label - crate::numkit::sigmoid(dot));
    for k in 0..d {
        grad_in[k] += g * vout[k];
        vout[k] += g * vin[k];
    }
}

/// Walks plus skip-gram in one call.
pub fn node2vec_embed(g: &PlainGraph, cfg: &Node2VecConfig) -> Result<Tensor, EmbedError> {
    let walks = node2vec_walks(g, cfg)?;
    skipgram_train(&walks, g.len(), cfg)
}
