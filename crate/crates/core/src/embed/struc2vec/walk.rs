//! Multilayer context graph and biased random walks over it.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{layered_distances, Struc2vecConfig};
use crate::rng;

/// Who each node may step to inside a layer.
#[derive(Clone, Debug)]
pub enum Candidates {
    /// Every other node.
    All(usize),
    /// Explicit sorted lists, used when all pairs would be too many.
    Lists(Vec<Vec<u32>>),
}

impl Candidates {
    pub fn of(&self, u: usize) -> CandidateIter<'_> {
        match self {
            Candidates::All(n) => CandidateIter::All { u, next: 0, n: *n },
            Candidates::Lists(l) => CandidateIter::List(l[u].iter()),
        }
    }

    pub fn count(&self, u: usize) -> usize {
        match self {
            Candidates::All(n) => n.saturating_sub(1),
            Candidates::Lists(l) => l[u].len(),
        }
    }

    fn nth(&self, u: usize, idx: usize) -> usize {
        match self {
            Candidates::All(_) => {
                if idx >= u {
                    idx + 1
                } else {
                    idx
                }
            }
            Candidates::Lists(l) => l[u][idx] as usize,
        }
    }
}

pub enum CandidateIter<'a> {
    All { u: usize, next: usize, n: usize },
    List(std::slice::Iter<'a, u32>),
}

impl Iterator for CandidateIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            CandidateIter::All { u, next, n } => {
                if *next == *u {
                    *next += 1;
                }
                if *next >= *n {
                    return None;
                }
                *next += 1;
                Some(*next - 1)
            }
            CandidateIter::List(it) => it.next().map(|&v| v as usize),
        }
    }
}

#[derive(Clone, Debug)]
struct Layer {
    /// Per node, cumulative `e^{-f_k(u, v)}` over its candidates.
    cumulative: Vec<Vec<f32>>,
    /// Probability of moving to layer `k + 1` when changing layers.
    up_prob: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MultilayerGraph {
    candidates: Candidates,
    layers: Vec<Layer>,
    stay_prob: f64,
}

impl MultilayerGraph {
    /// Weights every candidate pair in every layer by `e^{-f_k}`.
    ///
    /// `profiles[u][k]` is the ordered ring-`k` degree sequence of `u`.
    pub fn build(profiles: &[Vec<Vec<usize>>], candidates: Candidates, stay_prob: f64) -> Self {
        let n = profiles.len();
        let num_layers = profiles.first().map_or(1, Vec::len);
        let rows: Vec<Vec<Vec<f32>>> = (0..n)
            .into_par_iter()
            .map(|u| {
                let mut per_layer = vec![Vec::with_capacity(candidates.count(u)); num_layers];
                for v in candidates.of(u) {
                    let f = layered_distances(&profiles[u], &profiles[v]);
                    for (k, fk) in f.iter().enumerate() {
                        per_layer[k].push((-fk).exp() as f32);
                    }
                }
                per_layer
            })
            .collect();

        let mut layers: Vec<Layer> = (0..num_layers)
            .map(|_| Layer {
                cumulative: Vec::with_capacity(n),
                up_prob: Vec::with_capacity(n),
            })
            .collect();
        let mut sums = vec![0f64; num_layers];
        let mut counts = vec![0usize; num_layers];
        for row in &rows {
            for (k, w) in row.iter().enumerate() {
                sums[k] += w.iter().map(|&x| x as f64).sum::<f64>();
                counts[k] += w.len();
            }
        }
        for row in rows {
            for (k, w) in row.into_iter().enumerate() {
                let avg = if counts[k] == 0 { 0.0 } else { sums[k] / counts[k] as f64 };
                let above = w.iter().filter(|&&x| x as f64 > avg).count() as f64;
                let up = (above + std::f64::consts::E).ln();
                layers[k].up_prob.push(up / (up + 1.0));
                let mut acc = 0f32;
                let cum = w
                    .into_iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect();
                layers[k].cumulative.push(cum);
            }
        }
        Self {
            candidates,
            layers,
            stay_prob,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn step_in_layer<R: Rng>(&self, layer: usize, u: usize, rng: &mut R) -> Option<usize> {
        let cum = &self.layers[layer].cumulative[u];
        let total = *cum.last()?;
        let r = rng.random::<f32>() * total;
        let idx = cum.partition_point(|&c| c <= r).min(cum.len() - 1);
        Some(self.candidates.nth(u, idx))
    }

    /// Walk of `length` nodes starting at layer 0. With probability
    /// `stay_prob` a step moves to a node in the current layer; otherwise
    /// the walk changes layer (up with the node's `up_prob`) without
    /// emitting a node.
    pub fn walk<R: Rng>(&self, start: usize, length: usize, rng: &mut R) -> Vec<u32> {
        let mut path = Vec::with_capacity(length);
        path.push(start as u32);
        let mut u = start;
        let mut layer = 0;
        let top = self.layers.len() - 1;
        while path.len() < length {
            if top == 0 || rng.random::<f64>() < self.stay_prob {
                match self.step_in_layer(layer, u, rng) {
                    Some(v) => {
                        u = v;
                        path.push(v as u32);
                    }
                    None => break,
                }
            } else if rng.random::<f64>() < self.layers[layer].up_prob[u] {
                layer = (layer + 1).min(top);
            } else {
                layer = layer.saturating_sub(1);
            }
        }
        path
    }
}

/// `walks_per_node` rounds; each round visits every node once in a shuffled
/// order. Walk seeds derive from `(seed, round, start)`.
pub fn generate_walks(ml: &MultilayerGraph, n: usize, cfg: &Struc2vecConfig) -> Vec<Vec<u32>> {
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(cfg.seed, 0x5741, round as u64));
        let batch: Vec<Vec<u32>> = order
            .par_iter()
            .map(|&start| {
                let mut r = rng::stream(cfg.seed, 0x5742 + round as u64, start as u64);
                ml.walk(start, cfg.walk_length, &mut r)
            })
            .collect();
        walks.extend(batch);
    }
    walks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_candidates_skip_self() {
        let c = Candidates::All(4);
        assert_eq!(c.of(2).collect::<Vec<_>>(), vec![0, 1, 3]);
        assert_eq!(c.count(2), 3);
        assert_eq!(c.nth(2, 2), 3);
        assert_eq!(c.nth(2, 1), 1);
    }

    #[test]
    fn walks_have_requested_length() {
        let profiles = vec![
            vec![vec![1], vec![2]],
            vec![vec![2], vec![1, 1]],
            vec![vec![1], vec![2]],
        ];
        let ml = MultilayerGraph::build(&profiles, Candidates::All(3), 0.3);
        let mut r = rng::seeded(5);
        let w = ml.walk(0, 20, &mut r);
        assert_eq!(w.len(), 20);
        assert!(w.iter().all(|&v| v < 3));
    }

    #[test]
    fn singleton_graph_walk_stops() {
        let ml = MultilayerGraph::build(&[vec![vec![0]]], Candidates::All(1), 0.3);
        assert_eq!(ml.walk(0, 10, &mut rng::seeded(1)), vec![0]);
    }
}
