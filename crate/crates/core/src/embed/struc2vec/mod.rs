//! Structural-role embedding.
//!
//! Nodes are compared by the ordered degree sequences of their hop rings.
//! The layered distance `f_k(u, v) = f_{k-1}(u, v) + dtw(ring_k(u), ring_k(v))`
//! weights a multilayer context graph (`e^{-f_k}` in layer `k`); biased
//! walks over it feed a skip-gram model trained directly in two dimensions.

pub mod dtw;
pub mod skipgram;
pub mod walk;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use dtw::dtw_distance;
pub use walk::{Candidates, MultilayerGraph};

use crate::embed::{Embedding, Method, Space};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Struc2vecConfig {
    /// Deepest hop ring compared (k*).
    pub max_layer: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub sg_epochs: usize,
    pub sg_lr: f64,
    pub dim: usize,
    pub seed: u64,
    /// Probability that a walk step stays in its current layer.
    pub stay_prob: f64,
    /// Graphs up to this many nodes compare every pair exactly.
    pub exact_pair_limit: usize,
    /// Above `exact_pair_limit`, each node is compared with this many nodes
    /// of closest degree.
    pub candidates_per_node: usize,
}

impl Default for Struc2vecConfig {
    fn default() -> Self {
        Self {
            max_layer: 2,
            walks_per_node: 10,
            walk_length: 80,
            window: 5,
            negatives: 5,
            sg_epochs: 5,
            sg_lr: 0.025,
            dim: 2,
            seed: 0,
            stay_prob: 0.3,
            exact_pair_limit: 6000,
            candidates_per_node: 64,
        }
    }
}

impl Struc2vecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length <= self.window {
            return Err(Error::InvalidArgument(format!(
                "struc2vec walk_length ({}) must exceed window ({})",
                self.walk_length, self.window
            )));
        }
        if self.window == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "struc2vec window and dim must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.stay_prob) {
            return Err(Error::InvalidArgument("stay_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Ascending degrees of the nodes exactly `k` hops from `v`.
pub fn ring_degree_seq<S: Scalar>(g: &Graph<S>, v: usize, k: usize) -> Result<Vec<usize>> {
    if v >= g.num_nodes() {
        return Err(Error::InvalidNode {
            id: v,
            num_nodes: g.num_nodes(),
        });
    }
    Ok(ring_profile(g, v, k).swap_remove(k))
}

/// Ordered ring degree sequences of `v` for hops `0..=max_layer`.
pub fn ring_profile<S: Scalar>(g: &Graph<S>, v: usize, max_layer: usize) -> Vec<Vec<usize>> {
    let mut rings = vec![Vec::new(); max_layer + 1];
    let mut dist = std::collections::HashMap::new();
    let mut queue = VecDeque::from([v]);
    dist.insert(v, 0usize);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        rings[du].push(g.neighbors(u).len());
        if du == max_layer {
            continue;
        }
        for &w in g.neighbors(u) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(du + 1);
                queue.push_back(w);
            }
        }
    }
    for r in &mut rings {
        r.sort_unstable();
    }
    rings
}

/// `[f_0, …, f_K]` for two ring profiles of equal depth.
pub fn layered_distances(a: &[Vec<usize>], b: &[Vec<usize>]) -> Vec<f64> {
    let mut acc = 0.0;
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            acc += dtw_distance(ra, rb);
            acc
        })
        .collect()
}

fn degree_window_candidates<S: Scalar>(g: &Graph<S>, per_node: usize) -> Candidates {
    let n = g.num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (g.neighbors(v).len(), v));
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    let half = per_node.div_ceil(2);
    for (pos, &u) in order.iter().enumerate() {
        let lo = pos.saturating_sub(half);
        let hi = (pos + half).min(n - 1);
        for &v in &order[lo..=hi] {
            if v != u {
                lists[u].push(v as u32);
                lists[v].push(u as u32);
            }
        }
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    Candidates::Lists(lists)
}

/// Builds the multilayer context graph for `g`.
pub fn context_graph<S: Scalar>(g: &Graph<S>, cfg: &Struc2vecConfig) -> MultilayerGraph {
    let n = g.num_nodes();
    let profiles: Vec<Vec<Vec<usize>>> = (0..n).map(|v| ring_profile(g, v, cfg.max_layer)).collect();
    let candidates = if n <= cfg.exact_pair_limit {
        Candidates::All(n)
    } else {
        log::warn!(
            "struc2vec: {n} nodes exceed the exact limit {}; comparing {} degree-nearest nodes each",
            cfg.exact_pair_limit,
            cfg.candidates_per_node
        );
        degree_window_candidates(g, cfg.candidates_per_node)
    };
    MultilayerGraph::build(&profiles, candidates, cfg.stay_prob)
}

pub fn struc2vec_embed<T: Scalar, S: Scalar>(g: &Graph<S>, cfg: &Struc2vecConfig) -> Result<Embedding<T>> {
    cfg.validate()?;
    let n = g.num_nodes();
    let ml = context_graph(g, cfg);
    let walks = walk::generate_walks(&ml, n, cfg);
    let coords = skipgram::train(&walks, n, cfg);
    Embedding::new(coords.cast(), Space::Euclidean, Method::Struc2vec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn rings_of_small_graphs() {
        let tri = g(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(ring_degree_seq(&tri, 0, 1).unwrap(), vec![2, 2]);
        assert_eq!(ring_degree_seq(&tri, 1, 0).unwrap(), vec![2]);
        let path = g(3, &[(0, 1), (1, 2)]);
        assert_eq!(ring_degree_seq(&path, 0, 2).unwrap(), vec![1]);
        assert_eq!(ring_degree_seq(&path, 1, 2).unwrap(), Vec::<usize>::new());
        assert!(ring_degree_seq(&path, 7, 0).is_err());
    }

    #[test]
    fn identical_profiles_have_zero_distance() {
        let two_tri = g(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        let a = ring_profile(&two_tri, 0, 2);
        let b = ring_profile(&two_tri, 4, 2);
        assert_eq!(layered_distances(&a, &b), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let bad = Struc2vecConfig {
            walk_length: 5,
            window: 5,
            ..Struc2vecConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(Struc2vecConfig::default().validate().is_ok());
    }

    #[test]
    fn degree_window_is_symmetric() {
        let star = g(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        let Candidates::Lists(lists) = degree_window_candidates(&star, 2) else {
            unreachable!()
        };
        for (u, l) in lists.iter().enumerate() {
            assert!(!l.contains(&(u as u32)));
            for &v in l {
                assert!(lists[v as usize].contains(&(u as u32)));
            }
        }
    }
}
