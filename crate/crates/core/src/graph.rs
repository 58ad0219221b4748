//! Immutable attributed graphs, homophily and stratified splits.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Undirected simple graph with node features and one label per node.
///
/// Edges are stored once as `(u, v)` with `u < v`; self-loops are never
/// stored. Adjacency lists are sorted ascending.
#[derive(Clone, Debug)]
pub struct Graph<T: Scalar = f64> {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor2<T>,
    labels: Vec<usize>,
    num_classes: usize,
    adjacency: Vec<Vec<usize>>,
}

/// What graph construction silently repaired.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from raw (possibly directed, duplicated) edge pairs.
    pub fn new(
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor2<T>,
        labels: Vec<usize>,
    ) -> Result<(Self, BuildStats)> {
        let num_nodes = labels.len();
        if features.rows() != num_nodes {
            return Err(Error::Validation(format!(
                "{} feature rows for {num_nodes} labelled nodes",
                features.rows()
            )));
        }
        if features.cols() == 0 {
            return Err(Error::Validation("feature dimension must be positive".into()));
        }
        let mut stats = BuildStats::default();
        let mut list = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::Validation(format!(
                        "edge ({u}, {v}) references node {id}, but there are {num_nodes} nodes"
                    )));
                }
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            list.push((u.min(v), u.max(v)));
        }
        let before = list.len();
        list.sort_unstable();
        list.dedup();
        stats.duplicates_dropped = before - list.len();

        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &list {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok((
            Self {
                num_nodes,
                edges: list,
                features,
                labels,
                num_classes,
                adjacency,
            },
            stats,
        ))
    }

    /// Structure-only graph: constant unit features and a single class.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let (g, _) = Self::new(
            edges.iter().copied(),
            Tensor2::filled(num_nodes, 1, T::one()),
            vec![0; num_nodes],
        )?;
        Ok(g)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn features(&self) -> &Tensor2<T> {
        &self.features
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Number of adjacent nodes (self-loops excluded).
    pub fn degree(&self, v: usize) -> Result<usize> {
        self.adjacency
            .get(v)
            .map(Vec::len)
            .ok_or(Error::InvalidNode {
                id: v,
                num_nodes: self.num_nodes,
            })
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn average_degree(&self) -> f64 {
        if self.num_nodes == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.num_nodes as f64
        }
    }

    /// Mean over nodes of the fraction of neighbors sharing the node's label.
    /// Isolated nodes count as 0.
    pub fn homophily_beta(&self) -> f64 {
        if self.num_nodes == 0 {
            return 0.0;
        }
        let total: f64 = (0..self.num_nodes)
            .map(|v| {
                let nb = &self.adjacency[v];
                if nb.is_empty() {
                    0.0
                } else {
                    let same = nb
                        .iter()
                        .filter(|&&u| self.labels[u] == self.labels[v])
                        .count();
                    same as f64 / nb.len() as f64
                }
            })
            .sum();
        total / self.num_nodes as f64
    }

    /// Relabels node `i` as `perm[i]`, carrying features, labels and edges.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_nodes)?;
        let mut labels = vec![0; self.num_nodes];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i];
        }
        let (g, _) = Self::new(
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            self.features.permute_rows(perm),
            labels,
        )?;
        Ok(g)
    }

    /// Same structure and labels with replaced features.
    pub fn with_features(&self, features: Tensor2<T>) -> Result<Self> {
        let (g, _) = Self::new(self.edges.iter().copied(), features, self.labels.clone())?;
        Ok(g)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!(
            "permutation of length {} for {n} nodes",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(format!("unknown split tag `{other}`")),
        }
    }
}

/// Per-node assignment to train / validation / test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub assignment: Vec<SplitTag>,
    pub seed: u64,
}

impl Split {
    pub fn mask(&self, tag: SplitTag) -> Vec<bool> {
        self.assignment.iter().map(|&t| t == tag).collect()
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.assignment.iter().filter(|&&t| t == tag).count()
    }
}

pub const MIN_CLASS_SIZE: usize = 5;

/// Validation and test counts for a class of `n` nodes. Each share starts
/// at its floor; leftover nodes go one at a time to train, then validation.
fn class_quota(n: usize) -> (usize, usize) {
    let (train, val, test) = (3 * n / 5, n / 5, n / 5);
    let rem = n - train - val - test;
    (val + usize::from(rem >= 2), test)
}

/// Stratified 60/20/20 split, within one node of the exact share per class.
pub fn random_split<T: Scalar>(g: &Graph<T>, seed: u64) -> Result<Split> {
    random_split_labels(g.labels(), seed)
}

pub fn random_split_labels(labels: &[usize], seed: u64) -> Result<Split> {
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (v, &c) in labels.iter().enumerate() {
        by_class[c].push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![SplitTag::Train; labels.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < MIN_CLASS_SIZE {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                min: MIN_CLASS_SIZE,
            });
        }
        members.shuffle(&mut rng);
        let (n_val, n_test) = class_quota(members.len());
        for &v in &members[..n_val] {
            assignment[v] = SplitTag::Val;
        }
        for &v in &members[n_val..n_val + n_test] {
            assignment[v] = SplitTag::Test;
        }
    }
    Ok(Split { assignment, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> Graph {
        Graph::new(edges.iter().copied(), Tensor2::filled(n, 1, 1.0), labels)
            .unwrap()
            .0
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let (g, stats) = Graph::new(
            [(0, 1), (0, 1), (1, 0)],
            Tensor2::<f64>::filled(2, 1, 1.0),
            vec![0, 0],
        )
        .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(stats.duplicates_dropped, 2);
    }

    #[test]
    fn self_loops_are_dropped_and_counted() {
        let (g, stats) =
            Graph::new([(0, 0)], Tensor2::<f64>::filled(1, 1, 1.0), vec![0]).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(stats.self_loops_dropped, 1);
    }

    #[test]
    fn out_of_range_endpoint_is_rejected() {
        let r = Graph::new([(0, 5)], Tensor2::<f64>::filled(2, 1, 1.0), vec![0, 0]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn degrees() {
        let tri = Graph::<f64>::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        for v in 0..3 {
            assert_eq!(tri.degree(v).unwrap(), 2);
        }
        let path = Graph::<f64>::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(path.degree(1).unwrap(), 2);
        let iso = Graph::<f64>::from_edges(2, &[]).unwrap();
        assert_eq!(iso.degree(0).unwrap(), 0);
        assert!(matches!(iso.degree(9), Err(Error::InvalidNode { id: 9, .. })));
    }

    #[test]
    fn beta_on_labelled_path() {
        let g = labelled(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 0, 1, 1]);
        assert!((g.homophily_beta() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn beta_is_one_for_uniform_labels() {
        let g = labelled(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], vec![2; 4]);
        assert_eq!(g.homophily_beta(), 1.0);
    }

    #[test]
    fn isolated_nodes_contribute_zero() {
        let g = labelled(3, &[(0, 1)], vec![0, 0, 0]);
        assert!((g.homophily_beta() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_of_ten_nodes() {
        let s = random_split_labels(&[0; 10], 3).unwrap();
        assert_eq!(s.count(SplitTag::Train), 6);
        assert_eq!(s.count(SplitTag::Val), 2);
        assert_eq!(s.count(SplitTag::Test), 2);
    }

    #[test]
    fn split_is_deterministic() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        assert_eq!(
            random_split_labels(&labels, 11).unwrap(),
            random_split_labels(&labels, 11).unwrap()
        );
        assert_ne!(
            random_split_labels(&labels, 11).unwrap(),
            random_split_labels(&labels, 12).unwrap()
        );
    }

    #[test]
    fn tiny_class_is_an_error() {
        let r = random_split_labels(&[0, 0, 0, 0, 0, 1, 1], 0);
        assert!(matches!(r, Err(Error::ClassTooSmall { class: 1, count: 2, .. })));
    }
}
