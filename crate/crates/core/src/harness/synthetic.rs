//! Small generated graphs for tests and for runs without benchmark files.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::graph::Graph;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

pub fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

pub fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    let mut e = path_edges(n);
    if n > 2 {
        e.push((n - 1, 0));
    }
    e
}

/// `rows × cols` lattice, node `r * cols + c`.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                e.push((v, v + 1));
            }
            if r + 1 < rows {
                e.push((v, v + cols));
            }
        }
    }
    e
}

/// Node 0 joined to `leaves` leaf nodes.
pub fn star_edges(leaves: usize) -> Vec<(usize, usize)> {
    (1..=leaves).map(|i| (0, i)).collect()
}

/// Erdős–Rényi graph with Gaussian features and uniform labels.
pub fn random_graph<T: Scalar>(
    n: usize,
    edge_prob: f64,
    feature_dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Graph<T>> {
    let mut r = rng::stream(seed, 0x6E5, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < edge_prob {
                edges.push((u, v));
            }
        }
    }
    let features = Tensor2::from_fn(n, feature_dim, |_, _| T::of(r.sample(StandardNormal)));
    let labels = (0..n).map(|_| r.random_range(0..num_classes)).collect();
    Ok(Graph::new(edges, features, labels)?.0)
}

/// Two dense clusters of `n / 2` nodes joined by one bridge edge, labelled
/// by cluster, with features `±1` on the first coordinate plus small noise.
pub fn two_clusters<T: Scalar>(n: usize, seed: u64) -> Result<Graph<T>> {
    let half = n / 2;
    let mut r = rng::stream(seed, 0x2C1, 0);
    let mut edges = Vec::new();
    for base in [0, half] {
        let size = if base == 0 { half } else { n - half };
        for i in 0..size {
            for j in i + 1..size {
                if r.random::<f64>() < 0.5 {
                    edges.push((base + i, base + j));
                }
            }
        }
    }
    edges.push((0, half));
    let labels: Vec<usize> = (0..n).map(|v| usize::from(v >= half)).collect();
    let features = Tensor2::from_fn(n, 4, |v, j| {
        let signal = if j == 0 {
            if labels[v] == 0 {
                -1.0
            } else {
                1.0
            }
        } else {
            0.0
        };
        T::of(signal + 0.1 * r.sample::<f64, _>(StandardNormal))
    });
    Ok(Graph::new(edges, features, labels)?.0)
}

/// Settings for [`role_graph`].
#[derive(Clone, Debug, PartialEq)]
pub struct RoleGraphConfig {
    /// `(node count, degree)` per class. Equal `count · degree` products
    /// make every class equally likely as a neighbor.
    pub classes: Vec<(usize, usize)>,
    pub feature_dim: usize,
    /// Length of the class-mean vector relative to unit noise.
    pub signal: f64,
}

impl Default for RoleGraphConfig {
    fn default() -> Self {
        Self {
            classes: vec![(120, 2), (60, 4), (30, 8)],
            feature_dim: 8,
            signal: 0.8,
        }
    }
}

/// Disassortative graph whose labels are structural roles.
///
/// Each class has its own degree; edges come from randomly pairing degree
/// stubs across the whole graph (self-loops and repeats are dropped), so a
/// node's neighbors carry no information about its label. Features are a
/// weak class mean (zero-sum across classes) plus Gaussian noise.
pub fn role_graph<T: Scalar>(cfg: &RoleGraphConfig, seed: u64) -> Result<Graph<T>> {
    let mut r = rng::stream(seed, 0x201E, 0);
    let mut labels = Vec::new();
    let mut stubs = Vec::new();
    for (class, &(count, degree)) in cfg.classes.iter().enumerate() {
        for _ in 0..count {
            let v = labels.len();
            labels.push(class);
            stubs.extend(std::iter::repeat_n(v, degree));
        }
    }
    stubs.shuffle(&mut r);
    let edges: Vec<(usize, usize)> = stubs.chunks_exact(2).map(|p| (p[0], p[1])).collect();

    let c = cfg.classes.len();
    let means: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            (0..cfg.feature_dim)
                .map(|j| {
                    if j >= c {
                        0.0
                    } else if j == k {
                        cfg.signal * (1.0 - 1.0 / c as f64)
                    } else {
                        -cfg.signal / c as f64
                    }
                })
                .collect()
        })
        .collect();
    let features = Tensor2::from_fn(labels.len(), cfg.feature_dim, |v, j| {
        T::of(means[labels[v]][j] + r.sample::<f64, _>(StandardNormal))
    });
    Ok(Graph::new(edges, features, labels)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_helpers() {
        assert_eq!(cycle_edges(6).len(), 6);
        assert_eq!(grid_edges(4, 4).len(), 24);
        assert_eq!(star_edges(8).len(), 8);
    }

    #[test]
    fn role_graph_is_disassortative() {
        let g: Graph = role_graph(&RoleGraphConfig::default(), 3).unwrap();
        assert_eq!(g.num_nodes(), 210);
        assert_eq!(g.num_classes(), 3);
        assert!(g.homophily_beta() < 0.45, "beta {}", g.homophily_beta());
    }

    #[test]
    fn generators_are_deterministic() {
        let a: Graph = random_graph(15, 0.3, 3, 2, 7).unwrap();
        let b: Graph = random_graph(15, 0.3, 3, 2, 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
    }
}
