//! Two non-isomorphic graphs that a plain mean over neighbors cannot tell
//! apart but relation-partitioned aggregation can.
//!
//! Nodes sit on a 3×3 grid of cells numbered 1..9 row by row from the top
//! left; the center node `V1` occupies cell 5. In the first graph `V1` is
//! joined to cells 2 and 8, in the second to cells 2, 7 and 9. Each graph
//! has one extra node hanging off cell 2. All features are equal.

use crate::embed::{Embedding, Method, Space};
use crate::error::Result;
use crate::graph::Graph;
use crate::neighborhood::{build_combined, NeighborhoodOptions, Relation, StructuralNeighborhood};
use crate::tensor::Tensor2;

pub const CASE_TOLERANCE: f64 = 1e-12;

/// Latent position of grid cell `c` (1-based), with cell 5 at the origin.
fn cell(c: usize) -> [f64; 2] {
    let (row, col) = ((c - 1) / 3, (c - 1) % 3);
    [col as f64 - 1.0, 1.0 - row as f64]
}

/// Graph with node 0 at cell 5 joined to `neighbor_cells`, plus one node at
/// cell 3 joined to the first neighbor.
fn example(neighbor_cells: &[usize]) -> Result<(Graph, StructuralNeighborhood)> {
    let mut cells = vec![5];
    cells.extend_from_slice(neighbor_cells);
    cells.push(3);
    let n = cells.len();
    let mut edges: Vec<(usize, usize)> = (1..=neighbor_cells.len()).map(|i| (0, i)).collect();
    edges.push((1, n - 1));
    let g = Graph::new(edges, Tensor2::filled(n, 1, 1.0), vec![0; n])?.0;
    let coords = Tensor2::from_rows(&cells.iter().map(|&c| cell(c).to_vec()).collect::<Vec<_>>())?;
    let emb = Embedding::new(coords, Space::Euclidean, Method::Isomap)?;
    let opts = NeighborhoodOptions {
        self_loop: false,
        exact_hyperbolic: false,
    };
    let nb = build_combined(&g, &emb, &emb, opts, 0)?;
    Ok((g, nb))
}

/// `f(a)`: the same fixed map applied to every node's (constant) feature.
fn transformed(g: &Graph) -> Tensor2 {
    g.features().map(|a| 0.5 * a + 0.25)
}

/// Mean of the transformed features over all graph neighbors of node 0.
fn merged_mean(g: &Graph, nb: &StructuralNeighborhood) -> Vec<f64> {
    let h = transformed(g);
    let list = &nb.graph[0];
    let mut out = vec![0.0; h.cols()];
    for &(u, _) in list {
        for (o, x) in out.iter_mut().zip(h.row(u)) {
            *o += x / list.len() as f64;
        }
    }
    out
}

/// Per-relation means over the graph neighbors of node 0, concatenated in
/// relation order; empty relations contribute zeros.
fn partitioned_mean(g: &Graph, nb: &StructuralNeighborhood) -> Vec<f64> {
    let h = transformed(g);
    let d = h.cols();
    let mut out = vec![0.0; 4 * d];
    for r in Relation::ALL {
        let members: Vec<usize> = nb.graph[0].iter().filter(|(_, rel)| *rel == r).map(|(u, _)| *u).collect();
        for &u in &members {
            for (j, x) in h.row(u).iter().enumerate() {
                out[r.index() * d + j] += x / members.len() as f64;
            }
        }
    }
    out
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= CASE_TOLERANCE)
}

/// `(merged_identical, partitioned_distinct)` for the two example graphs in
/// the given order.
pub fn case_study_ordered(first_left: bool) -> Result<(bool, bool)> {
    let left = example(&[2, 8])?;
    let right = example(&[2, 7, 9])?;
    let (a, b) = if first_left { (left, right) } else { (right, left) };
    let merged_identical = same(&merged_mean(&a.0, &a.1), &merged_mean(&b.0, &b.1));
    let partitioned_distinct = !same(&partitioned_mean(&a.0, &a.1), &partitioned_mean(&b.0, &b.1));
    Ok((merged_identical, partitioned_distinct))
}

/// Expected result: `(true, true)`.
pub fn aggregation_case_study() -> Result<(bool, bool)> {
    case_study_ordered(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cells() {
        assert_eq!(cell(5), [0.0, 0.0]);
        assert_eq!(cell(2), [0.0, 1.0]);
        assert_eq!(cell(7), [-1.0, -1.0]);
    }

    #[test]
    fn center_relations() {
        let (_, nb) = example(&[2, 7, 9]).unwrap();
        let rels: Vec<Relation> = nb.graph[0].iter().map(|(_, r)| *r).collect();
        assert_eq!(rels, vec![Relation::UpperRight, Relation::LowerLeft, Relation::LowerRight]);
    }

    #[test]
    fn both_orders_agree() {
        assert_eq!(aggregation_case_study().unwrap(), (true, true));
        assert_eq!(case_study_ordered(false).unwrap(), (true, true));
    }
}
