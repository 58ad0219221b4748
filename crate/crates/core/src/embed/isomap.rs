//! Isometric embedding: hop-count shortest paths, then classical MDS.

use std::collections::VecDeque;

use crate::embed::{Embedding, Method, Space};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

pub const MAX_POWER_ITERATIONS: usize = 1000;
pub const EIGENVALUE_TOL: f64 = 1e-9;

/// All-pairs hop distances.
#[derive(Clone, Debug)]
pub struct HopDistances<T: Scalar = f64> {
    pub matrix: Tensor2<T>,
    /// Number of ordered pairs in different components. Their entries hold
    /// the largest finite distance plus one.
    pub imputed_pairs: usize,
}

/// Breadth-first search from every node. Unreachable pairs are set to
/// `max finite distance + 1`.
pub fn bfs_all_pairs<T: Scalar, S: Scalar>(g: &Graph<S>) -> HopDistances<T> {
    let n = g.num_nodes();
    let mut hops = vec![u32::MAX; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut hops[s * n..(s + 1) * n];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for &w in g.neighbors(u) {
                if row[w] == u32::MAX {
                    row[w] = du + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    let max_finite = hops.iter().copied().filter(|&h| h != u32::MAX).max().unwrap_or(0);
    let fill = T::of_usize(max_finite as usize + 1);
    let mut imputed_pairs = 0;
    let data = hops
        .into_iter()
        .map(|h| {
            if h == u32::MAX {
                imputed_pairs += 1;
                fill
            } else {
                T::of_usize(h as usize)
            }
        })
        .collect();
    HopDistances {
        matrix: Tensor2::from_vec(n, n, data).expect("n*n entries"),
        imputed_pairs,
    }
}

/// Classical multidimensional scaling of a distance matrix into `dim`
/// coordinates.
///
/// `B = -1/2 J D² J` is decomposed by power iteration with deflation.
/// Coordinate `k` is `sqrt(λ_k) · v_k`; non-positive eigenvalues give a zero
/// coordinate. Each eigenvector is oriented so that its largest-magnitude
/// entry is positive.
pub fn classical_mds<T: Scalar>(d: &Tensor2<T>, dim: usize) -> Result<Tensor2<T>> {
    let n = d.rows();
    if d.cols() != n {
        return Err(Error::shape("classical_mds", format!("{:?} is not square", d.shape())));
    }
    let scale = d.data().iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let tol = T::of(1e-12) * scale.max(T::one());
    for i in 0..n {
        if d[(i, i)].abs() > tol {
            return Err(Error::InvalidArgument(format!("distance matrix has D[{i}][{i}] != 0")));
        }
        for j in i + 1..n {
            if (d[(i, j)] - d[(j, i)]).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "distance matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut b = double_center(d);
    let mut coords = Tensor2::zeros(n, dim);
    if n == 0 {
        return Ok(coords);
    }
    for k in 0..dim {
        let (lambda, v) = top_eigenpair(&b);
        if lambda <= T::zero() {
            break;
        }
        let s = lambda.sqrt();
        for i in 0..n {
            coords[(i, k)] = s * v[i];
        }
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] -= lambda * v[i] * v[j];
            }
        }
    }
    Ok(coords)
}

fn double_center<T: Scalar>(d: &Tensor2<T>) -> Tensor2<T> {
    let n = d.rows();
    let sq = d.map(|x| x * x);
    let nn = T::of_usize(n);
    let row_mean: Vec<T> = (0..n).map(|i| sq.row(i).iter().copied().sum::<T>() / nn).collect();
    let grand = row_mean.iter().copied().sum::<T>() / nn;
    let half = T::of(0.5);
    // D is symmetric, so column means equal row means.
    Tensor2::from_fn(n, n, |i, j| -half * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand))
}

/// Largest algebraic eigenpair of a symmetric matrix.
fn top_eigenpair<T: Scalar>(b: &Tensor2<T>) -> (T, Vec<T>) {
    let (lambda, v) = power_iteration(b, T::zero());
    if lambda < T::zero() {
        // The dominant eigenvalue is negative; shift the spectrum so that the
        // largest algebraic eigenvalue dominates.
        let shift = -lambda;
        let (mu, v) = power_iteration(b, shift);
        (mu - shift, v)
    } else {
        (lambda, v)
    }
}

fn power_iteration<T: Scalar>(b: &Tensor2<T>, shift: T) -> (T, Vec<T>) {
    let n = b.rows();
    let mut x: Vec<T> = (0..n).map(|i| T::of(((i + 1) as f64).sin())).collect();
    normalize(&mut x);
    let mut lambda = T::zero();
    let tol = T::of(EIGENVALUE_TOL);
    for it in 0..MAX_POWER_ITERATIONS {
        let mut w: Vec<T> = (0..n)
            .map(|i| {
                b.row(i)
                    .iter()
                    .zip(&x)
                    .fold(T::zero(), |acc, (&bij, &xj)| acc + bij * xj)
                    + shift * x[i]
            })
            .collect();
        let next = x.iter().zip(&w).fold(T::zero(), |acc, (&a, &c)| acc + a * c);
        if normalize(&mut w) == T::zero() {
            return (T::zero() - shift, x);
        }
        x = w;
        let done = it > 0 && (next - lambda).abs() <= tol * next.abs().max(T::one());
        lambda = next;
        if done {
            break;
        }
    }
    orient(&mut x);
    (lambda, x)
}

fn normalize<T: Scalar>(x: &mut [T]) -> T {
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm > T::zero() {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

fn orient<T: Scalar>(x: &mut [T]) {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    if x.get(best).is_some_and(|&v| v < T::zero()) {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Two-dimensional Isomap embedding of the graph's hop metric.
pub fn isomap_embed<T: Scalar, S: Scalar>(g: &Graph<S>) -> Result<Embedding<T>> {
    let hops = bfs_all_pairs::<T, S>(g);
    if hops.imputed_pairs > 0 {
        log::warn!(
            "isomap: graph is disconnected; {} pairs use the imputed distance",
            hops.imputed_pairs
        );
    }
    let coords = classical_mds(&hops.matrix, 2)?;
    Embedding::new(coords, Space::Euclidean, Method::Isomap)
}
