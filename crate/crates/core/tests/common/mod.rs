//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use geomgcn::model::NeighborKind;
use geomgcn::neighborhood::Relation;
use geomgcn::tape::{CustomOp, GradTape, Var};
use geomgcn::{Graph, Result, StructuralNeighborhood, Tensor2, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Ranks with ties sharing their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = mean;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// All-pairs hop counts by Floyd–Warshall; `f64::INFINITY` when unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(u, v) in edges {
        d[u][v] = 1.0;
        d[v][u] = 1.0;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Spearman correlation between embedded Euclidean distances and hop
/// distances over unordered pairs.
pub fn hop_rank_correlation(coords: &Tensor2, n: usize, edges: &[(usize, usize)]) -> f64 {
    let hops = floyd_warshall(n, edges);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = coords
                .row(i)
                .iter()
                .zip(coords.row(j))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            a.push(d);
            b.push(hops[i][j]);
        }
    }
    spearman(&a, &b)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with eigenvectors as columns.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j].powi(2)).sum();
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (vals, vecs)
}

/// Symmetrically normalized adjacency with self-loops, as a dense matrix.
pub fn gcn_adjacency(g: &Graph) -> Tensor2 {
    let n = g.num_nodes();
    let mut a = Tensor2::identity(n);
    for &(u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    Tensor2::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt())
}

/// Two-layer GCN on dense matrices: `Â relu(Â X W1) W2`.
pub fn dense_gcn(g: &Graph, w1: &Tensor2, w2: &Tensor2) -> Tensor2 {
    let a = gcn_adjacency(g);
    let h = a.matmul(g.features()).unwrap().matmul(w1).unwrap().map(|x| x.max(0.0));
    a.matmul(&h).unwrap().matmul(w2).unwrap()
}

/// Virtual-node vectors of `v` by direct summation over the neighbor lists,
/// in slot order, with coefficient `(deg_v deg_u)^p` where the degree is the
/// graph-list length.
pub fn brute_virtual_nodes(h: &Tensor2, nb: &StructuralNeighborhood, variant: Variant, p: f64, v: usize) -> Vec<Vec<f64>> {
    let deg = |x: usize| nb.graph[x].len().max(1) as f64;
    let k = variant.virtual_nodes();
    let mut out = vec![vec![0.0; h.cols()]; k];
    for (kind, lists) in [(NeighborKind::Graph, &nb.graph), (NeighborKind::Latent, &nb.latent)] {
        for &(u, r) in &lists[v] {
            if let Some(slot) = slot_of(variant, kind, r) {
                let c = (deg(v) * deg(u)).powf(p);
                for (o, x) in out[slot].iter_mut().zip(h.row(u)) {
                    *o += c * x;
                }
            }
        }
    }
    out
}

/// Slot layout written out independently of the library.
fn slot_of(variant: Variant, kind: NeighborKind, r: Relation) -> Option<usize> {
    let ri = match r {
        Relation::UpperLeft => 0,
        Relation::UpperRight => 1,
        Relation::LowerLeft => 2,
        Relation::LowerRight => 3,
    };
    match (variant, kind) {
        (Variant::Geom, NeighborKind::Graph) => Some(ri),
        (Variant::Geom, NeighborKind::Latent) => Some(4 + ri),
        (Variant::GOnly, NeighborKind::Graph) | (Variant::SOnly, NeighborKind::Latent) => Some(ri),
        (Variant::Gcn, NeighborKind::Graph) => Some(0),
        _ => None,
    }
}

/// Two-layer forward pass from the brute-force virtual nodes: concat,
/// `W1`, ReLU, then mean, `W2`.
pub fn brute_forward(x: &Tensor2, nb: &StructuralNeighborhood, variant: Variant, p: f64, w1: &Tensor2, w2: &Tensor2) -> Tensor2 {
    let n = x.rows();
    let k = variant.virtual_nodes();
    let concat = Tensor2::from_rows(
        &(0..n)
            .map(|v| brute_virtual_nodes(x, nb, variant, p, v).concat())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let hidden = concat.matmul(w1).unwrap().map(|z| z.max(0.0));
    let mean = Tensor2::from_rows(
        &(0..n)
            .map(|v| {
                let e = brute_virtual_nodes(&hidden, nb, variant, p, v);
                (0..hidden.cols())
                    .map(|j| e.iter().map(|row| row[j]).sum::<f64>() / k as f64)
                    .collect()
            })
            .collect::<Vec<_>>(),
    )
    .unwrap();
    mean.matmul(w2).unwrap()
}

/// `Σ y ⊙ r`, reducing any tensor to a scalar loss with a known gradient.
struct WeightedSum(Tensor2);

impl CustomOp<f64> for WeightedSum {
    fn backward(&self, _: &[&Tensor2], grad_out: &Tensor2, _: &[bool]) -> Result<Vec<Option<Tensor2>>> {
        Ok(vec![Some(self.0.map(|r| r * grad_out[(0, 0)]))])
    }
}

pub fn weighted_sum(tape: &mut GradTape, y: Var, weights: &Tensor2) -> Var {
    let s: f64 = tape.value(y).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
    tape.custom(&[y], Tensor2::from_vec(1, 1, vec![s]).unwrap(), Box::new(WeightedSum(weights.clone())))
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &Tensor2, b: &Tensor2) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub const FD_STEP: f64 = 1e-6;

/// Largest relative error between tape gradients and central differences
/// over every input. `build` records a scalar loss from the input leaves.
pub fn gradient_error<F>(inputs: &[Tensor2], build: F) -> f64
where
    F: Fn(&mut GradTape, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor2]| {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = build(&mut tape, &vars);
        (tape, vars, loss)
    };
    let (tape, vars, loss) = eval(inputs);
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]);
        let mut numeric = Tensor2::zeros(x.rows(), x.cols());
        for j in 0..x.data().len() {
            let probe = |delta: f64| {
                let mut xs = inputs.to_vec();
                xs[i].data_mut()[j] += delta;
                let (t, _, l) = eval(&xs);
                t.value(l)[(0, 0)]
            };
            numeric.data_mut()[j] = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// A random permutation of `0..n`.
pub fn permutation(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}
