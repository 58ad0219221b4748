//! Poincaré-ball embedding trained by Riemannian SGD with a softmax ranking
//! loss over sampled negatives.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{Embedding, Method, Space};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Lower bound for the arcosh argument inside the training loss, keeping
/// the gradient's `sqrt(γ² - 1)` away from zero.
pub const ARCOSH_CLAMP: f64 = 1.0 + 1e-12;

/// Relative distance below `max_norm` at which retracted points land.
const RETRACT_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub burn_in_epochs: usize,
    pub burn_in_lr_factor: f64,
    pub negatives: usize,
    pub max_norm: f64,
    pub init_range: f64,
    pub seed: u64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            epochs: 300,
            learning_rate: 0.5,
            burn_in_epochs: 20,
            burn_in_lr_factor: 0.01,
            negatives: 10,
            max_norm: 1.0 - 1e-5,
            init_range: 1e-3,
            seed: 0,
        }
    }
}

impl PoincareConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("poincare learning_rate must be > 0".into()));
        }
        if !(self.max_norm > 0.0 && self.max_norm < 1.0) {
            return Err(Error::InvalidArgument("poincare max_norm must lie in (0, 1)".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("poincare dim must be positive".into()));
        }
        Ok(())
    }
}

fn sq_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}

fn check_inside<T: Scalar>(x: &[T]) -> Result<T> {
    let n = sq_norm(x);
    if n < T::one() {
        Ok(n)
    } else {
        Err(Error::OutsideBall(x.iter().map(|v| v.as_f64()).collect()))
    }
}

/// `arcosh(1 + x)` without cancellation for small `x`.
fn arcosh1p<T: Scalar>(x: T) -> T {
    (x + (x * (x + T::of(2.0))).sqrt()).ln_1p()
}

/// Geodesic distance in the Poincaré ball:
/// `arcosh(1 + 2‖u−v‖² / ((1−‖u‖²)(1−‖v‖²)))`.
pub fn poincare_distance<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    let nu = check_inside(u)?;
    let nv = check_inside(v)?;
    let diff: T = u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let x = T::of(2.0) * diff / ((T::one() - nu) * (T::one() - nv));
    Ok(arcosh1p(x))
}

/// Radial retraction into the open ball of radius `max_norm`. Points on or
/// outside the boundary land just inside it.
pub fn project_to_ball<T: Scalar>(u: &[T], max_norm: T) -> Vec<T> {
    let norm = sq_norm(u).sqrt();
    if norm < max_norm {
        u.to_vec()
    } else {
        let s = max_norm * T::of(1.0 - RETRACT_MARGIN) / norm;
        u.iter().map(|&x| x * s).collect()
    }
}

/// Distance and its Euclidean gradients with respect to both endpoints,
/// with the arcosh argument clamped at [`ARCOSH_CLAMP`].
fn distance_with_grads<T: Scalar>(u: &[T], v: &[T]) -> (T, Vec<T>, Vec<T>) {
    let nu = sq_norm(u);
    let nv = sq_norm(v);
    let alpha = T::one() - nu;
    let beta = T::one() - nv;
    let diff: T = u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let uv: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let two = T::of(2.0);
    let gamma = (T::one() + two * diff / (alpha * beta)).max(T::of(ARCOSH_CLAMP));
    let d = arcosh1p(gamma - T::one());
    let root = (gamma * gamma - T::one()).sqrt();
    let four = T::of(4.0);
    let cu = (nv - two * uv + T::one()) / (alpha * alpha);
    let cv = (nu - two * uv + T::one()) / (beta * beta);
    let su = four / (beta * root);
    let sv = four / (alpha * root);
    let gu = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| su * (cu * a - b / alpha))
        .collect();
    let gv = v
        .iter()
        .zip(u)
        .map(|(&b, &a)| sv * (cv * b - a / beta))
        .collect();
    (d, gu, gv)
}

/// Softmax ranking loss `-log(e^{-d(u,v)} / Σ_{w ∈ {v} ∪ negatives} e^{-d(u,w)})`.
pub fn ranking_loss<T: Scalar>(coords: &Tensor2<T>, u: usize, v: usize, negatives: &[usize]) -> T {
    let dist = |w: usize| distance_with_grads(coords.row(u), coords.row(w)).0;
    let dv = dist(v);
    let all: Vec<T> = std::iter::once(dv).chain(negatives.iter().map(|&w| dist(w))).collect();
    let m = all.iter().copied().fold(T::infinity(), T::min);
    let lse = -m + all.iter().map(|&d| (m - d).exp()).sum::<T>().ln();
    dv + lse
}

/// Euclidean gradient of [`ranking_loss`], as `(node, gradient)` pairs.
fn ranking_grads<T: Scalar>(
    coords: &Tensor2<T>,
    u: usize,
    v: usize,
    negatives: &[usize],
) -> (T, Vec<(usize, Vec<T>)>) {
    let targets: Vec<usize> = std::iter::once(v).chain(negatives.iter().copied()).collect();
    let parts: Vec<(T, Vec<T>, Vec<T>)> = targets
        .iter()
        .map(|&w| distance_with_grads(coords.row(u), coords.row(w)))
        .collect();
    let m = parts.iter().map(|p| p.0).fold(T::infinity(), T::min);
    let weights: Vec<T> = parts.iter().map(|p| (m - p.0).exp()).collect();
    let z: T = weights.iter().copied().sum();
    let loss = parts[0].0 - m + z.ln();

    let dim = coords.cols();
    let mut gu = vec![T::zero(); dim];
    let mut out = Vec::with_capacity(targets.len() + 1);
    for (k, (&w, (_, du, dw))) in targets.iter().zip(&parts).enumerate() {
        let p = weights[k] / z;
        let coef = if k == 0 { T::one() - p } else { -p };
        for (g, &x) in gu.iter_mut().zip(du) {
            *g += coef * x;
        }
        out.push((w, dw.iter().map(|&x| coef * x).collect()));
    }
    out.push((u, gu));
    (loss, out)
}

/// Sums gradients that target the same node so each point moves once per
/// step.
fn merge_by_node<T: Scalar>(grads: &mut Vec<(usize, Vec<T>)>) {
    grads.sort_by_key(|(node, _)| *node);
    let mut merged: Vec<(usize, Vec<T>)> = Vec::with_capacity(grads.len());
    for (node, g) in grads.drain(..) {
        match merged.last_mut() {
            Some((last, acc)) if *last == node => {
                for (a, x) in acc.iter_mut().zip(g) {
                    *a += x;
                }
            }
            _ => merged.push((node, g)),
        }
    }
    *grads = merged;
}

/// Trains a Poincaré embedding of the graph's edges.
///
/// Every epoch visits each edge in both orientations, in a shuffled order.
/// Each anchor gets `negatives` nodes drawn uniformly from all nodes except
/// itself. The Euclidean gradient is rescaled by `(1 − ‖θ‖²)² / 4` before the
/// step and points are projected back inside `max_norm` afterwards. The first
/// `burn_in_epochs` run at `learning_rate × burn_in_lr_factor`.
pub fn poincare_embed<T: Scalar, S: Scalar>(g: &Graph<S>, cfg: &PoincareConfig) -> Result<Embedding<T>> {
    cfg.validate()?;
    if g.num_edges() == 0 {
        return Err(Error::InvalidArgument("poincare embedding needs at least one edge".into()));
    }
    let n = g.num_nodes();
    let mut rng = rng::stream(cfg.seed, 0x9011, 0);
    let range = cfg.init_range;
    let mut coords = Tensor2::<T>::from_fn(n, cfg.dim, |_, _| T::of(rng.random_range(-range..=range)));
    let mut pairs: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .flat_map(|&(u, v)| [(u, v), (v, u)])
        .collect();
    let max_norm = T::of(cfg.max_norm);
    let four = T::of(4.0);
    let mut negs = Vec::with_capacity(cfg.negatives);

    for epoch in 0..cfg.epochs {
        let lr = if epoch < cfg.burn_in_epochs {
            cfg.learning_rate * cfg.burn_in_lr_factor
        } else {
            cfg.learning_rate
        };
        let lr = T::of(lr);
        pairs.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for &(u, v) in &pairs {
            negs.clear();
            for _ in 0..cfg.negatives {
                let r = rng.random_range(0..n - 1);
                negs.push(if r >= u { r + 1 } else { r });
            }
            let (loss, mut grads) = ranking_grads(&coords, u, v, &negs);
            merge_by_node(&mut grads);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "poincare loss is {loss} at epoch {epoch} on pair ({u}, {v})"
                )));
            }
            epoch_loss += loss;
            for (node, grad) in grads {
                let point = coords.row_mut(node);
                let metric = (T::one() - sq_norm(point)).powi(2) / four;
                for (x, gx) in point.iter_mut().zip(&grad) {
                    *x -= lr * metric * *gx;
                }
                let projected = project_to_ball(point, max_norm);
                point.copy_from_slice(&projected);
            }
        }
        log::debug!("poincare epoch {epoch}: loss {}", epoch_loss / T::of_usize(pairs.len()));
    }
    Embedding::new(coords, Space::Hyperbolic, Method::Poincare)
}
