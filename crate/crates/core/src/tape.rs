//! Reverse-mode differentiation over a recorded list of dense operations.
//!
//! The tape only knows the handful of kernels the network needs. Anything
//! else (the neighborhood aggregation in [`crate::model`]) plugs in through
//! [`CustomOp`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Handle to a tensor recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation defined outside the tape.
pub trait CustomOp<T: Scalar> {
    /// Gradients with respect to each input, in input order. Entries whose
    /// `needs_grad` flag is false may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor2<T>],
        grad_out: &Tensor2<T>,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor2<T>>>>;
}

enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Relu(Var),
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Concat(Vec<Var>),
    MeanBlocks {
        input: Var,
        blocks: usize,
    },
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        rows: Vec<usize>,
        probs: Tensor2<T>,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T: Scalar> {
    value: Tensor2<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct GradTape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2<T>, op: Op<T>) -> Var {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::MatMul(a, b) => self.requires(*a) || self.requires(*b),
            Op::Relu(a) => self.requires(*a),
            Op::Dropout { input, .. } | Op::MeanBlocks { input, .. } => self.requires(*input),
            Op::Concat(parts) => parts.iter().any(|&p| self.requires(p)),
            Op::SoftmaxXent { logits, .. } => self.requires(*logits),
            Op::Custom { inputs, .. } => inputs.iter().any(|&p| self.requires(p)),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor2<T> {
        &self.nodes[v.0].value
    }

    /// Records a tensor that receives a gradient.
    pub fn leaf(&mut self, value: Tensor2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a tensor that never receives a gradient; operations whose
    /// inputs are all constants are skipped during the backward pass.
    pub fn constant(&mut self, value: Tensor2<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a))
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`. In eval
    /// mode, or with `rate == 0`, the input is returned unchanged.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).data().len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let src = self.value(a);
        let data = src.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor2::from_vec(src.rows(), src.cols(), data)?;
        Ok(self.push(out, Op::Dropout { input: a, mask }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let out = concat_cols(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>())?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn mean_blocks(&mut self, a: Var, blocks: usize) -> Result<Var> {
        let out = mean_blocks(self.value(a), blocks)?;
        Ok(self.push(out, Op::MeanBlocks { input: a, blocks }))
    }

    /// Mean cross-entropy over the rows where `mask` is set. Returns a 1x1
    /// tensor.
    pub fn masked_softmax_xent(&mut self, logits: Var, labels: &[usize], mask: &[bool]) -> Result<Var> {
        let z = self.value(logits);
        if labels.len() != z.rows() || mask.len() != z.rows() {
            return Err(Error::shape(
                "masked_softmax_xent",
                format!(
                    "{} rows, {} labels, {} mask entries",
                    z.rows(),
                    labels.len(),
                    mask.len()
                ),
            ));
        }
        let rows: Vec<usize> = (0..z.rows()).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty loss mask".into()));
        }
        let (probs, loss) = softmax_xent(z, labels, &rows)?;
        let out = Tensor2::from_vec(1, 1, vec![loss])?;
        Ok(self.push(
            out,
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                rows,
                probs,
            },
        ))
    }

    /// Records the output of an externally computed operation.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor2<T>, op: Box<dyn CustomOp<T>>) -> Var {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        )
    }

    /// Gradients of the 1x1 tensor `loss` with respect to every recorded
    /// tensor. Operations are visited in exact reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::filled(1, 1, T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.requires(*a) {
                        let ga = g.matmul_t(self.value(*b))?;
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if self.requires(*b) {
                        let gb = self.value(*a).t_matmul(&g)?;
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, *a, Tensor2::from_vec(x.rows(), x.cols(), data)?)?;
                }
                Op::Dropout { input, mask } => {
                    let data = g.data().iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                    accumulate(
                        &mut grads,
                        *input,
                        Tensor2::from_vec(g.rows(), g.cols(), data)?,
                    )?;
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        accumulate(&mut grads, p, g.cols_slice(start, start + w))?;
                        start += w;
                    }
                }
                Op::MeanBlocks { input, blocks } => {
                    let x = self.value(*input);
                    let w = g.cols();
                    let inv = T::one() / T::of_usize(*blocks);
                    let gx = Tensor2::from_fn(x.rows(), x.cols(), |i, j| g[(i, j % w)] * inv);
                    accumulate(&mut grads, *input, gx)?;
                }
                Op::SoftmaxXent {
                    logits,
                    labels,
                    rows,
                    probs,
                } => {
                    let scale = g[(0, 0)] / T::of_usize(rows.len());
                    let mut gz = Tensor2::zeros(probs.rows(), probs.cols());
                    for &i in rows {
                        for j in 0..probs.cols() {
                            let target = if j == labels[i] { T::one() } else { T::zero() };
                            gz[(i, j)] = (probs[(i, j)] - target) * scale;
                        }
                    }
                    accumulate(&mut grads, *logits, gz)?;
                }
                Op::Custom { inputs, op } => {
                    let vals: Vec<&Tensor2<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                    let needs: Vec<bool> = inputs.iter().map(|&v| self.requires(v)).collect();
                    let gs = op.backward(&vals, &g, &needs)?;
                    if gs.len() != inputs.len() {
                        return Err(Error::shape(
                            "custom backward",
                            format!("{} gradients for {} inputs", gs.len(), inputs.len()),
                        ));
                    }
                    for ((&v, gv), need) in inputs.iter().zip(gs).zip(needs) {
                        if let (Some(gv), true) = (gv, need) {
                            accumulate(&mut grads, v, gv)?;
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor2<T>>], v: Var, g: Tensor2<T>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of [`GradTape::backward`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor2<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor2<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor2::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor2<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor2::zeros(r, c)
            }
        }
    }
}

pub fn concat_cols<T: Scalar>(parts: &[&Tensor2<T>]) -> Result<Tensor2<T>> {
    let Some(first) = parts.first() else {
        return Err(Error::InvalidArgument("concat of zero tensors".into()));
    };
    let rows = first.rows();
    if let Some(bad) = parts.iter().find(|p| p.rows() != rows) {
        return Err(Error::shape(
            "concat_cols",
            format!("row counts {rows} and {}", bad.rows()),
        ));
    }
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Tensor2::zeros(rows, cols);
    for i in 0..rows {
        let mut start = 0;
        for p in parts {
            out.row_mut(i)[start..start + p.cols()].copy_from_slice(p.row(i));
            start += p.cols();
        }
    }
    Ok(out)
}

pub fn mean_blocks<T: Scalar>(a: &Tensor2<T>, blocks: usize) -> Result<Tensor2<T>> {
    if blocks == 0 || a.cols() % blocks != 0 {
        return Err(Error::shape(
            "mean_blocks",
            format!("{} columns into {blocks} blocks", a.cols()),
        ));
    }
    let w = a.cols() / blocks;
    let inv = T::one() / T::of_usize(blocks);
    let mut out = Tensor2::zeros(a.rows(), w);
    for i in 0..a.rows() {
        let src = a.row(i);
        let dst = out.row_mut(i);
        for b in 0..blocks {
            for (d, &s) in dst.iter_mut().zip(&src[b * w..(b + 1) * w]) {
                *d += s;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv;
        }
    }
    Ok(out)
}

/// Row-max-stabilized softmax and mean cross-entropy over `rows`.
pub fn softmax_xent<T: Scalar>(
    logits: &Tensor2<T>,
    labels: &[usize],
    rows: &[usize],
) -> Result<(Tensor2<T>, T)> {
    let mut probs = Tensor2::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let z = logits.row(i);
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let denom: T = z.iter().map(|&v| (v - m).exp()).sum();
        for (p, &v) in probs.row_mut(i).iter_mut().zip(z) {
            *p = (v - m).exp() / denom;
        }
    }
    let mut loss = T::zero();
    for &i in rows {
        let c = labels[i];
        if c >= logits.cols() {
            return Err(Error::InvalidArgument(format!(
                "label {c} out of range for {} classes",
                logits.cols()
            )));
        }
        let z = logits.row(i);
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss += lse - z[c];
    }
    Ok((probs, loss / T::of_usize(rows.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[Vec<f64>]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.leaf(t(&[vec![-1.0, 2.0]]));
        let r = tape.relu(a);
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let mut tape = GradTape::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = tape.leaf(t(&[vec![1.0, -2.0, 3.0]]));
        let d = tape.dropout(a, 0.0, true, &mut rng).unwrap();
        assert_eq!(tape.value(d), tape.value(a));
        let e = tape.dropout(a, 0.5, false, &mut rng).unwrap();
        assert_eq!(tape.value(e), tape.value(a));
        assert!(tape.dropout(a, 1.0, true, &mut rng).is_err());
        assert!(tape.dropout(a, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut tape = GradTape::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = tape.leaf(Tensor2::filled(10, 10, 1.0));
        let d = tape.dropout(a, 0.5, true, &mut rng).unwrap();
        assert!(tape.value(d).data().iter().all(|&x| x == 0.0 || x == 2.0));
    }

    #[test]
    fn mean_of_two_blocks() {
        let m = mean_blocks(&t(&[vec![2.0, 4.0]]), 2).unwrap();
        assert_eq!(m.data(), &[3.0]);
        assert!(mean_blocks(&t(&[vec![1.0, 2.0, 3.0]]), 2).is_err());
    }

    #[test]
    fn concat_rejects_ragged_rows() {
        let a = Tensor2::<f64>::zeros(2, 1);
        let b = Tensor2::<f64>::zeros(3, 1);
        assert!(concat_cols(&[&a, &b]).is_err());
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let mut tape = GradTape::<f64>::new();
        let z = tape.leaf(Tensor2::zeros(4, 5));
        let l = tape
            .masked_softmax_xent(z, &[0, 1, 2, 3], &[true; 4])
            .unwrap();
        assert!((tape.value(l)[(0, 0)] - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_give_near_zero_loss() {
        let mut tape = GradTape::<f64>::new();
        let z = tape.leaf(t(&[vec![40.0, 0.0, 0.0], vec![0.0, 0.0, 40.0]]));
        let l = tape.masked_softmax_xent(z, &[0, 2], &[true, true]).unwrap();
        assert!(tape.value(l)[(0, 0)] < 1e-6);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mut tape = GradTape::<f64>::new();
        let z = tape.leaf(Tensor2::zeros(2, 2));
        assert!(tape.masked_softmax_xent(z, &[0, 1], &[false, false]).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.leaf(t(&[vec![1.0, 2.0]]));
        let unused = tape.leaf(t(&[vec![5.0]]));
        let w = tape.leaf(t(&[vec![1.0], vec![1.0]]));
        let y = tape.matmul(a, w).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(unused).data(), &[0.0]);
        assert_eq!(grads.get(w).data(), &[1.0, 2.0]);
    }

    #[test]
    fn concat_backward_splits_gradient() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.leaf(t(&[vec![1.0], vec![2.0]]));
        let b = tape.leaf(t(&[vec![3.0, 4.0], vec![5.0, 6.0]]));
        let c = tape.concat_cols(&[a, b]).unwrap();
        let w = tape.leaf(t(&[vec![1.0], vec![-2.0], vec![0.5]]));
        let y = tape.matmul(c, w).unwrap();
        let ones = tape.leaf(Tensor2::filled(1, 2, 1.0));
        let s = tape.matmul(ones, y).unwrap();
        let grads = tape.backward(s).unwrap();
        let (ga, gb, gc) = (grads.get(a), grads.get(b), grads.get(c));
        let sq = |x: &Tensor2| x.data().iter().map(|v| v * v).sum::<f64>();
        assert_eq!(ga.data(), &[1.0, 1.0]);
        assert_eq!(gb.data(), &[-2.0, 0.5, -2.0, 0.5]);
        assert_eq!(sq(&ga) + sq(&gb), sq(&gc));
    }
}
