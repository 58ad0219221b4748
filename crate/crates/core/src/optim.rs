//! Adam with L2 weight decay folded into the gradient.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Clone, Debug)]
pub struct Param<T: Scalar = f64> {
    pub name: String,
    pub value: Tensor2<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor2<T>) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T: Scalar = f64> {
    m: Vec<Tensor2<T>>,
    v: Vec<Tensor2<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        Self {
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
///
/// `weight_decay * param` is added to each gradient before the moment
/// updates. The step is rejected, leaving everything untouched, if any
/// gradient is non-finite.
pub fn adam_step<T: Scalar>(
    params: &mut [Param<T>],
    grads: &[Tensor2<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} gradients", params.len(), grads.len()),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("`{}` is {:?}, gradient is {:?}", p.name, p.value.shape(), g.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    if state.m.is_empty() {
        state.m = params
            .iter()
            .map(|p| Tensor2::zeros(p.value.rows(), p.value.cols()))
            .collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let t = state.step as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps, wd) = (T::of(cfg.lr), T::of(cfg.eps), T::of(cfg.weight_decay));

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pv = p.value.data_mut();
        for (((w, &gr), mi), vi) in pv
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gr = gr + wd * *w;
            *mi = b1 * *mi + (T::one() - b1) * gr;
            *vi = b2 * *vi + (T::one() - b2) * gr * gr;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor2 {
        Tensor2::filled(1, 1, v)
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut params = vec![Param::new("w", scalar(0.7))];
        let mut state = AdamState::new();
        for _ in 0..3 {
            adam_step(&mut params, &[scalar(0.0)], &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params[0].value[(0, 0)], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        for eps in [0.0, 1e-8] {
            let cfg = AdamConfig {
                lr: 0.1,
                eps,
                ..AdamConfig::default()
            };
            let mut params = vec![Param::new("w", scalar(1.0))];
            let mut state = AdamState::new();
            adam_step(&mut params, &[scalar(1.0)], &mut state, &cfg).unwrap();
            let expected = 1.0 - 0.1 / (1.0 + eps);
            assert!((params[0].value[(0, 0)] - expected).abs() < 1e-12);
            if eps == 0.0 {
                assert!((params[0].value[(0, 0)] - 0.9).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut params = vec![Param::new("layer1.weight", scalar(1.0))];
        let err = adam_step(
            &mut params,
            &[scalar(f64::NAN)],
            &mut AdamState::new(),
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("layer1.weight"));
        assert_eq!(params[0].value[(0, 0)], 1.0);
    }

    #[test]
    fn weight_decay_acts_as_l2_gradient() {
        let cfg = AdamConfig {
            lr: 0.1,
            eps: 0.0,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut params = vec![Param::new("w", scalar(2.0))];
        adam_step(&mut params, &[scalar(0.0)], &mut AdamState::new(), &cfg).unwrap();
        // effective gradient 1.0 > 0, so the first step is exactly -lr
        assert!((params[0].value[(0, 0)] - 1.9).abs() < 1e-12);
    }
}
