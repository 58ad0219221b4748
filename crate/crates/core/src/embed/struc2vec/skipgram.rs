//! Skip-gram with negative sampling over node walks.

use rand::Rng;

use super::Struc2vecConfig;
use crate::rng;
use crate::tensor::Tensor2;

const NOISE_POWER: f64 = 0.75;
const MIN_LR_FRACTION: f64 = 1e-4;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cumulative unigram^0.75 noise distribution over node ids.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(NOISE_POWER);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let r = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.cumulative.len() - 1)
    }
}

/// Trains input vectors for `n` nodes; returns them as an `n × dim` matrix.
///
/// Each center node is paired with every context node inside a randomly
/// shrunk window; the learning rate decays linearly over all epochs.
pub fn train(walks: &[Vec<u32>], n: usize, cfg: &Struc2vecConfig) -> Tensor2<f64> {
    let dim = cfg.dim;
    let mut r = rng::stream(cfg.seed, 0x5C1B, 0);
    let mut input = Tensor2::from_fn(n, dim, |_, _| (r.random::<f64>() - 0.5) / dim as f64);
    let mut output = Tensor2::<f64>::zeros(n, dim);

    let mut counts = vec![0u64; n];
    for w in walks {
        for &v in w {
            counts[v as usize] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return input;
    }
    let noise = NoiseTable::new(&counts);
    let total_tokens: u64 = counts.iter().sum::<u64>() * cfg.sg_epochs as u64;
    let mut processed = 0u64;
    let mut grad_in = vec![0.0; dim];

    for _ in 0..cfg.sg_epochs {
        for walk in walks {
            for (i, &center) in walk.iter().enumerate() {
                let lr = cfg.sg_lr
                    * (1.0 - processed as f64 / total_tokens as f64).max(MIN_LR_FRACTION);
                processed += 1;
                let span = r.random_range(1..=cfg.window);
                let lo = i.saturating_sub(span);
                let hi = (i + span).min(walk.len() - 1);
                let center = center as usize;
                for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    for s in 0..=cfg.negatives {
                        let (target, label) = if s == 0 {
                            (ctx as usize, 1.0)
                        } else {
                            let t = noise.sample(&mut r);
                            if t == ctx as usize {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let dot: f64 = input
                            .row(center)
                            .iter()
                            .zip(output.row(target))
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for (k, gi) in grad_in.iter_mut().enumerate() {
                            *gi += g * output[(target, k)];
                        }
                        for k in 0..dim {
                            output[(target, k)] += g * input[(center, k)];
                        }
                    }
                    for (x, gi) in input.row_mut(center).iter_mut().zip(&grad_in) {
                        *x += gi;
                    }
                }
            }
        }
    }
    input
}
