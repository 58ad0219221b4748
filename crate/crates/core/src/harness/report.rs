//! Multi-split benchmark runs, ablation tables and timing comparisons.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::Method;
use crate::error::{Error, Result};
use crate::graph::{random_split, Graph};
use crate::model::Variant;
use crate::neighborhood::StructuralNeighborhood;
use crate::scalar::Scalar;

use super::train::{time_epochs, train_once, TrainConfig, TrainOutcome};

/// Ten split seeds used when none are given.
pub const DEFAULT_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Test accuracy per seed, in percent.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `accuracies`.
    pub std: f64,
    pub rho: f64,
    pub beta: f64,
    /// Best epoch per seed.
    pub epochs: Vec<usize>,
    pub seconds: f64,
    /// Resolved configuration.
    pub config: serde_json::Value,
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One training run per seed, each on its own stratified split. Runs are
/// independent and may execute in parallel; the report does not depend on
/// scheduling.
pub fn benchmark<T: Scalar>(
    dataset: &str,
    g: &Graph<T>,
    nb: &StructuralNeighborhood,
    cfg: &TrainConfig,
    seeds: &[u64],
    config: serde_json::Value,
) -> Result<RunReport> {
    Ok(benchmark_runs(dataset, g, nb, cfg, seeds, config)?.0)
}

/// [`benchmark`] that also returns each seed's outcome, in seed order.
pub fn benchmark_runs<T: Scalar>(
    dataset: &str,
    g: &Graph<T>,
    nb: &StructuralNeighborhood,
    cfg: &TrainConfig,
    seeds: &[u64],
    config: serde_json::Value,
) -> Result<(RunReport, Vec<TrainOutcome<T>>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one seed".into()));
    }
    let t0 = Instant::now();
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let split = random_split(g, seed)?;
            train_once(g, nb, cfg, &split, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = runs.iter().map(|r| 100.0 * r.test_accuracy).collect();
    let (mean, std) = mean_std(&accuracies);
    let report = RunReport {
        dataset: dataset.to_string(),
        variant: cfg.variant.to_string(),
        seeds: seeds.to_vec(),
        accuracies,
        mean,
        std,
        rho: nb.rho,
        beta: g.homophily_beta(),
        epochs: runs.iter().map(|r| r.best_epoch).collect(),
        seconds: t0.elapsed().as_secs_f64(),
        config,
    };
    Ok((report, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Embedding behind the neighborhood; `None` for the GCN row.
    pub method: Option<Method>,
    pub mean: f64,
    pub std: f64,
    /// `mean` minus the GCN mean, in accuracy points.
    pub delta_vs_gcn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub beta: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Fixed-width text table, one row per variant.
    pub fn to_text(&self) -> String {
        let mut s = format!("dataset={} beta={:.4}\n", self.dataset, self.beta);
        let _ = writeln!(s, "{:<8} {:<10} {:>8} {:>7} {:>9}", "variant", "embedding", "mean", "std", "delta");
        for r in &self.rows {
            let m = r.method.map_or("-", Method::as_str);
            let arrow = match r.delta_vs_gcn.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => "up",
                Some(std::cmp::Ordering::Less) => "down",
                _ => "same",
            };
            let _ = writeln!(
                s,
                "{:<8} {:<10} {:>8.2} {:>7.2} {:>+9.2} {arrow}",
                r.variant.as_str(),
                m,
                r.mean,
                r.std,
                r.delta_vs_gcn
            );
        }
        s
    }
}

/// GCN, then graph-only and latent-only variants for every supplied
/// neighborhood. `base` supplies everything except variant and width; the
/// width is `gcn_hidden` times the variant's virtual-node count.
pub fn ablation_suite<T: Scalar>(
    dataset: &str,
    g: &Graph<T>,
    neighborhoods: &[(Method, StructuralNeighborhood)],
    base: &TrainConfig,
    gcn_hidden: usize,
    seeds: &[u64],
) -> Result<AblationTable> {
    let Some((_, first)) = neighborhoods.first() else {
        return Err(Error::InvalidArgument("ablation needs at least one neighborhood".into()));
    };
    let cfg_for = |variant: Variant| TrainConfig {
        variant,
        hidden_units: gcn_hidden * variant.virtual_nodes(),
        ..*base
    };
    let run = |variant: Variant, nb: &StructuralNeighborhood| {
        benchmark(dataset, g, nb, &cfg_for(variant), seeds, serde_json::Value::Null)
    };
    let gcn = run(Variant::Gcn, first)?;
    let mut rows = vec![AblationRow {
        variant: Variant::Gcn,
        method: None,
        mean: gcn.mean,
        std: gcn.std,
        delta_vs_gcn: 0.0,
    }];
    for (method, nb) in neighborhoods {
        for variant in [Variant::GOnly, Variant::SOnly] {
            let r = run(variant, nb)?;
            rows.push(AblationRow {
                variant,
                method: Some(*method),
                mean: r.mean,
                std: r.std,
                delta_vs_gcn: r.mean - gcn.mean,
            });
        }
    }
    Ok(AblationTable {
        dataset: dataset.to_string(),
        beta: g.homophily_beta(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub geom_seconds: f64,
    pub gcn_seconds: f64,
    /// `geom_seconds / gcn_seconds`.
    pub ratio: f64,
    /// Number of virtual nodes per node in the full model.
    pub theoretical: f64,
}

/// Mean training-step time of the full model against plain GCN, both with
/// their dataset widths.
pub fn epoch_timing<T: Scalar>(
    g: &Graph<T>,
    nb: &StructuralNeighborhood,
    geom: &TrainConfig,
    gcn: &TrainConfig,
    epochs: usize,
) -> Result<EpochTiming> {
    let split = random_split(g, 0)?;
    // one warm-up step each so allocation effects do not skew the first
    time_epochs(g, nb, geom, &split, 1)?;
    time_epochs(g, nb, gcn, &split, 1)?;
    let geom_seconds = time_epochs(g, nb, geom, &split, epochs)?;
    let gcn_seconds = time_epochs(g, nb, gcn, &split, epochs)?;
    Ok(EpochTiming {
        geom_seconds,
        gcn_seconds,
        ratio: geom_seconds / gcn_seconds,
        theoretical: Variant::Geom.virtual_nodes() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }
}
