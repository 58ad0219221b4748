//! Training protocol, benchmark reports, ablations and the case study.

pub mod casestudy;
pub mod datasets;
pub mod report;
pub mod synthetic;
pub mod train;

use std::path::Path;

pub use casestudy::aggregation_case_study;
pub use datasets::{info, load_dataset, row_normalize, DatasetInfo, DATASETS};
pub use report::{ablation_suite, benchmark, benchmark_runs, epoch_timing, mean_std, AblationTable, RunReport, DEFAULT_SEEDS};
pub use train::{accuracy, train_once, TrainConfig, TrainOutcome};

use crate::embed::isomap::isomap_embed;
use crate::embed::poincare::{poincare_embed, PoincareConfig};
use crate::embed::struc2vec::{struc2vec_embed, Struc2vecConfig};
use crate::embed::{Embedding, Method};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::{push_header, write_file};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Settings for every embedding backend.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbedConfig {
    pub poincare: PoincareConfig,
    pub struc2vec: Struc2vecConfig,
}

pub fn embed_graph<T: Scalar, S: Scalar>(g: &Graph<S>, method: Method, cfg: &EmbedConfig) -> Result<Embedding<T>> {
    match method {
        Method::Isomap => isomap_embed(g),
        Method::Poincare => poincare_embed(g, &cfg.poincare),
        Method::Struc2vec => struc2vec_embed(g, &cfg.struc2vec),
    }
}

/// Writes `rep` (one row per node) with the node's label appended as a last
/// column.
pub fn export_features<T: Scalar>(path: &Path, rep: &Tensor2<T>, labels: &[usize], header: &str) -> Result<()> {
    if rep.rows() != labels.len() {
        return Err(Error::shape(
            "export_features",
            format!("{} rows for {} labels", rep.rows(), labels.len()),
        ));
    }
    let mut out = String::new();
    push_header(&mut out, header);
    for (i, label) in labels.iter().enumerate() {
        for x in rep.row(i) {
            out.push_str(&format!("{x:e} "));
        }
        out.push_str(&label.to_string());
        out.push('\n');
    }
    write_file(path, &out)
}
