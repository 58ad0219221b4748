//! Benchmark dataset registry and loader for the normalized on-disk layout
//! `<root>/<name>/{edges,features,labels}.txt`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{BuildStats, Graph};
use crate::io::load_graph;
use crate::model::Variant;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

use super::train::TrainConfig;

/// Environment variable naming the dataset root.
pub const DATA_ENV: &str = "GEOMGCN_DATA";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Citation,
    WebKb,
    Wikipedia,
    Actor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetInfo {
    pub name: &'static str,
    pub family: Family,
    pub num_nodes: usize,
    /// Published edge count; sources differ on whether it is taken before
    /// or after symmetrization.
    pub num_edges: usize,
    pub num_features: usize,
    pub num_classes: usize,
    /// Hidden width of the plain GCN on this dataset.
    pub gcn_hidden: usize,
    /// Published homophily index.
    pub reference_beta: f64,
}

pub const DATASETS: [DatasetInfo; 9] = [
    DatasetInfo { name: "cora", family: Family::Citation, num_nodes: 2708, num_edges: 5429, num_features: 1433, num_classes: 7, gcn_hidden: 16, reference_beta: 0.83 },
    DatasetInfo { name: "citeseer", family: Family::Citation, num_nodes: 3327, num_edges: 4732, num_features: 3703, num_classes: 6, gcn_hidden: 16, reference_beta: 0.71 },
    DatasetInfo { name: "pubmed", family: Family::Citation, num_nodes: 19717, num_edges: 44338, num_features: 500, num_classes: 3, gcn_hidden: 64, reference_beta: 0.79 },
    DatasetInfo { name: "chameleon", family: Family::Wikipedia, num_nodes: 2277, num_edges: 36101, num_features: 2325, num_classes: 5, gcn_hidden: 48, reference_beta: 0.25 },
    DatasetInfo { name: "squirrel", family: Family::Wikipedia, num_nodes: 5201, num_edges: 217073, num_features: 2089, num_classes: 5, gcn_hidden: 48, reference_beta: 0.22 },
    DatasetInfo { name: "actor", family: Family::Actor, num_nodes: 7600, num_edges: 33544, num_features: 931, num_classes: 5, gcn_hidden: 32, reference_beta: 0.24 },
    DatasetInfo { name: "cornell", family: Family::WebKb, num_nodes: 183, num_edges: 295, num_features: 1703, num_classes: 5, gcn_hidden: 32, reference_beta: 0.11 },
    DatasetInfo { name: "texas", family: Family::WebKb, num_nodes: 183, num_edges: 309, num_features: 1703, num_classes: 5, gcn_hidden: 32, reference_beta: 0.06 },
    DatasetInfo { name: "wisconsin", family: Family::WebKb, num_nodes: 251, num_edges: 499, num_features: 1703, num_classes: 5, gcn_hidden: 32, reference_beta: 0.16 },
];

pub fn info(name: &str) -> Result<&'static DatasetInfo> {
    let lower = name.to_ascii_lowercase();
    DATASETS
        .iter()
        .find(|d| d.name == lower)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset `{name}`")))
}

impl DatasetInfo {
    pub fn weight_decay(&self) -> f64 {
        match self.family {
            Family::WebKb => 5e-6,
            _ => 5e-5,
        }
    }

    /// Training defaults for `variant`: the hidden width grows with the
    /// number of virtual nodes so each virtual node keeps the GCN width.
    pub fn train_config(&self, variant: Variant) -> TrainConfig {
        TrainConfig {
            weight_decay: self.weight_decay(),
            hidden_units: self.gcn_hidden * variant.virtual_nodes(),
            variant,
            ..TrainConfig::default()
        }
    }
}

/// Dataset root: `explicit` if given, else `$GEOMGCN_DATA`, else `./data`.
pub fn data_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub struct DatasetFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl DatasetFiles {
    pub fn locate(root: &Path, name: &str) -> Self {
        let dir = root.join(name.to_ascii_lowercase());
        Self {
            edges: dir.join("edges.txt"),
            features: dir.join("features.txt"),
            labels: dir.join("labels.txt"),
        }
    }

    /// The first file that does not exist, if any.
    pub fn missing(&self) -> Option<&Path> {
        [&self.edges, &self.features, &self.labels]
            .into_iter()
            .find(|p| !p.is_file())
            .map(PathBuf::as_path)
    }
}

/// Loads a dataset by name. Fails with a message naming the missing file
/// when the files are absent.
pub fn load_dataset<T: Scalar>(root: &Path, name: &str) -> Result<(Graph<T>, BuildStats)> {
    let files = DatasetFiles::locate(root, name);
    if let Some(p) = files.missing() {
        return Err(Error::InvalidArgument(format!(
            "dataset `{name}` is missing {} (set {DATA_ENV} or pass a data directory)",
            p.display()
        )));
    }
    load_graph(&files.edges, &files.features, &files.labels)
}

/// Scales each row to unit L1 norm; all-zero rows are left alone.
pub fn row_normalize<T: Scalar>(x: &Tensor2<T>) -> Tensor2<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let s: T = row.iter().map(|v| v.abs()).sum();
        if s > T::zero() {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        assert_eq!(info("Cora").unwrap().gcn_hidden, 16);
        assert!(info("nope").is_err());
        let c = info("texas").unwrap().train_config(Variant::Geom);
        assert_eq!(c.hidden_units, 256);
        assert_eq!(c.weight_decay, 5e-6);
        assert_eq!(info("cora").unwrap().train_config(Variant::Gcn).hidden_units, 16);
    }

    #[test]
    fn missing_files_are_named() {
        let err = load_dataset::<f64>(Path::new("/nonexistent"), "cora").unwrap_err();
        assert!(err.to_string().contains("edges.txt"));
    }

    #[test]
    fn rows_sum_to_one() {
        let x = Tensor2::from_rows(&[vec![1.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let y = row_normalize(&x);
        assert_eq!(y.row(0), &[0.25, 0.75]);
        assert_eq!(y.row(1), &[0.0, 0.0]);
    }
}
