//! Geometric aggregation for graph neural networks.
//!
//! A graph is embedded into a two-dimensional latent space (Isomap,
//! Poincaré ball or struc2vec). Each node then gets a structural
//! neighborhood: its graph neighbors plus the nodes within a calibrated
//! latent radius, every neighbor tagged with one of four geometric
//! relations. A two-layer network sums neighbors per (neighborhood,
//! relation) virtual node, combines the virtual nodes and classifies nodes
//! transductively.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are the double precision instantiations used by the CLI
//! and the test suites.

pub mod embed;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod model;
pub mod neighborhood;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use embed::{Embedding, Method, Space};
pub use error::{Error, Result};
pub use graph::{random_split, Graph, Split, SplitTag};
pub use model::{AggregationPlan, ModelConfig, ModelParams, Variant};
pub use neighborhood::{build_neighborhood, Relation, StructuralNeighborhood};
pub use scalar::Scalar;
pub use tape::GradTape;
pub use tensor::Tensor2;

pub type Tensor64 = Tensor2<f64>;
pub type Tensor32 = Tensor2<f32>;
pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type Embedding64 = Embedding<f64>;
pub type Embedding32 = Embedding<f32>;
pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
