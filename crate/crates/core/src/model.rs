//! The two-layer network: degree-normalized sums into relation-partitioned
//! virtual nodes, then concatenation (hidden layer) or mean (output layer)
//! across virtual nodes, followed by a linear map.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_error, push_header, read_text, write_file};
use crate::neighborhood::{Relation, StructuralNeighborhood};
use crate::rng;
use crate::scalar::{cmp_rows, Scalar};
use crate::tape::{mean_blocks, CustomOp, GradTape, Var};
use crate::tensor::Tensor2;

/// Which neighbor set a virtual node draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NeighborKind {
    Graph,
    Latent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both neighbor sets, four relations each.
    Geom,
    /// Graph neighbors only, four relations.
    GOnly,
    /// Latent neighbors only, four relations.
    SOnly,
    /// Graph neighbors in a single merged bucket (plain GCN).
    Gcn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Gcn, Variant::Geom, Variant::GOnly, Variant::SOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Geom => "geom",
            Variant::GOnly => "g_only",
            Variant::SOnly => "s_only",
            Variant::Gcn => "gcn",
        }
    }

    /// Number of virtual nodes per node.
    pub fn virtual_nodes(self) -> usize {
        match self {
            Variant::Geom => 8,
            Variant::GOnly | Variant::SOnly => 4,
            Variant::Gcn => 1,
        }
    }

    /// Virtual-node slot for a neighbor of `kind` bearing relation `r`, or
    /// `None` when the variant ignores that neighbor set.
    ///
    /// Geom order: (g,UL) (g,UR) (g,LL) (g,LR) (s,UL) (s,UR) (s,LL) (s,LR).
    pub fn slot(self, kind: NeighborKind, r: Relation) -> Option<usize> {
        match (self, kind) {
            (Variant::Geom, NeighborKind::Graph) => Some(r.index()),
            (Variant::Geom, NeighborKind::Latent) => Some(4 + r.index()),
            (Variant::GOnly, NeighborKind::Graph) | (Variant::SOnly, NeighborKind::Latent) => Some(r.index()),
            (Variant::Gcn, NeighborKind::Graph) => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geom" => Ok(Variant::Geom),
            "g_only" => Ok(Variant::GOnly),
            "s_only" => Ok(Variant::SOnly),
            "gcn" | "gcn_baseline" => Ok(Variant::Gcn),
            _ => Err(Error::InvalidArgument(format!(
                "unknown variant `{s}` (expected gcn, geom, g_only or s_only)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the hidden layer.
    pub hidden_units: usize,
    pub dropout: f64,
    pub variant: Variant,
    /// Exponent applied to `deg(v) · deg(u)` in the neighbor sum.
    pub norm_exponent: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_units: 16,
            dropout: 0.5,
            variant: Variant::Geom,
            norm_exponent: -0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::InvalidArgument("hidden_units must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !self.norm_exponent.is_finite() {
            return Err(Error::InvalidArgument("norm_exponent must be finite".into()));
        }
        Ok(())
    }
}

/// Per-node, per-virtual-node member lists with their normalization
/// coefficients, stored contiguously. Members are in ascending id order.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationPlan<T: Scalar = f64> {
    num_nodes: usize,
    slots: usize,
    offsets: Vec<usize>,
    members: Vec<(usize, T)>,
}

/// Degree used in the normalization: the size of the graph neighbor list,
/// which counts the self-loop when one is present. Never below one.
fn norm_degrees(nb: &StructuralNeighborhood) -> Vec<f64> {
    nb.graph.iter().map(|l| l.len().max(1) as f64).collect()
}

impl<T: Scalar> AggregationPlan<T> {
    pub fn new(nb: &StructuralNeighborhood, variant: Variant, norm_exponent: f64) -> Self {
        let n = nb.num_nodes();
        let slots = variant.virtual_nodes();
        let deg = norm_degrees(nb);
        let mut offsets = Vec::with_capacity(n * slots + 1);
        let mut members = Vec::new();
        offsets.push(0);
        let mut buckets: Vec<Vec<(usize, T)>> = vec![Vec::new(); slots];
        for v in 0..n {
            for (kind, list) in [(NeighborKind::Graph, &nb.graph[v]), (NeighborKind::Latent, &nb.latent[v])] {
                for &(u, r) in list {
                    if let Some(k) = variant.slot(kind, r) {
                        buckets[k].push((u, T::of((deg[v] * deg[u]).powf(norm_exponent))));
                    }
                }
            }
            for b in &mut buckets {
                b.sort_by_key(|&(u, _)| u);
                members.append(b);
                offsets.push(members.len());
            }
        }
        Self {
            num_nodes: n,
            slots,
            offsets,
            members,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Members of virtual node `k` of `v` with their coefficients.
    pub fn bucket(&self, v: usize, k: usize) -> &[(usize, T)] {
        let i = v * self.slots + k;
        &self.members[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Total number of (node, member) terms across all virtual nodes.
    pub fn num_terms(&self) -> usize {
        self.members.len()
    }
}

/// Adds `Σ c · x[u]` over `bucket` into `out`.
///
/// Terms are summed in an order fixed by their values (coefficient, then
/// the row of `x`), so the floating point result does not depend on how
/// nodes are numbered.
fn add_bucket_sum<T: Scalar>(bucket: &[(usize, T)], x: &Tensor2<T>, out: &mut [T], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..bucket.len());
    order.sort_by(|&a, &b| {
        let (ua, ca) = bucket[a];
        let (ub, cb) = bucket[b];
        match ca.total_order(&cb) {
            Ordering::Equal => cmp_rows(x.row(ua), x.row(ub)),
            o => o,
        }
    });
    let mut acc = vec![T::zero(); out.len()];
    for &i in order.iter() {
        let (u, c) = bucket[i];
        for (a, &h) in acc.iter_mut().zip(x.row(u)) {
            *a += c * h;
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o += a;
    }
}

/// Virtual node `(kind, r)` of `v`: the normalized sum of `h` over the
/// matching neighbors. Zero when no neighbor matches.
pub fn low_level_aggregate<T: Scalar>(
    h: &Tensor2<T>,
    nb: &StructuralNeighborhood,
    v: usize,
    kind: NeighborKind,
    r: Relation,
    norm_exponent: f64,
) -> Result<Vec<T>> {
    if h.rows() != nb.num_nodes() {
        return Err(Error::shape(
            "low_level_aggregate",
            format!("{} feature rows for {} nodes", h.rows(), nb.num_nodes()),
        ));
    }
    if v >= nb.num_nodes() {
        return Err(Error::InvalidNode {
            id: v,
            num_nodes: nb.num_nodes(),
        });
    }
    let deg = norm_degrees(nb);
    let list = match kind {
        NeighborKind::Graph => &nb.graph[v],
        NeighborKind::Latent => &nb.latent[v],
    };
    let bucket: Vec<(usize, T)> = list
        .iter()
        .filter(|&&(_, rel)| rel == r)
        .map(|&(u, _)| (u, T::of((deg[v] * deg[u]).powf(norm_exponent))))
        .collect();
    let mut out = vec![T::zero(); h.cols()];
    add_bucket_sum(&bucket, h, &mut out, &mut Vec::new());
    Ok(out)
}

/// Every virtual node of every node, laid out as `n × (slots · d)` in slot
/// order.
pub fn virtual_nodes<T: Scalar>(h: &Tensor2<T>, plan: &AggregationPlan<T>) -> Result<Tensor2<T>> {
    check_rows("virtual_nodes", h, plan)?;
    let d = h.cols();
    let k = plan.slots;
    let mut out = Tensor2::zeros(plan.num_nodes, k * d);
    let mut order = Vec::new();
    for v in 0..plan.num_nodes {
        let row = out.row_mut(v);
        for s in 0..k {
            add_bucket_sum(plan.bucket(v, s), h, &mut row[s * d..(s + 1) * d], &mut order);
        }
    }
    Ok(out)
}

fn check_rows<T: Scalar>(op: &'static str, h: &Tensor2<T>, plan: &AggregationPlan<T>) -> Result<()> {
    if h.rows() != plan.num_nodes {
        return Err(Error::shape(
            op,
            format!("{} rows for {} nodes", h.rows(), plan.num_nodes),
        ));
    }
    Ok(())
}

/// How a layer combines its virtual nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    /// Concatenate, multiply by `W` (`slots·d × out`), apply ReLU.
    Concat,
    /// Average, multiply by `W` (`d × out`); no activation.
    Mean,
}

/// One layer computed literally: build virtual nodes, combine, transform.
pub fn bi_level_forward<T: Scalar>(
    h: &Tensor2<T>,
    plan: &AggregationPlan<T>,
    w: &Tensor2<T>,
    combine: Combine,
) -> Result<Tensor2<T>> {
    let e = virtual_nodes(h, plan)?;
    let m = match combine {
        Combine::Concat => e,
        Combine::Mean => mean_blocks(&e, plan.slots)?,
    };
    let out = m.matmul(w)?;
    Ok(match combine {
        Combine::Concat => out.map(|x| x.max(T::zero())),
        Combine::Mean => out,
    })
}

fn expected_weight_rows<T: Scalar>(plan: &AggregationPlan<T>, d: usize, combine: Combine) -> usize {
    match combine {
        Combine::Concat => plan.slots * d,
        Combine::Mean => d,
    }
}

/// The linear part of a layer, reassociated as `Σ_k S_k (H W_k)`: each
/// neighbor row is transformed once and the sums run over the narrower
/// transformed rows. Equal to aggregating first and multiplying after.
fn fused_linear<T: Scalar>(
    h: &Tensor2<T>,
    plan: &AggregationPlan<T>,
    w: &Tensor2<T>,
    combine: Combine,
) -> Result<Tensor2<T>> {
    check_rows("bi_level", h, plan)?;
    let d = h.cols();
    if w.rows() != expected_weight_rows(plan, d, combine) {
        return Err(Error::shape(
            "bi_level",
            format!(
                "weight is {:?}, input width {d}, {} virtual nodes",
                w.shape(),
                plan.slots
            ),
        ));
    }
    let k = plan.slots;
    let xs: Vec<Tensor2<T>> = match combine {
        Combine::Concat => (0..k)
            .map(|s| h.matmul(&w.rows_slice(s * d, (s + 1) * d)))
            .collect::<Result<_>>()?,
        Combine::Mean => vec![h.matmul(w)?],
    };
    let out_dim = w.cols();
    let scale = match combine {
        Combine::Concat => T::one(),
        Combine::Mean => T::one() / T::of_usize(k),
    };
    let mut out = Tensor2::zeros(plan.num_nodes, out_dim);
    out.data_mut()
        .par_chunks_mut(out_dim.max(1))
        .enumerate()
        .for_each_init(Vec::new, |order, (v, row)| {
            for s in 0..k {
                let x = if xs.len() == 1 { &xs[0] } else { &xs[s] };
                add_bucket_sum(plan.bucket(v, s), x, row, order);
            }
            if scale != T::one() {
                row.iter_mut().for_each(|o| *o *= scale);
            }
        });
    Ok(out)
}

/// Backward rule for [`fused_linear`] with inputs `[h, w]`.
struct BiLevelOp<T: Scalar> {
    plan: Arc<AggregationPlan<T>>,
    combine: Combine,
}

impl<T: Scalar> BiLevelOp<T> {
    /// `Sᵀ · g` for virtual node `s`, scaled.
    fn scatter(&self, s: usize, g: &Tensor2<T>, scale: T, out: &mut Tensor2<T>) {
        for v in 0..self.plan.num_nodes {
            let gv = g.row(v);
            for &(u, c) in self.plan.bucket(v, s) {
                let c = c * scale;
                for (o, &x) in out.row_mut(u).iter_mut().zip(gv) {
                    *o += c * x;
                }
            }
        }
    }
}

impl<T: Scalar> CustomOp<T> for BiLevelOp<T> {
    fn backward(
        &self,
        inputs: &[&Tensor2<T>],
        grad_out: &Tensor2<T>,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor2<T>>>> {
        let (h, w) = (inputs[0], inputs[1]);
        let n = self.plan.num_nodes;
        let d = h.cols();
        let k = self.plan.slots;
        let out_dim = grad_out.cols();
        match self.combine {
            Combine::Concat => {
                let mut gw = Tensor2::zeros(w.rows(), w.cols());
                let mut gh = needs_grad[0].then(|| Tensor2::zeros(n, d));
                for s in 0..k {
                    let mut gs = Tensor2::zeros(n, out_dim);
                    self.scatter(s, grad_out, T::one(), &mut gs);
                    if needs_grad[1] {
                        let block = h.t_matmul(&gs)?;
                        gw.data_mut()[s * d * out_dim..(s + 1) * d * out_dim]
                            .copy_from_slice(block.data());
                    }
                    if let Some(gh) = gh.as_mut() {
                        gh.add_assign(&gs.matmul_t(&w.rows_slice(s * d, (s + 1) * d))?)?;
                    }
                }
                Ok(vec![gh, needs_grad[1].then_some(gw)])
            }
            Combine::Mean => {
                let mut gs = Tensor2::zeros(n, out_dim);
                let scale = T::one() / T::of_usize(k);
                for s in 0..k {
                    self.scatter(s, grad_out, scale, &mut gs);
                }
                let gw = if needs_grad[1] { Some(h.t_matmul(&gs)?) } else { None };
                let gh = if needs_grad[0] { Some(gs.matmul_t(w)?) } else { None };
                Ok(vec![gh, gw])
            }
        }
    }
}

/// Records one layer's linear part on `tape`.
pub fn bi_level_on_tape<T: Scalar>(
    tape: &mut GradTape<T>,
    h: Var,
    w: Var,
    plan: &Arc<AggregationPlan<T>>,
    combine: Combine,
) -> Result<Var> {
    let value = fused_linear(tape.value(h), plan, tape.value(w), combine)?;
    Ok(tape.custom(
        &[h, w],
        value,
        Box::new(BiLevelOp {
            plan: Arc::clone(plan),
            combine,
        }),
    ))
}

/// Weights of the two layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Scalar = f64> {
    /// `slots · in_dim × hidden`.
    pub w1: Tensor2<T>,
    /// `hidden × classes`.
    pub w2: Tensor2<T>,
}

fn glorot<T: Scalar>(rows: usize, cols: usize, seed: u64, layer: u64) -> Tensor2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut r = rng::stream(seed, 0x1417, layer);
    Tensor2::from_fn(rows, cols, |_, _| T::of(r.random_range(-bound..bound)))
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform initialization.
    pub fn init(cfg: &ModelConfig, in_dim: usize, num_classes: usize, seed: u64) -> Self {
        let k = cfg.variant.virtual_nodes();
        Self {
            w1: glorot(k * in_dim, cfg.hidden_units, seed, 1),
            w2: glorot(cfg.hidden_units, num_classes, seed, 2),
        }
    }
}

/// Variables recorded by [`record_forward`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub w1: Var,
    pub w2: Var,
    pub hidden: Var,
    pub logits: Var,
}

/// Records the full network on `tape`: dropout, hidden layer (concat and
/// ReLU), dropout, output layer (mean). Dropout masks derive from
/// `(seed, layer, epoch)`.
#[allow(clippy::too_many_arguments)]
pub fn record_forward<T: Scalar>(
    tape: &mut GradTape<T>,
    features: Var,
    params: &ModelParams<T>,
    plan: &Arc<AggregationPlan<T>>,
    cfg: &ModelConfig,
    train: bool,
    seed: u64,
    epoch: u64,
) -> Result<ForwardVars> {
    let w1 = tape.leaf(params.w1.clone());
    let w2 = tape.leaf(params.w2.clone());
    let x = tape.dropout(features, cfg.dropout, train, &mut rng::stream(seed, 0, epoch))?;
    let pre = bi_level_on_tape(tape, x, w1, plan, Combine::Concat)?;
    let hidden = tape.relu(pre);
    let hd = tape.dropout(hidden, cfg.dropout, train, &mut rng::stream(seed, 1, epoch))?;
    let logits = bi_level_on_tape(tape, hd, w2, plan, Combine::Mean)?;
    Ok(ForwardVars {
        w1,
        w2,
        hidden,
        logits,
    })
}

/// Hidden representations and logits.
pub fn model_forward<T: Scalar>(
    features: &Tensor2<T>,
    params: &ModelParams<T>,
    plan: &Arc<AggregationPlan<T>>,
    cfg: &ModelConfig,
    train: bool,
    seed: u64,
    epoch: u64,
) -> Result<(Tensor2<T>, Tensor2<T>)> {
    let mut tape = GradTape::new();
    let x = tape.constant(features.clone());
    let vars = record_forward(&mut tape, x, params, plan, cfg, train, seed, epoch)?;
    Ok((tape.value(vars.hidden).clone(), tape.value(vars.logits).clone()))
}

/// Both layers computed literally (virtual nodes, then concat or mean, then
/// the weights), without dropout.
pub fn reference_forward<T: Scalar>(
    features: &Tensor2<T>,
    params: &ModelParams<T>,
    plan: &AggregationPlan<T>,
) -> Result<Tensor2<T>> {
    let hidden = bi_level_forward(features, plan, &params.w1, Combine::Concat)?;
    bi_level_forward(&hidden, plan, &params.w2, Combine::Mean)
}

/// Text checkpoint: `#` header, a config line, then each weight as a
/// `name rows cols` line followed by its rows.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    header: &str,
) -> Result<()> {
    let mut out = String::new();
    push_header(&mut out, header);
    out.push_str(&format!(
        "variant={} norm_exponent={:e} hidden_units={} dropout={:e}\n",
        cfg.variant, cfg.norm_exponent, cfg.hidden_units, cfg.dropout
    ));
    for (name, w) in [("w1", &params.w1), ("w2", &params.w2)] {
        out.push_str(&format!("{name} {} {}\n", w.rows(), w.cols()));
        for i in 0..w.rows() {
            let row: Vec<String> = w.row(i).iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    write_file(path, &out)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ModelConfig, ModelParams<T>)> {
    let text = read_text(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let bad = |i: usize, m: String| parse_error(path, i + 1, m);
    let (ci, cline) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing config line"))?;
    let mut cfg = ModelConfig::default();
    for tok in cline.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| bad(ci, format!("bad token `{tok}`")))?;
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad(ci, format!("bad number `{v}`")));
        match k {
            "variant" => cfg.variant = v.parse()?,
            "norm_exponent" => cfg.norm_exponent = num(v)?,
            "dropout" => cfg.dropout = num(v)?,
            "hidden_units" => {
                cfg.hidden_units = v
                    .parse()
                    .map_err(|_| bad(ci, format!("bad hidden_units `{v}`")))?
            }
            _ => return Err(bad(ci, format!("unknown key `{k}`"))),
        }
    }
    let mut read_matrix = |name: &str| -> Result<Tensor2<T>> {
        let (hi, h) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, format!("missing `{name}` block")))?;
        let parts: Vec<&str> = h.split_whitespace().collect();
        let (rows, cols) = match parts.as_slice() {
            [n, r, c] if *n == name => (
                r.parse::<usize>().map_err(|_| bad(hi, "bad row count".into()))?,
                c.parse::<usize>().map_err(|_| bad(hi, "bad column count".into()))?,
            ),
            _ => return Err(bad(hi, format!("expected `{name} <rows> <cols>`"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (i, l) = lines
                .next()
                .ok_or_else(|| parse_error(path, 0, format!("`{name}` is truncated")))?;
            let before = data.len();
            for t in l.split_whitespace() {
                data.push(t.parse::<T>().map_err(|_| bad(i, format!("bad value `{t}`")))?);
            }
            if data.len() - before != cols {
                return Err(bad(i, format!("expected {cols} values")));
            }
        }
        Tensor2::from_vec(rows, cols, data)
    };
    let w1 = read_matrix("w1")?;
    let w2 = read_matrix("w2")?;
    if w1.cols() != cfg.hidden_units || w2.rows() != cfg.hidden_units {
        return Err(Error::Validation(format!(
            "{}: weight shapes {:?} and {:?} disagree with hidden_units {}",
            path.display(),
            w1.shape(),
            w2.shape(),
            cfg.hidden_units
        )));
    }
    Ok((cfg, ModelParams { w1, w2 }))
}
