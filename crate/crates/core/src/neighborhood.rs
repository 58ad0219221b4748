//! Structural neighborhoods: graph neighbors, latent-space neighbors within a
//! calibrated radius, and the four-way geometric relation between a node and
//! each of its neighbors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::embed::poincare::poincare_distance;
use crate::embed::{Embedding, Space};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::{parse_error, push_header, read_text, write_file};
use crate::rng;
use crate::scalar::Scalar;

/// Above this many nodes the radius is estimated from sampled pairs.
pub const EXACT_RHO_NODE_LIMIT: usize = 10_000;
pub const SAMPLED_RHO_PAIRS: usize = 2_000_000;
const HISTOGRAM_BINS: usize = 1 << 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::UpperLeft,
        Relation::UpperRight,
        Relation::LowerLeft,
        Relation::LowerRight,
    ];

    /// Position in [`Relation::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    fn from_axes(upper: bool, left: bool) -> Self {
        match (upper, left) {
            (true, true) => Relation::UpperLeft,
            (true, false) => Relation::UpperRight,
            (false, true) => Relation::LowerLeft,
            (false, false) => Relation::LowerRight,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::UpperLeft => "UL",
            Relation::UpperRight => "UR",
            Relation::LowerLeft => "LL",
            Relation::LowerRight => "LR",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown relation `{s}`")))
    }
}

fn sq_norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum()
}

fn check_ball(z: &[f64]) -> Result<f64> {
    let n = sq_norm(z);
    if n < 1.0 {
        Ok(n)
    } else {
        Err(Error::OutsideBall(z.to_vec()))
    }
}

fn planar(z: &[f64]) -> Result<(f64, f64)> {
    match z {
        [x, y, ..] => Ok((*x, *y)),
        _ => Err(Error::InvalidArgument(format!(
            "relations need 2-D points, got dimension {}",
            z.len()
        ))),
    }
}

/// Relation of neighbor `z_u` as seen from `z_v`.
///
/// Euclidean: upper iff `z_v[1] <= z_u[1]`, left iff `z_v[0] > z_u[0]`.
/// Hyperbolic: the vertical axis is `-‖z‖` (nearer the origin is higher),
/// the horizontal axis is the polar angle, and `u` is left of `v` iff the
/// wrapped difference `θ_u − θ_v ∈ (−π, π]` is negative.
pub fn tau(z_v: &[f64], z_u: &[f64], space: Space) -> Result<Relation> {
    let (xv, yv) = planar(z_v)?;
    let (xu, yu) = planar(z_u)?;
    match space {
        Space::Euclidean => Ok(Relation::from_axes(yv <= yu, xv > xu)),
        Space::Hyperbolic => {
            let nv = check_ball(z_v)?;
            let nu = check_ball(z_u)?;
            let upper = -nv.sqrt() <= -nu.sqrt();
            let left = wrap_angle(yu.atan2(xu) - yv.atan2(xv)) < 0.0;
            Ok(Relation::from_axes(upper, left))
        }
    }
}

/// Maps an angle difference into `(−π, π]`.
fn wrap_angle(d: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = d % TAU;
    if w > PI {
        w -= TAU;
    } else if w <= -PI {
        w += TAU;
    }
    w
}

/// Euclidean distance in the tangent plane at `z_v`:
/// `(2 / (1 − ‖z_v‖²)) · ‖z_u − z_v‖`.
pub fn hyperbolic_distance_approx(z_v: &[f64], z_u: &[f64]) -> Result<f64> {
    let nv = check_ball(z_v)?;
    check_ball(z_u)?;
    Ok(2.0 / (1.0 - nv) * euclidean(z_v, z_u))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeighborhoodOptions {
    /// Add `v` to its own graph neighborhood.
    pub self_loop: bool,
    /// Use the exact geodesic instead of the tangent-plane distance for
    /// hyperbolic latent neighborhoods.
    pub exact_hyperbolic: bool,
}

impl Default for NeighborhoodOptions {
    fn default() -> Self {
        Self {
            self_loop: true,
            exact_hyperbolic: false,
        }
    }
}

/// Embedding coordinates in `f64` plus the distance rule used for latent
/// neighborhoods. Distances are anchored at the query node.
struct Latent {
    points: Vec<Vec<f64>>,
    space: Space,
    exact: bool,
}

impl Latent {
    fn new<T: Scalar>(emb: &Embedding<T>, exact: bool) -> Self {
        let points = (0..emb.num_nodes())
            .map(|v| emb.point(v).iter().map(|x| x.as_f64()).collect())
            .collect();
        Self {
            points,
            space: emb.space,
            exact,
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn distance(&self, v: usize, u: usize) -> Result<f64> {
        let (zv, zu) = (&self.points[v], &self.points[u]);
        match (self.space, self.exact) {
            (Space::Euclidean, _) => Ok(euclidean(zv, zu)),
            (Space::Hyperbolic, false) => hyperbolic_distance_approx(zv, zu),
            (Space::Hyperbolic, true) => poincare_distance(zv, zu),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.space == Space::Hyperbolic {
            for p in &self.points {
                check_ball(p)?;
            }
        }
        Ok(())
    }

    /// Distances from `v` to every other node.
    fn row(&self, v: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len())
            .filter(move |&u| u != v)
            .map(move |u| self.distance(v, u).expect("points validated"))
    }
}

/// Outcome of the radius calibration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    /// True when the radius came from a pair sample instead of all pairs.
    pub sampled: bool,
}

/// Smallest radius whose average latent-neighborhood size reaches the
/// average graph degree.
///
/// With `k = ⌈avg_degree · n⌉`, the threshold is the `k`-th smallest ordered
/// pair distance `d_k`; the returned radius lies midway between `d_k` and the
/// next larger distinct distance, so `d < ρ` selects exactly the pairs with
/// `d ≤ d_k`.
pub fn select_rho<T: Scalar, S: Scalar>(emb: &Embedding<T>, g: &Graph<S>) -> Result<RhoEstimate> {
    select_rho_with(emb, g, false, 0)
}

/// [`select_rho`] with a distance choice and a seed for the pair sample
/// drawn on large graphs.
pub fn select_rho_with<T: Scalar, S: Scalar>(
    emb: &Embedding<T>,
    g: &Graph<S>,
    exact_hyperbolic: bool,
    seed: u64,
) -> Result<RhoEstimate> {
    let latent = Latent::new(emb, exact_hyperbolic);
    latent.validate()?;
    calibrate(&latent, g.average_degree(), seed)
}

fn calibrate(latent: &Latent, avg_degree: f64, seed: u64) -> Result<RhoEstimate> {
    let n = latent.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "radius calibration needs at least two nodes".into(),
        ));
    }
    if avg_degree <= 0.0 {
        return Ok(RhoEstimate {
            rho: 0.0,
            sampled: false,
        });
    }
    let (threshold, next, sampled) = if n > EXACT_RHO_NODE_LIMIT {
        let (t, nx) = sampled_threshold(latent, avg_degree, seed);
        (t, nx, true)
    } else {
        let k = ((avg_degree * n as f64).ceil() as usize).min(n * (n - 1));
        let (t, nx) = exact_threshold(latent, k);
        (t, nx, false)
    };
    let rho = match next {
        Some(nx) => threshold + (nx - threshold) / 2.0,
        None if threshold > 0.0 => threshold + 1.0,
        None => {
            return Err(Error::Numerical(
                "all latent points coincide; no radius separates neighbors".into(),
            ))
        }
    };
    Ok(RhoEstimate { rho, sampled })
}

/// `k`-th smallest ordered-pair distance (1-based) and the next larger
/// distinct distance, found with a histogram pass and a refinement pass so
/// memory stays independent of the pair count.
fn exact_threshold(latent: &Latent, k: usize) -> (f64, Option<f64>) {
    let n = latent.len();
    let max = (0..n)
        .into_par_iter()
        .map(|v| latent.row(v).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    if max == 0.0 {
        return (0.0, None);
    }
    let bin = |d: f64| (((d / max) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
    let counts = (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; HISTOGRAM_BINS],
            |mut acc, v| {
                for d in latent.row(v) {
                    acc[bin(d)] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; HISTOGRAM_BINS],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut before = 0u64;
    let mut target_bin = HISTOGRAM_BINS - 1;
    for (b, &c) in counts.iter().enumerate() {
        if before + c >= k as u64 {
            target_bin = b;
            break;
        }
        before += c;
    }
    let (mut inside, beyond) = (0..n)
        .into_par_iter()
        .fold(
            || (Vec::new(), f64::INFINITY),
            |(mut inside, mut beyond), v| {
                for d in latent.row(v) {
                    let b = bin(d);
                    if b == target_bin {
                        inside.push(d);
                    } else if b > target_bin && d < beyond {
                        beyond = d;
                    }
                }
                (inside, beyond)
            },
        )
        .reduce(
            || (Vec::new(), f64::INFINITY),
            |(mut a, x), (b, y)| {
                a.extend(b);
                (a, x.min(y))
            },
        );
    inside.sort_by(f64::total_cmp);
    let threshold = inside[k - 1 - before as usize];
    let next = inside
        .iter()
        .copied()
        .find(|&d| d > threshold)
        .or((beyond < f64::INFINITY).then_some(beyond));
    (threshold, next)
}

fn sampled_threshold(latent: &Latent, avg_degree: f64, seed: u64) -> (f64, Option<f64>) {
    let n = latent.len();
    let mut r = rng::stream(seed, 0x7240, 0);
    let mut sample: Vec<f64> = (0..SAMPLED_RHO_PAIRS)
        .map(|_| {
            let v = r.random_range(0..n);
            let mut u = r.random_range(0..n - 1);
            if u >= v {
                u += 1;
            }
            latent.distance(v, u).expect("points validated")
        })
        .collect();
    sample.sort_by(f64::total_cmp);
    let frac = avg_degree / (n - 1) as f64;
    let k = ((frac * sample.len() as f64).ceil() as usize).clamp(1, sample.len());
    let threshold = sample[k - 1];
    let next = sample[k..].iter().copied().find(|&d| d > threshold);
    (threshold, next)
}

/// Per-node neighbor lists, each entry tagged with its relation.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralNeighborhood {
    /// Graph neighbors of each node, sorted by id (with the node itself when
    /// self-loops are on).
    pub graph: Vec<Vec<(usize, Relation)>>,
    /// Latent-space neighbors of each node, sorted by id.
    pub latent: Vec<Vec<(usize, Relation)>>,
    pub rho: f64,
    pub rho_sampled: bool,
    pub g_space: Space,
    pub s_space: Space,
    pub self_loop: bool,
}

impl StructuralNeighborhood {
    pub fn num_nodes(&self) -> usize {
        self.graph.len()
    }

    pub fn average_latent_size(&self) -> f64 {
        if self.latent.is_empty() {
            return 0.0;
        }
        self.latent.iter().map(Vec::len).sum::<usize>() as f64 / self.latent.len() as f64
    }

    /// Relabels nodes: old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let relabel = |lists: &[Vec<(usize, Relation)>]| {
            let mut out = vec![Vec::new(); lists.len()];
            for (v, l) in lists.iter().enumerate() {
                let mut m: Vec<_> = l.iter().map(|&(u, r)| (perm[u], r)).collect();
                m.sort_unstable();
                out[perm[v]] = m;
            }
            out
        };
        Self {
            graph: relabel(&self.graph),
            latent: relabel(&self.latent),
            ..self.clone()
        }
    }

    /// Writes the neighborhood cache format.
    pub fn save(&self, path: &Path, header: &str) -> Result<()> {
        let mut out = String::new();
        push_header(&mut out, header);
        out.push_str(&format!(
            "rho={:e} space={} g_space={} self_loop={} sampled={} nodes={}\n",
            self.rho,
            self.s_space,
            self.g_space,
            self.self_loop,
            self.rho_sampled,
            self.num_nodes()
        ));
        let line = |tag: &str, l: &[(usize, Relation)]| {
            let mut s = format!("{tag}:");
            for (u, r) in l {
                s.push_str(&format!(" {u}:{r}"));
            }
            s.push('\n');
            s
        };
        for (g, s) in self.graph.iter().zip(&self.latent) {
            out.push_str(&line("g", g));
            out.push_str(&line("s", s));
        }
        write_file(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_error(path, 1, "missing neighborhood header"))?;
        let bad = |line: usize, msg: String| parse_error(path, line + 1, msg);
        let mut nb = StructuralNeighborhood {
            graph: Vec::new(),
            latent: Vec::new(),
            rho: f64::NAN,
            rho_sampled: false,
            g_space: Space::Euclidean,
            s_space: Space::Euclidean,
            self_loop: true,
        };
        let mut nodes = None;
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(hline, format!("bad header token `{tok}`")))?;
            let parse_bool = |v: &str| {
                v.parse::<bool>()
                    .map_err(|_| bad(hline, format!("bad boolean `{v}`")))
            };
            match k {
                "rho" => {
                    nb.rho = v
                        .parse()
                        .map_err(|_| bad(hline, format!("bad rho `{v}`")))?
                }
                "space" => nb.s_space = v.parse()?,
                "g_space" => nb.g_space = v.parse()?,
                "self_loop" => nb.self_loop = parse_bool(v)?,
                "sampled" => nb.rho_sampled = parse_bool(v)?,
                "nodes" => {
                    nodes = Some(
                        v.parse::<usize>()
                            .map_err(|_| bad(hline, format!("bad node count `{v}`")))?,
                    )
                }
                _ => return Err(bad(hline, format!("unknown header key `{k}`"))),
            }
        }
        if nb.rho.is_nan() {
            return Err(bad(hline, "header lacks rho".into()));
        }
        let parse_list = |i: usize, line: &str, tag: &str| -> Result<Vec<(usize, Relation)>> {
            let rest = line
                .strip_prefix(tag)
                .and_then(|r| r.strip_prefix(':'))
                .ok_or_else(|| bad(i, format!("expected `{tag}:` line")))?;
            rest.split_whitespace()
                .map(|t| {
                    let (u, r) = t
                        .split_once(':')
                        .ok_or_else(|| bad(i, format!("bad entry `{t}`")))?;
                    let u = u.parse().map_err(|_| bad(i, format!("bad node id `{u}`")))?;
                    Ok((u, r.parse().map_err(|_| bad(i, format!("bad relation `{r}`")))?))
                })
                .collect()
        };
        while let Some((i, gl)) = lines.next() {
            nb.graph.push(parse_list(i, gl, "g")?);
            let (j, sl) = lines
                .next()
                .ok_or_else(|| bad(i, "missing `s:` line".into()))?;
            nb.latent.push(parse_list(j, sl, "s")?);
        }
        let n = nb.graph.len();
        if let Some(expected) = nodes {
            if expected != n {
                return Err(Error::Validation(format!(
                    "{}: header says {expected} nodes, found {n}",
                    path.display()
                )));
            }
        }
        for l in nb.graph.iter().chain(&nb.latent) {
            if let Some(&(u, _)) = l.iter().find(|(u, _)| *u >= n) {
                return Err(Error::InvalidNode { id: u, num_nodes: n });
            }
        }
        Ok(nb)
    }
}

/// Neighborhood with one embedding serving both the graph-neighbor
/// relations and the latent neighbors; self-loops on, tangent-plane
/// distances for hyperbolic embeddings.
pub fn build_neighborhood<T: Scalar, S: Scalar>(
    g: &Graph<S>,
    emb: &Embedding<T>,
) -> Result<StructuralNeighborhood> {
    build_combined(g, emb, emb, NeighborhoodOptions::default(), 0)
}

/// Neighborhood whose graph-neighbor relations come from `g_emb` and whose
/// latent neighbors (and their relations) come from `s_emb`.
pub fn build_combined<T: Scalar, S: Scalar>(
    g: &Graph<S>,
    g_emb: &Embedding<T>,
    s_emb: &Embedding<T>,
    opts: NeighborhoodOptions,
    seed: u64,
) -> Result<StructuralNeighborhood> {
    let n = g.num_nodes();
    for emb in [g_emb, s_emb] {
        if emb.num_nodes() != n {
            return Err(Error::Validation(format!(
                "embedding has {} rows for a graph of {n} nodes",
                emb.num_nodes()
            )));
        }
    }
    let gl = Latent::new(g_emb, opts.exact_hyperbolic);
    let sl = Latent::new(s_emb, opts.exact_hyperbolic);
    gl.validate()?;
    sl.validate()?;
    let est = if n < 2 {
        RhoEstimate {
            rho: 0.0,
            sampled: false,
        }
    } else {
        calibrate(&sl, g.average_degree(), seed)?
    };

    let graph = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut ids: Vec<usize> = g.neighbors(v).to_vec();
            if opts.self_loop {
                ids.push(v);
                ids.sort_unstable();
            }
            ids.into_iter()
                .map(|u| Ok((u, tau(&gl.points[v], &gl.points[u], gl.space)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let latent = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            for u in (0..n).filter(|&u| u != v) {
                if sl.distance(v, u)? < est.rho {
                    out.push((u, tau(&sl.points[v], &sl.points[u], sl.space)?));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(StructuralNeighborhood {
        graph,
        latent,
        rho: est.rho,
        rho_sampled: est.sampled,
        g_space: g_emb.space,
        s_space: s_emb.space,
        self_loop: opts.self_loop,
    })
}

/// Graph neighbors only, for models that ignore relations and latent
/// neighbors. Every entry carries the `UpperLeft` tag.
pub fn graph_neighborhood<S: Scalar>(g: &Graph<S>, self_loop: bool) -> StructuralNeighborhood {
    let graph = (0..g.num_nodes())
        .map(|v| {
            let mut ids: Vec<usize> = g.neighbors(v).to_vec();
            if self_loop {
                ids.push(v);
                ids.sort_unstable();
            }
            ids.into_iter().map(|u| (u, Relation::UpperLeft)).collect()
        })
        .collect();
    StructuralNeighborhood {
        graph,
        latent: vec![Vec::new(); g.num_nodes()],
        rho: 0.0,
        rho_sampled: false,
        g_space: Space::Euclidean,
        s_space: Space::Euclidean,
        self_loop,
    }
}
