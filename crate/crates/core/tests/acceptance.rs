//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria that need the public datasets read them from `$GEOMGCN_DATA`
//! (or `./data`). When a file is absent the line reads `FAIL (missing …)`
//! and does not fail the run; with the data present every line is enforced.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{dense_gcn, gradient_error, hop_rank_correlation, permutation, random_tensor, rel_err, rng, weighted_sum, FD_STEP};
use geomgcn::embed::poincare::{poincare_distance, poincare_embed, PoincareConfig};
use geomgcn::embed::struc2vec::{struc2vec_embed, Struc2vecConfig};
use geomgcn::harness::datasets::{data_root, info, load_dataset, row_normalize, DatasetFiles, DATASETS};
use geomgcn::harness::report::{benchmark, epoch_timing, DEFAULT_SEEDS};
use geomgcn::harness::synthetic::{cycle_edges, grid_edges, random_graph, role_graph, star_edges, RoleGraphConfig};
use geomgcn::harness::{aggregation_case_study, embed_graph, EmbedConfig, TrainConfig};
use geomgcn::model::{bi_level_on_tape, model_forward, record_forward, AggregationPlan, Combine, ModelConfig, ModelParams};
use geomgcn::neighborhood::{build_combined, graph_neighborhood, NeighborhoodOptions};
use geomgcn::{build_neighborhood, Embedding, GradTape, Graph, Method, Space, StructuralNeighborhood, Tensor2, Variant};
use rand::Rng;

const PERMUTATIONS: usize = 100;
const PERMUTATION_BUDGET: Duration = Duration::from_secs(10);
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);
const BETA_TOL: f64 = 0.05;
const RHO_GAP: f64 = 1.0;
const GCN_CORA_MIN: f64 = 82.5;
const GCN_CITESEER_MIN: f64 = 70.5;
const GCN_BUDGET: Duration = Duration::from_secs(600);
const CHAMELEON_I_MIN: f64 = 54.0;
const TEXAS_P_MIN: f64 = 60.0;
const WISCONSIN_PS_MIN: f64 = 74.0;
const SYNTHETIC_MARGIN: f64 = 5.0;
/// Shorter schedule for the synthetic stand-in so it fits an unoptimized build.
const SYNTHETIC_WIDTH: usize = 8;
const SYNTHETIC_EPOCHS: usize = 200;
const SYNTHETIC_PATIENCE: usize = 30;
const POINCARE_TOL: f64 = 1e-9;
const SPEARMAN_MIN: f64 = 0.9;
const GCN_EQUIV_TOL: f64 = 1e-12;
const TIMING_RANGE: (f64, f64) = (2.0, 16.0);
const TIMING_EPOCHS: usize = 20;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Not checkable without the named dataset files.
    Missing(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

struct Data {
    root: PathBuf,
}

impl Data {
    fn has(&self, name: &str) -> bool {
        DatasetFiles::locate(&self.root, name).missing().is_none()
    }

    fn absent<'a>(&self, names: &[&'a str]) -> Vec<&'a str> {
        names.iter().copied().filter(|n| !self.has(n)).collect()
    }

    fn load(&self, name: &str) -> Graph {
        let (g, _) = load_dataset::<f64>(&self.root, name).unwrap();
        g.with_features(row_normalize(g.features())).unwrap()
    }
}

fn missing(names: &[&str]) -> Outcome {
    Outcome::Missing(format!("missing dataset files: {}", names.join(", ")))
}

fn combined(n: usize, seed: u64) -> (Graph, StructuralNeighborhood) {
    let g: Graph = random_graph(n, 0.2, 4, 3, seed).unwrap();
    let mut r = rng(seed);
    let coords = Tensor2::from_fn(n, 2, |_, _| r.random_range(-0.7..0.7));
    let e = Embedding::new(coords.clone(), Space::Euclidean, Method::Isomap).unwrap();
    let h = Embedding::new(coords.map(|x| x * 0.9), Space::Hyperbolic, Method::Poincare).unwrap();
    let nb = build_combined(&g, &e, &h, NeighborhoodOptions::default(), 0).unwrap();
    (g, nb)
}

fn logits(g: &Graph, nb: &StructuralNeighborhood, params: &ModelParams, variant: Variant) -> Tensor2 {
    let cfg = ModelConfig {
        hidden_units: params.w1.cols(),
        variant,
        ..ModelConfig::default()
    };
    let plan = Arc::new(AggregationPlan::new(nb, variant, cfg.norm_exponent));
    model_forward(g.features(), params, &plan, &cfg, false, 0, 0).unwrap().1
}

fn permutation_invariance() -> Outcome {
    let t0 = Instant::now();
    let (g, nb) = combined(30, 11);
    let params = ModelParams::init(&ModelConfig::default(), 4, 3, 5);
    let out = logits(&g, &nb, &params, Variant::Geom);
    let mut r = rng(12);
    let mut broken = 0;
    for _ in 0..PERMUTATIONS {
        let perm = permutation(30, &mut r);
        let pg = g.permuted(&perm).unwrap();
        let pnb = nb.permuted(&perm);
        let pout = logits(&pg, &pnb, &params, Variant::Geom);
        if (0..30).any(|i| pout.row(perm[i]) != out.row(i)) {
            broken += 1;
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        broken == 0 && elapsed < PERMUTATION_BUDGET,
        format!("{broken}/{PERMUTATIONS} permutations differ, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn model_gradient_error(g: &Graph, nb: &StructuralNeighborhood, variant: Variant, seed: u64) -> f64 {
    let cfg = ModelConfig {
        hidden_units: 5,
        dropout: 0.3,
        variant,
        norm_exponent: -0.5,
    };
    let plan = Arc::new(AggregationPlan::new(nb, variant, cfg.norm_exponent));
    let mask: Vec<bool> = (0..g.num_nodes()).map(|i| i % 3 != 0).collect();
    let loss = |p: &ModelParams| {
        let mut t = GradTape::new();
        let x = t.constant(g.features().clone());
        let fv = record_forward(&mut t, x, p, &plan, &cfg, true, seed, 1).unwrap();
        let l = t.masked_softmax_xent(fv.logits, g.labels(), &mask).unwrap();
        let grads = t.backward(l).unwrap();
        (t.value(l)[(0, 0)], grads.get(fv.w1), grads.get(fv.w2))
    };
    let params = ModelParams::<f64>::init(&cfg, g.feature_dim(), g.num_classes(), seed);
    let (_, g1, g2) = loss(&params);
    let mut worst: f64 = 0.0;
    for (which, analytic) in [(0, g1), (1, g2)] {
        let mut numeric = Tensor2::zeros(analytic.rows(), analytic.cols());
        for j in 0..numeric.data().len() {
            let probe = |delta: f64| {
                let mut p = params.clone();
                let w = if which == 0 { &mut p.w1 } else { &mut p.w2 };
                w.data_mut()[j] += delta;
                loss(&p).0
            };
            numeric.data_mut()[j] = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(21);
    let mut errs: Vec<(&str, f64)> = Vec::new();
    let (a, b) = (random_tensor(12, 3, &mut r), random_tensor(3, 5, &mut r));
    let w = random_tensor(12, 5, &mut r);
    errs.push(("matmul", gradient_error(&[a.clone(), b], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        weighted_sum(t, y, &w)
    })));
    let w3 = random_tensor(12, 3, &mut r);
    errs.push(("relu", gradient_error(&[a.clone()], |t, v| {
        let y = t.relu(v[0]);
        weighted_sum(t, y, &w3)
    })));
    errs.push(("dropout", gradient_error(&[a.clone()], |t, v| {
        let y = t.dropout(v[0], 0.5, true, &mut rng(99)).unwrap();
        weighted_sum(t, y, &w3)
    })));
    let c = random_tensor(12, 1, &mut r);
    let w2 = random_tensor(12, 2, &mut r);
    errs.push(("concat+mean", gradient_error(&[a.clone(), c], |t, v| {
        let y = t.concat_cols(&[v[0], v[1]]).unwrap();
        let m = t.mean_blocks(y, 2).unwrap();
        weighted_sum(t, m, &w2)
    })));
    let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let mask: Vec<bool> = (0..12).map(|i| i % 4 != 1).collect();
    errs.push(("softmax-xent", gradient_error(&[a.clone()], |t, v| t.masked_softmax_xent(v[0], &labels, &mask).unwrap())));

    let (g, nb) = combined(12, 22);
    for variant in Variant::ALL {
        let plan = Arc::new(AggregationPlan::new(&nb, variant, -0.5));
        let k = variant.virtual_nodes();
        let h = random_tensor(12, 3, &mut r);
        for (combine, rows) in [(Combine::Concat, k * 3), (Combine::Mean, 3)] {
            let wl = random_tensor(rows, 2, &mut r);
            let up = random_tensor(12, 2, &mut r);
            let e = gradient_error(&[h.clone(), wl], |t, v| {
                let y = bi_level_on_tape(t, v[0], v[1], &plan, combine).unwrap();
                weighted_sum(t, y, &up)
            });
            errs.push(("bi-level", e));
        }
        errs.push(("model", model_gradient_error(&g, &nb, variant, 3)));
    }
    let elapsed = t0.elapsed();
    let (worst_name, worst) = errs.iter().copied().fold(("", 0.0), |m, e| if e.1 > m.1 { e } else { m });
    verdict(
        worst < GRADIENT_TOL && elapsed < GRADIENT_BUDGET,
        format!("{} checks, worst relative error {worst:.2e} ({worst_name}), {:.2}s", errs.len(), elapsed.as_secs_f64()),
    )
}

fn case_study() -> Outcome {
    let got = aggregation_case_study().unwrap();
    verdict(got == (true, true), format!("(merged_identical, partitioned_distinct) = {got:?}"))
}

fn homophily(data: &Data) -> Outcome {
    let names: Vec<&str> = DATASETS.iter().map(|d| d.name).collect();
    let mut fails = Vec::new();
    let mut seen = Vec::new();
    for d in DATASETS.iter().filter(|d| data.has(d.name)) {
        let beta = data.load(d.name).homophily_beta();
        seen.push(format!("{} {beta:.3}", d.name));
        if (beta - d.reference_beta).abs() > BETA_TOL {
            fails.push(format!("{} {beta:.3} vs {:.2}", d.name, d.reference_beta));
        }
    }
    let absent = data.absent(&names);
    if !fails.is_empty() {
        Outcome::Fail(fails.join("; "))
    } else if !absent.is_empty() {
        missing(&absent)
    } else {
        Outcome::Pass(seen.join(", "))
    }
}

/// Worst `|avg |N_s| − avg degree|` over the given graphs and every
/// embedding method.
fn worst_rho_gap(graphs: impl Iterator<Item = (String, Graph)>) -> (f64, String) {
    let cfg = EmbedConfig::default();
    let mut worst = (0.0, String::new());
    for (name, g) in graphs {
        for method in Method::ALL {
            let emb: Embedding = embed_graph(&g, method, &cfg).unwrap();
            let nb = build_neighborhood(&g, &emb).unwrap();
            let gap = (nb.average_latent_size() - g.average_degree()).abs();
            if gap >= worst.0 {
                worst = (gap, format!("{name}/{method}"));
            }
        }
    }
    worst
}

fn rho_calibration(data: &Data) -> Outcome {
    let names: Vec<&str> = DATASETS.iter().map(|d| d.name).collect();
    let present = names.iter().filter(|n| data.has(n)).map(|n| (n.to_string(), data.load(n)));
    let (gap, at) = worst_rho_gap(present);
    let absent = data.absent(&names);
    if gap > RHO_GAP {
        Outcome::Fail(format!("gap {gap:.3} at {at}"))
    } else if !absent.is_empty() {
        missing(&absent)
    } else {
        Outcome::Pass(format!("worst gap {gap:.3} at {at}"))
    }
}

fn rho_synthetic() -> String {
    let graphs = [
        ("role-graph".to_string(), role_graph(&RoleGraphConfig::default(), 0).unwrap()),
        ("random-60".to_string(), random_graph(60, 0.08, 4, 3, 1).unwrap()),
    ];
    let (gap, at) = worst_rho_gap(graphs.into_iter());
    format!("synthetic graphs: worst gap {gap:.3} at {at} (bound {RHO_GAP})")
}

fn gcn_mean(g: &Graph, name: &str) -> f64 {
    let cfg = info(name).unwrap().train_config(Variant::Gcn);
    let nb = graph_neighborhood(g, true);
    benchmark(name, g, &nb, &cfg, &DEFAULT_SEEDS, serde_json::json!({})).unwrap().mean
}

fn gcn_baseline(data: &Data) -> Outcome {
    let absent = data.absent(&["cora", "citeseer"]);
    if !absent.is_empty() {
        return missing(&absent);
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, min) in [("cora", GCN_CORA_MIN), ("citeseer", GCN_CITESEER_MIN)] {
        let t0 = Instant::now();
        let acc = gcn_mean(&data.load(name), name);
        let secs = t0.elapsed();
        ok &= acc >= min && secs < GCN_BUDGET;
        parts.push(format!("{name} {acc:.2} (min {min}, {:.0}s)", secs.as_secs_f64()));
    }
    verdict(ok, parts.join(", "))
}

fn geom_mean(g: &Graph, name: &str, method: Method, variant: Variant) -> f64 {
    let emb: Embedding = embed_graph(g, method, &EmbedConfig::default()).unwrap();
    let nb = build_neighborhood(g, &emb).unwrap();
    let cfg = info(name).unwrap().train_config(variant);
    benchmark(name, g, &nb, &cfg, &DEFAULT_SEEDS, serde_json::json!({})).unwrap().mean
}

/// Role-labelled disassortative graph with a struc2vec neighborhood: both
/// variants that use the latent neighborhood must beat GCN by the margin.
fn synthetic_disassortative() -> (bool, String) {
    let g: Graph = role_graph(&RoleGraphConfig::default(), 0).unwrap();
    let emb: Embedding = struc2vec_embed(&g, &Struc2vecConfig::default()).unwrap();
    let nb = build_neighborhood(&g, &emb).unwrap();
    let run = |variant: Variant, nb: &StructuralNeighborhood| {
        let cfg = TrainConfig {
            hidden_units: SYNTHETIC_WIDTH * variant.virtual_nodes(),
            max_epochs: SYNTHETIC_EPOCHS,
            patience: SYNTHETIC_PATIENCE,
            variant,
            ..TrainConfig::default()
        };
        benchmark("role-graph", &g, nb, &cfg, &DEFAULT_SEEDS, serde_json::json!({})).unwrap().mean
    };
    let gcn = run(Variant::Gcn, &graph_neighborhood(&g, true));
    let s_only = run(Variant::SOnly, &nb);
    let geom = run(Variant::Geom, &nb);
    let ok = s_only >= gcn + SYNTHETIC_MARGIN && geom >= gcn + SYNTHETIC_MARGIN;
    (
        ok,
        format!(
            "synthetic stand-in, beta {:.2}: gcn {gcn:.2}, s_only {s_only:.2}, geom {geom:.2} (margin {SYNTHETIC_MARGIN})",
            g.homophily_beta()
        ),
    )
}

fn disassortative(data: &Data) -> Outcome {
    let targets = [
        ("chameleon", Method::Isomap, Variant::Geom, CHAMELEON_I_MIN),
        ("texas", Method::Poincare, Variant::Geom, TEXAS_P_MIN),
        ("wisconsin", Method::Poincare, Variant::SOnly, WISCONSIN_PS_MIN),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for &(name, method, variant, min) in targets.iter().filter(|t| data.has(t.0)) {
        let acc = geom_mean(&data.load(name), name, method, variant);
        ok &= acc >= min;
        parts.push(format!("{name} {method}/{variant} {acc:.2} (min {min})"));
    }
    if data.absent(&targets.map(|t| t.0)).is_empty() {
        return verdict(ok, parts.join(", "));
    }
    let (synthetic_ok, detail) = synthetic_disassortative();
    parts.push(detail);
    verdict(ok && synthetic_ok, parts.join("; "))
}

fn poincare() -> Outcome {
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let radius: f64 = r.random_range(0.0..0.99);
        let angle = r.random_range(0.0..std::f64::consts::TAU);
        let x = [radius * angle.cos(), radius * angle.sin()];
        let d = poincare_distance(&[0.0, 0.0], &x).unwrap();
        worst = worst.max((d - 2.0 * radius.atanh()).abs());
    }
    let cfg = PoincareConfig::default();
    let mut outside = 0;
    for g in [Graph::<f64>::from_edges(9, &star_edges(8)).unwrap(), Graph::<f64>::from_edges(16, &grid_edges(4, 4)).unwrap()] {
        let emb: Embedding = poincare_embed(&g, &cfg).unwrap();
        outside += (0..g.num_nodes())
            .filter(|&v| emb.point(v).iter().map(|x| x * x).sum::<f64>().sqrt() >= 1.0)
            .count();
    }
    verdict(
        worst <= POINCARE_TOL && outside == 0,
        format!("max distance error {worst:.1e} over 1000 points, {outside} trained points outside the ball"),
    )
}

fn isomap() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, n, edges) in [("6-cycle", 6, cycle_edges(6)), ("4x4 grid", 16, grid_edges(4, 4))] {
        let emb: Embedding = embed_graph(&Graph::<f64>::from_edges(n, &edges).unwrap(), Method::Isomap, &EmbedConfig::default()).unwrap();
        let rho = hop_rank_correlation(&emb.coords, n, &edges);
        ok &= rho > SPEARMAN_MIN;
        parts.push(format!("{name} {rho:.3}"));
    }
    verdict(ok, format!("Spearman {} (min {SPEARMAN_MIN})", parts.join(", ")))
}

fn gcn_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let g: Graph = random_graph(10, 0.3, 3, 2, seed).unwrap();
        let mut r = rng(seed + 40);
        let params = ModelParams {
            w1: random_tensor(3, 5, &mut r),
            w2: random_tensor(5, 2, &mut r),
        };
        let got = logits(&g, &graph_neighborhood(&g, true), &params, Variant::Gcn);
        let want = dense_gcn(&g, &params.w1, &params.w2);
        let diff = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    verdict(worst <= GCN_EQUIV_TOL, format!("max abs difference {worst:.1e} over 5 graphs"))
}

fn timing_ratio(g: &Graph, nb: &StructuralNeighborhood, name: Option<&str>) -> f64 {
    let (geom, gcn) = match name {
        Some(n) => {
            let d = info(n).unwrap();
            (d.train_config(Variant::Geom), d.train_config(Variant::Gcn))
        }
        None => (
            TrainConfig {
                hidden_units: 16 * Variant::Geom.virtual_nodes(),
                variant: Variant::Geom,
                ..TrainConfig::default()
            },
            TrainConfig {
                hidden_units: 16,
                variant: Variant::Gcn,
                ..TrainConfig::default()
            },
        ),
    };
    epoch_timing(g, nb, &geom, &gcn, TIMING_EPOCHS).unwrap().ratio
}

fn complexity(data: &Data) -> Outcome {
    if !data.has("cora") {
        return missing(&["cora"]);
    }
    let g = data.load("cora");
    let emb: Embedding = embed_graph(&g, Method::Isomap, &EmbedConfig::default()).unwrap();
    let nb = build_neighborhood(&g, &emb).unwrap();
    let ratio = timing_ratio(&g, &nb, Some("cora"));
    verdict(
        (TIMING_RANGE.0..=TIMING_RANGE.1).contains(&ratio),
        format!("cora epoch-time ratio {ratio:.2} (range {:?}, theoretical 8)", TIMING_RANGE),
    )
}

fn complexity_synthetic() -> String {
    let g: Graph = role_graph(&RoleGraphConfig::default(), 0).unwrap();
    let emb: Embedding = embed_graph(&g, Method::Isomap, &EmbedConfig::default()).unwrap();
    let nb = build_neighborhood(&g, &emb).unwrap();
    format!("synthetic role graph epoch-time ratio {:.2}", timing_ratio(&g, &nb, None))
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--quiet`; listing asks for
    // test names only.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let data = Data {
        root: data_root(None::<&Path>),
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("permutation invariance", Box::new(permutation_invariance)),
        ("gradient correctness", Box::new(gradients)),
        ("merged vs partitioned case study", Box::new(case_study)),
        ("homophily index", Box::new(|| homophily(&data))),
        ("latent radius calibration", Box::new(|| rho_calibration(&data))),
        ("gcn baseline accuracy", Box::new(|| gcn_baseline(&data))),
        ("disassortative accuracy", Box::new(|| disassortative(&data))),
        ("poincare distance and ball", Box::new(poincare)),
        ("isomap fidelity", Box::new(isomap)),
        ("gcn equivalence", Box::new(gcn_equivalence)),
        ("epoch-time ratio", Box::new(|| complexity(&data))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = check();
        let secs = t0.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Missing(d) => ("FAIL", format!("(not enforced) {d}")),
        };
        println!("[{tag}] {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
        match i + 1 {
            5 => println!("       info: {}", rho_synthetic()),
            11 => println!("       info: {}", complexity_synthetic()),
            _ => {}
        }
    }
    if failed > 0 {
        println!("{failed} enforced criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
