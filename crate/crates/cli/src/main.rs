//! `geomgcn`: embed graphs, build structural neighborhoods, train and
//! compare the aggregation variants.
//!
//! Expensive artifacts are cached under `--out/<dataset>/` with names that
//! carry a content hash of the dataset files and the settings they depend
//! on, so a changed input never reuses a stale cache.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geomgcn::embed::Method;
use geomgcn::harness::datasets::{data_root, DatasetFiles};
use geomgcn::harness::{
    ablation_suite, benchmark_runs, aggregation_case_study, embed_graph, export_features, load_dataset, row_normalize,
    DatasetInfo, DEFAULT_SEEDS,
};
use geomgcn::model::{model_forward, save_checkpoint, AggregationPlan};
use geomgcn::neighborhood::{build_combined, graph_neighborhood};
use geomgcn::{Embedding, Graph, StructuralNeighborhood, Variant};
use sha2::{Digest, Sha256};

use settings::Settings;

#[derive(Parser)]
#[command(name = "geomgcn", version, about = "Geometric aggregation GCN pipeline")]
struct Cli {
    /// Dataset root holding `<name>/{edges,features,labels}.txt`.
    /// Defaults to $GEOMGCN_DATA, then ./data.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Directory for caches, reports and checkpoints.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// `key=value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpaceArgs {
    /// Embedding that orders graph neighbors.
    #[arg(long, default_value = "isomap")]
    g_space: Method,
    /// Embedding that supplies latent neighbors.
    #[arg(long, default_value = "isomap")]
    s_space: Method,
    /// Use the exact Poincaré distance for latent neighbors.
    #[arg(long)]
    exact_hyperbolic_distance: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a dataset's graph and cache the coordinates.
    Embed {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        method: Method,
        /// Recompute even when a cache exists.
        #[arg(long)]
        force: bool,
    },
    /// Build and cache the structural neighborhood from cached embeddings.
    Neighborhood {
        #[arg(long)]
        dataset: String,
        #[command(flatten)]
        spaces: SpaceArgs,
    },
    /// Train one variant over several random splits and write a report.
    Train {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "geom")]
        variant: Variant,
        #[command(flatten)]
        spaces: SpaceArgs,
        /// Comma-separated split seeds.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        #[arg(long, allow_hyphen_values = true)]
        norm_exponent: Option<f64>,
        /// Also write the first seed's hidden-layer features, label last.
        #[arg(long)]
        export_features: bool,
    },
    /// Compare GCN against graph-only and latent-only variants per embedding.
    Ablate {
        #[arg(long)]
        dataset: String,
        /// Embeddings to compare; each needs a cached embedding.
        #[arg(long, value_delimiter = ',', default_value = "isomap,poincare,struc2vec")]
        methods: Vec<Method>,
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
    },
    /// Print the homophily index of a dataset.
    Homophily {
        #[arg(long)]
        dataset: String,
    },
    /// Run the merged-versus-partitioned aggregation example.
    Casestudy,
}

struct Ctx {
    root: PathBuf,
    out: PathBuf,
    settings: Settings,
}

/// A loaded dataset with its registry entry (if any) and a content hash of
/// its files.
struct Dataset {
    name: String,
    info: Option<&'static DatasetInfo>,
    graph: Graph,
    hash: String,
}

fn digest<I: IntoIterator<Item = S>, S: AsRef<[u8]>>(parts: I) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_ref());
        h.update([0u8]);
    }
    hex::encode(h.finalize())[..16].to_string()
}

impl Ctx {
    fn load(&self, name: &str) -> Result<Dataset> {
        let files = DatasetFiles::locate(&self.root, name);
        let (mut graph, _) = load_dataset::<f64>(&self.root, name)?;
        if self.settings.row_normalize {
            graph = graph.with_features(row_normalize(graph.features()))?;
        }
        let mut parts = Vec::new();
        for p in [&files.edges, &files.features, &files.labels] {
            parts.push(std::fs::read(p).with_context(|| format!("reading {}", p.display()))?);
        }
        parts.push(format!("row_normalize={}", self.settings.row_normalize).into_bytes());
        Ok(Dataset {
            name: name.to_ascii_lowercase(),
            info: geomgcn::harness::info(name).ok(),
            graph,
            hash: digest(parts),
        })
    }

    fn dir(&self, ds: &Dataset) -> PathBuf {
        self.out.join(&ds.name)
    }

    fn embed_hash(&self, ds: &Dataset, m: Method) -> String {
        let mut parts = vec![ds.hash.clone(), m.to_string()];
        parts.extend(self.settings.embed_lines(m));
        digest(parts)
    }

    fn embed_path(&self, ds: &Dataset, m: Method) -> PathBuf {
        self.dir(ds).join(format!("embed-{m}-{}.txt", self.embed_hash(ds, m)))
    }

    fn header(&self, command: &str, ds: Option<&Dataset>, variant: Variant, extra: &[String]) -> String {
        let mut lines = vec![format!("geomgcn {command}")];
        if let Some(ds) = ds {
            lines.push(format!("dataset={} content={}", ds.name, ds.hash));
        }
        lines.extend(extra.iter().cloned());
        lines.extend(self.settings.resolved_lines(ds.and_then(|d| d.info), variant));
        lines.join("\n")
    }

    fn cached_embedding(&self, ds: &Dataset, m: Method) -> Result<Embedding> {
        let path = self.embed_path(ds, m);
        if !path.is_file() {
            bail!(
                "no cached {m} embedding for `{}` at {}; run `embed` first: geomgcn embed --dataset {} --method {m}",
                ds.name,
                path.display(),
                ds.name
            );
        }
        Ok(Embedding::load(&path)?)
    }

    /// Loads the neighborhood cache for `spaces`, building it from the
    /// cached embeddings when absent.
    fn neighborhood(&self, ds: &Dataset, spaces: &SpaceArgs) -> Result<(PathBuf, StructuralNeighborhood)> {
        let mut parts = vec![self.embed_hash(ds, spaces.g_space), self.embed_hash(ds, spaces.s_space)];
        parts.extend(self.settings.neighborhood_lines());
        let path = self.dir(ds).join(format!(
            "nbhd-{}-{}-{}.txt",
            spaces.g_space,
            spaces.s_space,
            digest(parts)
        ));
        if path.is_file() {
            return Ok((path.clone(), StructuralNeighborhood::load(&path)?));
        }
        let g_emb = self.cached_embedding(ds, spaces.g_space)?;
        let s_emb = self.cached_embedding(ds, spaces.s_space)?;
        let nb = build_combined(
            &ds.graph,
            &g_emb,
            &s_emb,
            self.settings.neighborhood_options(),
            self.settings.rho_seed,
        )?;
        let extra = [format!("g_space={} s_space={}", spaces.g_space, spaces.s_space)];
        nb.save(&path, &self.header("neighborhood", Some(ds), Variant::Geom, &extra))?;
        Ok((path, nb))
    }
}

fn write_text(path: &Path, header: &str, body: &str) -> Result<()> {
    let mut s = String::new();
    geomgcn::io::push_header(&mut s, header);
    s.push_str(body);
    geomgcn::io::write_file(path, &s)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    if let Command::Casestudy = cli.command {
        let (merged_identical, partitioned_distinct) = aggregation_case_study()?;
        println!("merged_identical={merged_identical} partitioned_distinct={partitioned_distinct}");
        if !(merged_identical && partitioned_distinct) {
            bail!("case study did not separate the two graphs");
        }
        return Ok(());
    }
    match &cli.command {
        Command::Neighborhood { spaces, .. } | Command::Train { spaces, .. } if spaces.exact_hyperbolic_distance => {
            settings.exact_hyperbolic = true;
        }
        _ => {}
    }
    if let Command::Train { norm_exponent: Some(e), .. } = cli.command {
        settings.norm_exponent = e;
    }
    let ctx = Ctx {
        root: data_root(cli.data_dir.as_deref()),
        out: cli.out,
        settings,
    };

    match cli.command {
        Command::Embed { dataset, method, force } => {
            let ds = ctx.load(&dataset)?;
            let path = ctx.embed_path(&ds, method);
            if path.is_file() && !force {
                println!("cached {}", path.display());
                return Ok(());
            }
            let emb: Embedding = embed_graph(&ds.graph, method, &ctx.settings.embed)?;
            let extra = [format!("method={method}")];
            emb.save(&path, &ctx.header("embed", Some(&ds), Variant::Geom, &extra))?;
            println!("wrote {}", path.display());
        }
        Command::Neighborhood { dataset, spaces } => {
            let ds = ctx.load(&dataset)?;
            let (path, nb) = ctx.neighborhood(&ds, &spaces)?;
            println!(
                "rho={:.6} sampled={} avg_latent={:.3} path={}",
                nb.rho,
                nb.rho_sampled,
                nb.average_latent_size(),
                path.display()
            );
        }
        Command::Train {
            dataset,
            variant,
            spaces,
            seed_list,
            export_features: export,
            ..
        } => {
            let ds = ctx.load(&dataset)?;
            let nb = if variant == Variant::Gcn {
                graph_neighborhood(&ds.graph, ctx.settings.self_loop)
            } else {
                ctx.neighborhood(&ds, &spaces)?.1
            };
            let seeds = seed_list.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
            let cfg = ctx.settings.train_config(ds.info, variant);
            cfg.validate()?;
            let spaces_line = match variant {
                Variant::Gcn => "g_space=- s_space=-".to_string(),
                _ => format!("g_space={} s_space={}", spaces.g_space, spaces.s_space),
            };
            let extra = [format!("variant={variant} {spaces_line}")];
            let header = ctx.header("train", Some(&ds), variant, &extra);
            let config = serde_json::Value::Object(
                header
                    .lines()
                    .flat_map(str::split_whitespace)
                    .filter_map(|kv| kv.split_once('='))
                    .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
                    .collect(),
            );
            let (report, outcomes) = benchmark_runs(&ds.name, &ds.graph, &nb, &cfg, &seeds, config)?;
            let tag = digest(header.lines().chain([format!("seeds={seeds:?}").as_str()]));
            let stem = match variant {
                Variant::Gcn => format!("{variant}-{tag}"),
                _ => format!("{variant}-{}-{}-{tag}", spaces.g_space, spaces.s_space),
            };
            let dir = ctx.dir(&ds);
            let report_path = dir.join(format!("report-{stem}.json"));
            geomgcn::io::write_file(&report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            let first = &outcomes[0];
            let ckpt = dir.join(format!("model-{stem}-seed{}.txt", seeds[0]));
            save_checkpoint(&ckpt, &cfg.model_config(), &first.params, &header)?;
            if export {
                let plan = Arc::new(AggregationPlan::new(&nb, variant, cfg.norm_exponent));
                let (hidden, _) =
                    model_forward(ds.graph.features(), &first.params, &plan, &cfg.model_config(), false, seeds[0], 0)?;
                let path = dir.join(format!("features-{stem}-seed{}.txt", seeds[0]));
                export_features(&path, &hidden, ds.graph.labels(), &header)?;
                println!("features {}", path.display());
            }
            println!(
                "dataset={} variant={} mean={:.2} std={:.2} report={}",
                report.dataset,
                report.variant,
                report.mean,
                report.std,
                report_path.display()
            );
        }
        Command::Ablate {
            dataset,
            methods,
            seed_list,
        } => {
            if methods.is_empty() {
                bail!("--methods needs at least one embedding");
            }
            let ds = ctx.load(&dataset)?;
            let mut nbs = Vec::new();
            for &m in &methods {
                let spaces = SpaceArgs {
                    g_space: m,
                    s_space: m,
                    exact_hyperbolic_distance: ctx.settings.exact_hyperbolic,
                };
                nbs.push((m, ctx.neighborhood(&ds, &spaces)?.1));
            }
            let seeds = seed_list.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
            let base = ctx.settings.train_config(ds.info, Variant::Gcn);
            base.validate()?;
            let table = ablation_suite(&ds.name, &ds.graph, &nbs, &base, ctx.settings.gcn_hidden(ds.info), &seeds)?;
            let text = table.to_text();
            let names: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
            let extra = [format!("methods={}", names.join(",")), format!("seeds={seeds:?}")];
            let header = ctx.header("ablate", Some(&ds), Variant::Gcn, &extra);
            let path = ctx.dir(&ds).join(format!("ablation-{}.txt", digest(header.lines())));
            write_text(&path, &header, &text)?;
            print!("{text}");
        }
        Command::Homophily { dataset } => {
            let ds = ctx.load(&dataset)?;
            let g = &ds.graph;
            println!(
                "dataset={} nodes={} edges={} beta={:.4}",
                ds.name,
                g.num_nodes(),
                g.num_edges(),
                g.homophily_beta()
            );
        }
        Command::Casestudy => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
