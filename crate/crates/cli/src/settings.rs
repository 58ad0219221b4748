//! `key=value` run configuration shared by every subcommand.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use geomgcn::embed::Method;
use geomgcn::harness::train::TrainConfig;
use geomgcn::harness::{DatasetInfo, EmbedConfig};
use geomgcn::neighborhood::NeighborhoodOptions;
use geomgcn::Variant;

/// Every tunable the CLI exposes. Training fields left `None` fall back to
/// the dataset's registry defaults.
#[derive(Clone, Debug)]
pub struct Settings {
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub gcn_hidden: Option<usize>,
    pub hidden_units: Option<usize>,
    pub dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub norm_exponent: f64,
    pub row_normalize: bool,
    pub self_loop: bool,
    pub exact_hyperbolic: bool,
    pub rho_seed: u64,
    pub embed: EmbedConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: None,
            weight_decay: None,
            gcn_hidden: None,
            hidden_units: None,
            dropout: t.dropout,
            patience: t.patience,
            max_epochs: t.max_epochs,
            norm_exponent: t.norm_exponent,
            row_normalize: true,
            self_loop: true,
            exact_hyperbolic: false,
            rho_seed: 0,
            embed: EmbedConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("config key `{key}`: cannot parse `{value}`"))
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), i + 1))?;
            s.set(k.trim(), v.trim())
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.embed.poincare;
        let w = &mut self.embed.struc2vec;
        match key {
            "lr" => self.lr = Some(parse(key, v)?),
            "weight_decay" => self.weight_decay = Some(parse(key, v)?),
            "gcn_hidden" => self.gcn_hidden = Some(parse(key, v)?),
            "hidden_units" => self.hidden_units = Some(parse(key, v)?),
            "dropout" => self.dropout = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "norm_exponent" => self.norm_exponent = parse(key, v)?,
            "row_normalize" => self.row_normalize = parse(key, v)?,
            "self_loop" => self.self_loop = parse(key, v)?,
            "exact_hyperbolic_distance" => self.exact_hyperbolic = parse(key, v)?,
            "rho_seed" => self.rho_seed = parse(key, v)?,
            "poincare.epochs" => p.epochs = parse(key, v)?,
            "poincare.learning_rate" => p.learning_rate = parse(key, v)?,
            "poincare.burn_in_epochs" => p.burn_in_epochs = parse(key, v)?,
            "poincare.burn_in_lr_factor" => p.burn_in_lr_factor = parse(key, v)?,
            "poincare.negatives" => p.negatives = parse(key, v)?,
            "poincare.max_norm" => p.max_norm = parse(key, v)?,
            "poincare.init_range" => p.init_range = parse(key, v)?,
            "poincare.seed" => p.seed = parse(key, v)?,
            "struc2vec.max_layer" => w.max_layer = parse(key, v)?,
            "struc2vec.walks_per_node" => w.walks_per_node = parse(key, v)?,
            "struc2vec.walk_length" => w.walk_length = parse(key, v)?,
            "struc2vec.window" => w.window = parse(key, v)?,
            "struc2vec.negatives" => w.negatives = parse(key, v)?,
            "struc2vec.epochs" => w.sg_epochs = parse(key, v)?,
            "struc2vec.learning_rate" => w.sg_lr = parse(key, v)?,
            "struc2vec.seed" => w.seed = parse(key, v)?,
            "struc2vec.stay_prob" => w.stay_prob = parse(key, v)?,
            "struc2vec.exact_pair_limit" => w.exact_pair_limit = parse(key, v)?,
            "struc2vec.candidates_per_node" => w.candidates_per_node = parse(key, v)?,
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    /// Lines that determine an embedding of `method`.
    pub fn embed_lines(&self, method: Method) -> Vec<String> {
        let p = &self.embed.poincare;
        let w = &self.embed.struc2vec;
        match method {
            Method::Isomap => vec![],
            Method::Poincare => vec![
                format!("poincare.epochs={}", p.epochs),
                format!("poincare.learning_rate={}", p.learning_rate),
                format!("poincare.burn_in_epochs={}", p.burn_in_epochs),
                format!("poincare.burn_in_lr_factor={}", p.burn_in_lr_factor),
                format!("poincare.negatives={}", p.negatives),
                format!("poincare.max_norm={}", p.max_norm),
                format!("poincare.init_range={}", p.init_range),
                format!("poincare.seed={}", p.seed),
            ],
            Method::Struc2vec => vec![
                format!("struc2vec.max_layer={}", w.max_layer),
                format!("struc2vec.walks_per_node={}", w.walks_per_node),
                format!("struc2vec.walk_length={}", w.walk_length),
                format!("struc2vec.window={}", w.window),
                format!("struc2vec.negatives={}", w.negatives),
                format!("struc2vec.epochs={}", w.sg_epochs),
                format!("struc2vec.learning_rate={}", w.sg_lr),
                format!("struc2vec.seed={}", w.seed),
                format!("struc2vec.stay_prob={}", w.stay_prob),
                format!("struc2vec.exact_pair_limit={}", w.exact_pair_limit),
                format!("struc2vec.candidates_per_node={}", w.candidates_per_node),
            ],
        }
    }

    pub fn neighborhood_lines(&self) -> Vec<String> {
        vec![
            format!("self_loop={}", self.self_loop),
            format!("exact_hyperbolic_distance={}", self.exact_hyperbolic),
            format!("rho_seed={}", self.rho_seed),
        ]
    }

    pub fn neighborhood_options(&self) -> NeighborhoodOptions {
        NeighborhoodOptions {
            self_loop: self.self_loop,
            exact_hyperbolic: self.exact_hyperbolic,
        }
    }

    /// Per-virtual-node width: explicit, else the registry's, else 16.
    pub fn gcn_hidden(&self, info: Option<&DatasetInfo>) -> usize {
        self.gcn_hidden.or(info.map(|d| d.gcn_hidden)).unwrap_or(16)
    }

    pub fn train_config(&self, info: Option<&DatasetInfo>, variant: Variant) -> TrainConfig {
        let base = TrainConfig::default();
        TrainConfig {
            lr: self.lr.unwrap_or(base.lr),
            weight_decay: self
                .weight_decay
                .or(info.map(DatasetInfo::weight_decay))
                .unwrap_or(base.weight_decay),
            dropout: self.dropout,
            patience: self.patience,
            max_epochs: self.max_epochs,
            hidden_units: self
                .hidden_units
                .unwrap_or(self.gcn_hidden(info) * variant.virtual_nodes()),
            variant,
            norm_exponent: self.norm_exponent,
        }
    }

    /// Every resolved setting as `key=value`, training values as used for
    /// `variant` on the dataset `info`.
    pub fn resolved_lines(&self, info: Option<&DatasetInfo>, variant: Variant) -> Vec<String> {
        let t = self.train_config(info, variant);
        let mut out = vec![
            format!("lr={}", t.lr),
            format!("weight_decay={}", t.weight_decay),
            format!("gcn_hidden={}", self.gcn_hidden(info)),
            format!("hidden_units={}", t.hidden_units),
            format!("dropout={}", t.dropout),
            format!("patience={}", t.patience),
            format!("max_epochs={}", t.max_epochs),
            format!("norm_exponent={}", t.norm_exponent),
            format!("row_normalize={}", self.row_normalize),
        ];
        out.extend(self.neighborhood_lines());
        for m in Method::ALL {
            out.extend(self.embed_lines(m));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_named() {
        let err = Settings::default().set("learning_rat", "0.1").unwrap_err();
        assert!(err.to_string().contains("learning_rat"));
    }

    #[test]
    fn registry_defaults_fill_gaps() {
        let s = Settings::default();
        let cornell = geomgcn::harness::info("cornell").unwrap();
        let t = s.train_config(Some(cornell), Variant::Geom);
        assert_eq!(t.hidden_units, 32 * 8);
        assert_eq!(t.weight_decay, 5e-6);
        let t = s.train_config(None, Variant::Gcn);
        assert_eq!(t.hidden_units, 16);
    }
}
