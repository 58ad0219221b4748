//! Node embeddings into a two-dimensional latent space.
//!
//! Three backends: [`isomap`] (Euclidean, shortest-path preserving),
//! [`poincare`] (hyperbolic, hierarchy preserving) and [`struc2vec`]
//! (Euclidean, structural-role preserving).
//!
//! Embeddings are cached as text: optional `#` comment lines, then a header
//! line `space=<euclidean|hyperbolic> method=<name> dim=<d>`, then one line
//! of `d` reals per node.

pub mod isomap;
pub mod poincare;
pub mod struc2vec;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_error, push_header, read_text, write_file};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Euclidean,
    Hyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Isomap,
    Poincare,
    Struc2vec,
}

impl Method {
    pub fn space(self) -> Space {
        match self {
            Method::Poincare => Space::Hyperbolic,
            Method::Isomap | Method::Struc2vec => Space::Euclidean,
        }
    }

    /// Single-letter tag used in variant names (I, P, S).
    pub fn letter(self) -> char {
        match self {
            Method::Isomap => 'I',
            Method::Poincare => 'P',
            Method::Struc2vec => 'S',
        }
    }

    pub const ALL: [Method; 3] = [Method::Isomap, Method::Poincare, Method::Struc2vec];
}

macro_rules! str_enum {
    ($ty:ty { $($variant:ident => $s:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $s),* }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$variant),)*
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

str_enum!(Space { Euclidean => "euclidean", Hyperbolic => "hyperbolic" });
str_enum!(Method { Isomap => "isomap", Poincare => "poincare", Struc2vec => "struc2vec" });

/// Latent coordinates, one row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T: Scalar = f64> {
    pub coords: Tensor2<T>,
    pub space: Space,
    pub method: Method,
}

impl<T: Scalar> Embedding<T> {
    /// Checks finiteness and, for hyperbolic embeddings, that every point
    /// lies strictly inside the unit ball.
    pub fn new(coords: Tensor2<T>, space: Space, method: Method) -> Result<Self> {
        if !coords.is_finite() {
            return Err(Error::Numerical(format!(
                "{method} embedding has non-finite coordinates"
            )));
        }
        if space == Space::Hyperbolic {
            for i in 0..coords.rows() {
                let r = coords.row(i);
                if r.iter().map(|&x| x * x).sum::<T>() >= T::one() {
                    return Err(Error::OutsideBall(r.iter().map(|x| x.as_f64()).collect()));
                }
            }
        }
        Ok(Self {
            coords,
            space,
            method,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.rows()
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }

    pub fn point(&self, v: usize) -> &[T] {
        self.coords.row(v)
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            coords: self.coords.permute_rows(perm),
            space: self.space,
            method: self.method,
        }
    }

    /// Writes the cache format; `header` lines become `#` comments.
    pub fn save(&self, path: &Path, header: &str) -> Result<()> {
        let mut out = String::new();
        push_header(&mut out, header);
        out.push_str(&format!(
            "space={} method={} dim={}\n",
            self.space,
            self.method,
            self.dim()
        ));
        for i in 0..self.num_nodes() {
            let row: Vec<String> = self.point(i).iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        write_file(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_error(path, 1, "missing embedding header"))?;
        let (mut space, mut method, mut dim) = (None, None, None);
        for tok in header.split_whitespace() {
            let bad = || parse_error(path, hline + 1, format!("bad header token `{tok}`"));
            let (k, v) = tok.split_once('=').ok_or_else(bad)?;
            match k {
                "space" => space = Some(v.parse::<Space>()?),
                "method" => method = Some(v.parse::<Method>()?),
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let (Some(space), Some(method), Some(dim)) = (space, method, dim) else {
            return Err(parse_error(path, hline + 1, "header needs space, method and dim"));
        };
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<T> = line
                .split_whitespace()
                .map(|t| t.parse::<T>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_error(path, i + 1, "bad coordinate"))?;
            if vals.len() != dim {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("{} coordinates, expected {dim}", vals.len()),
                ));
            }
            data.extend(vals);
            rows += 1;
        }
        Self::new(Tensor2::from_vec(rows, dim, data)?, space, method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_roundtrip_is_exact() {
        let coords = Tensor2::from_rows(&[vec![0.1, -0.25], vec![1.0 / 3.0, 0.5]]).unwrap();
        let e = Embedding::new(coords, Space::Hyperbolic, Method::Poincare).unwrap();
        let dir = std::env::temp_dir().join(format!("geomgcn-emb-{}", std::process::id()));
        let p = dir.join("e.txt");
        e.save(&p, "dataset=toy\nseed=1").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# dataset=toy\n# seed=1\nspace=hyperbolic method=poincare dim=2\n"));
        assert_eq!(Embedding::<f64>::load(&p).unwrap(), e);
    }

    #[test]
    fn hyperbolic_points_must_be_inside_ball() {
        let coords = Tensor2::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(Embedding::new(coords.clone(), Space::Hyperbolic, Method::Poincare).is_err());
        assert!(Embedding::new(coords, Space::Euclidean, Method::Isomap).is_ok());
    }
}
