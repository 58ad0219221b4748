//! Text formats for graphs and splits.
//!
//! * edges: one `u v` pair per line, zero-based ids.
//! * features: one node per line, either dense reals or sparse `idx:val`
//!   tokens. A file must use one style throughout. Sparse files may declare
//!   their width with a `# dim=<d>` comment; otherwise it is the largest
//!   index plus one.
//! * labels: one class id per line.
//! * splits: one of `train`, `val`, `test` per line.
//!
//! Lines starting with `#` are comments everywhere.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{BuildStats, Graph, Split, SplitTag};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_comment(line) || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, i + 1, "expected two node ids"));
        };
        let u = a
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad node id `{a}`")))?;
        let v = b
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad node id `{b}`")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        let t = line.trim();
        let l = t
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad label `{t}`")))?;
        labels.push(l);
    }
    Ok(labels)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Style {
    Dense,
    Sparse,
}

pub fn read_features<T: Scalar>(path: &Path) -> Result<Tensor2<T>> {
    let text = read(path)?;
    let mut declared_dim = None;
    let mut style = None;
    let mut rows: Vec<Vec<(usize, T)>> = Vec::new();
    let mut dense_width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if is_comment(line) {
            if let Some(d) = line.trim_start_matches(['#', ' ']).strip_prefix("dim=") {
                declared_dim = Some(
                    d.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(path, lineno, "bad dim declaration"))?,
                );
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let mut row = Vec::with_capacity(tokens.len());
        for tok in &tokens {
            let this = if tok.contains(':') {
                Style::Sparse
            } else {
                Style::Dense
            };
            match style {
                None => style = Some(this),
                Some(s) if s != this => {
                    return Err(parse_err(path, lineno, "mixed dense and sparse tokens"))
                }
                _ => {}
            }
            let bad = || parse_err(path, lineno, format!("bad feature token `{tok}`"));
            match this {
                Style::Dense => row.push((row.len(), tok.parse::<T>().map_err(|_| bad())?)),
                Style::Sparse => {
                    let (idx, val) = tok.split_once(':').ok_or_else(bad)?;
                    let idx: usize = idx.parse().map_err(|_| bad())?;
                    let val: T = val.parse().map_err(|_| bad())?;
                    row.push((idx, val));
                }
            }
        }
        if style != Some(Style::Sparse) {
            if tokens.is_empty() {
                return Err(parse_err(path, lineno, "empty dense feature row"));
            }
            match dense_width {
                None => dense_width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("{} features, expected {w}", row.len()),
                    ))
                }
                _ => {}
            }
        }
        rows.push(row);
    }
    let inferred = rows
        .iter()
        .flat_map(|r| r.iter().map(|&(j, _)| j + 1))
        .max()
        .unwrap_or(0);
    let dim = match (style, declared_dim) {
        (Some(Style::Sparse) | None, Some(d)) => {
            if inferred > d {
                return Err(parse_err(
                    path,
                    0,
                    format!("feature index {} exceeds declared dim {d}", inferred - 1),
                ));
            }
            d
        }
        _ => inferred,
    };
    let mut t = Tensor2::zeros(rows.len(), dim);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            t[(i, j)] = v;
        }
    }
    Ok(t)
}

/// Reads and validates a graph from its three files.
pub fn load_graph<T: Scalar>(
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
) -> Result<(Graph<T>, BuildStats)> {
    let features = read_features::<T>(feature_path)?;
    let labels = read_labels(label_path)?;
    if labels.len() != features.rows() {
        return Err(Error::Validation(format!(
            "label file has {} entries but there are {} nodes",
            labels.len(),
            features.rows()
        )));
    }
    let edges = read_edges(edge_path)?;
    let (g, stats) = Graph::new(edges, features, labels)?;
    if stats.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop lines",
            edge_path.display(),
            stats.self_loops_dropped
        );
    }
    Ok((g, stats))
}

pub fn write_split(path: &Path, split: &Split, header: &str) -> Result<()> {
    let mut out = String::new();
    push_header(&mut out, header);
    for tag in &split.assignment {
        out.push_str(tag.as_str());
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_split(path: &Path, seed: u64) -> Result<Split> {
    let text = read(path)?;
    let mut assignment = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        let tag: SplitTag = line.trim().parse().map_err(|m| parse_err(path, i + 1, m))?;
        assignment.push(tag);
    }
    Ok(Split { assignment, seed })
}

/// Prefixes every line of `header` with `# `.
pub fn push_header(out: &mut String, header: &str) {
    for line in header.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    read(path)
}

pub(crate) fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    parse_err(path, line, message)
}
