//! Plain-TSV graph bundles.
//!
//! A bundle directory holds `edges.tsv`, `features.tsv`, `labels.tsv`, an
//! optional `meta.tsv` (`n_nodes`, `n_features`, `n_classes`) and an optional
//! `masks.tsv`. Blank lines and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::AttributedGraph;
use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;

/// Role of a node in a fixed public split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskRole {
    Train,
    Valid,
    Test,
}

impl FromStr for MaskRole {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "valid" | "val" => Ok(Self::Valid),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown mask role '{other}'")),
        }
    }
}

/// Public-split roles keyed by bundle node id.
pub type NodeMasks = HashMap<usize, MaskRole>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line number.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        (!t.is_empty() && !t.starts_with('#'))
            .then(|| (i + 1, t.split('\t').map(str::trim).collect()))
    })
}

fn parse_num<T: FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("{what} '{field}' is not a valid number"),
        )
    })
}

#[derive(Default)]
struct Meta {
    n_nodes: Option<usize>,
    n_features: Option<usize>,
    n_classes: Option<usize>,
}

fn read_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join("meta.tsv");
    if !path.exists() {
        return Ok(Meta::default());
    }
    let text = read(&path)?;
    let mut meta = Meta::default();
    for (ln, f) in lines(&text) {
        if f.len() != 2 {
            return Err(Error::parse(&path, ln, "expected key<TAB>value"));
        }
        let slot = match f[0] {
            "n_nodes" => &mut meta.n_nodes,
            "n_features" => &mut meta.n_features,
            "n_classes" => &mut meta.n_classes,
            _ => continue,
        };
        *slot = Some(parse_num(&path, ln, f[1], f[0])?);
    }
    Ok(meta)
}

fn required(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if !p.is_file() {
        return Err(Error::io(
            &p,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "required bundle file is missing",
            ),
        ));
    }
    Ok(p)
}

/// Loads a bundle directory. Duplicate edges are merged and self-loops are
/// dropped (with a warning). Nodes without a feature row get all-zero features.
pub fn load_graph(dir: &Path) -> Result<AttributedGraph> {
    let meta = read_meta(dir)?;

    let labels_path = required(dir, "labels.tsv")?;
    let text = read(&labels_path)?;
    let mut raw_labels = Vec::new();
    for (ln, f) in lines(&text) {
        if f.len() != 2 {
            return Err(Error::parse(&labels_path, ln, "expected id<TAB>class"));
        }
        let id: usize = parse_num(&labels_path, ln, f[0], "node id")?;
        let y: usize = parse_num(&labels_path, ln, f[1], "class id")?;
        raw_labels.push((ln, id, y));
    }
    let n = meta.n_nodes.unwrap_or_else(|| {
        raw_labels
            .iter()
            .map(|&(_, id, _)| id + 1)
            .max()
            .unwrap_or(0)
    });
    let n_classes = meta
        .n_classes
        .unwrap_or_else(|| raw_labels.iter().map(|&(_, _, y)| y + 1).max().unwrap_or(0));
    if n == 0 {
        return Err(Error::Empty(format!("{}: no nodes", dir.display())));
    }
    let mut labels = vec![None; n];
    for (ln, id, y) in raw_labels {
        if id >= n {
            return Err(Error::parse(
                &labels_path,
                ln,
                format!("node id {id} ≥ n_nodes {n}"),
            ));
        }
        if y >= n_classes {
            return Err(Error::parse(
                &labels_path,
                ln,
                format!("class {y} out of range for {n_classes} classes"),
            ));
        }
        labels[id] = Some(y);
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(v, y)| {
            y.ok_or_else(|| Error::parse(&labels_path, 0, format!("node {v} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;

    let edges_path = required(dir, "edges.tsv")?;
    let text = read(&edges_path)?;
    let mut edges = Vec::new();
    let mut self_loops = 0usize;
    for (ln, f) in lines(&text) {
        if f.len() < 2 {
            return Err(Error::parse(&edges_path, ln, "expected u<TAB>v"));
        }
        let u: usize = parse_num(&edges_path, ln, f[0], "node id")?;
        let v: usize = parse_num(&edges_path, ln, f[1], "node id")?;
        if u >= n || v >= n {
            return Err(Error::parse(
                &edges_path,
                ln,
                format!("edge ({u}, {v}) references a node id ≥ {n}"),
            ));
        }
        if u == v {
            self_loops += 1;
        } else {
            edges.push((u, v));
        }
    }
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loops", edges_path.display());
    }
    let adjacency = SparseMatrix::adjacency_from_edges(n, &edges)?;

    let features = read_features(&required(dir, "features.tsv")?, n, meta.n_features)?;
    AttributedGraph::new(adjacency, features, labels, n_classes)
}

fn read_features(path: &Path, n: usize, n_features: Option<usize>) -> Result<SparseMatrix> {
    let text = read(path)?;
    let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; n];
    let mut dense_width: Option<usize> = None;
    let mut max_col = 0usize;
    for (ln, f) in lines(&text) {
        let id: usize = parse_num(path, ln, f[0], "node id")?;
        if id >= n {
            return Err(Error::parse(
                path,
                ln,
                format!("node id {id} ≥ n_nodes {n}"),
            ));
        }
        let entries = &f[1..];
        let sparse = entries.iter().any(|e| e.contains(':'));
        let mut row = Vec::with_capacity(entries.len());
        if sparse {
            for e in entries {
                let (i, v) = e.split_once(':').ok_or_else(|| {
                    Error::parse(path, ln, format!("mixed dense and sparse entry '{e}'"))
                })?;
                let i: usize = parse_num(path, ln, i, "feature index")?;
                let v: f64 = parse_num(path, ln, v, "feature value")?;
                if !v.is_finite() {
                    return Err(Error::parse(path, ln, "non-finite feature value"));
                }
                max_col = max_col.max(i + 1);
                row.push((i, v));
            }
        } else if !entries.is_empty() {
            match dense_width {
                None => dense_width = Some(entries.len()),
                Some(w) if w != entries.len() => {
                    return Err(Error::parse(
                        path,
                        ln,
                        format!("ragged feature row: {} values, expected {w}", entries.len()),
                    ))
                }
                _ => {}
            }
            for (i, e) in entries.iter().enumerate() {
                let v: f64 = parse_num(path, ln, e, "feature value")?;
                if !v.is_finite() {
                    return Err(Error::parse(path, ln, "non-finite feature value"));
                }
                if v != 0.0 {
                    row.push((i, v));
                }
            }
            max_col = max_col.max(entries.len());
        }
        if rows[id].replace(row).is_some() {
            return Err(Error::parse(
                path,
                ln,
                format!("duplicate feature row for node {id}"),
            ));
        }
    }
    let width = n_features.unwrap_or(max_col);
    if max_col > width {
        return Err(Error::parse(
            path,
            0,
            format!("feature index {} exceeds n_features {width}", max_col - 1),
        ));
    }
    if let (Some(w), Some(nf)) = (dense_width, n_features) {
        if w != nf {
            return Err(Error::parse(
                path,
                0,
                format!("dense rows have {w} values but n_features is {nf}"),
            ));
        }
    }
    let mut triplets = Vec::new();
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row.unwrap_or_default() {
            triplets.push((r, c, v));
        }
    }
    SparseMatrix::from_triplets(n, width, &triplets)
}

/// Reads `masks.tsv` if the bundle has one.
pub fn load_masks(dir: &Path) -> Result<Option<NodeMasks>> {
    let path = dir.join("masks.tsv");
    if !path.exists() {
        return Ok(None);
    }
    let text = read(&path)?;
    let mut masks = NodeMasks::new();
    for (ln, f) in lines(&text) {
        if f.len() != 2 {
            return Err(Error::parse(&path, ln, "expected id<TAB>role"));
        }
        let id: usize = parse_num(&path, ln, f[0], "node id")?;
        let role: MaskRole = f[1]
            .parse()
            .map_err(|m: String| Error::parse(&path, ln, m))?;
        if masks.insert(id, role).is_some() {
            return Err(Error::parse(&path, ln, format!("node {id} listed twice")));
        }
    }
    Ok(Some(masks))
}

/// Writes undirected edges (`u < v`) in the bundle edge format.
pub fn write_edges(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = Vec::new();
    for (u, v) in edges {
        writeln!(out, "{u}\t{v}").expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
