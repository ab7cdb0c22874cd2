//! Topology files.
//!
//! Edge lists are one edge per line, `i<TAB>j<TAB>w`, with 1-based node
//! indices. A missing weight column means unit weight, lines starting with
//! `#` or `%` are comments, and any whitespace separates fields. Two comment
//! directives are understood:
//!
//! * `# nodes N` fixes the node count (otherwise the largest index is used);
//! * `# directed` stores each line as given. Without it every line is
//!   mirrored, which matches the usual undirected edge-list convention.
//!
//! The writer always emits `# nodes`, and emits `# directed` unless the
//! network is symmetric, in which case only the upper triangle is written.
//!
//! Matrix Market coordinate files (`real`, `integer` or `pattern`,
//! `general` or `symmetric`) are read and written with 1-based indices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::WeightedNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFormat {
    EdgeListTsv,
    MatrixMarket,
}

impl NetworkFormat {
    /// Guesses the format from the file extension: `.mtx` is Matrix Market,
    /// everything else an edge list.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") => NetworkFormat::MatrixMarket,
            _ => NetworkFormat::EdgeListTsv,
        }
    }
}

pub fn read_network(path: impl AsRef<Path>, format: NetworkFormat) -> Result<WeightedNetwork> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    match format {
        NetworkFormat::EdgeListTsv => read_edge_list(reader, path),
        NetworkFormat::MatrixMarket => read_matrix_market(reader, path),
    }
}

/// Parses a network from any reader; `source` only labels error messages.
pub fn read_network_from(reader: impl BufRead, format: NetworkFormat, source: &Path) -> Result<WeightedNetwork> {
    match format {
        NetworkFormat::EdgeListTsv => read_edge_list(reader, source),
        NetworkFormat::MatrixMarket => read_matrix_market(reader, source),
    }
}

pub fn write_network(net: &WeightedNetwork, path: impl AsRef<Path>, format: NetworkFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    match format {
        NetworkFormat::EdgeListTsv => write_edge_list(net, &mut out)?,
        NetworkFormat::MatrixMarket => write_matrix_market(net, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

struct Entry {
    line: usize,
    i: usize,
    j: usize,
    w: f64,
}

fn parse_index(field: &str, path: &Path, line: usize) -> Result<usize> {
    let idx: usize = field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid node index {field:?}")))?;
    if idx == 0 {
        return Err(Error::parse(path, line, "node indices are 1-based"));
    }
    Ok(idx - 1)
}

fn parse_weight(field: &str, path: &Path, line: usize) -> Result<f64> {
    let w: f64 = field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid weight {field:?}")))?;
    if !w.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite weight {field:?}")));
    }
    Ok(w)
}

fn read_edge_list(reader: impl BufRead, path: &Path) -> Result<WeightedNetwork> {
    let mut declared_nodes = None;
    let mut directed = false;
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#').or_else(|| trimmed.strip_prefix('%')) {
            let mut words = comment.split_whitespace();
            match words.next() {
                Some("directed") => directed = true,
                Some("nodes") => {
                    let n = words
                        .next()
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| Error::parse(path, lineno, "malformed `# nodes` directive"))?;
                    declared_nodes = Some(n);
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected `i j [w]`, found {} fields", fields.len()),
            ));
        }
        let i = parse_index(fields[0], path, lineno)?;
        let j = parse_index(fields[1], path, lineno)?;
        let w = match fields.get(2) {
            Some(f) => parse_weight(f, path, lineno)?,
            None => 1.0,
        };
        entries.push(Entry { line: lineno, i, j, w });
    }
    let inferred = entries.iter().map(|e| e.i.max(e.j) + 1).max().unwrap_or(0);
    let n = declared_nodes.unwrap_or(inferred);
    assemble(n, &entries, !directed, path)
}

fn assemble(n: usize, entries: &[Entry], mirror: bool, path: &Path) -> Result<WeightedNetwork> {
    let mut weights = DMatrix::zeros(n, n);
    for e in entries {
        if e.i >= n || e.j >= n {
            return Err(Error::parse(
                path,
                e.line,
                format!("node index {} out of range for {n} nodes", e.i.max(e.j) + 1),
            ));
        }
        if e.i == e.j {
            continue;
        }
        weights[(e.i, e.j)] = e.w;
        if mirror {
            weights[(e.j, e.i)] = e.w;
        }
    }
    WeightedNetwork::from_weights(weights)
}

fn write_edge_list(net: &WeightedNetwork, out: &mut impl Write) -> Result<()> {
    let n = net.n_nodes();
    let symmetric = net.is_symmetric();
    writeln!(out, "# nodes {n}")?;
    if !symmetric {
        writeln!(out, "# directed")?;
    }
    for (i, j, w) in net.edges() {
        if symmetric && j < i {
            continue;
        }
        writeln!(out, "{}\t{}\t{}", i + 1, j + 1, w)?;
    }
    Ok(())
}

fn read_matrix_market(reader: impl BufRead, path: &Path) -> Result<WeightedNetwork> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty Matrix Market file"))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::parse(path, 1, "missing `%%MatrixMarket matrix` header"));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::parse(path, 1, "only coordinate Matrix Market files are supported"));
    }
    let pattern = match tokens[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(Error::parse(path, 1, format!("unsupported field type {other:?}"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::parse(path, 1, format!("unsupported symmetry {other:?}"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if size.is_none() {
            let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[rows, cols, nnz]) => {
                    if rows != cols {
                        return Err(Error::parse(path, lineno, format!("adjacency must be square, got {rows}x{cols}")));
                    }
                    size = Some((rows, cols, nnz));
                }
                _ => return Err(Error::parse(path, lineno, "malformed size line")),
            }
            continue;
        }
        let expected = if pattern { 2 } else { 3 };
        if fields.len() != expected {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let i = parse_index(fields[0], path, lineno)?;
        let j = parse_index(fields[1], path, lineno)?;
        let w = if pattern { 1.0 } else { parse_weight(fields[2], path, lineno)? };
        entries.push(Entry { line: lineno, i, j, w });
    }
    let (n, _, nnz) = size.ok_or_else(|| Error::parse(path, 1, "missing size line"))?;
    if entries.len() != nnz {
        return Err(Error::parse(
            path,
            1,
            format!("size line declares {nnz} entries, found {}", entries.len()),
        ));
    }
    assemble(n, &entries, symmetric, path)
}

fn write_matrix_market(net: &WeightedNetwork, out: &mut impl Write) -> Result<()> {
    let n = net.n_nodes();
    let symmetric = net.is_symmetric();
    // Symmetric files store the lower triangle.
    let entries: Vec<_> = net
        .edges()
        .into_iter()
        .filter(|&(i, j, _)| !symmetric || i > j)
        .collect();
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(out, "%%MatrixMarket matrix coordinate real {kind}")?;
    writeln!(out, "{n} {n} {}", entries.len())?;
    for (i, j, w) in entries {
        writeln!(out, "{} {} {}", i + 1, j + 1, w)?;
    }
    Ok(())
}
