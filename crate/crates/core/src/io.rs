//! Graph files: Matrix Market symmetric coordinate format and a JSON edge list.
//!
//! Matrix Market indices are 1-based and either triangle may be given. The JSON
//! form is `{"n": 3, "edges": [[0, 1, 1.0], [1, 2, 2.5]]}` with 0-based indices.
//! In both, diagonal entries and zero weights are dropped.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{OnPattern, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    MatrixMarket,
    Json,
}

impl GraphFormat {
    /// `.mtx` or `.json`; anything else is sniffed from the content.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "mtx" => Some(Self::MatrixMarket),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

pub fn read_graph(path: &Path) -> Result<WeightMatrix> {
    let text = fs::read_to_string(path)?;
    let format = GraphFormat::from_path(path).unwrap_or_else(|| {
        if text.trim_start().starts_with("%%MatrixMarket") {
            GraphFormat::MatrixMarket
        } else {
            GraphFormat::Json
        }
    });
    parse_graph(&text, format)
}

pub fn parse_graph(text: &str, format: GraphFormat) -> Result<WeightMatrix> {
    match format {
        GraphFormat::MatrixMarket => parse_matrix_market(text),
        GraphFormat::Json => parse_json_graph(text),
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Collects edges, reporting bad entries with their line.
struct EdgeCollector {
    n: usize,
    seen: HashMap<(usize, usize), (f64, usize)>,
    triplets: Vec<(usize, usize, f64)>,
}

impl EdgeCollector {
    fn new(n: usize) -> Self {
        Self { n, seen: HashMap::new(), triplets: Vec::new() }
    }

    fn push(&mut self, line: usize, i: usize, j: usize, w: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(parse_err(line, format!("index out of range for n = {}", self.n)));
        }
        if !w.is_finite() {
            return Err(parse_err(line, "non-finite weight"));
        }
        if w < 0.0 {
            return Err(parse_err(line, format!("negative weight {w}")));
        }
        if i == j {
            return Ok(());
        }
        let key = (i.min(j), i.max(j));
        if let Some(&(prev, at)) = self.seen.get(&key) {
            if prev != w {
                return Err(parse_err(line, format!("edge conflicts with line {at}")));
            }
            return Ok(());
        }
        self.seen.insert(key, (w, line));
        self.triplets.push((key.0, key.1, w));
        Ok(())
    }

    fn finish(self) -> Result<WeightMatrix> {
        WeightMatrix::from_triplets(self.n, self.triplets)
    }
}

pub fn parse_matrix_market(text: &str) -> Result<WeightMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix coordinate <field> symmetric'"));
    }
    let pattern_only = match fields[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    };
    if fields[4] != "symmetric" {
        return Err(parse_err(1, format!("unsupported symmetry '{}'", fields[4])));
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = body.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("bad integer '{t}'"))))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(size_line, "size line needs rows, columns and entry count"));
    };
    if rows != cols {
        return Err(parse_err(size_line, format!("matrix is {rows}x{cols}, not square")));
    }
    let mut edges = EdgeCollector::new(rows);
    let mut count = 0;
    for (no, l) in body {
        let tok: Vec<&str> = l.split_whitespace().collect();
        let want = if pattern_only { 2 } else { 3 };
        if tok.len() != want {
            return Err(parse_err(no, format!("expected {want} fields, got {}", tok.len())));
        }
        let index = |t: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(parse_err(no, format!("bad index '{t}'"))),
            }
        };
        let w = if pattern_only {
            1.0
        } else {
            tok[2].parse::<f64>().map_err(|_| parse_err(no, format!("bad weight '{}'", tok[2])))?
        };
        edges.push(no, index(tok[0])?, index(tok[1])?, w)?;
        count += 1;
    }
    if count != nnz {
        return Err(parse_err(size_line, format!("declared {nnz} entries, found {count}")));
    }
    edges.finish()
}

/// Writes the lower triangle with 17 significant digits.
pub fn write_matrix_market<W: Write>(w: &WeightMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    let edges = w.pattern().edges();
    writeln!(out, "{} {} {}", w.n(), w.n(), edges.len())?;
    for (&(i, j), &v) in edges.iter().zip(w.weights()) {
        writeln!(out, "{} {} {:.16e}", j + 1, i + 1, v)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

pub fn parse_json_graph(text: &str) -> Result<WeightMatrix> {
    let g: JsonGraph = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
    let mut edges = EdgeCollector::new(g.n);
    for (idx, (i, j, w)) in g.edges.into_iter().enumerate() {
        // entries carry no line of their own once deserialized; line 0 plus the edge index
        edges.push(0, i, j, w).map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(0, format!("edge {idx}: {msg}")),
            other => other,
        })?;
    }
    edges.finish()
}

pub fn to_json_graph(w: &WeightMatrix) -> String {
    let g = JsonGraph {
        n: w.n(),
        edges: w.pattern().edges().iter().zip(w.weights()).map(|(&(i, j), &v)| (i, j, v)).collect(),
    };
    serde_json::to_string(&g).expect("graph serializes")
}

pub fn write_graph(w: &WeightMatrix, path: &Path) -> Result<()> {
    match GraphFormat::from_path(path) {
        Some(GraphFormat::Json) => fs::write(path, to_json_graph(w))?,
        _ => {
            let mut buf = Vec::new();
            write_matrix_market(w, &mut buf)?;
            fs::write(path, buf)?;
        }
    }
    Ok(())
}
