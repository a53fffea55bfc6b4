//! Knowledge graph over the vocabulary, its symmetric-normalized adjacency
//! and the node feature matrix consumed by the GCN.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Undirected weighted graph. Each unordered pair appears once, stored with
/// `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    num_nodes: usize,
    edges: Vec<(u32, u32, f64)>,
}

impl KnowledgeGraph {
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (i, j, w) in edges {
            if i as usize >= num_nodes || j as usize >= num_nodes {
                return Err(Error::Invalid(format!(
                    "edge ({i},{j}) out of range for {num_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::Invalid(format!("self-loop on node {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Invalid(format!("edge ({i},{j}) has non-positive weight {w}")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::Invalid(format!("duplicate pair ({},{})", key.0, key.1)));
            }
            out.push((key.0, key.1, w));
        }
        Ok(Self {
            num_nodes,
            edges: out,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }
}

/// Reads `i j [w]` lines; `w` defaults to 1.0. Blank lines and `#` comments
/// are skipped.
pub fn load_edge_list(path: impl AsRef<Path>, num_nodes: usize) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(path, n, "expected `i j [w]`"));
        }
        let id = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|_| Error::parse(path, n, format!("bad node id {s:?}")))
        };
        let (i, j) = (id(fields[0])?, id(fields[1])?);
        let w: f64 = match fields.get(2) {
            Some(s) => s
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad weight {s:?}")))?,
            None => 1.0,
        };
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::parse(
                path,
                n,
                format!("duplicate pair ({},{})", i.min(j), i.max(j)),
            ));
        }
        edges.push((i, j, w));
    }
    KnowledgeGraph::new(num_nodes, edges).map_err(|e| match e {
        Error::Invalid(msg) => Error::Invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes a graph as an edge list readable by [`load_edge_list`].
pub fn format_edge_list(g: &KnowledgeGraph) -> String {
    let mut s = String::new();
    for &(i, j, w) in &g.edges {
        s.push_str(&format!("{i} {j} {w}\n"));
    }
    s
}

/// Â = D̃^{-1/2} (A + I) D̃^{-1/2} in compressed-row form. Column indices are
/// sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<T>,
}

pub fn normalize<T: Scalar>(g: &KnowledgeGraph) -> NormalizedAdjacency<T> {
    let n = g.num_nodes;
    let mut rows: Vec<Vec<(u32, T)>> = (0..n).map(|i| vec![(i as u32, T::one())]).collect();
    for &(i, j, w) in &g.edges {
        let w = T::lit(w);
        rows[i as usize].push((j, w));
        rows[j as usize].push((i, w));
    }
    let inv_sqrt_deg: Vec<T> = rows
        .iter()
        .map(|r| {
            let d: T = r.iter().map(|&(_, w)| w).sum();
            T::one() / d.sqrt()
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for (i, mut row) in rows.into_iter().enumerate() {
        row.sort_unstable_by_key(|&(j, _)| j);
        for (j, w) in row {
            col_idx.push(j);
            values.push(inv_sqrt_deg[i] * inv_sqrt_deg[j as usize] * w);
        }
        row_ptr.push(col_idx.len());
    }
    NormalizedAdjacency {
        n,
        row_ptr,
        col_idx,
        values,
    }
}

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&(j as u32)) {
            Ok(p) => self.values[span.start + p],
            Err(_) => T::zero(),
        }
    }

    /// Â · m for a dense `n × d` matrix.
    pub fn matmul(&self, m: &Array2<T>) -> Result<Array2<T>> {
        if m.nrows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency is {n}x{n}, right operand has {} rows",
                m.nrows(),
                n = self.n
            )));
        }
        let mut out = Array2::zeros((self.n, m.ncols()));
        for (i, mut out_row) in out.outer_iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                out_row.scaled_add(a, &m.row(j));
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut d = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[[i, j]] = v;
            }
        }
        d
    }
}

/// Node features X (V × M). The identity case is kept implicit.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix<T> {
    Identity(usize),
    Dense(Array2<T>),
}

pub fn identity_features<T>(n: usize) -> FeatureMatrix<T> {
    FeatureMatrix::Identity(n)
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn nrows(&self) -> usize {
        match self {
            FeatureMatrix::Identity(n) => *n,
            FeatureMatrix::Dense(x) => x.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            FeatureMatrix::Identity(n) => *n,
            FeatureMatrix::Dense(x) => x.ncols(),
        }
    }

    /// X · w.
    pub fn matmul(&self, w: &Array2<T>) -> Array2<T> {
        match self {
            FeatureMatrix::Identity(_) => w.clone(),
            FeatureMatrix::Dense(x) => x.dot(w),
        }
    }

    /// Xᵀ · g.
    pub fn t_matmul(&self, g: &Array2<T>) -> Array2<T> {
        match self {
            FeatureMatrix::Identity(_) => g.clone(),
            FeatureMatrix::Dense(x) => x.t().dot(g),
        }
    }

    pub fn to_dense(&self) -> Array2<T> {
        match self {
            FeatureMatrix::Identity(n) => Array2::eye(*n),
            FeatureMatrix::Dense(x) => x.clone(),
        }
    }
}

/// Reads `i v1 … vM` rows; every node in `0..num_nodes` exactly once.
pub fn load_features<T: Scalar>(path: impl AsRef<Path>, num_nodes: usize, dim: usize) -> Result<FeatureMatrix<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut x = Array2::<T>::zeros((num_nodes, dim));
    let mut seen = vec![false; num_nodes];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, n, "bad node id"))?;
        if id >= num_nodes {
            return Err(Error::parse(path, n, format!("node {id} out of range")));
        }
        if seen[id] {
            return Err(Error::parse(path, n, format!("node {id} listed twice")));
        }
        seen[id] = true;
        let vals: Vec<f64> = fields
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, n, "bad feature value"))?;
        if vals.len() != dim {
            return Err(Error::parse(
                path,
                n,
                format!("expected {dim} features, found {}", vals.len()),
            ));
        }
        for (m, v) in vals.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::parse(path, n, format!("non-finite feature {v}")));
            }
            x[[id, m]] = T::lit(v);
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Invalid(format!(
            "{}: missing feature row for node {missing}",
            path.display()
        )));
    }
    Ok(FeatureMatrix::Dense(x))
}
