use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;

use crate::corpus::Tweet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Counts,
    TfIdf,
}

/// Sparse `N × P` document-term matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    n_rows: usize,
    vocab: Vec<String>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    pub weighting: Weighting,
}

impl DocTermMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(
        n_rows: usize,
        vocab: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        weighting: Weighting,
    ) -> Result<Self> {
        let p = vocab.len();
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_rows];
        for (r, c, v) in triplets {
            if r >= n_rows || c >= p {
                return Err(Error::shape(
                    format!("index within {n_rows}x{p}"),
                    format!("({r}, {c})"),
                ));
            }
            if v < 0.0 || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "entry ({r}, {c}) = {v} is not a finite nonnegative value"
                )));
            }
            *rows[r].entry(c).or_insert(0.0) += v;
        }
        let mut m = DocTermMatrix {
            n_rows,
            vocab,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            weighting,
        };
        for row in rows {
            for (c, v) in row {
                if v != 0.0 {
                    m.indices.push(c);
                    m.values.push(v);
                }
            }
            m.indptr.push(m.indices.len());
        }
        Ok(m)
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DocTermMatrix {
        let mut m = DocTermMatrix {
            n_rows: idx.len(),
            vocab: self.vocab.clone(),
            indptr: Vec::with_capacity(idx.len() + 1),
            indices: Vec::new(),
            values: Vec::new(),
            weighting: self.weighting,
        };
        m.indptr.push(0);
        for &i in idx {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            m.indices.extend_from_slice(&self.indices[a..b]);
            m.values.extend_from_slice(&self.values[a..b]);
            m.indptr.push(m.indices.len());
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of entries that are zero.
    pub fn sparsity(&self) -> f64 {
        let total = (self.n_rows * self.ncols()) as f64;
        if total == 0.0 {
            return 1.0;
        }
        1.0 - self.nnz() as f64 / total
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Number of documents containing each term.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0; self.ncols()];
        for &j in &self.indices {
            df[j] += 1;
        }
        df
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.ncols());
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    /// `self · b` for a dense `P × k` matrix.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let k = b.ncols();
        let mut out = DMatrix::zeros(self.n_rows, k);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                for c in 0..k {
                    out[(i, c)] += v * b[(j, c)];
                }
            }
        }
        out
    }

    /// `selfᵀ · b` for a dense `N × k` matrix.
    pub fn tmul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let k = b.ncols();
        let mut out = DMatrix::zeros(self.ncols(), k);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                for c in 0..k {
                    out[(j, c)] += v * b[(i, c)];
                }
            }
        }
        out
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.ncols()];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            m[j] += v;
        }
        let n = self.n_rows.max(1) as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Matrix Market coordinate text (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", self.n_rows, self.ncols(), self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(out, "{} {} {}", i + 1, j + 1, v);
        }
        out
    }

    pub fn read_matrix_market(
        path: &Path,
        vocab: Vec<String>,
        weighting: Weighting,
    ) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let fmt = |line: usize, message: &str| Error::Format {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut shape: Option<(usize, usize)> = None;
        let mut trip = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with('%') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(fmt(i + 1, "expected three fields"));
            }
            if shape.is_none() {
                let n = f[0].parse().map_err(|_| fmt(i + 1, "bad row count"))?;
                let p: usize = f[1].parse().map_err(|_| fmt(i + 1, "bad column count"))?;
                if p != vocab.len() {
                    return Err(fmt(i + 1, "column count differs from vocabulary length"));
                }
                shape = Some((n, p));
                continue;
            }
            let r: usize = f[0].parse().map_err(|_| fmt(i + 1, "bad row index"))?;
            let c: usize = f[1].parse().map_err(|_| fmt(i + 1, "bad column index"))?;
            let v: f64 = f[2].parse().map_err(|_| fmt(i + 1, "bad value"))?;
            if r == 0 || c == 0 {
                return Err(fmt(i + 1, "indices are 1-based"));
            }
            trip.push((r - 1, c - 1, v));
        }
        let (n, _) = shape.ok_or_else(|| fmt(0, "missing size line"))?;
        Self::from_triplets(n, vocab, trip, weighting)
    }
}

/// Occurrence counts over the terms whose document frequency is at least
/// `min_df`. The vocabulary is sorted lexicographically.
pub fn build_bow(tweets: &[Tweet], min_df: usize) -> Result<DocTermMatrix> {
    if tweets.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for t in tweets {
        let mut seen: Vec<&str> = t.tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for tok in seen {
            *df.entry(tok).or_default() += 1;
        }
    }
    let mut vocab: Vec<String> = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocab.is_empty() {
        return Err(Error::invalid(format!("no term reaches min_df = {min_df}")));
    }
    vocab.sort();
    let col: HashMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(j, t)| (t.as_str(), j))
        .collect();

    let mut trip = Vec::new();
    for (i, t) in tweets.iter().enumerate() {
        for tok in &t.tokens {
            if let Some(&j) = col.get(tok.as_str()) {
                trip.push((i, j, 1.0));
            }
        }
    }
    let n = tweets.len();
    DocTermMatrix::from_triplets(n, vocab, trip, Weighting::Counts)
}

/// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Weights counts by smoothed idf and scales each row to unit L2 norm.
pub fn build_tfidf(bow: &DocTermMatrix) -> Result<DocTermMatrix> {
    if bow.weighting != Weighting::Counts {
        return Err(Error::invalid("tf-idf needs a count matrix"));
    }
    let n = bow.nrows();
    let idf: Vec<f64> = bow
        .document_frequencies()
        .into_iter()
        .map(|d| smoothed_idf(n, d))
        .collect();
    let mut out = bow.clone();
    out.weighting = Weighting::TfIdf;
    for i in 0..n {
        let span = out.indptr[i]..out.indptr[i + 1];
        let mut norm = 0.0;
        for k in span.clone() {
            out.values[k] *= idf[out.indices[k]];
            norm += out.values[k] * out.values[k];
        }
        let norm = norm.sqrt();
        if norm > 0.0 {
            out.values[span].iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(out)
}
