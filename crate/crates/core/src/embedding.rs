//! Pretrained word-vector tables and the fixed-size input matrices fed to the
//! autoencoder.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::Tweet;
use crate::error::{Error, Result};
use crate::features::{parse_header, read_f32s, write_header};

/// Maximum number of tokens per tweet; shorter tweets are zero padded.
pub const SEQ_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Unknown tokens become zero rows.
    #[default]
    Zeros,
    /// Unknown tokens are the mean of whichever of their character 3..6-grams
    /// (with `<`/`>` word boundaries) the table contains; zeros if none.
    SubwordLookup,
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub name: String,
    dim: usize,
    index: HashMap<String, usize>,
    // f32 keeps million-word tables within desktop memory.
    vectors: Vec<f32>,
    pub oov_policy: OovPolicy,
}

impl EmbeddingTable {
    pub fn from_entries(
        name: impl Into<String>,
        dim: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut table = EmbeddingTable {
            name: name.into(),
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
            oov_policy: OovPolicy::Zeros,
        };
        for (tok, v) in entries {
            if v.len() != dim {
                return Err(Error::shape(format!("vector of length {dim}"), v.len()));
            }
            table.insert(tok, v.iter().map(|&x| x as f32));
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, values: impl Iterator<Item = f32>) {
        if self.index.contains_key(&token) {
            return;
        }
        self.index.insert(token, self.vectors.len() / self.dim);
        self.vectors.extend(values);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn with_policy(mut self, policy: OovPolicy) -> Self {
        self.oov_policy = policy;
        self
    }

    /// Writes the vector for `token` into `row`; returns false if the token
    /// was out of vocabulary and nothing could be composed.
    fn fill_row(&self, token: &str, row: &mut [f64]) -> bool {
        if let Some(v) = self.get(token) {
            row.iter_mut().zip(v).for_each(|(r, &x)| *r = x as f64);
            return true;
        }
        match self.oov_policy {
            OovPolicy::Zeros => false,
            OovPolicy::SubwordLookup => {
                let mut hits = 0usize;
                for gram in char_ngrams(token, 3, 6) {
                    if let Some(v) = self.get(&gram) {
                        row.iter_mut().zip(v).for_each(|(r, &x)| *r += x as f64);
                        hits += 1;
                    }
                }
                if hits > 0 {
                    row.iter_mut().for_each(|r| *r /= hits as f64);
                }
                hits > 0
            }
        }
    }
}

fn char_ngrams(token: &str, min: usize, max: usize) -> Vec<String> {
    let chars: Vec<char> = format!("<{token}>").chars().collect();
    let mut out = Vec::new();
    for n in min..=max {
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

/// Loads a text vector file (`token v1 ... vD` per line, with an optional
/// `count dim` header). The first occurrence of a duplicated token wins.
pub fn load_table(path: &Path) -> Result<EmbeddingTable> {
    load_table_filtered(path, None)
}

/// Like [`load_table`] but keeps only tokens in `keep`, which bounds memory
/// for large pretrained files.
pub fn load_table_filtered(path: &Path, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let fmt_err = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut dim: Option<usize> = None;
    let mut table: Option<EmbeddingTable> = None;
    let mut seen_content = false;
    let mut values: Vec<f32> = Vec::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line");
        let rest: Vec<&str> = fields.collect();

        if !seen_content {
            seen_content = true;
            if rest.len() == 1 {
                if let (Ok(_), Ok(d)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                    if d == 0 {
                        return Err(fmt_err(lineno, "header declares dimension 0".into()));
                    }
                    dim = Some(d);
                    continue;
                }
            }
        }

        let d = *dim.get_or_insert(rest.len());
        if d == 0 {
            return Err(fmt_err(lineno, "line has no vector values".into()));
        }
        if rest.len() != d {
            return Err(fmt_err(
                lineno,
                format!("expected {d} values, found {}", rest.len()),
            ));
        }
        let table = table.get_or_insert_with(|| EmbeddingTable {
            name: name.clone(),
            dim: d,
            index: HashMap::new(),
            vectors: Vec::new(),
            oov_policy: OovPolicy::Zeros,
        });
        if keep.is_some_and(|k| !k.contains(token)) || table.index.contains_key(token) {
            continue;
        }
        values.clear();
        for f in &rest {
            let v: f32 = f
                .parse()
                .map_err(|_| fmt_err(lineno, format!("not a number: {f:?}")))?;
            values.push(v);
        }
        table.insert(token.to_string(), values.iter().copied());
    }

    match (table, dim) {
        (Some(t), _) => Ok(t),
        (None, Some(d)) if seen_content => Ok(EmbeddingTable {
            name,
            dim: d,
            index: HashMap::new(),
            vectors: Vec::new(),
            oov_policy: OovPolicy::Zeros,
        }),
        _ => Err(fmt_err(0, "empty embedding file".into())),
    }
}

/// A `32 × D` zero-padded stack of word vectors for one tweet.
#[derive(Debug, Clone, PartialEq)]
pub struct TweetTensor {
    dim: usize,
    values: Vec<f64>,
    used_rows: usize,
}

impl TweetTensor {
    pub fn zeros(dim: usize) -> Self {
        TweetTensor {
            dim,
            values: vec![0.0; SEQ_LEN * dim],
            used_rows: 0,
        }
    }

    /// Builds a tensor from a row-major `32 × dim` buffer. `used_rows` is
    /// the count of rows up to and including the last nonzero one.
    pub fn from_values(dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != SEQ_LEN * dim {
            return Err(Error::shape(format!("{SEQ_LEN}x{dim}"), values.len()));
        }
        let used_rows = (0..SEQ_LEN)
            .rev()
            .find(|&r| values[r * dim..(r + 1) * dim].iter().any(|&v| v != 0.0))
            .map_or(0, |r| r + 1);
        Ok(TweetTensor {
            dim,
            values,
            used_rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        SEQ_LEN
    }

    pub fn used_rows(&self) -> usize {
        self.used_rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Looks up each token; tokens beyond the 32nd are dropped.
pub fn embed_tweet(tokens: &[String], table: &EmbeddingTable) -> TweetTensor {
    let dim = table.dim();
    let mut t = TweetTensor::zeros(dim);
    let used = tokens.len().min(SEQ_LEN);
    for (r, tok) in tokens.iter().take(used).enumerate() {
        table.fill_row(tok, &mut t.values[r * dim..(r + 1) * dim]);
    }
    t.used_rows = used;
    t
}

pub fn tensorize_corpus(tweets: &[Tweet], table: &EmbeddingTable) -> Result<Vec<TweetTensor>> {
    if tweets.is_empty() {
        return Err(Error::invalid("cannot tensorize an empty corpus"));
    }
    Ok(tweets
        .iter()
        .map(|t| embed_tweet(&t.tokens, table))
        .collect())
}

/// Reads precomputed contextual token vectors, one line per token:
/// `doc_index position v1 ... vD`. Documents without lines stay all-zero.
pub fn load_contextual(path: &Path, n_docs: usize, dim: usize) -> Result<Vec<TweetTensor>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<TweetTensor> = (0..n_docs).map(|_| TweetTensor::zeros(dim)).collect();
    let fmt_err = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(fmt_err(
                lineno,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let doc: usize = fields[0]
            .parse()
            .map_err(|_| fmt_err(lineno, "bad document index".into()))?;
        let pos: usize = fields[1]
            .parse()
            .map_err(|_| fmt_err(lineno, "bad token position".into()))?;
        if doc >= n_docs {
            return Err(fmt_err(lineno, format!("document {doc} out of range")));
        }
        if pos >= SEQ_LEN {
            continue;
        }
        let t = &mut out[doc];
        for (slot, f) in t.values[pos * dim..(pos + 1) * dim]
            .iter_mut()
            .zip(&fields[2..])
        {
            *slot = f
                .parse()
                .map_err(|_| fmt_err(lineno, format!("not a number: {f:?}")))?;
        }
        t.used_rows = t.used_rows.max(pos + 1);
    }
    Ok(out)
}

/// Binary cache: `TWTE`, u32 count, u32 32, u32 D, then little-endian f32
/// values, tensor after tensor, row-major.
pub fn write_tensor_cache(tensors: &[TweetTensor], mut w: impl Write) -> std::io::Result<()> {
    let dim = tensors.first().map_or(0, |t| t.dim);
    write_header(
        &mut w,
        b"TWTE",
        tensors.len() as u32,
        SEQ_LEN as u32,
        dim as u32,
    )?;
    for t in tensors {
        for v in &t.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensor_cache(path: &Path) -> Result<Vec<TweetTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (count, rows, dim, body) = parse_header(path, &bytes, b"TWTE")?;
    if rows as usize != SEQ_LEN {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("expected {SEQ_LEN} rows per tensor, header says {rows}"),
        });
    }
    let per = SEQ_LEN * dim as usize;
    let flat = read_f32s(path, body, count as usize * per)?;
    flat.chunks_exact(per.max(1))
        .take(count as usize)
        .map(|c| TweetTensor::from_values(dim as usize, c.to_vec()))
        .collect()
}
