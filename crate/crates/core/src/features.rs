//! Dense representation matrices and their on-disk formats.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major `N × F` matrix of per-tweet features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    pub label: String,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{rows}x{cols} = {} values", rows * cols),
                data.len(),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at row {}, column {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            label: label.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(format!("{cols} columns"), bad.len()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data, label)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
            label: self.label.clone(),
        }
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.cols).map(|j| format!("f{j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in self.rows() {
            let vals: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = match lines.next() {
            Some(h) => h.map_err(|e| Error::io(path, e))?,
            None => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: 1,
                    message: "empty feature file".into(),
                })
            }
        };
        let cols = header.split(',').count();
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| Error::Format {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("not a number: {field:?}"),
                })?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("expected {cols} fields, found {}", data.len() - before),
                });
            }
            rows += 1;
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(rows, cols, data, label)
    }

    /// Binary layout: `FEAT`, u32 N, u32 1, u32 F, then N·F little-endian f32.
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        write_header(&mut w, b"FEAT", self.rows as u32, 1, self.cols as u32)?;
        for v in &self.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (count, rows, dim, body) = parse_header(path, &bytes, b"FEAT")?;
        let cols = rows as usize * dim as usize;
        let data = read_f32s(path, body, count as usize * cols)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(count as usize, cols, data, label)
    }
}

pub(crate) fn write_header(
    w: &mut impl Write,
    magic: &[u8; 4],
    count: u32,
    rows: u32,
    dim: u32,
) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())
}

pub(crate) fn parse_header<'a>(
    path: &Path,
    bytes: &'a [u8],
    magic: &[u8; 4],
) -> Result<(u32, u32, u32, &'a [u8])> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if bytes.len() < 16 {
        return Err(bad("file shorter than the 16-byte header".into()));
    }
    if &bytes[..4] != magic {
        return Err(bad(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut fields = [0u32; 3];
    let mut cursor = &bytes[4..16];
    for f in &mut fields {
        let mut b = [0u8; 4];
        cursor.read_exact(&mut b).expect("header length checked");
        *f = u32::from_le_bytes(b);
    }
    Ok((fields[0], fields[1], fields[2], &bytes[16..]))
}

pub(crate) fn read_f32s(path: &Path, body: &[u8], n: usize) -> Result<Vec<f64>> {
    if body.len() != n * 4 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("expected {} payload bytes, found {}", n * 4, body.len()),
        });
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}
