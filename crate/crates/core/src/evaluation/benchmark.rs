use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::DocTermMatrix;
use crate::clustering::{self, subsample_indices, Algorithm, Points};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// A representation is either a dense reduced matrix or a raw sparse
/// document-term matrix.
#[derive(Debug, Clone)]
pub enum Features {
    Dense(FeatureMatrix),
    Sparse(DocTermMatrix),
}

impl Features {
    pub fn select_rows(&self, idx: &[usize]) -> Features {
        match self {
            Features::Dense(m) => Features::Dense(m.select_rows(idx)),
            Features::Sparse(m) => Features::Sparse(m.select_rows(idx)),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Features::Dense($m) => $e,
            Features::Sparse($m) => $e,
        }
    };
}

impl Points for Features {
    fn len(&self) -> usize {
        delegate!(self, m => Points::len(m))
    }
    fn dim(&self) -> usize {
        delegate!(self, m => Points::dim(m))
    }
    fn sq_norm(&self, i: usize) -> f64 {
        delegate!(self, m => m.sq_norm(i))
    }
    fn dot_dense(&self, i: usize, v: &[f64]) -> f64 {
        delegate!(self, m => m.dot_dense(i, v))
    }
    fn dot(&self, i: usize, j: usize) -> f64 {
        delegate!(self, m => m.dot(i, j))
    }
    fn add_to(&self, i: usize, acc: &mut [f64]) {
        delegate!(self, m => m.add_to(i, acc))
    }
    fn sq_dist_dense(&self, i: usize, c: &[f64], c_sq: f64) -> f64 {
        delegate!(self, m => m.sq_dist_dense(i, c, c_sq))
    }
    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        delegate!(self, m => m.sq_dist(i, j))
    }
}

#[derive(Debug, Clone)]
pub struct Representation {
    pub name: String,
    pub features: Features,
}

impl Representation {
    pub fn dense(name: impl Into<String>, m: FeatureMatrix) -> Self {
        Representation {
            name: name.into(),
            features: Features::Dense(m),
        }
    }

    pub fn sparse(name: impl Into<String>, m: DocTermMatrix) -> Self {
        Representation {
            name: name.into(),
            features: Features::Sparse(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub ks: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Rows drawn (per seed) before any clustering.
    pub subsample: Option<usize>,
    /// Further per-algorithm caps; the dense affinity and the condensed
    /// distance matrix are quadratic in N.
    pub spectral_max_n: Option<usize>,
    pub ward_max_n: Option<usize>,
    pub gamma: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            ks: vec![10, 20, 50],
            algorithms: Algorithm::ALL.to_vec(),
            seeds: vec![0],
            subsample: None,
            spectral_max_n: Some(20_000),
            ward_max_n: Some(20_000),
            gamma: None,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub representation: String,
    pub features: usize,
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    /// Rows actually clustered after subsampling.
    pub n: usize,
    pub ch_score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub config: BenchmarkConfig,
    pub representations: Vec<(String, usize, usize)>,
    pub created_at: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: RunMetadata,
    pub rows: Vec<BenchmarkRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub representation: String,
    pub algorithm: Algorithm,
    pub k: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub runs: usize,
}

fn config_hash(config: &BenchmarkConfig, reps: &[(String, usize, usize)]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(serde_json::to_vec(reps).expect("names serialize"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Distinct stream for the per-algorithm cap so it does not coincide with
/// the global subsample.
const CAP_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn run_cell(rep: &Representation, algorithm: Algorithm, k: usize, seed: u64, config: &BenchmarkConfig) -> BenchmarkRow {
    let n_all = rep.features.len();
    let mut idx: Option<Vec<usize>> = config
        .subsample
        .filter(|&m| m < n_all)
        .map(|m| subsample_indices(n_all, m, seed));
    let cap = match algorithm {
        Algorithm::Spectral => config.spectral_max_n,
        Algorithm::Ward => config.ward_max_n,
        Algorithm::KMeans => None,
    };
    let n_now = idx.as_ref().map_or(n_all, Vec::len);
    if let Some(c) = cap.filter(|&c| c < n_now) {
        let pick = subsample_indices(n_now, c, seed ^ CAP_STREAM);
        idx = Some(match idx {
            Some(prev) => pick.iter().map(|&i| prev[i]).collect(),
            None => pick,
        });
    }
    let owned;
    let x: &Features = match &idx {
        Some(i) => {
            owned = rep.features.select_rows(i);
            &owned
        }
        None => &rep.features,
    };
    let outcome = (|| {
        let result = match algorithm {
            Algorithm::Spectral => clustering::spectral(x, k, config.gamma, seed)?,
            other => clustering::cluster(x, other, k, seed)?,
        };
        super::ch_score(x, &result.labels, k).map(|r| r.score)
    })();
    if let Err(e) = &outcome {
        log::warn!("{} / {algorithm} / K={k} / seed {seed}: {e}", rep.name);
    }
    BenchmarkRow {
        representation: rep.name.clone(),
        features: x.dim(),
        algorithm,
        k,
        seed,
        n: x.len(),
        ch_score: outcome.as_ref().ok().copied(),
        error: outcome.err().map(|e| e.to_string()),
    }
}

/// Scores every (representation, algorithm, K, seed) cell. Rows come back
/// in grid order whatever the thread count; a failing cell is recorded
/// with its error instead of aborting the run.
pub fn run_benchmark(reps: &[Representation], config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if reps.is_empty() {
        return Err(Error::invalid("no representations to benchmark"));
    }
    let n = reps[0].features.len();
    if let Some(bad) = reps.iter().find(|r| r.features.len() != n) {
        return Err(Error::invalid(format!(
            "representation {:?} has {} rows, {:?} has {n}",
            bad.name,
            bad.features.len(),
            reps[0].name
        )));
    }
    let mut names = std::collections::HashSet::new();
    if let Some(dup) = reps.iter().find(|r| !names.insert(r.name.as_str())) {
        return Err(Error::invalid(format!("representation {:?} given twice", dup.name)));
    }
    if config.ks.is_empty() || config.algorithms.is_empty() || config.seeds.is_empty() {
        return Err(Error::invalid("benchmark grid is empty (no K, algorithm or seed)"));
    }

    let mut cells = Vec::new();
    for (r, _) in reps.iter().enumerate() {
        for &a in &config.algorithms {
            for &k in &config.ks {
                for &s in &config.seeds {
                    cells.push((r, a, k, s));
                }
            }
        }
    }
    let run = || -> Vec<BenchmarkRow> {
        cells
            .par_iter()
            .map(|&(r, a, k, s)| run_cell(&reps[r], a, k, s, config))
            .collect()
    };
    let rows = if config.jobs == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run)
    };

    let rep_meta: Vec<(String, usize, usize)> = reps
        .iter()
        .map(|r| (r.name.clone(), r.features.len(), r.features.dim()))
        .collect();
    Ok(BenchmarkReport {
        metadata: RunMetadata {
            config_hash: config_hash(config, &rep_meta),
            config: config.clone(),
            representations: rep_meta,
            created_at: chrono::Utc::now().to_rfc3339(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        rows,
    })
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("representation,features,algorithm,k,seed,ch_score\n");
        for r in &self.rows {
            let score = r.ch_score.map(|s| format!("{s:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{score}\n",
                r.representation, r.features, r.algorithm, r.k, r.seed
            ));
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        let failures: Vec<&BenchmarkRow> = self.rows.iter().filter(|r| r.error.is_some()).collect();
        let value = serde_json::json!({
            "metadata": self.metadata,
            "rows": self.rows.len(),
            "failures": failures,
        });
        serde_json::to_string_pretty(&value).expect("report serializes")
    }

    /// Mean and range over seeds, per (representation, algorithm, K).
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<(String, Algorithm, usize), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.representation.clone(), r.algorithm, r.k);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            let entry = groups.entry(key).or_default();
            if let Some(s) = r.ch_score {
                entry.push(s);
            }
        }
        order
            .into_iter()
            .filter_map(|key| {
                let v = &groups[&key];
                if v.is_empty() {
                    return None;
                }
                Some(SummaryRow {
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    runs: v.len(),
                    representation: key.0,
                    algorithm: key.1,
                    k: key.2,
                })
            })
            .collect()
    }

    pub fn summary_table(&self) -> String {
        let rows = self.summary();
        let width = rows.iter().map(|r| r.representation.len()).max().unwrap_or(0).max(14);
        let mut out = format!("{:<width$}  {:<8}  {:>4}  {:>12}  {:>12}  {:>4}\n", "representation", "algo", "k", "mean CH", "range", "runs");
        for r in rows {
            out.push_str(&format!(
                "{:<width$}  {:<8}  {:>4}  {:>12.3}  {:>12.3}  {:>4}\n",
                r.representation,
                r.algorithm.name(),
                r.k,
                r.mean,
                r.max - r.min,
                r.runs
            ));
        }
        out
    }

    /// Reads rows back from [`BenchmarkReport::to_csv`] output. The metadata
    /// is not part of the CSV and comes back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("representation,features,algorithm,k,seed,ch_score") {
            return Err(Error::invalid("not a benchmark report: unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::invalid(format!("report line {}: {line:?}", i + 2));
            // The representation name may itself contain commas.
            let f: Vec<&str> = line.rsplitn(6, ',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let score = f[0].trim();
            rows.push(BenchmarkRow {
                representation: f[5].to_string(),
                features: f[4].parse().map_err(|_| bad())?,
                algorithm: f[3].parse().map_err(|_| bad())?,
                k: f[2].parse().map_err(|_| bad())?,
                seed: f[1].parse().map_err(|_| bad())?,
                n: 0,
                ch_score: if score.is_empty() { None } else { Some(score.parse().map_err(|_| bad())?) },
                error: None,
            });
        }
        Ok(BenchmarkReport {
            metadata: RunMetadata {
                config_hash: String::new(),
                config: BenchmarkConfig::default(),
                representations: Vec::new(),
                created_at: String::new(),
                version: String::new(),
            },
            rows,
        })
    }

    /// Mean CH score of one representation over every scored cell.
    pub fn mean_score(&self, representation: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.representation == representation)
            .filter_map(|r| r.ch_score)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Evaluates `"a > b"` or `"a < b"` on mean CH scores.
pub fn check_assertion(report: &BenchmarkReport, expr: &str) -> Result<bool> {
    let (lhs, op, rhs) = if let Some((l, r)) = expr.split_once('>') {
        (l, '>', r)
    } else if let Some((l, r)) = expr.split_once('<') {
        (l, '<', r)
    } else {
        return Err(Error::invalid(format!("assertion {expr:?} is not of the form \"a > b\"")));
    };
    let score = |name: &str| {
        let name = name.trim();
        report
            .mean_score(name)
            .ok_or_else(|| Error::invalid(format!("no scored rows for representation {name:?}")))
    };
    let (a, b) = (score(lhs)?, score(rhs)?);
    Ok(if op == '>' { a > b } else { a < b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::testutil::blobs;

    fn grid() -> BenchmarkConfig {
        BenchmarkConfig {
            ks: vec![2, 3, 4],
            seeds: vec![1],
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn grid_has_one_row_per_cell_and_is_deterministic() {
        let (x, _) = blobs(&[vec![0.0, 0.0], vec![9.0, 0.0], vec![0.0, 9.0]], 20, 1.0, 1);
        let reps = vec![Representation::dense("a", x.clone()), Representation::dense("b", x)];
        let report = run_benchmark(&reps, &grid()).unwrap();
        assert_eq!(report.rows.len(), 18);
        for (ra, rb) in report.rows[..9].iter().zip(&report.rows[9..]) {
            assert_eq!(ra.ch_score, rb.ch_score);
            assert!(ra.ch_score.is_some(), "{:?}", ra.error);
        }
        assert!(report.to_csv().starts_with("representation,features,algorithm,k,seed,ch_score\na,2,kmeans,2,1,"));
        let again = run_benchmark(&reps, &BenchmarkConfig { jobs: 1, ..grid() }).unwrap();
        assert_eq!(again.to_csv(), report.to_csv());
        assert_eq!(again.metadata.config_hash, report.metadata.config_hash);
        assert_eq!(report.summary().len(), 18);
        assert!(check_assertion(&report, "a > b").is_ok_and(|v| !v));
        assert!(check_assertion(&report, "a > missing").is_err());
        let back = BenchmarkReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(back.to_csv(), report.to_csv());
        assert!(BenchmarkReport::from_csv("x,y\n").is_err());
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let (x, _) = blobs(&[vec![0.0]], 10, 1.0, 1);
        let reps = vec![
            Representation::dense("a", x.clone()),
            Representation::dense("b", x.select_rows(&[0, 1, 2])),
        ];
        assert!(run_benchmark(&reps, &grid()).is_err());
    }

    #[test]
    fn subsampling_caps_rows() {
        let (x, _) = blobs(&[vec![0.0, 0.0], vec![9.0, 9.0]], 50, 1.0, 2);
        let cfg = BenchmarkConfig {
            ks: vec![2],
            subsample: Some(60),
            spectral_max_n: Some(30),
            ..BenchmarkConfig::default()
        };
        let report = run_benchmark(&[Representation::dense("x", x)], &cfg).unwrap();
        let ns: Vec<usize> = report.rows.iter().map(|r| r.n).collect();
        assert_eq!(ns, vec![60, 60, 30]);
    }
}
