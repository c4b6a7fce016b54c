//! TOML run configuration for the command-line tool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::Algorithm;
use crate::error::{Error, Result};
use crate::evaluation::BenchmarkConfig;
use crate::pipeline::{EmbeddingSource, FeaturizeOptions, Method};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaeSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub methods: Vec<String>,
    pub feature_count: usize,
    pub min_df: usize,
    pub ks: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    /// Empty means the global `--seed`.
    pub seeds: Vec<u64>,
    /// Seeded subset size used by both `featurize` and `benchmark`.
    pub subsample: Option<usize>,
    pub spectral_max_n: Option<usize>,
    pub ward_max_n: Option<usize>,
    pub jobs: usize,
    /// Embedding name to file. Names ending in `bert` (or listed in
    /// `contextual`) are read as per-tweet contextual vectors.
    pub embeddings: BTreeMap<String, PathBuf>,
    pub contextual: Vec<String>,
    pub cae: CaeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchmarkConfig::default();
        RunConfig {
            corpus: None,
            output_dir: PathBuf::from("out"),
            methods: ["bow", "tfidf", "tfidf+pca", "tfidf+lda", "tfidf+nmf"]
                .map(String::from)
                .to_vec(),
            feature_count: 24,
            min_df: 1,
            ks: bench.ks,
            algorithms: bench.algorithms,
            seeds: Vec::new(),
            subsample: None,
            spectral_max_n: bench.spectral_max_n,
            ward_max_n: bench.ward_max_n,
            jobs: 0,
            embeddings: BTreeMap::new(),
            contextual: Vec::new(),
            cae: CaeSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let methods = self.parsed_methods()?;
        let missing: Vec<String> = methods
            .iter()
            .filter_map(|m| m.embedding())
            .filter(|e| !self.embeddings.contains_key(*e))
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "no [embeddings] path for: {}",
                missing.join(", ")
            )));
        }
        if self.feature_count == 0 {
            return Err(Error::invalid("feature_count must be positive"));
        }
        if self.ks.iter().any(|&k| k < 2) {
            return Err(Error::invalid("every k must be at least 2"));
        }
        Ok(())
    }

    pub fn embedding_source(&self, name: &str) -> Option<EmbeddingSource> {
        self.embeddings.get(name).map(|p| EmbeddingSource {
            contextual: is_contextual(name) || self.contextual.iter().any(|c| c == name),
            ..EmbeddingSource::table(p)
        })
    }

    pub fn featurize_options(&self, seed: u64) -> FeaturizeOptions {
        FeaturizeOptions {
            feature_count: self.feature_count,
            min_df: self.min_df,
            seed,
            cae_epochs: self.cae.epochs,
            cae_learning_rate: self.cae.learning_rate,
            cae_batch_size: self.cae.batch_size,
            ..FeaturizeOptions::default()
        }
    }

    pub fn benchmark_config(&self, seed: u64) -> BenchmarkConfig {
        BenchmarkConfig {
            ks: self.ks.clone(),
            algorithms: self.algorithms.clone(),
            seeds: if self.seeds.is_empty() { vec![seed] } else { self.seeds.clone() },
            subsample: self.subsample,
            spectral_max_n: self.spectral_max_n,
            ward_max_n: self.ward_max_n,
            jobs: self.jobs,
            ..BenchmarkConfig::default()
        }
    }

    /// Where `featurize` writes, and `benchmark` looks for, a method's features.
    pub fn artifact_path(&self, method: &Method) -> PathBuf {
        artifact_path(&self.output_dir, method)
    }
}

pub fn is_contextual(name: &str) -> bool {
    name.to_ascii_lowercase().ends_with("bert")
}

pub fn artifact_path(dir: &Path, method: &Method) -> PathBuf {
    let ext = match method {
        Method::Raw(_) => "mtx",
        _ => "csv",
    };
    dir.join(format!("{method}.{ext}"))
}
