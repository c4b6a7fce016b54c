//! Method names, featurization dispatch and artifact I/O shared by the
//! command-line tool and the C interface.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baseline::{
    build_bow, build_tfidf, lda_fit_transform, nmf_fit_transform, pca_reduce, tsvd_reduce,
    DocTermMatrix, Weighting,
};
use crate::cae::{self, CaeConfig, CaeModel, Tensor3, Trained};
use crate::clustering::subsample_indices;
use crate::corpus::Tweet;
use crate::embedding::{self, SEQ_LEN};
use crate::error::{Error, Result};
use crate::evaluation::Features;
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Base {
    Bow,
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reducer {
    Pca,
    Tsvd,
    Lda,
    Nmf,
}

/// One featurization, named like `tfidf`, `bow+nmf` or `fasttext+l2cae`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Method {
    Raw(Base),
    Reduced(Base, Reducer),
    Cae { embedding: String, constrained: bool },
}

fn parse_base(s: &str) -> Option<Base> {
    match s {
        "bow" => Some(Base::Bow),
        "tfidf" | "tf-idf" => Some(Base::TfIdf),
        _ => None,
    }
}

fn parse_reducer(s: &str) -> Option<Reducer> {
    match s {
        "pca" => Some(Reducer::Pca),
        "tsvd" | "t-svd" | "lsa" => Some(Reducer::Tsvd),
        "lda" => Some(Reducer::Lda),
        "nmf" => Some(Reducer::Nmf),
        _ => None,
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = lower.split('+').map(str::trim).collect();
        let bad = |why: &str| Error::invalid(format!("bad method {s:?}: {why}"));
        match parts.as_slice() {
            [one] => {
                if let Some(b) = parse_base(one) {
                    return Ok(Method::Raw(b));
                }
                if parse_reducer(one).is_some() {
                    return Err(bad("name the base weighting, e.g. tfidf+lda"));
                }
                if matches!(*one, "cae" | "l2cae" | "l2-cae") {
                    return Err(bad("name the embedding table, e.g. fasttext+cae"));
                }
                Err(bad("unknown method"))
            }
            [left, right] => {
                if let (Some(b), Some(r)) = (parse_base(left), parse_reducer(right)) {
                    return Ok(Method::Reduced(b, r));
                }
                let constrained = match *right {
                    "cae" => false,
                    "l2cae" | "l2-cae" => true,
                    _ => return Err(bad("expected <base>+<pca|tsvd|lda|nmf> or <embedding>+<cae|l2cae>")),
                };
                if left.is_empty() || parse_base(left).is_some() {
                    return Err(bad("autoencoders take an embedding table, not a weighting"));
                }
                Ok(Method::Cae {
                    embedding: left.to_string(),
                    constrained,
                })
            }
            _ => Err(bad("too many '+' parts")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = |b: &Base| match b {
            Base::Bow => "bow",
            Base::TfIdf => "tfidf",
        };
        match self {
            Method::Raw(b) => f.write_str(base(b)),
            Method::Reduced(b, r) => {
                let r = match r {
                    Reducer::Pca => "pca",
                    Reducer::Tsvd => "tsvd",
                    Reducer::Lda => "lda",
                    Reducer::Nmf => "nmf",
                };
                write!(f, "{}+{r}", base(b))
            }
            Method::Cae {
                embedding,
                constrained,
            } => write!(f, "{embedding}+{}", if *constrained { "l2cae" } else { "cae" }),
        }
    }
}

impl Method {
    pub fn embedding(&self) -> Option<&str> {
        match self {
            Method::Cae { embedding, .. } => Some(embedding),
            _ => None,
        }
    }
}

/// A corpus, possibly a seeded subsample of a larger one. `rows` are the
/// positions of the kept tweets in the full corpus.
#[derive(Debug, Clone)]
pub struct CorpusView {
    pub tweets: Vec<Tweet>,
    pub rows: Vec<usize>,
    pub total: usize,
}

impl CorpusView {
    pub fn full(tweets: Vec<Tweet>) -> Self {
        let total = tweets.len();
        CorpusView {
            tweets,
            rows: (0..total).collect(),
            total,
        }
    }

    pub fn subsample(tweets: Vec<Tweet>, m: Option<usize>, seed: u64) -> Self {
        let total = tweets.len();
        match m {
            Some(m) if m < total => {
                let rows = subsample_indices(total, m, seed);
                let keep: HashSet<usize> = rows.iter().copied().collect();
                let tweets = tweets
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| keep.contains(i))
                    .map(|(_, t)| t)
                    .collect();
                CorpusView { tweets, rows, total }
            }
            _ => Self::full(tweets),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    /// Per-tweet contextual vectors (`doc position v1..vD` lines) rather
    /// than a word table.
    pub contextual: bool,
    pub contextual_dim: usize,
}

impl EmbeddingSource {
    pub fn table(path: impl Into<PathBuf>) -> Self {
        EmbeddingSource {
            path: path.into(),
            contextual: false,
            contextual_dim: 768,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeaturizeOptions {
    pub feature_count: usize,
    pub min_df: usize,
    pub seed: u64,
    pub lda_passes: usize,
    pub nmf_iters: usize,
    pub cae_epochs: Option<usize>,
    pub cae_learning_rate: Option<f64>,
    pub cae_batch_size: Option<usize>,
}

impl Default for FeaturizeOptions {
    fn default() -> Self {
        FeaturizeOptions {
            feature_count: 24,
            min_df: 1,
            seed: 0,
            lda_passes: 5,
            nmf_iters: 200,
            cae_epochs: None,
            cae_learning_rate: None,
            cae_batch_size: None,
        }
    }
}

pub enum Artifact {
    Dense(FeatureMatrix),
    Sparse(DocTermMatrix),
    Cae {
        features: FeatureMatrix,
        trained: Box<Trained>,
    },
}

impl Artifact {
    pub fn rows(&self) -> usize {
        match self {
            Artifact::Dense(m) | Artifact::Cae { features: m, .. } => m.nrows(),
            Artifact::Sparse(m) => m.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Artifact::Dense(m) | Artifact::Cae { features: m, .. } => m.ncols(),
            Artifact::Sparse(m) => m.ncols(),
        }
    }
}

/// CAE inputs for the view: word-table lookups or stored contextual vectors.
pub fn cae_inputs(view: &CorpusView, source: &EmbeddingSource) -> Result<(usize, Vec<Tensor3>)> {
    let tensors = if source.contextual {
        let mut all = embedding::load_contextual(&source.path, view.total, source.contextual_dim)?;
        view.rows.iter().map(|&r| std::mem::replace(&mut all[r], embedding::TweetTensor::zeros(0))).collect()
    } else {
        let vocab: HashSet<String> = view.tweets.iter().flat_map(|t| t.tokens.iter().cloned()).collect();
        let table = embedding::load_table_filtered(&source.path, Some(&vocab))?;
        log::info!("{} of {} corpus words found in {}", table.len(), vocab.len(), source.path.display());
        embedding::tensorize_corpus(&view.tweets, &table)?
    };
    let dim = tensors.first().map(|t| t.dim()).ok_or_else(|| Error::invalid("empty corpus"))?;
    let inputs = tensors
        .into_iter()
        .map(|t| Tensor3::from_vec(1, SEQ_LEN, dim, t.into_values()))
        .collect::<Result<Vec<_>>>()?;
    Ok((dim, inputs))
}

pub fn cae_config(dim: usize, constrained: bool, opts: &FeaturizeOptions) -> Result<CaeConfig> {
    let mut cfg = CaeConfig::for_embedding_dim(dim)?
        .constrained(constrained)
        .with_seed(opts.seed);
    if let Some(e) = opts.cae_epochs {
        cfg.max_epochs = e;
    }
    if let Some(lr) = opts.cae_learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = opts.cae_batch_size {
        cfg.batch_size = b;
    }
    Ok(cfg)
}

pub fn encode_all(model: &CaeModel, inputs: &[Tensor3], label: &str) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = inputs.par_iter().map(|x| model.encode(x)).collect::<Result<_>>()?;
    FeatureMatrix::new(rows.len(), model.config.representation_len(), rows.concat(), label)
}

/// Trains an autoencoder on the view and encodes every tweet with the
/// best-validation checkpoint.
pub fn train_cae(
    view: &CorpusView,
    source: &EmbeddingSource,
    constrained: bool,
    opts: &FeaturizeOptions,
    progress: impl FnMut(usize, f64, f64),
) -> Result<(FeatureMatrix, Trained)> {
    let (dim, inputs) = cae_inputs(view, source)?;
    let cfg = cae_config(dim, constrained, opts)?;
    let trained = cae::train_tensors(CaeModel::new(cfg)?, &inputs, progress)?;
    let label = if constrained { "l2cae" } else { "cae" };
    let features = encode_all(&trained.model, &inputs, label)?;
    Ok((features, trained))
}

pub fn featurize(
    view: &CorpusView,
    method: &Method,
    source: Option<&EmbeddingSource>,
    opts: &FeaturizeOptions,
) -> Result<Artifact> {
    let label = method.to_string();
    let weighted = |b: Base| -> Result<DocTermMatrix> {
        let bow = build_bow(&view.tweets, opts.min_df)?;
        match b {
            Base::Bow => Ok(bow),
            Base::TfIdf => build_tfidf(&bow),
        }
    };
    let mut artifact = match method {
        Method::Raw(b) => Artifact::Sparse(weighted(*b)?),
        Method::Reduced(b, r) => {
            let x = weighted(*b)?;
            let f = opts.feature_count;
            Artifact::Dense(match r {
                Reducer::Pca => pca_reduce(&x, f)?,
                Reducer::Tsvd => tsvd_reduce(&x, f, opts.seed)?,
                Reducer::Lda => lda_fit_transform(&x, f, opts.lda_passes, opts.seed)?,
                Reducer::Nmf => nmf_fit_transform(&x, f, opts.nmf_iters, opts.seed)?,
            })
        }
        Method::Cae {
            embedding,
            constrained,
        } => {
            let source = source.ok_or_else(|| {
                Error::invalid(format!("method {label} needs a path for the {embedding:?} embeddings"))
            })?;
            let (features, trained) = train_cae(view, source, *constrained, opts, |_, _, _| {})?;
            Artifact::Cae {
                features,
                trained: Box::new(trained),
            }
        }
    };
    match &mut artifact {
        Artifact::Dense(m) | Artifact::Cae { features: m, .. } => m.label = label,
        Artifact::Sparse(_) => {}
    }
    Ok(artifact)
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn vocab_path(mtx: &Path) -> PathBuf {
    sibling(mtx, ".vocab")
}

pub fn checkpoint_path(features: &Path) -> PathBuf {
    features.with_extension("cae")
}

pub fn curve_path(features: &Path) -> PathBuf {
    features.with_extension("curve.csv")
}

pub fn write_dense(path: &Path, m: &FeatureMatrix) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("feat") | Some("bin") => {
            let mut buf = Vec::new();
            m.write_binary(&mut buf).map_err(|e| Error::io(path, e))?;
            write_atomic(path, &buf)
        }
        _ => write_atomic(path, m.to_csv().as_bytes()),
    }
}

/// Writes an artifact; autoencoder runs also leave a checkpoint and a
/// learning-curve CSV next to the features.
pub fn write_artifact(path: &Path, artifact: &Artifact) -> Result<Vec<PathBuf>> {
    let mut written = vec![path.to_path_buf()];
    match artifact {
        Artifact::Dense(m) => write_dense(path, m)?,
        Artifact::Sparse(m) => {
            write_atomic(path, m.to_matrix_market().as_bytes())?;
            let vp = vocab_path(path);
            write_atomic(&vp, (m.vocab().join("\n") + "\n").as_bytes())?;
            written.push(vp);
        }
        Artifact::Cae { features, trained } => {
            write_dense(path, features)?;
            let cp = checkpoint_path(path);
            let mut buf = Vec::new();
            cae::write_checkpoint(&trained.model, &mut buf).map_err(|e| Error::io(&cp, e))?;
            write_atomic(&cp, &buf)?;
            let lc = curve_path(path);
            write_atomic(&lc, trained.curve.to_csv().as_bytes())?;
            written.push(cp);
            written.push(lc);
        }
    }
    Ok(written)
}

fn mtx_columns(path: &Path) -> Result<usize> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('%') || line.trim().is_empty() {
            continue;
        }
        return line
            .split_whitespace()
            .nth(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: "bad size line".into(),
            });
    }
    Err(Error::Format {
        path: path.to_path_buf(),
        line: 0,
        message: "missing size line".into(),
    })
}

/// Loads a feature artifact by extension: `.mtx` (sparse, with an optional
/// `.vocab` sibling), `.feat`/`.bin` (binary) or CSV.
pub fn load_features(path: &Path) -> Result<Features> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => {
            let vp = vocab_path(path);
            let vocab: Vec<String> = if vp.exists() {
                fs::read_to_string(&vp)
                    .map_err(|e| Error::io(&vp, e))?
                    .lines()
                    .map(str::to_string)
                    .collect()
            } else {
                (0..mtx_columns(path)?).map(|j| format!("t{j}")).collect()
            };
            Ok(Features::Sparse(DocTermMatrix::read_matrix_market(path, vocab, Weighting::Counts)?))
        }
        Some("feat") | Some("bin") => Ok(Features::Dense(FeatureMatrix::read_binary(path)?)),
        _ => Ok(Features::Dense(FeatureMatrix::read_csv(path)?)),
    }
}

/// Reads a `row_index,label` CSV.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected row_index,label, found {line:?}"),
        };
        let (r, l) = line.split_once(',').ok_or_else(bad)?;
        let r: usize = r.trim().parse().map_err(|_| bad())?;
        if r != labels.len() {
            return Err(bad());
        }
        labels.push(l.trim().parse().map_err(|_| bad())?);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_grammar() {
        for (s, canon) in [
            ("bow", "bow"),
            ("TF-IDF", "tfidf"),
            ("tfidf+lda", "tfidf+lda"),
            ("bow + t-svd", "bow+tsvd"),
            ("fasttext+l2cae", "fasttext+l2cae"),
            ("glove+CAE", "glove+cae"),
        ] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), canon);
        }
        for bad in ["lda", "cae", "tfidf+cae", "foo", "a+b+c", "+cae", "tfidf+kmeans"] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
    }

    #[test]
    fn atomic_write_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/labels.csv");
        write_atomic(&p, b"row_index,label\n0,1\n1,0\n").unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![1, 0]);
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
        write_atomic(&p, b"row_index,label\n1,1\n").unwrap();
        assert!(read_labels(&p).is_err());
    }

    fn tweet(tokens: &[&str]) -> Tweet {
        Tweet {
            id: String::new(),
            channel: "c".into(),
            timestamp: chrono::Utc::now(),
            raw_text: String::new(),
            clean_text: tokens.join(" "),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn contextual_inputs_follow_corpus_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ctx.txt");
        let mut text = String::new();
        for doc in 0..4 {
            text.push_str(&format!("{doc} 0 {}\n", vec![format!("{}", doc + 1); 12].join(" ")));
        }
        fs::write(&path, text).unwrap();
        let tweets: Vec<Tweet> = (0..4).map(|_| tweet(&["a"])).collect();
        let view = CorpusView::subsample(tweets, Some(2), 3);
        let source = EmbeddingSource {
            contextual: true,
            contextual_dim: 12,
            ..EmbeddingSource::table(&path)
        };
        let (dim, inputs) = cae_inputs(&view, &source).unwrap();
        assert_eq!((dim, inputs.len()), (12, 2));
        for (x, &r) in inputs.iter().zip(&view.rows) {
            assert_eq!(x.data[0], (r + 1) as f64);
            assert_eq!(x.data[12], 0.0);
        }
    }

    #[test]
    fn table_inputs_and_featurize_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vec");
        fs::write(&path, "2 12\nflu 1 1 1 1 1 1 1 1 1 1 1 1\nshot 2 2 2 2 2 2 2 2 2 2 2 2\n").unwrap();
        let tweets = vec![tweet(&["flu", "shot"]), tweet(&["shot", "zzz"]), tweet(&["flu"])];
        let view = CorpusView::full(tweets);
        let (dim, inputs) = cae_inputs(&view, &EmbeddingSource::table(&path)).unwrap();
        assert_eq!(dim, 12);
        assert_eq!(inputs[1].data[0], 2.0);
        assert_eq!(inputs[1].data[12], 0.0);
        let opts = FeaturizeOptions {
            feature_count: 1,
            ..Default::default()
        };
        let art = featurize(&view, &"bow+tsvd".parse().unwrap(), None, &opts).unwrap();
        assert_eq!((art.rows(), art.cols()), (3, 1));
        let cae: Method = "fasttext+cae".parse().unwrap();
        assert!(featurize(&view, &cae, None, &opts).is_err());
    }

    #[test]
    fn derived_paths() {
        let p = Path::new("out/fasttext+l2cae.csv");
        assert_eq!(checkpoint_path(p), Path::new("out/fasttext+l2cae.cae"));
        assert_eq!(curve_path(p), Path::new("out/fasttext+l2cae.curve.csv"));
        assert_eq!(vocab_path(Path::new("o/bow.mtx")), Path::new("o/bow.mtx.vocab"));
    }
}
