//! Command-line front end. `main` parses [`Cli`] and hands it to [`run`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cae::{self, epochs_to_plateau};
use crate::clustering::{self, Algorithm};
use crate::config::{self, RunConfig};
use crate::corpus;
use crate::error::{Error, Result};
use crate::evaluation::{
    ch_score, check_assertion, hotelling_t2, run_benchmark, scatter_svg, BenchmarkReport, Features,
    Representation,
};
use crate::features::FeatureMatrix;
use crate::pipeline::{self, CorpusView, EmbeddingSource};

#[derive(Debug, Parser)]
#[command(name = "tweetcluster", version, about = "Autoencoder features for short health texts and a clustering benchmark")]
pub struct Cli {
    /// Default seed for every randomized step.
    #[arg(long, global = true, env = "TWEETCLUSTER_SEED", default_value_t = 0)]
    pub seed: u64,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read channel files into a JSON-lines corpus plus a stats CSV.
    Ingest(IngestArgs),
    /// Compute one or more feature representations of a corpus.
    Featurize(FeaturizeArgs),
    /// Train an autoencoder and save its checkpoint and learning curve.
    TrainCae(TrainCaeArgs),
    /// Cluster a feature file and write one label per row.
    Cluster(ClusterArgs),
    /// Score a labelling, or compare two feature sets with Hotelling's T².
    Evaluate(EvaluateArgs),
    /// Run every representation × algorithm × K × seed cell.
    Benchmark(BenchmarkArgs),
    /// Summarize a benchmark CSV; optionally draw a labelled scatter plot.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// A channel file or a directory of `.txt` channel files.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = '|')]
    pub delimiter: char,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.stats.csv`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CaeArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Repeatable, e.g. `tfidf+lda` or `fasttext+l2cae`. Defaults to the
    /// config's method list.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// `name=path` embedding files, e.g. `fasttext=cc.en.300.vec`.
    #[arg(long = "embeddings", value_parser = parse_named_path)]
    pub embeddings: Vec<(String, PathBuf)>,
    /// Output dimensionality of the reduced baselines.
    #[arg(long = "k")]
    pub feature_count: Option<usize>,
    #[arg(long)]
    pub min_df: Option<usize>,
    /// Output file; only with a single method.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Featurize a seeded random subset of this many tweets.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[command(flatten)]
    pub cae: CaeArgs,
}

#[derive(Debug, Args)]
pub struct TrainCaeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Word table (`word v1 .. vD`) or contextual vectors with `--contextual`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub contextual: bool,
    #[arg(long, default_value_t = 768)]
    pub contextual_dim: usize,
    /// Constrain the bottleneck to unit L2 norm.
    #[arg(long)]
    pub l2: bool,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the encoded features here.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Learning-curve CSV; defaults to next to the checkpoint.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[command(flatten)]
    pub cae: CaeArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = "kmeans")]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub k: usize,
    /// Spectral kernel width; defaults to 1/features.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "hotelling")]
    pub features: Option<PathBuf>,
    #[arg(long, requires = "features")]
    pub labels: Option<PathBuf>,
    /// Two dense feature files to compare.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with_all = ["features", "labels"])]
    pub hotelling: Option<Vec<PathBuf>>,
    /// Fall back to the pseudo-inverse for a singular pooled covariance.
    #[arg(long)]
    pub pinv: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// `name=path` feature files. Defaults to the config's methods, read
    /// from its output directory.
    #[arg(long = "features", value_parser = parse_named_path)]
    pub features: Vec<(String, PathBuf)>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<Algorithm>>,
    /// Defaults to the global seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub spectral_max_n: Option<usize>,
    #[arg(long)]
    pub ward_max_n: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report CSV; the JSON metadata goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Direction check on mean CH, e.g. `"fasttext+l2cae > fasttext+cae"`.
    #[arg(long = "assert")]
    pub assertions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Benchmark CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write a scatter plot of these features coloured by `--labels`.
    #[arg(long, requires_all = ["features", "labels"])]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.trim().is_empty() && !p.is_empty() => Ok((n.trim().to_string(), PathBuf::from(p))),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    AssertionFailed,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Featurize(a) => featurize(a, cfg, seed),
        Command::TrainCae(a) => train_cae(a, seed),
        Command::Cluster(a) => cluster(a, seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => benchmark(a, cfg, seed),
        Command::Report(a) => report(a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ingest(a: IngestArgs) -> Result<Outcome> {
    let ingested = corpus::ingest_path(&a.input, a.delimiter)?;
    if ingested.bad_timestamps + ingested.malformed > 0 {
        log::warn!(
            "skipped {} lines with bad timestamps and {} malformed lines",
            ingested.bad_timestamps,
            ingested.malformed
        );
    }
    let stats = corpus::stats(&ingested.tweets)?;
    let mut buf = Vec::new();
    corpus::write_jsonl(&ingested.tweets, &mut buf)?;
    pipeline::write_atomic(&a.out, &buf)?;
    let stats_path = a.stats.unwrap_or_else(|| with_suffix(&a.out, ".stats.csv"));
    pipeline::write_atomic(&stats_path, stats.to_csv().as_bytes())?;
    println!("{} tweets in {} channels", stats.total_tweets(), stats.channels.len());
    Ok(Outcome::Ok)
}

fn apply_cae_args(opts: &mut pipeline::FeaturizeOptions, c: &CaeArgs) {
    opts.cae_epochs = c.epochs.or(opts.cae_epochs);
    opts.cae_learning_rate = c.learning_rate.or(opts.cae_learning_rate);
    opts.cae_batch_size = c.batch_size.or(opts.cae_batch_size);
}

fn featurize(a: FeaturizeArgs, mut cfg: RunConfig, seed: u64) -> Result<Outcome> {
    for (name, path) in a.embeddings {
        cfg.embeddings.insert(name, path);
    }
    if !a.methods.is_empty() {
        cfg.methods = a.methods;
    }
    if let Some(f) = a.feature_count {
        cfg.feature_count = f;
    }
    if let Some(m) = a.min_df {
        cfg.min_df = m;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    cfg.validate()?;
    let methods = cfg.parsed_methods()?;
    if a.out.is_some() && methods.len() != 1 {
        return Err(Error::invalid("--out needs exactly one --method; use --output-dir for several"));
    }
    let corpus_path = a
        .corpus
        .or_else(|| cfg.corpus.clone())
        .ok_or_else(|| Error::invalid("no corpus given (--corpus or `corpus` in the config)"))?;
    let tweets = corpus::read_jsonl(&corpus_path)?;
    let subsample = a.subsample.or(cfg.subsample);
    let view = CorpusView::subsample(tweets, subsample, seed);
    let mut opts = cfg.featurize_options(seed);
    apply_cae_args(&mut opts, &a.cae);

    for method in &methods {
        let source = method.embedding().and_then(|e| cfg.embedding_source(e));
        log::info!("featurizing {} tweets with {method}", view.tweets.len());
        let artifact = pipeline::featurize(&view, method, source.as_ref(), &opts)?;
        let path = a.out.clone().unwrap_or_else(|| cfg.artifact_path(method));
        let written = pipeline::write_artifact(&path, &artifact)?;
        println!("{method}: {} × {} -> {}", artifact.rows(), artifact.cols(), written[0].display());
    }
    Ok(Outcome::Ok)
}

fn train_cae(a: TrainCaeArgs, seed: u64) -> Result<Outcome> {
    let tweets = corpus::read_jsonl(&a.corpus)?;
    let view = CorpusView::subsample(tweets, a.subsample, seed);
    let source = EmbeddingSource {
        path: a.embeddings,
        contextual: a.contextual,
        contextual_dim: a.contextual_dim,
    };
    let mut opts = pipeline::FeaturizeOptions {
        seed,
        ..Default::default()
    };
    apply_cae_args(&mut opts, &a.cae);
    let (features, trained) = pipeline::train_cae(&view, &source, a.l2, &opts, |epoch, train, val| {
        log::info!("epoch {epoch}: train {train:.6} validation {val:.6}");
    })?;
    let mut buf = Vec::new();
    cae::write_checkpoint(&trained.model, &mut buf).map_err(|e| Error::io(&a.out, e))?;
    pipeline::write_atomic(&a.out, &buf)?;
    let curve = a.curve.unwrap_or_else(|| pipeline::curve_path(&a.out));
    pipeline::write_atomic(&curve, trained.curve.to_csv().as_bytes())?;
    if let Some(p) = &a.features {
        pipeline::write_dense(p, &features)?;
    }
    let val = &trained.curve.val_loss;
    println!(
        "best epoch {} of {} (validation loss {:.6}); plateau at epoch {}",
        trained.best_epoch,
        val.len(),
        val.get(trained.best_epoch).copied().unwrap_or(f64::NAN),
        epochs_to_plateau(val, 0.05).map_or("-".to_string(), |e| e.to_string())
    );
    Ok(Outcome::Ok)
}

fn cluster(a: ClusterArgs, seed: u64) -> Result<Outcome> {
    let x = pipeline::load_features(&a.features)?;
    let result = match (a.algorithm, a.gamma) {
        (Algorithm::Spectral, Some(g)) => clustering::spectral(&x, a.k, Some(g), seed)?,
        (_, Some(_)) => return Err(Error::invalid("--gamma only applies to spectral clustering")),
        (alg, None) => clustering::cluster(&x, alg, a.k, seed)?,
    };
    pipeline::write_atomic(&a.out, result.to_csv().as_bytes())?;
    println!("{} rows in {} clusters, within-cluster SS {:.6}", result.labels.len(), result.k, result.objective);
    Ok(Outcome::Ok)
}

fn dense(path: &Path) -> Result<FeatureMatrix> {
    match pipeline::load_features(path)? {
        Features::Dense(m) => Ok(m),
        Features::Sparse(_) => Err(Error::invalid(format!("{} is sparse; a dense feature file is needed", path.display()))),
    }
}

fn evaluate(a: EvaluateArgs) -> Result<Outcome> {
    if let Some(pair) = &a.hotelling {
        let r = hotelling_t2(&dense(&pair[0])?, &dense(&pair[1])?, a.pinv)?;
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!("t2\t{:.6}", r.t2);
        println!("f\t{}", opt(r.f_stat));
        println!("df\t{} {}", r.df1, r.df2);
        println!("p\t{}", opt(r.p_value));
        return Ok(Outcome::Ok);
    }
    let (Some(features), Some(labels)) = (&a.features, &a.labels) else {
        return Err(Error::invalid("--features needs --labels (or use --hotelling A B)"));
    };
    let x = pipeline::load_features(features)?;
    let labels = pipeline::read_labels(labels)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let r = ch_score(&x, &labels, k)?;
    println!("ch\t{:.6}", r.score);
    println!("k\t{}", r.k);
    println!("n\t{}", r.n);
    Ok(Outcome::Ok)
}

fn benchmark(a: BenchmarkArgs, cfg: RunConfig, seed: u64) -> Result<Outcome> {
    let mut bench = cfg.benchmark_config(seed);
    if let Some(v) = a.ks {
        bench.ks = v;
    }
    if let Some(v) = a.algorithms {
        bench.algorithms = v;
    }
    if let Some(v) = a.seeds {
        bench.seeds = v;
    }
    bench.subsample = a.subsample.or(bench.subsample);
    bench.spectral_max_n = a.spectral_max_n.or(bench.spectral_max_n);
    bench.ward_max_n = a.ward_max_n.or(bench.ward_max_n);
    bench.gamma = a.gamma.or(bench.gamma);
    bench.jobs = a.jobs.unwrap_or(bench.jobs);

    let named: Vec<(String, PathBuf)> = if a.features.is_empty() {
        cfg.parsed_methods()?
            .iter()
            .map(|m| (m.to_string(), config::artifact_path(&cfg.output_dir, m)))
            .collect()
    } else {
        a.features
    };
    let missing: Vec<String> = named
        .iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(n, p)| format!("{n} ({})", p.display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!("missing feature artifacts: {}", missing.join(", "))));
    }
    let mut seen = BTreeMap::new();
    let mut reps = Vec::new();
    for (name, path) in named {
        if seen.insert(name.clone(), ()).is_some() {
            return Err(Error::invalid(format!("representation {name:?} given twice")));
        }
        reps.push(match pipeline::load_features(&path)? {
            Features::Dense(m) => Representation::dense(name, m),
            Features::Sparse(m) => Representation::sparse(name, m),
        });
    }
    let report = run_benchmark(&reps, &bench)?;
    pipeline::write_atomic(&a.out, report.to_csv().as_bytes())?;
    pipeline::write_atomic(&a.out.with_extension("json"), report.metadata_json().as_bytes())?;
    print!("{}", report.summary_table());
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "{} {} k={} seed={}: {}",
            r.representation,
            r.algorithm,
            r.k,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let mut outcome = Outcome::Ok;
    for expr in &a.assertions {
        let ok = check_assertion(&report, expr)?;
        println!("assert {expr}: {}", if ok { "holds" } else { "FAILS" });
        if !ok {
            outcome = Outcome::AssertionFailed;
        }
    }
    Ok(outcome)
}

fn report(a: ReportArgs) -> Result<Outcome> {
    if a.report.is_none() && a.svg.is_none() {
        return Err(Error::invalid("nothing to do: give --report and/or --svg"));
    }
    if let Some(p) = &a.report {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        print!("{}", BenchmarkReport::from_csv(&text)?.summary_table());
    }
    if let (Some(svg), Some(f), Some(l)) = (&a.svg, &a.features, &a.labels) {
        let x = dense(f)?;
        let labels = pipeline::read_labels(l)?;
        let title = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        pipeline::write_atomic(svg, scatter_svg(&x, &labels, &title)?.as_bytes())?;
    }
    Ok(Outcome::Ok)
}
