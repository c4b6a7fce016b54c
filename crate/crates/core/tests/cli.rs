use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use tweetcluster::cae::read_checkpoint;
use tweetcluster::features::FeatureMatrix;

const TOPICS: [&[&str]; 3] = [
    &["flu", "vaccine", "virus", "season", "shot", "outbreak"],
    &["diet", "sugar", "obesity", "food", "calories", "weight"],
    &["cancer", "tumor", "screening", "chemo", "oncology", "biopsy"],
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tweetcluster"));
    c.env_remove("TWEETCLUSTER_SEED").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two channel files whose tweets each draw from one of three topic vocabularies.
fn write_channels(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    fs::create_dir_all(dir).unwrap();
    for (file, n) in [("bbchealth.txt", 50), ("cnnhealth.txt", 40)] {
        let mut text = String::new();
        for i in 0..n {
            let topic = TOPICS[i % 3];
            let words: Vec<&str> = (0..rng.random_range(3..8)).map(|_| topic[rng.random_range(0..topic.len())]).collect();
            text.push_str(&format!(
                "{}|Thu Apr 09 01:{:02}:50 +0000 2015|RT @news: {} #health http://bbc.in/{i}\n",
                585_000_000_000_000_000u64 + i as u64,
                i % 60,
                words.join(" ")
            ));
        }
        text.push_str("broken line without fields\n");
        fs::write(dir.join(file), text).unwrap();
    }
}

/// Word vectors where each topic occupies its own block of coordinates.
fn write_vectors(path: &Path, dim: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::new();
    let words: usize = TOPICS.iter().map(|t| t.len()).sum();
    text.push_str(&format!("{} {dim}\n", words + 1));
    for (t, topic) in TOPICS.iter().enumerate() {
        for w in *topic {
            let v: Vec<String> = (0..dim)
                .map(|j| {
                    let base = if j * 3 / dim == t { 1.0 } else { 0.0 };
                    format!("{:.4}", base + rng.random_range(-0.1..0.1))
                })
                .collect();
            text.push_str(&format!("{w} {}\n", v.join(" ")));
        }
    }
    text.push_str(&format!("health {}\n", vec!["0.5"; dim].join(" ")));
    fs::write(path, text).unwrap();
}

struct Workspace {
    _tmp: TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        write_channels(&root.join("data"));
        write_vectors(&root.join("ft.vec"), 12);
        Workspace { _tmp: tmp, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn ingest(&self) -> PathBuf {
        let out = self.path("corpus.jsonl");
        ok(&["ingest", "--in", p(&self.path("data")), "--delimiter", "|", "--out", p(&out)]);
        out
    }
}

#[test]
fn ingest_writes_corpus_and_stats() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let tweets = tweetcluster::corpus::read_jsonl(&corpus).unwrap();
    assert_eq!(tweets.len(), 90);
    assert!(tweets.iter().all(|t| !t.clean_text.contains("http") && !t.clean_text.contains('@')));
    let stats = fs::read_to_string(ws.path("corpus.jsonl.stats.csv")).unwrap();
    let lines: Vec<&str> = stats.lines().collect();
    assert_eq!(lines[0], "channel,tweets,words,unique_words,mean_words");
    assert!(lines[1].starts_with("BBC Health,50,"), "{stats}");
    assert!(lines[2].starts_with("CNN Health,40,"), "{stats}");

    let out = run(&["ingest", "--in", p(&ws.path("nope")), "--out", p(&ws.path("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    assert!(!ws.path("x.jsonl").exists());
}

#[test]
fn featurize_methods() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let c = p(&corpus);

    ok(&["featurize", "--corpus", c, "--method", "tfidf+lda", "--k", "4", "--out", p(&ws.path("lda.csv"))]);
    let lda = FeatureMatrix::read_csv(&ws.path("lda.csv")).unwrap();
    assert_eq!((lda.nrows(), lda.ncols()), (90, 4));

    ok(&["featurize", "--corpus", c, "--method", "bow", "--out", p(&ws.path("bow.mtx"))]);
    let bow = fs::read_to_string(ws.path("bow.mtx")).unwrap();
    assert!(bow.starts_with("%%MatrixMarket"));
    let vocab = fs::read_to_string(ws.path("bow.mtx.vocab")).unwrap();
    assert_eq!(vocab.lines().count(), 19, "18 topic words plus 'health'");

    let feats = ws.path("l2.csv");
    ok(&[
        "featurize",
        "--corpus",
        c,
        "--method",
        "fasttext+l2cae",
        "--embeddings",
        &format!("fasttext={}", p(&ws.path("ft.vec"))),
        "--epochs",
        "3",
        "--batch-size",
        "8",
        "--learning-rate",
        "0.001",
        "--out",
        p(&feats),
    ]);
    let x = FeatureMatrix::read_csv(&feats).unwrap();
    assert_eq!((x.nrows(), x.ncols()), (90, 24));
    for n in x.row_norms() {
        assert!(n == 0.0 || (n - 1.0).abs() < 1e-6, "norm {n}");
    }
    let model = read_checkpoint(&ws.path("l2.cae")).unwrap();
    assert!(model.config.l2_constrained);
    let curve = fs::read_to_string(ws.path("l2.curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);

    let out = run(&["featurize", "--corpus", c, "--method", "pca", "--out", p(&ws.path("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["featurize", "--corpus", c, "--method", "glove+cae", "--out", p(&ws.path("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("glove"));
}

#[test]
fn train_cae_writes_checkpoint_and_curve() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let ckpt = ws.path("m/model.cae");
    let stdout = ok(&[
        "train-cae",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&ws.path("ft.vec")),
        "--out",
        p(&ckpt),
        "--features",
        p(&ws.path("m/feat.csv")),
        "--epochs",
        "2",
        "--batch-size",
        "16",
        "--subsample",
        "60",
        "--seed",
        "4",
    ]);
    assert!(stdout.contains("best epoch"), "{stdout}");
    let model = read_checkpoint(&ckpt).unwrap();
    assert_eq!((model.config.input_rows, model.config.input_cols, model.config.seed), (32, 12, 4));
    assert_eq!(fs::read_to_string(ws.path("m/model.curve.csv")).unwrap().lines().count(), 3);
    assert_eq!(FeatureMatrix::read_csv(&ws.path("m/feat.csv")).unwrap().nrows(), 60);
}

#[test]
fn config_driven_benchmark_is_reproducible() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let cfg = ws.path("run.toml");
    fs::write(
        &cfg,
        format!(
            r#"
corpus = "{}"
output_dir = "{}"
methods = ["bow", "tfidf", "tfidf+pca", "tfidf+nmf", "fasttext+cae", "fasttext+l2cae"]
feature_count = 4
ks = [2, 3]
algorithms = ["kmeans", "ward", "spectral"]

[embeddings]
fasttext = "{}"

[cae]
epochs = 2
batch_size = 8
learning_rate = 0.001
"#,
            p(&corpus),
            p(&ws.path("out")),
            p(&ws.path("ft.vec"))
        ),
    )
    .unwrap();
    let c = p(&cfg);

    // Missing artifacts are all named in one error.
    let out = run(&["--config", c, "benchmark", "--out", p(&ws.path("r.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tfidf+nmf") && err.contains("fasttext+l2cae"), "{err}");

    ok(&["--config", c, "featurize"]);
    for f in ["bow.mtx", "tfidf.mtx", "tfidf+pca.csv", "tfidf+nmf.csv", "fasttext+cae.csv", "fasttext+l2cae.cae"] {
        assert!(ws.path("out").join(f).exists(), "{f}");
    }

    let report = ws.path("r.csv");
    let stdout = ok(&["--config", c, "benchmark", "--seeds", "1,2", "--jobs", "1", "--out", p(&report)]);
    assert!(stdout.contains("mean CH"));
    let csv = fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 3 * 2 * 2);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(|c: char| c.is_ascii_digit())), "{csv}");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path("r.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], 72);

    // Same config and seeds: byte-identical features and report.
    let before = fs::read(ws.path("out/fasttext+l2cae.csv")).unwrap();
    ok(&["--config", c, "featurize"]);
    assert_eq!(fs::read(ws.path("out/fasttext+l2cae.csv")).unwrap(), before);
    let again = ws.path("r2.csv");
    ok(&["--config", c, "benchmark", "--seeds", "1,2", "--out", p(&again)]);
    assert_eq!(fs::read_to_string(&again).unwrap(), csv);

    let summary = ok(&["report", "--report", p(&report)]);
    assert_eq!(summary.lines().count(), 1 + 6 * 3 * 2);

    let out = run(&["--config", c, "benchmark", "--out", p(&ws.path("r3.csv")), "--assert", "bow > bow"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["--config", c, "benchmark", "--out", p(&ws.path("r3.csv")), "--assert", "bow < tfidf+pca"]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("assert bow < tfidf+pca"));
}

#[test]
fn cluster_evaluate_and_plot() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let feats = ws.path("pca.csv");
    ok(&["featurize", "--corpus", p(&corpus), "--method", "tfidf+pca", "--k", "3", "--out", p(&feats)]);

    let labels = ws.path("labels.csv");
    for alg in ["kmeans", "ward", "spectral"] {
        ok(&["cluster", "--features", p(&feats), "--algorithm", alg, "--k", "3", "--out", p(&labels)]);
        let text = fs::read_to_string(&labels).unwrap();
        assert!(text.starts_with("row_index,label\n0,"));
        assert_eq!(text.lines().count(), 91);
        let ev = ok(&["evaluate", "--features", p(&feats), "--labels", p(&labels)]);
        let ch: f64 = ev.lines().next().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
        assert!(ch > 10.0, "{alg}: CH {ch}");
    }
    let out = run(&["cluster", "--features", p(&feats), "--algorithm", "ward", "--k", "3", "--gamma", "1", "--out", p(&labels)]);
    assert_eq!(out.status.code(), Some(2));

    let svg = ws.path("plot.svg");
    ok(&["report", "--svg", p(&svg), "--features", p(&feats), "--labels", p(&labels)]);
    assert_eq!(fs::read_to_string(&svg).unwrap().matches("<circle").count(), 90);

    let x = FeatureMatrix::read_csv(&feats).unwrap();
    let half = |r: std::ops::Range<usize>| {
        let idx: Vec<usize> = r.collect();
        x.select_rows(&idx)
    };
    fs::write(ws.path("a.csv"), half(0..45).to_csv()).unwrap();
    fs::write(ws.path("b.csv"), half(45..90).to_csv()).unwrap();
    let ev = ok(&["evaluate", "--hotelling", p(&ws.path("a.csv")), p(&ws.path("b.csv"))]);
    assert!(ev.starts_with("t2\t"));
    assert!(ev.contains("df\t3 86"), "{ev}");
}

#[test]
fn seed_comes_from_environment() {
    let ws = Workspace::new();
    let corpus = ws.ingest();
    let a = ws.path("a.csv");
    let b = ws.path("b.csv");
    let args = |out: &Path| vec!["featurize".to_string(), "--corpus".into(), p(&corpus).into(), "--method".into(), "tfidf+nmf".into(), "--k".into(), "3".into(), "--subsample".into(), "50".into(), "--out".into(), p(out).into()];
    let st = bin().args(args(&a)).env("TWEETCLUSTER_SEED", "11").output().unwrap();
    assert!(st.status.success());
    let st = bin().args(args(&b)).args(["--seed", "11"]).output().unwrap();
    assert!(st.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = ws.path("c.csv");
    assert!(bin().args(args(&c)).args(["--seed", "12"]).output().unwrap().status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}
