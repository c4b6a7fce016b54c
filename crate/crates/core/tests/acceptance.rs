//! Acceptance criteria, one test each. Run with
//! `cargo test -p tweetcluster --test acceptance -- --nocapture --test-threads=1`
//! to see the verdict lines.
//!
//! Criteria 7, 8 and 10 need the public health-news tweet collection and a
//! fastText `.vec` file. Point `TWEETCLUSTER_DATA` at the directory of
//! channel `.txt` files and `TWEETCLUSTER_FASTTEXT` at the vectors; without
//! them those tests print NOT RUN and return.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tweetcluster::baseline::linalg::Svd;
use tweetcluster::baseline::{lda_fit_transform, nmf_fit, tsvd_fit, DocTermMatrix, Weighting};
use tweetcluster::cae::{epochs_to_plateau, train_tensors, CaeConfig, CaeModel, Tensor3};
use tweetcluster::clustering::{cluster, rand_index, Algorithm};
use tweetcluster::corpus;
use tweetcluster::evaluation::{ch_score, hotelling_t2};
use tweetcluster::features::FeatureMatrix;
use tweetcluster::pipeline::{self, CorpusView, EmbeddingSource, FeaturizeOptions, Method};

fn verdict(n: u32, ok: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} ({})", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "criterion {n} failed: {}", detail.as_ref());
}

fn not_run(n: u32, why: &str) {
    println!("criterion {n}: NOT RUN ({why})");
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.exists())
}

fn env_usize(var: &str) -> Option<usize> {
    std::env::var(var).ok().and_then(|v| v.parse().ok())
}

fn wave(rows: usize, cols: usize, phase: f64) -> Tensor3 {
    let data = (0..rows * cols).map(|i| ((i as f64) * 0.731 + phase).sin() + 0.3).collect();
    Tensor3::from_vec(1, rows, cols, data).unwrap()
}

fn max_gradient_error(constrained: bool) -> f64 {
    let cfg = CaeConfig {
        input_rows: 4,
        input_cols: 10,
        encoder_filters: [2, 2, 1],
        pool_sizes: [(2, 5), (1, 1), (2, 2)],
        learning_rate: 1e-3,
        batch_size: 2,
        max_epochs: 1,
        validation_fraction: 0.2,
        l2_constrained: constrained,
        seed: 5,
    };
    let mut model = CaeModel::new(cfg).unwrap();
    for l in &mut model.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.1);
    }
    let batch = vec![wave(4, 10, 0.0), wave(4, 10, 2.1)];
    let (_, grads) = model.loss_and_gradients(&batch).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.weights.iter().chain(&g.bias).copied()).collect();
    let loss = |m: &CaeModel| batch.iter().map(|x| m.loss(x).unwrap()).sum::<f64>() / batch.len() as f64;
    let h = 1e-4;
    let mut k = 0;
    let mut worst: f64 = 0.0;
    for t in 0..model.parameters().len() {
        for j in 0..model.parameters()[t].len() {
            let orig = model.parameters()[t][j];
            model.parameters_mut()[t][j] = orig + h;
            let up = loss(&model);
            model.parameters_mut()[t][j] = orig - h;
            let down = loss(&model);
            model.parameters_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            k += 1;
        }
    }
    assert_eq!(k, analytic.len());
    worst
}

#[test]
fn criterion_01_gradient_check() {
    let start = Instant::now();
    let plain = max_gradient_error(false);
    let l2 = max_gradient_error(true);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        plain < 1e-4 && l2 < 1e-4 && secs < 60.0,
        format!("max relative error {plain:.2e} unconstrained, {l2:.2e} constrained, {secs:.2}s"),
    );
}

#[test]
fn criterion_02_shape_flow() {
    let start = Instant::now();
    let c300 = CaeConfig::for_embedding_dim(300).unwrap();
    let model = CaeModel::new(c300.clone()).unwrap();
    let u = model.encode_raw(&wave(32, 300, 0.4)).unwrap();
    let flow300: Vec<(usize, usize)> = c300.encoder_shapes().iter().map(|&(_, h, w)| (h, w)).collect();
    let c768 = CaeConfig::for_embedding_dim(768).unwrap();
    let ok = flow300 == [(16, 60), (8, 12), (4, 6)]
        && (c300.input_rows, c300.input_cols) == (32, 300)
        && u.shape() == (1, 4, 6)
        && c300.representation_len() == 24
        && c768.pool_sizes == [(2, 8), (2, 8), (2, 2)]
        && c768.bottleneck_shape() == (1, 4, 6)
        && c768.representation_len() == 24;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        ok && secs < 1.0,
        format!("32x300 -> {flow300:?}; 768 pools {:?}; {secs:.3}s", c768.pool_sizes),
    );
}

#[test]
fn criterion_03_constraint_satisfaction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0;
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for (dim, n, seed) in [(12, 60, 1u64), (12, 60, 2), (24, 40, 3)] {
        let samples: Vec<Tensor3> = (0..n)
            .map(|_| {
                let used = rng.random_range(1..=32);
                let data = (0..32 * dim)
                    .map(|i| if i / dim < used { rng.random_range(-1.0..1.0) } else { 0.0 })
                    .collect();
                Tensor3::from_vec(1, 32, dim, data).unwrap()
            })
            .collect();
        let mut cfg = CaeConfig::for_embedding_dim(dim).unwrap().constrained(true).with_seed(seed);
        cfg.encoder_filters = [8, 4, 1];
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 8;
        cfg.max_epochs = 4;
        let trained = train_tensors(CaeModel::new(cfg).unwrap(), &samples, |_, _, _| {}).unwrap();
        for x in &samples {
            let code = trained.model.encode(x).unwrap();
            let norm = code.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            total += 1;
            worst = worst.max((norm - 1.0).abs());
            if (norm - 1.0).abs() > 1e-6 {
                bad += 1;
            }
        }
    }
    verdict(
        3,
        bad == 0 && total > 0,
        format!("{total} nonzero representations, {bad} outside 1 +/- 1e-6, worst deviation {worst:.1e}"),
    );
}

fn ch_oracle(x: &FeatureMatrix, labels: &[usize], k: usize) -> f64 {
    let (n, f) = (x.nrows(), x.ncols());
    let mut mean = vec![0.0; f];
    for i in 0..n {
        for j in 0..f {
            mean[j] += x.get(i, j) / n as f64;
        }
    }
    let mut between = 0.0;
    let mut within = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let mut centroid = vec![0.0; f];
        for &i in &members {
            for j in 0..f {
                centroid[j] += x.get(i, j) / members.len() as f64;
            }
        }
        for j in 0..f {
            between += members.len() as f64 * (centroid[j] - mean[j]).powi(2);
        }
        for &i in &members {
            for j in 0..f {
                within += (x.get(i, j) - centroid[j]).powi(2);
            }
        }
    }
    (n - k) as f64 / (k - 1) as f64 * between / within
}

#[test]
fn criterion_04_ch_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(k + 1..=200);
        let f = rng.random_range(1..=24);
        let data = (0..n * f).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x = FeatureMatrix::new(n, f, data, "r").unwrap();
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        labels.shuffle(&mut rng);
        let got = ch_score(&x, &labels, k).unwrap().score;
        let want = ch_oracle(&x, &labels, k);
        worst = worst.max((got - want).abs() / want.abs());
    }
    let hand = FeatureMatrix::new(4, 2, vec![0.0, 0.0, 0.0, 2.0, 10.0, 0.0, 10.0, 2.0], "h").unwrap();
    let fifty = ch_score(&hand, &[0, 0, 1, 1], 2).unwrap().score;
    verdict(
        4,
        worst <= 1e-9 && fifty == 50.0,
        format!("worst relative difference {worst:.1e} over 100 instances; hand example {fifty}"),
    );
}

#[test]
fn criterion_05_clustering_sanity() {
    let start = Instant::now();
    let centers = [[0.0, 0.0], [50.0, 0.0], [25.0, 43.30127018922193]];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..100 {
            rows.push(vec![center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)]);
            truth.push(c);
        }
    }
    let x = FeatureMatrix::from_rows(&rows, "blobs").unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for alg in Algorithm::ALL {
        let ri = rand_index(&cluster(&x, alg, 3, 0).unwrap().labels, &truth).unwrap();
        let ch = |k: usize| ch_score(&x, &cluster(&x, alg, k, 0).unwrap().labels, k).unwrap().score;
        let (c2, c3, c5) = (ch(2), ch(3), ch(5));
        ok &= ri == 1.0 && c3 > c2 && c3 > c5;
        details.push(format!("{alg}: RI {ri}, CH {c2:.0}/{c3:.0}/{c5:.0} at K=2/3/5"));
    }
    let secs = start.elapsed().as_secs_f64();
    details.push(format!("{secs:.2}s"));
    verdict(5, ok && secs < 10.0, details.join("; "));
}

fn random_sparse(n: usize, p: usize, density: f64, seed: u64) -> DocTermMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = (0..p).map(|j| format!("t{j}")).collect();
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..p {
            if rng.random_bool(density) {
                trip.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
    }
    DocTermMatrix::from_triplets(n, vocab, trip, Weighting::Counts).unwrap()
}

/// Largest elementwise gap between the randomized and the dense truncated
/// SVD scores after flipping each column to agree in sign.
fn tsvd_gap(x: &DocTermMatrix, f: usize, seed: u64) -> f64 {
    let fit: Svd = tsvd_fit(x, f, seed).unwrap();
    let got = fit.scores();
    let svd = x.to_dense().svd(true, false);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.unwrap();
    let mut worst: f64 = 0.0;
    for (c, &j) in idx.iter().take(f).enumerate() {
        let want: Vec<f64> = u.column(j).iter().map(|v| v * svd.singular_values[j]).collect();
        let col: Vec<f64> = got.column(c).iter().copied().collect();
        let dot: f64 = want.iter().zip(&col).map(|(a, b)| a * b).sum();
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for (a, b) in want.iter().zip(&col) {
            worst = worst.max((a - sign * b).abs());
        }
    }
    worst
}

fn disjoint_corpus(n_docs: usize, seed: u64) -> DocTermMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = (0..20).map(|i| format!("w{i:02}")).collect();
    let mut trip = Vec::new();
    for d in 0..n_docs {
        let base = if d % 2 == 0 { 0 } else { 10 };
        for _ in 0..8 {
            trip.push((d, base + rng.random_range(0..10), 1.0));
        }
    }
    DocTermMatrix::from_triplets(n_docs, vocab, trip, Weighting::Counts).unwrap()
}

#[test]
fn criterion_06_baseline_oracles() {
    let mut details = Vec::new();
    let mut ok = true;

    let gap = (0..3).map(|s| tsvd_gap(&random_sparse(100, 40, 0.15, s), 10, s)).fold(0.0, f64::max);
    ok &= gap <= 1e-6;
    details.push(format!("t-SVD gap {gap:.1e}"));

    let mut rises = 0;
    for seed in 0..3 {
        let fit = nmf_fit(&random_sparse(60, 30, 0.3, 10 + seed), 4, 200, seed).unwrap();
        rises += fit.objective.windows(2).filter(|w| w[1] > w[0] + 1e-10).count();
    }
    ok &= rises == 0;
    details.push(format!("NMF objective increases: {rises}"));

    let mut worst_purity: f64 = 1.0;
    let mut worst_sum: f64 = 0.0;
    for seed in 0..3 {
        let x = disjoint_corpus(200, 100 + seed);
        let f = lda_fit_transform(&x, 2, 5, seed).unwrap();
        for r in f.rows() {
            worst_sum = worst_sum.max((r.iter().sum::<f64>() - 1.0).abs());
            ok &= r.iter().all(|&v| v >= 0.0);
        }
        let arg: Vec<usize> = f.rows().map(|r| usize::from(r[1] > r[0])).collect();
        let agree = arg.iter().enumerate().filter(|&(d, &t)| t == d % 2).count();
        let purity = agree.max(arg.len() - agree) as f64 / arg.len() as f64;
        worst_purity = worst_purity.min(purity);
    }
    ok &= worst_purity >= 0.95 && worst_sum < 1e-9;
    details.push(format!("LDA purity >= {worst_purity:.3}, row sums within {worst_sum:.1e} of 1"));
    verdict(6, ok, details.join("; "));
}

fn corpus_tweets() -> Option<Vec<corpus::Tweet>> {
    let dir = env_path("TWEETCLUSTER_DATA")?;
    Some(corpus::ingest_path(&dir, '|').expect("ingest reference dataset").tweets)
}

#[test]
fn criterion_07_learning_curves() {
    let (Some(tweets), Some(ft)) = (corpus_tweets(), env_path("TWEETCLUSTER_FASTTEXT")) else {
        return not_run(7, "set TWEETCLUSTER_DATA and TWEETCLUSTER_FASTTEXT");
    };
    let start = Instant::now();
    let view = CorpusView::subsample(tweets, Some(5000), 0);
    let source = EmbeddingSource::table(ft);
    let (dim, inputs) = pipeline::cae_inputs(&view, &source).unwrap();
    let epochs = env_usize("TWEETCLUSTER_CAE_EPOCHS").unwrap_or(20).max(5);
    let mut ok = true;
    let mut details = Vec::new();
    for seed in 0..3u64 {
        let mut plateau = [0usize; 2];
        for (slot, constrained) in [false, true].into_iter().enumerate() {
            let opts = FeaturizeOptions {
                seed,
                cae_epochs: Some(epochs),
                ..Default::default()
            };
            let cfg = pipeline::cae_config(dim, constrained, &opts).unwrap();
            let trained = train_tensors(CaeModel::new(cfg).unwrap(), &inputs, |_, _, _| {}).unwrap();
            let tl = &trained.curve.train_loss;
            ok &= tl[4] < tl[0];
            plateau[slot] = epochs_to_plateau(&trained.curve.val_loss, 0.05).unwrap_or(epochs);
            details.push(format!(
                "seed {seed} {}: train loss {:.5} -> {:.5} by epoch 5",
                if constrained { "l2cae" } else { "cae" },
                tl[0],
                tl[4]
            ));
        }
        ok &= plateau[1] >= plateau[0];
        details.push(format!("seed {seed} plateau cae {} / l2cae {}", plateau[0], plateau[1]));
    }
    details.push(format!("{:.0}s", start.elapsed().as_secs_f64()));
    verdict(7, ok, details.join("; "));
}

#[test]
fn criterion_08_table_ordering() {
    let (Some(tweets), Some(ft)) = (corpus_tweets(), env_path("TWEETCLUSTER_FASTTEXT")) else {
        return not_run(8, "set TWEETCLUSTER_DATA and TWEETCLUSTER_FASTTEXT");
    };
    let start = Instant::now();
    let view = CorpusView::subsample(tweets, Some(10_000), 0);
    let source = EmbeddingSource::table(ft);
    let names = ["bow", "tfidf", "tfidf+pca", "tfidf+tsvd", "tfidf+lda", "tfidf+nmf", "fasttext+cae", "fasttext+l2cae"];
    let methods: Vec<Method> = names.iter().map(|m| m.parse().unwrap()).collect();
    let mut mean = vec![0.0; methods.len()];
    for seed in 0..3u64 {
        let opts = FeaturizeOptions {
            seed,
            cae_epochs: env_usize("TWEETCLUSTER_CAE_EPOCHS"),
            ..Default::default()
        };
        for (i, m) in methods.iter().enumerate() {
            let art = pipeline::featurize(&view, m, Some(&source), &opts).unwrap();
            let score = match &art {
                pipeline::Artifact::Sparse(x) => ch_score(x, &cluster(x, Algorithm::KMeans, 10, seed).unwrap().labels, 10),
                pipeline::Artifact::Dense(x) | pipeline::Artifact::Cae { features: x, .. } => {
                    ch_score(x, &cluster(x, Algorithm::KMeans, 10, seed).unwrap().labels, 10)
                }
            }
            .unwrap()
            .score;
            mean[i] += score / 3.0;
        }
    }
    let raw = mean[0].max(mean[1]);
    let reduced_min = mean[2..6].iter().copied().fold(f64::INFINITY, f64::min);
    let reduced_max = mean[2..6].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cae_min = mean[6].min(mean[7]);
    let ok = cae_min > reduced_max && reduced_min > raw && mean[7] > mean[6];
    let table: Vec<String> = names.iter().zip(&mean).map(|(n, s)| format!("{n} {s:.1}")).collect();
    verdict(8, ok, format!("{}; {:.0}s", table.join(", "), start.elapsed().as_secs_f64()));
}

#[test]
fn criterion_09_hotelling() {
    let gaussian = |n: usize, p: usize, shift: f64, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        FeatureMatrix::new(n, p, (0..n * p).map(|_| d.sample(&mut rng) + shift).collect(), "g").unwrap()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (a, b) = (gaussian(15 + seed as usize, 1, 0.0, seed), gaussian(22, 1, 0.3, 100 + seed));
        let (a1, b1) = (a.as_slice(), b.as_slice());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
        let (na, nb) = (a1.len() as f64, b1.len() as f64);
        let sp2 = (ss(a1, mean(a1)) + ss(b1, mean(b1))) / (na + nb - 2.0);
        let t = (mean(a1) - mean(b1)) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
        let t2 = hotelling_t2(&a, &b, false).unwrap().t2;
        worst = worst.max((t2 - t * t).abs() / (t * t).max(1.0));
    }
    let a = gaussian(200, 24, 0.0, 7);
    let same = hotelling_t2(&a, &a, false).unwrap();
    let apart = hotelling_t2(&a, &gaussian(200, 24, 1.0, 8), false).unwrap();
    let p = apart.p_value.unwrap();
    verdict(
        9,
        worst <= 1e-9 && same.t2 == 0.0 && p < 0.001,
        format!("p=1 gap {worst:.1e}; identical T2 {}; separated p {p:.1e}", same.t2),
    );
}

const TABLE_ONE: [(&str, usize, f64); 16] = [
    ("BBC Health", 3929, 5.7),
    ("CBC Health", 3741, 9.1),
    ("CNN Health", 4061, 11.2),
    ("Everyday Health", 3239, 11.4),
    ("Fox News Health", 2000, 9.1),
    ("Guardian Healthcare", 2997, 14.2),
    ("Goodhealth", 7864, 13.4),
    ("Kaiser Health", 3509, 11.2),
    ("LA Times Health", 4171, 12.2),
    ("MSN Health", 3199, 8.2),
    ("NBC Health", 4215, 8.5),
    ("NPR Health", 4837, 9.0),
    ("NY Times Health", 6245, 10.0),
    ("Reuters Health", 4719, 9.4),
    ("US News Health", 1400, 11.8),
    ("WSJ Health", 3200, 12.6),
];

#[test]
fn criterion_10_ingestion_statistics() {
    let Some(tweets) = corpus_tweets() else {
        return not_run(10, "set TWEETCLUSTER_DATA");
    };
    let stats = corpus::stats(&tweets).unwrap();
    let mut ok = stats.total_tweets() == 63_326;
    let mut misses = Vec::new();
    for (name, count, mean_words) in TABLE_ONE {
        match stats.channel(name) {
            Some(c) if c.tweet_count == count && (c.mean_word_count - mean_words).abs() <= 0.5 => {}
            Some(c) => {
                ok = false;
                misses.push(format!("{name}: {} tweets, mean {:.2}", c.tweet_count, c.mean_word_count));
            }
            None => {
                ok = false;
                misses.push(format!("{name}: missing"));
            }
        }
    }
    verdict(
        10,
        ok,
        format!("{} tweets in total; mismatches: {}", stats.total_tweets(), if misses.is_empty() { "none".into() } else { misses.join(", ") }),
    );
}
