//! Latent Dirichlet allocation fitted with online variational Bayes
//! (stochastic natural-gradient steps on the topic-word parameters over
//! mini-batches of documents).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::digamma;

use super::doc_term::DocTermMatrix;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone)]
pub struct LdaParams {
    pub n_topics: usize,
    /// Document-topic prior; `None` means `1/K`.
    pub alpha: Option<f64>,
    /// Topic-word prior; `None` means `1/K`.
    pub eta: Option<f64>,
    /// Learning-rate decay, `ρ_t = (τ₀ + t)^(−κ)`.
    pub kappa: f64,
    pub tau0: f64,
    pub batch_size: usize,
    pub passes: usize,
    pub max_doc_iters: usize,
    pub mean_change_tol: f64,
    pub seed: u64,
}

impl LdaParams {
    pub fn new(n_topics: usize) -> Self {
        LdaParams {
            n_topics,
            alpha: None,
            eta: None,
            kappa: 0.7,
            tau0: 10.0,
            batch_size: 256,
            passes: 5,
            max_doc_iters: 100,
            mean_change_tol: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    k: usize,
    p: usize,
    alpha: f64,
    eta: f64,
    /// Variational topic-word parameters, word-major (`P × K`).
    lambda: Vec<f64>,
    params: LdaParams,
    updates: usize,
}

fn dirichlet_expectation_exp(v: &[f64], out: &mut [f64]) {
    let total = digamma(v.iter().sum());
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (digamma(x) - total).exp();
    }
}

impl LdaModel {
    pub fn fit(x: &DocTermMatrix, params: LdaParams) -> Result<Self> {
        let k = params.n_topics;
        let p = x.ncols();
        if k < 2 {
            return Err(Error::invalid("LDA needs at least two topics"));
        }
        if k >= p {
            return Err(Error::invalid(format!(
                "{k} topics for a vocabulary of {p} terms"
            )));
        }
        if params.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let inv_k = 1.0 / k as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let init = Gamma::new(100.0, 0.01).expect("valid gamma");
        let mut model = LdaModel {
            k,
            p,
            alpha: params.alpha.unwrap_or(inv_k),
            eta: params.eta.unwrap_or(inv_k),
            lambda: (0..p * k).map(|_| init.sample(&mut rng)).collect(),
            params,
            updates: 0,
        };

        let n = x.nrows();
        for _ in 0..model.params.passes {
            let mut start = 0;
            while start < n {
                let end = (start + model.params.batch_size).min(n);
                model.update(x, start..end, n, &mut rng);
                start = end;
            }
        }
        Ok(model)
    }

    fn exp_elog_beta(&self) -> Vec<f64> {
        let (k, p) = (self.k, self.p);
        let mut topic_totals = vec![0.0; k];
        for w in 0..p {
            for t in 0..k {
                topic_totals[t] += self.lambda[w * k + t];
            }
        }
        let psi_totals: Vec<f64> = topic_totals.into_iter().map(digamma).collect();
        let mut out = vec![0.0; p * k];
        for w in 0..p {
            for t in 0..k {
                out[w * k + t] = (digamma(self.lambda[w * k + t]) - psi_totals[t]).exp();
            }
        }
        out
    }

    /// Variational E-step for one document. Returns γ and, when `sstats` is
    /// given, accumulates the document's sufficient statistics into it.
    fn e_step_doc(
        &self,
        words: &[(usize, f64)],
        exp_elog_beta: &[f64],
        rng: &mut ChaCha8Rng,
        sstats: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let k = self.k;
        let init = Gamma::new(100.0, 0.01).expect("valid gamma");
        let mut gamma: Vec<f64> = (0..k).map(|_| init.sample(rng)).collect();
        let mut exp_elog_theta = vec![0.0; k];
        dirichlet_expectation_exp(&gamma, &mut exp_elog_theta);
        if words.is_empty() {
            return vec![self.alpha; k];
        }

        let phinorm = |theta: &[f64], out: &mut Vec<f64>| {
            out.clear();
            for &(w, _) in words {
                let beta = &exp_elog_beta[w * k..(w + 1) * k];
                out.push(theta.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + 1e-100);
            }
        };
        let mut norm = Vec::with_capacity(words.len());
        phinorm(&exp_elog_theta, &mut norm);

        for _ in 0..self.params.max_doc_iters {
            let last = gamma.clone();
            let mut acc = vec![0.0; k];
            for (&(w, c), &z) in words.iter().zip(&norm) {
                let beta = &exp_elog_beta[w * k..(w + 1) * k];
                let scale = c / z;
                for t in 0..k {
                    acc[t] += scale * beta[t];
                }
            }
            for t in 0..k {
                gamma[t] = self.alpha + exp_elog_theta[t] * acc[t];
            }
            dirichlet_expectation_exp(&gamma, &mut exp_elog_theta);
            phinorm(&exp_elog_theta, &mut norm);
            let change: f64 = gamma
                .iter()
                .zip(&last)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / k as f64;
            if change < self.params.mean_change_tol {
                break;
            }
        }

        if let Some(ss) = sstats {
            for (&(w, c), &z) in words.iter().zip(&norm) {
                let scale = c / z;
                for t in 0..k {
                    ss[w * k + t] += exp_elog_theta[t] * scale;
                }
            }
        }
        gamma
    }

    fn update(
        &mut self,
        x: &DocTermMatrix,
        docs: std::ops::Range<usize>,
        total_docs: usize,
        rng: &mut ChaCha8Rng,
    ) {
        let (k, p) = (self.k, self.p);
        let batch = docs.len();
        let exp_elog_beta = self.exp_elog_beta();
        let mut sstats = vec![0.0; p * k];
        for d in docs {
            let words: Vec<(usize, f64)> = x.row(d).collect();
            self.e_step_doc(&words, &exp_elog_beta, rng, Some(&mut sstats));
        }
        let rho = (self.params.tau0 + self.updates as f64).powf(-self.params.kappa);
        let scale = total_docs as f64 / batch as f64;
        for i in 0..p * k {
            let target = self.eta + scale * sstats[i] * exp_elog_beta[i];
            self.lambda[i] = (1.0 - rho) * self.lambda[i] + rho * target;
        }
        self.updates += 1;
    }

    /// Normalised variational document-topic parameters, one row per document.
    pub fn transform(&self, x: &DocTermMatrix) -> Result<FeatureMatrix> {
        if x.ncols() != self.p {
            return Err(Error::shape(format!("{} terms", self.p), x.ncols()));
        }
        let exp_elog_beta = self.exp_elog_beta();
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed ^ 0x5eed);
        let mut data = Vec::with_capacity(x.nrows() * self.k);
        for d in 0..x.nrows() {
            let words: Vec<(usize, f64)> = x.row(d).collect();
            let gamma = self.e_step_doc(&words, &exp_elog_beta, &mut rng, None);
            let total: f64 = gamma.iter().sum();
            data.extend(gamma.iter().map(|g| g / total));
        }
        FeatureMatrix::new(x.nrows(), self.k, data, "lda")
    }

    /// Topic-word distributions (`K` rows summing to one).
    pub fn topics(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|t| {
                let col: Vec<f64> = (0..self.p).map(|w| self.lambda[w * self.k + t]).collect();
                let s: f64 = col.iter().sum();
                col.into_iter().map(|v| v / s).collect()
            })
            .collect()
    }
}

/// Fits LDA and returns the document-topic proportions. Tf-idf input is
/// accepted and treated as pseudo-counts.
pub fn lda_fit_transform(
    x: &DocTermMatrix,
    k: usize,
    passes: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    let params = LdaParams {
        passes,
        seed,
        ..LdaParams::new(k)
    };
    LdaModel::fit(x, params)?.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::doc_term::Weighting;
    use rand::Rng;

    /// Half the documents use words 0..10, the other half words 10..20.
    fn disjoint_corpus(n_docs: usize, seed: u64) -> DocTermMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..20).map(|i| format!("w{i:02}")).collect();
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
    fn rows_are_probability_vectors() {
        let x = disjoint_corpus(60, 1);
        let f = lda_fit_transform(&x, 3, 2, 4).unwrap();
        assert_eq!((f.nrows(), f.ncols()), (60, 3));
        for r in f.rows() {
            assert!(r.iter().all(|&v| v >= 0.0));
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn disjoint_vocabularies_separate() {
        for seed in 0..3 {
            let x = disjoint_corpus(200, 10 + seed);
            let f = lda_fit_transform(&x, 2, 5, seed).unwrap();
            let purity = topic_purity(&f);
            assert!(purity >= 0.95, "seed {seed}: purity {purity}");
        }
    }

    fn topic_purity(f: &FeatureMatrix) -> f64 {
        let arg: Vec<usize> = f.rows().map(|r| if r[0] >= r[1] { 0 } else { 1 }).collect();
        let agree = arg.iter().enumerate().filter(|(d, &t)| t == d % 2).count();
        let n = arg.len();
        agree.max(n - agree) as f64 / n as f64
    }

    #[test]
    fn errors_on_too_many_topics() {
        let x = disjoint_corpus(10, 0);
        assert!(lda_fit_transform(&x, 20, 1, 0).is_err());
        assert!(lda_fit_transform(&x, 1, 1, 0).is_err());
    }

    #[test]
    fn empty_document_gets_uniform_row() {
        let vocab: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let x =
            DocTermMatrix::from_triplets(3, vocab, [(0, 0, 2.0), (2, 3, 1.0)], Weighting::Counts)
                .unwrap();
        let f = lda_fit_transform(&x, 2, 1, 0).unwrap();
        assert_eq!(f.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn same_seed_same_output() {
        let x = disjoint_corpus(40, 2);
        assert_eq!(
            lda_fit_transform(&x, 2, 2, 7).unwrap(),
            lda_fit_transform(&x, 2, 2, 7).unwrap()
        );
    }
}
