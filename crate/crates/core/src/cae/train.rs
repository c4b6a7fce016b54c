use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::model::{add_gradients, scale_gradients, CaeConfig, CaeModel, Gradients};
use super::ops::Tensor3;
use crate::embedding::TweetTensor;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Per-epoch mean losses; index 0 is epoch 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl LearningCurve {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, t) in self.train_loss.iter().enumerate() {
            let v = self.val_loss.get(i).copied().unwrap_or(f64::NAN);
            out.push_str(&format!("{},{t:e},{v:e}\n", i + 1));
        }
        out
    }

    /// 1-based epoch with the lowest validation loss (earliest on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        argmin(&self.val_loss).map(|i| i + 1)
    }
}

fn argmin(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x < v[b]) {
            best = Some(i);
        }
    }
    best
}

/// First 1-based epoch whose loss has closed all but `fraction` of the gap
/// between the first epoch and the best epoch.
pub fn epochs_to_plateau(losses: &[f64], fraction: f64) -> Option<usize> {
    let min = losses[argmin(losses)?];
    let span = losses[0] - min;
    losses
        .iter()
        .position(|&l| l - min <= fraction * span)
        .map(|i| i + 1)
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: CaeModel,
    pub best_epoch: usize,
    pub curve: LearningCurve,
    pub optimizer: Adam,
}

/// One Adam update of every parameter tensor.
pub fn adam_step(model: &mut CaeModel, grads: &Gradients, adam: &mut Adam) -> Result<()> {
    let g: Vec<&[f64]> = grads
        .iter()
        .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
        .collect();
    adam.step(&mut model.parameters_mut(), &g)
}

pub fn train(config: &CaeConfig, corpus: &[TweetTensor]) -> Result<Trained> {
    train_with_progress(config, corpus, |_, _, _| {})
}

/// Trains for `max_epochs`, calling `progress(epoch, train, val)` after each.
pub fn train_with_progress(
    config: &CaeConfig,
    corpus: &[TweetTensor],
    progress: impl FnMut(usize, f64, f64),
) -> Result<Trained> {
    let model = CaeModel::new(config.clone())?;
    let samples: Vec<Tensor3> = corpus
        .iter()
        .map(|t| model.input_tensor(t))
        .collect::<Result<_>>()?;
    train_tensors(model, &samples, progress)
}

pub fn train_tensors(
    mut model: CaeModel,
    samples: &[Tensor3],
    mut progress: impl FnMut(usize, f64, f64),
) -> Result<Trained> {
    let config = model.config.clone();
    config.validate()?;
    let min_n = (config.batch_size as f64 / (1.0 - config.validation_fraction)).ceil() as usize;
    if samples.len() < min_n {
        return Err(Error::invalid(format!(
            "corpus of {} tensors is smaller than the {min_n} needed for batch size {} with a {} validation split",
            samples.len(),
            config.batch_size,
            config.validation_fraction
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() as f64 * config.validation_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(config.learning_rate);
    let mut curve = LearningCurve::default();
    let mut best = (f64::INFINITY, 0usize, model.clone());

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let per_sample: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = model.zero_gradients();
                    let l = model.accumulate_gradients(&samples[i], &mut g)?;
                    Ok((l, g))
                })
                .collect::<Result<_>>()?;
            let mut grads = model.zero_gradients();
            for (l, g) in &per_sample {
                sum += l;
                add_gradients(&mut grads, g);
            }
            scale_gradients(&mut grads, 1.0 / batch.len() as f64);
            adam_step(&mut model, &grads, &mut adam)?;
        }
        let train_loss = sum / train_idx.len() as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            mean_loss(&model, samples, val_idx)?
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "loss diverged at epoch {epoch} (train {train_loss}, validation {val_loss})"
            )));
        }
        curve.train_loss.push(train_loss);
        curve.val_loss.push(val_loss);
        log::info!("epoch {epoch}: train {train_loss:.6e}, validation {val_loss:.6e}");
        progress(epoch, train_loss, val_loss);
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
    }

    let (_, best_epoch, best_model) = best;
    Ok(Trained {
        model: if best_epoch == 0 { model } else { best_model },
        best_epoch,
        curve,
        optimizer: adam,
    })
}

fn mean_loss(model: &CaeModel, samples: &[Tensor3], idx: &[usize]) -> Result<f64> {
    let losses: Vec<f64> = idx
        .par_iter()
        .map(|&i| model.loss(&samples[i]))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / idx.len() as f64)
}

/// `N × 24` matrix of bottleneck codes, in corpus order.
pub fn featurize(model: &CaeModel, corpus: &[TweetTensor]) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = corpus
        .par_iter()
        .map(|t| model.encode_tweet(t))
        .collect::<Result<_>>()?;
    let label = if model.config.l2_constrained { "l2cae" } else { "cae" };
    let cols = model.config.representation_len();
    FeatureMatrix::new(rows.len(), cols, rows.concat(), label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(constrained: bool) -> CaeConfig {
        CaeConfig {
            input_rows: 32,
            input_cols: 10,
            encoder_filters: [4, 2, 1],
            pool_sizes: [(2, 5), (2, 1), (2, 2)],
            learning_rate: 1e-2,
            batch_size: 4,
            max_epochs: 8,
            validation_fraction: 0.2,
            l2_constrained: constrained,
            seed: 5,
        }
    }

    fn corpus(n: usize) -> Vec<TweetTensor> {
        (0..n)
            .map(|k| {
                let v = (0..320)
                    .map(|i| if i < 40 * (1 + k % 3) { ((i * (k + 1)) as f64 * 0.37).sin() } else { 0.0 })
                    .collect();
                TweetTensor::from_values(10, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn plateau_definition() {
        assert_eq!(epochs_to_plateau(&[10.0, 5.0, 1.2, 1.0, 1.0], 0.05), Some(3));
        assert_eq!(epochs_to_plateau(&[1.0, 2.0], 0.05), Some(1));
        assert_eq!(epochs_to_plateau(&[], 0.05), None);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let data = corpus(30);
        let a = train(&tiny(false), &data).unwrap();
        let b = train(&tiny(false), &data).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.curve.epochs(), 8);
        assert!(a.curve.train_loss[4] < a.curve.train_loss[0]);
        assert_eq!(Some(a.best_epoch), a.curve.best_epoch());
        assert!(a.curve.to_csv().starts_with("epoch,train_loss,val_loss\n1,"));
    }

    #[test]
    fn constrained_features_are_unit_rows() {
        let data = corpus(30);
        let t = train(&tiny(true), &data).unwrap();
        let f = featurize(&t.model, &data).unwrap();
        assert_eq!((f.nrows(), f.ncols()), (30, 4));
        for n in f.row_norms() {
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_tensors_stay_finite() {
        let data = vec![corpus(1)[0].clone(); 20];
        let t = train(&tiny(false), &data).unwrap();
        assert!(t.curve.val_loss.iter().all(|v| v.is_finite()));
        let f = featurize(&t.model, &data[..3]).unwrap();
        assert_eq!(f.row(0), f.row(2));
    }

    #[test]
    fn too_small_corpus_errors() {
        assert!(train(&tiny(false), &corpus(4)).is_err());
    }
}
