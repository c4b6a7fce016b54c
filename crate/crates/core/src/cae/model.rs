use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{
    conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, relu_backward_inplace, relu_inplace,
    upsample2d, upsample2d_backward, ConvLayer, Tensor3, KERNEL,
};
use crate::embedding::TweetTensor;
use crate::error::{Error, Result};

/// Guard added to the bottleneck norm before dividing.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaeConfig {
    pub input_rows: usize,
    pub input_cols: usize,
    pub encoder_filters: [usize; 3],
    pub pool_sizes: [(usize, usize); 3],
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub l2_constrained: bool,
    pub seed: u64,
}

impl CaeConfig {
    /// Standard architecture for `dim`-wide embeddings. 300 (static word
    /// vectors) and 768 (BERT) use the published pooling; other widths
    /// divisible by 12 get the most balanced pair of column factors that
    /// still ends in a 4×6 bottleneck.
    pub fn for_embedding_dim(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(12) {
            return Err(Error::invalid(format!(
                "no default pooling for {dim}-dimensional embeddings (needs a multiple of 12); set pool_sizes explicitly"
            )));
        }
        let m = dim / 12;
        let a = (1..=m).take_while(|a| a * a <= m).filter(|a| m.is_multiple_of(*a)).last().unwrap_or(1);
        let pool_sizes = [(2, m / a), (2, a), (2, 2)];
        Ok(CaeConfig {
            input_rows: crate::embedding::SEQ_LEN,
            input_cols: dim,
            encoder_filters: [64, 32, 1],
            pool_sizes,
            learning_rate: 1e-5,
            batch_size: 32,
            max_epochs: 50,
            validation_fraction: 0.2,
            l2_constrained: false,
            seed: 0,
        })
    }

    pub fn constrained(mut self, on: bool) -> Self {
        self.l2_constrained = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (pr, pc) = self
            .pool_sizes
            .iter()
            .fold((1, 1), |(r, c), &(a, b)| (r * a, c * b));
        if pr == 0 || pc == 0 || !self.input_rows.is_multiple_of(pr) || !self.input_cols.is_multiple_of(pc) {
            return Err(Error::invalid(format!(
                "input {}x{} not divisible by pooling product {pr}x{pc}",
                self.input_rows, self.input_cols
            )));
        }
        if self.encoder_filters.contains(&0) {
            return Err(Error::invalid("encoder filter counts must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Decoder filter counts, the encoder's in reverse.
    pub fn decoder_filters(&self) -> [usize; 3] {
        let [a, b, c] = self.encoder_filters;
        [c, b, a]
    }

    /// `(channels, rows, cols)` after each encoder block.
    pub fn encoder_shapes(&self) -> [(usize, usize, usize); 3] {
        let mut h = self.input_rows;
        let mut w = self.input_cols;
        let mut out = [(0, 0, 0); 3];
        for (s, &(r, c)) in self.pool_sizes.iter().enumerate() {
            h /= r;
            w /= c;
            out[s] = (self.encoder_filters[s], h, w);
        }
        out
    }

    pub fn bottleneck_shape(&self) -> (usize, usize, usize) {
        self.encoder_shapes()[2]
    }

    pub fn representation_len(&self) -> usize {
        let (c, h, w) = self.bottleneck_shape();
        c * h * w
    }

    fn layer_channels(&self) -> [(usize, usize); 7] {
        let [e0, e1, e2] = self.encoder_filters;
        let [d0, d1, d2] = self.decoder_filters();
        [
            (1, e0),
            (e0, e1),
            (e1, e2),
            (e2, d0),
            (d0, d1),
            (d1, d2),
            (d2, 1),
        ]
    }
}

/// Seven 3×3 convolutions: three encoder, three decoder, one linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub config: CaeConfig,
    pub layers: Vec<ConvLayer>,
}

/// Gradients share the parameter layout.
pub type Gradients = Vec<ConvLayer>;

struct Stage {
    input: Tensor3,
    activated: Tensor3,
    argmax: Vec<usize>,
}

struct Trace {
    enc: Vec<Stage>,
    u: Tensor3,
    u_norm: f64,
    dec_inputs: Vec<Tensor3>,
    dec_activated: Vec<Tensor3>,
    out_input: Tensor3,
    output: Tensor3,
}

impl CaeModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(config: CaeConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_channels()
            .iter()
            .map(|&(ci, co)| {
                let mut layer = ConvLayer::zeros(ci, co);
                let fan = ((ci + co) * KERNEL * KERNEL) as f64;
                let limit = (6.0 / fan).sqrt();
                for w in &mut layer.weights {
                    *w = rng.random_range(-limit..limit);
                }
                layer
            })
            .collect();
        Ok(CaeModel { config, layers })
    }

    pub fn zeroed(config: CaeConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_channels()
            .iter()
            .map(|&(ci, co)| ConvLayer::zeros(ci, co))
            .collect();
        Ok(CaeModel { config, layers })
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers
            .iter()
            .map(|l| ConvLayer::zeros(l.c_in, l.c_out))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(ConvLayer::n_params).sum()
    }

    /// Parameter tensors in declaration order (weights then bias, per layer).
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn input_tensor(&self, t: &TweetTensor) -> Result<Tensor3> {
        let (r, c) = (self.config.input_rows, self.config.input_cols);
        if t.rows() != r || t.dim() != c {
            return Err(Error::shape(format!("{r}x{c}"), format!("{}x{}", t.rows(), t.dim())));
        }
        Tensor3::from_vec(1, r, c, t.values().to_vec())
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        let want = (1, self.config.input_rows, self.config.input_cols);
        if x.shape() != want {
            return Err(Error::shape(format!("{want:?}"), format!("{:?}", x.shape())));
        }
        Ok(())
    }

    fn encode_trace(&self, x: &Tensor3) -> Result<(Vec<Stage>, Tensor3)> {
        self.check_input(x)?;
        let mut stages = Vec::with_capacity(3);
        let mut cur = x.clone();
        for s in 0..3 {
            let mut a = conv2d(&cur, &self.layers[s])?;
            relu_inplace(&mut a);
            let (pooled, argmax) = maxpool2d(&a, self.config.pool_sizes[s])?;
            stages.push(Stage {
                input: cur,
                activated: a,
                argmax,
            });
            cur = pooled;
        }
        Ok((stages, cur))
    }

    fn normalize(&self, u: &Tensor3) -> (Tensor3, f64) {
        let n = u.norm();
        if !self.config.l2_constrained {
            return (u.clone(), n);
        }
        let mut y = u.clone();
        let scale = 1.0 / (n + NORM_EPS);
        y.data.iter_mut().for_each(|v| *v *= scale);
        (y, n)
    }

    fn decode_trace(&self, y: Tensor3) -> Result<(Vec<Tensor3>, Vec<Tensor3>, Tensor3, Tensor3)> {
        let mut inputs = Vec::with_capacity(3);
        let mut activated = Vec::with_capacity(3);
        let mut cur = y;
        for t in 0..3 {
            let mut a = conv2d(&cur, &self.layers[3 + t])?;
            relu_inplace(&mut a);
            let up = upsample2d(&a, self.config.pool_sizes[2 - t]);
            inputs.push(cur);
            activated.push(a);
            cur = up;
        }
        let output = conv2d(&cur, &self.layers[6])?;
        Ok((inputs, activated, cur, output))
    }

    fn forward(&self, x: &Tensor3) -> Result<Trace> {
        let (enc, u) = self.encode_trace(x)?;
        let (y, u_norm) = self.normalize(&u);
        let (dec_inputs, dec_activated, out_input, output) = self.decode_trace(y)?;
        Ok(Trace {
            enc,
            u,
            u_norm,
            dec_inputs,
            dec_activated,
            out_input,
            output,
        })
    }

    /// Bottleneck activation before normalization, as a tensor.
    pub fn encode_raw(&self, x: &Tensor3) -> Result<Tensor3> {
        Ok(self.encode_trace(x)?.1)
    }

    /// Flattened bottleneck; unit length when the model is constrained.
    pub fn encode(&self, x: &Tensor3) -> Result<Vec<f64>> {
        let u = self.encode_raw(x)?;
        Ok(self.normalize(&u).0.data)
    }

    pub fn encode_tweet(&self, t: &TweetTensor) -> Result<Vec<f64>> {
        self.encode(&self.input_tensor(t)?)
    }

    pub fn decode(&self, rep: &Tensor3) -> Result<Tensor3> {
        let want = self.config.bottleneck_shape();
        if rep.shape() != want {
            return Err(Error::shape(format!("{want:?}"), format!("{:?}", rep.shape())));
        }
        Ok(self.decode_trace(rep.clone())?.3)
    }

    pub fn reconstruct(&self, x: &Tensor3) -> Result<Tensor3> {
        Ok(self.forward(x)?.output)
    }

    /// Reconstruction loss of one sample; gradients are added into `grads`.
    pub fn accumulate_gradients(&self, x: &Tensor3, grads: &mut Gradients) -> Result<f64> {
        let tr = self.forward(x)?;
        let n = x.data.len() as f64;
        let loss = super::ops::mse_loss(&tr.output.data, &x.data)?;
        let mut d = Tensor3 {
            data: tr
                .output
                .data
                .iter()
                .zip(&x.data)
                .map(|(o, t)| 2.0 * (o - t) / n)
                .collect(),
            ..tr.output.clone()
        };

        d = conv2d_backward(&tr.out_input, &self.layers[6], &d, &mut grads[6], true)
            .expect("input gradient requested");
        for t in (0..3).rev() {
            let mut g = upsample2d_backward(&d, self.config.pool_sizes[2 - t]);
            relu_backward_inplace(&mut g, &tr.dec_activated[t]);
            d = conv2d_backward(&tr.dec_inputs[t], &self.layers[3 + t], &g, &mut grads[3 + t], true)
                .expect("input gradient requested");
        }

        if self.config.l2_constrained {
            d = normalize_backward(&tr.u, tr.u_norm, &d);
        }

        for s in (0..3).rev() {
            let stage = &tr.enc[s];
            let mut g = maxpool2d_backward(&d, &stage.argmax, stage.activated.shape());
            relu_backward_inplace(&mut g, &stage.activated);
            match conv2d_backward(&stage.input, &self.layers[s], &g, &mut grads[s], s > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
        Ok(loss)
    }

    /// Mean loss and mean gradients over a batch.
    pub fn loss_and_gradients(&self, batch: &[Tensor3]) -> Result<(f64, Gradients)> {
        let mut grads = self.zero_gradients();
        let mut total = 0.0;
        for x in batch {
            total += self.accumulate_gradients(x, &mut grads)?;
        }
        let scale = 1.0 / batch.len().max(1) as f64;
        scale_gradients(&mut grads, scale);
        Ok((total * scale, grads))
    }

    pub fn loss(&self, x: &Tensor3) -> Result<f64> {
        super::ops::mse_loss(&self.reconstruct(x)?.data, &x.data)
    }
}

pub(crate) fn scale_gradients(grads: &mut Gradients, scale: f64) {
    for g in grads {
        g.weights.iter_mut().for_each(|v| *v *= scale);
        g.bias.iter_mut().for_each(|v| *v *= scale);
    }
}

pub(crate) fn add_gradients(into: &mut Gradients, other: &Gradients) {
    for (a, b) in into.iter_mut().zip(other) {
        a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
        a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
    }
}

/// Backward through `y = u / (‖u‖ + ε)`:
/// `∂L/∂u = g/(n+ε) − u (u·g) / (n (n+ε)²)`. A zero bottleneck passes no gradient.
fn normalize_backward(u: &Tensor3, n: f64, g: &Tensor3) -> Tensor3 {
    let mut out = Tensor3::zeros(u.c, u.h, u.w);
    if n == 0.0 {
        return out;
    }
    let denom = n + NORM_EPS;
    let dot: f64 = u.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
    let k = dot / (n * denom * denom);
    for ((o, &ui), &gi) in out.data.iter_mut().zip(&u.data).zip(&g.data) {
        *o = gi / denom - ui * k;
    }
    out
}
