// SPDX-License-Identifier: Apache-2.0

//! Dense feed-forward classifier: ReLU hidden layers, softmax output,
//! mean cross-entropy loss and plain minibatch SGD.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{ModelFormatError, Reader, Writer};

const MAGIC: &[u8; 4] = b"MLPC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has {got} features, model expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("no training examples")]
    TrainingDataEmpty,
    #[error("invalid classifier config: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] ModelFormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn new(x: Vec<f64>, label: usize) -> Self {
        Example { x, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Parameter-shaped gradient (or update) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln p[label]`, floored so a zero probability stays finite.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Scale each example's loss by the inverse frequency of its class.
    pub class_weighting: bool,
    /// Multiplier on the He-uniform bound `sqrt(6 / fan_in)`.
    pub init_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            class_weighting: false,
            init_gain: 1.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlpError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MlpError::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.init_gain >= 0.0 && self.init_gain.is_finite()) {
            return Err(MlpError::Config(format!("init gain {}", self.init_gain)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Mlp,
    /// Mean (unweighted) training loss after each epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<Dense>,
}

impl Mlp {
    /// All-zero parameters; `dims` is `[inputs, hidden.., classes]`.
    pub fn zeros(dims: &[usize]) -> Result<Self, MlpError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(MlpError::Config(format!("layer dims {dims:?}")));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            layers: dims.windows(2).map(|p| Dense::zeros(p[0], p[1])).collect(),
        })
    }

    /// He-uniform weights, zero biases.
    pub fn init(dims: &[usize], gain: f64, rng: &mut impl Rng) -> Result<Self, MlpError> {
        let mut m = Self::zeros(dims)?;
        for l in &mut m.layers {
            let bound = gain * (6.0 / l.inputs as f64).sqrt();
            for w in &mut l.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat view over every parameter, layer by layer (weights then bias).
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        &mut self.layers.last_mut().expect("non-empty").bias
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() != self.inputs() {
            return Err(MlpError::Shape {
                expected: self.inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.outputs);
            l.apply(&a, &mut z);
            if i + 1 < self.layers.len() {
                a = z.iter().map(|&v| v.max(0.0)).collect();
            }
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_input(x)?;
        let zs = self.pre_activations(x);
        Ok(softmax(zs.last().expect("non-empty")))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, MlpError> {
        Ok(argmax(&self.forward(x)?))
    }

    fn check_batch(&self, batch: &[Example]) -> Result<(), MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        for ex in batch {
            self.check_input(&ex.x)?;
            if ex.label >= self.classes() {
                return Err(MlpError::Label {
                    label: ex.label,
                    classes: self.classes(),
                });
            }
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &[Example]) -> Result<f64, MlpError> {
        self.check_batch(batch)?;
        let total: f64 = batch
            .iter()
            .map(|ex| cross_entropy(&softmax(self.pre_activations(&ex.x).last().expect("non-empty")), ex.label))
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Analytic gradient of [`loss`](Self::loss).
    pub fn backward(&self, batch: &[Example]) -> Result<Gradients, MlpError> {
        self.check_batch(batch)?;
        let mut g = Gradients::zeros_like(self);
        for ex in batch {
            self.accumulate(ex, 1.0, &mut g);
        }
        g.scale(1.0 / batch.len() as f64);
        Ok(g)
    }

    /// Adds `weight * d(-ln p_label)/d(params)` for one example into `g`.
    fn accumulate(&self, ex: &Example, weight: f64, g: &mut Gradients) -> f64 {
        let zs = self.pre_activations(&ex.x);
        let probs = softmax(zs.last().expect("non-empty"));
        let loss = cross_entropy(&probs, ex.label);

        // softmax + cross-entropy: dL/dz = p - onehot
        let mut delta: Vec<f64> = probs;
        delta[ex.label] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= weight);

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let relu_in: Vec<f64>;
            let input: &[f64] = if li == 0 {
                &ex.x
            } else {
                relu_in = zs[li - 1].iter().map(|&v| v.max(0.0)).collect();
                &relu_in
            };
            let gw = &mut g.weights[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[li][o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (gi, &a) in row.iter_mut().zip(input) {
                    *gi += d * a;
                }
            }
            if li > 0 {
                let z_prev = &zs[li - 1];
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += w * d;
                    }
                }
                for (n, &z) in next.iter_mut().zip(z_prev) {
                    if z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        loss
    }

    fn apply(&mut self, g: &Gradients, lr: f64) {
        for (li, l) in self.layers.iter_mut().enumerate() {
            for (w, d) in l.weights.iter_mut().zip(&g.weights[li]) {
                *w -= lr * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias[li]) {
                *b -= lr * d;
            }
        }
    }

    /// Seeded He-uniform init, per-epoch seeded shuffle, minibatch SGD.
    pub fn train(dims: &[usize], data: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome, MlpError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(MlpError::TrainingDataEmpty);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = Self::init(dims, cfg.init_gain, &mut rng)?;
        model.check_batch(data)?;

        let classes = model.classes();
        let class_weight: Vec<f64> = if cfg.class_weighting {
            let mut freq = vec![0usize; classes];
            data.iter().for_each(|e| freq[e.label] += 1);
            let present = freq.iter().filter(|&&f| f > 0).count() as f64;
            freq.iter()
                .map(|&f| if f == 0 { 0.0 } else { data.len() as f64 / (present * f as f64) })
                .collect()
        } else {
            vec![1.0; classes]
        };

        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut trace = Vec::with_capacity(cfg.epochs);
        let mut g = Gradients::zeros_like(&model);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                g.scale(0.0);
                for &i in batch {
                    let ex = &data[i];
                    model.accumulate(ex, class_weight[ex.label], &mut g);
                }
                g.scale(1.0 / batch.len() as f64);
                model.apply(&g, cfg.learning_rate);
            }
            trace.push(model.loss(data)?);
        }
        Ok(TrainOutcome {
            model,
            loss_trace: trace,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.len_prefix(self.dims.len());
        for &d in &self.dims {
            w.u64(d as u64);
        }
        for l in &self.layers {
            w.f64_slice(&l.weights);
            w.f64_slice(&l.bias);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, MlpError> {
        let mut r = Reader::open(data, MAGIC, "MLPC", VERSION)?;
        let n = r.len_prefix(8, "layer dims")?;
        let dims = (0..n)
            .map(|_| r.u64("layer dim").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut m = Self::zeros(&dims)
            .map_err(|_| ModelFormatError::Corrupt(format!("layer dims {dims:?}")))?;
        for l in &mut m.layers {
            let w = r.f64_vec("weights")?;
            let b = r.f64_vec("bias")?;
            if w.len() != l.weights.len() || b.len() != l.bias.len() {
                return Err(ModelFormatError::Corrupt(format!(
                    "layer {}x{} has {} weights and {} biases",
                    l.outputs,
                    l.inputs,
                    w.len(),
                    b.len()
                ))
                .into());
            }
            l.weights = w;
            l.bias = b;
        }
        r.finish()?;
        Ok(m)
    }
}
