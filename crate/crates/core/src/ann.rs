//! Multilayer perceptron on lagged squared returns.
//!
//! Inputs are the previous `lookback` proxy values, min-max scaled with the
//! training range. Every non-input neuron applies a sigmoid to
//! `sum_i w_ji x_i + b_j`, including the single output neuron. Weights are
//! stored one matrix per connection layer, row-major with rows indexed by
//! the receiving neuron.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolError};

pub const DEFAULT_LOOKBACK: usize = 5;
pub const DEFAULT_HIDDEN_SIZES: [usize; 3] = [1, 12, 50];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min_val: f64,
    pub max_val: f64,
}

impl MinMaxScaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let min_val = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_val = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max_val > min_val) || !min_val.is_finite() || !max_val.is_finite() {
            return Err(VolError::DegenerateInput(
                "min-max scaler needs at least two distinct finite values".into(),
            ));
        }
        Ok(Self { min_val, max_val })
    }

    /// No clipping: values outside the fitted range map outside [0, 1].
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min_val) / (self.max_val - self.min_val)
    }

    pub fn invert(&self, y: f64) -> f64 {
        self.min_val + y * (self.max_val - self.min_val)
    }
}

/// Sliding windows `inputs[k] = proxy[k..k+lookback]`, `targets[k] = proxy[k+lookback]`.
pub fn make_windows(proxy: &[f64], lookback: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if lookback == 0 || proxy.len() <= lookback {
        return Err(VolError::InsufficientData(format!(
            "need more than {lookback} values for a lookback of {lookback}, got {}",
            proxy.len()
        )));
    }
    let inputs = proxy.windows(lookback).take(proxy.len() - lookback).map(<[f64]>::to_vec).collect();
    let targets = proxy[lookback..].to_vec();
    Ok((inputs, targets))
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    /// `weights[l]` is `layer_sizes[l+1] x layer_sizes[l]`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub scaler: MinMaxScaler,
    pub rng_seed: u64,
}

/// Same shapes as the model's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

impl MlpModel {
    /// All-zero network with the given layer sizes.
    pub fn zeros(layer_sizes: &[usize], scaler: MinMaxScaler) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) || *layer_sizes.last().unwrap() != 1 {
            return Err(VolError::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|n| vec![0.0; *n]).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases, scaler, rng_seed: 0 })
    }

    /// Weights and biases drawn uniformly from [-0.1, 0.1].
    pub fn random(layer_sizes: &[usize], scaler: MinMaxScaler, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(layer_sizes, scaler)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, b) in m.weights.iter_mut().zip(m.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = rng.gen_range(-0.1..=0.1));
            b.iter_mut().for_each(|x| *x = rng.gen_range(-0.1..=0.1));
        }
        m.rng_seed = seed;
        Ok(m)
    }

    pub fn lookback(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn hidden(&self) -> usize {
        self.layer_sizes[1]
    }

    /// `ann_5_12_1` style identifier.
    pub fn id(&self) -> String {
        let dims: Vec<String> = self.layer_sizes.iter().map(usize::to_string).collect();
        format!("ann_{}", dims.join("_"))
    }

    /// Activations of every layer, input first.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let n_in = self.layer_sizes[l];
            let prev = &acts[l];
            let next: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(j, bj)| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    sigmoid(row.iter().zip(prev).map(|(a, x)| a * x).sum::<f64>() + bj)
                })
                .collect();
            acts.push(next);
        }
        acts
    }

    /// Network output in scaled units, always within (0, 1).
    pub fn forward(&self, input: &[f64]) -> f64 {
        debug_assert_eq!(input.len(), self.lookback());
        self.activations(input).last().expect("output layer")[0]
    }

    /// Analytic gradient of `(target - forward(input))^2`.
    pub fn backprop_gradients(&self, input: &[f64], target: f64) -> Gradients {
        let acts = self.activations(input);
        let mut grads = Gradients::zeros_like(self);
        let y_hat = acts.last().expect("output layer")[0];
        // delta = dLoss/dv for the current layer's pre-activations.
        let mut delta = vec![-2.0 * (target - y_hat) * y_hat * (1.0 - y_hat)];
        for l in (0..self.weights.len()).rev() {
            let n_in = self.layer_sizes[l];
            let prev = &acts[l];
            for (j, d) in delta.iter().enumerate() {
                grads.biases[l][j] = *d;
                for (i, x) in prev.iter().enumerate() {
                    grads.weights[l][j * n_in + i] = d * x;
                }
            }
            if l > 0 {
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(j, d)| d * self.weights[l][j * n_in + i])
                            .sum();
                        back * prev[i] * (1.0 - prev[i])
                    })
                    .collect();
            }
        }
        grads
    }

    fn apply_step(&mut self, grads: &Gradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.iter_mut().zip(g).for_each(|(x, d)| *x -= step * d);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.iter_mut().zip(g).for_each(|(x, d)| *x -= step * d);
        }
    }

    /// Mean per-sample squared error in scaled units.
    pub fn mean_loss(&self, inputs: &[Vec<f64>], targets: &[f64]) -> f64 {
        if inputs.is_empty() {
            return 0.0;
        }
        inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| (t - self.forward(x)).powi(2))
            .sum::<f64>()
            / inputs.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| VolError::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| VolError::Parse { line: 0, message: e.to_string() })?;
        let shapes_ok = m.layer_sizes.len() >= 2
            && m.weights.len() == m.layer_sizes.len() - 1
            && m.biases.len() == m.weights.len()
            && m.layer_sizes.windows(2).zip(&m.weights).all(|(s, w)| w.len() == s[0] * s[1])
            && m.layer_sizes[1..].iter().zip(&m.biases).all(|(n, b)| b.len() == *n);
        if !shapes_ok {
            return Err(VolError::Config("model weight shapes do not match layer sizes".into()));
        }
        Ok(m)
    }
}

/// `lookback` most recent proxy values (original units) to a one-step
/// variance forecast in original units.
pub fn predict_one(model: &MlpModel, recent: &[f64]) -> Result<f64> {
    if recent.len() != model.lookback() || recent.iter().any(|v| !v.is_finite()) {
        return Err(VolError::Usage(format!(
            "expected {} finite proxy values, got {}",
            model.lookback(),
            recent.len()
        )));
    }
    let scaled: Vec<f64> = recent.iter().map(|v| model.scaler.apply(*v)).collect();
    Ok(model.scaler.invert(model.forward(&scaled)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 60, learning_rate: 0.05, batch_size: 32, validation_fraction: 0.10, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(VolError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(VolError::Config("learning rate must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(VolError::Config("batch size must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(VolError::Config("validation fraction must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean squared error (scaled units) of the retained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub train_loss: Vec<f64>,
    /// Empty when training used no validation split.
    pub val_loss: Vec<f64>,
    /// Learning rate in effect after each epoch.
    pub learning_rate: Vec<f64>,
}

impl LearningCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for (e, t) in self.train_loss.iter().enumerate() {
            let v = self.val_loss.get(e).map(f64::to_string).unwrap_or_default();
            writeln!(w, "{},{},{}", e + 1, t, v)?;
        }
        Ok(())
    }
}

/// Chronological train/validation boundary for `n` pairs.
pub fn validation_split(n: usize, fraction: f64) -> usize {
    n - (fraction * n as f64).floor() as usize
}

/// Mini-batch gradient descent on windowed pairs (already scaled).
///
/// The last `validation_fraction` of pairs are held out. Each epoch visits
/// the training pairs in a seeded shuffled order; batch gradients are
/// summed in that fixed order and averaged. When an epoch increases the
/// training loss, the epoch is undone and the learning rate halved.
pub fn train(
    inputs: &[Vec<f64>],
    targets: &[f64],
    hidden: usize,
    scaler: MinMaxScaler,
    config: &TrainConfig,
) -> Result<(MlpModel, LearningCurve)> {
    config.validate()?;
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(VolError::Usage("inputs and targets must be equal-length and non-empty".into()));
    }
    let lookback = inputs[0].len();
    if inputs.iter().any(|x| x.len() != lookback) {
        return Err(VolError::Usage("ragged input windows".into()));
    }
    let n_train = validation_split(inputs.len(), config.validation_fraction);
    if n_train < 10 {
        return Err(VolError::InsufficientData(format!(
            "need at least 10 training pairs after the validation split, got {n_train}"
        )));
    }
    let (train_x, val_x) = inputs.split_at(n_train);
    let (train_y, val_y) = targets.split_at(n_train);

    let mut model = MlpModel::random(&[lookback, hidden, 1], scaler, config.rng_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut lr = config.learning_rate;
    let mut prev_loss = model.mean_loss(train_x, train_y);
    let mut curve = LearningCurve { train_loss: vec![], val_loss: vec![], learning_rate: vec![] };

    for epoch in 1..=config.epochs {
        let snapshot = model.clone();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut acc = Gradients::zeros_like(&model);
            for &k in batch {
                acc.add(&model.backprop_gradients(&train_x[k], train_y[k]));
            }
            model.apply_step(&acc, lr / batch.len() as f64);
        }
        let loss = model.mean_loss(train_x, train_y);
        if !loss.is_finite() {
            return Err(VolError::Divergence { epoch });
        }
        if loss > prev_loss {
            model = snapshot;
            lr *= 0.5;
        } else {
            prev_loss = loss;
        }
        curve.train_loss.push(prev_loss);
        if !val_x.is_empty() {
            curve.val_loss.push(model.mean_loss(val_x, val_y));
        }
        curve.learning_rate.push(lr);
    }
    Ok((model, curve))
}

/// Fits the scaler on `proxy`, windows it and trains a `(lookback, hidden, 1)`
/// network.
pub fn train_on_proxy(
    proxy: &[f64],
    lookback: usize,
    hidden: usize,
    config: &TrainConfig,
) -> Result<(MlpModel, LearningCurve)> {
    let scaler = MinMaxScaler::fit(proxy)?;
    let scaled: Vec<f64> = proxy.iter().map(|v| scaler.apply(*v)).collect();
    let (inputs, targets) = make_windows(&scaled, lookback)?;
    train(&inputs, &targets, hidden, scaler, config)
}
