//! Built-in classifier: multinomial logistic regression, optionally with one
//! rectified hidden layer, trained by seeded mini-batch SGD.
//!
//! Inputs are standardized with statistics frozen at fit time. The objective
//! is mean cross-entropy plus `l2 / 2` times the squared norm of the weight
//! matrices (biases are not penalized). The step size follows
//! `lr0 * decay_factor ^ floor(epoch / decay_every)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ProbabilityMatrix;
use crate::seed::rng_from_seed;

const STD_FLOOR: f64 = 1e-12;

/// Output logit given to the only observed class when training data holds a
/// single label; `1 / (1 + (C - 1) e^-20)` is within 1e-8 of one for any
/// realistic class count.
const SINGLE_CLASS_LOGIT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub minibatch: usize,
    /// 0 selects the linear model.
    pub hidden_dim: usize,
    pub l2: f64,
    pub seed: u64,
    /// Continue from the previous model's weights instead of re-initializing.
    pub warm_start: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr0: 0.01,
            decay_factor: 0.1,
            decay_every: 10,
            minibatch: 64,
            hidden_dim: 0,
            l2: 1e-4,
            seed: 0,
            warm_start: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("learner epochs must be positive"));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::config(format!(
                "decay factor must lie in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::config("decay interval must be positive"));
        }
        if self.minibatch == 0 {
            return Err(Error::config("minibatch size must be positive"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }

    /// Step size used during `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = (epoch / self.decay_every) as i32;
        self.lr0 * self.decay_factor.powi(drops)
    }
}

/// Affine map `x W + b`, `W` stored `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weights: Array2::from_shape_simple_fn((inputs, outputs), || {
                rng.random_range(-bound..bound)
            }),
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Trainable parameters: optional hidden layer followed by the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub hidden: Option<Dense>,
    pub output: Dense,
}

impl Params {
    fn init(inputs: usize, hidden_dim: usize, classes: usize, rng: &mut impl Rng) -> Self {
        if hidden_dim == 0 {
            Self {
                hidden: None,
                output: Dense::uniform(inputs, classes, rng),
            }
        } else {
            let hidden = Dense::uniform(inputs, hidden_dim, rng);
            let output = Dense::uniform(hidden_dim, classes, rng);
            Self {
                hidden: Some(hidden),
                output,
            }
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(std::iter::once(&self.output))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.output))
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(Dense::len).sum()
    }

    /// All parameters in layer order, weights (row-major) before bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in self.layers() {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    /// Inverse of [`Params::to_flat`] for parameters shaped like `self`.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut next = self.clone();
        let mut rest = flat;
        for layer in next.layers_mut() {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rest[0];
                rest = &rest[1..];
            }
        }
        next
    }

    fn axpy(&mut self, alpha: f64, grad: &Params) {
        for (p, g) in self.layers_mut().zip(grad.layers()) {
            p.weights.scaled_add(alpha, &g.weights);
            p.bias.scaled_add(alpha, &g.bias);
        }
    }

    fn hidden_activations(&self, z: ArrayView2<'_, f64>) -> Option<(Array2<f64>, Array2<f64>)> {
        self.hidden.as_ref().map(|h| {
            let pre = h.forward(z);
            let act = pre.mapv(|v| v.max(0.0));
            (pre, act)
        })
    }

    fn logits(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        match self.hidden_activations(z) {
            Some((_, act)) => self.output.forward(act.view()),
            None => self.output.forward(z),
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Objective and its gradient on already-standardized inputs `z`.
pub fn loss_and_gradient(
    params: &Params,
    z: ArrayView2<'_, f64>,
    labels: &[usize],
    l2: f64,
) -> (f64, Params) {
    let n = z.nrows();
    assert_eq!(n, labels.len(), "one label per row");
    assert!(n > 0, "loss over an empty batch");
    let hidden = params.hidden_activations(z);
    let features = hidden.as_ref().map_or(z, |(_, act)| act.view());
    let probs = softmax_rows(&params.output.forward(features));

    let mut data_loss = 0.0;
    let mut delta = probs;
    for (i, &y) in labels.iter().enumerate() {
        data_loss -= delta[[i, y]].max(f64::MIN_POSITIVE).ln();
        delta[[i, y]] -= 1.0;
    }
    data_loss /= n as f64;
    delta /= n as f64;

    let penalty: f64 = params
        .layers()
        .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
        .sum::<f64>()
        * l2
        / 2.0;

    let output = Dense {
        weights: features.t().dot(&delta) + &(&params.output.weights * l2),
        bias: delta.sum_axis(Axis(0)),
    };
    let hidden_grad = match (&params.hidden, &hidden) {
        (Some(layer), Some((pre, _))) => {
            let mut back = delta.dot(&params.output.weights.t());
            back.zip_mut_with(pre, |g, &p| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
            Some(Dense {
                weights: z.t().dot(&back) + &(&layer.weights * l2),
                bias: back.sum_axis(Axis(0)),
            })
        }
        _ => None,
    };
    (
        data_loss + penalty,
        Params {
            hidden: hidden_grad,
            output,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    mean: Array1<f64>,
    std: Array1<f64>,
    params: Params,
    num_classes: usize,
}

impl Model {
    /// Assembles a model from explicit parts. Standard deviations are floored
    /// at 1e-12.
    pub fn from_parts(
        mean: Array1<f64>,
        std: Array1<f64>,
        params: Params,
        num_classes: usize,
    ) -> Result<Self> {
        let d = mean.len();
        let first_in = params.layers().next().expect("output layer").weights.nrows();
        if std.len() != d || first_in != d {
            return Err(Error::Shape {
                expected: format!("{d} input feature(s)"),
                actual: format!("std of length {}, first layer with {first_in} input(s)", std.len()),
            });
        }
        if let Some(h) = &params.hidden {
            if h.weights.ncols() != params.output.weights.nrows() {
                return Err(Error::Shape {
                    expected: format!("{} hidden unit(s)", h.weights.ncols()),
                    actual: format!("output layer with {} input(s)", params.output.weights.nrows()),
                });
            }
        }
        if params.output.weights.ncols() != num_classes || params.output.bias.len() != num_classes {
            return Err(Error::Shape {
                expected: format!("{num_classes} output(s)"),
                actual: format!("{}", params.output.weights.ncols()),
            });
        }
        Ok(Self {
            mean,
            std: std.mapv(|s| s.max(STD_FLOOR)),
            params,
            num_classes,
        })
    }

    /// All-zero weights; predicts the uniform distribution everywhere.
    pub fn zeros(num_features: usize, hidden_dim: usize, num_classes: usize) -> Self {
        let params = if hidden_dim == 0 {
            Params {
                hidden: None,
                output: Dense::zeros(num_features, num_classes),
            }
        } else {
            Params {
                hidden: Some(Dense::zeros(num_features, hidden_dim)),
                output: Dense::zeros(hidden_dim, num_classes),
            }
        };
        Self {
            mean: Array1::zeros(num_features),
            std: Array1::ones(num_features),
            params,
            num_classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.mean.len()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn std(&self) -> &Array1<f64> {
        &self.std
    }

    /// Width of the hidden layer, 0 for the linear model.
    pub fn hidden_dim(&self) -> usize {
        self.params.hidden.as_ref().map_or(0, |h| h.weights.ncols())
    }

    pub fn embedding_dim(&self) -> usize {
        self.params
            .hidden
            .as_ref()
            .map_or(self.num_features(), |h| h.weights.ncols())
    }

    fn check_width(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.num_features() {
            return Err(Error::Shape {
                expected: format!("{} feature column(s)", self.num_features()),
                actual: format!("{}", x.ncols()),
            });
        }
        Ok(())
    }

    pub fn standardize(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<ProbabilityMatrix> {
        let z = self.standardize(x)?;
        ProbabilityMatrix::new(softmax_rows(&self.params.logits(z.view())))
    }

    /// Feature space used for diversity: standardized inputs for the linear
    /// model, rectified hidden activations otherwise.
    pub fn embed(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.standardize(x)?;
        Ok(match self.params.hidden_activations(z.view()) {
            Some((_, act)) => act,
            None => z,
        })
    }

    /// Fraction of rows whose argmax prediction equals the label.
    pub fn evaluate(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        if x.nrows() != labels.len() {
            return Err(Error::Shape {
                expected: format!("{} label(s)", x.nrows()),
                actual: format!("{}", labels.len()),
            });
        }
        accuracy(&self.predict_proba(x)?, labels)
    }
}

/// Accuracy of argmax predictions (ties to the lower class).
pub fn accuracy(probs: &ProbabilityMatrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Evaluation("empty evaluation set".into()));
    }
    if probs.nrows() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} label(s)", probs.nrows()),
            actual: format!("{}", labels.len()),
        });
    }
    let hits = probs
        .argmax()
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Mean of the minibatch objectives seen during each epoch, each measured
    /// before its update. With a single full batch this is the full-data
    /// objective at the start of the epoch.
    pub epoch_loss: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

pub fn train(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    cfg: &LearnerConfig,
) -> Result<Model> {
    train_traced(x, labels, num_classes, cfg, None).map(|(m, _)| m)
}

/// Trains a model, optionally starting from `warm`'s weights.
pub fn train_traced(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    cfg: &LearnerConfig,
    warm: Option<&Model>,
) -> Result<(Model, TrainTrace)> {
    cfg.validate()?;
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::Training("cannot train on an empty labeled set".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} label(s)"),
            actual: format!("{}", labels.len()),
        });
    }
    if num_classes < 2 {
        return Err(Error::config(format!("need at least 2 classes, got {num_classes}")));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::data(format!("label {y} outside [0, {num_classes})")));
    }

    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let std = x.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
    let z = (&x - &mean) / &std;

    let mut rng = rng_from_seed(cfg.seed);
    let mut params = match warm {
        Some(prev)
            if prev.num_features() == d
                && prev.num_classes == num_classes
                && prev.hidden_dim() == cfg.hidden_dim =>
        {
            prev.params.clone()
        }
        _ => Params::init(d, cfg.hidden_dim, num_classes, &mut rng),
    };
    let mut trace = TrainTrace {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        learning_rates: Vec::with_capacity(cfg.epochs),
    };

    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        params.output.weights.fill(0.0);
        params.output.bias.fill(0.0);
        params.output.bias[first] = SINGLE_CLASS_LOGIT;
        let model = Model::from_parts(mean, std, params, num_classes)?;
        return Ok((model, trace));
    }

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.minibatch) {
            let zb = z.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = loss_and_gradient(&params, zb.view(), &yb, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            params.axpy(-lr, &grad);
            total += loss;
            batches += 1;
        }
        trace.epoch_loss.push(total / batches as f64);
        trace.learning_rates.push(lr);
        if params.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    let model = Model::from_parts(mean, std, params, num_classes)?;
    Ok((model, trace))
}
