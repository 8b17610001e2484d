use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelVector;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    SoftmaxRegression,
    Mlp,
}

/// Architecture of a fully connected classifier: rectifier hidden layers and
/// a log-softmax output. Parameters are laid out layer by layer, each layer
/// as a row-major `out x in` weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub class_count: usize,
}

impl LearnerSpec {
    pub fn softmax_regression(input_dim: usize, class_count: usize) -> Self {
        LearnerSpec {
            kind: LearnerKind::SoftmaxRegression,
            input_dim,
            hidden_dims: Vec::new(),
            class_count,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, class_count: usize) -> Self {
        LearnerSpec {
            kind: LearnerKind::Mlp,
            input_dim,
            hidden_dims,
            class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("learner input dimension must be positive".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Config("learner needs at least two classes".into()));
        }
        match self.kind {
            LearnerKind::SoftmaxRegression if !self.hidden_dims.is_empty() => Err(Error::Config(
                "softmax regression takes no hidden layers".into(),
            )),
            LearnerKind::Mlp if self.hidden_dims.is_empty() => {
                Err(Error::Config("mlp needs at least one hidden layer".into()))
            }
            _ if self.hidden_dims.contains(&0) => {
                Err(Error::Config("hidden layer widths must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.class_count);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub(crate) fn check_model(&self, model: &ModelVector) -> Result<()> {
        let expected = self.param_count();
        if model.len() != expected {
            return Err(Error::Config(format!(
                "model has {} parameters, learner expects {expected}",
                model.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.input_dim {
            return Err(Error::Config(format!(
                "dataset feature dimension {} does not match learner input {}",
                data.dim(),
                self.input_dim
            )));
        }
        if data.class_count() > self.class_count {
            return Err(Error::Config(format!(
                "dataset has {} classes, learner only {}",
                data.class_count(),
                self.class_count
            )));
        }
        Ok(())
    }
}

/// Kaiming-style uniform initialisation, bound `sqrt(6 / fan_in)`, zero biases.
pub fn init_model(spec: &LearnerSpec, seed: u64) -> ModelVector {
    let mut rng = seed::rng(seed);
    let mut params = Vec::with_capacity(spec.param_count());
    for pair in spec.widths().windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ModelVector::new(params)
}

/// Scratch buffers for one forward/backward pass.
pub(crate) struct Workspace {
    widths: Vec<usize>,
    /// Post-activation values per layer; `acts[0]` is the input.
    acts: Vec<Vec<f64>>,
    /// Pre-activation values per non-input layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(spec: &LearnerSpec) -> Self {
        let widths = spec.widths();
        let max = widths.iter().copied().max().unwrap_or(0);
        Workspace {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            pre: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            delta: Vec::with_capacity(max),
            delta_prev: Vec::with_capacity(max),
            widths,
        }
    }

    /// Runs the forward pass and returns the output log-probabilities.
    fn forward(&mut self, params: &[f64], x: &[f64]) -> &[f64] {
        self.acts[0].copy_from_slice(x);
        let layers = self.widths.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let weights = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l];
            let z = &mut self.pre[l];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                *zo = bias[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
            }
            let out = &mut tail[0];
            if l + 1 < layers {
                for (a, &zv) in out.iter_mut().zip(z.iter()) {
                    *a = zv.max(0.0);
                }
            } else {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for (a, &zv) in out.iter_mut().zip(z.iter()) {
                    *a = zv - lse;
                }
            }
        }
        &self.acts[layers]
    }

    /// Forward and backward pass for one example; adds `scale * grad` of the
    /// example's cross-entropy into `grad` and returns the example's loss.
    fn accumulate(&mut self, params: &[f64], x: &[f64], label: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let layers = self.widths.len() - 1;
        let loss = -self.forward(params, x)[label];

        // d loss / d logits = softmax - onehot
        self.delta.clear();
        self.delta
            .extend(self.acts[layers].iter().map(|lp| lp.exp()));
        self.delta[label] -= 1.0;

        let mut end = params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let start = end - (n_in * n_out + n_out);
            let (gw, gb) = grad[start..end].split_at_mut(n_in * n_out);
            let input = &self.acts[l];
            for o in 0..n_out {
                let d = scale * self.delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let weights = &params[start..start + n_in * n_out];
                self.delta_prev.clear();
                self.delta_prev.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = self.delta[o];
                    if d != 0.0 {
                        for (dp, w) in self.delta_prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                            *dp += d * w;
                        }
                    }
                }
                for (dp, &z) in self.delta_prev.iter_mut().zip(&self.pre[l - 1]) {
                    if z <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut self.delta, &mut self.delta_prev);
            }
            end = start;
        }
        loss
    }

    /// Mean cross-entropy over `batch` and its gradient, written into `grad`.
    pub(crate) fn loss_and_gradient(
        &mut self,
        params: &[f64],
        data: &Dataset,
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for &idx in batch {
            total += self.accumulate(params, data.feature(idx), data.label(idx), scale, grad);
        }
        total * scale
    }
}

/// Mean cross-entropy of `model` on the examples `batch` of `data`, and its
/// gradient with respect to every parameter.
pub fn loss_and_gradient(
    model: &ModelVector,
    data: &Dataset,
    batch: &[usize],
    spec: &LearnerSpec,
) -> Result<(f64, ModelVector)> {
    spec.check_model(model)?;
    spec.check_data(data)?;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut ws = Workspace::new(spec);
    let mut grad = vec![0.0; model.len()];
    let loss = ws.loss_and_gradient(model.as_slice(), data, batch, &mut grad);
    Ok((loss, ModelVector::new(grad)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and top-1 accuracy over the whole dataset. Ties in the
/// output go to the lowest class index.
pub fn evaluate(model: &ModelVector, data: &Dataset, spec: &LearnerSpec) -> Result<Evaluation> {
    spec.check_model(model)?;
    spec.check_data(data)?;
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut ws = Workspace::new(spec);
    let mut loss = 0.0;
    let mut correct = 0usize;
    for idx in 0..data.len() {
        let out = ws.forward(model.as_slice(), data.feature(idx));
        let label = data.label(idx);
        loss -= out[label];
        let mut best = 0;
        for (c, v) in out.iter().enumerate() {
            if *v > out[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}
