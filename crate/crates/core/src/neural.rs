//! Small dense feedforward classifier: forward pass, mini-batch SGD training,
//! normalized entropy and layer-wise relevance propagation (ε-rule).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_LRP_EPSILON: f64 = 1e-2;

const FORMAT_HEADER: &str = "sede-densenet v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// Fully connected layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Contract("layer with zero width".into()));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::DimensionMismatch {
                expected: inputs * outputs,
                actual: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::DimensionMismatch {
                expected: outputs,
                actual: bias.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn preactivation(&self, a: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pub preactivations: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl ForwardPass {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("at least one layer")
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.probabilities)
    }
}

/// Per-layer relevance matrix. Dense layers give an `N × 1` column.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub source: String,
}

impl Heatmap {
    pub fn column(layer: usize, values: Vec<f64>, source: impl Into<String>) -> Self {
        Self {
            layer,
            rows: values.len(),
            cols: 1,
            values,
            source: source.into(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

#[derive(Debug, Clone)]
pub struct LabeledInput {
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: DenseNet,
    /// Mean cross-entropy over the dataset after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Gradients laid out like the network's layers.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("network without layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// He-initialised network: ReLU hidden layers, identity output layer.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Contract("need input and output sizes".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let scale = (2.0 / w[0] as f64).sqrt();
                let weights = (0..w[0] * w[1])
                    .map(|_| scale * standard_normal(rng))
                    .collect();
                let act = if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Dense::new(w[0], w[1], weights, vec![0.0; w[1]], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Number of layers a heatmap can be taken from: the input plus each
    /// hidden layer.
    pub fn heatmap_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardPass> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preactivations = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        for layer in &self.layers {
            let z = layer.preactivation(activations.last().expect("nonempty"));
            activations.push(z.iter().map(|&v| layer.activation.apply(v)).collect());
            preactivations.push(z);
        }
        let probabilities = softmax(activations.last().expect("nonempty"));
        Ok(ForwardPass {
            activations,
            preactivations,
            probabilities,
        })
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradient(&self, batch: &[&LabeledInput]) -> Result<(f64, Gradient)> {
        let mut grad = Gradient {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        };
        let mut loss = 0.0;
        for sample in batch {
            if sample.label >= self.class_count() {
                return Err(Error::Contract(format!(
                    "label {} with {} classes",
                    sample.label,
                    self.class_count()
                )));
            }
            let pass = self.forward(&sample.input)?;
            loss += nll(pass.probabilities[sample.label]);
            let mut delta: Vec<f64> = pass.probabilities.clone();
            delta[sample.label] -= 1.0;
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let a_prev = &pass.activations[l];
                for (o, d) in delta.iter().enumerate() {
                    grad.bias[l][o] += d;
                    let row = &mut grad.weights[l][o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, a) in row.iter_mut().zip(a_prev) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    let below = &self.layers[l - 1];
                    let z_prev = &pass.preactivations[l - 1];
                    delta = (0..layer.inputs)
                        .map(|i| {
                            let back: f64 = delta
                                .iter()
                                .enumerate()
                                .map(|(o, d)| d * layer.weight(o, i))
                                .sum();
                            back * below.activation.derivative(z_prev[i])
                        })
                        .collect();
                }
            }
        }
        let n = batch.len().max(1) as f64;
        for g in grad.weights.iter_mut().chain(grad.bias.iter_mut()) {
            g.iter_mut().for_each(|v| *v /= n);
        }
        Ok((loss / n, grad))
    }

    pub fn mean_loss(&self, data: &[LabeledInput]) -> Result<f64> {
        let mut total = 0.0;
        for s in data {
            let p = self.forward(&s.input)?.probabilities;
            total += nll(p[s.label]);
        }
        Ok(total / data.len().max(1) as f64)
    }

    /// Plain mini-batch SGD on a copy of the network.
    pub fn train(&self, data: &[LabeledInput], opts: &TrainOptions) -> Result<TrainOutcome> {
        if data.is_empty() {
            return Err(Error::Contract("empty training set".into()));
        }
        if opts.batch_size == 0 {
            return Err(Error::Contract("batch size must be positive".into()));
        }
        let mut net = self.clone();
        let mut rng = seed::rng(opts.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_losses = Vec::with_capacity(opts.epochs);
        for epoch in 0..opts.epochs {
            // linear decay to a tenth of the initial rate
            let lr = opts.learning_rate * (1.0 - 0.9 * epoch as f64 / opts.epochs as f64);
            order.shuffle(&mut rng);
            for chunk in order.chunks(opts.batch_size) {
                let batch: Vec<&LabeledInput> = chunk.iter().map(|&i| &data[i]).collect();
                let (loss, grad) = net.loss_and_gradient(&batch)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        detail: format!("non-finite batch loss {loss}"),
                    });
                }
                net.apply(&grad, lr);
            }
            let loss = net.mean_loss(data)?;
            if !loss.is_finite() || net.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
                return Err(Error::Training {
                    epoch,
                    detail: format!("non-finite loss {loss} after epoch"),
                });
            }
            epoch_losses.push(loss);
        }
        Ok(TrainOutcome { net, epoch_losses })
    }

    fn apply(&mut self, grad: &Gradient, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights[l]) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grad.bias[l]) {
                *b -= lr * g;
            }
        }
    }

    pub fn accuracy(&self, data: &[LabeledInput]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for s in data {
            if self.forward(&s.input)?.predicted_class() == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    /// Relevance of the neurons of `layer` (0 = input) for the winning class.
    pub fn lrp(&self, input: &[f64], layer: usize, epsilon: f64) -> Result<Heatmap> {
        let pass = self.forward(input)?;
        self.lrp_from_pass(&pass, layer, epsilon, "")
    }

    pub fn lrp_from_pass(&self, pass: &ForwardPass, layer: usize, epsilon: f64, source: &str) -> Result<Heatmap> {
        if layer >= self.heatmap_layers() {
            return Err(Error::Domain(format!(
                "heatmap layer {layer} out of range (network has {} heatmap layers)",
                self.heatmap_layers()
            )));
        }
        let mut maps = self.relevance_down_to(pass, layer, epsilon);
        Ok(Heatmap::column(layer, maps.pop().expect("target layer"), source))
    }

    /// Heatmaps for every layer in one backward sweep, index = layer.
    pub fn lrp_all(&self, pass: &ForwardPass, epsilon: f64, source: &str) -> Vec<Heatmap> {
        let mut maps = self.relevance_down_to(pass, 0, epsilon);
        maps.reverse();
        maps.into_iter()
            .enumerate()
            .map(|(l, v)| Heatmap::column(l, v, source))
            .collect()
    }

    /// ε-rule back-propagation starting from the winning logit. Returns the
    /// relevance vectors from layer `n-1` down to `stop`. The stabiliser uses
    /// the bias-free pre-activation so that relevance is conserved.
    fn relevance_down_to(&self, pass: &ForwardPass, stop: usize, epsilon: f64) -> Vec<Vec<f64>> {
        let winner = pass.predicted_class();
        let mut relevance = vec![0.0; self.class_count()];
        relevance[winner] = pass.logits()[winner];
        let mut out = Vec::new();
        for l in (stop..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a = &pass.activations[l];
            let mut below = vec![0.0; layer.inputs];
            for (k, r_k) in relevance.iter().enumerate() {
                if *r_k == 0.0 {
                    continue;
                }
                let row = &layer.weights[k * layer.inputs..(k + 1) * layer.inputs];
                let z: f64 = row.iter().zip(a).map(|(w, x)| w * x).sum();
                let denom = z + epsilon * if z >= 0.0 { 1.0 } else { -1.0 };
                let scale = r_k / denom;
                for ((r, w), x) in below.iter_mut().zip(row).zip(a) {
                    *r += x * w * scale;
                }
            }
            out.push(below.clone());
            relevance = below;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "layers {}", self.layers.len());
        for layer in &self.layers {
            let _ = writeln!(s, "layer {} {} {}", layer.inputs, layer.outputs, layer.activation.name());
            for row in layer.weights.chunks_exact(layer.inputs) {
                let _ = writeln!(s, "{}", join(row));
            }
            let _ = writeln!(s, "{}", join(&layer.bias));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                position: usize::MAX,
                message: format!("unexpected end of model file, expected {what}"),
            })
        };
        let (n, header) = next("header")?;
        if header.trim() != FORMAT_HEADER {
            return Err(Error::Parse {
                position: n + 1,
                message: format!("unsupported model header `{header}`"),
            });
        }
        let (n, count) = next("layer count")?;
        let count: usize = count
            .trim()
            .strip_prefix("layers ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                position: n + 1,
                message: "expected `layers <n>`".into(),
            })?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, spec) = next("layer spec")?;
            let parts: Vec<&str> = spec.split_whitespace().collect();
            let bad = || Error::Parse {
                position: n + 1,
                message: format!("bad layer spec `{spec}`"),
            };
            if parts.len() != 4 || parts[0] != "layer" {
                return Err(bad());
            }
            let inputs: usize = parts[1].parse().map_err(|_| bad())?;
            let outputs: usize = parts[2].parse().map_err(|_| bad())?;
            let activation = match parts[3] {
                "relu" => Activation::Relu,
                "identity" => Activation::Identity,
                _ => return Err(bad()),
            };
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                let (n, row) = next("weight row")?;
                weights.extend(parse_row(row, inputs, n + 1)?);
            }
            let (n, bias) = next("bias row")?;
            let bias = parse_row(bias, outputs, n + 1)?;
            layers.push(Dense::new(inputs, outputs, weights, bias, activation)?);
        }
        Self::new(layers)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_row(line: &str, expected: usize, position: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            position,
            message: e.to_string(),
        })?;
    if row.len() != expected {
        return Err(Error::Parse {
            position,
            message: format!("expected {expected} values, got {}", row.len()),
        });
    }
    Ok(row)
}

fn nll(p: f64) -> f64 {
    if p.is_nan() {
        f64::NAN
    } else {
        -p.max(f64::MIN_POSITIVE).ln()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Shannon entropy divided by `ln K`, so it lies in `[0, 1]`.
pub fn normalized_entropy(probabilities: &[f64]) -> f64 {
    let k = probabilities.len();
    if k < 2 {
        return 0.0;
    }
    // 1 - sum p ln(kp) / ln k, which is exactly 1 at uniform and 0 at one-hot
    let kf = k as f64;
    let gap: f64 = probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (kf * p).ln())
        .sum();
    (1.0 - gap / kf.ln()).clamp(0.0, 1.0)
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
