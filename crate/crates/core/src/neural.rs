//! Single-hidden-layer feed-forward networks trained with Rprop.
//!
//! Weights are stored per layer as row-major matrices with the bias in the
//! last column: `hidden_weights` is `h × (n+1)` and `output_weights` is
//! `m × (h+1)`. Gradients and flattened weight vectors use the same order:
//! the hidden matrix row by row, then the output matrix row by row.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, check_finite, Error, Result};

const MODEL_MAGIC: &str = "marginflow-mlp";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `1 / (1 + e^-x)`, range `[0, 1]`
    Sigmoid,
    /// `2 / (1 + e^-x) - 1`, range `[-1, 1]`
    BipolarSigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::BipolarSigmoid => 2.0 / (1.0 + (-x).exp()) - 1.0,
        }
    }

    /// Derivative expressed through the activation value `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::BipolarSigmoid => 0.5 * (1.0 - y * y),
        }
    }

    pub fn range(self) -> (f64, f64) {
        match self {
            Activation::Sigmoid => (0.0, 1.0),
            Activation::BipolarSigmoid => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::BipolarSigmoid => "bipolar-sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "bipolar-sigmoid" | "bipolar" => Ok(Activation::BipolarSigmoid),
            other => Err(Error::InvalidInput(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_count: usize,
    output_dim: usize,
    hidden_weights: Vec<f64>,
    output_weights: Vec<f64>,
    activation: Activation,
}

impl MlpModel {
    pub fn from_weights(
        (n, h, m): (usize, usize, usize),
        hidden_weights: Vec<f64>,
        output_weights: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if n == 0 || h == 0 || m == 0 {
            return Err(Error::param("dims", "input, hidden and output sizes must be >= 1"));
        }
        check_dim(h * (n + 1), hidden_weights.len())?;
        check_dim(m * (h + 1), output_weights.len())?;
        check_finite(&hidden_weights)?;
        check_finite(&output_weights)?;
        Ok(MlpModel { input_dim: n, hidden_count: h, output_dim: m, hidden_weights, output_weights, activation })
    }

    pub fn zeros(dims: (usize, usize, usize), activation: Activation) -> Result<Self> {
        let (n, h, m) = dims;
        Self::from_weights(dims, vec![0.0; h * (n + 1)], vec![0.0; m * (h + 1)], activation)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden_count
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden_weights(&self) -> &[f64] {
        &self.hidden_weights
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output_weights
    }

    /// Total number of weights `h(n+1) + m(h+1)`.
    pub fn weight_count(&self) -> usize {
        self.hidden_weights.len() + self.output_weights.len()
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        let mut w = self.hidden_weights.clone();
        w.extend_from_slice(&self.output_weights);
        w
    }

    pub fn set_flat_weights(&mut self, weights: &[f64]) -> Result<()> {
        check_dim(self.weight_count(), weights.len())?;
        check_finite(weights)?;
        let split = self.hidden_weights.len();
        self.hidden_weights.copy_from_slice(&weights[..split]);
        self.output_weights.copy_from_slice(&weights[split..]);
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        let mut hidden = vec![0.0; self.hidden_count];
        let mut out = vec![0.0; self.output_dim];
        self.forward_into(x, &mut hidden, &mut out);
        Ok(out)
    }

    fn forward_into(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (n, h) = (self.input_dim, self.hidden_count);
        for (j, hj) in hidden.iter_mut().enumerate() {
            let row = &self.hidden_weights[j * (n + 1)..(j + 1) * (n + 1)];
            let mut net = row[n];
            for (w, xi) in row[..n].iter().zip(x) {
                net += w * xi;
            }
            *hj = self.activation.apply(net);
        }
        for (k, ok) in out.iter_mut().enumerate() {
            let row = &self.output_weights[k * (h + 1)..(k + 1) * (h + 1)];
            let mut net = row[h];
            for (w, hj) in row[..h].iter().zip(hidden.iter()) {
                net += w * hj;
            }
            *ok = self.activation.apply(net);
        }
    }

    /// Argmax over the outputs; ties go to the lowest index.
    pub fn classify(&self, x: &[f64], classes: usize) -> Result<usize> {
        if self.output_dim != classes {
            return Err(Error::DimensionMismatch { expected: classes, found: self.output_dim });
        }
        Ok(argmax(&self.forward(x)?))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "input_dim {}", self.input_dim);
        let _ = writeln!(out, "hidden_count {}", self.hidden_count);
        let _ = writeln!(out, "output_dim {}", self.output_dim);
        let _ = writeln!(out, "activation {}", self.activation);
        let write_rows = |out: &mut String, w: &[f64], cols: usize| {
            for row in w.chunks(cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        };
        out.push_str("hidden\n");
        write_rows(&mut out, &self.hidden_weights, self.input_dim + 1);
        out.push_str("output\n");
        write_rows(&mut out, &self.output_weights, self.hidden_count + 1);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Format(format!("missing {what}")));
        if next("header")? != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
            return Err(Error::Format("not a supported MLP model".into()));
        }
        fn keyed<T: FromStr>(line: &str, key: &str) -> Result<T> {
            match line.split_once(' ') {
                Some((k, v)) if k == key => v.trim().parse().map_err(|_| Error::Format(format!("bad `{key}` value"))),
                _ => Err(Error::Format(format!("expected `{key}`, found `{line}`"))),
            }
        }
        let n: usize = keyed(next("input_dim")?, "input_dim")?;
        let h: usize = keyed(next("hidden_count")?, "hidden_count")?;
        let m: usize = keyed(next("output_dim")?, "output_dim")?;
        let activation: Activation = keyed(next("activation")?, "activation")?;
        let mut read_matrix = |tag: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            if next(tag)? != tag {
                return Err(Error::Format(format!("expected `{tag}` section")));
            }
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let row: Vec<f64> = next("weight row")?
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                    .collect::<Result<_>>()?;
                check_dim(cols, row.len())?;
                values.extend(row);
            }
            Ok(values)
        };
        let hidden = read_matrix("hidden", h, n + 1)?;
        let output = read_matrix("output", m, h + 1)?;
        if lines.next().is_some() {
            return Err(Error::Format("trailing content after output weights".into()));
        }
        MlpModel::from_weights((n, h, m), hidden, output, activation)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Every weight i.i.d. uniform on `[-range, range]`.
pub fn init_uniform(dims: (usize, usize, usize), range: f64, activation: Activation, seed: u64) -> Result<MlpModel> {
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::param("range", "must be finite and > 0"));
    }
    let mut model = MlpModel::zeros(dims, activation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in model.hidden_weights.iter_mut().chain(model.output_weights.iter_mut()) {
        *w = rng.random_range(-range..=range);
    }
    Ok(model)
}

/// Nguyen-Widrow scale factor `0.7 · h^(1/n)`.
pub fn nguyen_widrow_beta(inputs: usize, hidden: usize) -> f64 {
    0.7 * (hidden as f64).powf(1.0 / inputs as f64)
}

/// Nguyen-Widrow initialization: each hidden neuron's input weights are drawn
/// uniformly and rescaled to Euclidean norm `β`, hidden biases are uniform on
/// `[-β, β]`, and the output layer is uniform on `[-0.5, 0.5]`.
pub fn init_nguyen_widrow(dims: (usize, usize, usize), activation: Activation, seed: u64) -> Result<MlpModel> {
    let mut model = MlpModel::zeros(dims, activation)?;
    let (n, h, _) = dims;
    let beta = nguyen_widrow_beta(n, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in model.hidden_weights.chunks_mut(n + 1) {
        let norm = loop {
            for w in row[..n].iter_mut() {
                *w = rng.random_range(-0.5..=0.5);
            }
            let norm = row[..n].iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        for w in row[..n].iter_mut() {
            *w *= beta / norm;
        }
        row[n] = rng.random_range(-beta..=beta);
    }
    for w in model.output_weights.iter_mut() {
        *w = rng.random_range(-0.5..=0.5);
    }
    Ok(model)
}

fn check_batch(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("batch is empty".into()));
    }
    check_dim(inputs.len(), targets.len())?;
    let (lo, hi) = model.activation.range();
    for (x, t) in inputs.iter().zip(targets) {
        check_dim(model.input_dim, x.len())?;
        check_dim(model.output_dim, t.len())?;
        check_finite(x)?;
        if let Some(bad) = t.iter().find(|&&v| !(lo..=hi).contains(&v)) {
            return Err(Error::InvalidInput(format!("target {bad} outside activation range [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// Mean squared error over the batch and output units.
pub fn batch_mse(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_batch(model, inputs, targets)?;
    let mut hidden = vec![0.0; model.hidden_count];
    let mut out = vec![0.0; model.output_dim];
    let mut sum = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        model.forward_into(x, &mut hidden, &mut out);
        for (o, y) in out.iter().zip(t) {
            sum += (o - y) * (o - y);
        }
    }
    Ok(sum / (inputs.len() * model.output_dim) as f64)
}

/// Gradient of the batch MSE `(1/(B·m)) ΣΣ (ŷ - y)²` with respect to every
/// weight, in flattened order.
pub fn backprop_gradient(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_batch(model, inputs, targets)?;
    Ok(mse_and_gradient(model, inputs, targets).1)
}

fn mse_and_gradient(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let (n, h, m) = (model.input_dim, model.hidden_count, model.output_dim);
    let act = model.activation;
    let scale = 1.0 / (inputs.len() * m) as f64;
    let split = model.hidden_weights.len();
    let mut grad = vec![0.0; model.weight_count()];
    let (g_hidden, g_out) = grad.split_at_mut(split);

    let mut hidden = vec![0.0; h];
    let mut out = vec![0.0; m];
    let mut delta_out = vec![0.0; m];
    let mut sum_sq = 0.0;

    for (x, t) in inputs.iter().zip(targets) {
        model.forward_into(x, &mut hidden, &mut out);
        for k in 0..m {
            let err = out[k] - t[k];
            sum_sq += err * err;
            delta_out[k] = 2.0 * scale * err * act.derivative_from_output(out[k]);
            let row = &mut g_out[k * (h + 1)..(k + 1) * (h + 1)];
            for j in 0..h {
                row[j] += delta_out[k] * hidden[j];
            }
            row[h] += delta_out[k];
        }
        for j in 0..h {
            let mut back = 0.0;
            for k in 0..m {
                back += delta_out[k] * model.output_weights[k * (h + 1) + j];
            }
            let delta = back * act.derivative_from_output(hidden[j]);
            let row = &mut g_hidden[j * (n + 1)..(j + 1) * (n + 1)];
            for i in 0..n {
                row[i] += delta * x[i];
            }
            row[n] += delta;
        }
    }
    (sum_sq * scale, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_init: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub max_epochs: usize,
    pub mse_tolerance: f64,
    pub seed: u64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        RpropConfig {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta_init: 0.1,
            delta_min: 1e-6,
            delta_max: 50.0,
            max_epochs: 1000,
            mse_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_plus > 1.0) {
            return Err(Error::param("eta_plus", "must be > 1"));
        }
        if !(self.eta_minus > 0.0 && self.eta_minus < 1.0) {
            return Err(Error::param("eta_minus", "must lie in (0, 1)"));
        }
        if !(self.delta_min > 0.0 && self.delta_min <= self.delta_init && self.delta_init <= self.delta_max) {
            return Err(Error::param("delta_init", "need 0 < delta_min <= delta_init <= delta_max"));
        }
        if !(self.mse_tolerance > 0.0) {
            return Err(Error::param("mse_tolerance", "must be > 0"));
        }
        Ok(())
    }
}

/// Improved Rprop without weight backtracking (iRprop⁻).
///
/// Only the sign of each gradient component is used. After a sign change the
/// step shrinks and the stored gradient is zeroed, so that weight does not
/// move in the current update and the following update starts afresh.
#[derive(Debug, Clone)]
pub struct Rprop {
    eta_plus: f64,
    eta_minus: f64,
    delta_min: f64,
    delta_max: f64,
    steps: Vec<f64>,
    previous: Vec<f64>,
}

impl Rprop {
    pub fn new(weight_count: usize, config: &RpropConfig) -> Self {
        Rprop {
            eta_plus: config.eta_plus,
            eta_minus: config.eta_minus,
            delta_min: config.delta_min,
            delta_max: config.delta_max,
            steps: vec![config.delta_init; weight_count],
            previous: vec![0.0; weight_count],
        }
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.steps
    }

    pub fn update(&mut self, weights: &mut [f64], gradient: &[f64]) {
        debug_assert_eq!(weights.len(), gradient.len());
        for i in 0..weights.len() {
            let mut g = gradient[i];
            // compare signs, not the product, which can underflow
            let agreement = sign(g) * sign(self.previous[i]);
            if agreement > 0.0 {
                self.steps[i] = (self.steps[i] * self.eta_plus).min(self.delta_max);
            } else if agreement < 0.0 {
                self.steps[i] = (self.steps[i] * self.eta_minus).max(self.delta_min);
                g = 0.0;
            }
            if g > 0.0 {
                weights[i] -= self.steps[i];
            } else if g < 0.0 {
                weights[i] += self.steps[i];
            }
            self.previous[i] = g;
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// MSE of the returned model.
    pub final_mse: f64,
    /// MSE at the start of every epoch, before its update.
    pub mse_trace: Vec<f64>,
    pub converged: bool,
}

/// Full-batch Rprop training until the MSE changes by less than
/// `mse_tolerance` between epochs or `max_epochs` is reached.
pub fn rprop_train(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    config: &RpropConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    check_batch(model, inputs, targets)?;
    let mut model = model.clone();
    let mut weights = model.flat_weights();
    let mut rprop = Rprop::new(weights.len(), config);
    let mut trace = Vec::new();
    let mut converged = false;

    for epoch in 0..config.max_epochs {
        let (mse, grad) = mse_and_gradient(&model, inputs, targets);
        if !mse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let previous = trace.last().copied();
        trace.push(mse);
        if let Some(prev) = previous {
            if (mse - prev).abs() < config.mse_tolerance {
                converged = true;
                break;
            }
        }
        rprop.update(&mut weights, &grad);
        model.set_flat_weights(&weights)?;
    }

    let final_mse = if converged {
        *trace.last().expect("converged implies at least two epochs")
    } else {
        mse_and_gradient(&model, inputs, targets).0
    };
    if !final_mse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: trace.len() });
    }
    let report = TrainReport { epochs_run: trace.len(), final_mse, mse_trace: trace, converged };
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetEncoding {
    /// `{0.1, 0.9}` for sigmoid outputs, `{-0.8, 0.8}` for bipolar outputs.
    Softened,
    /// The activation's full range.
    Strict,
}

/// One-of-c target vectors for class labels.
pub fn one_of_c_targets(
    labels: &[usize],
    classes: usize,
    activation: Activation,
    encoding: TargetEncoding,
) -> Result<Vec<Vec<f64>>> {
    let (off, on) = match (activation, encoding) {
        (Activation::Sigmoid, TargetEncoding::Softened) => (0.1, 0.9),
        (Activation::Sigmoid, TargetEncoding::Strict) => (0.0, 1.0),
        (Activation::BipolarSigmoid, TargetEncoding::Softened) => (-0.8, 0.8),
        (Activation::BipolarSigmoid, TargetEncoding::Strict) => (-1.0, 1.0),
    };
    labels
        .iter()
        .map(|&l| {
            if l >= classes {
                return Err(Error::InvalidInput(format!("label {l} outside [0, {classes})")));
            }
            let mut t = vec![off; classes];
            t[l] = on;
            Ok(t)
        })
        .collect()
}
