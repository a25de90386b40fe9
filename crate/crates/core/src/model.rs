//! Small feed-forward classifier with an explicit feature/classifier split.
//!
//! The feature extractor is a stack of dense layers
//! `input -> hidden... -> feature_dim`, each followed by the activation. The
//! classifier is a single affine map `feature_dim -> num_classes`. Parameters
//! live in a [`ParamVector`]; each dense layer stores its weight matrix
//! (row-major, `out x in`) followed by its bias.
//!
//! Inputs are flat row-major buffers of shape `(n, input_dim)`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Layout, ParamVector};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

/// Position of one dense layer inside a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseShape {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Offset of the weight matrix; the bias follows at `offset + in_dim * out_dim`.
    pub offset: usize,
}

impl DenseShape {
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.in_dim * self.out_dim]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.in_dim * self.out_dim;
        &p[start..start + self.out_dim]
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("model: {m}")));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden dims must be positive");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        Ok(())
    }

    /// Feature-extractor layers, offsets relative to the full vector.
    pub fn feature_layers(&self) -> Vec<DenseShape> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.feature_dim);
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let shape = DenseShape {
                    in_dim: w[0],
                    out_dim: w[1],
                    offset,
                };
                offset += shape.param_count();
                shape
            })
            .collect()
    }

    pub fn classifier_layer(&self) -> DenseShape {
        DenseShape {
            in_dim: self.feature_dim,
            out_dim: self.num_classes,
            offset: self.feature_param_count(),
        }
    }

    pub fn feature_param_count(&self) -> usize {
        self.feature_layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn classifier_param_count(&self) -> usize {
        self.feature_dim * self.num_classes + self.num_classes
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.feature_param_count(), self.classifier_param_count())
    }

    /// Same feature extractor, different number of classes.
    pub fn with_classes(&self, num_classes: usize) -> MlpSpec {
        MlpSpec {
            num_classes,
            ..self.clone()
        }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if *params.layout() != self.layout() {
            return Err(Error::Shape(format!(
                "parameter layout {:?} does not match model layout {:?}",
                params.layout(),
                self.layout()
            )));
        }
        Ok(())
    }

    fn rows(&self, inputs: &[f64]) -> Result<usize> {
        if !inputs.len().is_multiple_of(self.input_dim) {
            return Err(Error::Shape(format!(
                "{} input values is not a multiple of input_dim {}",
                inputs.len(),
                self.input_dim
            )));
        }
        Ok(inputs.len() / self.input_dim)
    }
}

/// Labeled samples, row-major inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub input_dim: usize,
}

impl Minibatch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if input_dim == 0 || inputs.len() != labels.len() * input_dim {
            return Err(Error::Shape(format!(
                "{} inputs for {} labels of dimension {input_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn validate_for(&self, spec: &MlpSpec) -> Result<()> {
        if self.input_dim != spec.input_dim {
            return Err(Error::Shape(format!(
                "batch input_dim {} vs model input_dim {}",
                self.input_dim, spec.input_dim
            )));
        }
        if self.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= spec.num_classes) {
            return Err(Error::Shape(format!(
                "label {bad} out of range for {} classes",
                spec.num_classes
            )));
        }
        Ok(())
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub rows: usize,
    /// `(rows, num_classes)` row-major.
    pub logits: Vec<f64>,
    /// `(rows, feature_dim)` row-major; the classifier's input.
    pub features: Vec<f64>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &MlpSpec, rng: &mut Rng) -> Result<ParamVector> {
    spec.validate()?;
    let mut p = ParamVector::zeros(spec.layout());
    let values = p.values_mut();
    for layer in spec
        .feature_layers()
        .into_iter()
        .chain(std::iter::once(spec.classifier_layer()))
    {
        fill_glorot(values, &layer, rng);
    }
    Ok(p)
}

/// Re-draws only the classifier segment.
pub fn reinit_classifier(params: &mut ParamVector, spec: &MlpSpec, rng: &mut Rng) -> Result<()> {
    spec.check_params(params)?;
    let layer = spec.classifier_layer();
    let values = params.values_mut();
    values[layer.offset..layer.offset + layer.param_count()].fill(0.0);
    fill_glorot(values, &layer, rng);
    Ok(())
}

fn fill_glorot(values: &mut [f64], layer: &DenseShape, rng: &mut Rng) {
    let s = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
    for w in &mut values[layer.offset..layer.offset + layer.in_dim * layer.out_dim] {
        *w = rng.random_range(-s..s);
    }
}

/// `out[r, o] = b[o] + sum_i w[o, i] * x[r, i]`.
fn dense(x: &[f64], rows: usize, layer: &DenseShape, p: &[f64]) -> Vec<f64> {
    let w = layer.weights(p);
    let b = layer.bias(p);
    let mut out = vec![0.0; rows * layer.out_dim];
    for r in 0..rows {
        let xr = &x[r * layer.in_dim..(r + 1) * layer.in_dim];
        let or = &mut out[r * layer.out_dim..(r + 1) * layer.out_dim];
        for (o, slot) in or.iter_mut().enumerate() {
            let wo = &w[o * layer.in_dim..(o + 1) * layer.in_dim];
            *slot = b[o] + wo.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

struct Activations {
    /// Per feature layer: (pre-activation, activation).
    layers: Vec<(Vec<f64>, Vec<f64>)>,
    logits: Vec<f64>,
}

fn run_forward(
    params: &ParamVector,
    spec: &MlpSpec,
    inputs: &[f64],
) -> Result<(usize, Activations)> {
    spec.validate()?;
    spec.check_params(params)?;
    let rows = spec.rows(inputs)?;
    let p = params.values();
    let mut layers = Vec::new();
    let mut current = inputs.to_vec();
    for layer in spec.feature_layers() {
        let z = dense(&current, rows, &layer, p);
        let a: Vec<f64> = z.iter().map(|&v| spec.activation.apply(v)).collect();
        current = a.clone();
        layers.push((z, a));
    }
    let logits = dense(&current, rows, &spec.classifier_layer(), p);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("non-finite logits".into()));
    }
    Ok((rows, Activations { layers, logits }))
}

pub fn forward(params: &ParamVector, spec: &MlpSpec, inputs: &[f64]) -> Result<ForwardPass> {
    let (rows, acts) = run_forward(params, spec, inputs)?;
    let features = acts
        .layers
        .last()
        .map(|(_, a)| a.clone())
        .unwrap_or_default();
    Ok(ForwardPass {
        rows,
        logits: acts.logits,
        features,
    })
}

pub fn extract_features(params: &ParamVector, spec: &MlpSpec, inputs: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(params, spec, inputs)?.features)
}

/// Numerically stable softmax of one row, written into `out`.
fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Mean softmax cross-entropy and its exact gradient.
pub fn loss_and_grad(
    params: &ParamVector,
    spec: &MlpSpec,
    batch: &Minibatch,
) -> Result<(f64, ParamVector)> {
    batch.validate_for(spec)?;
    let (rows, acts) = run_forward(params, spec, &batch.inputs)?;
    let c = spec.num_classes;
    let n = rows as f64;
    let p = params.values();

    let mut loss = 0.0;
    let mut d_logits = vec![0.0; rows * c];
    let mut probs = vec![0.0; c];
    for r in 0..rows {
        let row = &acts.logits[r * c..(r + 1) * c];
        softmax_into(row, &mut probs);
        let y = batch.labels[r];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let d = &mut d_logits[r * c..(r + 1) * c];
        for k in 0..c {
            d[k] = (probs[k] - if k == y { 1.0 } else { 0.0 }) / n;
        }
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NumericOverflow("non-finite loss".into()));
    }

    let mut grad = ParamVector::zeros(*params.layout());
    let g = grad.values_mut();

    let feature_layers = spec.feature_layers();
    let features = &acts.layers.last().expect("at least one feature layer").1;
    let mut upstream = dense_backward(&d_logits, features, rows, &spec.classifier_layer(), p, g);

    for (idx, layer) in feature_layers.iter().enumerate().rev() {
        let (z, a) = &acts.layers[idx];
        for ((u, &zv), &av) in upstream.iter_mut().zip(z).zip(a) {
            *u *= spec.activation.derivative(zv, av);
        }
        let input: &[f64] = if idx == 0 {
            &batch.inputs
        } else {
            &acts.layers[idx - 1].1
        };
        upstream = dense_backward(&upstream, input, rows, layer, p, g);
    }

    if !grad.is_finite() {
        return Err(Error::NumericOverflow("non-finite gradient".into()));
    }
    Ok((loss, grad))
}

/// Accumulates parameter gradients of one dense layer into `g` and returns
/// the gradient with respect to the layer input.
fn dense_backward(
    d_out: &[f64],
    input: &[f64],
    rows: usize,
    layer: &DenseShape,
    p: &[f64],
    g: &mut [f64],
) -> Vec<f64> {
    let (i_dim, o_dim) = (layer.in_dim, layer.out_dim);
    let w = layer.weights(p);
    let w_off = layer.offset;
    let b_off = layer.offset + i_dim * o_dim;
    let mut d_in = vec![0.0; rows * i_dim];
    for r in 0..rows {
        let xr = &input[r * i_dim..(r + 1) * i_dim];
        let dr = &d_out[r * o_dim..(r + 1) * o_dim];
        let dir = &mut d_in[r * i_dim..(r + 1) * i_dim];
        for o in 0..o_dim {
            let d = dr[o];
            if d == 0.0 {
                continue;
            }
            g[b_off + o] += d;
            let gw = &mut g[w_off + o * i_dim..w_off + (o + 1) * i_dim];
            let wo = &w[o * i_dim..(o + 1) * i_dim];
            for i in 0..i_dim {
                gw[i] += d * xr[i];
                dir[i] += d * wo[i];
            }
        }
    }
    d_in
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn predict(params: &ParamVector, spec: &MlpSpec, inputs: &[f64]) -> Result<Vec<usize>> {
    let fwd = forward(params, spec, inputs)?;
    Ok(fwd.logits.chunks(spec.num_classes).map(argmax).collect())
}

pub fn accuracy(params: &ParamVector, spec: &MlpSpec, data: &Minibatch) -> Result<f64> {
    data.validate_for(spec)?;
    let pred = predict(params, spec, &data.inputs)?;
    let hits = pred
        .iter()
        .zip(&data.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Mean cross-entropy without the gradient.
pub fn loss(params: &ParamVector, spec: &MlpSpec, batch: &Minibatch) -> Result<f64> {
    batch.validate_for(spec)?;
    let fwd = forward(params, spec, &batch.inputs)?;
    let c = spec.num_classes;
    let total: f64 = fwd
        .logits
        .chunks(c)
        .zip(&batch.labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - row[y]
        })
        .sum();
    Ok(total / batch.len() as f64)
}
