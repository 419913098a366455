//! The multilayer perceptron `x_{i+1} = σ_i(A_i x_i)`, its reverse pass, batch
//! normalization, the invariant losses and the feature-averaged model.
//!
//! Batches are matrices with one sample per row.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::group::{GroupElement, HaarStrategy};
use crate::induced::InducedRep;
use crate::layers::LayerStack;
use crate::linalg::{self, gemm, Matrix};
use crate::math;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;
pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Nonlinearity {
    LeakyRelu { slope: f64 },
    Sigmoid,
    SoftMax,
    Identity,
}

impl Nonlinearity {
    pub fn leaky_relu() -> Self {
        Nonlinearity::LeakyRelu {
            slope: LEAKY_RELU_SLOPE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::LeakyRelu { .. } => "leaky_relu",
            Nonlinearity::Sigmoid => "sigmoid",
            Nonlinearity::SoftMax => "softmax",
            Nonlinearity::Identity => "identity",
        }
    }

    fn apply_rows(&self, u: &Matrix) -> Matrix {
        let mut y = u.clone();
        match *self {
            Nonlinearity::LeakyRelu { slope } => {
                y.as_mut_slice().iter_mut().for_each(|v| {
                    if *v <= 0.0 {
                        *v *= slope;
                    }
                });
            }
            Nonlinearity::Sigmoid => y.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Nonlinearity::SoftMax => {
                for r in 0..y.rows() {
                    softmax_in_place(y.row_mut(r));
                }
            }
            Nonlinearity::Identity => {}
        }
        y
    }

    /// Turns `dL/dy` into `dL/du` given the input `u` and output `y`.
    fn backward_rows(&self, u: &Matrix, y: &Matrix, dy: &mut Matrix) {
        match *self {
            Nonlinearity::LeakyRelu { slope } => {
                for (d, &v) in dy.as_mut_slice().iter_mut().zip(u.as_slice()) {
                    if v <= 0.0 {
                        *d *= slope;
                    }
                }
            }
            Nonlinearity::Sigmoid => {
                for (d, &p) in dy.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *d *= p * (1.0 - p);
                }
            }
            Nonlinearity::SoftMax => {
                for r in 0..dy.rows() {
                    let p = y.row(r);
                    let row = dy.row_mut(r);
                    let s = linalg::dot(row, p);
                    for (d, &pk) in row.iter_mut().zip(p) {
                        *d = pk * (*d - s);
                    }
                }
            }
            Nonlinearity::Identity => {}
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky_relu" => Ok(Nonlinearity::leaky_relu()),
            "sigmoid" => Ok(Nonlinearity::Sigmoid),
            "softmax" => Ok(Nonlinearity::SoftMax),
            "identity" => Ok(Nonlinearity::Identity),
            other => Err(Error::InvalidArgument(format!(
                "unknown nonlinearity `{other}`"
            ))),
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + math::exp(-v))
    } else {
        let e = math::exp(v);
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossSpec {
    /// Mean over output components of the binary cross-entropy.
    BinaryCrossEntropy,
    /// `−Σ_k t_k ln p_k`.
    CrossEntropy,
    /// Sum over mask channels of the per-pixel binary cross-entropy, divided
    /// by the number of pixels.
    PixelwiseSegmentation { channels: usize },
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, false)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, false)
    } else {
        (p, true)
    }
}

fn bce_term(p: f64, t: f64) -> f64 {
    let (p, _) = clamp_prob(p);
    -(t * math::ln(p) + (1.0 - t) * math::ln(1.0 - p))
}

fn bce_derivative(p: f64, t: f64) -> f64 {
    let (p, inside) = clamp_prob(p);
    if inside {
        -t / p + (1.0 - t) / (1.0 - p)
    } else {
        0.0
    }
}

impl LossSpec {
    fn check(&self, y: &[f64], t: &[f64]) -> Result<()> {
        if y.len() != t.len() {
            return Err(Error::ShapeMismatch {
                context: "loss prediction vs target",
                expected: t.len(),
                got: y.len(),
            });
        }
        if let LossSpec::PixelwiseSegmentation { channels } = self {
            if *channels == 0 || y.len() % channels != 0 {
                return Err(Error::ShapeMismatch {
                    context: "segmentation channels",
                    expected: *channels,
                    got: y.len(),
                });
            }
        }
        Ok(())
    }

    /// `ℓ(y, t)` for a single sample.
    pub fn value(&self, y: &[f64], t: &[f64]) -> Result<f64> {
        self.check(y, t)?;
        Ok(match self {
            LossSpec::BinaryCrossEntropy => {
                y.iter().zip(t).map(|(&p, &t)| bce_term(p, t)).sum::<f64>() / y.len() as f64
            }
            LossSpec::CrossEntropy => y
                .iter()
                .zip(t)
                .filter(|(_, &t)| t != 0.0)
                .map(|(&p, &t)| -t * math::ln(clamp_prob(p).0))
                .sum(),
            LossSpec::PixelwiseSegmentation { channels } => {
                let pixels = (y.len() / channels) as f64;
                y.iter().zip(t).map(|(&p, &t)| bce_term(p, t)).sum::<f64>() / pixels
            }
        })
    }

    /// Adds `scale · ∂ℓ/∂y` into `out`.
    pub fn add_gradient(&self, y: &[f64], t: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        self.check(y, t)?;
        match self {
            LossSpec::BinaryCrossEntropy | LossSpec::PixelwiseSegmentation { .. } => {
                let denom = match self {
                    LossSpec::PixelwiseSegmentation { channels } => (y.len() / channels) as f64,
                    _ => y.len() as f64,
                };
                for ((o, &p), &t) in out.iter_mut().zip(y).zip(t) {
                    *o += scale * bce_derivative(p, t) / denom;
                }
            }
            LossSpec::CrossEntropy => {
                for ((o, &p), &t) in out.iter_mut().zip(y).zip(t) {
                    let (pc, inside) = clamp_prob(p);
                    if t != 0.0 && inside {
                        *o -= scale * t / pc;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Architecture of the network: space dimensions, one nonlinearity per
/// layer, optional batch normalization on the pre-activation of a layer, and
/// a scalar subtracted from every input.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    dims: Vec<usize>,
    nonlinearities: Vec<Nonlinearity>,
    /// `Some(channels)` normalizes layer `i`'s pre-activation per channel.
    batch_norm: Vec<Option<usize>>,
    input_shift: f64,
}

impl MlpSpec {
    pub fn new(
        dims: Vec<usize>,
        nonlinearities: Vec<Nonlinearity>,
        input_shift: f64,
    ) -> Result<Self> {
        if dims.len() < 2 || nonlinearities.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch {
                context: "one nonlinearity per layer",
                expected: dims.len().saturating_sub(1),
                got: nonlinearities.len(),
            });
        }
        let layers = nonlinearities.len();
        Ok(Self {
            dims,
            nonlinearities,
            batch_norm: vec![None; layers],
            input_shift,
        })
    }

    /// Enables batch normalization on the pre-activation of `layer`, with
    /// `channels` channels laid out channel-major.
    pub fn with_batch_norm(mut self, layer: usize, channels: usize) -> Result<Self> {
        let d = *self.dims.get(layer + 1).ok_or_else(|| {
            Error::InvalidArgument(format!("batch norm on nonexistent layer {layer}"))
        })?;
        if channels == 0 || d % channels != 0 {
            return Err(Error::ShapeMismatch {
                context: "batch norm channels",
                expected: channels,
                got: d,
            });
        }
        self.batch_norm[layer] = Some(channels);
        Ok(self)
    }

    /// Same architecture with batch normalization removed everywhere.
    pub fn without_batch_norm(&self) -> Self {
        let mut out = self.clone();
        out.batch_norm.iter_mut().for_each(|b| *b = None);
        out
    }

    /// Same architecture with every LeakyReLU replaced by `sigma`.
    pub fn with_hidden_nonlinearity(&self, sigma: Nonlinearity) -> Self {
        let mut out = self.clone();
        for s in &mut out.nonlinearities {
            if matches!(s, Nonlinearity::LeakyRelu { .. }) {
                *s = sigma;
            }
        }
        out
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn nonlinearities(&self) -> &[Nonlinearity] {
        &self.nonlinearities
    }

    /// Whether any unit has a kink, which makes the risk only piecewise smooth.
    pub fn is_piecewise_linear(&self) -> bool {
        self.nonlinearities
            .iter()
            .any(|s| matches!(s, Nonlinearity::LeakyRelu { .. }))
    }

    pub fn batch_norm(&self) -> &[Option<usize>] {
        &self.batch_norm
    }

    pub fn has_batch_norm(&self) -> bool {
        self.batch_norm.iter().any(Option::is_some)
    }

    pub fn input_shift(&self) -> f64 {
        self.input_shift
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap_or(&0)
    }

    pub fn num_layers(&self) -> usize {
        self.nonlinearities.len()
    }

    fn check(&self, a: &LayerStack, x: &Matrix) -> Result<()> {
        if a.dims() != self.dims.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "layer stack vs architecture",
                expected: crate::layers::param_count(&self.dims),
                got: a.num_params(),
            });
        }
        if x.cols() != self.dims[0] {
            return Err(Error::ShapeMismatch {
                context: "input dimension",
                expected: self.dims[0],
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Runs the network on a batch. With `BatchNormMode::Batch` the statistics
    /// of this batch are used (training); with `Running` the stored ones.
    pub fn forward(&self, a: &LayerStack, x: &Matrix, bn: BatchNormMode<'_>) -> Result<Forward> {
        self.check(a, x)?;
        let batch = x.rows();
        let mut input = x.clone();
        if self.input_shift != 0.0 {
            input
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v -= self.input_shift);
        }
        let mut caches = Vec::with_capacity(self.num_layers());
        for (i, sigma) in self.nonlinearities.iter().enumerate() {
            let (d_out, d_in) = a.layer_shape(i);
            let mut pre = Matrix::zeros(batch, d_out);
            gemm(
                batch,
                d_in,
                d_out,
                1.0,
                input.as_slice(),
                false,
                a.layer_slice(i),
                true,
                0.0,
                pre.as_mut_slice(),
            );
            let norm = match (self.batch_norm[i], bn) {
                (None, _) => None,
                (Some(channels), BatchNormMode::Batch) => {
                    Some(batch_norm_forward(&mut pre, channels, None)?)
                }
                (Some(channels), BatchNormMode::Running(state)) => {
                    let stats = state
                        .layers
                        .get(i)
                        .and_then(Option::as_ref)
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "no running batch-norm statistics for layer {i}"
                            ))
                        })?;
                    Some(batch_norm_forward(&mut pre, channels, Some(stats))?)
                }
            };
            let output = sigma.apply_rows(&pre);
            if !output.as_slice().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: i });
            }
            let next = output.clone();
            caches.push(LayerCache {
                input: core::mem::replace(&mut input, next),
                pre,
                output,
                norm,
            });
        }
        Ok(Forward { caches })
    }

    /// `Φ_A(x)` with batch statistics for any batch-normalized layer.
    pub fn predict(&self, a: &LayerStack, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(a, x, BatchNormMode::Batch)?.into_output())
    }

    /// Reverse pass: given `dL/dy` for the network output, returns `dL/dA`.
    pub fn backward(&self, a: &LayerStack, fwd: &Forward, d_output: &Matrix) -> Result<LayerStack> {
        let batch = d_output.rows();
        let mut grad = LayerStack::zeros(a.dims());
        let mut delta = d_output.clone();
        for i in (0..self.num_layers()).rev() {
            let cache = &fwd.caches[i];
            let (d_out, d_in) = a.layer_shape(i);
            self.nonlinearities[i].backward_rows(&cache.pre, &cache.output, &mut delta);
            if let Some(norm) = &cache.norm {
                batch_norm_backward(&mut delta, &cache.pre, norm);
            }
            gemm(
                d_out,
                batch,
                d_in,
                1.0,
                delta.as_slice(),
                true,
                cache.input.as_slice(),
                false,
                0.0,
                grad.layer_slice_mut(i),
            );
            if i > 0 {
                let mut prev = Matrix::zeros(batch, d_in);
                gemm(
                    batch,
                    d_out,
                    d_in,
                    1.0,
                    delta.as_slice(),
                    false,
                    a.layer_slice(i),
                    false,
                    0.0,
                    prev.as_mut_slice(),
                );
                delta = prev;
            }
        }
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        Ok(grad)
    }
}

/// Where batch normalization takes its statistics from.
#[derive(Debug, Clone, Copy)]
pub enum BatchNormMode<'a> {
    Batch,
    Running(&'a BatchNormState),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Running batch-norm statistics, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchNormState {
    pub layers: Vec<Option<ChannelStats>>,
}

impl BatchNormState {
    /// Mean 0 and variance 1 for every normalized channel.
    pub fn new(spec: &MlpSpec) -> Self {
        Self {
            layers: spec
                .batch_norm
                .iter()
                .map(|b| {
                    b.map(|c| ChannelStats {
                        mean: vec![0.0; c],
                        var: vec![1.0; c],
                    })
                })
                .collect(),
        }
    }

    /// Exponential moving average update from a training forward pass; the
    /// variance uses the unbiased estimator.
    pub fn update(&mut self, fwd: &Forward) {
        for (state, cache) in self.layers.iter_mut().zip(&fwd.caches) {
            if let (Some(state), Some(norm)) = (state.as_mut(), &cache.norm) {
                let m = norm.count as f64;
                let correction = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                for c in 0..state.mean.len() {
                    state.mean[c] = (1.0 - BATCH_NORM_MOMENTUM) * state.mean[c]
                        + BATCH_NORM_MOMENTUM * norm.mean[c];
                    state.var[c] = (1.0 - BATCH_NORM_MOMENTUM) * state.var[c]
                        + BATCH_NORM_MOMENTUM * norm.var[c] * correction;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    channels: usize,
    count: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_std: Vec<f64>,
    /// Whether statistics came from the batch (and gradients flow through them).
    batch_stats: bool,
}

fn batch_norm_forward(
    z: &mut Matrix,
    channels: usize,
    running: Option<&ChannelStats>,
) -> Result<NormCache> {
    let (batch, d) = z.shape();
    let positions = d / channels;
    let count = batch * positions;
    let (mean, var) = match running {
        Some(s) => (s.mean.clone(), s.var.clone()),
        None => {
            if count == 0 {
                return Err(Error::EmptyDataset);
            }
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for r in 0..batch {
                let row = z.row(r);
                for c in 0..channels {
                    mean[c] += row[c * positions..(c + 1) * positions].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for r in 0..batch {
                let row = z.row(r);
                for c in 0..channels {
                    var[c] += row[c * positions..(c + 1) * positions]
                        .iter()
                        .map(|v| (v - mean[c]) * (v - mean[c]))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
            (mean, var)
        }
    };
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| 1.0 / math::sqrt(v + BATCH_NORM_EPS))
        .collect();
    for r in 0..batch {
        let row = z.row_mut(r);
        for c in 0..channels {
            for v in &mut row[c * positions..(c + 1) * positions] {
                *v = (*v - mean[c]) * inv_std[c];
            }
        }
    }
    Ok(NormCache {
        channels,
        count,
        mean,
        var,
        inv_std,
        batch_stats: running.is_none(),
    })
}

/// Maps `dL/dẑ` to `dL/dz` in place; `normalized` holds `ẑ`.
fn batch_norm_backward(delta: &mut Matrix, normalized: &Matrix, norm: &NormCache) {
    let (batch, d) = delta.shape();
    let positions = d / norm.channels;
    if !norm.batch_stats {
        for r in 0..batch {
            let row = delta.row_mut(r);
            for c in 0..norm.channels {
                row[c * positions..(c + 1) * positions]
                    .iter_mut()
                    .for_each(|v| *v *= norm.inv_std[c]);
            }
        }
        return;
    }
    let m = norm.count as f64;
    let mut mean_d = vec![0.0; norm.channels];
    let mut mean_dx = vec![0.0; norm.channels];
    for r in 0..batch {
        let (dr, xr) = (delta.row(r), normalized.row(r));
        for c in 0..norm.channels {
            let span = c * positions..(c + 1) * positions;
            mean_d[c] += dr[span.clone()].iter().sum::<f64>();
            mean_dx[c] += dr[span.clone()]
                .iter()
                .zip(&xr[span])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }
    for c in 0..norm.channels {
        mean_d[c] /= m;
        mean_dx[c] /= m;
    }
    for r in 0..batch {
        let xr = normalized.row(r).to_vec();
        let dr = delta.row_mut(r);
        for c in 0..norm.channels {
            for p in c * positions..(c + 1) * positions {
                dr[p] = norm.inv_std[c] * (dr[p] - mean_d[c] - xr[p] * mean_dx[c]);
            }
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    /// Input of the nonlinearity (after batch norm when enabled).
    pre: Matrix,
    output: Matrix,
    norm: Option<NormCache>,
}

/// Activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    caches: Vec<LayerCache>,
}

impl Forward {
    pub fn output(&self) -> &Matrix {
        &self.caches.last().expect("at least one layer").output
    }

    pub fn into_output(mut self) -> Matrix {
        self.caches.pop().expect("at least one layer").output
    }

    /// Post-activation of every layer.
    pub fn activations(&self) -> Vec<&Matrix> {
        self.caches.iter().map(|c| &c.output).collect()
    }
}

/// Applies `ρ(g)` to every row of a batch.
pub fn transform_rows(
    rep: &crate::group::Representation,
    g: &GroupElement,
    x: &Matrix,
) -> Result<Matrix> {
    if x.cols() != rep.dim() {
        return Err(Error::ShapeMismatch {
            context: "batch vs representation",
            expected: rep.dim(),
            got: x.cols(),
        });
    }
    let map = rep.source_map(g)?;
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let src = x.row(r);
        for (o, &s) in out.row_mut(r).iter_mut().zip(&map) {
            *o = src[s];
        }
    }
    Ok(out)
}

/// `‖Φ_A(ρ_X(g)x) − ρ_Y(g)Φ_{ρ̄(g)⁻¹A}(x)‖ / max(1, ‖Φ_A(ρ_X(g)x)‖)`.
pub fn transform_vs_layers_check(
    spec: &MlpSpec,
    ind: &InducedRep,
    a: &LayerStack,
    g: &GroupElement,
    x: &Matrix,
) -> Result<f64> {
    let spec = spec.without_batch_norm();
    let reps = ind.reps();
    let (rx, ry) = (&reps[0], &reps[reps.len() - 1]);
    let lhs = spec.predict(a, &transform_rows(rx, g, x)?)?;
    let g_inv = ind.group().inverse(g)?;
    let moved = ind.apply(&g_inv, a)?;
    let rhs = transform_rows(ry, g, &spec.predict(&moved, x)?)?;
    let diff = lhs.sub(&rhs).frobenius();
    Ok(diff / lhs.frobenius().max(1.0))
}

/// `Φ^FA_A(x) = ∫ ρ_Y(g)⁻¹ Φ_A(ρ_X(g)x) dμ(g)` for every row of `x`.
pub fn feature_average(
    spec: &MlpSpec,
    ind: &InducedRep,
    a: &LayerStack,
    x: &Matrix,
    strategy: HaarStrategy,
) -> Result<Matrix> {
    let reps = ind.reps();
    let (rx, ry) = (&reps[0], &reps[reps.len() - 1]);
    let group = ind.group();
    let elements = strategy.elements(group)?;
    let mut acc = Matrix::zeros(x.rows(), spec.output_dim());
    for g in &elements {
        let y = spec.predict(a, &transform_rows(rx, g, x)?)?;
        let back = transform_rows(ry, &group.inverse(g)?, &y)?;
        linalg::axpy(1.0, back.as_slice(), acc.as_mut_slice());
    }
    Ok(acc.scaled(1.0 / elements.len() as f64))
}
