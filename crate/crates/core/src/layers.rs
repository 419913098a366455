//! The layer space `L = ∏ Hom(X_i, X_{i+1})`.
//!
//! A [`LayerStack`] stores every layer row-major in one contiguous buffer, in
//! layer order. That buffer is the fixed global coordinate system used for
//! flattened vectors, Hessian blocks and bilinear forms on `L`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerStack {
    /// Space dimensions `dim X_0, .., dim X_L`.
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// Offsets of each layer in the flat buffer, plus the total length.
pub fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        acc += w[0] * w[1];
        offsets.push(acc);
    }
    offsets
}

/// Number of scalar parameters of an MLP with the given space dimensions.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1]).sum()
}

impl LayerStack {
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; param_count(dims)],
        }
    }

    pub fn from_flat(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected = param_count(dims);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "layer stack from flat vector",
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds a stack from matrices `A_i` of shape `(dim X_{i+1}, dim X_i)`.
    pub fn from_layers(layers: &[Matrix]) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidArgument(
                "a layer stack needs at least one layer".into(),
            ));
        };
        let mut dims = vec![first.cols()];
        for layer in layers {
            let prev = *dims.last().unwrap_or(&0);
            if layer.cols() != prev {
                return Err(Error::ShapeMismatch {
                    context: "consecutive layer shapes",
                    expected: prev,
                    got: layer.cols(),
                });
            }
            dims.push(layer.rows());
        }
        let mut data = Vec::with_capacity(param_count(&dims));
        for layer in layers {
            data.extend_from_slice(layer.as_slice());
        }
        Ok(Self { dims, data })
    }

    /// Entries drawn i.i.d. from `N(0, scale_i²)` where `scale_i` is 1, or
    /// `1/√dim X_i` when `fan_in_scaled` is set.
    pub fn random_gaussian<R: Rng + ?Sized>(
        dims: &[usize],
        fan_in_scaled: bool,
        rng: &mut R,
    ) -> Self {
        let mut out = Self::zeros(dims);
        for i in 0..out.num_layers() {
            let scale = if fan_in_scaled {
                1.0 / math::sqrt(dims[i].max(1) as f64)
            } else {
                1.0
            };
            for x in out.layer_slice_mut(i) {
                *x = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        out
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn layer_shape(&self, i: usize) -> (usize, usize) {
        (self.dims[i + 1], self.dims[i])
    }

    pub fn layer_offset(&self, i: usize) -> usize {
        self.dims[..=i].windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn layer_slice(&self, i: usize) -> &[f64] {
        let start = self.layer_offset(i);
        &self.data[start..start + self.dims[i] * self.dims[i + 1]]
    }

    pub fn layer_slice_mut(&mut self, i: usize) -> &mut [f64] {
        let start = self.layer_offset(i);
        let len = self.dims[i] * self.dims[i + 1];
        &mut self.data[start..start + len]
    }

    pub fn layer(&self, i: usize) -> Matrix {
        let (r, c) = self.layer_shape(i);
        Matrix::from_vec(r, c, self.layer_slice(i).to_vec())
    }

    pub fn layers(&self) -> Vec<Matrix> {
        (0..self.num_layers()).map(|i| self.layer(i)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims == other.dims
    }

    pub fn check_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                context,
                expected: self.num_params(),
                got: other.num_params(),
            })
        }
    }

    /// `⟨A, B⟩ = Σ_i tr(A_iᵀ B_i)`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        linalg::dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        math::sqrt(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        )
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        debug_assert!(self.same_shape(x));
        linalg::axpy(alpha, &x.data, &mut self.data);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
