//! Induced representations on the layer space and the Haar projectors onto
//! the equivariant subspace `E` and onto `E^{⊗2}`.
//!
//! Layer `i` transforms as `ρ̄_i(g)A_i = ρ_{i+1}(g) A_i ρ_i(g)^{-1}`. With
//! permutation-type representations this is again a coordinate permutation of
//! the flat layer buffer: `(ρ̄(g)A)[r, c] = A[s_{i+1}(r), s_i(c)]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupElement, HaarStrategy, Representation};
use crate::layers::{self, LayerStack};
use crate::linalg::Matrix;

/// Dense objects on `L` are only assembled up to this dimension.
pub const DENSE_LAYER_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InducedRep {
    reps: Vec<Representation>,
}

impl InducedRep {
    /// `reps[i]` acts on `X_i`; `reps[0]` on the input, the last on the output.
    pub fn new(reps: Vec<Representation>) -> Result<Self> {
        if reps.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least an input and an output space".into(),
            ));
        }
        let group = reps[0].group();
        if let Some(other) = reps.iter().find(|r| r.group() != group) {
            return Err(Error::InvalidArgument(alloc::format!(
                "representations of different groups: {} and {}",
                group,
                other.group()
            )));
        }
        Ok(Self { reps })
    }

    pub fn reps(&self) -> &[Representation] {
        &self.reps
    }

    pub fn group(&self) -> &FiniteGroup {
        self.reps[0].group()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.reps.iter().map(|r| r.dim()).collect()
    }

    pub fn num_params(&self) -> usize {
        layers::param_count(&self.dims())
    }

    pub fn zeros(&self) -> LayerStack {
        LayerStack::zeros(&self.dims())
    }

    fn check(&self, a: &LayerStack) -> Result<()> {
        if a.dims() != self.dims().as_slice() {
            return Err(Error::ShapeMismatch {
                context: "layer stack vs induced representation",
                expected: self.num_params(),
                got: a.num_params(),
            });
        }
        Ok(())
    }

    /// `σ` on flat coordinates with `(ρ̄(g)A)[p] = A[σ(p)]`.
    pub fn source_map(&self, g: &GroupElement) -> Result<Vec<usize>> {
        let maps = self
            .reps
            .iter()
            .map(|r| r.source_map(g))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.num_params());
        let mut offset = 0;
        for w in maps.windows(2) {
            let (inp, outp) = (&w[0], &w[1]);
            let cols = inp.len();
            for &sr in outp {
                let base = offset + sr * cols;
                out.extend(inp.iter().map(|&sc| base + sc));
            }
            offset += cols * outp.len();
        }
        Ok(out)
    }

    /// `ρ̄(g)A`.
    pub fn apply(&self, g: &GroupElement, a: &LayerStack) -> Result<LayerStack> {
        self.check(a)?;
        let map = self.source_map(g)?;
        let src = a.as_slice();
        let data = map.iter().map(|&s| src[s]).collect();
        LayerStack::from_flat(a.dims(), data)
    }

    /// `Π_E A = ∫ ρ̄(g)A dμ(g)`, evaluated with the given quadrature.
    pub fn project_e(&self, a: &LayerStack, strategy: HaarStrategy) -> Result<LayerStack> {
        self.check(a)?;
        let elements = strategy.elements(self.group())?;
        let src = a.as_slice();
        let mut acc = vec![0.0; src.len()];
        for g in &elements {
            let map = self.source_map(g)?;
            for (x, &s) in acc.iter_mut().zip(&map) {
                *x += src[s];
            }
        }
        let w = 1.0 / elements.len() as f64;
        acc.iter_mut().for_each(|x| *x *= w);
        LayerStack::from_flat(a.dims(), acc)
    }

    /// `A - Π_E A`.
    pub fn project_e_perp(&self, a: &LayerStack, strategy: HaarStrategy) -> Result<LayerStack> {
        Ok(a.sub(&self.project_e(a, strategy)?))
    }

    /// `Π_{E⊗2} M = ∫ ρ̄(g)⊗ρ̄(g) M dμ(g)` for a bilinear form given as a
    /// `dim L × dim L` matrix in flat layer coordinates.
    pub fn project_e2(&self, m: &Matrix, strategy: HaarStrategy) -> Result<Matrix> {
        let n = self.num_params();
        if m.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                context: "bilinear form on the layer space",
                expected: n,
                got: m.rows(),
            });
        }
        if n > DENSE_LAYER_CAP {
            return Err(Error::CapExceeded {
                what: "dense bilinear form on the layer space",
                size: n as u64,
                cap: DENSE_LAYER_CAP as u64,
            });
        }
        let elements = strategy.elements(self.group())?;
        let mut acc = Matrix::zeros(n, n);
        for g in &elements {
            let s = self.source_map(g)?;
            for p in 0..n {
                let row = m.row(s[p]);
                let out = acc.row_mut(p);
                for (q, x) in out.iter_mut().enumerate() {
                    *x += row[s[q]];
                }
            }
        }
        Ok(acc.scaled(1.0 / elements.len() as f64))
    }

    /// Dense matrix of `Π_E` in flat layer coordinates.
    pub fn projector_matrix(&self, strategy: HaarStrategy) -> Result<Matrix> {
        let n = self.num_params();
        if n > DENSE_LAYER_CAP {
            return Err(Error::CapExceeded {
                what: "dense projector on the layer space",
                size: n as u64,
                cap: DENSE_LAYER_CAP as u64,
            });
        }
        let elements = strategy.elements(self.group())?;
        let mut p = Matrix::zeros(n, n);
        let w = 1.0 / elements.len() as f64;
        for g in &elements {
            for (row, &s) in self.source_map(g)?.iter().enumerate() {
                p[(row, s)] += w;
            }
        }
        Ok(p)
    }

    /// Orbits of the group on flat layer coordinates, found from generators.
    pub fn orbits(&self) -> Result<OrbitAverager> {
        let n = self.num_params();
        let mut uf = UnionFind::new(n);
        for g in self.group().generators() {
            for (p, &s) in self.source_map(&g)?.iter().enumerate() {
                uf.union(p, s);
            }
        }
        Ok(OrbitAverager::from_union_find(&mut uf))
    }
}

/// Exact `Π_E` for a permutation action: the Haar average of a coordinate
/// permutation action replaces every coordinate by the mean over its orbit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitAverager {
    labels: Vec<u32>,
    sizes: Vec<u32>,
}

impl OrbitAverager {
    pub(crate) fn from_union_find(uf: &mut UnionFind) -> Self {
        let n = uf.len();
        let mut label_of_root = vec![u32::MAX; n];
        let mut labels = Vec::with_capacity(n);
        let mut sizes: Vec<u32> = Vec::new();
        for p in 0..n {
            let root = uf.find(p);
            if label_of_root[root] == u32::MAX {
                label_of_root[root] = sizes.len() as u32;
                sizes.push(0);
            }
            let l = label_of_root[root];
            sizes[l as usize] += 1;
            labels.push(l);
        }
        Self { labels, sizes }
    }

    pub fn num_orbits(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Orbit label of each coordinate, numbered by first appearance.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn average_in_place(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.labels.len(), "orbit averaging length");
        let mut sums = vec![0.0; self.sizes.len()];
        for (&l, &x) in self.labels.iter().zip(v.iter()) {
            sums[l as usize] += x;
        }
        for (s, &c) in sums.iter_mut().zip(&self.sizes) {
            *s /= c as f64;
        }
        for (x, &l) in v.iter_mut().zip(&self.labels) {
            *x = sums[l as usize];
        }
    }

    pub fn project(&self, a: &LayerStack) -> LayerStack {
        let mut out = a.clone();
        self.average_in_place(out.as_mut_slice());
        out
    }

    pub fn project_perp(&self, a: &LayerStack) -> LayerStack {
        a.sub(&self.project(a))
    }
}

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.parent.len()
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}
