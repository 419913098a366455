//! Orthonormal bases of the equivariant subspace `E = ∏ Hom_G(X_i, X_{i+1})`.
//!
//! Every space is split into a base action and a number of channel copies, so
//! `Hom_G` between two spaces is a grid of identical blocks, each equal to
//! `Hom_G(base_in, base_out)`. A block basis is built once by one of four
//! methods and replicated over the channel grid.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::eigen;
use crate::error::{Error, Result};
use crate::group::{FiniteGroup, RepKind, Representation};
use crate::induced::{InducedRep, OrbitAverager, UnionFind};
use crate::layers::LayerStack;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::tol;

/// Largest block dimension for the dense null-space solver.
pub const NULLSPACE_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BasisMethod {
    /// Set-partition indicator tensors for permutation actions, orthonormalized.
    Partition,
    /// Circular convolution operators for translation actions.
    Convolution,
    /// Normalized orbit indicators found by enumerating the whole group.
    #[cfg_attr(feature = "serde", serde(rename = "average"))]
    GroupAverage,
    /// Common null space of `ρ̄(s) − I` over a generating set.
    NullSpace,
}

impl BasisMethod {
    pub const ALL: [BasisMethod; 4] = [
        BasisMethod::Partition,
        BasisMethod::Convolution,
        BasisMethod::GroupAverage,
        BasisMethod::NullSpace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisMethod::Partition => "partition",
            BasisMethod::Convolution => "convolution",
            BasisMethod::GroupAverage => "average",
            BasisMethod::NullSpace => "nullspace",
        }
    }
}

impl fmt::Display for BasisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BasisMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown projection method `{s}`")))
    }
}

/// Block-local sparse vector over a `rows × cols` block, row-major.
#[derive(Debug, Clone, PartialEq)]
struct SparseVector {
    rows: Vec<u32>,
    cols: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    fn from_dense(v: &[f64], block_cols: usize) -> Self {
        let mut out = SparseVector {
            rows: Vec::new(),
            cols: Vec::new(),
            values: Vec::new(),
        };
        for (idx, &x) in v.iter().enumerate() {
            if x != 0.0 {
                out.rows.push((idx / block_cols) as u32);
                out.cols.push((idx % block_cols) as u32);
                out.values.push(x);
            }
        }
        out
    }
}

/// Orthonormal basis of `Hom_G(base_in, base_out)`.
#[derive(Debug, Clone, PartialEq)]
struct BlockBasis {
    rows: usize,
    cols: usize,
    vectors: Vec<SparseVector>,
}

impl BlockBasis {
    fn from_dense(rows: usize, cols: usize, vectors: &[Vec<f64>]) -> Self {
        Self {
            rows,
            cols,
            vectors: vectors
                .iter()
                .map(|v| SparseVector::from_dense(v, cols))
                .collect(),
        }
    }

    fn from_orbits(rows: usize, cols: usize, orbits: &OrbitAverager) -> Self {
        let mut vectors: Vec<SparseVector> = orbits
            .sizes()
            .iter()
            .map(|_| SparseVector {
                rows: Vec::new(),
                cols: Vec::new(),
                values: Vec::new(),
            })
            .collect();
        for (idx, &l) in orbits.labels().iter().enumerate() {
            let v = &mut vectors[l as usize];
            v.rows.push((idx / cols) as u32);
            v.cols.push((idx % cols) as u32);
        }
        for (v, &size) in vectors.iter_mut().zip(orbits.sizes()) {
            v.values = vec![1.0 / math::sqrt(size as f64); size as usize];
        }
        Self {
            rows,
            cols,
            vectors,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerBasis {
    out_channels: usize,
    in_channels: usize,
    block: Arc<BlockBasis>,
}

impl LayerBasis {
    fn dim(&self) -> usize {
        self.out_channels * self.in_channels * self.block.vectors.len()
    }

    fn layer_cols(&self) -> usize {
        self.in_channels * self.block.cols
    }
}

/// Per-layer orthonormal bases of `E`, together with the method that built
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantBasis {
    method: BasisMethod,
    dims: Vec<usize>,
    layers: Vec<LayerBasis>,
}

impl EquivariantBasis {
    pub fn new(ind: &InducedRep, method: BasisMethod) -> Result<Self> {
        let group = ind.group();
        let splits: Vec<(RepKind, usize)> = ind
            .reps()
            .iter()
            .map(|r| r.kind().channel_split())
            .collect();
        let mut cache: Vec<(RepKind, RepKind, Arc<BlockBasis>)> = Vec::new();
        let mut layers = Vec::with_capacity(splits.len() - 1);
        for w in splits.windows(2) {
            let ((base_in, c_in), (base_out, c_out)) = (&w[0], &w[1]);
            let cached = cache
                .iter()
                .find(|(i, o, _)| i == base_in && o == base_out)
                .map(|(_, _, b)| b.clone());
            let block = match cached {
                Some(b) => b,
                None => {
                    let b = Arc::new(block_basis(group, base_in, base_out, method)?);
                    cache.push((base_in.clone(), base_out.clone(), b.clone()));
                    b
                }
            };
            layers.push(LayerBasis {
                out_channels: *c_out,
                in_channels: *c_in,
                block,
            });
        }
        Ok(Self {
            method,
            dims: ind.dims(),
            layers,
        })
    }

    pub fn method(&self) -> BasisMethod {
        self.method
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    /// `dim E`.
    pub fn dim(&self) -> usize {
        self.layers.iter().map(LayerBasis::dim).sum()
    }

    /// `dim Hom_G(X_i, X_{i+1})`.
    pub fn layer_dim(&self, i: usize) -> usize {
        self.layers[i].dim()
    }

    /// Dimension of the single-channel block of layer `i`.
    pub fn block_dim(&self, i: usize) -> usize {
        self.layers[i].block.vectors.len()
    }

    fn check(&self, a: &LayerStack) -> Result<()> {
        if a.dims() != self.dims.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "layer stack vs equivariant basis",
                expected: crate::layers::param_count(&self.dims),
                got: a.num_params(),
            });
        }
        Ok(())
    }

    /// Coordinates `⟨E_k, A⟩` in the basis.
    pub fn coefficients(&self, a: &LayerStack) -> Result<Vec<f64>> {
        self.check(a)?;
        let mut out = Vec::with_capacity(self.dim());
        for (i, lb) in self.layers.iter().enumerate() {
            let data = a.layer_slice(i);
            let cols = lb.layer_cols();
            let (br, bc) = (lb.block.rows, lb.block.cols);
            for co in 0..lb.out_channels {
                for ci in 0..lb.in_channels {
                    for v in &lb.block.vectors {
                        let mut s = 0.0;
                        for t in 0..v.values.len() {
                            let r = co * br + v.rows[t] as usize;
                            let c = ci * bc + v.cols[t] as usize;
                            s += v.values[t] * data[r * cols + c];
                        }
                        out.push(s);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Σ_k coeffs[k] E_k`.
    pub fn combine(&self, coeffs: &[f64]) -> Result<LayerStack> {
        if coeffs.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                context: "equivariant coordinates",
                expected: self.dim(),
                got: coeffs.len(),
            });
        }
        let mut out = LayerStack::zeros(&self.dims);
        let mut k = 0;
        for (i, lb) in self.layers.iter().enumerate() {
            let cols = lb.layer_cols();
            let (br, bc) = (lb.block.rows, lb.block.cols);
            let data = out.layer_slice_mut(i);
            for co in 0..lb.out_channels {
                for ci in 0..lb.in_channels {
                    for v in &lb.block.vectors {
                        let w = coeffs[k];
                        k += 1;
                        for t in 0..v.values.len() {
                            let r = co * br + v.rows[t] as usize;
                            let c = ci * bc + v.cols[t] as usize;
                            data[r * cols + c] += w * v.values[t];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Π_E A` through the basis.
    pub fn project(&self, a: &LayerStack) -> Result<LayerStack> {
        self.combine(&self.coefficients(a)?)
    }

    /// `A − Π_E A`.
    pub fn project_perp(&self, a: &LayerStack) -> Result<LayerStack> {
        Ok(a.sub(&self.project(a)?))
    }

    /// Basis element `E_k` as a dense layer stack.
    pub fn vector(&self, k: usize) -> Result<LayerStack> {
        let mut e = vec![0.0; self.dim()];
        if k >= e.len() {
            return Err(Error::InvalidArgument(format!(
                "basis index {k} out of range {}",
                e.len()
            )));
        }
        e[k] = 1.0;
        self.combine(&e)
    }

    pub fn vectors(&self) -> Result<Vec<LayerStack>> {
        (0..self.dim()).map(|k| self.vector(k)).collect()
    }
}

/// `Π_E` realized either by orbit averaging or through a basis of `E`.
#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    Orbits(OrbitAverager),
    Basis(EquivariantBasis),
}

impl Projector {
    /// Orbit averaging over the generator-connected coordinate orbits.
    pub fn orbits(ind: &InducedRep) -> Result<Self> {
        Ok(Projector::Orbits(ind.orbits()?))
    }

    pub fn from_method(ind: &InducedRep, method: BasisMethod) -> Result<Self> {
        Ok(Projector::Basis(EquivariantBasis::new(ind, method)?))
    }

    pub fn project(&self, a: &LayerStack) -> Result<LayerStack> {
        match self {
            Projector::Orbits(o) => {
                if o.len() != a.num_params() {
                    return Err(Error::ShapeMismatch {
                        context: "layer stack vs orbit projector",
                        expected: o.len(),
                        got: a.num_params(),
                    });
                }
                Ok(o.project(a))
            }
            Projector::Basis(b) => b.project(a),
        }
    }

    pub fn project_perp(&self, a: &LayerStack) -> Result<LayerStack> {
        Ok(a.sub(&self.project(a)?))
    }

    /// `‖A_{E⊥}‖`.
    pub fn dist_from_e(&self, a: &LayerStack) -> Result<f64> {
        Ok(self.project_perp(a)?.norm())
    }

    /// `dim E`.
    pub fn dim(&self) -> usize {
        match self {
            Projector::Orbits(o) => o.num_orbits(),
            Projector::Basis(b) => b.dim(),
        }
    }
}

fn unsupported(
    method: BasisMethod,
    group: &FiniteGroup,
    base_in: &RepKind,
    base_out: &RepKind,
) -> Error {
    Error::MethodUnsupported {
        method: method.name(),
        what: format!("{base_in:?} -> {base_out:?} over {group}"),
    }
}

fn block_basis(
    group: &FiniteGroup,
    base_in: &RepKind,
    base_out: &RepKind,
    method: BasisMethod,
) -> Result<BlockBasis> {
    let (rows, cols) = (base_out.dim(), base_in.dim());
    if let (RepKind::Trivial { .. }, RepKind::Trivial { .. }) = (base_in, base_out) {
        return Ok(BlockBasis::from_dense(1, 1, &[vec![1.0]]));
    }
    match method {
        BasisMethod::Partition => partition_block(group, base_in, base_out),
        BasisMethod::Convolution => convolution_block(group, base_in, base_out),
        BasisMethod::GroupAverage => {
            let (s_in, s_out) = block_reps(group, base_in, base_out)?;
            let mut uf = UnionFind::new(rows * cols);
            for g in group.enumerate_elements()? {
                let (m_in, m_out) = (s_in.source_map(&g)?, s_out.source_map(&g)?);
                for r in 0..rows {
                    for c in 0..cols {
                        uf.union(r * cols + c, m_out[r] * cols + m_in[c]);
                    }
                }
            }
            Ok(BlockBasis::from_orbits(
                rows,
                cols,
                &OrbitAverager::from_union_find(&mut uf),
            ))
        }
        BasisMethod::NullSpace => nullspace_block(group, base_in, base_out),
    }
}

fn block_reps(
    group: &FiniteGroup,
    base_in: &RepKind,
    base_out: &RepKind,
) -> Result<(Representation, Representation)> {
    Ok((
        Representation::new(group.clone(), base_in.clone())?,
        Representation::new(group.clone(), base_out.clone())?,
    ))
}

fn tensor_order(kind: &RepKind, n: usize) -> Option<usize> {
    match kind {
        RepKind::Trivial { dim: 1 } => Some(0),
        RepKind::PermVector { n: m } if *m == n => Some(1),
        RepKind::PermTensor { n: m, order } if *m == n => Some(*order),
        _ => None,
    }
}

/// Restricted growth strings of length `m`: every set partition of `m` labels.
fn set_partitions(m: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, m: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=max {
            prefix.push(b);
            rec(prefix, max.max(b + 1), m, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(m), 0, m, &mut out);
    out
}

fn partition_block(
    group: &FiniteGroup,
    base_in: &RepKind,
    base_out: &RepKind,
) -> Result<BlockBasis> {
    let FiniteGroup::Symmetric(n) = *group else {
        return Err(unsupported(
            BasisMethod::Partition,
            group,
            base_in,
            base_out,
        ));
    };
    let (Some(k_in), Some(k_out)) = (tensor_order(base_in, n), tensor_order(base_out, n)) else {
        return Err(unsupported(
            BasisMethod::Partition,
            group,
            base_in,
            base_out,
        ));
    };
    let m = k_out + k_in;
    let (rows, cols) = (n.pow(k_out as u32), n.pow(k_in as u32));
    let total = rows * cols;
    // digits of the combined multi-index (i_1..i_{k_out}, j_1..j_{k_in})
    let digits: Vec<Vec<usize>> = (0..total)
        .map(|mut idx| {
            let mut d = vec![0; m];
            for slot in d.iter_mut().rev() {
                *slot = idx % n;
                idx /= n;
            }
            d
        })
        .collect();
    let indicators: Vec<Vec<f64>> = set_partitions(m)
        .iter()
        .map(|blocks| {
            digits
                .iter()
                .map(|d| {
                    let mut value_of_block = [usize::MAX; 16];
                    let consistent = blocks.iter().zip(d).all(|(&b, &x)| {
                        if value_of_block[b] == usize::MAX {
                            value_of_block[b] = x;
                            true
                        } else {
                            value_of_block[b] == x
                        }
                    });
                    if consistent {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let q = linalg::orthonormalize(&indicators, tol::RANK_DROP);
    Ok(BlockBasis::from_dense(rows, cols, &q))
}

fn convolution_block(
    group: &FiniteGroup,
    base_in: &RepKind,
    base_out: &RepKind,
) -> Result<BlockBasis> {
    let n = match group {
        FiniteGroup::TranslationGrid(n) => *n,
        _ => {
            return Err(unsupported(
                BasisMethod::Convolution,
                group,
                base_in,
                base_out,
            ))
        }
    };
    let is_image = |k: &RepKind| matches!(k, RepKind::TranslationImage { n: m } if *m == n);
    let is_line = |k: &RepKind| matches!(k, RepKind::Trivial { dim: 1 });
    let w = 1.0 / n as f64;
    let nn = n * n;
    if is_image(base_in) && is_image(base_out) {
        // C^{kl}[(i+k, j+l), (i, j)] = 1/N
        let mut vectors = Vec::with_capacity(nn);
        for k in 0..n {
            for l in 0..n {
                let mut v = SparseVector {
                    rows: Vec::with_capacity(nn),
                    cols: Vec::with_capacity(nn),
                    values: vec![w; nn],
                };
                for i in 0..n {
                    for j in 0..n {
                        v.rows.push((((i + k) % n) * n + (j + l) % n) as u32);
                        v.cols.push((i * n + j) as u32);
                    }
                }
                vectors.push(v);
            }
        }
        return Ok(BlockBasis {
            rows: nn,
            cols: nn,
            vectors,
        });
    }
    if is_image(base_in) && is_line(base_out) {
        return Ok(BlockBasis::from_dense(1, nn, &[vec![w; nn]]));
    }
    if is_line(base_in) && is_image(base_out) {
        return Ok(BlockBasis::from_dense(nn, 1, &[vec![w; nn]]));
    }
    Err(unsupported(
        BasisMethod::Convolution,
        group,
        base_in,
        base_out,
    ))
}

fn nullspace_block(
    group: &FiniteGroup,
    base_in: &RepKind,
    base_out: &RepKind,
) -> Result<BlockBasis> {
    let (s_in, s_out) = block_reps(group, base_in, base_out)?;
    let (rows, cols) = (s_out.dim(), s_in.dim());
    let d = rows * cols;
    if d > NULLSPACE_CAP {
        return Err(Error::CapExceeded {
            what: "null-space block dimension",
            size: d as u64,
            cap: NULLSPACE_CAP as u64,
        });
    }
    // K = Σ_s (2I − R_s − R_sᵀ) is positive semidefinite with kernel E.
    let gens = group.generators();
    let mut k = Matrix::identity(d).scaled(2.0 * gens.len() as f64);
    for g in &gens {
        let (m_in, m_out) = (s_in.source_map(g)?, s_out.source_map(g)?);
        for r in 0..rows {
            for c in 0..cols {
                let p = r * cols + c;
                let q = m_out[r] * cols + m_in[c];
                k[(p, q)] -= 1.0;
                k[(q, p)] -= 1.0;
            }
        }
    }
    let eig = eigen::sym_eigh(&k)?;
    let scale = eig.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let kernel: Vec<Vec<f64>> = eig
        .values
        .iter()
        .zip(eig.vectors)
        .filter(|(v, _)| v.abs() <= tol::RANK_DROP * scale)
        .map(|(_, vec)| vec)
        .collect();
    let q = linalg::orthonormalize(&kernel, tol::RANK_DROP);
    Ok(BlockBasis::from_dense(rows, cols, &q))
}

/// Bell number `B(m)`, the number of set partitions of `m` labels.
pub fn bell_number(m: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..m {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap_or(&1));
        for &x in &row {
            let last = *next.last().unwrap_or(&0);
            next.push(last + x);
        }
        row = next;
    }
    row[0]
}

/// Human-readable summary of a basis, one entry per layer.
pub fn describe(basis: &EquivariantBasis) -> String {
    let mut s = format!("{} basis, dim E = {}:", basis.method(), basis.dim());
    for i in 0..basis.layers.len() {
        s.push_str(&format!(" [{}]", basis.layer_dim(i)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_partitions_are_counted_by_bell_numbers() {
        for m in 0..6 {
            assert_eq!(set_partitions(m).len() as u64, bell_number(m));
        }
        assert_eq!(bell_number(4), 15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in BasisMethod::ALL {
            assert_eq!(m.name().parse::<BasisMethod>().unwrap(), m);
        }
        assert!("fourier".parse::<BasisMethod>().is_err());
    }

    #[test]
    fn vector_to_vector_maps_have_dimension_two() {
        let ind = InducedRep::new(vec![
            Representation::perm_vector(4),
            Representation::perm_vector(4),
        ])
        .unwrap();
        for m in [
            BasisMethod::Partition,
            BasisMethod::GroupAverage,
            BasisMethod::NullSpace,
        ] {
            assert_eq!(EquivariantBasis::new(&ind, m).unwrap().dim(), 2, "{m}");
        }
        assert!(matches!(
            EquivariantBasis::new(&ind, BasisMethod::Convolution),
            Err(Error::MethodUnsupported { .. })
        ));
    }

    #[test]
    fn channel_grid_multiplies_block_dimension() {
        let g = FiniteGroup::TranslationGrid(3);
        let ind = InducedRep::new(vec![
            Representation::translation_image(3),
            Representation::translation_image(3).channelwise(2),
            Representation::trivial(g, 3),
        ])
        .unwrap();
        let basis = EquivariantBasis::new(&ind, BasisMethod::Convolution).unwrap();
        assert_eq!(basis.layer_dim(0), 2 * 9);
        assert_eq!(basis.layer_dim(1), 3 * 2);
        assert_eq!(basis.dim(), 24);
    }

    #[test]
    fn combine_inverts_coefficients() {
        let ind = InducedRep::new(vec![
            Representation::perm_tensor(3, 2),
            Representation::perm_vector(3).channelwise(2),
        ])
        .unwrap();
        let basis = EquivariantBasis::new(&ind, BasisMethod::Partition).unwrap();
        let coeffs: Vec<f64> = (0..basis.dim()).map(|k| k as f64 - 2.5).collect();
        let a = basis.combine(&coeffs).unwrap();
        let back = basis.coefficients(&a).unwrap();
        assert!(linalg::max_abs_diff(&coeffs, &back) < 1e-12);
    }
}
