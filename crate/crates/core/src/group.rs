//! Finite groups, their elements, and the representations used by the three
//! experiments.
//!
//! Every representation implemented here permutes coordinates, so an element
//! acts through a *source map* `s` with `(ρ(g)v)[p] = v[s(p)]`. Dense matrices
//! are only built on request ([`Representation::matrix`]).

use alloc::boxed::Box;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Deterministic, platform-independent generator used for all randomness.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Default largest group order that may be enumerated.
pub const ENUMERATION_CAP: u64 = 1_000_000;
/// Default largest dimension for which a dense representation matrix is built.
pub const DENSIFY_CAP: usize = 4096;
/// Groups up to this order are checked exhaustively.
pub const EXHAUSTIVE_ORDER: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FiniteGroup {
    /// Permutations of `n` points.
    Symmetric(usize),
    /// `Z_n × Z_n`, acting on `n × n` images by cyclic shifts.
    TranslationGrid(usize),
    /// Rotations by multiples of 90 degrees.
    CyclicRotation,
    Trivial,
    Product(Vec<FiniteGroup>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GroupElement {
    Identity,
    /// `Perm(p)` maps `i ↦ p[i]`.
    Perm(Vec<usize>),
    Shift(usize, usize),
    Rotation(u8),
    Product(Vec<GroupElement>),
}

impl fmt::Display for FiniteGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FiniteGroup::Symmetric(n) => write!(f, "S{n}"),
            FiniteGroup::TranslationGrid(n) => write!(f, "Z{n}^2"),
            FiniteGroup::CyclicRotation => write!(f, "C4"),
            FiniteGroup::Trivial => write!(f, "1"),
            FiniteGroup::Product(factors) => {
                for (i, g) in factors.iter().enumerate() {
                    if i > 0 {
                        write!(f, "x")?;
                    }
                    write!(f, "{g}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Identity => write!(f, "e"),
            GroupElement::Perm(p) => write!(f, "{p:?}"),
            GroupElement::Shift(k, l) => write!(f, "({k},{l})"),
            GroupElement::Rotation(k) => write!(f, "r{k}"),
            GroupElement::Product(parts) => {
                write!(f, "<")?;
                for (i, g) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, ">")
            }
        }
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).fold(1u64, |acc, k| acc.saturating_mul(k))
}

fn invert_perm(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        inv[pi] = i;
    }
    inv
}

/// Advances `p` to the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

impl FiniteGroup {
    /// Group order, saturating at `u64::MAX`.
    pub fn order(&self) -> u64 {
        match self {
            FiniteGroup::Symmetric(n) => factorial(*n),
            FiniteGroup::TranslationGrid(n) => (*n as u64).saturating_mul(*n as u64),
            FiniteGroup::CyclicRotation => 4,
            FiniteGroup::Trivial => 1,
            FiniteGroup::Product(fs) => fs.iter().fold(1u64, |a, g| a.saturating_mul(g.order())),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            FiniteGroup::Symmetric(n) => GroupElement::Perm((0..*n).collect()),
            FiniteGroup::TranslationGrid(_) => GroupElement::Shift(0, 0),
            FiniteGroup::CyclicRotation => GroupElement::Rotation(0),
            FiniteGroup::Trivial => GroupElement::Identity,
            FiniteGroup::Product(fs) => {
                GroupElement::Product(fs.iter().map(|g| g.identity()).collect())
            }
        }
    }

    /// Whether `g` is a valid payload for this group.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self, g) {
            (FiniteGroup::Symmetric(n), GroupElement::Perm(p)) => {
                if p.len() != *n {
                    return false;
                }
                let mut seen = vec![false; *n];
                p.iter()
                    .all(|&i| i < *n && !core::mem::replace(&mut seen[i], true))
            }
            (FiniteGroup::TranslationGrid(n), GroupElement::Shift(k, l)) => k < n && l < n,
            (FiniteGroup::CyclicRotation, GroupElement::Rotation(k)) => *k < 4,
            (FiniteGroup::Trivial, GroupElement::Identity) => true,
            (FiniteGroup::Product(fs), GroupElement::Product(gs)) => {
                fs.len() == gs.len() && fs.iter().zip(gs).all(|(f, g)| f.contains(g))
            }
            _ => false,
        }
    }

    fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(Error::IncompatibleElement {
                element: g.to_string(),
                group: self.to_string(),
            })
        }
    }

    /// The product `g·h`, i.e. first `h`, then `g`.
    pub fn compose(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(match (self, g, h) {
            (FiniteGroup::Symmetric(_), GroupElement::Perm(p), GroupElement::Perm(q)) => {
                GroupElement::Perm(q.iter().map(|&i| p[i]).collect())
            }
            (
                FiniteGroup::TranslationGrid(n),
                GroupElement::Shift(a, b),
                GroupElement::Shift(c, d),
            ) => GroupElement::Shift((a + c) % n, (b + d) % n),
            (FiniteGroup::CyclicRotation, GroupElement::Rotation(a), GroupElement::Rotation(b)) => {
                GroupElement::Rotation((a + b) % 4)
            }
            (FiniteGroup::Product(fs), GroupElement::Product(gs), GroupElement::Product(hs)) => {
                let parts = fs
                    .iter()
                    .zip(gs.iter().zip(hs))
                    .map(|(f, (a, b))| f.compose(a, b))
                    .collect::<Result<Vec<_>>>()?;
                GroupElement::Product(parts)
            }
            _ => GroupElement::Identity,
        })
    }

    pub fn inverse(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(match (self, g) {
            (_, GroupElement::Perm(p)) => GroupElement::Perm(invert_perm(p)),
            (FiniteGroup::TranslationGrid(n), GroupElement::Shift(k, l)) => {
                GroupElement::Shift((n - k) % n, (n - l) % n)
            }
            (_, GroupElement::Rotation(k)) => GroupElement::Rotation((4 - k) % 4),
            (FiniteGroup::Product(fs), GroupElement::Product(gs)) => GroupElement::Product(
                fs.iter()
                    .zip(gs)
                    .map(|(f, g)| f.inverse(g))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => g.clone(),
        })
    }

    /// All elements, identity first, in a fixed order.
    pub fn enumerate_elements(&self) -> Result<Vec<GroupElement>> {
        self.enumerate_with_cap(ENUMERATION_CAP)
    }

    pub fn enumerate_with_cap(&self, cap: u64) -> Result<Vec<GroupElement>> {
        let order = self.order();
        if order > cap {
            return Err(Error::CapExceeded {
                what: "group enumeration",
                size: order,
                cap,
            });
        }
        Ok(match self {
            FiniteGroup::Symmetric(n) => {
                let mut p: Vec<usize> = (0..*n).collect();
                let mut out = Vec::with_capacity(order as usize);
                loop {
                    out.push(GroupElement::Perm(p.clone()));
                    if !next_permutation(&mut p) {
                        break;
                    }
                }
                out
            }
            FiniteGroup::TranslationGrid(n) => (0..*n)
                .flat_map(|k| (0..*n).map(move |l| GroupElement::Shift(k, l)))
                .collect(),
            FiniteGroup::CyclicRotation => (0..4).map(GroupElement::Rotation).collect(),
            FiniteGroup::Trivial => vec![GroupElement::Identity],
            FiniteGroup::Product(fs) => {
                let mut acc: Vec<Vec<GroupElement>> = vec![Vec::new()];
                for f in fs {
                    let elems = f.enumerate_with_cap(cap)?;
                    let mut next = Vec::with_capacity(acc.len() * elems.len());
                    for prefix in &acc {
                        for e in &elems {
                            let mut v = prefix.clone();
                            v.push(e.clone());
                            next.push(v);
                        }
                    }
                    acc = next;
                }
                acc.into_iter().map(GroupElement::Product).collect()
            }
        })
    }

    /// Uniform (Haar) sample.
    pub fn sample_haar<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match self {
            FiniteGroup::Symmetric(n) => {
                let mut p: Vec<usize> = (0..*n).collect();
                p.shuffle(rng);
                GroupElement::Perm(p)
            }
            FiniteGroup::TranslationGrid(n) => {
                GroupElement::Shift(rng.random_range(0..*n), rng.random_range(0..*n))
            }
            FiniteGroup::CyclicRotation => GroupElement::Rotation(rng.random_range(0..4u8)),
            FiniteGroup::Trivial => GroupElement::Identity,
            FiniteGroup::Product(fs) => {
                GroupElement::Product(fs.iter().map(|f| f.sample_haar(rng)).collect())
            }
        }
    }

    /// A generating set: adjacent transposition and n-cycle for `S_n`, the two
    /// unit shifts for `Z_n²`, the quarter turn for `C_4`.
    pub fn generators(&self) -> Vec<GroupElement> {
        match self {
            FiniteGroup::Symmetric(n) if *n >= 2 => {
                let mut swap: Vec<usize> = (0..*n).collect();
                swap.swap(0, 1);
                let cycle: Vec<usize> = (0..*n).map(|i| (i + 1) % n).collect();
                vec![GroupElement::Perm(swap), GroupElement::Perm(cycle)]
            }
            FiniteGroup::Symmetric(_) | FiniteGroup::Trivial => Vec::new(),
            FiniteGroup::TranslationGrid(n) if *n >= 2 => {
                vec![GroupElement::Shift(1, 0), GroupElement::Shift(0, 1)]
            }
            FiniteGroup::TranslationGrid(_) => Vec::new(),
            FiniteGroup::CyclicRotation => vec![GroupElement::Rotation(1)],
            FiniteGroup::Product(fs) => {
                let ids: Vec<GroupElement> = fs.iter().map(|f| f.identity()).collect();
                let mut gens = Vec::new();
                for (i, f) in fs.iter().enumerate() {
                    for g in f.generators() {
                        let mut parts = ids.clone();
                        parts[i] = g;
                        gens.push(GroupElement::Product(parts));
                    }
                }
                gens
            }
        }
    }
}

/// How an integral over the Haar measure is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HaarStrategy {
    /// Average over every element.
    Exact,
    /// Average over `samples` independent uniform draws from `seed`.
    Sampled { samples: usize, seed: u64 },
}

impl HaarStrategy {
    /// The group elements of the quadrature rule; every element has weight
    /// `1 / len`.
    pub fn elements(&self, group: &FiniteGroup) -> Result<Vec<GroupElement>> {
        match *self {
            HaarStrategy::Exact => group.enumerate_elements(),
            HaarStrategy::Sampled { samples, seed } => {
                if samples == 0 {
                    return Err(Error::InvalidArgument(
                        "Haar sampling needs at least one sample".into(),
                    ));
                }
                let mut rng = seeded_rng(seed);
                Ok((0..samples).map(|_| group.sample_haar(&mut rng)).collect())
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, HaarStrategy::Exact)
    }
}

/// The space a representation acts on and how it acts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RepKind {
    Trivial {
        dim: usize,
    },
    /// `[ρ(π)v]_i = v_{π⁻¹(i)}` on `ℝ^n`.
    PermVector {
        n: usize,
    },
    /// The induced action on `(ℝ^n)^{⊗order}`; `order = 0` is the scalar line.
    PermTensor {
        n: usize,
        order: usize,
    },
    /// `(ρ(k,l)x)_{i,j} = x_{i-k, j-l}` with indices mod `n`.
    TranslationImage {
        n: usize,
    },
    /// `(ρ(1)x)_{i,j} = x_{-j, i}` with indices mod `n`, `ρ(k) = ρ(1)^k`.
    RotationImage {
        n: usize,
    },
    /// `channels` stacked copies of `inner`, channel-major.
    ChannelwiseCopy {
        inner: Box<RepKind>,
        channels: usize,
    },
    /// Acts through factor `factor` of a product group.
    OnFactor {
        factor: usize,
        inner: Box<RepKind>,
    },
}

impl RepKind {
    pub fn dim(&self) -> usize {
        match self {
            RepKind::Trivial { dim } => *dim,
            RepKind::PermVector { n } => *n,
            RepKind::PermTensor { n, order } => n.pow(*order as u32),
            RepKind::TranslationImage { n } | RepKind::RotationImage { n } => n * n,
            RepKind::ChannelwiseCopy { inner, channels } => inner.dim() * channels,
            RepKind::OnFactor { inner, .. } => inner.dim(),
        }
    }

    pub fn space_shape(&self) -> Vec<usize> {
        match self {
            RepKind::Trivial { dim } => vec![*dim],
            RepKind::PermVector { n } => vec![*n],
            RepKind::PermTensor { n, order } => vec![*n; *order],
            RepKind::TranslationImage { n } | RepKind::RotationImage { n } => vec![*n, *n],
            RepKind::ChannelwiseCopy { inner, channels } => {
                let mut s = vec![*channels];
                s.extend(inner.space_shape());
                s
            }
            RepKind::OnFactor { inner, .. } => inner.space_shape(),
        }
    }

    /// Splits into a base action and a number of channel copies; a trivial
    /// action on `ℝ^d` counts as `d` copies of the trivial line.
    pub fn channel_split(&self) -> (RepKind, usize) {
        match self {
            RepKind::Trivial { dim } => (RepKind::Trivial { dim: 1 }, *dim),
            RepKind::ChannelwiseCopy { inner, channels } => {
                let (base, c) = inner.channel_split();
                (base, c * channels)
            }
            RepKind::OnFactor { factor, inner } => {
                let (base, c) = inner.channel_split();
                let base = match base {
                    RepKind::Trivial { .. } => base,
                    other => RepKind::OnFactor {
                        factor: *factor,
                        inner: Box::new(other),
                    },
                };
                (base, c)
            }
            other => (other.clone(), 1),
        }
    }

    fn compatible(&self, group: &FiniteGroup) -> bool {
        match (self, group) {
            (RepKind::Trivial { .. }, _) => true,
            (RepKind::PermVector { n }, FiniteGroup::Symmetric(m))
            | (RepKind::PermTensor { n, .. }, FiniteGroup::Symmetric(m)) => n == m,
            (RepKind::TranslationImage { n }, FiniteGroup::TranslationGrid(m)) => n == m,
            (RepKind::RotationImage { .. }, FiniteGroup::CyclicRotation) => true,
            (RepKind::ChannelwiseCopy { inner, .. }, g) => inner.compatible(g),
            (RepKind::OnFactor { factor, inner }, FiniteGroup::Product(fs)) => {
                fs.get(*factor).is_some_and(|f| inner.compatible(f))
            }
            _ => false,
        }
    }

    pub(crate) fn source_map(&self, g: &GroupElement) -> Result<Vec<usize>> {
        let mismatch = || Error::IncompatibleElement {
            element: g.to_string(),
            group: format!("{self:?}"),
        };
        Ok(match self {
            RepKind::Trivial { dim } => (0..*dim).collect(),
            RepKind::PermVector { n } => RepKind::PermTensor { n: *n, order: 1 }.source_map(g)?,
            RepKind::PermTensor { n, order } => {
                let GroupElement::Perm(p) = g else {
                    return Err(mismatch());
                };
                if p.len() != *n {
                    return Err(mismatch());
                }
                let inv = invert_perm(p);
                let mut map = vec![0usize];
                for _ in 0..*order {
                    let mut next = Vec::with_capacity(map.len() * n);
                    for &a in &map {
                        for &b in &inv {
                            next.push(a * n + b);
                        }
                    }
                    map = next;
                }
                map
            }
            RepKind::TranslationImage { n } => {
                let GroupElement::Shift(k, l) = *g else {
                    return Err(mismatch());
                };
                if k >= *n || l >= *n {
                    return Err(mismatch());
                }
                let n = *n;
                let mut map = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        map.push(((i + n - k) % n) * n + (j + n - l) % n);
                    }
                }
                map
            }
            RepKind::RotationImage { n } => {
                let GroupElement::Rotation(k) = *g else {
                    return Err(mismatch());
                };
                if k >= 4 {
                    return Err(mismatch());
                }
                let n = *n;
                // quarter turn: (i, j) reads from (-j mod n, i)
                let quarter: Vec<usize> = (0..n * n)
                    .map(|p| {
                        let (i, j) = (p / n, p % n);
                        ((n - j) % n) * n + i
                    })
                    .collect();
                let mut map: Vec<usize> = (0..n * n).collect();
                for _ in 0..k {
                    map = quarter.iter().map(|&q| map[q]).collect();
                }
                map
            }
            RepKind::ChannelwiseCopy { inner, channels } => {
                let inner_map = inner.source_map(g)?;
                let d = inner_map.len();
                let mut map = Vec::with_capacity(d * channels);
                for c in 0..*channels {
                    map.extend(inner_map.iter().map(|&s| c * d + s));
                }
                map
            }
            RepKind::OnFactor { factor, inner } => {
                let GroupElement::Product(parts) = g else {
                    return Err(mismatch());
                };
                let part = parts.get(*factor).ok_or_else(mismatch)?;
                inner.source_map(part)?
            }
        })
    }
}

/// A unitary (permutation-type) representation of a finite group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Representation {
    group: FiniteGroup,
    kind: RepKind,
}

impl Representation {
    pub fn new(group: FiniteGroup, kind: RepKind) -> Result<Self> {
        if !kind.compatible(&group) {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} is not a representation of {group}"
            )));
        }
        Ok(Self { group, kind })
    }

    pub fn trivial(group: FiniteGroup, dim: usize) -> Self {
        Self {
            group,
            kind: RepKind::Trivial { dim },
        }
    }

    pub fn perm_vector(n: usize) -> Self {
        Self {
            group: FiniteGroup::Symmetric(n),
            kind: RepKind::PermVector { n },
        }
    }

    pub fn perm_tensor(n: usize, order: usize) -> Self {
        Self {
            group: FiniteGroup::Symmetric(n),
            kind: RepKind::PermTensor { n, order },
        }
    }

    pub fn translation_image(n: usize) -> Self {
        Self {
            group: FiniteGroup::TranslationGrid(n),
            kind: RepKind::TranslationImage { n },
        }
    }

    pub fn rotation_image(n: usize) -> Self {
        Self {
            group: FiniteGroup::CyclicRotation,
            kind: RepKind::RotationImage { n },
        }
    }

    /// `channels` copies of `self`.
    pub fn channelwise(self, channels: usize) -> Self {
        Self {
            group: self.group,
            kind: RepKind::ChannelwiseCopy {
                inner: Box::new(self.kind),
                channels,
            },
        }
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn kind(&self) -> &RepKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn space_shape(&self) -> Vec<usize> {
        self.kind.space_shape()
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self.kind.channel_split().0, RepKind::Trivial { .. })
    }

    /// `s` with `(ρ(g)v)[p] = v[s[p]]`.
    pub fn source_map(&self, g: &GroupElement) -> Result<Vec<usize>> {
        self.group.check(g)?;
        self.kind.source_map(g)
    }

    pub fn apply(&self, g: &GroupElement, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                context: "rep_apply",
                expected: self.dim(),
                got: v.len(),
            });
        }
        let map = self.source_map(g)?;
        Ok(map.iter().map(|&s| v[s]).collect())
    }

    /// Dense orthogonal matrix of `ρ(g)`.
    pub fn matrix(&self, g: &GroupElement) -> Result<Matrix> {
        self.matrix_with_cap(g, DENSIFY_CAP)
    }

    pub fn matrix_with_cap(&self, g: &GroupElement, cap: usize) -> Result<Matrix> {
        let d = self.dim();
        if d > cap {
            return Err(Error::CapExceeded {
                what: "representation densification",
                size: d as u64,
                cap: cap as u64,
            });
        }
        let map = self.source_map(g)?;
        let mut m = Matrix::zeros(d, d);
        for (p, &s) in map.iter().enumerate() {
            m[(p, s)] = 1.0;
        }
        Ok(m)
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{:?}", self.group, self.space_shape())
    }
}

/// Anything that lets group elements act linearly on `ℝ^dim`.
pub trait LinearAction {
    fn dim(&self) -> usize;
    fn act(&self, g: &GroupElement, v: &[f64]) -> Result<Vec<f64>>;
}

impl LinearAction for Representation {
    fn dim(&self) -> usize {
        Representation::dim(self)
    }

    fn act(&self, g: &GroupElement, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(g, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerificationReport {
    pub exhaustive: bool,
    pub elements_checked: usize,
    pub pairs_checked: usize,
    /// `max |ρ(g)ρ(h)v - ρ(gh)v|_∞`.
    pub homomorphism_residual: f64,
    /// `max |MᵀM - I|_∞`, or the inner-product defect on random vectors when
    /// the space is too large to densify.
    pub unitarity_residual: f64,
    /// `max |ρ(g⁻¹)ρ(g)v - v|_∞`.
    pub inverse_residual: f64,
}

impl VerificationReport {
    pub fn worst(&self) -> f64 {
        self.homomorphism_residual
            .max(self.unitarity_residual)
            .max(self.inverse_residual)
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Checks the homomorphism and unitarity properties of `action`; exhaustive
/// for small groups, otherwise over `trials` random elements. Failures are
/// reported as residuals, never returned as errors.
pub fn verify_representation<A, R>(
    group: &FiniteGroup,
    action: &A,
    trials: usize,
    rng: &mut R,
) -> Result<VerificationReport>
where
    A: LinearAction + ?Sized,
    R: Rng + ?Sized,
{
    let order = group.order();
    let exhaustive = order <= EXHAUSTIVE_ORDER;
    let elements = if exhaustive {
        group.enumerate_elements()?
    } else {
        (0..trials).map(|_| group.sample_haar(rng)).collect()
    };
    let pairs: Vec<(GroupElement, GroupElement)> =
        if order.saturating_mul(order) <= EXHAUSTIVE_ORDER {
            elements
                .iter()
                .flat_map(|g| elements.iter().map(move |h| (g.clone(), h.clone())))
                .collect()
        } else {
            (0..trials)
                .map(|_| (group.sample_haar(rng), group.sample_haar(rng)))
                .collect()
        };

    let d = action.dim();
    let mut homomorphism: f64 = 0.0;
    for (g, h) in &pairs {
        let v = gaussian_vec(rng, d);
        let lhs = action.act(g, &action.act(h, &v)?)?;
        let rhs = action.act(&group.compose(g, h)?, &v)?;
        homomorphism = homomorphism.max(linalg::max_abs_diff(&lhs, &rhs));
    }

    let mut unitarity: f64 = 0.0;
    let mut inverse: f64 = 0.0;
    for g in &elements {
        if d <= DENSIFY_CAP / 2 {
            let mut columns = Vec::with_capacity(d);
            for j in 0..d {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                columns.push(action.act(g, &e)?);
            }
            for i in 0..d {
                for j in i..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    unitarity =
                        unitarity.max((linalg::dot(&columns[i], &columns[j]) - target).abs());
                }
            }
        } else {
            let u = gaussian_vec(rng, d);
            let v = gaussian_vec(rng, d);
            let before = linalg::dot(&u, &v) / (linalg::norm(&u) * linalg::norm(&v));
            let after = linalg::dot(&action.act(g, &u)?, &action.act(g, &v)?)
                / (linalg::norm(&u) * linalg::norm(&v));
            unitarity = unitarity.max((before - after).abs());
        }
        let v = gaussian_vec(rng, d);
        let back = action.act(&group.inverse(g)?, &action.act(g, &v)?)?;
        inverse = inverse.max(linalg::max_abs_diff(&back, &v));
    }

    Ok(VerificationReport {
        exhaustive,
        elements_checked: elements.len(),
        pairs_checked: pairs.len(),
        homomorphism_residual: homomorphism,
        unitarity_residual: unitarity,
        inverse_residual: inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_and_enumeration() {
        assert_eq!(
            FiniteGroup::Symmetric(3)
                .enumerate_elements()
                .unwrap()
                .len(),
            6
        );
        assert_eq!(
            FiniteGroup::CyclicRotation
                .enumerate_elements()
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            FiniteGroup::TranslationGrid(14)
                .enumerate_elements()
                .unwrap()
                .len(),
            196
        );
        assert_eq!(FiniteGroup::Trivial.enumerate_elements().unwrap().len(), 1);
        assert_eq!(FiniteGroup::Symmetric(10).order(), 3_628_800);
        assert!(matches!(
            FiniteGroup::Symmetric(10).enumerate_elements(),
            Err(Error::CapExceeded { .. })
        ));
        let prod =
            FiniteGroup::Product(vec![FiniteGroup::Symmetric(3), FiniteGroup::CyclicRotation]);
        assert_eq!(prod.order(), 24);
        assert_eq!(prod.enumerate_elements().unwrap().len(), 24);
    }

    #[test]
    fn enumeration_is_distinct_and_starts_at_identity() {
        for group in [
            FiniteGroup::Symmetric(4),
            FiniteGroup::TranslationGrid(3),
            FiniteGroup::CyclicRotation,
            FiniteGroup::Product(vec![
                FiniteGroup::Symmetric(2),
                FiniteGroup::TranslationGrid(2),
            ]),
        ] {
            let elems = group.enumerate_elements().unwrap();
            assert_eq!(elems[0], group.identity());
            for (i, a) in elems.iter().enumerate() {
                assert!(group.contains(a));
                for b in &elems[i + 1..] {
                    assert_ne!(a, b);
                }
            }
        }
    }

    #[test]
    fn group_axioms_hold_exhaustively() {
        for group in [
            FiniteGroup::Symmetric(4),
            FiniteGroup::TranslationGrid(4),
            FiniteGroup::CyclicRotation,
            FiniteGroup::Product(vec![FiniteGroup::Symmetric(3), FiniteGroup::CyclicRotation]),
        ] {
            let e = group.identity();
            for g in group.enumerate_elements().unwrap() {
                assert_eq!(group.compose(&e, &g).unwrap(), g);
                assert_eq!(group.compose(&g, &e).unwrap(), g);
                let inv = group.inverse(&g).unwrap();
                assert_eq!(group.compose(&g, &inv).unwrap(), e);
            }
        }
    }

    #[test]
    fn transposition_swaps_first_two_entries() {
        let rep = Representation::perm_vector(3);
        let g = GroupElement::Perm(vec![1, 0, 2]);
        assert_eq!(
            rep.apply(&g, &[10.0, 20.0, 30.0]).unwrap(),
            vec![20.0, 10.0, 30.0]
        );
    }

    #[test]
    fn translation_moves_rows_down() {
        let rep = Representation::translation_image(2);
        let out = rep
            .apply(&GroupElement::Shift(1, 0), &[1.0, 2.0, 3.0, 4.0])
            .unwrap();
        assert_eq!(out, vec![3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn rotation_identity_and_quarter_turn() {
        let rep = Representation::rotation_image(3);
        let x: Vec<f64> = (0..9).map(|v| v as f64).collect();
        assert_eq!(rep.apply(&GroupElement::Rotation(0), &x).unwrap(), x);
        // (ρ(1)x)_{i,j} = x_{-j,i}
        let y = rep.apply(&GroupElement::Rotation(1), &x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(y[i * 3 + j], x[((3 - j) % 3) * 3 + i]);
            }
        }
        let four = (0..4).fold(x.clone(), |v, _| {
            rep.apply(&GroupElement::Rotation(1), &v).unwrap()
        });
        assert_eq!(four, x);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let rep = Representation::perm_vector(3);
        assert!(matches!(
            rep.apply(&FiniteGroup::Symmetric(3).identity(), &[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn permutation_matrices() {
        let rep = Representation::perm_vector(2);
        let id = rep.matrix(&FiniteGroup::Symmetric(2).identity()).unwrap();
        assert_eq!(id, Matrix::identity(2));
        let swap = rep.matrix(&GroupElement::Perm(vec![1, 0])).unwrap();
        assert_eq!(swap.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let big = Representation::perm_tensor(9, 4);
        assert!(matches!(
            big.matrix(&FiniteGroup::Symmetric(9).identity()),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn channel_split_flattens_copies() {
        let rep = Representation::trivial(FiniteGroup::CyclicRotation, 5).channelwise(3);
        assert_eq!(
            rep.kind().channel_split(),
            (RepKind::Trivial { dim: 1 }, 15)
        );
        let rep = Representation::rotation_image(4).channelwise(2);
        assert_eq!(
            rep.kind().channel_split(),
            (RepKind::RotationImage { n: 4 }, 2)
        );
    }

    #[test]
    fn incompatible_kinds_are_rejected() {
        assert!(
            Representation::new(FiniteGroup::CyclicRotation, RepKind::PermVector { n: 3 }).is_err()
        );
        assert!(Representation::new(
            FiniteGroup::Symmetric(3),
            RepKind::PermTensor { n: 3, order: 2 }
        )
        .is_ok());
    }
}
