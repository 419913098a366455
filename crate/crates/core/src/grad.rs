//! Differentiable objectives on the layer space, Hessian-vector products,
//! finite-difference validation and Hessian blocks.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::basis::Projector;
use crate::error::{Error, Result};
use crate::group::HaarStrategy;
use crate::induced::InducedRep;
use crate::layers::LayerStack;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::tol;

pub use crate::eigen::{sym_eigh, sym_eigs, SymEigen};

/// Gradient together with the value it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub grad: LayerStack,
    pub value: f64,
}

/// A scalar function on the layer space with an exact gradient.
pub trait Objective {
    fn dims(&self) -> &[usize];
    fn value(&self, a: &LayerStack) -> Result<f64>;
    fn gradient(&self, a: &LayerStack) -> Result<GradResult>;
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dims(&self) -> &[usize] {
        (**self).dims()
    }
    fn value(&self, a: &LayerStack) -> Result<f64> {
        (**self).value(a)
    }
    fn gradient(&self, a: &LayerStack) -> Result<GradResult> {
        (**self).gradient(a)
    }
}

impl<O: Objective + ?Sized> Objective for alloc::boxed::Box<O> {
    fn dims(&self) -> &[usize] {
        (**self).dims()
    }
    fn value(&self, a: &LayerStack) -> Result<f64> {
        (**self).value(a)
    }
    fn gradient(&self, a: &LayerStack) -> Result<GradResult> {
        (**self).gradient(a)
    }
}

pub fn grad_risk<O: Objective + ?Sized>(objective: &O, a: &LayerStack) -> Result<GradResult> {
    let g = objective.gradient(a)?;
    if !g.grad.is_finite() || !g.value.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    Ok(g)
}

/// Step used by [`hvp`]: `ε^{1/3} · max(1, ‖A‖) / max(‖B‖, 10⁻¹²)`.
pub fn hvp_step(a: &LayerStack, b: &LayerStack) -> f64 {
    math::cbrt(f64::EPSILON) * a.norm().max(1.0) / b.norm().max(1e-12)
}

/// `∇²R(A)[B, ·]` by central differences of the gradient.
pub fn hvp<O: Objective + ?Sized>(
    objective: &O,
    a: &LayerStack,
    b: &LayerStack,
) -> Result<LayerStack> {
    a.check_shape(b, "hessian-vector direction")?;
    if b.norm() == 0.0 {
        return Ok(b.zeros_like());
    }
    let h = hvp_step(a, b);
    let plus = grad_risk(objective, &a.add(&b.scaled(h)))?.grad;
    let minus = grad_risk(objective, &a.add(&b.scaled(-h)))?.grad;
    let mut out = plus.sub(&minus);
    out.scale(0.5 / h);
    Ok(out)
}

/// `max_D |⟨∇R(A),D⟩ − (R(A+hD) − R(A−hD))/2h| / max(|⟨∇R(A),D⟩|, 10⁻¹²)`
/// over the nonzero directions; `None` when every direction is zero.
pub fn fd_check<O: Objective + ?Sized>(
    objective: &O,
    a: &LayerStack,
    directions: &[LayerStack],
    h: f64,
) -> Result<Option<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let g = grad_risk(objective, a)?.grad;
    let mut worst: Option<f64> = None;
    for d in directions {
        if d.norm() == 0.0 {
            continue;
        }
        let analytic = g.inner(d);
        let fd = (objective.value(&a.add(&d.scaled(h)))?
            - objective.value(&a.add(&d.scaled(-h)))?)
            / (2.0 * h);
        let err = (analytic - fd).abs() / analytic.abs().max(1e-12);
        worst = Some(worst.map_or(err, |w| w.max(err)));
    }
    Ok(worst)
}

/// A Hessian restricted to the span of an orthonormal set of directions.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlock {
    pub basis: Vec<LayerStack>,
    /// `(H + Hᵀ)/2` with `H[j,k] = ⟨hvp(A, b_k), b_j⟩`.
    pub matrix: Matrix,
    /// `max |H − Hᵀ|` before symmetrization.
    pub asymmetry: f64,
}

impl HessianBlock {
    /// Asymmetry relative to `max |H|`.
    pub fn relative_asymmetry(&self) -> f64 {
        self.asymmetry / self.matrix.max_abs().max(f64::MIN_POSITIVE)
    }
}

pub fn hessian_block<O: Objective + ?Sized>(
    objective: &O,
    a: &LayerStack,
    basis: &[LayerStack],
) -> Result<HessianBlock> {
    let flat: Vec<Vec<f64>> = basis.iter().map(|b| b.as_slice().to_vec()).collect();
    let residual = linalg::orthonormality_residual(&flat);
    if residual > tol::ORTHONORMAL_BASIS {
        return Err(Error::BasisNotOrthonormal { residual });
    }
    let images = basis
        .iter()
        .map(|b| hvp(objective, a, b))
        .collect::<Result<Vec<_>>>()?;
    let n = basis.len();
    let raw = Matrix::from_fn(n, n, |j, k| images[k].inner(&basis[j]));
    Ok(HessianBlock {
        basis: basis.to_vec(),
        asymmetry: raw.asymmetry(),
        matrix: raw.symmetrized(),
    })
}

/// `R(A) = ½⟨A, M A⟩ + ⟨c, A⟩` in flat layer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRisk {
    dims: Vec<usize>,
    m: Matrix,
    c: Vec<f64>,
}

impl QuadraticRisk {
    pub fn new(dims: &[usize], m: Matrix, c: Vec<f64>) -> Result<Self> {
        let n = crate::layers::param_count(dims);
        if m.shape() != (n, n) || c.len() != n {
            return Err(Error::ShapeMismatch {
                context: "quadratic risk coefficients",
                expected: n,
                got: m.rows(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            m: m.symmetrized(),
            c,
        })
    }

    pub fn hessian(&self) -> &Matrix {
        &self.m
    }
}

impl Objective for QuadraticRisk {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn value(&self, a: &LayerStack) -> Result<f64> {
        Ok(0.5 * self.m.bilinear(a.as_slice(), a.as_slice()) + linalg::dot(&self.c, a.as_slice()))
    }

    fn gradient(&self, a: &LayerStack) -> Result<GradResult> {
        let mut g = self.m.matvec(a.as_slice());
        linalg::axpy(1.0, &self.c, &mut g);
        Ok(GradResult {
            grad: LayerStack::from_flat(&self.dims, g)?,
            value: self.value(a)?,
        })
    }
}

/// `A ↦ ∫ R(ρ̄(g)A) dμ(g)`, the layer-side form of an augmented risk.
#[derive(Debug, Clone)]
pub struct LayerAveraged<O> {
    pub inner: O,
    pub ind: InducedRep,
    pub haar: HaarStrategy,
}

impl<O: Objective> Objective for LayerAveraged<O> {
    fn dims(&self) -> &[usize] {
        self.inner.dims()
    }

    fn value(&self, a: &LayerStack) -> Result<f64> {
        let elements = self.haar.elements(self.ind.group())?;
        let mut total = 0.0;
        for g in &elements {
            total += self.inner.value(&self.ind.apply(g, a)?)?;
        }
        Ok(total / elements.len() as f64)
    }

    fn gradient(&self, a: &LayerStack) -> Result<GradResult> {
        let elements = self.haar.elements(self.ind.group())?;
        let mut grad = a.zeros_like();
        let mut value = 0.0;
        for g in &elements {
            let map = self.ind.source_map(g)?;
            let moved = self.ind.apply(g, a)?;
            let r = self.inner.gradient(&moved)?;
            value += r.value;
            // gradient of A ↦ R(P_g A) is P_gᵀ ∇R, a scatter through the map
            let out = grad.as_mut_slice();
            for (p, &s) in map.iter().enumerate() {
                out[s] += r.grad.as_slice()[p];
            }
        }
        let w = 1.0 / elements.len() as f64;
        grad.scale(w);
        Ok(GradResult {
            grad,
            value: value * w,
        })
    }
}

/// `A ↦ R(Π_E A)`, the equivariant form of a risk.
#[derive(Debug, Clone)]
pub struct Projected<O> {
    pub inner: O,
    pub projector: Arc<Projector>,
}

impl<O: Objective> Objective for Projected<O> {
    fn dims(&self) -> &[usize] {
        self.inner.dims()
    }

    fn value(&self, a: &LayerStack) -> Result<f64> {
        self.inner.value(&self.projector.project(a)?)
    }

    fn gradient(&self, a: &LayerStack) -> Result<GradResult> {
        let r = self.inner.gradient(&self.projector.project(a)?)?;
        Ok(GradResult {
            grad: self.projector.project(&r.grad)?,
            value: r.value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{seeded_rng, Representation};
    use rand::Rng;

    fn random_quadratic(dims: &[usize], seed: u64) -> QuadraticRisk {
        let n = crate::layers::param_count(dims);
        let mut rng = seeded_rng(seed);
        let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        QuadraticRisk::new(dims, m, c).unwrap()
    }

    #[test]
    fn quadratic_gradient_is_exact_under_fd() {
        let q = random_quadratic(&[2, 3], 1);
        let mut rng = seeded_rng(2);
        let a = LayerStack::random_gaussian(&[2, 3], false, &mut rng);
        let dirs: Vec<LayerStack> = (0..5)
            .map(|_| LayerStack::random_gaussian(&[2, 3], false, &mut rng))
            .collect();
        assert!(fd_check(&q, &a, &dirs, 1e-4).unwrap().unwrap() < 1e-7);
        assert_eq!(fd_check(&q, &a, &[a.zeros_like()], 1e-4).unwrap(), None);
    }

    #[test]
    fn hessian_block_of_quadratic_recovers_m() {
        let q = random_quadratic(&[2, 2], 3);
        let a = LayerStack::zeros(&[2, 2]);
        let basis: Vec<LayerStack> = (0..4)
            .map(|k| {
                let mut e = LayerStack::zeros(&[2, 2]);
                e.as_mut_slice()[k] = 1.0;
                e
            })
            .collect();
        let h = hessian_block(&q, &a, &basis).unwrap();
        assert!(h.matrix.sub(q.hessian()).max_abs() < 1e-6);
        assert!(hessian_block(&q, &a, &[]).unwrap().matrix.shape() == (0, 0));
        let bad = [basis[0].scaled(2.0)];
        assert!(matches!(
            hessian_block(&q, &a, &bad),
            Err(Error::BasisNotOrthonormal { .. })
        ));
    }

    #[test]
    fn hvp_of_zero_direction_is_zero() {
        let q = random_quadratic(&[2, 2], 4);
        let a = LayerStack::zeros(&[2, 2]);
        assert_eq!(hvp(&q, &a, &a).unwrap(), a);
    }

    #[test]
    fn layer_averaged_gradient_matches_fd() {
        let ind = InducedRep::new(vec![
            Representation::perm_vector(3),
            Representation::perm_vector(3),
        ])
        .unwrap();
        let q = random_quadratic(&[3, 3], 5);
        let avg = LayerAveraged {
            inner: q,
            ind: ind.clone(),
            haar: HaarStrategy::Exact,
        };
        let mut rng = seeded_rng(6);
        let a = LayerStack::random_gaussian(&[3, 3], false, &mut rng);
        let dirs: Vec<LayerStack> = (0..4)
            .map(|_| LayerStack::random_gaussian(&[3, 3], false, &mut rng))
            .collect();
        assert!(fd_check(&avg, &a, &dirs, 1e-4).unwrap().unwrap() < 1e-7);
        let proj = Projected {
            inner: random_quadratic(&[3, 3], 7),
            projector: Arc::new(Projector::orbits(&ind).unwrap()),
        };
        assert!(fd_check(&proj, &a, &dirs, 1e-4).unwrap().unwrap() < 1e-7);
    }
}
