//! Executable checks of the gradient and Hessian identities that relate the
//! nominal, augmented and equivariant risks at points of `E`.
//!
//! Every check returns a [`CheckReport`] whose status follows from its
//! residuals and their named bounds alone.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::basis::Projector;
use crate::data::Dataset;
use crate::eigen::sym_eigs;
use crate::error::{Error, Result};
use crate::grad::{
    grad_risk, hessian_block, hvp, LayerAveraged, Objective, Projected, QuadraticRisk,
};
use crate::group::{FiniteGroup, HaarStrategy, Representation};
use crate::induced::InducedRep;
use crate::layers::LayerStack;
use crate::linalg::Matrix;
use crate::math;
use crate::mlp::feature_average;
use crate::risk::{Model, RiskKind, RiskSpec};
use crate::tol::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Residuals recorded without an asserted bound.
    Measured,
}

/// Outcome of one check: named residuals, the bounds some of them must meet,
/// and the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub residuals: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, f64>,
    pub fingerprint: BTreeMap<String, String>,
}

impl CheckReport {
    pub fn new(name: &str, fingerprint: BTreeMap<String, String>) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::Measured,
            residuals: BTreeMap::new(),
            bounds: BTreeMap::new(),
            fingerprint,
        }
    }

    /// Records a residual that must not exceed `bound`.
    pub fn bounded(&mut self, name: &str, value: f64, bound: f64) {
        self.residuals.insert(name.to_string(), value);
        self.bounds.insert(name.to_string(), bound);
    }

    /// Records a residual without a bound.
    pub fn measured(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.to_string(), value);
    }

    /// Pass iff every bounded residual is within its bound; Measured when
    /// nothing is bounded.
    pub fn finish(mut self) -> Self {
        self.status = if self.bounds.is_empty() {
            CheckStatus::Measured
        } else if self.bounds.iter().all(|(k, b)| self.residuals[k] <= *b) {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self
    }

    /// `(name, value, bound, within)` for every bounded residual.
    pub fn verdicts(&self) -> Vec<(&str, f64, f64, bool)> {
        self.bounds
            .iter()
            .map(|(k, &b)| {
                let v = self.residuals[k];
                (k.as_str(), v, b, v <= b)
            })
            .collect()
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

type BoxedObjective = alloc::boxed::Box<dyn Objective + Send + Sync>;

/// The nominal, augmented and equivariant forms of one risk, with the symmetry
/// they refer to.
pub struct RiskFamily {
    pub label: String,
    pub ind: InducedRep,
    pub projector: Arc<Projector>,
    pub haar: HaarStrategy,
    pub seed: u64,
    pub nominal: BoxedObjective,
    pub augmented: BoxedObjective,
    pub equivariant: BoxedObjective,
}

impl core::fmt::Debug for RiskFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RiskFamily")
            .field("label", &self.label)
            .field("dims", &self.ind.dims())
            .field("haar", &self.haar)
            .finish()
    }
}

impl RiskFamily {
    /// Risks of an MLP on a dataset, with batch normalization removed. The
    /// augmented form transforms the data, so identities relating it to the
    /// layer space are tested rather than assumed.
    pub fn from_model(
        label: &str,
        model: &Model,
        data: Arc<Dataset>,
        haar: HaarStrategy,
        seed: u64,
    ) -> Self {
        let model = Arc::new(model.without_batch_norm());
        let spec = RiskSpec::new(RiskKind::Nominal, model.clone(), data, haar);
        Self {
            label: label.to_string(),
            ind: model.ind.clone(),
            projector: model.projector().clone(),
            haar,
            seed,
            nominal: alloc::boxed::Box::new(spec.clone()),
            augmented: alloc::boxed::Box::new(spec.with_kind(RiskKind::AugmentedInputSide)),
            equivariant: alloc::boxed::Box::new(spec.with_kind(RiskKind::Equivariant)),
        }
    }

    /// A quadratic risk, averaged over layer transformations and composed
    /// with `Π_E`.
    pub fn quadratic(
        label: &str,
        ind: InducedRep,
        q: QuadraticRisk,
        haar: HaarStrategy,
        seed: u64,
    ) -> Result<Self> {
        let projector = Arc::new(Projector::orbits(&ind)?);
        Ok(Self {
            label: label.to_string(),
            projector: projector.clone(),
            haar,
            seed,
            nominal: alloc::boxed::Box::new(q.clone()),
            augmented: alloc::boxed::Box::new(LayerAveraged {
                inner: q.clone(),
                ind: ind.clone(),
                haar,
            }),
            equivariant: alloc::boxed::Box::new(Projected {
                inner: q,
                projector,
            }),
            ind,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.ind.dims()
    }

    pub fn fingerprint(&self, tol: f64) -> BTreeMap<String, String> {
        let mut f = BTreeMap::new();
        f.insert("family".into(), self.label.clone());
        f.insert("group".into(), self.ind.group().to_string());
        f.insert("dims".into(), format!("{:?}", self.ind.dims()));
        f.insert("haar".into(), haar_name(self.haar));
        f.insert("seed".into(), self.seed.to_string());
        f.insert("tolerance".into(), format!("{tol:e}"));
        f
    }

    fn require_exact(&self) -> Result<()> {
        match self.haar {
            HaarStrategy::Exact => Ok(()),
            HaarStrategy::Sampled { samples, .. } => Err(Error::PreconditionViolated {
                what: "sampled Haar quadrature where exact is required, samples",
                value: samples as f64,
                bound: 0.0,
            }),
        }
    }

    fn require_in_e(&self, a: &LayerStack, tol: &Tolerances) -> Result<()> {
        let d = self.projector.dist_from_e(a)?;
        let bound = tol.in_subspace * a.norm().max(1.0);
        if d > bound {
            return Err(Error::PreconditionViolated {
                what: "distance from E",
                value: d,
                bound,
            });
        }
        Ok(())
    }
}

fn haar_name(h: HaarStrategy) -> String {
    match h {
        HaarStrategy::Exact => "exact".into(),
        HaarStrategy::Sampled { samples, seed } => format!("sampled({samples}, seed {seed})"),
    }
}

/// `∇R^aug(A) = Π_E ∇R(A) = ∇R^eqv(A)` at `A ∈ E`, plus the stationarity
/// equivalence that follows from it.
pub fn check_grad_identity(
    family: &RiskFamily,
    a: &LayerStack,
    tol: &Tolerances,
) -> Result<CheckReport> {
    family.require_exact()?;
    family.require_in_e(a, tol)?;
    let g = grad_risk(&family.nominal, a)?.grad;
    let g_aug = grad_risk(&family.augmented, a)?.grad;
    let g_eqv = grad_risk(&family.equivariant, a)?.grad;
    let pg = family.projector.project(&g)?;
    let scale = g.norm().max(1.0);
    let mut report = CheckReport::new("grad_identity", family.fingerprint(tol.gradient_identity));
    report.bounded(
        "augmented_vs_projected",
        g_aug.distance(&pg) / scale,
        tol.gradient_identity,
    );
    report.bounded(
        "projected_vs_equivariant",
        pg.distance(&g_eqv) / scale,
        tol.gradient_identity,
    );
    report.bounded(
        "stationarity_equivalence",
        (g_aug.norm() - g_eqv.norm()).abs() / scale,
        tol.gradient_identity,
    );
    report.measured("grad_norm", g.norm());
    Ok(report.finish())
}

/// Euler steps of the augmented flow from `A ∈ E` stay in `E`. With a sampled
/// quadrature the drift is only recorded.
pub fn check_e_invariance(
    family: &RiskFamily,
    a: &LayerStack,
    steps: usize,
    tau: f64,
    tol: &Tolerances,
) -> Result<CheckReport> {
    family.require_in_e(a, tol)?;
    let mut x = a.clone();
    let mut worst: f64 = family.projector.dist_from_e(&x)? / x.norm().max(1.0);
    for _ in 0..steps {
        let g = grad_risk(&family.augmented, &x)?.grad;
        x.axpy(-tau, &g);
        worst = worst.max(family.projector.dist_from_e(&x)? / x.norm().max(1.0));
    }
    let mut fp = family.fingerprint(tol.augmented_flow_drift);
    fp.insert("steps".into(), steps.to_string());
    fp.insert("tau".into(), format!("{tau:e}"));
    let mut report = CheckReport::new("e_invariance", fp);
    if family.haar.is_exact() {
        report.bounded("max_relative_dist_from_e", worst, tol.augmented_flow_drift);
    } else {
        report.measured("max_relative_dist_from_e", worst);
    }
    report.measured("final_dist_from_init", x.distance(a));
    Ok(report.finish())
}

/// Orthonormal bases of `E` and `E⊥` in flat layer coordinates, built from
/// the coordinate orbits: the normalized orbit indicators span `E`, and
/// Helmert contrasts within each orbit span `E⊥`.
pub fn subspace_bases(ind: &InducedRep) -> Result<(Vec<LayerStack>, Vec<LayerStack>)> {
    let orbits = ind.orbits()?;
    let dims = ind.dims();
    let n = orbits.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); orbits.num_orbits()];
    for (p, &l) in orbits.labels().iter().enumerate() {
        members[l as usize].push(p);
    }
    let mut e = Vec::with_capacity(members.len());
    let mut perp = Vec::with_capacity(n - members.len());
    for m in &members {
        let mut v = vec![0.0; n];
        let w = 1.0 / math::sqrt(m.len() as f64);
        m.iter().for_each(|&p| v[p] = w);
        e.push(LayerStack::from_flat(&dims, v)?);
        for j in 1..m.len() {
            let mut v = vec![0.0; n];
            let w = 1.0 / math::sqrt((j * (j + 1)) as f64);
            m[..j].iter().for_each(|&p| v[p] = w);
            v[m[j]] = -(j as f64) * w;
            perp.push(LayerStack::from_flat(&dims, v)?);
        }
    }
    Ok((e, perp))
}

fn standard_basis(dims: &[usize]) -> Result<Vec<LayerStack>> {
    let n = crate::layers::param_count(dims);
    (0..n)
        .map(|p| {
            let mut v = vec![0.0; n];
            v[p] = 1.0;
            LayerStack::from_flat(dims, v)
        })
        .collect()
}

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_HESSIAN_CAP {
        return Err(Error::CapExceeded {
            what: "dense Hessian dimension",
            size: n as u64,
            cap: DENSE_HESSIAN_CAP as u64,
        });
    }
    Ok(())
}

/// Largest layer-space dimension for which Hessians are assembled densely.
pub const DENSE_HESSIAN_CAP: usize = 512;

/// Dense Hessians of the three risks at `a`, in flat layer coordinates.
pub struct DenseHessians {
    pub nominal: Matrix,
    pub augmented: Matrix,
    pub equivariant: Matrix,
}

pub fn dense_hessians(family: &RiskFamily, a: &LayerStack) -> Result<DenseHessians> {
    check_dense(a.num_params())?;
    let basis = standard_basis(a.dims())?;
    Ok(DenseHessians {
        nominal: hessian_block(&family.nominal, a, &basis)?.matrix,
        augmented: hessian_block(&family.augmented, a, &basis)?.matrix,
        equivariant: hessian_block(&family.equivariant, a, &basis)?.matrix,
    })
}

/// `∇²R^aug(A) = Π_{E⊗2}∇²R(A)` and `∇²R^eqv(A) = Π_E^{⊗2}∇²R(A)` at
/// `A ∈ E`, plus the vanishing of the `E × E⊥` block of `∇²R^aug(A)`.
/// `bound` is the relative tolerance (looser for finite-difference Hessians
/// of networks than for quadratic risks).
pub fn check_hessian_identities(
    family: &RiskFamily,
    a: &LayerStack,
    bound: f64,
    tol: &Tolerances,
) -> Result<CheckReport> {
    family.require_exact()?;
    family.require_in_e(a, tol)?;
    let h = dense_hessians(family, a)?;
    let p = family.ind.projector_matrix(HaarStrategy::Exact)?;
    let proj2 = family.ind.project_e2(&h.nominal, HaarStrategy::Exact)?;
    let sandwich = p.matmul(&h.nominal).matmul(&p);
    let scale = h.nominal.frobenius().max(f64::MIN_POSITIVE);
    let (e, perp) = subspace_bases(&family.ind)?;
    let mut cross: f64 = 0.0;
    let images: Vec<Vec<f64>> = perp
        .iter()
        .map(|b| h.augmented.matvec(b.as_slice()))
        .collect();
    for u in &e {
        for img in &images {
            cross = cross.max(crate::linalg::dot(u.as_slice(), img).abs());
        }
    }
    let mut report = CheckReport::new("hessian_identities", family.fingerprint(bound));
    report.bounded(
        "augmented_vs_e2_projection",
        h.augmented.sub(&proj2).frobenius() / scale,
        bound,
    );
    report.bounded(
        "equivariant_vs_sandwich",
        h.equivariant.sub(&sandwich).frobenius() / scale,
        bound,
    );
    report.bounded("augmented_cross_block", cross, bound);
    report.measured("hessian_norm", h.nominal.frobenius());
    report.measured("dim_e", e.len() as f64);
    Ok(report.finish())
}

/// The eigenvalues, in ascending order, of a symmetric matrix restricted to
/// an orthonormal set of vectors.
fn restricted_eigs(m: &Matrix, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    if basis.is_empty() {
        return Ok(Vec::new());
    }
    sym_eigs(&m.restricted_to(basis))
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_dev(v: &[f64], target: f64) -> f64 {
    v.iter().map(|x| (x - target).abs()).fold(0.0, f64::max)
}

/// The two matrices on `ℝ^N` under `S_N` showing that positive definiteness
/// of a projected Hessian does not transfer back:
/// `U = (N+1) e₁⊗e₁ − e₂⊗e₂` is indefinite while `Π_{E⊗2}U = id`, and
/// `V = −id + (2/N) 𝟙⊗𝟙` is negative on `E⊥` while `Π_E^{⊗2}V = (1/N) 𝟙⊗𝟙`.
pub fn counterexample(n: usize, tol: &Tolerances) -> Result<CheckReport> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "counterexample needs N >= 3, got {n}"
        )));
    }
    let group = FiniteGroup::Symmetric(n);
    let ind = InducedRep::new(vec![
        Representation::trivial(group, 1),
        Representation::perm_vector(n),
    ])?;
    let exact = HaarStrategy::Exact;
    let mut u = Matrix::zeros(n, n);
    u[(0, 0)] = (n + 1) as f64;
    u[(1, 1)] = -1.0;
    let v = Matrix::from_fn(n, n, |r, c| 2.0 / n as f64 - if r == c { 1.0 } else { 0.0 });
    let p = ind.projector_matrix(exact)?;
    let (e, perp) = subspace_bases(&ind)?;
    let e: Vec<Vec<f64>> = e.into_iter().map(LayerStack::into_flat).collect();
    let perp: Vec<Vec<f64>> = perp.into_iter().map(LayerStack::into_flat).collect();

    let u_eigs = sym_eigs(&u)?;
    let pu = ind.project_e2(&u, exact)?;
    let pu_eigs = sym_eigs(&pu)?;
    let v_perp = restricted_eigs(&v, &perp)?;
    let pvp = p.matmul(&v).matmul(&p);
    let pvp_e = restricted_eigs(&pvp, &e)?;
    let ones_outer = Matrix::from_fn(n, n, |_, _| 1.0 / n as f64);

    let b = tol.counterexample;
    let mut fp = BTreeMap::new();
    fp.insert("group".into(), group_name(n));
    fp.insert("n".into(), n.to_string());
    fp.insert("tolerance".into(), format!("{b:e}"));
    let mut report = CheckReport::new("counterexample", fp);
    report.bounded("u_min_eig_minus_one", (min_of(&u_eigs) + 1.0).abs(), b);
    report.bounded("projected_u_eigs_minus_one", max_dev(&pu_eigs, 1.0), b);
    report.bounded(
        "projected_u_minus_identity",
        pu.sub(&Matrix::identity(n)).max_abs(),
        b,
    );
    report.bounded("v_on_e_perp_eigs_plus_one", max_dev(&v_perp, -1.0), b);
    report.bounded("projected_v_on_e_eig_minus_one", max_dev(&pvp_e, 1.0), b);
    report.bounded(
        "projected_v_minus_mean_outer",
        pvp.sub(&ones_outer).max_abs(),
        b,
    );
    report.measured("u_min_eig", min_of(&u_eigs));
    report.measured("projected_u_min_eig", min_of(&pu_eigs));
    report.measured(
        "v_on_e_perp_max_eig",
        v_perp.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    report.measured("projected_v_on_e_eig", min_of(&pvp_e));
    Ok(report.finish())
}

fn group_name(n: usize) -> String {
    FiniteGroup::Symmetric(n).to_string()
}

/// A quadratic risk `½⟨A − A*, M(A − A*)⟩` with `M = BᵀB + μ·id` for a
/// Gaussian `B`, so `A*` is its strict minimum. Returns the family and the
/// smallest eigenvalue of `M`.
pub fn planted_quadratic(
    ind: InducedRep,
    a_star: &LayerStack,
    mu: f64,
    seed: u64,
) -> Result<(RiskFamily, f64)> {
    use rand::Rng;
    let n = ind.num_params();
    let mut rng = crate::group::seeded_rng(seed);
    let b = Matrix::from_fn(n, n, |_, _| {
        rng.random_range(-1.0..1.0) / math::sqrt(n as f64)
    });
    let m = b
        .transpose()
        .matmul(&b)
        .add(&Matrix::identity(n).scaled(mu));
    let c: Vec<f64> = m
        .matvec(a_star.as_slice())
        .into_iter()
        .map(|v| -v)
        .collect();
    let planted = min_of(&sym_eigs(&m)?);
    let q = QuadraticRisk::new(&ind.dims(), m, c)?;
    Ok((
        RiskFamily::quadratic("planted quadratic", ind, q, HaarStrategy::Exact, seed)?,
        planted,
    ))
}

/// At a planted strict minimum `A* ∈ E` with smallest Hessian eigenvalue
/// `planted`, the augmented Hessian keeps its smallest eigenvalue at least
/// `planted`, and on `E` the equivariant Hessian is no less convex than the
/// augmented one.
pub fn check_planted_minimum(
    family: &RiskFamily,
    a_star: &LayerStack,
    planted: f64,
    tol: &Tolerances,
) -> Result<CheckReport> {
    family.require_exact()?;
    family.require_in_e(a_star, tol)?;
    let h = dense_hessians(family, a_star)?;
    let (e, _) = subspace_bases(&family.ind)?;
    let e: Vec<Vec<f64>> = e.into_iter().map(LayerStack::into_flat).collect();
    let aug_min = min_of(&sym_eigs(&h.augmented)?);
    let aug_on_e = min_of(&restricted_eigs(&h.augmented, &e)?);
    let eqv_on_e = min_of(&restricted_eigs(&h.equivariant, &e)?);
    let bound = 1e-4;
    let mut report = CheckReport::new("planted_minimum", family.fingerprint(bound));
    report.bounded("augmented_min_eig_shortfall", planted - aug_min, bound);
    report.bounded("equivariant_on_e_shortfall", aug_on_e - eqv_on_e, bound);
    report.bounded(
        "augmented_gradient_at_minimum",
        grad_risk(&family.augmented, a_star)?.grad.norm(),
        tol.gradient_identity,
    );
    report.measured("planted_min_eig", planted);
    report.measured("augmented_min_eig", aug_min);
    report.measured("augmented_min_eig_on_e", aug_on_e);
    report.measured("equivariant_min_eig_on_e", eqv_on_e);
    Ok(report.finish())
}

/// Spectrum of `∇²R^aug(A*)` restricted to `E⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// `‖∇R^eqv(A*)‖`, to judge how close `A*` is to stationary.
    pub stationarity: f64,
}

/// Eigenvalues of the augmented Hessian on `E⊥` at `A* ∈ E`. Always
/// Measured: negative eigenvalues mark directions along which `E` is unstable.
pub fn stability_spectrum(
    family: &RiskFamily,
    a: &LayerStack,
    tol: &Tolerances,
) -> Result<(CheckReport, Spectrum)> {
    family.require_in_e(a, tol)?;
    let (_, perp) = subspace_bases(&family.ind)?;
    check_dense(perp.len())?;
    let stationarity = grad_risk(&family.equivariant, a)?.grad.norm();
    let eigenvalues = if perp.is_empty() {
        Vec::new()
    } else {
        sym_eigs(&hessian_block(&family.augmented, a, &perp)?.matrix)?
    };
    let negative = eigenvalues
        .iter()
        .filter(|&&l| l < -tol.negative_eigenvalue)
        .count();
    let mut report = CheckReport::new(
        "stability_spectrum",
        family.fingerprint(tol.negative_eigenvalue),
    );
    report.measured("stationarity", stationarity);
    report.measured(
        "approximately_stationary",
        f64::from(u8::from(stationarity <= tol.stationary)),
    );
    report.measured("dim_e_perp", eigenvalues.len() as f64);
    report.measured("negative_eigenvalues", negative as f64);
    if let (Some(lo), Some(hi)) = (eigenvalues.first(), eigenvalues.last()) {
        report.measured("min_eigenvalue", *lo);
        report.measured("max_eigenvalue", *hi);
    }
    Ok((
        report.finish(),
        Spectrum {
            eigenvalues,
            stationarity,
        },
    ))
}

/// Least-squares slope of `log d` against `log ε`.
pub fn loglog_slope(eps: &[f64], dev: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|&e| math::ln(e)).collect();
    let ys: Vec<f64> = dev.iter().map(|&d| math::ln(d)).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Deviations of `−∇R^aug(x + εy)` from the decoupled linear field
/// `−∇R^aug(x) − ε ∇²R^aug(x)[y]` for `x ∈ E`, unit `y ∈ E⊥`. The deviation
/// must shrink at order at least two in `ε`. When it stays at rounding level
/// for every `ε` the field is exactly linear and the check passes outright.
pub fn check_decoupling(
    family: &RiskFamily,
    x: &LayerStack,
    y: &LayerStack,
    eps: &[f64],
    tol: &Tolerances,
) -> Result<CheckReport> {
    family.require_exact()?;
    family.require_in_e(x, tol)?;
    let y_norm = y.norm();
    if (y_norm - 1.0).abs() > 1e-12 {
        return Err(Error::PreconditionViolated {
            what: "|‖y‖ − 1|",
            value: (y_norm - 1.0).abs(),
            bound: 1e-12,
        });
    }
    let y_in_e = family.projector.project(y)?.norm();
    if y_in_e > tol.in_subspace {
        return Err(Error::PreconditionViolated {
            what: "component of y in E",
            value: y_in_e,
            bound: tol.in_subspace,
        });
    }
    if eps.len() < 2 || eps.iter().any(|&e| e.is_nan() || e <= 0.0) {
        return Err(Error::InvalidArgument(
            "decoupling needs at least two positive ε".into(),
        ));
    }
    let g0 = grad_risk(&family.augmented, x)?.grad;
    let hy = hvp(&family.augmented, x, y)?;
    let pg0 = family.projector.project(&g0)?;
    let scale = g0.norm().max(hy.norm()).max(1.0);
    let mut devs = Vec::with_capacity(eps.len());
    let mut fp = family.fingerprint(tol.decoupling_order);
    fp.insert("eps".into(), format!("{eps:?}"));
    let mut report = CheckReport::new("decoupling", fp);
    for &e in eps {
        let g = grad_risk(&family.augmented, &x.add(&y.scaled(e)))?.grad;
        let mut lin = g0.clone();
        lin.axpy(e, &hy);
        let d = g.distance(&lin);
        let r_e = family.projector.project(&g)?.distance(&pg0);
        report.measured(&format!("deviation@{e:e}"), d);
        report.measured(&format!("e_component_change@{e:e}"), r_e);
        devs.push(d);
    }
    // rounding floor of a gradient difference at this scale, plus the error
    // of the finite-difference Hessian-vector product carried by ε
    let hvp_err = 10.0 * math::cbrt(f64::EPSILON * f64::EPSILON);
    let floors: Vec<f64> = eps
        .iter()
        .map(|&e| 1e3 * f64::EPSILON * scale + e * hy.norm() * hvp_err)
        .collect();
    if devs.iter().zip(&floors).all(|(d, f)| d <= f) {
        let excess = devs
            .iter()
            .zip(&floors)
            .map(|(d, f)| d / f)
            .fold(0.0, f64::max);
        report.bounded("deviation_over_rounding_floor", excess, 1.0);
    } else {
        let order = loglog_slope(eps, &devs);
        report.bounded("order_shortfall", tol.decoupling_order - order, 0.0);
        report.measured("order", order);
    }
    report.measured(
        "cross_term_in_e",
        family.projector.project(&hy)?.norm() / hy.norm().max(f64::MIN_POSITIVE),
    );
    Ok(report.finish())
}

/// `|R^aug(A) − mean ℓ(Φ^FA_A(x), y)|` at a random `A` and at its projection
/// onto `E`. Measured only.
pub fn check_feature_average_identity(
    model: &Model,
    data: &Dataset,
    a: &LayerStack,
    seed: u64,
) -> Result<CheckReport> {
    let model = model.without_batch_norm();
    let gap = |a: &LayerStack| -> Result<f64> {
        let r_aug = crate::risk::augmented_risk(
            &model,
            data,
            a,
            HaarStrategy::Exact,
            crate::risk::AugmentedForm::InputSide,
        )?;
        let y = feature_average(
            &model.mlp,
            &model.ind,
            a,
            data.inputs(),
            HaarStrategy::Exact,
        )?;
        let mut total = 0.0;
        for r in 0..y.rows() {
            total += model.loss.value(y.row(r), data.targets().row(r))?;
        }
        Ok((r_aug - total / y.rows() as f64).abs())
    };
    let mut fp = BTreeMap::new();
    fp.insert("group".into(), model.ind.group().to_string());
    fp.insert("dims".into(), format!("{:?}", model.ind.dims()));
    fp.insert("haar".into(), "exact".into());
    fp.insert("seed".into(), seed.to_string());
    let mut report = CheckReport::new("feature_average_identity", fp);
    report.measured("gap_random", gap(a)?);
    report.measured("gap_equivariant", gap(&model.project_e(a)?)?);
    Ok(report.finish())
}
