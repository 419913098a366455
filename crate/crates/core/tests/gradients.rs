use std::sync::Arc;

use equidyn_core::experiment::{Architecture, ExperimentKind, Scale};
use equidyn_core::grad::{
    fd_check, grad_risk, hessian_block, hvp, sym_eigh, sym_eigs, LayerAveraged, Projected,
    QuadraticRisk,
};
use equidyn_core::group::seeded_rng;
use equidyn_core::{
    FiniteGroup, HaarStrategy, InducedRep, LayerStack, Matrix, Objective, Projector,
    Representation, RiskKind, RiskSpec, Tolerances,
};
use rand::Rng;

const KINDS: [RiskKind; 4] = [
    RiskKind::Nominal,
    RiskKind::AugmentedInputSide,
    RiskKind::AugmentedLayerSide,
    RiskKind::Equivariant,
];

fn quadratic(dims: &[usize], seed: u64) -> QuadraticRisk {
    let n: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
    let mut rng = seeded_rng(seed);
    let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    QuadraticRisk::new(dims, m, c).unwrap()
}

fn directions(dims: &[usize], count: usize, seed: u64) -> Vec<LayerStack> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let d = LayerStack::random_gaussian(dims, false, &mut rng);
            d.scaled(1.0 / d.norm())
        })
        .collect()
}

fn rel(a: &LayerStack, b: &LayerStack) -> f64 {
    a.distance(b) / a.norm().max(b.norm()).max(1e-12)
}

#[test]
fn every_risk_matches_finite_differences() {
    let tol = Tolerances::default();
    for kind in ExperimentKind::ALL {
        for scale in [Scale::Toy, Scale::Acceptance] {
            let arch = Architecture::new(kind, scale);
            let model = Arc::new(arch.model(None).unwrap());
            let data = Arc::new(arch.synthetic_data(1).unwrap().take(6));
            let a = LayerStack::random_gaussian(model.dims(), true, &mut seeded_rng(2));
            let dirs = directions(model.dims(), 20, 3);
            for risk in KINDS {
                let spec = RiskSpec::new(risk, model.clone(), data.clone(), HaarStrategy::Exact);
                let err = fd_check(&spec, &a, &dirs, tol.fd_step_for(&model.mlp))
                    .unwrap()
                    .unwrap();
                assert!(
                    err <= tol.finite_difference,
                    "{kind} {scale:?} {risk:?}: {err:e}"
                );
            }
        }
    }
}

#[test]
fn smooth_networks_match_finite_differences_tightly() {
    for kind in ExperimentKind::ALL {
        let arch = Architecture::new(kind, Scale::Toy);
        let model = Arc::new(arch.model(None).unwrap());
        assert!(!model.mlp.is_piecewise_linear());
        let data = Arc::new(arch.synthetic_data(1).unwrap());
        let a = LayerStack::random_gaussian(model.dims(), true, &mut seeded_rng(2));
        let spec = RiskSpec::new(RiskKind::Nominal, model.clone(), data, HaarStrategy::Exact);
        let err = fd_check(&spec, &a, &directions(model.dims(), 20, 3), 1e-4)
            .unwrap()
            .unwrap();
        assert!(err <= 1e-5, "{kind}: {err:e}");
    }
}

#[test]
fn wrapped_quadratics_match_finite_differences() {
    let g = FiniteGroup::Symmetric(3);
    let ind = InducedRep::new(vec![
        Representation::perm_vector(3),
        Representation::perm_vector(3),
        Representation::trivial(g, 1),
    ])
    .unwrap();
    let dims = ind.dims();
    let a = LayerStack::random_gaussian(&dims, false, &mut seeded_rng(3));
    let dirs = directions(&dims, 20, 4);
    let averaged = LayerAveraged {
        inner: quadratic(&dims, 5),
        ind: ind.clone(),
        haar: HaarStrategy::Exact,
    };
    assert!(fd_check(&averaged, &a, &dirs, 1e-4).unwrap().unwrap() <= 1e-7);
    let projected = Projected {
        inner: quadratic(&dims, 6),
        projector: Arc::new(Projector::orbits(&ind).unwrap()),
    };
    assert!(fd_check(&projected, &a, &dirs, 1e-4).unwrap().unwrap() <= 1e-7);
}

#[test]
fn quadratic_fd_error_is_at_rounding_level() {
    let q = quadratic(&[3, 2, 2], 1);
    let a = LayerStack::random_gaussian(&[3, 2, 2], false, &mut seeded_rng(2));
    let err = fd_check(&q, &a, &directions(&[3, 2, 2], 20, 4), 1e-4)
        .unwrap()
        .unwrap();
    assert!(err < 1e-7, "{err:e}");
    assert_eq!(fd_check(&q, &a, &[a.zeros_like()], 1e-4).unwrap(), None);
}

#[test]
fn constant_risk_has_zero_gradient() {
    let dims = [2, 2];
    let q = QuadraticRisk::new(&dims, Matrix::zeros(4, 4), vec![0.0; 4]).unwrap();
    let a = LayerStack::random_gaussian(&dims, false, &mut seeded_rng(1));
    assert_eq!(grad_risk(&q, &a).unwrap().grad.norm(), 0.0);
}

#[test]
fn hvp_is_linear_and_symmetric() {
    let arch = Architecture::new(ExperimentKind::GraphConnectivity, Scale::Toy);
    let model = Arc::new(arch.model(None).unwrap());
    let data = Arc::new(arch.synthetic_data(4).unwrap());
    let risk = RiskSpec::new(RiskKind::Nominal, model.clone(), data, HaarStrategy::Exact);
    let a = LayerStack::random_gaussian(model.dims(), true, &mut seeded_rng(5));
    let d = directions(model.dims(), 3, 6);
    let (b1, b2, c) = (&d[0], &d[1], &d[2]);
    assert_eq!(hvp(&risk, &a, &a.zeros_like()).unwrap().norm(), 0.0);
    let sum = hvp(&risk, &a, &b1.add(b2)).unwrap();
    let parts = hvp(&risk, &a, b1)
        .unwrap()
        .add(&hvp(&risk, &a, b2).unwrap());
    assert!(rel(&sum, &parts) <= 1e-4);
    let hb = hvp(&risk, &a, b1).unwrap().inner(c);
    let hc = hvp(&risk, &a, c).unwrap().inner(b1);
    assert!((hb - hc).abs() <= 1e-4 * hb.abs().max(hc.abs()).max(1e-8));
}

#[test]
fn hessian_block_of_quadratic_recovers_m() {
    let dims = [2, 3];
    let q = quadratic(&dims, 8);
    let a = LayerStack::random_gaussian(&dims, false, &mut seeded_rng(1));
    let basis: Vec<LayerStack> = (0..6)
        .map(|k| {
            let mut v = vec![0.0; 6];
            v[k] = 1.0;
            LayerStack::from_flat(&dims, v).unwrap()
        })
        .collect();
    let block = hessian_block(&q, &a, &basis).unwrap();
    assert!(block.matrix.sub(q.hessian()).max_abs() <= 1e-6);
    assert!(block.asymmetry <= 1e-4 * block.matrix.max_abs());
    assert_eq!(hessian_block(&q, &a, &[]).unwrap().matrix.rows(), 0);
    assert_eq!(q.dims(), &dims);
}

#[test]
fn eigenvalues_of_small_matrices() {
    let d = Matrix::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
    assert_eq!(sym_eigs(&d).unwrap(), vec![1.0, 2.0, 3.0]);
    let swap = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let e = sym_eigs(&swap).unwrap();
    assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
}

#[test]
fn random_symmetric_matrix_is_reconstructed() {
    let mut rng = seeded_rng(9);
    let m = Matrix::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0)).symmetrized();
    let eig = sym_eigh(&m).unwrap();
    assert!(eig.reconstruct().sub(&m).frobenius() <= 1e-8 * m.frobenius());
    assert!(eig.max_residual(&m) <= 1e-8 * m.frobenius());
    assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
}
