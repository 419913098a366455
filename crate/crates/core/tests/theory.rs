use std::sync::Arc;

use equidyn_core::experiment::{Architecture, ExperimentKind, Scale};
use equidyn_core::grad::QuadraticRisk;
use equidyn_core::group::seeded_rng;
use equidyn_core::theory::{
    check_decoupling, check_e_invariance, check_feature_average_identity, check_grad_identity,
    check_hessian_identities, check_planted_minimum, counterexample, planted_quadratic,
    stability_spectrum, subspace_bases, CheckStatus, RiskFamily,
};
use equidyn_core::{
    FiniteGroup, HaarStrategy, InducedRep, LayerStack, Matrix, Model, Projector, Representation,
    Tolerances,
};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn family(arch: Architecture, samples: usize, seed: u64) -> (Model, RiskFamily) {
    let model = arch.model(None).unwrap();
    let data = Arc::new(arch.synthetic_data(seed).unwrap().take(samples));
    let fam = RiskFamily::from_model("net", &model, data, HaarStrategy::Exact, seed);
    (model, fam)
}

fn perm_ind(n: usize) -> InducedRep {
    InducedRep::new(vec![
        Representation::perm_vector(n),
        Representation::perm_vector(n),
        Representation::trivial(FiniteGroup::Symmetric(n), 1),
    ])
    .unwrap()
}

fn trivial_ind() -> InducedRep {
    let g = FiniteGroup::Trivial;
    InducedRep::new(vec![
        Representation::trivial(g.clone(), 2),
        Representation::trivial(g, 2),
    ])
    .unwrap()
}

/// `M = α P + β (id − P)` with `P` the dense projector onto `E`. Such an
/// `M` commutes with the group, so its averaged Hessian is `M` itself.
fn split_quadratic(ind: &InducedRep, alpha: f64, beta: f64) -> QuadraticRisk {
    let n = ind.num_params();
    let p = ind.projector_matrix(HaarStrategy::Exact).unwrap();
    let m = p
        .scaled(alpha)
        .add(&Matrix::identity(n).sub(&p).scaled(beta));
    QuadraticRisk::new(&ind.dims(), m, vec![0.0; n]).unwrap()
}

#[test]
fn gradient_identity_on_networks() {
    let mut c4 = Architecture::new(ExperimentKind::ShapeSegmentation, Scale::Desk);
    c4.n = 8;
    c4.channels = 2;
    let mut s4 = Architecture::new(ExperimentKind::GraphConnectivity, Scale::Desk);
    s4.n = 4;
    s4.channels = 3;
    for arch in [c4, s4] {
        let (model, fam) = family(arch, 8, 1);
        let a = model.init_equivariant(2).unwrap();
        let r = check_grad_identity(&fam, &a, &tol()).unwrap();
        assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    }
}

#[test]
fn gradient_identity_for_trivial_group() {
    let ind = trivial_ind();
    let q =
        QuadraticRisk::new(&ind.dims(), Matrix::identity(4), vec![1.0, -1.0, 0.5, 0.0]).unwrap();
    let fam = RiskFamily::quadratic("q", ind.clone(), q, HaarStrategy::Exact, 0).unwrap();
    let a = LayerStack::random_gaussian(&ind.dims(), false, &mut seeded_rng(1));
    let r = check_grad_identity(&fam, &a, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass);
    assert!(r.residuals["augmented_vs_projected"] <= 1e-15);
}

#[test]
fn e_invariance_with_exact_and_sampled_quadrature() {
    let (model, fam) = family(
        Architecture::new(ExperimentKind::MnistTranslation, Scale::Toy),
        8,
        3,
    );
    let a = model.init_equivariant(4).unwrap();
    let none = check_e_invariance(&fam, &a, 0, 1e-3, &tol()).unwrap();
    assert_eq!(none.status, CheckStatus::Pass);
    assert_eq!(none.residuals["final_dist_from_init"], 0.0);
    let exact = check_e_invariance(&fam, &a, 30, 1e-2, &tol()).unwrap();
    assert_eq!(exact.status, CheckStatus::Pass, "{exact:?}");
    assert!(exact.residuals["final_dist_from_init"] > 0.0);

    let arch = Architecture::new(ExperimentKind::MnistTranslation, Scale::Toy);
    let data = Arc::new(arch.synthetic_data(3).unwrap().take(8));
    let sampled = HaarStrategy::Sampled {
        samples: 2,
        seed: 5,
    };
    let fam = RiskFamily::from_model("net", &model, data, sampled, 3);
    let r = check_e_invariance(&fam, &a, 10, 1e-2, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Measured);
}

#[test]
fn hessian_identities_on_quadratics() {
    let ind = perm_ind(3);
    let n = ind.num_params();
    // a hand-built non-invariant matrix: a ramp plus its transpose
    let m = Matrix::from_fn(n, n, |r, c| (r + 2 * c) as f64 / n as f64).symmetrized();
    let q = QuadraticRisk::new(&ind.dims(), m, vec![0.0; n]).unwrap();
    let fam = RiskFamily::quadratic("ramp", ind.clone(), q, HaarStrategy::Exact, 0).unwrap();
    let a = fam
        .projector
        .project(&LayerStack::random_gaussian(
            &ind.dims(),
            false,
            &mut seeded_rng(2),
        ))
        .unwrap();
    let r = check_hessian_identities(&fam, &a, tol().quadratic_hessian, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");

    let ind = trivial_ind();
    let q = QuadraticRisk::new(&ind.dims(), Matrix::identity(4).scaled(2.0), vec![0.0; 4]).unwrap();
    let fam = RiskFamily::quadratic("id", ind.clone(), q, HaarStrategy::Exact, 0).unwrap();
    let a = LayerStack::random_gaussian(&ind.dims(), false, &mut seeded_rng(3));
    let r = check_hessian_identities(&fam, &a, tol().quadratic_hessian, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    assert_eq!(r.residuals["dim_e"], 4.0);
}

#[test]
fn hessian_identities_on_a_toy_network() {
    let (model, fam) = family(
        Architecture::new(ExperimentKind::ShapeSegmentation, Scale::Toy),
        8,
        4,
    );
    let a = model.init_equivariant(5).unwrap();
    let r = check_hessian_identities(&fam, &a, tol().hessian_identity, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
}

#[test]
fn counterexample_values_for_five_nodes() {
    let r = counterexample(5, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    assert!((r.residuals["u_min_eig"] + 1.0).abs() <= 1e-10);
    assert!((r.residuals["projected_u_min_eig"] - 1.0).abs() <= 1e-10);
    assert!((r.residuals["v_on_e_perp_max_eig"] + 1.0).abs() <= 1e-10);
    assert!((r.residuals["projected_v_on_e_eig"] - 1.0).abs() <= 1e-10);
    assert!(counterexample(2, &tol()).is_err());
}

#[test]
fn spectrum_recovers_planted_negative_curvature() {
    let ind = perm_ind(3);
    let fam = RiskFamily::quadratic(
        "split",
        ind.clone(),
        split_quadratic(&ind, 2.0, -0.5),
        HaarStrategy::Exact,
        0,
    )
    .unwrap();
    let a = LayerStack::zeros(&ind.dims());
    let (report, spectrum) = stability_spectrum(&fam, &a, &tol()).unwrap();
    assert_eq!(report.status, CheckStatus::Measured);
    let (_, perp) = subspace_bases(&ind).unwrap();
    assert_eq!(spectrum.eigenvalues.len(), perp.len());
    assert!(
        spectrum.eigenvalues.iter().all(|l| (l + 0.5).abs() <= 1e-4),
        "{spectrum:?}"
    );
    assert_eq!(report.residuals["negative_eigenvalues"], perp.len() as f64);
    assert_eq!(spectrum.stationarity, 0.0);
}

#[test]
fn spectrum_for_trivial_group_is_empty() {
    let ind = trivial_ind();
    let fam = RiskFamily::quadratic(
        "t",
        ind.clone(),
        split_quadratic(&ind, 1.0, 1.0),
        HaarStrategy::Exact,
        0,
    )
    .unwrap();
    let a = LayerStack::random_gaussian(&ind.dims(), false, &mut seeded_rng(1));
    let (_, spectrum) = stability_spectrum(&fam, &a, &tol()).unwrap();
    assert!(spectrum.eigenvalues.is_empty());
}

fn unit_perp(fam: &RiskFamily, seed: u64) -> LayerStack {
    let g = LayerStack::random_gaussian(&fam.dims(), false, &mut seeded_rng(seed));
    let y = fam.projector.project_perp(&g).unwrap();
    y.scaled(1.0 / y.norm())
}

#[test]
fn decoupling_is_exact_for_quadratics() {
    let ind = perm_ind(3);
    let n = ind.num_params();
    let mut m = Matrix::from_fn(n, n, |r, c| ((r * n + c) as f64).cos());
    m = m.symmetrized();
    let q = QuadraticRisk::new(&ind.dims(), m, vec![0.3; n]).unwrap();
    let fam = RiskFamily::quadratic("q", ind.clone(), q, HaarStrategy::Exact, 0).unwrap();
    let x = fam
        .projector
        .project(&LayerStack::random_gaussian(
            &ind.dims(),
            false,
            &mut seeded_rng(2),
        ))
        .unwrap();
    let r = check_decoupling(&fam, &x, &unit_perp(&fam, 3), &[1e-1, 1e-2, 1e-3], &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    assert!(r.residuals.contains_key("deviation_over_rounding_floor"));
    assert!(check_decoupling(&fam, &x, &unit_perp(&fam, 3), &[1e-2], &tol()).is_err());
}

#[test]
fn decoupling_is_second_order_on_a_toy_network() {
    let (model, fam) = family(
        Architecture::new(ExperimentKind::ShapeSegmentation, Scale::Toy),
        8,
        6,
    );
    let x = model.init_equivariant(7).unwrap();
    let r = check_decoupling(&fam, &x, &unit_perp(&fam, 8), &[1e-1, 1e-2, 1e-3], &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    assert!(r.residuals["order"] >= 1.9);
}

#[test]
fn feature_average_gap() {
    let arch = Architecture::new(ExperimentKind::ShapeSegmentation, Scale::Toy);
    let model = arch.model(None).unwrap();
    let data = arch.synthetic_data(1).unwrap();
    let a = LayerStack::random_gaussian(model.dims(), true, &mut seeded_rng(2));
    let r = check_feature_average_identity(&model, &data, &a, 2).unwrap();
    assert_eq!(r.status, CheckStatus::Measured);
    assert!(r.residuals["gap_equivariant"] <= 1e-10);

    let g = FiniteGroup::Trivial;
    let ind = InducedRep::new(vec![
        Representation::trivial(g.clone(), 9),
        Representation::trivial(g, 1),
    ])
    .unwrap();
    let mut arch = Architecture::new(ExperimentKind::GraphConnectivity, Scale::Toy);
    arch.n = 3;
    let graph = arch.synthetic_data(1).unwrap();
    let mlp =
        equidyn_core::MlpSpec::new(ind.dims(), vec![equidyn_core::Nonlinearity::Sigmoid], 0.0)
            .unwrap();
    let trivial = Model::new(
        mlp,
        ind.clone(),
        equidyn_core::LossSpec::BinaryCrossEntropy,
        None,
    )
    .unwrap();
    let a = LayerStack::random_gaussian(&ind.dims(), true, &mut seeded_rng(3));
    let r = check_feature_average_identity(&trivial, &graph, &a, 3).unwrap();
    assert_eq!(r.residuals["gap_random"], 0.0);
}

#[test]
fn planted_minimum_on_a_larger_symmetry() {
    let ind = perm_ind(4);
    let proj = Projector::orbits(&ind).unwrap();
    let a_star = proj
        .project(&LayerStack::random_gaussian(
            &ind.dims(),
            false,
            &mut seeded_rng(4),
        ))
        .unwrap();
    let (fam, planted) = planted_quadratic(ind, &a_star, 0.2, 4).unwrap();
    let r = check_planted_minimum(&fam, &a_star, planted, &tol()).unwrap();
    assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
    assert!(r.residuals["augmented_min_eig"] >= planted - 1e-4);
}
