use equidyn_core::group::{seeded_rng, verify_representation, LinearAction};
use equidyn_core::{FiniteGroup, GroupElement, Representation, Result};
use rand::Rng;

fn chi_square(counts: &[usize], draws: usize) -> f64 {
    let expected = draws as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

fn index_of(elements: &[GroupElement], g: &GroupElement) -> usize {
    elements
        .iter()
        .position(|e| e == g)
        .expect("sample lies in the group")
}

#[test]
fn orders_match_closed_forms() {
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
    assert_eq!(FiniteGroup::Symmetric(5).order(), 120);
    assert_eq!(FiniteGroup::Trivial.order(), 1);
}

#[test]
fn trivial_group_samples_identity() {
    let g = FiniteGroup::Trivial;
    let mut rng = seeded_rng(0);
    for _ in 0..10 {
        assert_eq!(g.sample_haar(&mut rng), g.identity());
    }
}

#[test]
fn haar_sampling_of_c4_is_uniform() {
    let g = FiniteGroup::CyclicRotation;
    let elements = g.enumerate_elements().unwrap();
    let mut counts = vec![0; elements.len()];
    let mut rng = seeded_rng(11);
    let draws = 100_000;
    for _ in 0..draws {
        counts[index_of(&elements, &g.sample_haar(&mut rng))] += 1;
    }
    for &c in &counts {
        assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01);
    }
    // 99.9% quantile of chi-square with 3 degrees of freedom
    assert!(chi_square(&counts, draws) < 16.27);
}

#[test]
fn haar_sampling_of_s3_is_uniform() {
    let g = FiniteGroup::Symmetric(3);
    let elements = g.enumerate_elements().unwrap();
    let mut counts = vec![0; elements.len()];
    let mut rng = seeded_rng(12);
    let draws = 60_000;
    for _ in 0..draws {
        counts[index_of(&elements, &g.sample_haar(&mut rng))] += 1;
    }
    for &c in &counts {
        assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
    }
    // 99.9% quantile of chi-square with 5 degrees of freedom
    assert!(chi_square(&counts, draws) < 20.52);
}

#[test]
fn actions_on_small_examples() {
    let swap = GroupElement::Perm(vec![1, 0, 2]);
    assert_eq!(
        Representation::perm_vector(3)
            .apply(&swap, &[1.0, 2.0, 3.0])
            .unwrap(),
        vec![2.0, 1.0, 3.0]
    );
    let t = Representation::translation_image(2);
    assert_eq!(
        t.apply(&GroupElement::Shift(1, 0), &[1.0, 2.0, 3.0, 4.0])
            .unwrap(),
        vec![3.0, 4.0, 1.0, 2.0]
    );
    let r = Representation::rotation_image(3);
    let x: Vec<f64> = (0..9).map(f64::from).collect();
    assert_eq!(r.apply(&GroupElement::Rotation(0), &x).unwrap(), x);
}

#[test]
fn translation_reads_from_shifted_pixel() {
    let n = 5;
    let t = Representation::translation_image(n);
    let x: Vec<f64> = (0..n * n).map(|v| v as f64).collect();
    for (k, l) in [(1, 2), (4, 4), (0, 3)] {
        let y = t.apply(&GroupElement::Shift(k, l), &x).unwrap();
        for i in 0..n {
            for j in 0..n {
                let src = ((i + n - k) % n) * n + (j + n - l) % n;
                assert_eq!(y[i * n + j], x[src]);
            }
        }
    }
}

#[test]
fn permutation_matrices() {
    let rep = Representation::perm_vector(2);
    let id = rep.matrix(&GroupElement::Perm(vec![0, 1])).unwrap();
    assert_eq!(id.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    let swap = rep.matrix(&GroupElement::Perm(vec![1, 0])).unwrap();
    assert_eq!(swap.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn matrix_agrees_with_apply() {
    let mut rng = seeded_rng(3);
    let cases = [
        (Representation::perm_tensor(4, 2), FiniteGroup::Symmetric(4)),
        (
            Representation::translation_image(4).channelwise(2),
            FiniteGroup::TranslationGrid(4),
        ),
        (
            Representation::rotation_image(5),
            FiniteGroup::CyclicRotation,
        ),
    ];
    for (rep, group) in cases {
        let g = group.sample_haar(&mut rng);
        let m = rep.matrix(&g).unwrap();
        for _ in 0..100 {
            let v: Vec<f64> = (0..rep.dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let lhs = m.matvec(&v);
            let rhs = rep.apply(&g, &v).unwrap();
            let err = lhs
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12);
        }
    }
}

#[test]
fn perm_tensor_is_a_unitary_representation() {
    let rep = Representation::perm_tensor(4, 2);
    let report =
        verify_representation(&FiniteGroup::Symmetric(4), &rep, 0, &mut seeded_rng(1)).unwrap();
    assert!(report.exhaustive);
    assert_eq!(report.elements_checked, 24);
    assert!(report.homomorphism_residual <= 1e-12);
    assert!(report.unitarity_residual <= 1e-12);
}

#[test]
fn trivial_rep_has_zero_residuals() {
    let rep = Representation::trivial(FiniteGroup::CyclicRotation, 3);
    let report =
        verify_representation(&FiniteGroup::CyclicRotation, &rep, 0, &mut seeded_rng(1)).unwrap();
    assert_eq!(report.worst(), 0.0);
}

/// The rotation action with the sign of its first output flipped.
struct SignFlipped(Representation);

impl LinearAction for SignFlipped {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn act(&self, g: &GroupElement, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.0.apply(g, v)?;
        if *g != GroupElement::Rotation(0) {
            out[0] = -out[0];
        }
        Ok(out)
    }
}

#[test]
fn corrupted_action_is_reported() {
    let bad = SignFlipped(Representation::rotation_image(3));
    let report =
        verify_representation(&FiniteGroup::CyclicRotation, &bad, 0, &mut seeded_rng(2)).unwrap();
    assert!(report.worst() > 0.1, "{report:?}");
}

#[test]
fn composition_and_inverse_follow_group_law() {
    let g = FiniteGroup::Symmetric(4);
    let mut rng = seeded_rng(4);
    for _ in 0..50 {
        let a = g.sample_haar(&mut rng);
        let inv = g.inverse(&a).unwrap();
        assert_eq!(g.compose(&a, &inv).unwrap(), g.identity());
    }
}
