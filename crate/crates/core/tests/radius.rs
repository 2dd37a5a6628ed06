use bergman_lab::potential::Potential;
use bergman_lab::quad::halton;
use bergman_lab::radius::*;
use bergman_lab::weights::Weight;
use proptest::prelude::*;

/// V = 16|z|²: r²·16(|x| + r)² = 1 gives ρ = (√(|x|² + 1) − |x|)/2.
fn quartic_rho(x: &[f64]) -> f64 {
    let t = x[0].hypot(x[1]);
    0.5 * ((t * t + 1.0).sqrt() - t)
}

fn quartic() -> Potential {
    Potential::laplacian(&Weight::radial_power(1, 2.0))
}

fn box_points(count: usize, half: f64) -> Vec<Vec<f64>> {
    (1..=count).map(|i| vec![half * (2.0 * halton(i, 2) - 1.0), half * (2.0 * halton(i, 3) - 1.0)]).collect()
}

#[test]
fn quartic_closed_forms() {
    let f = RadiusField::from_potential(quartic());
    assert!((f.eval(&[0.0, 0.0]).unwrap() - 0.5).abs() <= 1e-8);
    assert!((f.eval(&[1.0, 0.0]).unwrap() - (2f64.sqrt() - 1.0) / 2.0).abs() <= 1e-8);
    for p in box_points(50, 3.0) {
        assert!((f.eval(&p).unwrap() - quartic_rho(&p)).abs() <= 1e-9 * quartic_rho(&p));
    }
}

#[test]
fn potential_sandwich_on_hundred_points() {
    let a = potential_sandwich_audit(&quartic(), Bisection::default(), &box_points(100, 2.5), 4.0).unwrap();
    assert_eq!(a.points, 100);
    assert_eq!(a.violations, 0);
    assert!(a.max_upper_ratio <= 1.0);
}

#[test]
fn sandwich_flags_a_too_small_doubling_constant() {
    // sup·ρ² is 1 up to bisection error, so 4D̂ must be at least ~1.
    let a = potential_sandwich_audit(&quartic(), Bisection::default(), &box_points(10, 2.0), 0.2).unwrap();
    assert_eq!(a.violations, 10);
}

#[test]
fn axiom_constant_matches_closed_form() {
    let f = RadiusField::from_potential(quartic());
    let domain = [(-2.0, 2.0), (-2.0, 2.0)];
    let pairs = sample_pairs(&f, &domain, 400, 1.0).unwrap();
    let got = radius_axiom_constant(&f, &pairs, 1.0).unwrap();
    let oracle = pairs
        .iter()
        .map(|(x, y)| {
            let (a, b) = (quartic_rho(x), quartic_rho(y));
            (a / b).max(b / a)
        })
        .fold(1.0, f64::max);
    assert!((got.value - oracle).abs() <= 1e-8 * oracle);
    assert!(got.value < 4.0);
}

#[test]
fn axiom_constant_is_scale_invariant_and_rejects_far_pairs() {
    let f = RadiusField::from_potential(quartic());
    let domain = [(-1.0, 1.0), (-1.0, 1.0)];
    let pairs = sample_pairs(&f, &domain, 100, 1.0).unwrap();
    let base = radius_axiom_constant(&f, &pairs, 1.0).unwrap().value;
    // 2ρ is a radius function on balls of its own radius, so pairs within ρ also lie within 2ρ.
    let doubled = f.clone().scaled(2.0);
    let c2 = radius_axiom_constant(&doubled, &pairs, 2.0).unwrap().value;
    assert!((c2 - base).abs() <= 1e-12 * base);
    let far = vec![(vec![0.0, 0.0], vec![0.6, 0.0])];
    assert!(radius_axiom_constant(&f, &far, 1.0).is_err());
}

#[test]
fn max_of_two_radii() {
    let rho = RadiusField::from_potential(quartic());
    let k = RadiusField::constant(0.3, 2);
    let m = max_radius_ref(&rho, &k);
    for p in box_points(40, 2.0) {
        assert_eq!(m.eval(&p).unwrap(), rho.eval(&p).unwrap().max(0.3));
    }
    assert!(m.provenance().starts_with("max-of-two"));
}

#[test]
fn covering_of_unit_radius_square() {
    let c = build_covering(&RadiusField::constant(1.0, 2), &[(-2.0, 2.0), (-2.0, 2.0)], 1.0).unwrap();
    assert_eq!(c.uncovered, 0);
    assert!(c.len() <= 25, "{}", c.len());
    assert!(c.multiplicity <= 25);
    for (i, a) in c.centers.iter().enumerate() {
        for b in &c.centers[i + 1..] {
            assert!(euclid(a, b) >= 1.0 - 1e-12);
        }
    }
}

#[test]
fn covering_of_a_point() {
    let c = build_covering(&RadiusField::constant(1.0, 2), &[(0.5, 0.5), (0.5, 0.5)], 1.0).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.centers[0], vec![0.5, 0.5]);
    assert_eq!(c.uncovered, 0);
}

#[test]
fn covering_with_variable_radius() {
    let f = RadiusField::from_potential(quartic());
    let c = build_covering(&f, &[(-1.5, 1.5), (-1.5, 1.5)], 2.0).unwrap();
    assert_eq!(c.uncovered, 0);
    assert!(c.multiplicity >= 1);
}

#[test]
fn potential_errors() {
    let zero = Potential::constant(0.0, 2);
    assert!(matches!(
        rho_from_potential(&zero, &[0.0, 0.0], Bisection::default()),
        Err(bergman_lab::Error::PotentialTooSmall(_))
    ));
    let huge = Potential::constant(1e14, 2);
    assert!(matches!(
        rho_from_potential(&huge, &[0.0, 0.0], Bisection::default()),
        Err(bergman_lab::Error::PotentialTooSingular(_))
    ));
}

#[test]
fn admissible_bound() {
    assert_eq!(admissible_radius_bound(1.0, 4.0), 1.0);
    assert_eq!(admissible_radius_bound(0.1, 4.0), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// ρ(y) ≥ ρ(x) − |x − y| for the quartic potential (the sup only grows outward).
    #[test]
    fn radius_is_one_lipschitz(x in -3.0f64..3.0, y in -3.0f64..3.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = RadiusField::from_potential(quartic());
        let (rp, rq) = (f.eval(&[x, y]).unwrap(), f.eval(&[a, b]).unwrap());
        prop_assert!((rp - rq).abs() <= euclid(&[x, y], &[a, b]) + 1e-9);
    }

    #[test]
    fn constant_potential_radius(v in 0.01f64..100.0) {
        let r = rho_from_potential(&Potential::constant(v, 2), &[0.3, -0.2], Bisection::default()).unwrap();
        prop_assert!((r - 1.0 / v.sqrt()).abs() <= 1e-9 / v.sqrt());
    }
}
