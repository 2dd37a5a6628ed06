use bergman_lab::forms::*;
use bergman_lab::kernel::build_kernel;
use bergman_lab::potential::Potential;
use bergman_lab::quad::halton;
use bergman_lab::radius::RadiusField;
use bergman_lab::weights::{Family, Profile, Weight};
use nalgebra::DMatrix;
use num_complex::Complex64 as C;

/// Smooth trial: Gaussian envelope with a linear tilt (plus a conjugate tilt
/// on later components).
fn trial(g: &FormGrid, i: usize, scale: f64) -> Vec<C> {
    let c = [(halton(i + 1, 2) - 0.5) * scale, (halton(i + 1, 3) - 0.5) * scale];
    let s = (0.6 + 0.3 * halton(i + 1, 5)) * scale;
    let b = C::new(halton(i + 1, 7) - 0.5, halton(i + 1, 11) - 0.5);
    g.sample_form(|x| {
        let z = C::new(x[0] - c[0], x[1] - c[1]);
        let env = (-z.norm_sqr() / (2.0 * s * s)).exp();
        (0..g.n).map(|j| env * (C::new(1.0, 0.0) + b * z / s + C::new(0.0, 0.3 * j as f64) * z.conj() / s)).collect()
    })
}

fn cross_deviation(w: &Weight, half_width: f64, h: f64, scale: f64, trials: usize) -> Vec<f64> {
    let g = FormGrid::new(w.n, half_width, h, StencilOrder::Second).unwrap();
    let a = assemble_mkh(w, &g).unwrap();
    (0..trials)
        .map(|i| {
            let u = trial(&g, i, scale);
            let (e1, e2) = (a.mkh_energy(&u), a.star_energy(&u));
            (e1 - e2).abs() / e2
        })
        .collect()
}

#[test]
fn mkh_cross_assembly_second_order() {
    for (w, half_width, h, scale) in [
        (Weight::fock(1), 4.0, 0.1, 1.0),
        (Weight::radial_power(1, 2.0), 1.5, 0.025, 0.4),
    ] {
        let coarse = cross_deviation(&w, half_width, h, scale, 10);
        let fine = cross_deviation(&w, half_width, h / 2.0, scale, 10);
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(*c <= 2.0 * h * h, "{c} > 2h² at h = {h}");
            let ratio = c / f;
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }
}

#[test]
fn mkh_cross_assembly_two_variables() {
    let w = Weight::fock(2);
    let dev = cross_deviation(&w, 1.25, 1.0 / 12.0, 0.35, 3);
    for d in dev {
        assert!(d <= 2.0 / 144.0, "{d}");
    }
}

#[test]
fn schrodinger_equivalence_fock() {
    let h: f64 = 0.1;
    let g = FormGrid::new(1, 4.0, h, StencilOrder::Second).unwrap();
    let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
    let trials: Vec<Vec<C>> = (0..4).map(|i| trial(&g, i, 0.5)).collect();
    let r = schrodinger_equivalence_audit(&a, &trials).unwrap();
    assert!(r.deviation <= 5.0 * h * h, "{}", r.deviation);
    assert!(r.trace_error <= 1e-12);
    assert!((r.v_min - 4.0).abs() < 1e-12);
}

#[test]
fn schrodinger_potential_vanishes_for_fock_in_two_variables() {
    let g = FormGrid::new(2, 1.25, 1.0 / 12.0, StencilOrder::Second).unwrap();
    let a = assemble_mkh(&Weight::fock(2), &g).unwrap();
    let r = schrodinger_equivalence_audit(&a, &[]).unwrap();
    assert_eq!(r.v_max_abs, 0.0);
    assert!(r.trace_error <= 1e-12);
}

#[test]
fn schrodinger_trace_identity_quartic() {
    let g = FormGrid::new(1, 1.5, 0.025, StencilOrder::Second).unwrap();
    let a = assemble_mkh(&Weight::radial_power(1, 2.0), &g).unwrap();
    let r = schrodinger_equivalence_audit(&a, &[trial(&g, 0, 0.2)]).unwrap();
    assert!(r.trace_error <= 1e-12);
    assert!(r.deviation <= 5.0 * 0.025 * 0.025, "{}", r.deviation);
}

#[test]
fn diamagnetic_inequality() {
    let g = FormGrid::new(1, 3.0, 0.05, StencilOrder::Second).unwrap();
    let a = |x: &[f64]| vec![-2.0 * x[1], 2.0 * x[0]];
    for k in 0..4 {
        let u = move |x: &[f64]| {
            let z = C::new(x[0] - 0.3, x[1] + 0.2);
            z.powu(k) * (-z.norm_sqr()).exp() * C::from_polar(1.0, x[0] * x[1])
        };
        assert_eq!(diamagnetic_audit(&g, a, u), 0);
    }
}

/// Dense Hermitian eigensolve of M^{-1/2} A M^{-1/2}, A assembled column by column.
fn dense_min_eigenvalue(a: &FormAssembly, mass: &[f64]) -> f64 {
    let n = a.len();
    let mut m = DMatrix::<C>::zeros(n, n);
    let mut e = vec![C::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C::new(1.0, 0.0);
        let col = a.apply_mkh(&e);
        e[j] = C::new(0.0, 0.0);
        for i in 0..n {
            m[(i, j)] = col[i] / (mass[i] * mass[j]).sqrt();
        }
    }
    let herm = (&m + m.adjoint()) * C::new(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn coercivity_matches_dense_oracle() {
    let g = FormGrid::new(1, 2.0, 0.125, StencilOrder::Second).unwrap();
    let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
    let mass = a.mass_kappa(&RadiusField::constant(1.0 / 2f64.sqrt(), 2)).unwrap();
    let dense = dense_min_eigenvalue(&a, &mass);
    let it = coercivity_rayleigh(&a, &mass).unwrap();
    // The lowest level is tightly clustered, so the iterate stops slightly above it.
    assert!(it.lambda >= dense - 1e-9 && it.lambda <= dense * (1.0 + 1e-3), "{} vs {dense}", it.lambda);
    assert!((0.95..=1.10).contains(&dense), "{dense}");
}

#[test]
fn coercivity_grows_when_the_box_shrinks() {
    let w = Weight::fock(1);
    let kappa = RadiusField::constant(1.0 / 2f64.sqrt(), 2);
    let lambda = |half_width: f64| {
        let g = FormGrid::new(1, half_width, 0.1, StencilOrder::Second).unwrap();
        let a = assemble_mkh(&w, &g).unwrap();
        coercivity_rayleigh(&a, &a.mass_kappa(&kappa).unwrap()).unwrap().lambda
    };
    let (small, large) = (lambda(2.0), lambda(4.0));
    assert!(small >= large - 1e-9, "{small} < {large}");
}

#[test]
fn fefferman_phong_constant_potentials() {
    let trials: Vec<(Vec<f64>, f64)> = [0.25, 0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&s| [(vec![0.0, 0.0], s), (vec![1.0, -0.5], s)])
        .collect();
    for v in [1.0, 4.0] {
        let fp = fefferman_phong_constant(
            &Potential::constant(v, 2),
            &RadiusField::constant(1.0 / f64::sqrt(v), 2),
            &trials,
        )
        .unwrap();
        assert!(fp.value <= 1.0 + 1e-9, "{}", fp.value);
    }
    let quartic = Potential::laplacian(&Weight::radial_power(1, 2.0));
    let fp = fefferman_phong_constant(&quartic, &RadiusField::from_potential(quartic.clone()), &trials).unwrap();
    assert!(fp.value.is_finite() && fp.value > 0.0);
}

#[test]
fn localization_identity() {
    let h = 0.1;
    let g = FormGrid::new(1, 4.0, h, StencilOrder::Second).unwrap();
    let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
    let u = trial(&g, 3, 1.0);
    let ramp = |x: &[f64]| {
        let r = x[0].hypot(x[1]);
        let (v, d) = smooth_ramp(r, 1.0, 2.0);
        let grad = if r > 0.0 { vec![d * x[0] / r, d * x[1] / r] } else { vec![0.0, 0.0] };
        (v, grad)
    };
    assert!(localization_identity_audit(&a, &u, ramp).unwrap() <= 2.0 * h * h);
    // η ≡ 1 is the weak form of the operator itself.
    assert!(localization_identity_audit(&a, &u, |_| (1.0, vec![0.0, 0.0])).unwrap() <= 1e-12);
    assert_eq!(localization_identity_audit(&a, &u, |_| (0.0, vec![0.0, 0.0])).unwrap(), 0.0);
}

#[test]
fn canonical_solution_of_zero_is_zero() {
    let g = FormGrid::new(1, 2.0, 0.1, StencilOrder::Fourth).unwrap();
    let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
    let cs = canonical_solution(&a, &vec![C::new(0.0, 0.0); a.len()], &[0.0, 0.0]).unwrap();
    assert!(cs.f.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn canonical_solution_solves_and_is_orthogonal() {
    let g = FormGrid::new(1, 4.0, 0.1, StencilOrder::Fourth).unwrap();
    let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
    let datum = g.sample_form(|x| vec![C::new((-(x[0] * x[0] + x[1] * x[1]) / 0.18).exp(), 0.0)]);
    let cs = canonical_solution(&a, &datum, &[0.0, 0.0]).unwrap();
    assert!(cs.orthogonality.iter().all(|&o| o <= 1e-5), "{:?}", cs.orthogonality);
    let df = a.dbar_function(&cs.f);
    let err = a.form_inner(&(0..df.len()).map(|i| df[i] - datum[i]).collect::<Vec<_>>(), &datum).norm();
    assert!(err <= 1e-6 * a.form_inner(&datum, &datum).norm(), "{err}");
}

#[test]
fn neumann_and_kernel_projections_agree() {
    let g = FormGrid::new(1, 5.0, 0.1, StencilOrder::Fourth).unwrap();
    let a = assemble_mkh(&Weight::fock(1), &g).unwrap();
    let model = build_kernel(&Weight::fock(1), 32).unwrap();
    let zbar = g.sample_function(|x| C::new(x[0], -x[1]) * (-2.0 * (x[0] * x[0] + x[1] * x[1])).exp());
    let bump = g.sample_function(|x| C::new((-(x[0] * x[0] + x[1] * x[1]) / 0.5).exp(), 0.0));
    for f in [zbar, bump] {
        let r = neumann_bergman_audit(&a, &model, &f).unwrap();
        assert!(r.deviation <= 1e-5, "{}", r.deviation);
    }
}

#[test]
fn decoupled_weight_assembles_in_two_variables() {
    let w = Weight::checked(2, Family::Decoupled { parts: vec![Profile::power(1.0, 1.0), Profile::power(1.0, 1.0)] })
        .unwrap();
    let g = FormGrid::new(2, 1.25, 1.0 / 12.0, StencilOrder::Second).unwrap();
    let a = assemble_mkh(&w, &g).unwrap();
    let f = assemble_mkh(&Weight::fock(2), &g).unwrap();
    let u = trial(&g, 1, 0.35);
    assert!((a.mkh_energy(&u) - f.mkh_energy(&u)).abs() <= 1e-12 * f.mkh_energy(&u));
    assert!((a.star_energy(&u) - f.star_energy(&u)).abs() <= 1e-12 * f.star_energy(&u));
}
