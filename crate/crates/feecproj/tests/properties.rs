//! Randomized invariants across modules.

use feecproj::chains::WeightedChain;
use feecproj::cli::parse_levels;
use feecproj::forms::{PiecewiseForm, PolyForm};
use feecproj::mesh::generate;
use feecproj::mollify::mollifier_nodes;
use feecproj::poly::{rat_int, Poly};
use feecproj::quadrature::simplex_rule;
use feecproj::spaces::{random_poly_form, ComplexSpec, FeComplex};
use feecproj::study::loglog_slope;
use num_traits::Zero;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_squared_vanishes(seed in any::<u64>(), n in 1usize..=3, deg in 0usize..=3) {
        let mut r = rng(seed);
        for k in 0..=n {
            let w = random_poly_form(n, k, deg, &mut r);
            prop_assert!(w.d().d().is_zero());
        }
    }

    #[test]
    fn leibniz_rule(seed in any::<u64>(), n in 2usize..=3, ka in 0usize..=1, kb in 0usize..=1) {
        let mut r = rng(seed);
        let a = random_poly_form(n, ka, 2, &mut r);
        let b = random_poly_form(n, kb, 2, &mut r);
        let lhs = a.wedge(&b).unwrap().d();
        let sign = if ka % 2 == 0 { rat_int(1) } else { rat_int(-1) };
        let rhs = a.d().wedge(&b).unwrap().add(&a.wedge(&b.d()).unwrap().scale(&sign)).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn wedge_is_graded_commutative(seed in any::<u64>(), ka in 0usize..=2, kb in 0usize..=1) {
        let mut r = rng(seed);
        let a = random_poly_form(3, ka, 1, &mut r);
        let b = random_poly_form(3, kb, 1, &mut r);
        let sign = if (ka * kb) % 2 == 0 { rat_int(1) } else { rat_int(-1) };
        prop_assert_eq!(a.wedge(&b).unwrap(), b.wedge(&a).unwrap().scale(&sign));
    }

    #[test]
    fn stokes_on_random_triangles(seed in any::<u64>(), pts in prop::array::uniform6(-2.0f64..2.0)) {
        let verts = vec![[pts[0], pts[1], 0.0], [pts[2], pts[3], 0.0], [pts[4], pts[5], 0.0]];
        let area = 0.5 * ((pts[2] - pts[0]) * (pts[5] - pts[1]) - (pts[4] - pts[0]) * (pts[3] - pts[1])).abs();
        prop_assume!(area > 1e-3);
        let c = WeightedChain::simplex(2, verts).unwrap();
        let w = random_poly_form(2, 1, 3, &mut rng(seed));
        let inner = c.integrate(&w.d());
        let outer = c.boundary().integrate(&w);
        prop_assert!((inner - outer).abs() <= 1e-10 * (1.0 + inner.abs()), "{} vs {}", inner, outer);
    }

    #[test]
    fn boundary_of_boundary_is_empty(pts in prop::array::uniform9(-1.0f64..1.0), w in 0.5f64..2.0) {
        let verts = vec![
            [pts[0], pts[1], pts[2]],
            [pts[3], pts[4], pts[5]],
            [pts[6], pts[7], pts[8]],
            [0.3, -0.2, 0.9],
        ];
        if let Ok(c) = WeightedChain::new(3, 3, vec![(w, verts)]) {
            prop_assert!(c.boundary().boundary().is_empty());
        }
    }

    #[test]
    fn simplex_rules_integrate_monomials(a in 0u32..=4, b in 0u32..=4) {
        let rule = simplex_rule(2, (a + b) as usize).unwrap();
        let got = rule.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
        let want = factorial(a) * factorial(b) / factorial(a + b + 2);
        prop_assert!((got - want).abs() < 1e-13, "{} vs {}", got, want);
    }

    #[test]
    fn interpolation_reproduces_fe_functions(seed in any::<u64>(), k in 0usize..=2) {
        let mesh = Arc::new(generate("unit_square", 1).unwrap());
        let complex = FeComplex::build(mesh, &ComplexSpec::parse("P1-minus", 2).unwrap()).unwrap();
        let space = &complex.spaces[k];
        let mut r = rng(seed);
        let coeffs: Vec<_> = (0..space.dim()).map(|_| rat_int(rand::Rng::gen_range(&mut r, -5..=5))).collect();
        prop_assert_eq!(space.interpolate_exact(&space.to_piecewise(&coeffs)), coeffs);
    }

    #[test]
    fn interpolation_commutes_with_d(seed in any::<u64>()) {
        let mesh = Arc::new(generate("unit_square", 1).unwrap());
        let complex = FeComplex::build(mesh.clone(), &ComplexSpec::parse("P1-minus", 2).unwrap()).unwrap();
        let w = PiecewiseForm::uniform(&random_poly_form(2, 0, 3, &mut rng(seed)), mesh.num_cells());
        let d0 = complex.derivative(0).unwrap();
        let iw = nalgebra::DVector::from_vec(complex.spaces[0].interpolate(&w));
        let idw = nalgebra::DVector::from_vec(complex.spaces[1].interpolate(&w.d()));
        prop_assert!((&d0 * iw - idw).amax() < 1e-10);
    }

    #[test]
    fn slope_recovers_exponents(p in 0.2f64..3.0, c in 0.1f64..10.0) {
        let x: Vec<f64> = (0..6).map(|j| 10f64.powf(-(j as f64) / 4.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
        prop_assert!((loglog_slope(&x, &y) - p).abs() < 1e-10);
    }

    #[test]
    fn level_ranges_are_inclusive(a in 0usize..5, len in 0usize..5) {
        let levels = parse_levels(&format!("{}..{}", a, a + len)).unwrap();
        prop_assert_eq!(levels.len(), len + 1);
        prop_assert_eq!(levels[0], a);
    }
}

#[test]
fn refinement_keeps_volume_and_euler_characteristic() {
    for level in 0..4 {
        let m = generate("unit_square", level).unwrap();
        assert!((m.total_volume() - 1.0).abs() < 1e-14);
        let chi = m.num_simplices(0) as i64 - m.num_simplices(1) as i64 + m.num_simplices(2) as i64;
        assert_eq!(chi, 1);
        assert_eq!(m.num_cells(), 2 * 4usize.pow(level as u32));
    }
    let cube = generate("unit_cube", 1).unwrap();
    let chi: i64 = (0..=3).map(|d| if d % 2 == 0 { 1 } else { -1 } * cube.num_simplices(d) as i64).sum();
    assert_eq!(chi, 1);
}

#[test]
fn mollifier_weights_are_a_probability_measure() {
    for (n, deg) in [(2, 8), (2, 20), (3, 8)] {
        let (nodes, _) = mollifier_nodes(n, deg).unwrap();
        let total: f64 = nodes.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-13, "n={n} degree={deg}: {total}");
        assert!(nodes.iter().all(|(y, w)| *w > 0.0 && y.iter().map(|v| v * v).sum::<f64>() < 1.0));
        // odd moments vanish, which is what makes constant 1-forms exact
        for i in 0..n {
            let m: f64 = nodes.iter().map(|(y, w)| w * y[i]).sum();
            assert!(m.abs() < 1e-14, "first moment {m}");
        }
    }
}

#[test]
fn scalar_forms_match_polynomials() {
    let x = Poly::var(2, 0);
    let u = PolyForm::scalar(&x * &x);
    assert_eq!(u.d().component(0b01), &x + &x);
    assert!(u.d().component(0b10).is_zero());
    assert!(Poly::zero(2).coeff(&[0, 0, 0]).is_zero());
}
