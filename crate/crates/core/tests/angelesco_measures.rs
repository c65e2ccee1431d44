use mop_trees::angelesco::AngelescoSystem;
use mop_trees::MultiIndex;
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn rho_o_with_point_mass_has_unit_mass() {
    let a = AngelescoSystem::ang_u();
    let rho = a.rho_o((2.0, -1.0)).unwrap();
    assert_eq!(rho.point_masses.len(), 1);
    let (e, m) = rho.point_masses[0];
    assert!(e < -2.0 && m > 0.0);
    assert!((a.total_mass(&rho).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn green_agrees_with_deep_truncation() {
    let a = AngelescoSystem::ang_u();
    let (g, r) = a.green((1.0, 0.0), 3, 1, Complex64::new(5.0, 0.0), 12).unwrap();
    assert!((g - r).norm() <= 1e-6 * g.norm());
}

#[test]
fn l4_holds_for_several_indices() {
    let a = AngelescoSystem::ang_u();
    for (n1, n2) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
        for r in a.lemma_l4(MultiIndex::new(n1, n2), 0.2).unwrap() {
            assert!(r.residual <= 1e-8 * r.nu_mass.max(1.0), "{r:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn rho_o_mass_and_mean(k in -1.5f64..2.5) {
        let a = AngelescoSystem::ang_u();
        let kappa = (k, 1.0 - k);
        let rho = a.rho_o(kappa).unwrap();
        prop_assert!((a.total_mass(&rho).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reference_density_is_xi_independent(x in prop_oneof![-1.99f64..-1.01, 1.01f64..1.99], xi in -0.99f64..0.99) {
        let a = AngelescoSystem::ang_u();
        let n = MultiIndex::new(2, 1);
        let w0 = a.reference_density(n, x).unwrap();
        let w1 = a.reference_density_via_xi(n, xi, x).unwrap();
        prop_assert!((w0 - w1).abs() <= 1e-9 * w0.max(1.0));
    }

    #[test]
    fn green_is_herglotz(re in -3.0f64..3.0, im in 0.01f64..3.0) {
        let a = AngelescoSystem::ang_u();
        let (g, _) = a.green((0.5, 0.5), 0, 0, Complex64::new(re, im), 2).unwrap();
        prop_assert!(g.im > 0.0);
    }
}
