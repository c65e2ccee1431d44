use mop_trees::periodic_surface::{ray_limit_estimate, SurfaceParams};
use mop_trees::systems::ang_u;
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn ray_limit_cuts_near_the_supports() {
    let r = ray_limit_estimate(&ang_u(), 0.5, 12).unwrap();
    let [a1, a2, b1, b2] = r.estimate;
    assert_eq!(a1, a2);
    assert_eq!(b1, -b2);
    let s = SurfaceParams::from_params(a1, a2, b1, b2).unwrap();
    assert!(s.cuts[0].0 > -2.05 && s.cuts[0].1 < -0.95);
    assert!(s.cuts[1].0 > 0.95 && s.cuts[1].1 < 2.05);
}

#[test]
fn dos_profile_length() {
    let s = SurfaceParams::from_params(0.25, 0.25, -1.0, 1.0).unwrap();
    let prof = s.dos_profile(1, 500).unwrap();
    assert_eq!(prof.len(), 500);
    assert!(prof.iter().all(|&(_, d)| d > 0.0));
    assert!(prof.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(s.dos_profile(1, 0).is_err());
}

fn params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.005f64..0.06, 0.005f64..0.06, -1.5f64..-0.5, 0.5f64..1.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn principal_branch_invariants((a1, a2, b1, b2) in params(), re in -4.0f64..4.0, im in 0.001f64..4.0) {
        let s = SurfaceParams::from_params(a1, a2, b1, b2).unwrap();
        let z = Complex64::new(re, im);
        let chi = s.chi0(z).unwrap();
        prop_assert!((s.zmap(chi) - z).norm() <= 1e-12 * (1.0 + z.norm()));
        prop_assert!((s.chi0(z.conj()).unwrap() - chi.conj()).norm() <= 1e-12 * (1.0 + chi.norm()));
        prop_assert!(s.green_o(1, z).unwrap().im > 0.0);
        prop_assert!(s.unit_form(z).unwrap() < 1.0);
        for root in s.all_roots(z) {
            prop_assert!((s.zmap(root) - z).norm() <= 1e-10 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn unit_identity_on_cuts((a1, a2, b1, b2) in params(), t in 0.01f64..0.99, which in 0usize..2) {
        let s = SurfaceParams::from_params(a1, a2, b1, b2).unwrap();
        let (p, q) = s.cuts[which];
        let x = p + (q - p) * t;
        prop_assert!(s.unit_identity_residual(x).unwrap() <= 1e-9);
        prop_assert!(s.dos(1, x).unwrap() > 0.0);
    }
}
