use cvp_mass::alignment::{alignment_term, divergence_identity_defect, flux_mass, solve_alignment};
use cvp_mass::geometry::{sphere_quadrature, Measure, Region, V3};
use cvp_mass::jets::Jet;
use cvp_mass::kernel::RadialKernel;
use cvp_mass::quadrature::QuadratureSpec;
use cvp_mass::Error;
use proptest::prelude::*;
use std::sync::Arc;

fn k() -> RadialKernel {
    RadialKernel::smooth_bump(1.0)
}

fn shift(c: V3) -> Jet {
    Jet::inner(Arc::new(move |_| c), Arc::new(|_| 0.0))
}

#[test]
fn zero_jet_has_zero_alignment_terms() {
    let spec = QuadratureSpec::default();
    for order in 0..2 {
        let (a, e) = alignment_term(&Jet::Zero, order, &V3::new(1.0, 2.0, 3.0), &k(), &spec).unwrap();
        assert_eq!(a, V3::zeros());
        assert_eq!(e, 0.0);
    }
    let sq = sphere_quadrature(&V3::zeros(), 5.0, 6).unwrap();
    assert_eq!(flux_mass(&Jet::Zero, &sq, &k(), &spec).unwrap().total, 0.0);
}

#[test]
fn order_two_is_unsupported() {
    let r = alignment_term(&shift(V3::x()), 2, &V3::zeros(), &k(), &QuadratureSpec::default());
    assert_eq!(r.unwrap_err(), Error::UnsupportedOrder(2));
}

#[test]
fn constant_scalar_jet_has_no_a0() {
    let j = Jet::generic(Arc::new(|_| 0.7), Arc::new(|_| V3::zeros()));
    let (a, e) = alignment_term(&j, 0, &V3::new(0.5, 0.0, 0.0), &k(), &QuadratureSpec::default()).unwrap();
    assert!(a.norm() <= 10.0 * e + 1e-15, "{a:?}");
}

#[test]
fn unbounded_alignment_domain_is_rejected() {
    let dom = Region::HalfSpace { normal: V3::z(), offset: 0.0 };
    let r = solve_alignment(&shift(V3::x()), &dom, &k(), &QuadratureSpec::default());
    assert!(matches!(r, Err(Error::ConfigInvalid(_))));
}

#[test]
fn divergence_identity_for_linear_inner_jet() {
    // A linear field has vanishing second derivatives, so the series is exact at order one.
    let j = Jet::inner(Arc::new(|x: &V3| V3::new(0.2 * x.y, 0.1 * x.z, -0.3 * x.x)), Arc::new(|_| 0.0));
    let d = divergence_identity_defect(&j, &V3::new(0.3, 0.1, -0.2), 1, &k(), &Measure::vacuum(), &QuadratureSpec::default()).unwrap();
    assert!(d.defect < 1e-9 * (1.0 + d.direct.abs()), "{d:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn constant_shift_a0_is_s_times_shift(cx in -1.0f64..1.0, cy in -1.0f64..1.0, cz in -1.0f64..1.0) {
        // Integrating ξ ξ̂·c φ'(r) by parts gives A⁽⁰⁾ = 𝔰 c; A⁽¹⁾ vanishes.
        let spec = QuadratureSpec::default();
        let c = V3::new(cx, cy, cz);
        let s = k().moments().unwrap().s;
        let (a0, e0) = alignment_term(&shift(c), 0, &V3::new(2.0, 0.0, 1.0), &k(), &spec).unwrap();
        prop_assert!((a0 - c * s).norm() <= 1e-8 * s + 10.0 * e0);
        let (a1, _) = alignment_term(&shift(c), 1, &V3::new(2.0, 0.0, 1.0), &k(), &spec).unwrap();
        prop_assert!(a1.norm() < 1e-10);
    }
}
