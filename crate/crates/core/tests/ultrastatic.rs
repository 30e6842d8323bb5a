use cvp_mass::geometry::V3;
use cvp_mass::kernel::RadialKernel;
use cvp_mass::quadrature::QuadratureSpec;
use cvp_mass::ultrastatic::{
    a1_closed_form, a1_ultrastatic, axisymmetric_sphere, brown_york_flux, volume_condition_divergence, PolynomialMetric, UltrastaticModel,
};
use cvp_mass::Error;
use nalgebra::Matrix3;
use proptest::prelude::*;
use std::f64::consts::PI;

fn k() -> RadialKernel {
    RadialKernel::smooth_bump(1.0)
}

#[test]
fn constant_metric_has_no_a1() {
    let spec = QuadratureSpec::default();
    let c = Matrix3::new(0.01, 0.004, 0.0, 0.004, -0.02, 0.0, 0.0, 0.0, 0.005);
    let model = UltrastaticModel::new(PolynomialMetric::constant(c, 8.0, 4.0).unwrap());
    let x = V3::new(1.0, -0.5, 2.0);
    assert_eq!(a1_closed_form(&model.metric, &x, &k()).unwrap(), V3::zeros());
    let a = a1_ultrastatic(&model, &x, &k(), &spec).unwrap();
    assert!(V3::from(a.computed).norm() <= 10.0 * a.error_estimate + 1e-12, "{a:?}");
}

#[test]
fn conformal_trace_formula() {
    let model = UltrastaticModel::new(PolynomialMetric::conformal_quadratic(0.01, 8.0, 4.0).unwrap());
    let c = volume_condition_divergence(&model, &V3::new(2.0, 1.0, 0.0), &k(), &QuadratureSpec::default()).unwrap();
    assert!(c.closed_form > 0.0);
    assert!(c.within(0.05), "{c:?}");
}

#[test]
fn pure_trace_linear_a1_closed_form() {
    let model = UltrastaticModel::new(PolynomialMetric::pure_trace_linear(V3::new(0.01, 0.005, -0.003), 8.0, 4.0).unwrap());
    let a = a1_ultrastatic(&model, &V3::new(1.0, 1.0, 1.0), &k(), &QuadratureSpec::default()).unwrap();
    assert!(a.relative_deviation() < 0.05, "{a:?}");
}

#[test]
fn points_outside_the_polynomial_reach_are_rejected() {
    let model = UltrastaticModel::new(PolynomialMetric::traceless_quadratic(0.01, 4.0, 4.0).unwrap());
    let r = volume_condition_divergence(&model, &V3::new(3.5, 0.0, 0.0), &k(), &QuadratureSpec::default());
    assert!(r.is_err());
}

#[test]
fn flux_identity_requires_boundary_adapted_metric() {
    let model = UltrastaticModel::new(PolynomialMetric::outer_quadratic(0.01, 30.0, 4.0).unwrap());
    let r = brown_york_flux(&model, &axisymmetric_sphere(20.0, 4), &k(), &QuadratureSpec::default());
    assert!(matches!(r, Err(Error::ConstraintViolated(_))), "{r:?}");
}

#[test]
fn axisymmetric_sphere_area() {
    let sq = axisymmetric_sphere(3.0, 8);
    let area: f64 = sq.nodes.iter().map(|n| n.weight).sum();
    assert!((area - 36.0 * PI).abs() < 1e-10);
    assert!((sq.total_area - 36.0 * PI).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn polynomial_derivatives_match_differences(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
        let m = PolynomialMetric::traceless_quadratic(0.02, 8.0, 4.0).unwrap();
        let p = V3::new(x, y, z);
        let g = m.grad(&p);
        let h = 1e-5;
        for d in 0..3 {
            let e = V3::ith(d, h);
            let fd = (m.poly(&(p + e)) - m.poly(&(p - e))) / (2.0 * h);
            prop_assert!((fd - g[d]).amax() < 1e-8);
        }
        // The traceless family stays traceless.
        prop_assert!(m.poly(&p).trace().abs() < 1e-15);
    }
}
