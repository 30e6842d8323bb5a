use cvp_mass::geometry::V3;
use cvp_mass::kernel::RadialKernel;
use cvp_mass::quadrature::QuadratureSpec;
use cvp_mass::schwarzschild::{a1_pointwise, direct_mass, p_of_r, sample_pairs, SchwarzschildModel};
use cvp_mass::Error;
use std::f64::consts::PI;

fn k() -> RadialKernel {
    RadialKernel::smooth_bump(1.0)
}

#[test]
fn massless_model_gives_exact_zeros() {
    let spec = QuadratureSpec::default();
    let m = SchwarzschildModel::new(0.0);
    let rep = direct_mass(&m, 10.0, &k(), &spec).unwrap();
    assert_eq!(rep.value, 0.0);
    assert_eq!(p_of_r(&m, 10.0, &k(), &spec).unwrap(), (0.0, 0.0));
    let (a1, _) = a1_pointwise(&m, &V3::new(0.0, 0.0, 12.0), &k(), &spec).unwrap();
    assert_eq!(a1, V3::zeros());
}

#[test]
fn radius_below_ten_ranges_is_rejected() {
    let r = direct_mass(&SchwarzschildModel::new(1.0), 5.0, &k(), &QuadratureSpec::default());
    assert!(matches!(r, Err(Error::ConfigInvalid(_))));
}

#[test]
fn direct_mass_is_linear_in_mass_and_near_four_pi_ninths() {
    let spec = QuadratureSpec::default();
    let a = direct_mass(&SchwarzschildModel::new(1.0), 10.0, &k(), &spec).unwrap();
    let b = direct_mass(&SchwarzschildModel::new(2.5), 10.0, &k(), &spec).unwrap();
    assert!((b.value - 2.5 * a.value).abs() <= 1e-12 * b.value.abs());
    let n = a.normalized.unwrap();
    assert!((n / (4.0 * PI / 9.0) - 1.0).abs() < 0.05, "{n}");
    assert!((b.normalized.unwrap() - n).abs() <= 1e-12 * n);
}

#[test]
fn a1_is_radial() {
    let (a1, e) = a1_pointwise(&SchwarzschildModel::new(1.0), &V3::new(6.0, -8.0, 0.0), &k(), &QuadratureSpec::default()).unwrap();
    let radial = V3::new(0.6, -0.8, 0.0);
    let tangential = a1 - radial * a1.dot(&radial);
    assert!(tangential.norm() <= 10.0 * e + 1e-12 * a1.norm(), "{a1:?}");
    assert!(a1.dot(&radial) > 0.0);
}

#[test]
fn sample_pairs_respect_bounds_and_seed() {
    let a = sample_pairs(40, 10.0, 20.0, &k(), 3);
    assert_eq!(a, sample_pairs(40, 10.0, 20.0, &k(), 3));
    assert_ne!(a, sample_pairs(40, 10.0, 20.0, &k(), 4));
    for (x, y) in &a {
        assert!((10.0..20.0).contains(&x.norm()));
        assert!((y - x).norm() < k().support_radius());
    }
}
