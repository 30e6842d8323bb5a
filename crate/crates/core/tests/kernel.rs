use approx::assert_relative_eq;
use cvp_mass::kernel::{KernelKind, RadialKernel};
use cvp_mass::quadrature::QuadratureSpec;
use cvp_mass::Error;
use nalgebra::Vector3;
use proptest::prelude::*;
use std::f64::consts::PI;

#[test]
fn top_hat_values_inside_and_beyond_range() {
    let k = RadialKernel::top_hat(1.0);
    assert_eq!(k.eval(&Vector3::new(0.5, 0.0, 0.0)), 1.0);
    assert_eq!(k.eval(&Vector3::new(2.0, 0.0, 0.0)), 0.0);
}

#[test]
fn gradient_vanishes_at_origin_and_outside_support() {
    for k in [RadialKernel::smooth_bump(1.0), RadialKernel::gaussian(0.5)] {
        assert_eq!(k.grad(&Vector3::zeros()).unwrap(), Vector3::zeros());
        let far = Vector3::new(0.0, 0.0, 1.01 * k.support_radius());
        assert_eq!(k.grad(&far).unwrap(), Vector3::zeros());
    }
}

#[test]
fn top_hat_has_no_gradient() {
    assert_eq!(RadialKernel::top_hat(1.0).grad(&Vector3::x()), Err(Error::NonDifferentiableKernel));
}

#[test]
fn invalid_range_is_rejected() {
    assert!(matches!(RadialKernel::new(KernelKind::SmoothBump, 0.0, 1.0), Err(Error::ConfigInvalid(_))));
    assert!(matches!(RadialKernel::new(KernelKind::SmoothBump, 1.0, -1.0), Err(Error::ConfigInvalid(_))));
}

#[test]
fn top_hat_moments_closed_form() {
    let m = RadialKernel::top_hat(1.0).moments().unwrap();
    assert_relative_eq!(m.s, 4.0 * PI / 3.0, max_relative = 1e-12);
    assert_relative_eq!(m.s2, 4.0 * PI / 5.0, max_relative = 1e-12);
    assert!((m.s2 / m.s - 0.6).abs() < 1e-10);
}

#[test]
fn gaussian_moments_closed_form() {
    // s = (2π)^{3/2} σ³ and s₂ = 3 s.
    let sigma = 0.7;
    let m = RadialKernel::gaussian(sigma).moments().unwrap();
    let s = (2.0 * PI).powf(1.5) * sigma.powi(3);
    assert_relative_eq!(m.s, s, max_relative = 1e-10);
    assert_relative_eq!(m.s2, 3.0 * s, max_relative = 1e-10);
}

#[test]
fn smooth_bump_moments_against_simpson() {
    let k = RadialKernel::smooth_bump(1.0);
    let n = 20_000;
    let h = 1.0 / n as f64;
    let simpson = |p: i32| {
        let f = |r: f64| r.powi(p) * k.profile(r);
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        4.0 * PI * acc * h / 3.0
    };
    let m = k.moments().unwrap();
    assert_relative_eq!(m.s, simpson(2), max_relative = 1e-9);
    assert_relative_eq!(m.s2, simpson(4), max_relative = 1e-9);
}

#[test]
fn isotropy_identities_hold() {
    let spec = QuadratureSpec::default();
    for k in [RadialKernel::smooth_bump(1.0), RadialKernel::top_hat(1.0), RadialKernel::gaussian(0.5)] {
        let a = k.isotropy_audit(&spec).unwrap();
        assert!(a.first_moment < 1e-6, "{:?}: {}", k.kind, a.first_moment);
        assert!(a.second_moment < 1e-6, "{:?}: {}", k.kind, a.second_moment);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_scale_with_range_cubed(delta in 0.2f64..5.0, amp in 0.1f64..3.0) {
        let base = RadialKernel::new(KernelKind::SmoothBump, 1.0, 1.0).unwrap().moments().unwrap();
        let m = RadialKernel::new(KernelKind::SmoothBump, delta, amp).unwrap().moments().unwrap();
        let f = amp * delta.powi(3);
        prop_assert!((m.s / (f * base.s) - 1.0).abs() < 1e-9);
        prop_assert!((m.s2 / (f * base.s2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_is_radial(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, a in 0.0f64..6.3, b in 0.0f64..3.1) {
        let k = RadialKernel::smooth_bump(1.5);
        let v = Vector3::new(x, y, z);
        let r = v.norm();
        let w = Vector3::new(b.sin() * a.cos(), b.sin() * a.sin(), b.cos()) * r;
        prop_assert!((k.eval(&v) - k.eval(&w)).abs() <= 1e-14);
    }

    #[test]
    fn gradient_matches_difference_quotient(x in -0.8f64..0.8, y in -0.5f64..0.5, z in -0.5f64..0.5) {
        let k = RadialKernel::smooth_bump(1.0);
        let v = Vector3::new(x, y, z);
        prop_assume!(v.norm() < 0.9);
        let g = k.grad(&v).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let e = Vector3::ith(i, h);
            let fd = (k.eval(&(v + e)) - k.eval(&(v - e))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g.norm()));
        }
    }
}
