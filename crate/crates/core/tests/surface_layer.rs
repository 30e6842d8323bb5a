use cvp_mass::geometry::{image_volume, volume, Deformation, Measure, Region, V3};
use cvp_mass::jets::Jet;
use cvp_mass::kernel::RadialKernel;
use cvp_mass::quadrature::QuadratureSpec;
use cvp_mass::surface_layer::{
    area, linearization_residual, mass_functional, n_functional, positivity_defect, quasilocal_mass, total_mass_exhaustion, Exhaustion,
    Gravitating, Relabelling, SymmetrySearch,
};
use cvp_mass::Error;
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn k() -> RadialKernel {
    RadialKernel::smooth_bump(1.0)
}

fn half() -> QuadratureSpec {
    QuadratureSpec::default().scaled(0.5)
}

fn relabelling(seed: u64, eps: f64, omega: &Region, spec: &QuadratureSpec) -> Relabelling {
    let m = Measure::vacuum();
    let target = volume(&m, omega, spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Relabelling::random(&mut rng, eps, 3.0).match_volume(&m, omega, target, spec).unwrap()
}

#[test]
fn identical_measures_have_zero_mass() {
    let spec = half();
    let m = Measure::vacuum();
    let omega = Region::ball(V3::zeros(), 5.0);
    let a = mass_functional(&k(), &m, &Gravitating::Measure(m.clone()), &omega, &omega, &spec).unwrap();
    assert_eq!(a.value, 0.0);
    let b = mass_functional(&k(), &m, &Gravitating::Deformed(Deformation::identity()), &omega, &omega, &spec).unwrap();
    assert_eq!(b.value, 0.0);
    assert_eq!(b.component("osi_term"), b.component("area"));
}

#[test]
fn top_hat_area_closed_form() {
    // A = |B_R||B_1| − ∫₀¹ 4πr² γ(r) dr with the lens volume γ(r) = (π/12)(4R + r)(2R − r)².
    let r = 4.0;
    let spec = QuadratureSpec::default();
    let (a, e) = area(&RadialKernel::top_hat(1.0), &Measure::vacuum(), &Region::ball(V3::zeros(), r), &spec).unwrap();
    let vr = 4.0 * PI * r.powi(3) / 3.0;
    // Simpson on the lens integral.
    let n = 2000;
    let h = 1.0 / n as f64;
    let g = |s: f64| 4.0 * PI * s * s * PI / 12.0 * (4.0 * r + s) * (2.0 * r - s).powi(2);
    let mut acc = g(0.0) + g(1.0);
    for i in 1..n {
        acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let exact = vr * 4.0 * PI / 3.0 - acc * h / 3.0;
    assert!((a - exact).abs() <= 1e-3 * exact, "{a} vs {exact} (err {e})");
}

#[test]
fn area_scales_like_surface() {
    // For R ≫ δ, A / 4πR² tends to ¼∫|ξ|ℒ d³ξ with corrections O(δ²/R²).
    let spec = half();
    let ring = {
        let kk = k();
        let n = 4000;
        let h = 1.0 / n as f64;
        (1..n).map(|i| {
            let s = i as f64 * h;
            4.0 * PI * s.powi(3) * kk.profile(s) * h
        }).sum::<f64>() / 4.0
    };
    let (a, _) = area(&k(), &Measure::vacuum(), &Region::ball(V3::zeros(), 8.0), &spec).unwrap();
    let ratio = a / (4.0 * PI * 64.0) / ring;
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
}

#[test]
fn mass_report_bookkeeping() {
    let spec = half();
    let omega = Region::ball(V3::zeros(), 3.0);
    let rel = relabelling(1, 0.01, &omega, &spec);
    let m = Measure::vacuum();
    let mt = Gravitating::Deformed(rel.deformation());
    let rep = mass_functional(&k(), &m, &mt, &omega, &omega, &spec).unwrap();
    let sum = 2.0 * rep.component("osi_term") - rep.component("area_tilde") - rep.component("area");
    assert_eq!(rep.value, sum);
    assert!(rep.value >= -10.0 * rep.error_estimate);
    let n = n_functional(&k(), &m, &mt, &omega, &omega, &spec).unwrap();
    assert_eq!(n.component("mass_functional"), rep.value);
    assert!(n.value >= -10.0 * n.error_estimate, "{} ± {}", n.value, n.error_estimate);
}

#[test]
fn volume_mismatch_is_rejected() {
    let spec = half();
    let omega = Region::ball(V3::zeros(), 3.0);
    let mt = Gravitating::Deformed(Deformation::reweight(Arc::new(|_| 1.01)));
    let r = positivity_defect(&k(), &Measure::vacuum(), &mt, &omega, &omega, &spec);
    assert!(matches!(r, Err(Error::VolumeConstraintViolated { .. })), "{r:?}");
}

#[test]
fn non_ball_regions_are_rejected() {
    let omega = Region::HalfSpace { normal: V3::z(), offset: 0.0 };
    let r = area(&k(), &Measure::vacuum(), &omega, &half());
    assert!(matches!(r, Err(Error::ConfigInvalid(_))));
}

#[test]
fn translations_are_exact_symmetries() {
    let spec = half();
    let omega = Region::ball(V3::zeros(), 3.0);
    let rel = relabelling(2, 0.01, &omega, &spec);
    let m = Measure::vacuum();
    let base = mass_functional(&k(), &m, &Gravitating::Deformed(rel.deformation()), &omega, &omega, &spec).unwrap();
    let t = V3::new(0.7, -1.1, 0.35);
    let moved_omega = omega.moved(&Matrix3::identity(), &t);
    let moved = mass_functional(&k(), &m, &Gravitating::Deformed(rel.moved(&Matrix3::identity(), &t)), &moved_omega, &moved_omega, &spec).unwrap();
    assert!((moved.value - base.value).abs() <= 1e-9 * base.value.abs(), "{} vs {}", moved.value, base.value);
}

#[test]
fn linearization_residual_orders() {
    // F_τ = id + τw with f = det DF has the jet τ(div w, w): the residual is O(τ²);
    // pairing it with half the jet leaves an O(τ) remainder.
    let spec = half();
    let omega = Region::ball(V3::zeros(), 2.0);
    let w = |x: &V3| V3::new(0.3 * x.y + 0.2 * x.x, 0.2 * (x.x * 0.5).sin() + 0.2 * x.y, 0.1 * x.z * x.z / 4.0 + 0.2 * x.z);
    let dw = |x: &V3| Matrix3::new(0.2, 0.3, 0.0, 0.1 * (x.x * 0.5).cos(), 0.2, 0.0, 0.0, 0.0, 0.05 * x.z + 0.2);
    let run = |tau: f64, c: f64| {
        let d = Deformation::relabelling(Arc::new(move |x| w(x) * tau), Arc::new(move |x| dw(x) * tau), "test");
        let jet = Jet::inner(Arc::new(move |x| w(x) * (c * tau)), Arc::new(move |x| dw(x).trace() * c * tau));
        linearization_residual(&k(), &Measure::vacuum(), &d, &jet, &omega, &spec).unwrap().0
    };
    let matched = (run(0.02, 1.0) / run(0.01, 1.0)).log2();
    let mismatched = (run(0.02, 0.5) / run(0.01, 0.5)).log2();
    assert!((matched - 2.0).abs() < 0.2, "{matched}");
    assert!((mismatched - 1.0).abs() < 0.2, "{mismatched}");
}

#[test]
fn large_displacements_are_rejected() {
    let d = Deformation::translation(V3::new(0.5, 0.0, 0.0));
    let r = linearization_residual(&k(), &Measure::vacuum(), &d, &Jet::Zero, &Region::ball(V3::zeros(), 2.0), &half());
    assert!(matches!(r, Err(Error::ConfigInvalid(_))));
}

#[test]
fn exhaustion_of_identical_measures() {
    let spec = half();
    let m = Measure::vacuum();
    let rep = total_mass_exhaustion(&k(), &m, &Exhaustion::Nonlinear(Gravitating::Measure(m.clone())), &[2.0, 3.0, 4.0], &spec).unwrap();
    assert!(rep.exhaustion_trace.iter().all(|&(_, v)| v == 0.0));
    assert_eq!(rep.value, 0.0);
    let short = total_mass_exhaustion(&k(), &m, &Exhaustion::Jet(Jet::Zero), &[2.0, 3.0], &spec);
    assert!(matches!(short, Err(Error::ConfigInvalid(_))));
}

#[test]
fn quasilocal_mass_of_translated_vacuum_vanishes() {
    let spec = QuadratureSpec::default().scaled(0.4);
    let omega_t = Region::ball(V3::zeros(), 2.5);
    let mt = Gravitating::Deformed(Deformation::translation(V3::new(0.3, -0.2, 0.1)));
    let search = SymmetrySearch { starts: 1, ..SymmetrySearch::default() };
    let rep = quasilocal_mass(&k(), &Measure::vacuum(), &mt, &omega_t, &search, &spec).unwrap();
    assert!(rep.value.abs() < 1e-9, "{}", rep.value);
    for (axis, want) in [("translation_x", 0.3), ("translation_y", -0.2), ("translation_z", 0.1)] {
        assert!((rep.component(axis) - want).abs() < 1e-3, "{axis}: {}", rep.component(axis));
    }
}

#[test]
fn quasilocal_search_needs_uniform_vacuum() {
    let m = Measure::with_density(Arc::new(|x: &V3| 1.0 + 0.01 * x.x));
    let r = quasilocal_mass(&k(), &m, &Gravitating::Measure(m.clone()), &Region::ball(V3::zeros(), 2.0), &SymmetrySearch::default(), &half());
    assert!(matches!(r, Err(Error::ConfigInvalid(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relabelling_matches_volume(seed in 0u64..1000, eps in 0.002f64..0.02) {
        let spec = QuadratureSpec::default();
        let omega = Region::ball(V3::zeros(), 3.0);
        let rel = relabelling(seed, eps, &omega, &spec);
        let m = Measure::vacuum();
        let v = image_volume(&m, &rel.deformation(), &omega, &spec).unwrap();
        let target = volume(&m, &omega, &spec).unwrap();
        prop_assert!((v - target).abs() <= 1e-9 * target);
    }

    #[test]
    fn moved_relabelling_conjugates(seed in 0u64..1000, a in 0.0f64..6.0, tx in -2.0f64..2.0, px in -2.0f64..2.0, py in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rel = Relabelling::random(&mut rng, 0.01, 3.0);
        let rot = nalgebra::Rotation3::from_euler_angles(a, 0.3, -a).into_inner();
        let t = V3::new(tx, 0.5, -0.2);
        let p = V3::new(px, py, 0.4);
        let d = rel.deformation();
        let g = rel.moved(&rot, &t);
        prop_assert!((g.apply(&(rot * p + t)) - (rot * d.apply(&p) + t)).norm() < 1e-12);
        prop_assert!((g.weight(&(rot * p + t)) - d.weight(&p)).abs() < 1e-12);
    }
}
