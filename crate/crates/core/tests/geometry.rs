use approx::assert_relative_eq;
use cvp_mass::geometry::{image_volume, pushforward_volume, volume, Deformation, Measure, Region, V3};
use cvp_mass::quadrature::QuadratureSpec;
use nalgebra::{Matrix3, Rotation3};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

#[test]
fn unit_ball_volume() {
    let v = volume(&Measure::vacuum(), &Region::ball(V3::zeros(), 1.0), &spec()).unwrap();
    assert_relative_eq!(v, 4.0 * PI / 3.0, max_relative = 1e-10);
}

#[test]
fn odd_density_part_integrates_to_zero() {
    let m = Measure::with_density(Arc::new(|x: &V3| 1.0 + 0.1 * x.x));
    let v = volume(&m, &Region::ball(V3::zeros(), 1.0), &spec()).unwrap();
    assert_relative_eq!(v, 4.0 * PI / 3.0, max_relative = 1e-10);
}

#[test]
fn annulus_volume() {
    let r = Region::Annulus { center: V3::new(1.0, 0.0, 0.0), r_in: 1.0, r_out: 2.0 };
    let v = volume(&Measure::vacuum(), &r, &spec()).unwrap();
    assert_relative_eq!(v, 4.0 * PI * 7.0 / 3.0, max_relative = 1e-9);
}

#[test]
fn identity_and_reweighted_pushforwards() {
    let m = Measure::vacuum();
    let ball = Region::ball(V3::zeros(), 1.0);
    let base = volume(&m, &ball, &spec()).unwrap();
    let id = pushforward_volume(&m, &Deformation::identity(), &ball, &spec()).unwrap();
    assert_relative_eq!(id, base, max_relative = 1e-12);
    let eps = 0.05;
    let rw = pushforward_volume(&m, &Deformation::reweight(Arc::new(move |_| 1.0 + eps)), &ball, &spec()).unwrap();
    assert_relative_eq!(rw, (1.0 + eps) * 4.0 * PI / 3.0, max_relative = 1e-10);
}

#[test]
fn radial_scaling_preserves_pushforward_mass() {
    // F_*μ(F(B)) = μ(B) for any injective F.
    let m = Measure::vacuum();
    let d = Deformation::radial_scale(1.3);
    let image = Region::ball(V3::zeros(), 1.3);
    let v = pushforward_volume(&m, &d, &image, &spec()).unwrap();
    assert_relative_eq!(v, 4.0 * PI / 3.0, max_relative = 1e-8);
}

#[test]
fn relabelling_keeps_density() {
    // f = det DF, so the image of a ball under a shear has the Lebesgue volume of its preimage.
    let a = Matrix3::new(0.0, 0.1, 0.0, 0.0, 0.0, 0.05, 0.0, 0.0, 0.0);
    let d = Deformation::relabelling(Arc::new(move |x| a * x), Arc::new(move |_| a), "shear");
    let v = image_volume(&Measure::vacuum(), &d, &Region::ball(V3::zeros(), 1.0), &spec()).unwrap();
    assert_relative_eq!(v, 4.0 * PI / 3.0, max_relative = 1e-10);
}

#[test]
fn invert_recovers_preimage() {
    let d = Deformation::relabelling(
        Arc::new(|x: &V3| V3::new(0.1 * x.y * x.y, 0.05 * x.z, -0.02 * x.x)),
        Arc::new(|x: &V3| Matrix3::new(0.0, 0.2 * x.y, 0.0, 0.0, 0.0, 0.05, -0.02, 0.0, 0.0)),
        "test",
    );
    let x = V3::new(0.3, -0.7, 0.4);
    let back = d.invert(&d.apply(&x)).unwrap();
    assert!((back - x).norm() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn moved_region_membership(a in 0.0f64..6.0, b in -1.5f64..1.5, c in 0.0f64..6.0,
                               tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
                               px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0) {
        let rot = Rotation3::from_euler_angles(a, b, c).into_inner();
        let t = V3::new(tx, ty, tz);
        let p = V3::new(px, py, pz);
        for r in [
            Region::ball(V3::new(0.2, 0.0, -0.1), 1.1),
            Region::Annulus { center: V3::zeros(), r_in: 0.5, r_out: 1.5 },
            Region::HalfSpace { normal: V3::new(0.0, 0.6, 0.8), offset: 0.3 },
        ] {
            let moved = r.moved(&rot, &t);
            prop_assert_eq!(r.contains(&p), moved.contains(&(rot * p + t)));
        }
    }

    #[test]
    fn ball_volume_is_translation_invariant(cx in -5.0f64..5.0, cy in -5.0f64..5.0, r in 0.3f64..3.0) {
        let v = volume(&Measure::vacuum(), &Region::ball(V3::new(cx, cy, 0.0), r), &spec()).unwrap();
        prop_assert!((v / (4.0 * PI * r.powi(3) / 3.0) - 1.0).abs() < 1e-10);
    }
}
