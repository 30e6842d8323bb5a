//! Linearized Schwarzschild: direct and aligned mass, the 𝔓(R) integral and
//! the relation to isotropic coordinates.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::alignment::{alignment_term, alignment_value, solve_alignment, AlignmentOptions, ErrSlot};
use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::{Measure, Region, ScalarField, VectorField, V3};
use crate::jets::{radial_frame, Jet, LineConfig, LineMethod, MetricField, Newtonian};
use crate::kernel::RadialKernel;
use crate::quadrature::{BallRule, Clip, OuterSymmetry, QuadratureSpec};
use crate::report::MassReport;
use crate::surface_layer::linearized_mass_with;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwarzschildModel {
    pub mass: f64,
    /// Radius of the quadratic core replacing −2M/|x|; 0 disables it.
    pub mollification: f64,
    pub line_method: LineMethod,
}

impl SchwarzschildModel {
    pub fn new(mass: f64) -> Self {
        SchwarzschildModel { mass, mollification: 0.0, line_method: LineMethod::ClosedForm }
    }

    pub fn newtonian(&self) -> Newtonian {
        Newtonian { mass: self.mass, core: self.mollification }
    }

    pub fn v(&self, x: &V3) -> f64 {
        self.newtonian().v(x)
    }

    pub fn jet(&self, spec: &QuadratureSpec) -> Jet {
        Jet::schwarzschild(self.newtonian(), LineConfig::from_spec(spec).with_method(self.line_method))
    }

    pub fn isotropic_jet(&self, spec: &QuadratureSpec) -> Jet {
        Jet::isotropic(self.newtonian(), LineConfig::from_spec(spec).with_method(self.line_method))
    }

    /// The inner solution (div ζ, ζ) with ζ = M x̂ relating the two coordinate systems.
    pub fn coordinate_change(&self) -> Jet {
        let m = self.mass;
        let u: VectorField = Arc::new(move |x: &V3| {
            let n = x.norm();
            if n == 0.0 {
                V3::zeros()
            } else {
                x * (m / n)
            }
        });
        let div: ScalarField = Arc::new(move |x: &V3| {
            let n = x.norm();
            if n == 0.0 {
                0.0
            } else {
                2.0 * m / n
            }
        });
        Jet::inner(u, div)
    }

    /// |∂_α h_αβ + ∂_β V| at x by finite differences (step `h`).
    pub fn divergence_defect(&self, x: &V3, h: f64) -> f64 {
        let nw = self.newtonian();
        let grads = fd::matrix_gradient(|z| nw.h(z), x, h);
        let div = V3::from_fn(|b, _| (0..3).map(|a| grads[a][(a, b)]).sum::<f64>());
        (div + nw.grad_v(x)).norm()
    }

    /// |∂^j h'_jk − ½∂_k h'| for the isotropic metric h'₀₀ = V, h'_αβ = V δ_αβ,
    /// with h' = h'₀₀ − h'_αα and ∂^j = −∂_j on spatial indices.
    pub fn harmonic_gauge_defect(&self, x: &V3, h: f64) -> f64 {
        let nw = self.newtonian();
        let hp = |z: &V3| Matrix3::identity() * nw.v(z);
        let trace = |z: &V3| nw.v(z) - hp(z).trace();
        let grads = fd::matrix_gradient(hp, x, h);
        let lhs = V3::from_fn(|kk, _| -(0..3).map(|j| grads[j][(j, kk)]).sum::<f64>());
        let rhs = fd::gradient(trace, x, h) * 0.5;
        (lhs - rhs).norm()
    }
}

impl MetricField for SchwarzschildModel {
    fn h(&self, x: &V3) -> Matrix3<f64> {
        self.newtonian().h(x)
    }
    fn h00(&self, x: &V3) -> f64 {
        self.v(x)
    }
    fn feature_length(&self) -> f64 {
        1.0
    }
    fn label(&self) -> String {
        format!("schwarzschild(M={})", self.mass)
    }
}

fn normalization(k: &RadialKernel, mass: f64) -> Result<f64> {
    Ok(k.delta * k.delta * k.moments()?.s2 * mass)
}

fn check_radius(r: f64, k: &RadialKernel) -> Result<()> {
    if !(r >= 10.0 * k.delta) {
        return Err(Error::ConfigInvalid(format!("radius {r} is below 10δ = {}", 10.0 * k.delta)));
    }
    Ok(())
}

fn normalized(value: f64, norm: f64) -> Option<f64> {
    (norm != 0.0).then(|| value / norm)
}

/// Linearized mass of the diffeomorphism jet over Ball(0, R₀).
pub fn direct_mass(model: &SchwarzschildModel, r0: f64, k: &RadialKernel, spec: &QuadratureSpec) -> Result<MassReport> {
    check_radius(r0, k)?;
    let v = model.jet(spec);
    let omega = Region::ball(V3::zeros(), r0);
    let mut rep = linearized_mass_with(k, &Measure::vacuum(), &v, &omega, OuterSymmetry::Spherical, spec)?;
    rep.label = format!("schwarzschild direct mass, R0={r0}");
    rep.normalized = normalized(rep.value, normalization(k, model.mass)?);
    rep.components.insert("R0".into(), r0);
    Ok(rep)
}

/// A⁽¹⁾ at ζ for the diffeomorphism jet, with an error estimate.
pub fn a1_pointwise(model: &SchwarzschildModel, zeta: &V3, k: &RadialKernel, spec: &QuadratureSpec) -> Result<(V3, f64)> {
    check_radius(zeta.norm(), k)?;
    alignment_term(&model.jet(spec), 1, zeta, k, spec)
}

/// Flux masses of A⁽⁰⁾ and A⁽¹⁾ through the sphere of radius R₀, before and
/// after aligning away A⁽⁰⁾ with an inner solution. The flux uses one node on
/// the sphere times 4πR₀²; a six-node audit records the deviation from isotropy.
pub fn aligned_mass(model: &SchwarzschildModel, r0: f64, k: &RadialKernel, spec: &QuadratureSpec) -> Result<MassReport> {
    check_radius(r0, k)?;
    let v = model.jet(spec);
    let norm = normalization(k, model.mass)?;
    let area = 4.0 * PI * r0 * r0;
    let rule = BallRule::from_spec(spec);
    let opts = AlignmentOptions::default();
    let nu = V3::z();
    let zeta = nu * r0;

    let (a0, e0) = alignment_term(&v, 0, &zeta, k, spec)?;
    let (a1, e1) = alignment_term(&v, 1, &zeta, k, spec)?;
    let m0 = area * a0.dot(&nu);
    let m1 = area * a1.dot(&nu);

    let mut audit = 0.0f64;
    let reference = a0.dot(&nu);
    for d in 0..3 {
        for s in [-1.0, 1.0] {
            let n = V3::ith(d, s);
            let val = alignment_value(&v, 0, &(n * r0), k, &rule, &opts)?.dot(&n);
            if reference != 0.0 {
                audit = audit.max((val - reference).abs() / reference.abs());
            }
        }
    }

    let mut rep = MassReport::new(format!("schwarzschild aligned mass, R0={r0}"));
    rep.components.insert("R0".into(), r0);
    rep.components.insert("m0".into(), m0);
    rep.components.insert("m1".into(), m1);
    rep.diag("isotropy_audit", audit);
    if model.mass == 0.0 {
        rep.components.insert("a0_residual".into(), 0.0);
        rep.components.insert("m1_aligned".into(), 0.0);
        return Ok(rep);
    }

    let sol = solve_alignment(&v, &Region::ball(zeta, 0.5 * k.delta), k, spec)?;
    let aligned = v.plus(sol.jet());
    let (b0, f0) = alignment_term(&aligned, 0, &zeta, k, spec)?;
    let (b1, f1) = alignment_term(&aligned, 1, &zeta, k, spec)?;
    let r0_flux = area * b0.dot(&nu);
    let r1_flux = area * b1.dot(&nu);
    rep.value = r0_flux + r1_flux;
    rep.error_estimate = area * (f0 + f1);
    rep.normalized = normalized(rep.value, norm);
    rep.components.insert("a0_residual".into(), r0_flux);
    rep.components.insert("m1_aligned".into(), r1_flux);
    rep.diag("m0_error", area * e0);
    rep.diag("m1_error", area * e1);
    rep.diag("alignment_iterations", sol.iterations as f64);
    rep.diag("alignment_residual_ratio", sol.residual_ratio());
    rep.diag("a0_residual_ratio", if m0 != 0.0 { (r0_flux / m0).abs() } else { 0.0 });
    if norm != 0.0 {
        for key in ["m0", "m1", "a0_residual", "m1_aligned"] {
            let val = rep.component(key) / norm;
            rep.diag(&format!("{key}_normalized"), val);
        }
    }
    // u at ζ compared with −δ²𝔰₂∇V/(24𝔰)
    let (u, _) = sol.field.eval(&zeta);
    let s = k.moments()?.s;
    let expected = -model.newtonian().grad_v(&zeta) * (norm / model.mass / (24.0 * s));
    rep.diag("u_radial", u.dot(&nu));
    rep.diag("u_expected_radial", expected.dot(&nu));
    Ok(rep)
}

/// 𝔓(R) = ∫ (|y| − R)(D₁ − D₂)ℒ(x, y) d³y at x = R ẑ, with an error estimate.
pub fn p_of_r(model: &SchwarzschildModel, r: f64, k: &RadialKernel, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    check_radius(r, k)?;
    if model.mass == 0.0 {
        return Ok((0.0, 0.0));
    }
    let v = model.jet(spec);
    let x = V3::z() * r;
    let frame = radial_frame(&x);
    let run = |s: &QuadratureSpec| {
        let slot = ErrSlot::default();
        let val = BallRule::from_spec(s).integrate(k.support_radius(), &frame, &Clip::None, |xi| {
            let y = x + xi;
            (y.norm() - r) * slot.take(v.antisym(k, &x, &y))
        });
        slot.finish(val)
    };
    let fine = run(spec)?;
    let coarse = run(&spec.scaled(2.0 / 3.0))?;
    Ok((fine, (fine - coarse).abs()))
}

/// Random point pairs with |x| in [r_min, r_max] and |y − x| below the kernel range.
pub fn sample_pairs(n: usize, r_min: f64, r_max: f64, k: &RadialKernel, seed: u64) -> Vec<(V3, V3)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let p = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = p.norm();
        if n > 1e-3 && n <= 1.0 {
            return p / n;
        }
    };
    (0..n)
        .map(|_| {
            let x = unit(&mut rng) * rng.gen_range(r_min..r_max);
            let y = x + unit(&mut rng) * rng.gen_range(0.05..0.95) * k.support_radius();
            (x, y)
        })
        .collect()
}

/// max over pairs of |∇₁,𝔳′ℒ − ∇₁,𝔳ℒ − ∇₁,𝔲ℒ| / scale, where 𝔳′ is the
/// isotropic-coordinate jet and 𝔲 the coordinate change.
pub fn isotropic_jet_relation(model: &SchwarzschildModel, samples: &[(V3, V3)], k: &RadialKernel, spec: &QuadratureSpec) -> Result<f64> {
    let v = model.jet(spec);
    let vp = model.isotropic_jet(spec);
    let u = model.coordinate_change();
    let mut worst = 0.0f64;
    for (x, y) in samples {
        let a = vp.nabla1(k, x, y)?;
        let b = v.nabla1(k, x, y)?;
        let c = u.nabla1(k, x, y)?;
        let scale = a.abs().max(b.abs()).max(c.abs());
        if scale > 0.0 {
            worst = worst.max((a - b - c).abs() / scale);
        }
    }
    Ok(worst)
}
