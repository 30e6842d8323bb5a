//! Surface layer integrals: mass functionals, positivity defects, the
//! linearized quasilocal mass, exhaustions and the quasilocal infimum.

use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::alignment::ErrSlot;
use crate::error::{Error, Result};
use crate::geometry::{image_volume, sample_points, volume, Deformation, Measure, Region, V3};
use crate::jets::Jet;
use crate::kernel::RadialKernel;
use crate::quadrature::{angular_nodes, gauss_legendre, inner_clip, integrate_double, BallRule, Clip, Frame, OuterSymmetry, QuadratureSpec};
use crate::report::MassReport;

/// ∫_Ω dμ(x) ∫_{N∖Ω} dμ(y) (∇₁ − ∇₂)ℒ(x, y).
pub fn linearized_mass(k: &RadialKernel, m: &Measure, v: &Jet, omega: &Region, spec: &QuadratureSpec) -> Result<MassReport> {
    linearized_mass_with(k, m, v, omega, OuterSymmetry::None, spec)
}

/// As [`linearized_mass`]; `Spherical` samples a single outer direction and is
/// only valid for rotation-invariant set-ups centred on the ball.
pub fn linearized_mass_with(
    k: &RadialKernel,
    m: &Measure,
    v: &Jet,
    omega: &Region,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    let mut rep = MassReport::new(format!("linearized mass of {} over {}", v.label(), omega.label()));
    if let Jet::Zero = v {
        return Ok(rep);
    }
    k.require_differentiable()?;
    let slot = ErrSlot::default();
    let (val, err) = integrate_double(
        |x: &V3, y: &V3| slot.take(v.antisym(k, x, y)) * m.h(x) * m.h(y),
        omega,
        true,
        k.support_radius(),
        symmetry,
        spec,
    )?;
    slot.finish(())?;
    rep.value = val;
    rep.error_estimate = err;
    Ok(rep)
}

/// The second measure μ̃ of a mass functional.
#[derive(Debug, Clone)]
pub enum Gravitating {
    /// μ̃ given directly; its regions are ordinary regions.
    Measure(Measure),
    /// μ̃ = F_*(f μ) for the base measure μ. Regions paired with it are
    /// preimages: Ω̃ = F(Ω̃₀) is passed as Ω̃₀.
    Deformed(Deformation),
}

impl Gravitating {
    fn chart<'a>(&'a self, base: &'a Measure) -> Chart<'a> {
        match self {
            Gravitating::Measure(m) => Chart { m, d: None },
            Gravitating::Deformed(d) => Chart { m: base, d: Some(d) },
        }
    }

    /// μ̃(Ω̃), with Ω̃ given as in the variant docs.
    pub fn volume(&self, base: &Measure, region: &Region, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            Gravitating::Measure(m) => volume(m, region, spec),
            Gravitating::Deformed(d) => image_volume(base, d, region, spec),
        }
    }
}

/// A measure seen through an optional map: points x′ carry weight f(x′)h(x′)
/// and sit at F(x′).
#[derive(Clone, Copy)]
struct Chart<'a> {
    m: &'a Measure,
    d: Option<&'a Deformation>,
}

impl Chart<'_> {
    fn point(&self, x: &V3) -> V3 {
        self.d.map_or(*x, |d| d.apply(x))
    }

    fn weight(&self, x: &V3) -> f64 {
        self.m.h(x) * self.d.map_or(1.0, |d| d.weight(x))
    }

    fn same_map(&self, other: &Chart) -> bool {
        match (self.d, other.d) {
            (None, None) => true,
            (Some(a), Some(b)) => std::ptr::eq(a, b),
            _ => false,
        }
    }

    /// Point of this chart that maps to where `outer` puts x′.
    fn pull(&self, outer: &Chart, x: &V3) -> Result<V3> {
        if self.same_map(outer) {
            return Ok(*x);
        }
        let p = outer.point(x);
        match self.d {
            None => Ok(p),
            Some(d) => d.invert(&p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Outside,
    Inside,
    All,
}

fn ball_of(r: &Region) -> Result<(V3, f64)> {
    match r {
        Region::Ball { center, radius } => Ok((*center, *radius)),
        other => Err(Error::ConfigInvalid(format!("mass functionals need ball regions, got {}", other.label()))),
    }
}

/// Inner ball radius that covers the kernel support in the preimage of every
/// chart involved, so all terms of a functional share one rule.
fn padded_support(k: &RadialKernel, charts: &[Chart], reach: &Region) -> Result<f64> {
    let mut lw = 0.0f64;
    let pts = probe_points(reach);
    for c in charts {
        if let Some(d) = c.d {
            for p in &pts {
                lw = lw.max((d.jacobian(p) - Matrix3::identity()).norm());
            }
        }
    }
    if lw >= 0.25 {
        return Err(Error::ConfigInvalid(format!("deformation too strong for the surface-layer rules: |DF - I| = {lw:.3}")));
    }
    Ok(k.support_radius() / (1.0 - 2.0 * lw))
}

/// Interior lattice plus boundary directions of a ball.
fn probe_points(r: &Region) -> Vec<V3> {
    let mut pts = sample_points(r, 343);
    if let Region::Ball { center, radius } = r {
        pts.push(*center);
        for (dir, _) in angular_nodes(6, OuterSymmetry::None) {
            pts.push(center + dir * *radius);
        }
    }
    pts
}

/// ∫_{Ω_o} dμ_o(x) ∫_{side of Ω_i} dμ_i(y) ℒ(x, y) with both measures given
/// in their charts. Returns the fine and coarse rule values.
#[allow(clippy::too_many_arguments)]
fn pair_integral(
    k: &RadialKernel,
    outer: Chart,
    omega_o: &Region,
    inner: Chart,
    omega_i: &Region,
    side: Side,
    pad: f64,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
    with_coarse: bool,
) -> Result<(f64, f64)> {
    let (c_o, r_o) = ball_of(omega_o)?;
    let (c_i, r_i) = ball_of(omega_i)?;
    // Inner centers stay within `slack` of a rigid copy of the outer ball.
    let shift = inner.pull(&outer, &c_o)? - c_o;
    let mut drift = 0.0f64;
    if !inner.same_map(&outer) {
        for p in probe_points(&Region::ball(c_o, r_o + pad)) {
            drift = drift.max((inner.pull(&outer, &p)? - p - shift).norm());
        }
        drift *= 1.1;
    }
    let offset = (c_o + shift - c_i).norm();
    let rho0 = (r_i - pad - drift - offset).clamp(0.0, r_o);
    let rho1 = (r_i - k.support_radius() - drift - offset).clamp(rho0, r_o);
    let segments = match side {
        Side::Outside => vec![(rho0, rho1), (rho1, r_o)],
        Side::Inside | Side::All => vec![(0.0, rho0), (rho0, rho1), (rho1, r_o)],
    };
    let support = [k.support_radius()];
    let run = |spec: &QuadratureSpec| -> Result<f64> {
        let res = spec.resolution;
        let radial = gauss_legendre(res.outer_radial);
        let angular = angular_nodes(res.outer_angular, symmetry);
        let mut nodes = Vec::new();
        for &(a, b) in &segments {
            if b <= a {
                continue;
            }
            for (rho, wr) in radial.map(a, b) {
                for (dir, wa) in &angular {
                    nodes.push((c_o + dir * rho, wr * wa * rho * rho));
                }
            }
        }
        let rule = BallRule::from_spec(spec);
        let slot = ErrSlot::default();
        let vals: Vec<f64> = nodes
            .par_iter()
            .map(|(x, w)| {
                let Some(c) = slot.take(inner.pull(&outer, x).map(Some)) else {
                    return 0.0;
                };
                let fx = outer.point(x);
                let (frame, clip) = match side {
                    Side::All => (Frame::new(&V3::z()), Clip::None),
                    Side::Outside => inner_clip(omega_i, &c, true),
                    Side::Inside => inner_clip(omega_i, &c, false),
                };
                let v = rule.integrate_seq_split(pad, &frame, &clip, &support, |xi| {
                    let y = c + xi;
                    inner.weight(&y) * k.eval(&(inner.point(&y) - fx))
                });
                v * w * outer.weight(x)
            })
            .collect();
        let total: f64 = vals.iter().sum();
        slot.finish(total)
    };
    let fine = run(spec)?;
    let coarse = if with_coarse { run(&spec.scaled(2.0 / 3.0))? } else { fine };
    if !fine.is_finite() {
        return Err(Error::NonFiniteIntegrand("surface-layer double integral".into()));
    }
    Ok((fine, coarse))
}

/// A := ∫_Ω dμ(x) ∫_{N∖Ω} dμ(y) ℒ(x, y), with error estimate.
pub fn area(k: &RadialKernel, m: &Measure, omega: &Region, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    if let Region::Ball { radius, .. } = omega {
        if *radius <= 0.0 {
            return Ok((0.0, 0.0));
        }
    }
    integrate_double(|x: &V3, y: &V3| m.h(x) * m.h(y) * k.eval(&(y - x)), omega, true, k.support_radius(), OuterSymmetry::None, spec)
}

/// Fine/coarse values of the pieces shared by 𝔐, the positivity defect and 𝔑.
struct Pieces {
    osi: (f64, f64),
    area_tilde: (f64, f64),
    area: (f64, f64),
    v: f64,
    v_tilde: f64,
    s: f64,
    pad: f64,
}

#[allow(clippy::too_many_arguments)]
fn pieces(
    k: &RadialKernel,
    m: &Measure,
    mt: &Gravitating,
    omega: &Region,
    omega_t: &Region,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
    with_area_tilde: bool,
) -> Result<Pieces> {
    spec.validate()?;
    let vac = Chart { m, d: None };
    let til = mt.chart(m);
    let (c_t, r_t) = ball_of(omega_t)?;
    ball_of(omega)?;
    let pad = padded_support(k, &[til], &Region::ball(c_t, r_t + 2.0 * k.support_radius()))?;
    let osi = pair_integral(k, til, omega_t, vac, omega, Side::Outside, pad, symmetry, spec, true)?;
    let area_tilde = if with_area_tilde {
        pair_integral(k, til, omega_t, til, omega_t, Side::Outside, pad, symmetry, spec, true)?
    } else {
        (0.0, 0.0)
    };
    let area = pair_integral(k, vac, omega, vac, omega, Side::Outside, pad, symmetry, spec, true)?;
    let v = volume(m, omega, spec)?;
    let v_tilde = mt.volume(m, omega_t, spec)?;
    let s = k.moments()?.s;
    Ok(Pieces { osi, area_tilde, area, v, v_tilde, s, pad })
}

/// 𝔐(Ω̃, Ω) = 2∫_{Ω̃} dμ̃(x) ∫_{N∖Ω} dμ(y) ℒ(x, y) − Ã − A.
pub fn mass_functional(
    k: &RadialKernel,
    m: &Measure,
    mt: &Gravitating,
    omega: &Region,
    omega_t: &Region,
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    mass_functional_with(k, m, mt, omega, omega_t, OuterSymmetry::None, spec)
}

pub fn mass_functional_with(
    k: &RadialKernel,
    m: &Measure,
    mt: &Gravitating,
    omega: &Region,
    omega_t: &Region,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    let p = pieces(k, m, mt, omega, omega_t, symmetry, spec, true)?;
    let value = 2.0 * p.osi.0 - p.area_tilde.0 - p.area.0;
    let coarse = 2.0 * p.osi.1 - p.area_tilde.1 - p.area.1;
    let mut rep = MassReport::new(format!("mass functional over {} / {}", omega_t.label(), omega.label()))
        .with_component("osi_term", p.osi.0)
        .with_component("area_tilde", p.area_tilde.0)
        .with_component("area", p.area.0)
        .with_component("v", p.v)
        .with_component("v_tilde", p.v_tilde)
        .with_component("volume_deficit", p.v_tilde - p.v)
        .with_component("s_times_volume_deficit", p.s * (p.v_tilde - p.v));
    rep.value = value;
    rep.error_estimate = (value - coarse).abs();
    rep.diag("ell_tilde_residual", ell_tilde_residual(k, m, mt, omega_t, p.pad, p.s, spec)?);
    Ok(rep)
}

/// max |ℓ̃| over six points of ∂Ω̃, where ℓ̃(x) = ∫ ℒ(x, y) dμ̃(y) − 𝔰.
fn ell_tilde_residual(k: &RadialKernel, m: &Measure, mt: &Gravitating, omega_t: &Region, pad: f64, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    let (c, r) = ball_of(omega_t)?;
    let chart = mt.chart(m);
    let rule = BallRule::from_spec(spec);
    let frame = Frame::new(&V3::z());
    let mut worst = 0.0f64;
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let x = c + V3::ith(axis, sign * r);
            let fx = chart.point(&x);
            let v = rule.integrate(pad, &frame, &Clip::None, |xi| {
                let y = x + xi;
                chart.weight(&y) * k.eval(&(chart.point(&y) - fx))
            });
            worst = worst.max((v - s).abs());
        }
    }
    Ok(worst)
}

/// The four-term combination
/// 2∫_{Ω̃}∫_{N∖Ω} ℒ − 2∫_Ω∫_{N∖Ω} ℒ + ∫_{Ω̃}∫_{Ω̃} ℒ − ∫_Ω∫_Ω ℒ
/// (non-negative for a minimizing vacuum under the volume constraint).
pub fn positivity_defect(
    k: &RadialKernel,
    m: &Measure,
    mt: &Gravitating,
    omega: &Region,
    omega_t: &Region,
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    let p = pieces(k, m, mt, omega, omega_t, OuterSymmetry::None, spec, false)?;
    if (p.v - p.v_tilde).abs() > spec.rel_tol * p.v.abs() {
        return Err(Error::VolumeConstraintViolated { v: p.v, v_tilde: p.v_tilde });
    }
    let vac = Chart { m, d: None };
    let til = mt.chart(m);
    let inner_t = pair_integral(k, til, omega_t, til, omega_t, Side::Inside, p.pad, OuterSymmetry::None, spec, true)?;
    let inner = pair_integral(k, vac, omega, vac, omega, Side::Inside, p.pad, OuterSymmetry::None, spec, true)?;
    let comb = |o: f64, a: f64, it: f64, i: f64| 2.0 * o - 2.0 * a + it - i;
    let value = comb(p.osi.0, p.area.0, inner_t.0, inner.0);
    let coarse = comb(p.osi.1, p.area.1, inner_t.1, inner.1);
    let mut rep = MassReport::new(format!("positivity defect over {} / {}", omega_t.label(), omega.label()))
        .with_component("osi_term", p.osi.0)
        .with_component("area", p.area.0)
        .with_component("inner_tilde", inner_t.0)
        .with_component("inner", inner.0)
        .with_component("v", p.v)
        .with_component("v_tilde", p.v_tilde);
    rep.value = value;
    rep.error_estimate = (value - coarse).abs();
    Ok(rep)
}

/// 𝔑(Ω̃, Ω) = 𝔐(Ω̃, Ω) − 2𝔰Ṽ + 𝔰V + ∫_{Ω̃} dμ̃(x) ∫_Ñ dμ̃(y) ℒ(x, y), which is
/// non-negative without assuming ℓ̃ ≡ 0.
pub fn n_functional(
    k: &RadialKernel,
    m: &Measure,
    mt: &Gravitating,
    omega: &Region,
    omega_t: &Region,
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    let p = pieces(k, m, mt, omega, omega_t, OuterSymmetry::None, spec, true)?;
    let til = mt.chart(m);
    let full = pair_integral(k, til, omega_t, til, omega_t, Side::All, p.pad, OuterSymmetry::None, spec, true)?;
    let mass = |o: f64, at: f64, a: f64| 2.0 * o - at - a;
    let m_fine = mass(p.osi.0, p.area_tilde.0, p.area.0);
    let m_coarse = mass(p.osi.1, p.area_tilde.1, p.area.1);
    let vol = -2.0 * p.s * p.v_tilde + p.s * p.v;
    let value = m_fine + vol + full.0;
    let coarse = m_coarse + vol + full.1;
    let mut rep = MassReport::new(format!("N functional over {} / {}", omega_t.label(), omega.label()))
        .with_component("mass_functional", m_fine)
        .with_component("osi_term", p.osi.0)
        .with_component("area_tilde", p.area_tilde.0)
        .with_component("area", p.area.0)
        .with_component("full_inner_tilde", full.0)
        .with_component("volume_terms", vol)
        .with_component("v", p.v)
        .with_component("v_tilde", p.v_tilde);
    rep.value = value;
    rep.error_estimate = (value - coarse).abs();
    Ok(rep)
}

/// What an exhaustion evaluates at each radius.
#[derive(Debug, Clone)]
pub enum Exhaustion {
    /// The linearized mass of a jet.
    Jet(Jet),
    /// −𝔰(Ṽ − V) + ∫_{Ω̃}∫_{N∖Ω} ℒ − ∫_Ω∫_{Ñ∖Ω̃} ℒ with Ω = Ω̃ = B(0, R)
    /// (Ω̃ as a preimage for deformations).
    Nonlinear(Gravitating),
}

/// Evaluate an exhaustion over increasing radii and extrapolate with a + b/R.
pub fn total_mass_exhaustion(
    k: &RadialKernel,
    m: &Measure,
    what: &Exhaustion,
    radii: &[f64],
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    if radii.len() < 3 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::ConfigInvalid("exhaustion needs at least three increasing positive radii".into()));
    }
    let mut trace = Vec::with_capacity(radii.len());
    let mut errs = Vec::with_capacity(radii.len());
    for &r in radii {
        let omega = Region::ball(V3::zeros(), r);
        let (v, e) = match what {
            Exhaustion::Jet(j) => {
                let rep = linearized_mass(k, m, j, &omega, spec)?;
                (rep.value, rep.error_estimate)
            }
            Exhaustion::Nonlinear(mt) => exhaustion_term(k, m, mt, &omega, spec)?,
        };
        trace.push((r, v));
        errs.push(e);
    }
    let (a, b) = fit_inverse(&trace);
    let scale = trace.iter().fold(0.0f64, |s, &(_, v)| s.max(v.abs()));
    for i in 1..trace.len() {
        let (r0, v0) = trace[i - 1];
        let (r1, v1) = trace[i];
        let model = (b * (1.0 / r1 - 1.0 / r0)).abs();
        let allowed = 3.0 * model + 10.0 * (errs[i] + errs[i - 1]) + 1e-10 * scale;
        if (v1 - v0).abs() > allowed {
            return Err(Error::NonConvergentTrace(format!(
                "values {v0:.6e} at R = {r0} and {v1:.6e} at R = {r1} differ by more than the a + b/R model allows"
            )));
        }
    }
    let resid = trace.iter().fold(0.0f64, |s, &(r, v)| s.max((v - a - b / r).abs()));
    let last = *errs.last().unwrap();
    let mut rep = MassReport::new("total mass exhaustion")
        .with_component("limit", a)
        .with_component("decay_coefficient", b);
    rep.value = a;
    rep.error_estimate = resid + last;
    rep.exhaustion_trace = trace;
    Ok(rep)
}

/// Least-squares fit v ≈ a + b/R.
fn fit_inverse(trace: &[(f64, f64)]) -> (f64, f64) {
    let n = trace.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(r, v) in trace {
        let x = 1.0 / r;
        sx += x;
        sy += v;
        sxx += x * x;
        sxy += x * v;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let b = (n * sxy - sx * sy) / det;
    ((sy - b * sx) / n, b)
}

fn exhaustion_term(k: &RadialKernel, m: &Measure, mt: &Gravitating, omega: &Region, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let vac = Chart { m, d: None };
    let til = mt.chart(m);
    let (c, r) = ball_of(omega)?;
    let pad = padded_support(k, &[til], &Region::ball(c, r + 2.0 * k.support_radius()))?;
    let osi = pair_integral(k, til, omega, vac, omega, Side::Outside, pad, OuterSymmetry::None, spec, true)?;
    let back = pair_integral(k, vac, omega, til, omega, Side::Outside, pad, OuterSymmetry::None, spec, true)?;
    let s = k.moments()?.s;
    let vol = -s * (mt.volume(m, omega, spec)? - volume(m, omega, spec)?);
    let fine = vol + osi.0 - back.0;
    let coarse = vol + osi.1 - back.1;
    Ok((fine, (fine - coarse).abs()))
}

/// ∫_Ω dμ(x) ∫_{N∖Ω} dμ(y) [f(x) ℒ(F(x), y) − ℒ(x, y) − ∇_{1,v} ℒ(x, y)].
pub fn linearization_residual(
    k: &RadialKernel,
    m: &Measure,
    d: &Deformation,
    v: &Jet,
    omega: &Region,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let (c, r) = ball_of(omega)?;
    let reach = Region::ball(c, r + 2.0 * k.support_radius());
    let disp = probe_points(&reach).iter().fold(0.0f64, |s, p| s.max((d.apply(p) - p).norm()));
    if disp >= 0.1 * k.delta {
        return Err(Error::ConfigInvalid(format!("deformation moves points by {disp:.3e}, more than δ/10")));
    }
    let slot = ErrSlot::default();
    let res = integrate_double(
        |x: &V3, y: &V3| {
            let nl = d.weight(x) * k.eval(&(y - d.apply(x))) - k.eval(&(y - x));
            let lin = match v {
                Jet::Zero => 0.0,
                _ => slot.take(v.nabla1(k, x, y)),
            };
            (nl - lin) * m.h(x) * m.h(y)
        },
        omega,
        true,
        k.support_radius() + disp,
        OuterSymmetry::None,
        spec,
    )?;
    slot.finish(res)
}

/// Search domain for the quasilocal infimum. Ω ranges over balls whose volume
/// matches μ̃(Ω̃), translated within `translation_box` of the image of Ω̃'s
/// center. Rotations act trivially on balls and are not searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymmetrySearch {
    pub translation_box: f64,
    pub starts: usize,
    pub max_iters: u64,
    /// Simplex standard-deviation tolerance on the objective.
    pub tolerance: f64,
}

impl Default for SymmetrySearch {
    fn default() -> Self {
        SymmetrySearch { translation_box: 1.0, starts: 3, max_iters: 200, tolerance: 1e-12 }
    }
}

struct QuasilocalCost<'a> {
    k: &'a RadialKernel,
    m: &'a Measure,
    mt: &'a Gravitating,
    omega_t: &'a Region,
    radius: f64,
    pad: f64,
    /// Ã + A; A does not move with a translation of Ω in a uniform vacuum.
    fixed: f64,
    spec: &'a QuadratureSpec,
}

impl QuasilocalCost<'_> {
    fn eval(&self, t: &V3) -> Result<f64> {
        let omega = Region::ball(*t, self.radius);
        let vac = Chart { m: self.m, d: None };
        let til = self.mt.chart(self.m);
        let (osi, _) = pair_integral(self.k, til, self.omega_t, vac, &omega, Side::Outside, self.pad, OuterSymmetry::None, self.spec, false)?;
        Ok(2.0 * osi - self.fixed)
    }
}

impl CostFunction for QuasilocalCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        self.eval(&V3::new(p[0], p[1], p[2])).map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

/// Infimum of 𝔐(Ω̃, Ω) over volume-matched balls Ω moved by translations,
/// by Nelder–Mead with several starts.
pub fn quasilocal_mass(
    k: &RadialKernel,
    m: &Measure,
    mt: &Gravitating,
    omega_t: &Region,
    search: &SymmetrySearch,
    spec: &QuadratureSpec,
) -> Result<MassReport> {
    if !m.uniform {
        return Err(Error::ConfigInvalid("the quasilocal search needs a translation-invariant vacuum measure".into()));
    }
    if search.starts == 0 || search.translation_box <= 0.0 {
        return Err(Error::ConfigInvalid("quasilocal search needs at least one start and a positive box".into()));
    }
    let (c0, _) = ball_of(omega_t)?;
    let v_tilde = mt.volume(m, omega_t, spec)?;
    let radius = (3.0 * v_tilde / (4.0 * PI)).cbrt();
    let anchor = mt.chart(m).point(&c0);
    let p = pieces(k, m, mt, &Region::ball(anchor, radius), omega_t, OuterSymmetry::None, spec, true)?;
    let cost = QuasilocalCost { k, m, mt, omega_t, radius, pad: p.pad, fixed: p.area_tilde.0 + p.area.0, spec };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let step = 0.25 * search.translation_box;
    let mut best: Option<(f64, V3)> = None;
    let mut converged = false;
    let mut evals = 0u64;
    for s in 0..search.starts {
        let start = if s == 0 {
            anchor
        } else {
            anchor + V3::from_fn(|_, _| rng.gen_range(-0.5..0.5)) * search.translation_box
        };
        let mut simplex = vec![vec![start.x, start.y, start.z]];
        for i in 0..3 {
            let mut v = simplex[0].clone();
            v[i] += step;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(search.tolerance)
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        let cost_ref = QuasilocalCost { ..cost };
        let res = Executor::new(cost_ref, solver)
            .configure(|st| st.max_iters(search.max_iters))
            .run()
            .map_err(|e| Error::ConfigInvalid(format!("quasilocal search failed: {e}")))?;
        let st = res.state();
        evals += st.get_func_counts().values().sum::<u64>();
        if matches!(st.get_termination_reason(), Some(TerminationReason::SolverConverged)) {
            converged = true;
        }
        if let Some(p) = st.get_best_param() {
            let v = st.get_best_cost();
            let t = V3::new(p[0], p[1], p[2]);
            if (t - anchor).amax() <= search.translation_box && best.map_or(true, |(b, _)| v < b) {
                best = Some((v, t));
            }
        }
    }
    let Some((_, t)) = best else {
        return Err(Error::OptimizerStalled { best: f64::NAN });
    };
    let omega = Region::ball(t, radius);
    let mut rep = mass_functional(k, m, mt, &omega, omega_t, spec)?;
    if !converged {
        return Err(Error::OptimizerStalled { best: rep.value });
    }
    rep.label = format!("quasilocal mass of {}", omega_t.label());
    rep.components.insert("translation_x".into(), t.x);
    rep.components.insert("translation_y".into(), t.y);
    rep.components.insert("translation_z".into(), t.z);
    rep.components.insert("radius".into(), radius);
    rep.diag("evaluations", evals as f64);
    rep.diag("nonnegativity_margin", rep.value + 10.0 * rep.error_estimate);
    Ok(rep)
}

/// Random smooth relabelling w(x) = εR(b + Bx/R + Q(x/R, x/R)) plus a radial
/// term λx chosen so that the image of a ball keeps the base volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Relabelling {
    pub eps: f64,
    pub scale: f64,
    pub b: V3,
    pub lin: Matrix3<f64>,
    /// q[i] is the symmetric quadratic form of component i.
    pub quad: [Matrix3<f64>; 3],
    pub lambda: f64,
}

impl Relabelling {
    pub fn random<R: Rng>(rng: &mut R, eps: f64, scale: f64) -> Relabelling {
        let mut u = || rng.gen_range(-1.0..1.0);
        let b = V3::new(u(), u(), u());
        let lin = Matrix3::from_fn(|_, _| u());
        let quad = [0, 1, 2].map(|_| {
            let a = Matrix3::from_fn(|_, _| u());
            (a + a.transpose()) * 0.5
        });
        Relabelling { eps, scale, b, lin, quad, lambda: 0.0 }
    }

    pub fn w(&self, x: &V3) -> V3 {
        let z = x / self.scale;
        let q = V3::from_fn(|i, _| z.dot(&(self.quad[i] * z)));
        (self.b + self.lin * z + q) * (self.eps * self.scale) + x * self.lambda
    }

    pub fn dw(&self, x: &V3) -> Matrix3<f64> {
        let z = x / self.scale;
        let mut j = self.lin;
        for i in 0..3 {
            let g = self.quad[i] * z * 2.0;
            j.set_row(i, &(j.row(i) + g.transpose()));
        }
        j * self.eps + Matrix3::identity() * self.lambda
    }

    pub fn deformation(&self) -> Deformation {
        let a = self.clone();
        let b = self.clone();
        Deformation::relabelling(Arc::new(move |x| a.w(x)), Arc::new(move |x| b.dw(x)), "random relabelling")
    }

    /// The conjugate g∘F∘g⁻¹ under the motion g(x) = Rx + t.
    pub fn moved(&self, rot: &Matrix3<f64>, t: &V3) -> Deformation {
        let (a, b) = (self.clone(), self.clone());
        let (ra, rb, ta, tb) = (*rot, *rot, *t, *t);
        Deformation::relabelling(
            Arc::new(move |x| ra * a.w(&(ra.transpose() * (x - ta)))),
            Arc::new(move |x| rb * b.dw(&(rb.transpose() * (x - tb))) * rb.transpose()),
            "moved random relabelling",
        )
    }

    /// Solve for λ (secant) so that μ̃(F(Ω̃₀)) = target.
    pub fn match_volume(mut self, m: &Measure, preimage: &Region, target: f64, spec: &QuadratureSpec) -> Result<Relabelling> {
        let vol = |l: f64, me: &mut Relabelling| -> Result<f64> {
            me.lambda = l;
            Ok(image_volume(m, &me.deformation(), preimage, spec)? - target)
        };
        let (mut l0, mut l1) = (0.0, 0.01 * self.eps);
        let mut f0 = vol(l0, &mut self)?;
        let mut f1 = vol(l1, &mut self)?;
        for _ in 0..30 {
            if f1.abs() <= 1e-12 * target.abs() {
                self.lambda = l1;
                return Ok(self);
            }
            if f1 == f0 {
                break;
            }
            let l2 = l1 - f1 * (l1 - l0) / (f1 - f0);
            (l0, f0) = (l1, f1);
            l1 = l2;
            f1 = vol(l1, &mut self)?;
        }
        self.lambda = l1;
        if f1.abs() <= 1e-9 * target.abs() {
            Ok(self)
        } else {
            Err(Error::VolumeConstraintViolated { v: target, v_tilde: target + f1 })
        }
    }
}
