//! Alignment vector fields A⁽⁰⁾, A⁽¹⁾, the divergence identity, flux masses,
//! inner-solution alignment and the local volume condition.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::{Deformation, Measure, Region, ScalarField, SurfaceQuadrature, VectorField, V3};
use crate::jets::Jet;
use crate::kernel::RadialKernel;
use crate::quadrature::{BallRule, Clip, Frame, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentOptions {
    /// Step of the ζ-derivatives inside A⁽¹⁾, in units of δ.
    pub zeta_step: f64,
    /// Step of the divergence of A, in units of δ.
    pub div_step: f64,
    /// Grid spacing of solve_alignment, in units of δ.
    pub grid_spacing: f64,
    pub max_iter: usize,
    /// Relative max-norm update that stops the fixed-point iteration.
    pub update_tol: f64,
}

impl Default for AlignmentOptions {
    fn default() -> Self {
        AlignmentOptions { zeta_step: 1e-3, div_step: 0.1, grid_spacing: 0.5, max_iter: 8, update_tol: 1e-3 }
    }
}

/// Collects the first error raised inside an infallible quadrature closure.
#[derive(Default)]
pub(crate) struct ErrSlot(Mutex<Option<Error>>);

impl ErrSlot {
    pub(crate) fn take<T: Default>(&self, r: Result<T>) -> T {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.0.lock().unwrap().get_or_insert(e);
                T::default()
            }
        }
    }

    pub(crate) fn finish<T>(self, v: T) -> Result<T> {
        match self.0.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// Integrand of A⁽ᵏ⁾ at ζ for a single ξ (without the 1/(4ᵏ(2k+1)!) prefactor).
fn a_integrand(v: &Jet, order: usize, zeta: &V3, xi: &V3, k: &RadialKernel, eta: f64) -> Result<V3> {
    let g = |t: f64| -> Result<f64> {
        let r = xi.norm();
        let shift = if r > 0.0 { xi * (t / r) } else { V3::zeros() };
        let x = zeta - xi * 0.5 + shift;
        v.nabla1(k, &x, &(x + xi))
    };
    match order {
        0 => Ok(xi * g(0.0)?),
        1 => {
            let r2 = xi.norm_squared();
            let vals = [g(-2.0 * eta)?, g(-eta)?, g(0.0)?, g(eta)?, g(2.0 * eta)?];
            let d2 = (-vals[0] + 16.0 * vals[1] - 30.0 * vals[2] + 16.0 * vals[3] - vals[4]) / (12.0 * eta * eta);
            Ok(xi * (r2 * d2))
        }
        _ => Err(Error::UnsupportedOrder(order)),
    }
}

fn prefactor(order: usize) -> f64 {
    match order {
        0 => 1.0,
        _ => 1.0 / 24.0,
    }
}

/// A⁽ᵏ⁾(ζ) with a given ball rule (no error estimate).
pub fn alignment_value(v: &Jet, order: usize, zeta: &V3, k: &RadialKernel, rule: &BallRule, opts: &AlignmentOptions) -> Result<V3> {
    if let Jet::Zero = v {
        return Ok(V3::zeros());
    }
    if order > 1 {
        return Err(Error::UnsupportedOrder(order));
    }
    k.require_differentiable()?;
    let eta = opts.zeta_step * k.delta;
    let frame = Frame::new(zeta);
    let slot = ErrSlot::default();
    let val: Vector3<f64> = rule.integrate(k.support_radius(), &frame, &Clip::None, |xi| slot.take(a_integrand(v, order, zeta, xi, k, eta)));
    slot.finish(val * prefactor(order))
}

/// A⁽ᵏ⁾(ζ) for k ∈ {0, 1} with an error estimate (max-norm difference to a
/// coarser rule).
pub fn alignment_term(v: &Jet, order: usize, zeta: &V3, k: &RadialKernel, spec: &QuadratureSpec) -> Result<(V3, f64)> {
    alignment_term_with(v, order, zeta, k, spec, &AlignmentOptions::default())
}

pub fn alignment_term_with(
    v: &Jet,
    order: usize,
    zeta: &V3,
    k: &RadialKernel,
    spec: &QuadratureSpec,
    opts: &AlignmentOptions,
) -> Result<(V3, f64)> {
    let fine = alignment_value(v, order, zeta, k, &BallRule::from_spec(spec), opts)?;
    let coarse = alignment_value(v, order, zeta, k, &BallRule::from_spec(&spec.scaled(2.0 / 3.0)), opts)?;
    Ok((fine, (fine - coarse).amax()))
}

/// div A⁽ᵏ⁾ at ζ by fourth-order central differences.
pub fn alignment_divergence(v: &Jet, order: usize, zeta: &V3, k: &RadialKernel, rule: &BallRule, opts: &AlignmentOptions) -> Result<f64> {
    let slot = ErrSlot::default();
    let d = fd::divergence(|z| slot.take(alignment_value(v, order, z, k, rule, opts)), zeta, opts.div_step * k.delta);
    slot.finish(d)
}

/// ∫ (∇₁ − ∇₂)ℒ(ζ, y) dμ(y) over the kernel ball.
pub fn direct_inner_integral(v: &Jet, zeta: &V3, k: &RadialKernel, m: &Measure, rule: &BallRule) -> Result<f64> {
    let slot = ErrSlot::default();
    let val = rule.integrate(k.support_radius(), &Frame::new(zeta), &Clip::None, |xi| {
        let y = zeta + xi;
        slot.take(v.antisym(k, zeta, &y)) * m.h(&y)
    });
    slot.finish(val)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    pub direct: f64,
    pub div_a0: f64,
    pub div_a1: f64,
    /// |direct − Σ_{k ≤ k_max} div A⁽ᵏ⁾|
    pub defect: f64,
    /// direct − div A⁽⁰⁾ − div A⁽¹⁾ (signed, always through k = 1)
    pub remainder: f64,
}

/// Compares the inner integral with the divergence of the truncated series.
pub fn divergence_identity_defect(
    v: &Jet,
    zeta: &V3,
    k_max: usize,
    k: &RadialKernel,
    m: &Measure,
    spec: &QuadratureSpec,
) -> Result<DivergenceCheck> {
    divergence_identity_defect_with(v, zeta, k_max, k, m, spec, &AlignmentOptions::default())
}

pub fn divergence_identity_defect_with(
    v: &Jet,
    zeta: &V3,
    k_max: usize,
    k: &RadialKernel,
    m: &Measure,
    spec: &QuadratureSpec,
    opts: &AlignmentOptions,
) -> Result<DivergenceCheck> {
    if k_max > 1 {
        return Err(Error::UnsupportedOrder(k_max));
    }
    let rule = BallRule::from_spec(spec);
    let direct = direct_inner_integral(v, zeta, k, m, &rule)?;
    let div_a0 = alignment_divergence(v, 0, zeta, k, &rule, opts)?;
    let div_a1 = alignment_divergence(v, 1, zeta, k, &rule, opts)?;
    let series = if k_max == 0 { div_a0 } else { div_a0 + div_a1 };
    Ok(DivergenceCheck { direct, div_a0, div_a1, defect: (direct - series).abs(), remainder: direct - div_a0 - div_a1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxResult {
    pub m0: f64,
    pub m1: f64,
    pub total: f64,
}

/// Σ_nodes (A⁽⁰⁾ + A⁽¹⁾)·ν w over a closed surface.
pub fn flux_mass(v: &Jet, sq: &SurfaceQuadrature, k: &RadialKernel, spec: &QuadratureSpec) -> Result<FluxResult> {
    let rule = BallRule::from_spec(spec);
    let opts = AlignmentOptions::default();
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for n in &sq.nodes {
        m0 += n.weight * alignment_value(v, 0, &n.point, k, &rule, &opts)?.dot(&n.normal);
        m1 += n.weight * alignment_value(v, 1, &n.point, k, &rule, &opts)?.dot(&n.normal);
    }
    Ok(FluxResult { m0, m1, total: m0 + m1 })
}

/// Vector field sampled on a regular grid, interpolated by tensor-product
/// Catmull–Rom cubics (C¹, with analytic Jacobian).
#[derive(Debug, Clone)]
pub struct GridField {
    pub origin: V3,
    pub spacing: f64,
    pub n: [usize; 3],
    pub values: Vec<V3>,
}

fn cr_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

impl GridField {
    pub fn points(&self) -> Vec<V3> {
        let mut out = Vec::with_capacity(self.n[0] * self.n[1] * self.n[2]);
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                for l in 0..self.n[2] {
                    out.push(self.origin + V3::new(i as f64, j as f64, l as f64) * self.spacing);
                }
            }
        }
        out
    }

    fn idx(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + l
    }

    /// Value and Jacobian ∂u_a/∂x_b. Points outside the grid use the nearest cell.
    pub fn eval(&self, x: &V3) -> (V3, Matrix3<f64>) {
        let mut base = [0usize; 3];
        let mut w = [[0.0; 4]; 3];
        let mut dw = [[0.0; 4]; 3];
        for d in 0..3 {
            let q = (x[d] - self.origin[d]) / self.spacing;
            let cell = q.floor().clamp(1.0, (self.n[d] as f64 - 3.0).max(1.0));
            let t = q - cell;
            base[d] = cell as usize - 1;
            let (a, b) = cr_weights(t);
            w[d] = a;
            dw[d] = b;
        }
        let mut val = V3::zeros();
        let mut jac = Matrix3::zeros();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let v = self.values[self.idx(base[0] + a, base[1] + b, base[2] + c)];
                    let wv = w[0][a] * w[1][b] * w[2][c];
                    val += v * wv;
                    let g = V3::new(dw[0][a] * w[1][b] * w[2][c], w[0][a] * dw[1][b] * w[2][c], w[0][a] * w[1][b] * dw[2][c]) / self.spacing;
                    jac += v * g.transpose();
                }
            }
        }
        (val, jac)
    }

    pub fn inner_jet(self: &Arc<Self>) -> Jet {
        let g1 = self.clone();
        let g2 = self.clone();
        let u: VectorField = Arc::new(move |x| g1.eval(x).0);
        let a: ScalarField = Arc::new(move |x| g2.eval(x).1.trace());
        Jet::inner(u, a)
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentSolution {
    pub field: Arc<GridField>,
    pub iterations: usize,
    /// max |A⁽⁰⁾[𝔳]| over grid points inside the domain.
    pub unaligned_norm: f64,
    /// max |A⁽⁰⁾[𝔳 + 𝔲]| over the same points.
    pub residual_norm: f64,
    pub updates: Vec<f64>,
}

impl AlignmentSolution {
    pub fn jet(&self) -> Jet {
        self.field.inner_jet()
    }

    pub fn residual_ratio(&self) -> f64 {
        if self.unaligned_norm == 0.0 {
            0.0
        } else {
            self.residual_norm / self.unaligned_norm
        }
    }
}

fn bounding_box(domain: &Region) -> Result<(V3, V3)> {
    match domain {
        Region::Ball { center, radius } => Ok((center - V3::repeat(*radius), center + V3::repeat(*radius))),
        Region::Annulus { center, r_out, .. } => Ok((center - V3::repeat(*r_out), center + V3::repeat(*r_out))),
        Region::SignedDistance { center, bound, .. } => Ok((center - V3::repeat(*bound), center + V3::repeat(*bound))),
        Region::HalfSpace { .. } => Err(Error::ConfigInvalid("alignment domain must be bounded".into())),
    }
}

/// Finds an inner solution 𝔲 with A⁽⁰⁾[𝔳 + 𝔲] ≈ 0 on `domain` by the
/// iteration u ← u − A⁽⁰⁾[𝔳 + 𝔲]/𝔰 on a grid padded by one kernel range.
pub fn solve_alignment(v: &Jet, domain: &Region, k: &RadialKernel, spec: &QuadratureSpec) -> Result<AlignmentSolution> {
    solve_alignment_with(v, domain, k, spec, &AlignmentOptions::default())
}

pub fn solve_alignment_with(
    v: &Jet,
    domain: &Region,
    k: &RadialKernel,
    spec: &QuadratureSpec,
    opts: &AlignmentOptions,
) -> Result<AlignmentSolution> {
    let s = k.moments()?.s;
    let (lo, hi) = bounding_box(domain)?;
    let pad = k.support_radius();
    let h = opts.grid_spacing * k.delta;
    let lo = lo - V3::repeat(pad);
    let hi = hi + V3::repeat(pad);
    let n = [0, 1, 2].map(|d| (((hi[d] - lo[d]) / h).ceil() as usize + 1).max(4));
    let mut field = GridField { origin: lo, spacing: h, n, values: vec![] };
    let points = field.points();
    let rule = BallRule::from_spec(spec);
    let inside: Vec<bool> = points.iter().map(|p| domain.contains(p)).collect();

    // A⁽⁰⁾ is linear in the jet: A⁽⁰⁾[𝔳] is computed once.
    let a0v: Vec<V3> = points.iter().map(|p| alignment_value(v, 0, p, k, &rule, opts)).collect::<Result<_>>()?;
    let unaligned_norm = max_inside(&a0v, &inside);
    field.values = a0v.iter().map(|a| -a / s).collect();
    let mut field = Arc::new(field);
    let mut updates = Vec::new();
    let mut iterations = 1;
    let mut residual: Vec<V3>;
    loop {
        let jet = field.inner_jet();
        let a0u: Vec<V3> = points.iter().map(|p| alignment_value(&jet, 0, p, k, &rule, opts)).collect::<Result<_>>()?;
        residual = a0v.iter().zip(&a0u).map(|(a, b)| a + b).collect();
        if iterations >= opts.max_iter {
            break;
        }
        let update: Vec<V3> = residual.iter().map(|r| -r / s).collect();
        let un = max_inside(&update, &inside);
        let fnorm = max_inside(&field.values, &inside);
        updates.push(un);
        if !un.is_finite() || (updates.len() > 1 && un > 2.0 * updates[updates.len() - 2]) {
            return Err(Error::IterationDiverged { step: iterations, update: un });
        }
        let mut next = (*field).clone();
        for (val, d) in next.values.iter_mut().zip(&update) {
            *val += d;
        }
        field = Arc::new(next);
        iterations += 1;
        if un <= opts.update_tol * fnorm {
            let jet = field.inner_jet();
            let a0u: Vec<V3> = points.iter().map(|p| alignment_value(&jet, 0, p, k, &rule, opts)).collect::<Result<_>>()?;
            residual = a0v.iter().zip(&a0u).map(|(a, b)| a + b).collect();
            break;
        }
    }
    Ok(AlignmentSolution { field, iterations, unaligned_norm, residual_norm: max_inside(&residual, &inside), updates })
}

fn max_inside(v: &[V3], inside: &[bool]) -> f64 {
    v.iter().zip(inside).filter(|(_, &i)| i).fold(0.0, |m, (a, _)| m.max(a.norm()))
}

/// A one-parameter deformation family τ ↦ (f_τ, F_τ).
pub type DeformationFamily = Arc<dyn Fn(f64) -> Deformation + Send + Sync>;

/// The jet (ḟ/f, Ḟ) ∘ F_τ⁻¹ tangent to a deformation family at τ.
pub fn family_jet(family: &DeformationFamily, tau: f64, dtau: f64) -> Jet {
    let fam = family.clone();
    let fam2 = family.clone();
    let u: VectorField = Arc::new(move |x: &V3| {
        let d0 = fam(tau);
        let x0 = d0.invert(x).unwrap_or(*x);
        fd::derivative(|t| fam(tau + t).apply(&x0), dtau)
    });
    let a: ScalarField = Arc::new(move |x: &V3| {
        let d0 = fam2(tau);
        let x0 = d0.invert(x).unwrap_or(*x);
        fd::derivative(|t| fam2(tau + t).weight(&x0), dtau) / d0.weight(&x0)
    });
    Jet::generic(a, u)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeConditionSample {
    pub tau: f64,
    pub point: [f64; 3],
    pub a_hat: f64,
    pub div_a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeConditionReport {
    pub samples: Vec<VolumeConditionSample>,
    pub min_a_hat: f64,
    pub min_div_a: f64,
    pub satisfied: bool,
    /// Fraction of samples where â and div A agree in sign (or both vanish).
    pub sign_agreement: f64,
}

/// For each τ: aligns the tangent jet on `domain` and records the aligned
/// scalar component â = a + div u and div(A⁽⁰⁾ + A⁽¹⁾) of the aligned jet at
/// the sample points.
pub fn local_volume_condition(
    family: &DeformationFamily,
    taus: &[f64],
    domain: &Region,
    samples: &[V3],
    k: &RadialKernel,
    _m: &Measure,
    spec: &QuadratureSpec,
) -> Result<VolumeConditionReport> {
    let opts = AlignmentOptions::default();
    let rule = BallRule::from_spec(spec);
    let mut out = Vec::new();
    for &tau in taus {
        let v = family_jet(family, tau, 1e-4);
        let sol = solve_alignment_with(&v, domain, k, spec, &opts)?;
        let aligned = v.clone().plus(sol.jet());
        for p in samples {
            let a_hat = aligned.scalar(p);
            let mut div_a = 0.0;
            for order in 0..2 {
                div_a += alignment_divergence(&aligned, order, p, k, &rule, &opts)?;
            }
            out.push(VolumeConditionSample { tau, point: [p.x, p.y, p.z], a_hat, div_a });
        }
    }
    let min_a_hat = out.iter().map(|s| s.a_hat).fold(f64::INFINITY, f64::min);
    let min_div_a = out.iter().map(|s| s.div_a).fold(f64::INFINITY, f64::min);
    let scale = out.iter().fold(0.0f64, |m, s| m.max(s.a_hat.abs())).max(1e-300);
    let agree = out
        .iter()
        .filter(|s| s.a_hat.abs() <= 1e-9 * scale || s.a_hat.signum() == s.div_a.signum())
        .count();
    Ok(VolumeConditionReport {
        sign_agreement: agree as f64 / out.len().max(1) as f64,
        satisfied: min_a_hat >= -1e-9 * scale,
        min_a_hat,
        min_div_a,
        samples: out,
    })
}
