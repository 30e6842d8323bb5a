//! Regions, sphere quadratures, weighted measures and (f, F) deformations.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, QuadratureSpec};

pub type V3 = Vector3<f64>;
pub type ScalarField = Arc<dyn Fn(&V3) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&V3) -> V3 + Send + Sync>;

#[derive(Clone)]
pub enum Region {
    Ball { center: V3, radius: f64 },
    Annulus { center: V3, r_in: f64, r_out: f64 },
    /// Points with x·normal < offset.
    HalfSpace { normal: V3, offset: f64 },
    /// Points with sdf(x) < 0. Must be star-shaped about `center` and contained
    /// in the ball of radius `bound` around it.
    SignedDistance { sdf: ScalarField, center: V3, bound: f64 },
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Region {
    pub fn ball(center: V3, radius: f64) -> Region {
        Region::Ball { center, radius }
    }

    pub fn label(&self) -> String {
        match self {
            Region::Ball { center, radius } => format!("ball(c=[{:.4},{:.4},{:.4}], r={radius})", center.x, center.y, center.z),
            Region::Annulus { r_in, r_out, .. } => format!("annulus({r_in}, {r_out})"),
            Region::HalfSpace { normal, offset } => {
                format!("half-space(n=[{:.3},{:.3},{:.3}], {offset})", normal.x, normal.y, normal.z)
            }
            Region::SignedDistance { bound, .. } => format!("sdf(bound={bound})"),
        }
    }

    pub fn contains(&self, x: &V3) -> bool {
        match self {
            Region::Ball { center, radius } => (x - center).norm() < *radius,
            Region::Annulus { center, r_in, r_out } => {
                let r = (x - center).norm();
                r >= *r_in && r < *r_out
            }
            Region::HalfSpace { normal, offset } => x.dot(normal) < *offset,
            Region::SignedDistance { sdf, .. } => sdf(x) < 0.0,
        }
    }

    /// Apply x ↦ Rx + t to the region.
    pub fn moved(&self, rot: &Matrix3<f64>, t: &V3) -> Region {
        match self {
            Region::Ball { center, radius } => Region::Ball { center: rot * center + t, radius: *radius },
            Region::Annulus { center, r_in, r_out } => Region::Annulus { center: rot * center + t, r_in: *r_in, r_out: *r_out },
            Region::HalfSpace { normal, offset } => {
                let n = rot * normal;
                Region::HalfSpace { normal: n, offset: offset + n.dot(t) }
            }
            Region::SignedDistance { sdf, center, bound } => {
                let sdf = sdf.clone();
                let rot_t = rot.transpose();
                let t = *t;
                Region::SignedDistance {
                    sdf: Arc::new(move |x: &V3| sdf(&(rot_t * (x - t)))),
                    center: rot * center + t,
                    bound: *bound,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SurfaceNode {
    pub point: V3,
    pub normal: V3,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceQuadrature {
    pub nodes: Vec<SurfaceNode>,
    pub total_area: f64,
}

impl SurfaceQuadrature {
    pub fn flux<F: Fn(&V3) -> V3>(&self, u: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * u(&n.point).dot(&n.normal)).sum()
    }

    pub fn integrate<F: Fn(&SurfaceNode) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * g(n)).sum()
    }
}

/// Product Gauss rule on a sphere: `order` Gauss–Legendre nodes in cos θ and
/// 2·order equispaced azimuths. Exact for spherical harmonics of degree < 2·order.
pub fn sphere_quadrature(center: &V3, radius: f64, order: usize) -> Result<SurfaceQuadrature> {
    if order < 6 {
        return Err(Error::UnsupportedOrder(order));
    }
    let gl = gauss_legendre(order);
    let n_phi = 2 * order;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(order * n_phi);
    for (c, wc) in gl.map(-1.0, 1.0) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let normal = V3::new(s * phi.cos(), s * phi.sin(), c);
            nodes.push(SurfaceNode { point: center + normal * radius, normal, weight: wc * dphi * radius * radius });
        }
    }
    let total_area = nodes.iter().map(|n| n.weight).sum();
    Ok(SurfaceQuadrature { nodes, total_area })
}

/// A measure h·d³x on ℝ³.
#[derive(Clone)]
pub struct Measure {
    pub density: ScalarField,
    /// Densities equal to 1 skip evaluation.
    pub uniform: bool,
    /// Radius beyond which integrals over unbounded regions are truncated.
    pub support_bound: Option<f64>,
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Measure").field("uniform", &self.uniform).field("support_bound", &self.support_bound).finish()
    }
}

impl Measure {
    pub fn vacuum() -> Measure {
        Measure { density: Arc::new(|_| 1.0), uniform: true, support_bound: None }
    }

    pub fn with_density(h: ScalarField) -> Measure {
        Measure { density: h, uniform: false, support_bound: None }
    }

    pub fn h(&self, x: &V3) -> f64 {
        if self.uniform {
            1.0
        } else {
            (self.density)(x)
        }
    }
}

/// μ̃ = F_*(f μ).
#[derive(Clone)]
pub struct Deformation {
    pub f: ScalarField,
    pub map: VectorField,
    pub tau: f64,
    pub label: String,
}

impl fmt::Debug for Deformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Deformation").field("label", &self.label).field("tau", &self.tau).finish()
    }
}

impl Deformation {
    pub fn identity() -> Deformation {
        Deformation { f: Arc::new(|_| 1.0), map: Arc::new(|x| *x), tau: 0.0, label: "identity".into() }
    }

    pub fn radial_scale(factor: f64) -> Deformation {
        Deformation { f: Arc::new(|_| 1.0), map: Arc::new(move |x| x * factor), tau: 1.0, label: format!("radial-scale({factor})") }
    }

    pub fn reweight(f: ScalarField) -> Deformation {
        Deformation { f, map: Arc::new(|x| *x), tau: 1.0, label: "reweight".into() }
    }

    pub fn translation(t: V3) -> Deformation {
        Deformation { f: Arc::new(|_| 1.0), map: Arc::new(move |x| x + t), tau: 1.0, label: "translation".into() }
    }

    /// F = id + w with f = det DF, so that F_*(f μ) has the same density as μ
    /// and only the labelling of points changes. `dw` is the Jacobian of w.
    pub fn relabelling(w: VectorField, dw: Arc<dyn Fn(&V3) -> Matrix3<f64> + Send + Sync>, label: &str) -> Deformation {
        let map: VectorField = Arc::new(move |x| x + w(x));
        let f: ScalarField = Arc::new(move |x| (Matrix3::identity() + dw(x)).determinant());
        Deformation { f, map, tau: 1.0, label: label.into() }
    }

    pub fn apply(&self, x: &V3) -> V3 {
        (self.map)(x)
    }

    pub fn weight(&self, x: &V3) -> f64 {
        (self.f)(x)
    }

    pub fn jacobian(&self, x: &V3) -> Matrix3<f64> {
        jacobian(&*self.map, x, 1e-5 * (1.0 + x.norm()))
    }

    /// Solve F(x) = y by Newton iteration started at y.
    pub fn invert(&self, y: &V3) -> Result<V3> {
        let mut x = *y;
        for _ in 0..50 {
            let r = self.apply(&x) - y;
            if r.norm() <= 1e-13 * (1.0 + y.norm()) {
                return Ok(x);
            }
            let j = self.jacobian(&x);
            let dx = j.lu().solve(&r).ok_or_else(|| Error::FdStepFailure("singular Jacobian while inverting F".into()))?;
            x -= dx;
        }
        Err(Error::NonInvertibleMap(0, 0))
    }

    /// Sampled injectivity check over a region: no two nodes may map within 1e-12.
    pub fn check_injective(&self, region: &Region, samples: usize) -> Result<()> {
        let pts = sample_points(region, samples);
        let imgs: Vec<V3> = pts.iter().map(|p| self.apply(p)).collect();
        let mut idx: Vec<usize> = (0..imgs.len()).collect();
        idx.sort_by(|&a, &b| imgs[a].x.partial_cmp(&imgs[b].x).unwrap_or(std::cmp::Ordering::Equal));
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                if imgs[j].x - imgs[i].x > 1e-12 {
                    break;
                }
                if (imgs[i] - imgs[j]).norm() < 1e-12 {
                    return Err(Error::NonInvertibleMap(i.min(j), i.max(j)));
                }
            }
        }
        Ok(())
    }
}

pub fn jacobian(map: &(dyn Fn(&V3) -> V3 + Send + Sync), x: &V3, h: f64) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        let mut e = V3::zeros();
        e[k] = h;
        let d = (map(&(x + e)) - map(&(x - e))) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

/// Deterministic lattice sample inside a bounded region.
pub fn sample_points(region: &Region, n: usize) -> Vec<V3> {
    let (c, r) = match region {
        Region::Ball { center, radius } => (*center, *radius),
        Region::Annulus { center, r_out, .. } => (*center, *r_out),
        Region::SignedDistance { center, bound, .. } => (*center, *bound),
        Region::HalfSpace { normal, offset } => (normal.normalize() * (*offset - 1.0), 1.0),
    };
    let m = ((n as f64).cbrt().ceil() as usize).max(2);
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let u = |q: usize| -1.0 + 2.0 * (q as f64 + 0.5) / m as f64;
                let p = c + V3::new(u(i), u(j), u(k)) * r;
                if region.contains(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Radial segments (in distance from `center`) covering the region along a
/// direction, plus the center used. Star-shaped regions only.
fn radial_extent(region: &Region, dir: &V3, m: &Measure) -> Result<(V3, Vec<(f64, f64)>)> {
    match region {
        Region::Ball { center, radius } => Ok((*center, vec![(0.0, *radius)])),
        Region::Annulus { center, r_in, r_out } => Ok((*center, vec![(*r_in, *r_out)])),
        Region::HalfSpace { normal, offset } => {
            let bound = m
                .support_bound
                .ok_or_else(|| Error::ConfigInvalid("half-space volume needs a measure with a support bound".into()))?;
            let n = normal.normalize();
            let off = offset / normal.norm();
            let c = dir.dot(&n);
            // points t·dir with t·c < off, t in [0, bound]
            let seg = if c > 0.0 {
                (0.0, (off / c).clamp(0.0, bound))
            } else if off > 0.0 {
                (0.0, bound)
            } else if c < 0.0 {
                ((off / c).clamp(0.0, bound), bound)
            } else {
                (0.0, 0.0)
            };
            Ok((V3::zeros(), vec![seg]))
        }
        Region::SignedDistance { sdf, center, bound } => {
            // bisection for the boundary crossing along the ray
            let inside_end = sdf(&(center + dir * *bound)) < 0.0;
            if inside_end {
                return Ok((*center, vec![(0.0, *bound)]));
            }
            let (mut a, mut b) = (0.0, *bound);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if sdf(&(center + dir * mid)) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Ok((*center, vec![(0.0, 0.5 * (a + b))]))
        }
    }
}

fn volume_at(f: &dyn Fn(&V3) -> f64, region: &Region, m: &Measure, n_r: usize, n_ang: usize) -> Result<f64> {
    let gl_r = gauss_legendre(n_r);
    let gl_c = gauss_legendre(n_ang);
    let n_phi = 2 * n_ang;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut total = 0.0;
    for (c, wc) in gl_c.map(-1.0, 1.0) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let dir = V3::new(s * phi.cos(), s * phi.sin(), c);
            let (center, segs) = radial_extent(region, &dir, m)?;
            for (a, b) in segs {
                if b <= a {
                    continue;
                }
                for (r, wr) in gl_r.map(a, b) {
                    let x = center + dir * r;
                    total += wc * dphi * wr * r * r * f(&x) * m.h(&x);
                }
            }
        }
    }
    Ok(total)
}

/// ∫_region g·h d³x by spherical product rules refined until two successive
/// resolutions agree to the spec tolerance.
pub fn integrate_region(g: &dyn Fn(&V3) -> f64, m: &Measure, region: &Region, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let tol_rel = spec.rel_tol.max(1e-14);
    let mut n = 12;
    let mut prev = volume_at(g, region, m, n, n)?;
    loop {
        let next = n * 3 / 2;
        let v = volume_at(g, region, m, next, next)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand("region integral".into()));
        }
        let err = (v - prev).abs();
        if err <= spec.abs_tol.max(tol_rel * v.abs()) {
            return Ok((v, err));
        }
        if next * next * next * 2 > spec.max_evals {
            return Err(Error::QuadratureFailure { value: v, error: err });
        }
        prev = v;
        n = next;
    }
}

/// μ(Ω).
pub fn volume(m: &Measure, region: &Region, spec: &QuadratureSpec) -> Result<f64> {
    integrate_region(&|_| 1.0, m, region, spec).map(|(v, _)| v)
}

/// (F_*(f μ))(Ω̃) = ∫_{F⁻¹(Ω̃)} f h d³x, evaluated in image coordinates as
/// ∫_{Ω̃} (f h)(F⁻¹y) / |det DF(F⁻¹y)| d³y.
pub fn pushforward_volume(m: &Measure, d: &Deformation, region: &Region, spec: &QuadratureSpec) -> Result<f64> {
    d.check_injective(region, 512)?;
    let failed = std::sync::atomic::AtomicBool::new(false);
    let g = |y: &V3| -> f64 {
        match d.invert(y) {
            Ok(x) => d.weight(&x) * m.h(&x) / (m.h(y) * d.jacobian(&x).determinant().abs()),
            Err(_) => {
                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                0.0
            }
        }
    };
    let (v, _) = integrate_region(&g, m, region, spec)?;
    if failed.load(std::sync::atomic::Ordering::Relaxed) {
        return Err(Error::NonInvertibleMap(0, 0));
    }
    Ok(v)
}

/// μ̃(F(Ω₀)) = ∫_{Ω₀} f h d³x for a region given by its preimage.
pub fn image_volume(m: &Measure, d: &Deformation, preimage: &Region, spec: &QuadratureSpec) -> Result<f64> {
    integrate_region(&|x| d.weight(x), m, preimage, spec).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_area_and_balance() {
        let q = sphere_quadrature(&V3::zeros(), 2.0, 8).unwrap();
        assert!((q.total_area - 16.0 * PI).abs() < 1e-10);
        let s: V3 = q.nodes.iter().map(|n| n.normal * n.weight).sum();
        assert!(s.norm() < 1e-10);
    }

    #[test]
    fn order_below_six_is_rejected() {
        assert!(matches!(sphere_quadrature(&V3::zeros(), 1.0, 5), Err(Error::UnsupportedOrder(5))));
    }
}
