//! Ultrastatic perturbations g = δ + h: the volume-condition divergence, the
//! A⁽¹⁾ closed form, the Brown–York flux identity and synthetic scalar curvature.
//!
//! Built-in metrics are matrix-valued polynomials multiplied by a smooth
//! plateau envelope (1 inside `flat`, 0 outside `outer`). The envelope keeps
//! the line integrals finite; closed-form comparisons are only made at points
//! well inside the plateau.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::alignment::{alignment_divergence, alignment_value, AlignmentOptions};
use crate::error::{Error, Result};
use crate::geometry::{SurfaceNode, SurfaceQuadrature, V3};
use crate::jets::{Jet, LineConfig, LineMethod, MetricField};
use crate::kernel::RadialKernel;
use crate::quadrature::{gauss_legendre, BallRule, QuadratureSpec};

/// Sparse polynomial in (x, y, z): exponent triple → coefficient.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub BTreeMap<[u32; 3], f64>);

impl Poly {
    pub fn constant(c: f64) -> Poly {
        Poly::monomial(c, [0, 0, 0])
    }

    pub fn monomial(c: f64, p: [u32; 3]) -> Poly {
        let mut m = BTreeMap::new();
        if c != 0.0 {
            m.insert(p, c);
        }
        Poly(m)
    }

    /// The coordinate x_d.
    pub fn coord(d: usize) -> Poly {
        let mut p = [0; 3];
        p[d] = 1;
        Poly::monomial(1.0, p)
    }

    pub fn r2() -> Poly {
        (0..3).fold(Poly::default(), |acc, d| acc.add(&Poly::coord(d).mul(&Poly::coord(d))))
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut m = self.0.clone();
        for (p, c) in &o.0 {
            *m.entry(*p).or_insert(0.0) += c;
        }
        m.retain(|_, c| *c != 0.0);
        Poly(m)
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::default();
        }
        Poly(self.0.iter().map(|(p, c)| (*p, c * s)).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut m: BTreeMap<[u32; 3], f64> = BTreeMap::new();
        for (p, c) in &self.0 {
            for (q, d) in &o.0 {
                *m.entry([p[0] + q[0], p[1] + q[1], p[2] + q[2]]).or_insert(0.0) += c * d;
            }
        }
        m.retain(|_, c| *c != 0.0);
        Poly(m)
    }

    pub fn diff(&self, d: usize) -> Poly {
        let mut m = BTreeMap::new();
        for (p, c) in &self.0 {
            if p[d] > 0 {
                let mut q = *p;
                q[d] -= 1;
                *m.entry(q).or_insert(0.0) += c * p[d] as f64;
            }
        }
        Poly(m)
    }

    pub fn degree(&self) -> u32 {
        self.0.keys().map(|p| p[0] + p[1] + p[2]).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &V3) -> f64 {
        self.0.iter().map(|(p, c)| c * x.x.powi(p[0] as i32) * x.y.powi(p[1] as i32) * x.z.powi(p[2] as i32)).sum()
    }
}

/// Smooth radial plateau: 1 for |x| ≤ flat, 0 for |x| ≥ outer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub flat: f64,
    pub outer: f64,
}

impl Envelope {
    pub fn eval(&self, x: &V3) -> f64 {
        let r = x.norm();
        if r <= self.flat {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            let t = (self.outer - r) / (self.outer - self.flat);
            let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
            f(t) / (f(t) + f(1.0 - t))
        }
    }
}

/// h_αβ = E(x)·P_αβ(x) with polynomial entries P.
#[derive(Debug, Clone)]
pub struct PolynomialMetric {
    pub name: String,
    /// Upper triangle (α ≤ β) of the symmetric entry table.
    pub entries: Vec<((usize, usize), Poly)>,
    pub envelope: Envelope,
    /// Declared variation length ℓ_macro.
    pub ell_macro: f64,
    compiled: Vec<(usize, usize, f64, [usize; 3])>,
    max_power: usize,
}

impl PolynomialMetric {
    pub fn new(name: &str, table: [[Poly; 3]; 3], envelope: Envelope, ell_macro: f64) -> Result<PolynomialMetric> {
        for a in 0..3 {
            for b in 0..a {
                if table[a][b] != table[b][a] {
                    return Err(Error::ConfigInvalid(format!("metric {name}: entries ({a},{b}) and ({b},{a}) differ")));
                }
            }
        }
        if !(envelope.flat > 0.0 && envelope.outer > envelope.flat) {
            return Err(Error::ConfigInvalid(format!("metric {name}: envelope needs 0 < flat < outer")));
        }
        if !(ell_macro > 0.0) {
            return Err(Error::ConfigInvalid(format!("metric {name}: ell_macro must be positive")));
        }
        let mut entries = vec![];
        for a in 0..3 {
            for b in a..3 {
                if !table[a][b].0.is_empty() {
                    entries.push(((a, b), table[a][b].clone()));
                }
            }
        }
        let compiled: Vec<_> = entries
            .iter()
            .flat_map(|((a, b), p)| p.0.iter().map(move |(e, c)| (*a, *b, *c, e.map(|v| v as usize))))
            .collect();
        let max_power = compiled.iter().flat_map(|t| t.3).max().unwrap_or(0);
        if max_power > 7 {
            return Err(Error::ConfigInvalid(format!("metric {name}: powers above 7 are not supported")));
        }
        Ok(PolynomialMetric { name: name.to_string(), entries, envelope, ell_macro, compiled, max_power })
    }

    fn map(&self, f: impl Fn(&Poly) -> Poly) -> Vec<((usize, usize), Poly)> {
        self.entries.iter().map(|(ij, p)| (*ij, f(p))).collect()
    }

    fn assemble(entries: &[((usize, usize), Poly)], x: &V3) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for ((a, b), p) in entries {
            let v = p.eval(x);
            m[(*a, *b)] = v;
            m[(*b, *a)] = v;
        }
        m
    }

    /// The polynomial part, without envelope.
    pub fn poly(&self, x: &V3) -> Matrix3<f64> {
        let mut pw = [[1.0f64; 3]; 8];
        for i in 1..=self.max_power {
            for d in 0..3 {
                pw[i][d] = pw[i - 1][d] * x[d];
            }
        }
        let mut m = Matrix3::zeros();
        for &(a, b, c, e) in &self.compiled {
            m[(a, b)] += c * pw[e[0]][0] * pw[e[1]][1] * pw[e[2]][2];
        }
        for a in 0..3 {
            for b in 0..a {
                m[(a, b)] = m[(b, a)];
            }
        }
        m
    }

    /// ∂_γ P for γ = 0..3.
    pub fn grad(&self, x: &V3) -> [Matrix3<f64>; 3] {
        [0, 1, 2].map(|g| Self::assemble(&self.map(|p| p.diff(g)), x))
    }

    /// ∂_γ∂_ε P.
    pub fn hess(&self, x: &V3) -> [[Matrix3<f64>; 3]; 3] {
        [0, 1, 2].map(|g| [0, 1, 2].map(|e| Self::assemble(&self.map(|p| p.diff(g).diff(e)), x)))
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(|(_, p)| p.degree()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// ∂_β h_αβ.
    pub fn div(&self, x: &V3) -> V3 {
        let g = self.grad(x);
        V3::from_fn(|a, _| (0..3).map(|b| g[b][(a, b)]).sum::<f64>())
    }

    /// ∂_α h with h = h_ββ.
    pub fn grad_trace(&self, x: &V3) -> V3 {
        let g = self.grad(x);
        V3::from_fn(|a, _| g[a].trace())
    }

    /// ∂_αβ h_αβ.
    pub fn div_div(&self, x: &V3) -> f64 {
        let h = self.hess(x);
        (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| h[a][b][(a, b)]).sum()
    }

    /// Δh.
    pub fn lap_trace(&self, x: &V3) -> f64 {
        let h = self.hess(x);
        (0..3).map(|g| h[g][g].trace()).sum()
    }

    fn check_inside(&self, x: &V3, margin: f64) -> Result<()> {
        if x.norm() + margin > self.envelope.flat {
            return Err(Error::ConfigInvalid(format!(
                "point at |x| = {:.3} is within {margin:.3} of the metric envelope (flat radius {})",
                x.norm(),
                self.envelope.flat
            )));
        }
        Ok(())
    }

    fn envelope_for(reach: f64, ell: f64) -> Envelope {
        let flat = reach;
        Envelope { flat, outer: flat + ell.max(0.5 * flat) }
    }

    fn table(f: impl Fn(usize, usize) -> Poly) -> [[Poly; 3]; 3] {
        [0, 1, 2].map(|a| [0, 1, 2].map(|b| f(a, b)))
    }

    /// Constant h_αβ = c_αβ.
    pub fn constant(c: Matrix3<f64>, reach: f64, ell: f64) -> Result<Self> {
        let c = (c + c.transpose()) * 0.5;
        Self::new("constant", Self::table(|a, b| Poly::constant(c[(a, b)])), Self::envelope_for(reach, ell), ell)
    }

    /// h_αβ = Σ_γ C_γ,αβ x_γ.
    pub fn linear(c: [Matrix3<f64>; 3], reach: f64, ell: f64) -> Result<Self> {
        let t = Self::table(|a, b| {
            (0..3).fold(Poly::default(), |acc, g| acc.add(&Poly::coord(g).scale(0.5 * (c[g][(a, b)] + c[g][(b, a)]))))
        });
        Self::new("linear", t, Self::envelope_for(reach, ell), ell)
    }

    /// h_αβ = φ δ_αβ with φ = a·x.
    pub fn pure_trace_linear(a: V3, reach: f64, ell: f64) -> Result<Self> {
        let phi = (0..3).fold(Poly::default(), |acc, g| acc.add(&Poly::coord(g).scale(a[g])));
        Self::new("pure_trace_linear", Self::table(|i, j| if i == j { phi.clone() } else { Poly::default() }), Self::envelope_for(reach, ell), ell)
    }

    /// h_αβ = ε |x|² δ_αβ.
    pub fn conformal_quadratic(eps: f64, reach: f64, ell: f64) -> Result<Self> {
        let q = Poly::r2().scale(eps);
        Self::new("conformal_quadratic", Self::table(|i, j| if i == j { q.clone() } else { Poly::default() }), Self::envelope_for(reach, ell), ell)
    }

    /// h₁₁ = −h₂₂ = ε x₃.
    pub fn traceless_linear(eps: f64, reach: f64, ell: f64) -> Result<Self> {
        let z = Poly::coord(2).scale(eps);
        let t = Self::table(|i, j| match (i, j) {
            (0, 0) => z.clone(),
            (1, 1) => z.scale(-1.0),
            _ => Poly::default(),
        });
        Self::new("traceless_linear", t, Self::envelope_for(reach, ell), ell)
    }

    /// h_αβ = ε x_α x_β.
    pub fn outer_quadratic(eps: f64, reach: f64, ell: f64) -> Result<Self> {
        Self::new("outer_quadratic", Self::table(|i, j| Poly::coord(i).mul(&Poly::coord(j)).scale(eps)), Self::envelope_for(reach, ell), ell)
    }

    /// h_αβ = ε (x_α x_β − |x|² δ_αβ / 3).
    pub fn traceless_quadratic(eps: f64, reach: f64, ell: f64) -> Result<Self> {
        let r2 = Poly::r2().scale(-eps / 3.0);
        let t = Self::table(|i, j| {
            let p = Poly::coord(i).mul(&Poly::coord(j)).scale(eps);
            if i == j {
                p.add(&r2)
            } else {
                p
            }
        });
        Self::new("traceless_quadratic", t, Self::envelope_for(reach, ell), ell)
    }

    /// Boundary-adapted perturbation of the sphere |x| = R: a traceless
    /// radial part (ε_s/2R³)(|x|² − R²)(|x|² δ − 3 x xᵀ), vanishing on the
    /// sphere with radial derivative of the tangential trace 2ε_s, plus a
    /// normal–tangential part (ε_f/R³)(x tᵀ + t xᵀ) with the tangential field
    /// t = |x|² ẑ − x₃ x.
    pub fn brown_york(eps_s: f64, eps_f: f64, radius: f64, reach: f64) -> Result<Self> {
        let r2 = Poly::r2();
        let shell = r2.add(&Poly::constant(-radius * radius)).scale(eps_s / (2.0 * radius.powi(3)));
        let xz = |d: usize| Poly::coord(d).mul(&Poly::coord(2)).scale(-1.0);
        let t = [xz(0), xz(1), Poly::coord(0).mul(&Poly::coord(0)).add(&Poly::coord(1).mul(&Poly::coord(1)))];
        let pref = Poly::constant(eps_f / radius.powi(3));
        let table = Self::table(|a, b| {
            let xa = Poly::coord(a);
            let xb = Poly::coord(b);
            let delta = if a == b { r2.clone() } else { Poly::default() };
            let radial = shell.mul(&delta.add(&xa.mul(&xb).scale(-3.0)));
            let mixed = pref.mul(&xa.mul(&t[b]).add(&t[a].mul(&xb)));
            radial.add(&mixed)
        });
        Self::new("brown_york", table, Self::envelope_for(reach, radius), radius)
    }
}

impl MetricField for PolynomialMetric {
    fn h(&self, x: &V3) -> Matrix3<f64> {
        let e = self.envelope.eval(x);
        if e == 0.0 {
            return Matrix3::zeros();
        }
        self.poly(x) * e
    }
    fn support_radius(&self) -> Option<f64> {
        Some(self.envelope.outer)
    }
    fn feature_length(&self) -> f64 {
        self.ell_macro.min(0.5 * (self.envelope.outer - self.envelope.flat))
    }
    fn label(&self) -> String {
        self.name.clone()
    }
}

/// A metric given by a closure (for smooth non-polynomial test fields).
#[derive(Clone)]
pub struct FieldMetric {
    pub field: Arc<dyn Fn(&V3) -> Matrix3<f64> + Send + Sync>,
    pub feature: f64,
    pub support: Option<f64>,
    pub name: String,
}

impl FieldMetric {
    /// h = A exp(−|x − c|²/2w²), truncated at |x − c| = 8w.
    pub fn gaussian(amplitude: Matrix3<f64>, center: V3, width: f64) -> FieldMetric {
        let a = (amplitude + amplitude.transpose()) * 0.5;
        FieldMetric {
            field: Arc::new(move |x: &V3| {
                let q = (x - center).norm_squared() / (width * width);
                if q > 64.0 {
                    Matrix3::zeros()
                } else {
                    a * (-0.5 * q).exp()
                }
            }),
            feature: width,
            support: Some(center.norm() + 8.0 * width),
            name: "gaussian".into(),
        }
    }
}

impl MetricField for FieldMetric {
    fn h(&self, x: &V3) -> Matrix3<f64> {
        (self.field)(x)
    }
    fn support_radius(&self) -> Option<f64> {
        self.support
    }
    fn feature_length(&self) -> f64 {
        self.feature
    }
    fn label(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone)]
pub struct UltrastaticModel {
    pub metric: Arc<PolynomialMetric>,
    pub line_method: LineMethod,
}

impl UltrastaticModel {
    pub fn new(metric: PolynomialMetric) -> Self {
        UltrastaticModel { metric: Arc::new(metric), line_method: LineMethod::ClosedForm }
    }

    pub fn jet(&self, spec: &QuadratureSpec) -> Jet {
        let m: Arc<dyn MetricField> = self.metric.clone();
        Jet::ultrastatic(m, LineConfig::from_spec(spec).with_method(self.line_method))
    }

    /// max |∂h|·ℓ_macro / max |h| over the sample points (about 1 when ℓ_macro
    /// is declared consistently).
    pub fn ell_macro_consistency(&self, samples: &[V3]) -> f64 {
        let mut hmax = 0.0f64;
        let mut dmax = 0.0f64;
        for x in samples {
            hmax = hmax.max(self.metric.poly(x).amax());
            for g in self.metric.grad(x) {
                dmax = dmax.max(g.amax());
            }
        }
        if hmax == 0.0 {
            return 1.0;
        }
        dmax * self.metric.ell_macro / hmax
    }
}

/// A computed scalar next to its closed-form prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub computed: f64,
    pub closed_form: f64,
    pub error_estimate: f64,
    /// Scale of the neglected higher-order terms.
    pub band: f64,
}

impl Comparison {
    pub fn ratio(&self) -> f64 {
        self.computed / self.closed_form
    }

    pub fn within(&self, rel: f64) -> bool {
        (self.computed - self.closed_form).abs() <= rel * self.closed_form.abs() + self.band + self.error_estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorComparison {
    pub computed: [f64; 3],
    pub closed_form: [f64; 3],
    pub error_estimate: f64,
}

impl VectorComparison {
    /// |computed − closed_form| / |closed_form|.
    pub fn relative_deviation(&self) -> f64 {
        let c = V3::from(self.computed);
        let e = V3::from(self.closed_form);
        if e.norm() == 0.0 {
            return c.norm();
        }
        (c - e).norm() / e.norm()
    }
}

fn d2s2(k: &RadialKernel) -> Result<f64> {
    Ok(k.delta * k.delta * k.moments()?.s2)
}

/// div A⁽⁰⁾ at ζ by finite differences, against (𝔰/2) h(ζ).
pub fn volume_condition_divergence(model: &UltrastaticModel, zeta: &V3, k: &RadialKernel, spec: &QuadratureSpec) -> Result<Comparison> {
    model.metric.check_inside(zeta, 2.0 * k.support_radius())?;
    let mom = k.moments()?;
    let v = model.jet(spec);
    let opts = AlignmentOptions::default();
    let fine = alignment_divergence(&v, 0, zeta, k, &BallRule::from_spec(spec), &opts)?;
    let coarse = alignment_divergence(&v, 0, zeta, k, &BallRule::from_spec(&spec.scaled(2.0 / 3.0)), &opts)?;
    let hess_scale = model.metric.hess(zeta).iter().flatten().fold(0.0f64, |m, h| m.max(h.amax()));
    Ok(Comparison {
        computed: fine,
        closed_form: 0.5 * mom.s * model.metric.poly(zeta).trace(),
        error_estimate: (fine - coarse).abs(),
        band: d2s2(k)? * hess_scale,
    })
}

/// (1/144) δ²𝔰₂ (2 ∂_β h_αβ + ∂_α h) at ζ.
pub fn a1_closed_form(metric: &PolynomialMetric, zeta: &V3, k: &RadialKernel) -> Result<V3> {
    Ok((metric.div(zeta) * 2.0 + metric.grad_trace(zeta)) * (d2s2(k)? / 144.0))
}

/// A⁽¹⁾(ζ) with its closed-form comparison value.
pub fn a1_ultrastatic(model: &UltrastaticModel, zeta: &V3, k: &RadialKernel, spec: &QuadratureSpec) -> Result<VectorComparison> {
    model.metric.check_inside(zeta, 2.0 * k.support_radius())?;
    let v = model.jet(spec);
    let opts = AlignmentOptions::default();
    let fine = alignment_value(&v, 1, zeta, k, &BallRule::from_spec(spec), &opts)?;
    let coarse = alignment_value(&v, 1, zeta, k, &BallRule::from_spec(&spec.scaled(2.0 / 3.0)), &opts)?;
    let cf = a1_closed_form(&model.metric, zeta, k)?;
    Ok(VectorComparison { computed: fine.into(), closed_form: cf.into(), error_estimate: (fine - coarse).amax() })
}

/// Sphere quadrature for integrands invariant under rotations about the z
/// axis: Gauss–Legendre in cos θ at a single azimuth, weighted by 2π.
pub fn axisymmetric_sphere(radius: f64, n_theta: usize) -> SurfaceQuadrature {
    let gl = gauss_legendre(n_theta);
    let nodes = gl
        .map(-1.0, 1.0)
        .map(|(c, w)| {
            let s = (1.0 - c * c).max(0.0).sqrt();
            let normal = V3::new(s, 0.0, c);
            SurfaceNode { point: normal * radius, normal, weight: w * 2.0 * std::f64::consts::PI * radius * radius }
        })
        .collect();
    SurfaceQuadrature { nodes, total_area: 4.0 * std::f64::consts::PI * radius * radius }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownYorkFlux {
    /// ∮ A⁽¹⁾·ν.
    pub flux: f64,
    /// ∮ tr δk.
    pub mean_curvature_integral: f64,
    /// −(1/36) δ²𝔰₂ ∮ tr δk.
    pub predicted: f64,
    /// ∮ (∇_i δg_iα) ν_α, which vanishes by the divergence theorem.
    pub gauss_term: f64,
    /// Scale of the integrands of `gauss_term` (∮ |·|).
    pub gauss_scale: f64,
    pub error_estimate: f64,
}

impl BrownYorkFlux {
    pub fn ratio(&self) -> f64 {
        self.flux / self.predicted
    }
}

fn tangents(nu: &V3) -> (V3, V3) {
    let a = if nu.x.abs() < 0.9 { V3::x() } else { V3::y() };
    let e1 = (a - nu * nu.dot(&a)).normalize();
    (e1, nu.cross(&e1))
}

/// Both sides of the flux identity over a sphere quadrature. The metric must
/// vanish tangentially on the sphere and be trace-free there.
pub fn brown_york_flux(model: &UltrastaticModel, sphere: &SurfaceQuadrature, k: &RadialKernel, spec: &QuadratureSpec) -> Result<BrownYorkFlux> {
    let metric = &model.metric;
    let v = model.jet(spec);
    let opts = AlignmentOptions::default();
    let fine_rule = BallRule::from_spec(spec);
    let coarse_rule = BallRule::from_spec(&spec.scaled(2.0 / 3.0));
    let tol = 1e-9;
    let mut out = BrownYorkFlux { flux: 0.0, mean_curvature_integral: 0.0, predicted: 0.0, gauss_term: 0.0, gauss_scale: 0.0, error_estimate: 0.0 };
    let mut coarse_flux = 0.0;
    for n in &sphere.nodes {
        metric.check_inside(&n.point, 2.0 * k.support_radius())?;
        let nu = n.normal;
        let (e1, e2) = tangents(&nu);
        let h = metric.poly(&n.point);
        let scale = metric.grad(&n.point).iter().fold(0.0f64, |m, g| m.max(g.amax())) * n.point.norm() + h.amax();
        let tangential = [(e1, e1), (e1, e2), (e2, e2)].iter().fold(0.0f64, |m, (a, b)| m.max((h * b).dot(a).abs()));
        if tangential > tol * scale.max(1e-300) || h.trace().abs() > tol * scale.max(1e-300) {
            return Err(Error::ConstraintViolated(format!(
                "perturbation is not boundary-adapted at {:?}: tangential block {tangential:.3e}, trace {:.3e}",
                n.point,
                h.trace()
            )));
        }
        let g = metric.grad(&n.point);
        let dir = |u: &V3| g[0] * u.x + g[1] * u.y + g[2] * u.z;
        let gauss: f64 = [e1, e2].iter().map(|e| (dir(e) * nu).dot(e)).sum();
        let dn = dir(&nu);
        let dtrace: f64 = [e1, e2].iter().map(|e| (dn * e).dot(e)).sum();
        let tr_dk = -gauss + 0.5 * dtrace;
        out.mean_curvature_integral += n.weight * tr_dk;
        out.gauss_term += n.weight * gauss;
        out.gauss_scale += n.weight * gauss.abs();
        if !metric.is_zero() {
            out.flux += n.weight * alignment_value(&v, 1, &n.point, k, &fine_rule, &opts)?.dot(&nu);
            coarse_flux += n.weight * alignment_value(&v, 1, &n.point, k, &coarse_rule, &opts)?.dot(&nu);
        }
    }
    out.predicted = -d2s2(k)? / 36.0 * out.mean_curvature_integral;
    out.error_estimate = (out.flux - coarse_flux).abs();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScalar {
    /// div A⁽¹⁾ by finite differences.
    pub value: f64,
    pub error_estimate: f64,
    /// (1/3)δ²𝔰₂ ∂_αβh_αβ + (1/6)δ²𝔰₂ Δh.
    pub scalrel: f64,
    /// (1/3)δ²𝔰₂ (∂_αβh_αβ − Δh).
    pub third_scal_g: f64,
    /// Divergence of the A⁽¹⁾ closed form: (1/144)δ²𝔰₂ (2∂_αβh_αβ + Δh).
    pub a1_closed_divergence: f64,
}

/// The aligned integrand div A⁽¹⁾(x) with its comparison values.
pub fn synthetic_scalar(model: &UltrastaticModel, x: &V3, k: &RadialKernel, spec: &QuadratureSpec) -> Result<SyntheticScalar> {
    model.metric.check_inside(x, 2.0 * k.support_radius())?;
    let v = model.jet(spec);
    let opts = AlignmentOptions::default();
    let fine = alignment_divergence(&v, 1, x, k, &BallRule::from_spec(spec), &opts)?;
    let coarse = alignment_divergence(&v, 1, x, k, &BallRule::from_spec(&spec.scaled(2.0 / 3.0)), &opts)?;
    let n = d2s2(k)?;
    let dd = model.metric.div_div(x);
    let lap = model.metric.lap_trace(x);
    Ok(SyntheticScalar {
        value: fine,
        error_estimate: (fine - coarse).abs(),
        scalrel: n * (dd / 3.0 + lap / 6.0),
        third_scal_g: n / 3.0 * (dd - lap),
        a1_closed_divergence: n / 144.0 * (2.0 * dd + lap),
    })
}

/// Relative deviation of (∇₁ + ∇₂)ℒ(x, y) from
/// ½(h(x) + h(y))ℒ + ½ r ℒ' ∫₀¹ ξ̂ᵀ h(x + τξ) ξ̂ dτ.
pub fn d12_consistency(model: &UltrastaticModel, x: &V3, y: &V3, k: &RadialKernel, spec: &QuadratureSpec) -> Result<f64> {
    let v = model.jet(spec);
    let lhs = v.nabla1(k, x, y)? + v.nabla2(k, x, y)?;
    let m = &model.metric;
    let xi = y - x;
    let r = xi.norm();
    let l = k.profile(r);
    let mut rhs = 0.5 * (m.trace(x) + m.trace(y)) * l;
    if r > 0.0 {
        let e = xi / r;
        let gl = gauss_legendre(32);
        let avg: f64 = gl.map(0.0, 1.0).map(|(t, w)| w * (m.h(&(x + xi * t)) * e).dot(&e)).sum();
        rhs += 0.5 * r * k.dprofile(r) * avg;
    }
    let scale = lhs.abs().max(rhs.abs());
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
}
