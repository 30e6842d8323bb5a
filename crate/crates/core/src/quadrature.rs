//! Integration engines: 1D rules, adaptive Gauss–Kronrod, product cubature over
//! balls (with analytic clipping against spheres and planes), signed line
//! integrals for the ε(τ) kernels, and nested double integrals.

use nalgebra::{SVector, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Region;

pub type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdaptiveCubature,
    MonteCarlo,
    ProductGauss,
}

/// Node counts for the product rules. Every rule is also run at roughly 2/3 of
/// these counts to produce an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Resolution {
    pub radial: usize,
    pub polar: usize,
    pub azimuth: usize,
    /// Gauss–Legendre nodes per panel of the fixed line rule.
    pub line_nodes: usize,
    /// Outer radial nodes of double integrals.
    pub outer_radial: usize,
    /// Outer angular order (Gauss nodes in cos θ; twice as many in φ).
    pub outer_angular: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            radial: 32,
            polar: 40,
            azimuth: 16,
            line_nodes: 12,
            outer_radial: 24,
            outer_angular: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
    pub seed: u64,
    /// Arc length of the line truncation in units of the kernel range δ,
    /// before the `max(1, |x|/δ)` factor is applied.
    pub line_truncation: f64,
    pub line_tail_order: u32,
    pub resolution: Resolution,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            method: Method::ProductGauss,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_evals: 4_000_000,
            seed: 0,
            line_truncation: 50.0,
            line_tail_order: 2,
            resolution: Resolution::default(),
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::ConfigInvalid("rel_tol and abs_tol must be positive".into()));
        }
        if self.max_evals < 1000 {
            return Err(Error::ConfigInvalid("max_evals must be at least 1000".into()));
        }
        if self.line_tail_order < 1 {
            return Err(Error::ConfigInvalid("line_tail_order must be at least 1".into()));
        }
        Ok(())
    }

    /// Same spec with every node count scaled by `factor` (at least 4 nodes each).
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |n: usize| ((n as f64 * factor).round() as usize).max(4);
        let r = self.resolution;
        QuadratureSpec {
            resolution: Resolution {
                radial: s(r.radial),
                polar: s(r.polar),
                azimuth: s(r.azimuth),
                line_nodes: s(r.line_nodes),
                outer_radial: s(r.outer_radial),
                outer_angular: s(r.outer_angular).max(6),
            },
            ..*self
        }
    }

    pub fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Values that can be accumulated by the product rules.
pub trait Accum: Copy + Send + Sync {
    fn zero() -> Self;
    fn add_scaled(&mut self, other: Self, w: f64);
    fn norm(&self) -> f64;
}

impl Accum for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add_scaled(&mut self, other: Self, w: f64) {
        *self += w * other;
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
}

impl<const N: usize> Accum for SVector<f64, N> {
    fn zero() -> Self {
        SVector::zeros()
    }
    fn add_scaled(&mut self, other: Self, w: f64) {
        self.axpy(w, &other, 1.0);
    }
    fn norm(&self) -> f64 {
        self.amax()
    }
}

/// A rule on [-1, 1]. `lo[i] = 1 + x_i` and `hi[i] = 1 - x_i` are kept separately
/// so that nodes crowding an endpoint keep full relative precision there.
#[derive(Debug, Clone)]
pub struct Rule1D {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn map(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        self.lo.iter().zip(&self.hi).zip(&self.w).map(move |((&lo, &hi), &w)| {
            let t = if lo < hi { a + half * lo } else { b - half * hi };
            (t, w * half)
        })
    }

    /// Like `map`, but also returns the distances of each node to both ends.
    pub fn map_with_gaps(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        self.lo.iter().zip(&self.hi).zip(&self.w).map(move |((&lo, &hi), &w)| {
            let da = half * lo;
            let db = half * hi;
            let t = if lo < hi { a + da } else { b - db };
            (t, w * half, da, db)
        })
    }
}

/// Gauss–Legendre nodes by Newton iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule1D {
    assert!(n >= 1);
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - x * x) * dp * dp);
        // x > 0 for the first half
        lo[i] = 1.0 + x;
        hi[i] = 1.0 - x;
        w[i] = wi;
        lo[n - 1 - i] = 1.0 - x;
        hi[n - 1 - i] = 1.0 + x;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        lo[m - 1] = 1.0;
        hi[m - 1] = 1.0;
    }
    Rule1D { lo, hi, w }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tanh–sinh rule with roughly `n` nodes. Exponentially convergent for
/// integrands with integrable endpoint singularities (logarithms, powers).
pub fn tanh_sinh(n: usize) -> Rule1D {
    let m = (n / 2).max(2) as i64;
    let h = 3.8 / m as f64;
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut w = Vec::new();
    for k in -m..=m {
        let t = k as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        let comp = 2.0 * e / (1.0 + e);
        let cu = 0.5 * ((u.abs()).exp() + (-u.abs()).exp());
        let wk = h * 0.5 * PI * t.cosh() / (cu * cu);
        if comp < 1e-30 || wk == 0.0 {
            continue;
        }
        if u >= 0.0 {
            lo.push(2.0 - comp);
            hi.push(comp);
        } else {
            lo.push(comp);
            hi.push(2.0 - comp);
        }
        w.push(wk);
    }
    Rule1D { lo, hi, w }
}

// Gauss–Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Globally adaptive Gauss–Kronrod over a list of initial intervals.
pub fn adaptive_intervals<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_evals: usize,
) -> Result<(f64, f64)> {
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut evals = 0;
    for win in breaks.windows(2) {
        let (v, e) = gk15(&f, win[0], win[1]);
        evals += 15;
        parts.push((win[0], win[1], v, e));
    }
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::NonFiniteIntegrand(format!("adaptive integral over [{}, {}]", breaks[0], breaks[breaks.len() - 1])));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if evals + 30 > max_evals {
            return Err(Error::QuadratureFailure { value: total, error: err });
        }
        let (imax, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (a, b, _, _) = parts.swap_remove(imax);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Err(Error::QuadratureFailure { value: total, error: err });
        }
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        evals += 30;
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64, max_evals: usize) -> Result<(f64, f64)> {
    adaptive_intervals(f, &[a, b], rel_tol, abs_tol, max_evals)
}

/// Orthonormal frame with a prescribed third axis.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub e1: V3,
    pub e2: V3,
    pub e3: V3,
}

impl Frame {
    pub fn new(axis: &V3) -> Frame {
        let n = axis.norm();
        let e3 = if n > 0.0 { axis / n } else { V3::z() };
        let helper = if e3.x.abs() < 0.6 { V3::x() } else { V3::y() };
        let e1 = (helper - e3 * e3.dot(&helper)).normalize();
        let e2 = e3.cross(&e1);
        Frame { e1, e2, e3 }
    }

    pub fn direction(&self, c: f64, s: f64, phi: f64) -> V3 {
        self.e3 * c + (self.e1 * phi.cos() + self.e2 * phi.sin()) * s
    }
}

/// Admissible set of polar cosines for each radius of a ball rule.
#[derive(Debug, Clone, Copy)]
pub enum Clip {
    None,
    /// Keep points outside (`outside = true`) or inside a sphere. The ball's
    /// frame axis must point from the sphere center to the ball center.
    Sphere { dist: f64, radius: f64, outside: bool },
    /// Keep points with `(p - center)·axis > offset`; the frame axis is the plane normal.
    Plane { offset: f64 },
    /// Keep points with `dist_to_center` in [r_in, r_out] (inside = true) or outside it.
    Shell { dist: f64, r_in: f64, r_out: f64, inside: bool },
}

impl Clip {
    /// Allowed intervals of cos θ at ball radius r.
    fn intervals(&self, r: f64) -> smallvec_like::Intervals {
        use smallvec_like::Intervals;
        match *self {
            Clip::None => Intervals::one(-1.0, 1.0),
            Clip::Plane { offset } => {
                if r == 0.0 {
                    return if offset < 0.0 { Intervals::one(-1.0, 1.0) } else { Intervals::empty() };
                }
                Intervals::one((offset / r).clamp(-1.0, 1.0), 1.0)
            }
            Clip::Sphere { dist, radius, outside } => {
                let cut = sphere_cut(dist, r, radius);
                if outside {
                    Intervals::one(cut, 1.0)
                } else {
                    Intervals::one(-1.0, cut)
                }
            }
            Clip::Shell { dist, r_in, r_out, inside } => {
                let ci = sphere_cut(dist, r, r_in);
                let co = sphere_cut(dist, r, r_out);
                if inside {
                    Intervals::one(ci, co)
                } else {
                    let mut iv = Intervals::one(-1.0, ci);
                    iv.push(co, 1.0);
                    iv
                }
            }
        }
    }

    /// Radii at which the admissible set changes shape.
    fn breaks(&self) -> Vec<f64> {
        match *self {
            Clip::None => vec![],
            Clip::Plane { offset } => vec![offset.abs()],
            Clip::Sphere { dist, radius, .. } => vec![(radius - dist).abs(), radius + dist],
            Clip::Shell { dist, r_in, r_out, .. } => {
                vec![(r_in - dist).abs(), r_in + dist, (r_out - dist).abs(), r_out + dist]
            }
        }
    }
}

/// cos θ at which the sphere |c0 + d e3 + r ω| = R is crossed (clamped to [-1, 1]).
fn sphere_cut(d: f64, r: f64, big_r: f64) -> f64 {
    if r == 0.0 || d == 0.0 {
        return if d + r > big_r { -1.0 } else { 1.0 };
    }
    ((big_r * big_r - d * d - r * r) / (2.0 * d * r)).clamp(-1.0, 1.0)
}

mod smallvec_like {
    #[derive(Debug, Clone, Copy)]
    pub struct Intervals {
        pub v: [(f64, f64); 2],
        pub n: usize,
    }
    impl Intervals {
        pub fn empty() -> Self {
            Intervals { v: [(0.0, 0.0); 2], n: 0 }
        }
        pub fn one(a: f64, b: f64) -> Self {
            let mut s = Self::empty();
            s.push(a, b);
            s
        }
        pub fn push(&mut self, a: f64, b: f64) {
            if b > a {
                self.v[self.n] = (a, b);
                self.n += 1;
            }
        }
        pub fn iter(&self) -> impl Iterator<Item = &(f64, f64)> {
            self.v[..self.n].iter()
        }
    }
}

/// Product rule over a ball: Gauss–Legendre in radius, tanh–sinh in cos θ,
/// trapezoid in φ. The polar rule tolerates logarithmic singularities on the axis.
#[derive(Debug, Clone)]
pub struct BallRule {
    pub radial: Rule1D,
    pub polar: Rule1D,
    pub n_phi: usize,
}

impl BallRule {
    pub fn new(n_r: usize, n_c: usize, n_phi: usize) -> BallRule {
        BallRule { radial: gauss_legendre(n_r), polar: tanh_sinh(n_c), n_phi: n_phi.max(1) }
    }

    pub fn from_spec(spec: &QuadratureSpec) -> BallRule {
        let r = spec.resolution;
        BallRule::new(r.radial, r.polar, r.azimuth)
    }

    /// Integrate `f(ξ)` over the ball |ξ| < radius, with ξ expressed in `frame`
    /// and restricted by `clip` (which refers to the same frame). Radial nodes
    /// are evaluated in parallel and summed in a fixed order.
    pub fn integrate<T: Accum, F: Fn(&V3) -> T + Sync>(&self, radius: f64, frame: &Frame, clip: &Clip, f: F) -> T {
        let mut breaks: Vec<f64> = clip.breaks().into_iter().filter(|&b| b > 0.0 && b < radius).collect();
        breaks.push(0.0);
        breaks.push(radius);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * radius);
        let radial: Vec<(f64, f64)> = breaks
            .windows(2)
            .filter(|seg| seg[1] > seg[0])
            .flat_map(|seg| self.radial.map(seg[0], seg[1]).collect::<Vec<_>>())
            .collect();
        let parts: Vec<T> = radial.par_iter().map(|&(r, wr)| self.shell(r, wr, frame, clip, &f)).collect();
        let mut total = T::zero();
        for p in parts {
            total.add_scaled(p, 1.0);
        }
        total
    }

    /// Sequential variant for callers that are already parallel.
    pub fn integrate_seq<T: Accum, F: Fn(&V3) -> T>(&self, radius: f64, frame: &Frame, clip: &Clip, f: F) -> T {
        self.integrate_seq_split(radius, frame, clip, &[], f)
    }

    /// `integrate_seq` with extra radial panel breaks (e.g. where the
    /// integrand's support ends inside the ball).
    pub fn integrate_seq_split<T: Accum, F: Fn(&V3) -> T>(&self, radius: f64, frame: &Frame, clip: &Clip, extra: &[f64], f: F) -> T {
        let mut breaks: Vec<f64> = clip.breaks().into_iter().chain(extra.iter().copied()).filter(|&b| b > 0.0 && b < radius).collect();
        breaks.push(0.0);
        breaks.push(radius);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * radius);
        let mut total = T::zero();
        for seg in breaks.windows(2) {
            if seg[1] <= seg[0] {
                continue;
            }
            for (r, wr) in self.radial.map(seg[0], seg[1]) {
                total.add_scaled(self.shell(r, wr, frame, clip, &f), 1.0);
            }
        }
        total
    }

    fn shell<T: Accum, F: Fn(&V3) -> T>(&self, r: f64, wr: f64, frame: &Frame, clip: &Clip, f: &F) -> T {
        let dphi = 2.0 * PI / self.n_phi as f64;
        let mut total = T::zero();
        let ivs = clip.intervals(r);
        for &(ca, cb) in ivs.iter() {
            for (c, wc, da, db) in self.polar.map_with_gaps(ca, cb) {
                // sin θ from the distance to the nearer pole, for precision
                let s = if c > 0.0 {
                    let one_minus = if cb == 1.0 { db } else { 1.0 - c };
                    (one_minus * (1.0 + c)).max(0.0).sqrt()
                } else {
                    let one_plus = if ca == -1.0 { da } else { 1.0 + c };
                    (one_plus * (1.0 - c)).max(0.0).sqrt()
                };
                for k in 0..self.n_phi {
                    let phi = (k as f64 + 0.5) * dphi;
                    let xi = frame.direction(c, s, phi) * r;
                    total.add_scaled(f(&xi), wr * wc * dphi * r * r);
                }
            }
        }
        total
    }
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteIntegrand(what.to_string()))
    }
}

/// ∫ f over the ball of given center and radius, with an error estimate.
pub fn integrate_ball<F: Fn(&V3) -> f64 + Sync>(f: F, center: &V3, radius: f64, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let frame = Frame::new(&V3::z());
    let run = |s: &QuadratureSpec| BallRule::from_spec(s).integrate_seq(radius, &frame, &Clip::None, |xi| f(&(center + xi)));
    match spec.method {
        Method::ProductGauss => {
            let v = run(spec);
            let coarse = run(&spec.scaled(2.0 / 3.0));
            check_finite(v, "integrate_ball")?;
            let err = (v - coarse).abs();
            if err > spec.tolerance(v) {
                return Err(Error::QuadratureFailure { value: v, error: err });
            }
            Ok((v, err))
        }
        Method::AdaptiveCubature => {
            let mut s = spec.scaled(0.5);
            let mut prev = run(&s);
            loop {
                let next_spec = s.scaled(1.5);
                let r = next_spec.resolution;
                let evals = r.radial * r.polar * r.azimuth;
                let v = run(&next_spec);
                check_finite(v, "integrate_ball")?;
                let err = (v - prev).abs();
                if err <= spec.tolerance(v) {
                    return Ok((v, err));
                }
                if evals * 3 > spec.max_evals {
                    return Err(Error::QuadratureFailure { value: v, error: err });
                }
                prev = v;
                s = next_spec;
            }
        }
        Method::MonteCarlo => {
            let n = spec.max_evals;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let vol = 4.0 / 3.0 * PI * radius.powi(3);
            let (mut s1, mut s2) = (0.0, 0.0);
            let mut count = 0usize;
            while count < n {
                let p = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if p.norm_squared() >= 1.0 {
                    continue;
                }
                let v = f(&(center + p * radius));
                check_finite(v, "integrate_ball (Monte Carlo)")?;
                s1 += v;
                s2 += v * v;
                count += 1;
            }
            let mean = s1 / n as f64;
            let var = (s2 / n as f64 - mean * mean).max(0.0);
            Ok((vol * mean, vol * (var / n as f64).sqrt()))
        }
    }
}

/// Pivot of the sign function in a signed line integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pivot {
    /// ε(τ)
    Zero,
    /// ε(1 − τ)
    One,
}

/// ∫ ε(τ) g(τ) dτ (or ∫ ε(1−τ) g(τ) dτ) by symmetric pairing around the pivot,
/// adaptive integration of the paired difference up to `spec.line_truncation`
/// (in units of τ) and a power-law tail of order `spec.line_tail_order`.
pub fn integrate_signed_line<G: Fn(f64) -> f64>(g: G, pivot: Pivot, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let t_max = spec.line_truncation;
    let d = |t: f64| match pivot {
        Pivot::Zero => g(t) - g(-t),
        Pivot::One => g(1.0 - t) - g(1.0 + t),
    };
    let mut breaks = vec![0.0];
    let mut e = 0.5f64.min(t_max);
    while e < t_max {
        breaks.push(e);
        e *= 2.0;
    }
    breaks.push(t_max);
    let (body, err) = adaptive_intervals(&d, &breaks, spec.rel_tol, spec.abs_tol, spec.max_evals)?;
    let (tail, tail_err) = power_tail(&d, t_max, spec.line_tail_order, spec.tolerance(body))?;
    Ok((body + tail, err + tail_err))
}

/// Tail ∫_T^∞ of a difference decaying like C t^(-p), with a decay check.
fn power_tail<D: Fn(f64) -> f64>(d: &D, t: f64, order: u32, tol: f64) -> Result<(f64, f64)> {
    let dt = d(t);
    if order <= 1 {
        return Ok((0.0, dt.abs() * t));
    }
    let p = order as f64;
    let tail = dt * t / (p - 1.0);
    if tail.abs() <= tol {
        return Ok((tail, tail.abs()));
    }
    let dh = d(0.5 * t);
    let ratio = dt * t.powf(p) / (dh * (0.5 * t).powf(p));
    if !(0.5..=2.0).contains(&ratio) {
        return Err(Error::SlowDecay { order, ratio });
    }
    Ok((tail, (tail * (1.0 - ratio)).abs()))
}

/// Fixed composite Gauss rule for arc-length line integrals ∫ ε(s) f(s) ds.
/// Panels double in width from `first` up to `max_width`, then stay uniform.
/// Node positions depend only on the rule, so results vary smoothly with the
/// base point (needed when line integrals are differentiated numerically).
#[derive(Debug, Clone)]
pub struct LineRule {
    pub gl: Arc<Rule1D>,
    pub first: f64,
    pub max_width: f64,
    pub tail_order: u32,
}

impl LineRule {
    pub fn new(nodes: usize, first: f64, max_width: f64, tail_order: u32) -> LineRule {
        LineRule { gl: Arc::new(gauss_legendre(nodes)), first, max_width, tail_order }
    }

    /// ∫_0^length d(s) ds for a vector-valued d, plus the power-law tail.
    pub fn paired<const N: usize, D: Fn(f64) -> [f64; N]>(&self, length: f64, d: D) -> [f64; N] {
        let mut acc = [0.0; N];
        if length <= 0.0 {
            return acc;
        }
        let mut a = 0.0;
        let mut b = self.first.min(length);
        loop {
            for (s, w) in self.gl.map(a, b) {
                let v = d(s);
                for i in 0..N {
                    acc[i] += w * v[i];
                }
            }
            if b >= length {
                break;
            }
            a = b;
            b = (b + b.min(self.max_width)).min(length);
        }
        if self.tail_order >= 2 {
            let v = d(length);
            let k = length / (self.tail_order as f64 - 1.0);
            for i in 0..N {
                acc[i] += v[i] * k;
            }
        }
        acc
    }

    /// ∫_a^b f(s) ds for a bounded segment.
    pub fn segment<const N: usize, F: Fn(f64) -> [f64; N]>(&self, a: f64, b: f64, f: F) -> [f64; N] {
        let mut acc = [0.0; N];
        if b <= a {
            return acc;
        }
        let n_panels = ((b - a) / self.max_width).ceil().max(1.0) as usize;
        let h = (b - a) / n_panels as f64;
        for k in 0..n_panels {
            for (s, w) in self.gl.map(a + k as f64 * h, a + (k + 1) as f64 * h) {
                let v = f(s);
                for i in 0..N {
                    acc[i] += w * v[i];
                }
            }
        }
        acc
    }
}

/// Outer-integration symmetry hint for double integrals over spherical regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterSymmetry {
    None,
    /// The integrand's inner integral depends only on |x − center|; a single
    /// outer direction is sampled and weighted by 4π.
    Spherical,
}

/// ∫_Ω dx ∫_{B(x, support) ∩ (Ω or its complement)} dy f(x, y), nested
/// cubature with the inner ball clipped analytically against the boundary.
pub fn integrate_double<F: Fn(&V3, &V3) -> f64 + Sync>(
    f: F,
    omega: &Region,
    complement: bool,
    support: f64,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let fine = double_rule(&f, omega, complement, support, symmetry, spec)?;
    let coarse = double_rule(&f, omega, complement, support, symmetry, &spec.scaled(2.0 / 3.0))?;
    check_finite(fine, "integrate_double")?;
    Ok((fine, (fine - coarse).abs()))
}

fn double_rule<F: Fn(&V3, &V3) -> f64 + Sync>(
    f: &F,
    omega: &Region,
    complement: bool,
    support: f64,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let inner = BallRule::from_spec(spec);
    let nodes = outer_nodes(omega, complement, support, symmetry, spec)?;
    let vals: Vec<f64> = nodes
        .par_iter()
        .map(|(x, w)| {
            let (frame, clip) = inner_clip(omega, x, complement);
            let v = inner.integrate_seq(support, &frame, &clip, |xi| f(x, &(x + xi)));
            v * w
        })
        .collect();
    Ok(vals.iter().sum())
}

/// Outer nodes (point, weight) over Ω. With `complement`, only the layer within
/// `support` of the boundary is sampled, since the inner integral vanishes elsewhere.
pub fn outer_nodes(
    omega: &Region,
    complement: bool,
    support: f64,
    symmetry: OuterSymmetry,
    spec: &QuadratureSpec,
) -> Result<Vec<(V3, f64)>> {
    let res = spec.resolution;
    let radial = gauss_legendre(res.outer_radial);
    let angular = angular_nodes(res.outer_angular, symmetry);
    let (center, segments): (V3, Vec<(f64, f64)>) = match omega {
        Region::Ball { center, radius } => {
            let r0 = if complement { (radius - support).max(0.0) } else { 0.0 };
            let mut segs = vec![];
            if !complement && radius - support > 0.0 {
                segs.push((0.0, radius - support));
                segs.push((radius - support, *radius));
            } else {
                segs.push((r0, *radius));
            }
            (*center, segs)
        }
        Region::Annulus { center, r_in, r_out } => {
            let mut segs = vec![];
            if complement {
                let mid = 0.5 * (r_in + r_out);
                segs.push((*r_in, (r_in + support).min(mid)));
                segs.push(((r_out - support).max(mid), *r_out));
                if r_in + support < mid {
                    // nothing in between contributes
                }
            } else {
                segs.push((*r_in, *r_out));
            }
            (*center, segs)
        }
        _ => {
            return Err(Error::ConfigInvalid(
                "double integrals need a ball or annulus as the outer region".into(),
            ))
        }
    };
    let mut out = Vec::new();
    for (a, b) in segments {
        if b <= a {
            continue;
        }
        for (rho, wr) in radial.map(a, b) {
            for (dir, wa) in &angular {
                out.push((center + dir * rho, wr * wa * rho * rho));
            }
        }
    }
    Ok(out)
}

/// Product Gauss directions on the unit sphere (Gauss in cos θ, uniform φ).
pub fn angular_nodes(order: usize, symmetry: OuterSymmetry) -> Vec<(V3, f64)> {
    if symmetry == OuterSymmetry::Spherical {
        return vec![(V3::z(), 4.0 * PI)];
    }
    let gl = gauss_legendre(order);
    let n_phi = 2 * order;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(order * n_phi);
    for (c, wc) in gl.map(-1.0, 1.0) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            out.push((V3::new(s * phi.cos(), s * phi.sin(), c), wc * dphi));
        }
    }
    out
}

/// Frame and clip for the inner ball around `x` relative to Ω's boundary.
pub fn inner_clip(omega: &Region, x: &V3, complement: bool) -> (Frame, Clip) {
    match omega {
        Region::Ball { center, radius } => {
            let d = x - center;
            let frame = Frame::new(&d);
            (frame, Clip::Sphere { dist: d.norm(), radius: *radius, outside: complement })
        }
        Region::Annulus { center, r_in, r_out } => {
            let d = x - center;
            let frame = Frame::new(&d);
            (frame, Clip::Shell { dist: d.norm(), r_in: *r_in, r_out: *r_out, inside: !complement })
        }
        Region::HalfSpace { normal, offset } => {
            let n = normal.normalize();
            let frame = Frame::new(&n);
            // inside: x·n < offset
            let rel = offset - x.dot(&n);
            if complement {
                (frame, Clip::Plane { offset: rel })
            } else {
                let frame = Frame::new(&(-n));
                (frame, Clip::Plane { offset: -rel })
            }
        }
        Region::SignedDistance { .. } => (Frame::new(&V3::z()), Clip::None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = gauss_legendre(10);
        let v: f64 = r.map(0.0, 2.0).map(|(x, w)| w * x.powi(19)).sum();
        assert!((v - 2f64.powi(20) / 20.0).abs() < 1e-9 * v);
    }

    #[test]
    fn tanh_sinh_handles_log_endpoint() {
        let r = tanh_sinh(60);
        // ∫_0^1 ln x dx = -1
        let v: f64 = r.map_with_gaps(0.0, 1.0).map(|(_, w, da, _)| w * da.ln()).sum();
        assert!((v + 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn adaptive_gk_peaked() {
        let (v, _) = adaptive(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 1e-14, 100_000).unwrap();
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn ball_rule_clip_volume() {
        // volume of B(0,1) outside the sphere |y - c| = 1 with |c - 0| = 1.5
        let rule = BallRule::new(24, 40, 4);
        let frame = Frame::new(&V3::z());
        let clip = Clip::Sphere { dist: 1.5, radius: 1.0, outside: true };
        let v = rule.integrate(1.0, &frame, &clip, |_| 1.0);
        // lens volume of two unit spheres at distance 1.5
        let d: f64 = 1.5;
        let lens = PI * (4.0 + d) * (2.0 - d).powi(2) / 12.0;
        assert!((v - (4.0 * PI / 3.0 - lens)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn line_rule_tail() {
        let rule = LineRule::new(16, 0.5, 50.0, 2);
        // d(s) = 1/(1+s)^2 integrates to 1
        let v = rule.paired(2000.0, |s| [1.0 / ((1.0 + s) * (1.0 + s))]);
        assert!((v[0] - 1.0).abs() < 1e-6, "{}", v[0]);
    }
}
