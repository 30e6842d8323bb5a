//! Radial vacuum kernels ℒ[ξ] = L₀·φ(|ξ|/δ) and their moments.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, BallRule, Clip, Frame, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    TopHat,
    SmoothBump,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialKernel {
    pub kind: KernelKind,
    /// Range δ. For the Gaussian this is σ.
    pub delta: f64,
    pub amplitude: f64,
}

/// Gaussian truncation in units of σ; the neglected mass is ~e^{-32}.
pub const GAUSSIAN_CUTOFF: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub s: f64,
    pub s2: f64,
    /// (4π/δ^{2k}) ∫ r^{2k+2} φ dr for k = 0..=3, normalized like `s2`.
    pub moment_table: Vec<f64>,
    pub error: f64,
}

impl RadialKernel {
    pub fn new(kind: KernelKind, delta: f64, amplitude: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::ConfigInvalid(format!("kernel range must be positive, got {delta}")));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::ConfigInvalid(format!("kernel amplitude must be non-negative, got {amplitude}")));
        }
        Ok(RadialKernel { kind, delta, amplitude })
    }

    pub fn smooth_bump(delta: f64) -> Self {
        RadialKernel { kind: KernelKind::SmoothBump, delta, amplitude: 1.0 }
    }

    pub fn top_hat(delta: f64) -> Self {
        RadialKernel { kind: KernelKind::TopHat, delta, amplitude: 1.0 }
    }

    pub fn gaussian(sigma: f64) -> Self {
        RadialKernel { kind: KernelKind::Gaussian, delta: sigma, amplitude: 1.0 }
    }

    /// Support radius in units of δ.
    pub fn cutoff(&self) -> f64 {
        match self.kind {
            KernelKind::TopHat | KernelKind::SmoothBump => 1.0,
            KernelKind::Gaussian => GAUSSIAN_CUTOFF,
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.cutoff() * self.delta
    }

    pub fn is_differentiable(&self) -> bool {
        self.kind != KernelKind::TopHat
    }

    pub fn require_differentiable(&self) -> Result<()> {
        if self.is_differentiable() {
            Ok(())
        } else {
            Err(Error::NonDifferentiableKernel)
        }
    }

    pub fn profile(&self, r: f64) -> f64 {
        let s = r / self.delta;
        match self.kind {
            KernelKind::TopHat => {
                if s <= 1.0 {
                    self.amplitude
                } else {
                    0.0
                }
            }
            KernelKind::SmoothBump => {
                if s < 1.0 {
                    self.amplitude * (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => {
                if s <= GAUSSIAN_CUTOFF {
                    self.amplitude * (-0.5 * s * s).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// dφ/dr. Zero for the top-hat (callers must reject it first).
    pub fn dprofile(&self, r: f64) -> f64 {
        let d = self.delta;
        let s = r / d;
        match self.kind {
            KernelKind::TopHat => 0.0,
            KernelKind::SmoothBump => {
                if s < 1.0 {
                    let q = 1.0 - s * s;
                    self.profile(r) * (-2.0 * s / d) / (q * q)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => {
                if s <= GAUSSIAN_CUTOFF {
                    -self.profile(r) * r / (d * d)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval(&self, xi: &Vector3<f64>) -> f64 {
        self.profile(xi.norm())
    }

    pub fn grad(&self, xi: &Vector3<f64>) -> Result<Vector3<f64>> {
        self.require_differentiable()?;
        let r = xi.norm();
        if r == 0.0 {
            return Ok(Vector3::zeros());
        }
        Ok(xi * (self.dprofile(r) / r))
    }

    /// 𝔰, 𝔰₂ and higher radial moments by adaptive Gauss–Kronrod (rel. tol 1e-10).
    pub fn moments(&self) -> Result<KernelMoments> {
        let rc = self.support_radius();
        let d2 = self.delta * self.delta;
        let mut table = Vec::with_capacity(4);
        let mut err = 0.0;
        for k in 0..4 {
            let p = 2 * k + 2;
            let (v, e) = adaptive(|r: f64| r.powi(p) * self.profile(r), 0.0, rc, 1e-12, 1e-300, 200_000)?;
            let norm = 4.0 * PI / d2.powi(k);
            table.push(norm * v);
            if k <= 1 {
                err += norm * e;
            }
        }
        Ok(KernelMoments { s: table[0], s2: table[1], moment_table: table, error: err })
    }
}

/// Relative defects of ∫ξ_α ℒ = 0 and ∫ξ_αξ_β ℒ = (δ²𝔰₂/3)δ_αβ, from a 3D
/// product rule that does not use the radial reduction behind `moments`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropyAudit {
    pub first_moment: f64,
    pub second_moment: f64,
}

impl RadialKernel {
    pub fn isotropy_audit(&self, spec: &QuadratureSpec) -> Result<IsotropyAudit> {
        let mom = self.moments()?;
        let rule = BallRule::from_spec(spec);
        // tilted frame so no node row lines up with the coordinate axes
        let frame = Frame::new(&Vector3::new(0.3, -0.5, 0.8));
        let v: SVector<f64, 9> = rule.integrate(self.support_radius(), &frame, &Clip::None, |xi| {
            let l = self.eval(xi);
            SVector::<f64, 9>::from_column_slice(&[
                xi.x * l,
                xi.y * l,
                xi.z * l,
                xi.x * xi.x * l,
                xi.y * xi.y * l,
                xi.z * xi.z * l,
                xi.x * xi.y * l,
                xi.x * xi.z * l,
                xi.y * xi.z * l,
            ])
        });
        let diag = self.delta * self.delta * mom.s2 / 3.0;
        let first = (0..3).fold(0.0f64, |m, i| m.max(v[i].abs())) / (self.delta * mom.s);
        let second = (3..9).fold(0.0f64, |m, i| {
            let target = if i < 6 { diag } else { 0.0 };
            m.max((v[i] - target).abs())
        }) / diag;
        Ok(IsotropyAudit { first_moment: first, second_moment: second })
    }
}
