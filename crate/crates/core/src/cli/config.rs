//! Run configuration: a TOML document mirroring [`RunConfig`], plus dotted
//! `key=value` overrides from the command line.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::kernel::{KernelKind, RadialKernel};
use crate::quadrature::QuadratureSpec;
use crate::surface_layer::SymmetrySearch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Moments,
    Positivity,
    Schwarzschild,
    Ultrastatic,
    Align,
    Quasilocal,
    SyntheticScal,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Scenario> {
        let v = toml::Value::String(s.to_string());
        Scenario::deserialize(v).map_err(|_| {
            Error::ConfigInvalid(format!(
                "unknown scenario `{s}` (expected moments, positivity, schwarzschild, ultrastatic, align, quasilocal or synthetic-scal)"
            ))
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Moments => "moments",
            Scenario::Positivity => "positivity",
            Scenario::Schwarzschild => "schwarzschild",
            Scenario::Ultrastatic => "ultrastatic",
            Scenario::Align => "align",
            Scenario::Quasilocal => "quasilocal",
            Scenario::SyntheticScal => "synthetic-scal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub delta: f64,
    pub amplitude: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { kind: KernelKind::SmoothBump, delta: 1.0, amplitude: 1.0 }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<RadialKernel> {
        RadialKernel::new(self.kind, self.delta, self.amplitude)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Standard output when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
}

/// Acceptance thresholds. Relative unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub direct_mass: f64,
    pub m0: f64,
    pub aligned: f64,
    /// Aligned A⁽⁰⁾ flux over the unaligned one.
    pub a0_residual_ratio: f64,
    pub a0_pointwise: f64,
    pub a1_pointwise: f64,
    pub p_of_r: f64,
    /// Isotropic-coordinate jet relation (absolute relative deviation).
    pub isotropic_relation: f64,
    pub trace_formula: f64,
    pub a1_closed_form: f64,
    pub scalrel: f64,
    pub scal_g: f64,
    pub brown_york: f64,
    /// Lower bounds are checked as value ≥ −sigma·error_estimate.
    pub sigma: f64,
    pub equivariance: f64,
    /// Absolute tolerance on the top-hat ratio s₂/s = 3/5.
    pub top_hat_ratio: f64,
    pub isotropy: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            direct_mass: 0.05,
            m0: 0.05,
            aligned: 0.05,
            a0_residual_ratio: 0.05,
            a0_pointwise: 0.03,
            a1_pointwise: 0.05,
            p_of_r: 0.05,
            isotropic_relation: 1e-3,
            trace_formula: 0.05,
            a1_closed_form: 0.05,
            scalrel: 0.10,
            scal_g: 0.10,
            brown_york: 0.10,
            sigma: 10.0,
            equivariance: 1e-6,
            top_hat_ratio: 1e-10,
            isotropy: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// R₀ = δ / value.
    DeltaOverR0,
    /// R₀ = value.
    R0,
    /// Kernel range δ = value at the configured R₀.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchwarzschildConfig {
    pub mass: f64,
    pub delta_over_r0: f64,
    /// Radius of the quadratic core of the potential; 0 keeps −2M/|x|.
    pub mollification: f64,
    pub aligned: bool,
    pub p_of_r: bool,
    pub sweep: Option<Sweep>,
}

impl Default for SchwarzschildConfig {
    fn default() -> Self {
        SchwarzschildConfig { mass: 1.0, delta_over_r0: 0.05, mollification: 0.0, aligned: true, p_of_r: true, sweep: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositivityConfig {
    /// Radius of Ω in units of δ.
    pub radius: f64,
    pub eps: f64,
    pub deformations: usize,
    /// Resolution factor applied to the quadrature block for the sweep.
    pub resolution_scale: f64,
    pub equivariance: bool,
}

impl Default for PositivityConfig {
    fn default() -> Self {
        PositivityConfig { radius: 3.0, eps: 0.01, deformations: 20, resolution_scale: 0.5, equivariance: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFamily {
    Constant,
    PureTraceLinear,
    TracelessLinear,
    ConformalQuadratic,
    OuterQuadratic,
    TracelessQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UltrastaticConfig {
    pub family: MetricFamily,
    pub eps: f64,
    /// Radius (in δ) on which the polynomial is used unmodified.
    pub reach: f64,
    pub ell: f64,
    pub points: Vec<[f64; 3]>,
    pub brown_york: bool,
    /// Sphere radius of the flux identity, in δ.
    pub brown_york_radius: f64,
    pub brown_york_nodes: usize,
}

impl Default for UltrastaticConfig {
    fn default() -> Self {
        UltrastaticConfig {
            family: MetricFamily::TracelessQuadratic,
            eps: 0.01,
            reach: 8.0,
            ell: 4.0,
            points: vec![[3.0, 0.0, 0.0], [1.0, 2.0, -1.5]],
            brown_york: false,
            brown_york_radius: 20.0,
            brown_york_nodes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub mass: f64,
    /// |ζ| in units of δ.
    pub radius: f64,
    pub isotropic_pairs: usize,
    pub divergence: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { mass: 1.0, radius: 20.0, isotropic_pairs: 50, divergence: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuasilocalSource {
    Identity,
    Translation,
    Relabelling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasilocalConfig {
    pub source: QuasilocalSource,
    /// Radius of Ω̃ (as a preimage) in units of δ.
    pub radius: f64,
    pub translation: [f64; 3],
    pub eps: f64,
    pub resolution_scale: f64,
    pub search: SymmetrySearch,
}

impl Default for QuasilocalConfig {
    fn default() -> Self {
        QuasilocalConfig {
            source: QuasilocalSource::Translation,
            radius: 2.5,
            translation: [0.3, -0.2, 0.1],
            eps: 0.01,
            resolution_scale: 0.4,
            search: SymmetrySearch { starts: 2, ..SymmetrySearch::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticScalConfig {
    pub family: MetricFamily,
    pub eps: f64,
    pub reach: f64,
    pub ell: f64,
    pub points: Vec<[f64; 3]>,
}

impl Default for SyntheticScalConfig {
    fn default() -> Self {
        SyntheticScalConfig {
            family: MetricFamily::TracelessQuadratic,
            eps: 0.01,
            reach: 8.0,
            ell: 4.0,
            points: vec![[3.0, 0.0, 0.0]],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub kernel: KernelConfig,
    pub quadrature: QuadratureSpec,
    pub output: OutputConfig,
    pub thresholds: Thresholds,
    pub schwarzschild: SchwarzschildConfig,
    pub positivity: PositivityConfig,
    pub ultrastatic: UltrastaticConfig,
    pub align: AlignConfig,
    pub quasilocal: QuasilocalConfig,
    pub synthetic_scal: SyntheticScalConfig,
}

impl RunConfig {
    /// Parse a document and apply `key=value` overrides (dotted keys, TOML values;
    /// bare words are taken as strings).
    pub fn load(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigInvalid(format!("config file: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        // Round-trip through text so type errors point at the offending line.
        let merged = toml::to_string(&table).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        let mut cfg: RunConfig = toml::from_str(&merged).map_err(|e| Error::ConfigInvalid(format!("{e}")))?;
        cfg.quadrature.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.build()?;
        self.quadrature.validate()?;
        if let Some(s) = &self.schwarzschild.sweep {
            if s.values.is_empty() {
                return Err(Error::ConfigInvalid("schwarzschild.sweep.values: empty sweep list".into()));
            }
            if s.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::ConfigInvalid("schwarzschild.sweep.values: values must be positive".into()));
            }
        }
        if !(self.schwarzschild.delta_over_r0 > 0.0) {
            return Err(Error::ConfigInvalid("schwarzschild.delta_over_r0 must be positive".into()));
        }
        for (name, v) in [("positivity", self.positivity.resolution_scale), ("quasilocal", self.quasilocal.resolution_scale)] {
            if !(v > 0.0) {
                return Err(Error::ConfigInvalid(format!("{name}.resolution_scale must be positive")));
            }
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::ConfigInvalid(format!("--set {item}: expected key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::ConfigInvalid(format!("--set {item}: malformed key `{key}`")));
    }
    let mut cur = table;
    for (i, p) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::ConfigInvalid(format!("--set {item}: `{}` is not a table", parts[..=i].join("."))))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_nest_and_parse_types() {
        let cfg = RunConfig::load("", &["schwarzschild.mass=2.5".into(), "kernel.kind=top_hat".into()]).unwrap();
        assert_eq!(cfg.schwarzschild.mass, 2.5);
        assert_eq!(cfg.kernel.kind, KernelKind::TopHat);
    }

    #[test]
    fn unknown_field_points_at_the_line() {
        let err = RunConfig::load("[kernel]\ndelta = 1.0\nwidth = 2\n", &[]).unwrap_err().to_string();
        assert!(err.contains("width") && err.contains("line 3"), "{err}");
    }
}
