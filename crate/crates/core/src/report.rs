//! Structured mass reports.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A computed mass (or mass-like functional) with its named parts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub label: String,
    pub value: f64,
    pub error_estimate: f64,
    /// Value divided by δ²𝔰₂M where that normalization applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<f64>,
    pub components: BTreeMap<String, f64>,
    /// (radius, value) pairs of an exhaustion.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub exhaustion_trace: Vec<(f64, f64)>,
    /// Side quantities (residuals, audits, comparison values).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
}

impl MassReport {
    pub fn new(label: impl Into<String>) -> Self {
        MassReport { label: label.into(), ..Default::default() }
    }

    pub fn with_component(mut self, name: &str, v: f64) -> Self {
        self.components.insert(name.to_string(), v);
        self
    }

    pub fn component(&self, name: &str) -> f64 {
        self.components.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn diag(&mut self, name: &str, v: f64) {
        self.diagnostics.insert(name.to_string(), v);
    }
}
