use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Slack allowed on inequality checks.
pub const BOUND_TOLERANCE: f64 = 1e-9;
/// Largest residual accepted on identity checks.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Constants used by a check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

/// Outcome of one numeric check: `pass` iff `slack = rhs - lhs >= -tolerance`.
///
/// Identity checks put the residual in `lhs` and `0` in `rhs`. A report with
/// `asserted == false` is descriptive only (its precondition did not hold)
/// and never counts as a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub asserted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub context: ReportContext,
}

impl TheoremReport {
    pub fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64, context: ReportContext) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            pass: slack >= -tolerance,
            tolerance,
            asserted: true,
            instance: None,
            note: None,
            context,
        }
    }

    pub fn bound(name: &str, lhs: f64, rhs: f64, context: ReportContext) -> Self {
        Self::new(name, lhs, rhs, BOUND_TOLERANCE, context)
    }

    pub fn identity(name: &str, residual: f64, context: ReportContext) -> Self {
        Self::new(name, residual, 0.0, IDENTITY_TOLERANCE, context)
    }

    pub fn with_instance(mut self, index: usize) -> Self {
        self.instance = Some(index);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn descriptive(mut self, note: impl Into<String>) -> Self {
        self.asserted = false;
        self.with_note(note)
    }

    /// A failure that counts: asserted and not passing.
    pub fn failed(&self) -> bool {
        self.asserted && !self.pass
    }

    pub fn extra(mut self, key: &str, value: f64) -> Self {
        self.context.extras.insert(key.to_string(), value);
        self
    }
}
