use crate::error::Result;
use crate::instances::{instance_suite, InstanceSpec};
use crate::oracle::Oracle;
use crate::policy::{PolicyShape, Vocab};

use super::checks::{
    check_corollary, check_is_identity, check_thm1, check_thm3, check_thm4, check_thm4_residual, check_thm5, Thm5Regime,
};
use super::report::TheoremReport;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub spec: InstanceSpec,
    pub instances: usize,
    pub seed: u64,
    pub enumeration_cap: u64,
    pub regime: Thm5Regime,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            spec: InstanceSpec::default(),
            instances: 200,
            seed: 0,
            enumeration_cap: crate::oracle::DEFAULT_ENUMERATION_CAP,
            regime: Thm5Regime::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteSummary {
    pub reports: Vec<TheoremReport>,
}

impl SuiteSummary {
    pub fn failures(&self) -> impl Iterator<Item = &TheoremReport> {
        self.reports.iter().filter(|r| r.failed())
    }

    pub fn all_pass(&self) -> bool {
        self.failures().next().is_none()
    }

    /// Reports with the given name.
    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a TheoremReport> + 'a {
        self.reports.iter().filter(move |r| r.name == name)
    }
}

/// Runs every exact check on `instances` random instances.
///
/// Per instance: the importance-sampling identity, the zero gap at
/// `theta = ref`, the consistent-teacher bound, the covariance identity, the
/// mismatched-teacher bound (`teacher_alt` as SFT teacher, `teacher` as OPD
/// teacher), the residual bias at `theta = ref`, and the online mismatch
/// bound at `theta = ref`.
pub fn verify_suite(config: &SuiteConfig) -> Result<SuiteSummary> {
    let oracle = Oracle::with_cap(config.enumeration_cap);
    for &v in &config.spec.vocab {
        for &h in &config.spec.horizon {
            oracle.check_feasible(&PolicyShape::new(Vocab::new(v)?, h, 0, 1)?)?;
        }
    }
    let instances = instance_suite(&config.spec, config.instances, config.seed)?;
    let mut reports = Vec::with_capacity(7 * instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let (s, t, alt, r) = (&inst.student, &inst.teacher, &inst.teacher_alt, &inst.reference);
        for report in [
            check_is_identity(&oracle, s, t, r)?,
            check_corollary(&oracle, r, t)?,
            check_thm1(&oracle, s, t, r)?,
            check_thm3(&oracle, s, t, r)?,
            check_thm4(&oracle, s, alt, t, r)?,
            check_thm4_residual(&oracle, r, alt, t, r)?,
            check_thm5(&oracle, r, alt, t, r, config.regime)?,
        ] {
            reports.push(report.with_instance(i));
        }
    }
    Ok(SuiteSummary { reports })
}
