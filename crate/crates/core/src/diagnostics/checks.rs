use crate::error::Result;
use crate::objectives::{add_scores, grad_j_on_exact, gradient_moments};
use crate::oracle::{score_bound_g, Oracle};
use crate::policy::{GradientVector, TabularPolicy};

use super::report::{ReportContext, TheoremReport};

fn context(g: f64, sigma_a: Option<f64>, sigma_delta: Option<f64>, chi2: Option<f64>) -> ReportContext {
    ReportContext {
        g: Some(g),
        sigma_a,
        sigma_delta,
        chi2,
        ..ReportContext::default()
    }
}

/// Entrywise `max |E_theta[f] - E_ref[w f]|`.
pub fn check_is_identity(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<TheoremReport> {
    let m = gradient_moments(oracle, student, teacher, reference)?;
    let residual = m.on_policy.max_abs_diff(&m.importance_weighted);
    let chi2 = oracle.chi_squared(student, reference)?;
    Ok(TheoremReport::identity(
        "is_identity",
        residual,
        ReportContext {
            chi2: Some(chi2),
            ..ReportContext::default()
        },
    )
    .extra("mean_weight", m.mean_weight))
}

/// `||grad J_on - grad J_off||_2` at `theta = ref`.
pub fn check_corollary(oracle: &Oracle, reference: &TabularPolicy, teacher: &TabularPolicy) -> Result<TheoremReport> {
    let m = gradient_moments(oracle, reference, teacher, reference)?;
    let gap = (&m.on_policy - &m.off_policy).norm();
    Ok(TheoremReport::identity(
        "corollary_zero_gap",
        gap,
        ReportContext {
            chi2: Some(oracle.chi_squared(reference, reference)?),
            ..ReportContext::default()
        },
    ))
}

/// `||grad J_on - grad J_off||_2 <= G sigma_A sqrt(chi^2(pi_theta || pi_ref))`.
pub fn check_thm1(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<TheoremReport> {
    let m = gradient_moments(oracle, student, teacher, reference)?;
    let lhs = (&m.on_policy - &m.off_policy).norm();
    let g = score_bound_g(student);
    let sigma_a = oracle.sigma_a(student, teacher, reference)?;
    let chi2 = oracle.chi_squared(student, reference)?;
    let rhs = g * sigma_a * chi2.max(0.0).sqrt();
    Ok(TheoremReport::bound(
        "thm1_gradient_gap",
        lhs,
        rhs,
        context(g, Some(sigma_a), None, Some(chi2)),
    ))
}

/// Entrywise residual of `grad J_off = grad J_on - Cov_ref[w, f]`.
pub fn check_thm3(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<TheoremReport> {
    let m = gradient_moments(oracle, student, teacher, reference)?;
    let predicted = &m.on_policy - &m.covariance();
    let residual = m.off_policy.max_abs_diff(&predicted);
    Ok(TheoremReport::identity(
        "thm3_covariance_identity",
        residual,
        ReportContext {
            chi2: Some(oracle.chi_squared(student, reference)?),
            ..ReportContext::default()
        },
    )
    .extra("covariance_norm", m.covariance().norm()))
}

/// `||grad J_on - grad J_off||_2 <= G (sigma_A sqrt(chi^2) + sigma_Delta)`
/// with advantages taken against the OPD-stage teacher.
pub fn check_thm4(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher_sft: &TabularPolicy,
    teacher_opd: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<TheoremReport> {
    let m = gradient_moments(oracle, student, teacher_opd, reference)?;
    let lhs = (&m.on_policy - &m.off_policy).norm();
    let g = score_bound_g(student);
    let sigma_a = oracle.sigma_a(student, teacher_opd, reference)?;
    let sigma_delta = oracle.sigma_delta(teacher_sft, teacher_opd, reference)?;
    let chi2 = oracle.chi_squared(student, reference)?;
    let rhs = g * (sigma_a * chi2.max(0.0).sqrt() + sigma_delta);
    Ok(TheoremReport::bound(
        "thm4_mismatch_gap",
        lhs,
        rhs,
        context(g, Some(sigma_a), Some(sigma_delta), Some(chi2)),
    )
    .extra("sigma_a_consistent", oracle.sigma_a(student, teacher_sft, reference)?))
}

/// `E_measure[f_Delta]` with `f_Delta = -sum_t Delta_t grad log pi_theta(a_t|s_t)`.
fn expected_f_delta(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher_sft: &TabularPolicy,
    teacher_opd: &TabularPolicy,
    measure: &TabularPolicy,
) -> Result<GradientVector> {
    let mut grad = GradientVector::zeros(student.shape());
    let out = grad.values_mut();
    oracle.walk(&[student, teacher_sft, teacher_opd, measure], |v| {
        let (sft, opd) = (v.token_logprobs(1), v.token_logprobs(2));
        add_scores(student, v, out, v.mass(3), |t| opd[t] - sft[t]);
    })?;
    Ok(grad)
}

/// Residual bias of the offline gradient: `||E_ref[f_Delta]||_2 <= G sigma_Delta`.
pub fn check_thm4_residual(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher_sft: &TabularPolicy,
    teacher_opd: &TabularPolicy,
    reference: &TabularPolicy,
) -> Result<TheoremReport> {
    let bias = expected_f_delta(oracle, student, teacher_sft, teacher_opd, reference)?;
    let g = score_bound_g(student);
    let sigma_delta = oracle.sigma_delta(teacher_sft, teacher_opd, reference)?;
    Ok(TheoremReport::bound(
        "thm4_residual_bias",
        bias.norm(),
        g * sigma_delta,
        context(g, None, Some(sigma_delta), None),
    ))
}

/// Where the online mismatch bound is asserted: every response in the
/// reference support has `w = pi_theta / pi_ref` in `[1 - delta, 1 + delta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm5Regime {
    pub delta: f64,
}

impl Default for Thm5Regime {
    fn default() -> Self {
        Self { delta: 0.05 }
    }
}

/// `||grad J_on(opd teacher) - grad J_on(sft teacher)||_2 <= G sigma_Delta`
/// with `sigma_Delta` measured under the reference. Outside the near-init
/// regime the report is descriptive.
pub fn check_thm5(
    oracle: &Oracle,
    student: &TabularPolicy,
    teacher_sft: &TabularPolicy,
    teacher_opd: &TabularPolicy,
    reference: &TabularPolicy,
    regime: Thm5Regime,
) -> Result<TheoremReport> {
    let mismatched = grad_j_on_exact(oracle, student, teacher_opd)?;
    let consistent = grad_j_on_exact(oracle, student, teacher_sft)?;
    let lhs = (&mismatched - &consistent).norm();
    let g = score_bound_g(student);
    let sigma_delta = oracle.sigma_delta(teacher_sft, teacher_opd, reference)?;
    let (mut w_min, mut w_max) = (f64::INFINITY, f64::NEG_INFINITY);
    oracle.walk(&[student, reference], |v| {
        let w = (v.seq_logprob(0) - v.seq_logprob(1)).exp();
        w_min = w_min.min(w);
        w_max = w_max.max(w);
    })?;
    let report = TheoremReport::bound(
        "thm5_online_mismatch",
        lhs,
        g * sigma_delta,
        context(
            g,
            None,
            Some(sigma_delta),
            Some(oracle.chi_squared(student, reference)?),
        ),
    )
    .extra("w_min", w_min)
    .extra("w_max", w_max);
    let inside = w_min >= 1.0 - regime.delta && w_max <= 1.0 + regime.delta;
    Ok(if inside {
        report
    } else {
        report.descriptive("outside stated regime")
    })
}
