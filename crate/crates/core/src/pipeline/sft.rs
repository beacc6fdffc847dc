use crate::error::{Error, Result};
use crate::policy::{GradientVector, InitSpec, TabularPolicy};

use super::data::SftDataset;

/// How the SFT stage fits the reference policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SftConfig {
    /// Full-batch gradient ascent on the mean log-likelihood.
    Gradient { lr: f64, steps: usize },
    /// Laplace-smoothed empirical conditionals over the student's contexts.
    ClosedForm { alpha: f64 },
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig::ClosedForm { alpha: 1.0 }
    }
}

fn check_data(base: &TabularPolicy, data: &SftDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (q, x) in &data.records {
        base.check_trajectory(&crate::Trajectory::new(*q, x.clone()))?;
    }
    Ok(())
}

/// Mean per-record `sum_t log pi(a_t|s_t)` over the dataset.
pub fn mean_log_likelihood(policy: &TabularPolicy, data: &SftDataset) -> f64 {
    let total: f64 = data
        .records
        .iter()
        .map(|(q, x)| {
            (0..policy.horizon())
                .map(|t| policy.token_logprob(*q, t, x))
                .sum::<f64>()
        })
        .sum();
    total / data.len() as f64
}

/// Maximum-likelihood fit of `base`'s table to teacher data.
pub fn sft_fit(base: &TabularPolicy, data: &SftDataset, config: SftConfig) -> Result<TabularPolicy> {
    Ok(sft_fit_traced(base, data, config)?.0)
}

/// Like [`sft_fit`], also returning the mean log-likelihood before the first
/// and after every gradient step (a single entry in closed form).
pub fn sft_fit_traced(base: &TabularPolicy, data: &SftDataset, config: SftConfig) -> Result<(TabularPolicy, Vec<f64>)> {
    check_data(base, data)?;
    let mut policy = TabularPolicy::new(
        crate::Vocab::new(base.vocab())?,
        base.horizon(),
        base.order(),
        base.prompt_set().clone(),
        InitSpec::CopyOf(base),
    )?;
    match config {
        SftConfig::ClosedForm { alpha } => {
            if !(alpha > 0.0) {
                return Err(Error::Config(format!(
                    "Laplace alpha {alpha} must be > 0 to keep full support"
                )));
            }
            let v = base.vocab();
            let shape = base.shape();
            let mut counts = vec![0.0f64; shape.num_params()];
            for (q, x) in &data.records {
                for t in 0..base.horizon() {
                    let g = shape.group(*q, t, x);
                    counts[g * v + x[t] as usize] += 1.0;
                }
            }
            let logits: Vec<f64> = counts
                .chunks(v)
                .flat_map(|c| {
                    let n: f64 = c.iter().sum();
                    c.iter()
                        .map(move |k| ((k + alpha) / (n + v as f64 * alpha)).ln())
                        .collect::<Vec<_>>()
                })
                .collect();
            policy.set_logits(logits)?;
            let ll = mean_log_likelihood(&policy, data);
            Ok((policy, vec![ll]))
        }
        SftConfig::Gradient { lr, steps } => {
            if !(lr > 0.0) {
                return Err(Error::Config(format!("SFT learning rate {lr} must be > 0")));
            }
            let mut trace = vec![mean_log_likelihood(&policy, data)];
            let n = data.len() as f64;
            for _ in 0..steps {
                let mut grad = GradientVector::zeros(policy.shape());
                let out = grad.values_mut();
                for (q, x) in &data.records {
                    for t in 0..policy.horizon() {
                        let g = policy.shape().group(*q, t, x);
                        policy.add_token_score(out, g, x[t] as usize, 1.0 / n);
                    }
                }
                policy.ascend(&grad, lr);
                trace.push(mean_log_likelihood(&policy, data));
            }
            Ok((policy, trace))
        }
    }
}
