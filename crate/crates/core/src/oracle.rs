//! Exact expectations by exhaustive enumeration of the `V^T` response space.
//!
//! All quantities are marginalized over the prompt distribution: an
//! expectation is `sum_q p(q) sum_x pi(x|q) f(q, x)`. Sums run in a fixed
//! lexicographic order, so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::policy::{PolicyShape, TabularPolicy};

/// Default limit on `V^T`.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// One enumerated response together with every participating policy's
/// per-token log-probs and visited groups.
pub struct Visit<'a> {
    pub prompt: usize,
    pub prompt_weight: f64,
    pub tokens: &'a [u32],
    horizon: usize,
    logprobs: &'a [f64],
    seq_logprobs: &'a [f64],
    groups: &'a [usize],
}

impl Visit<'_> {
    /// Per-token log-probs under policy `i` (index into the walked slice).
    pub fn token_logprobs(&self, i: usize) -> &[f64] {
        &self.logprobs[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn seq_logprob(&self, i: usize) -> f64 {
        self.seq_logprobs[i]
    }

    /// Groups visited by policy `i` at each position.
    pub fn groups(&self, i: usize) -> &[usize] {
        &self.groups[i * self.horizon..(i + 1) * self.horizon]
    }

    /// `p(q) * pi_i(x | q)`.
    pub fn mass(&self, i: usize) -> f64 {
        self.prompt_weight * self.seq_logprobs[i].exp()
    }
}

/// Enumeration engine with a configurable size limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Oracle {
    cap: u64,
}

impl Default for Oracle {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl Oracle {
    pub fn with_cap(cap: u64) -> Self {
        Self { cap }
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn check_feasible(&self, shape: &PolicyShape) -> Result<()> {
        let sequences = shape.sequence_count();
        if sequences > self.cap as u128 {
            return Err(Error::EnumerationCap {
                vocab: shape.vocab(),
                horizon: shape.horizon(),
                sequences,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// Visits every `(prompt, response)` pair once, in lexicographic order.
    ///
    /// All policies must share vocabulary, horizon and prompt set; their
    /// context orders may differ.
    pub fn walk(&self, policies: &[&TabularPolicy], mut visit: impl FnMut(&Visit<'_>)) -> Result<()> {
        let first = *policies
            .first()
            .ok_or_else(|| Error::Incompatible("no policies to enumerate".into()))?;
        for p in &policies[1..] {
            first.ensure_compatible(p)?;
        }
        self.check_feasible(first.shape())?;
        let horizon = first.horizon();
        let vocab = first.vocab() as u32;
        let n = policies.len();
        let mut tokens = vec![0u32; horizon];
        let mut logprobs = vec![0.0; n * horizon];
        let mut groups = vec![0usize; n * horizon];
        let mut seq = vec![0.0; n];
        let prompt_set = first.prompt_set();
        for (prompt, &prompt_weight) in prompt_set.weights().iter().enumerate() {
            tokens.iter_mut().for_each(|a| *a = 0);
            loop {
                for (i, p) in policies.iter().enumerate() {
                    let lp = &mut logprobs[i * horizon..(i + 1) * horizon];
                    let gs = &mut groups[i * horizon..(i + 1) * horizon];
                    p.shape().groups_into(prompt, &tokens, gs);
                    let mut total = 0.0;
                    for t in 0..horizon {
                        lp[t] = p.group_logprobs(gs[t])[tokens[t] as usize];
                        total += lp[t];
                    }
                    seq[i] = total;
                }
                visit(&Visit {
                    prompt,
                    prompt_weight,
                    tokens: &tokens,
                    horizon,
                    logprobs: &logprobs,
                    seq_logprobs: &seq,
                    groups: &groups,
                });
                // odometer, last position fastest
                let mut t = horizon;
                let exhausted = loop {
                    if t == 0 {
                        break true;
                    }
                    t -= 1;
                    tokens[t] += 1;
                    if tokens[t] < vocab {
                        break false;
                    }
                    tokens[t] = 0;
                };
                if exhausted {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Complete table of responses to `prompt_id` weighted by `policy`.
    pub fn enumerate(&self, policy: &TabularPolicy, prompt_id: usize) -> Result<SequenceTable> {
        policy.prompt_set().check_id(prompt_id)?;
        let mut entries = Vec::new();
        self.walk(&[policy], |v| {
            if v.prompt == prompt_id {
                entries.push((v.tokens.to_vec(), v.seq_logprob(0)));
            }
        })?;
        Ok(SequenceTable {
            prompt_id,
            prompt_weight: policy.prompt_set().weight(prompt_id),
            entries,
        })
    }

    /// All per-prompt tables of `policy`.
    pub fn enumerate_all(&self, policy: &TabularPolicy) -> Result<Vec<SequenceTable>> {
        (0..policy.prompt_set().len())
            .map(|q| self.enumerate(policy, q))
            .collect()
    }

    /// `E_{q~p, x~measure}[f(q, x)]`.
    pub fn expectation(&self, measure: &TabularPolicy, mut f: impl FnMut(usize, &[u32]) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        self.walk(&[measure], |v| acc += v.mass(0) * f(v.prompt, v.tokens))?;
        Ok(acc)
    }

    /// `chi^2(a || b) = E_b[(pi_a / pi_b)^2] - 1`.
    pub fn chi_squared(&self, a: &TabularPolicy, b: &TabularPolicy) -> Result<f64> {
        let mut acc = 0.0;
        self.walk(&[a, b], |v| {
            acc += v.prompt_weight * (2.0 * v.seq_logprob(0) - v.seq_logprob(1)).exp();
        })?;
        Ok(acc - 1.0)
    }

    /// `KL(a || b) = E_a[log pi_a - log pi_b]` in nats.
    pub fn kl(&self, a: &TabularPolicy, b: &TabularPolicy) -> Result<f64> {
        let mut acc = 0.0;
        self.walk(&[a, b], |v| {
            acc += v.mass(0) * (v.seq_logprob(0) - v.seq_logprob(1));
        })?;
        Ok(acc)
    }

    /// `sqrt(E_ref[(sum_t A_t)^2])` with `A_t = log pi_T - log pi_theta`.
    pub fn sigma_a(&self, student: &TabularPolicy, teacher: &TabularPolicy, reference: &TabularPolicy) -> Result<f64> {
        self.rms_log_ratio(teacher, student, reference)
    }

    /// `sqrt(E_ref[(sum_t Delta_t)^2])` with
    /// `Delta_t = log pi_T^SFT - log pi_T^OPD`.
    pub fn sigma_delta(
        &self,
        teacher_sft: &TabularPolicy,
        teacher_opd: &TabularPolicy,
        reference: &TabularPolicy,
    ) -> Result<f64> {
        self.rms_log_ratio(teacher_sft, teacher_opd, reference)
    }

    fn rms_log_ratio(&self, num: &TabularPolicy, den: &TabularPolicy, measure: &TabularPolicy) -> Result<f64> {
        let mut acc = 0.0;
        self.walk(&[measure, num, den], |v| {
            let r = v.seq_logprob(1) - v.seq_logprob(2);
            acc += v.mass(0) * r * r;
        })?;
        Ok(acc.sqrt())
    }
}

/// Largest per-token score norm `||grad log pi(a|s)||_2` over every group
/// and action of `policy`.
///
/// For a softmax group with probabilities `p`, the score of action `a` is
/// `e_a - p`, whose squared norm is `1 - 2 p_a + sum_b p_b^2`. The value never
/// exceeds `sqrt(2)`.
pub fn score_bound_g(policy: &TabularPolicy) -> f64 {
    let mut best = 0.0f64;
    for g in 0..policy.shape().num_groups() {
        let p = policy.group_probs(g);
        let sq: f64 = p.iter().map(|x| x * x).sum();
        let p_min = p.iter().cloned().fold(f64::INFINITY, f64::min);
        best = best.max((1.0 - 2.0 * p_min + sq).max(0.0));
    }
    best.sqrt()
}

/// Responses to one prompt with their log-probabilities under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTable {
    pub prompt_id: usize,
    pub prompt_weight: f64,
    pub entries: Vec<(Vec<u32>, f64)>,
}

impl SequenceTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, lp)| lp.exp()).sum()
    }

    /// `sum_x pi(x|q) f(x)` for this table's prompt.
    pub fn expectation(&self, mut f: impl FnMut(&[u32]) -> f64) -> f64 {
        self.entries.iter().map(|(x, lp)| lp.exp() * f(x)).sum()
    }
}

/// Prompt-marginalized expectation over a set of per-prompt tables.
pub fn exact_expectation(tables: &[SequenceTable], mut f: impl FnMut(usize, &[u32]) -> f64) -> f64 {
    tables
        .iter()
        .map(|tab| tab.prompt_weight * tab.expectation(|x| f(tab.prompt_id, x)))
        .sum()
}
