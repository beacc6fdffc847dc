use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::gradient::GradientVector;
use super::prompts::PromptSet;
use super::shape::{PolicyShape, Vocab};
use super::trajectory::Trajectory;

/// How to fill a fresh logit table.
#[derive(Debug, Clone, Copy)]
pub enum InitSpec<'a> {
    /// All logits zero: every conditional is exactly `1/V`.
    Uniform,
    /// Independent `N(0, scale^2)` logits drawn from `seed`.
    SeededRandom { scale: f64, seed: u64 },
    /// Copy the logits of a policy with the same shape.
    CopyOf(&'a TabularPolicy),
}

/// Order-`k` softmax autoregressive policy.
///
/// Conditional log-probabilities are cached next to the logits and refreshed
/// on every mutation.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    shape: PolicyShape,
    prompts: PromptSet,
    logits: Vec<f64>,
    logprobs: Vec<f64>,
}

impl PartialEq for TabularPolicy {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.prompts == other.prompts && self.logits == other.logits
    }
}

impl TabularPolicy {
    pub fn new(vocab: Vocab, horizon: usize, order: usize, prompts: PromptSet, init: InitSpec<'_>) -> Result<Self> {
        let shape = PolicyShape::new(vocab, horizon, order, prompts.len())?;
        let logits = match init {
            InitSpec::Uniform => vec![0.0; shape.num_params()],
            InitSpec::SeededRandom { scale, seed } => {
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(Error::Config(format!("init scale {scale} must be finite and >= 0")));
                }
                let mut rng = SeededRng::new(seed);
                (0..shape.num_params()).map(|_| scale * rng.normal()).collect()
            }
            InitSpec::CopyOf(source) => {
                if source.shape != shape || source.prompts != prompts {
                    return Err(Error::Incompatible(
                        "copy-of source has a different shape or prompt set".into(),
                    ));
                }
                source.logits.clone()
            }
        };
        Self::from_logits(shape, prompts, logits)
    }

    pub fn from_logits(shape: PolicyShape, prompts: PromptSet, logits: Vec<f64>) -> Result<Self> {
        if shape.prompts() != prompts.len() {
            return Err(Error::Incompatible(format!(
                "shape has {} prompts, prompt set has {}",
                shape.prompts(),
                prompts.len()
            )));
        }
        if logits.len() != shape.num_params() {
            return Err(Error::Incompatible(format!(
                "expected {} logits, got {}",
                shape.num_params(),
                logits.len()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("logits must be finite".into()));
        }
        let mut policy = Self {
            logprobs: vec![0.0; logits.len()],
            shape,
            prompts,
            logits,
        };
        policy.refresh();
        Ok(policy)
    }

    /// Builds a policy whose conditional at every group is produced by
    /// `probs(group_key)`; probabilities must be strictly positive.
    pub fn from_conditionals(
        shape: PolicyShape,
        prompts: PromptSet,
        mut probs: impl FnMut(&super::GroupKey) -> Vec<f64>,
    ) -> Result<Self> {
        let v = shape.vocab();
        let mut logits = Vec::with_capacity(shape.num_params());
        for g in 0..shape.num_groups() {
            let p = probs(&shape.group_key(g));
            if p.len() != v || p.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::Config(format!(
                    "conditional for group {g} must have {v} positive entries"
                )));
            }
            logits.extend(p.iter().map(|x| x.ln()));
        }
        Self::from_logits(shape, prompts, logits)
    }

    fn refresh(&mut self) {
        let v = self.shape.vocab();
        for (lg, lp) in self.logits.chunks(v).zip(self.logprobs.chunks_mut(v)) {
            let max = lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lg.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for (o, l) in lp.iter_mut().zip(lg) {
                *o = l - lse;
            }
        }
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn prompt_set(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn vocab(&self) -> usize {
        self.shape.vocab()
    }

    pub fn horizon(&self) -> usize {
        self.shape.horizon()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn num_params(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn set_logits(&mut self, logits: Vec<f64>) -> Result<()> {
        if logits.len() != self.logits.len() {
            return Err(Error::Incompatible("logit count changed".into()));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("logits must be finite".into()));
        }
        self.logits = logits;
        self.refresh();
        Ok(())
    }

    /// `theta += step * direction`.
    pub fn ascend(&mut self, direction: &GradientVector, step: f64) {
        assert_eq!(direction.shape(), &self.shape, "layout mismatch");
        for (l, d) in self.logits.iter_mut().zip(direction.values()) {
            *l += step * d;
        }
        self.refresh();
    }

    /// Log-probabilities of the conditional at `group`.
    #[inline]
    pub fn group_logprobs(&self, group: usize) -> &[f64] {
        let v = self.shape.vocab();
        &self.logprobs[group * v..(group + 1) * v]
    }

    pub fn group_probs(&self, group: usize) -> Vec<f64> {
        self.group_logprobs(group).iter().map(|l| l.exp()).collect()
    }

    /// `log pi(action | s_t)` for the prefix `tokens[..t]`.
    #[inline]
    pub fn token_logprob(&self, prompt: usize, t: usize, tokens: &[u32]) -> f64 {
        let g = self.shape.group(prompt, t, tokens);
        self.group_logprobs(g)[tokens[t] as usize]
    }

    /// Per-token log-probs of an already validated token string.
    pub fn token_logprobs_into(&self, prompt: usize, tokens: &[u32], out: &mut [f64]) {
        for (t, slot) in out.iter_mut().enumerate().take(self.shape.horizon()) {
            *slot = self.token_logprob(prompt, t, tokens);
        }
    }

    pub fn token_logprobs(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        self.check_trajectory(traj)?;
        let mut out = vec![0.0; self.horizon()];
        self.token_logprobs_into(traj.prompt_id, &traj.tokens, &mut out);
        Ok(out)
    }

    pub fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        self.prompts.check_id(traj.prompt_id)?;
        if traj.tokens.len() != self.horizon() {
            return Err(Error::LengthMismatch {
                expected: self.horizon(),
                got: traj.tokens.len(),
            });
        }
        let v = self.vocab();
        if let Some(&token) = traj.tokens.iter().find(|&&a| a as usize >= v) {
            return Err(Error::TokenOutOfRange { token, vocab: v });
        }
        Ok(())
    }

    /// `sum_t log pi(a_t | s_t)`.
    pub fn seq_logprob(&self, traj: &Trajectory) -> Result<f64> {
        self.check_trajectory(traj)?;
        Ok((0..self.horizon())
            .map(|t| self.token_logprob(traj.prompt_id, t, &traj.tokens))
            .sum())
    }

    /// Draws a response autoregressively; one uniform variate per token.
    pub fn sample_trajectory(&self, prompt: usize, rng: &mut SeededRng) -> Result<Trajectory> {
        self.prompts.check_id(prompt)?;
        let mut tokens = vec![0u32; self.horizon()];
        let mut cdf = vec![0.0; self.vocab()];
        for t in 0..self.horizon() {
            let g = self.shape.group(prompt, t, &tokens);
            let mut acc = 0.0;
            for (c, lp) in cdf.iter_mut().zip(self.group_logprobs(g)) {
                acc += lp.exp();
                *c = acc;
            }
            tokens[t] = rng.categorical_cdf(&cdf) as u32;
        }
        Ok(Trajectory::new(prompt, tokens))
    }

    /// Adds `coef * grad log pi(action | group)` into `out`.
    #[inline]
    pub fn add_token_score(&self, out: &mut [f64], group: usize, action: usize, coef: f64) {
        let v = self.vocab();
        let lp = self.group_logprobs(group);
        let block = &mut out[group * v..(group + 1) * v];
        for (b, l) in block.iter_mut().zip(lp) {
            *b -= coef * l.exp();
        }
        block[action] += coef;
    }

    /// `sum_t grad log pi(a_t | s_t)` with respect to this policy's logits.
    pub fn score_gradient(&self, traj: &Trajectory) -> Result<GradientVector> {
        self.check_trajectory(traj)?;
        let mut grad = GradientVector::zeros(&self.shape);
        for t in 0..self.horizon() {
            let g = self.shape.group(traj.prompt_id, t, &traj.tokens);
            self.add_token_score(grad.values_mut(), g, traj.tokens[t] as usize, 1.0);
        }
        Ok(grad)
    }

    /// Same response space and prompt distribution (orders may differ).
    pub fn is_compatible(&self, other: &TabularPolicy) -> bool {
        self.shape.same_space(&other.shape) && self.prompts == other.prompts
    }

    pub fn ensure_compatible(&self, other: &TabularPolicy) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::Incompatible(
                "policies differ in vocabulary, horizon or prompt set".into(),
            ))
        }
    }

    /// Copies `target`'s conditionals into this policy wherever this policy's
    /// context determines the target's context (target order <= own order).
    /// With full capacity this reproduces `target` exactly.
    pub fn match_conditionals(&mut self, target: &TabularPolicy) -> Result<()> {
        self.ensure_compatible(target)?;
        if target.order() > self.order() {
            return Err(Error::Incompatible(format!(
                "target order {} exceeds own order {}",
                target.order(),
                self.order()
            )));
        }
        let v = self.vocab();
        let mut prefix = vec![0u32; self.horizon()];
        let mut logits = self.logits.clone();
        for g in 0..self.shape.num_groups() {
            let key = self.shape.group_key(g);
            // rebuild a prefix consistent with the key; unseen positions stay 0
            prefix.iter_mut().for_each(|p| *p = 0);
            let m = key.position.min(self.order());
            for (i, slot) in key.context[self.order() - m..].iter().enumerate() {
                if let super::ContextSlot::Token(tok) = slot {
                    prefix[key.position - m + i] = *tok;
                }
            }
            let tg = target.shape.group(key.prompt, key.position, &prefix);
            logits[g * v..(g + 1) * v].copy_from_slice(target.group_logprobs(tg));
        }
        self.set_logits(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(v: usize, t: usize, k: usize, init: InitSpec<'_>) -> TabularPolicy {
        TabularPolicy::new(Vocab::new(v).unwrap(), t, k, PromptSet::uniform(1).unwrap(), init).unwrap()
    }

    fn two_point(p0: f64) -> TabularPolicy {
        let shape = PolicyShape::new(Vocab::new(2).unwrap(), 1, 0, 1).unwrap();
        TabularPolicy::from_conditionals(shape, PromptSet::uniform(1).unwrap(), |_| vec![p0, 1.0 - p0]).unwrap()
    }

    #[test]
    fn uniform_init_is_exactly_uniform() {
        let p = policy(2, 2, 1, InitSpec::Uniform);
        for g in 0..p.shape().num_groups() {
            assert_eq!(p.group_probs(g), vec![0.5, 0.5]);
        }
        let p = policy(3, 1, 0, InitSpec::Uniform);
        for x in p.group_probs(0) {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_init_is_bit_reproducible() {
        let a = policy(2, 2, 1, InitSpec::SeededRandom { scale: 1.0, seed: 7 });
        let b = policy(2, 2, 1, InitSpec::SeededRandom { scale: 1.0, seed: 7 });
        let bits = |p: &TabularPolicy| p.logits().iter().map(|l| l.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = policy(2, 2, 1, InitSpec::SeededRandom { scale: 1.0, seed: 8 });
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn copy_of_requires_same_shape() {
        let a = policy(2, 2, 1, InitSpec::SeededRandom { scale: 1.0, seed: 1 });
        let b = policy(2, 2, 1, InitSpec::CopyOf(&a));
        assert_eq!(a, b);
        let err = TabularPolicy::new(
            Vocab::new(2).unwrap(),
            2,
            0,
            PromptSet::uniform(1).unwrap(),
            InitSpec::CopyOf(&a),
        );
        assert!(matches!(err, Err(Error::Incompatible(_))));
    }

    #[test]
    fn order_must_fit_horizon() {
        let err = TabularPolicy::new(
            Vocab::new(2).unwrap(),
            2,
            2,
            PromptSet::uniform(1).unwrap(),
            InitSpec::Uniform,
        );
        assert!(matches!(err, Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn conditionals_normalized() {
        let p = policy(3, 3, 1, InitSpec::SeededRandom { scale: 3.0, seed: 2 });
        for g in 0..p.shape().num_groups() {
            let s: f64 = p.group_probs(g).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.group_probs(g).iter().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn seq_logprob_uniform() {
        let p = policy(2, 3, 1, InitSpec::Uniform);
        let lp = p.seq_logprob(&Trajectory::new(0, vec![1, 0, 1])).unwrap();
        assert!((lp - 3.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((lp + 2.079_441_541_679_836).abs() < 1e-12);
    }

    #[test]
    fn seq_logprob_two_point() {
        let p = two_point(0.8);
        let lp = p.seq_logprob(&Trajectory::new(0, vec![0])).unwrap();
        assert!((lp - 0.8f64.ln()).abs() < 1e-15);
        assert!((lp + 0.223_143_551_314_209_7).abs() < 1e-12);
    }

    #[test]
    fn seq_logprob_errors() {
        let p = policy(2, 2, 1, InitSpec::Uniform);
        assert!(matches!(
            p.seq_logprob(&Trajectory::new(0, vec![0, 2])),
            Err(Error::TokenOutOfRange { token: 2, .. })
        ));
        assert!(matches!(
            p.seq_logprob(&Trajectory::new(0, vec![0])),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            p.seq_logprob(&Trajectory::new(3, vec![0, 0])),
            Err(Error::PromptOutOfRange { .. })
        ));
    }

    #[test]
    fn uniform_score_block() {
        let p = policy(2, 1, 0, InitSpec::Uniform);
        let g = p.score_gradient(&Trajectory::new(0, vec![0])).unwrap();
        assert_eq!(g.values(), &[0.5, -0.5]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = policy(3, 3, 2, InitSpec::SeededRandom { scale: 1.0, seed: 5 });
        let mut r1 = SeededRng::new(11);
        let mut r2 = SeededRng::new(11);
        for _ in 0..50 {
            assert_eq!(
                p.sample_trajectory(0, &mut r1).unwrap(),
                p.sample_trajectory(0, &mut r2).unwrap()
            );
        }
        assert_eq!(r1.draws(), 150);
    }

    #[test]
    fn near_deterministic_sampling() {
        let shape = PolicyShape::new(Vocab::new(2).unwrap(), 3, 2, 1).unwrap();
        let p = TabularPolicy::from_conditionals(shape, PromptSet::uniform(1).unwrap(), |_| vec![1.0 - 1e-15, 1e-15])
            .unwrap();
        let mut rng = SeededRng::new(0);
        let n = 10_000;
        let mut zeros = 0usize;
        for _ in 0..n {
            let traj = p.sample_trajectory(0, &mut rng).unwrap();
            zeros += traj.tokens.iter().filter(|&&a| a == 0).count();
        }
        assert!(zeros as f64 / (3 * n) as f64 >= 0.999);
    }

    #[test]
    fn uniform_sampling_frequency() {
        // 10^5 Bernoulli(1/2): sd = 0.0016, so 0.01 is > 6 sd
        let p = policy(2, 1, 0, InitSpec::Uniform);
        let mut rng = SeededRng::new(123);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| p.sample_trajectory(0, &mut rng).unwrap().tokens[0] == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn match_conditionals_rejects_richer_target() {
        let mut low = policy(2, 2, 0, InitSpec::Uniform);
        let high = policy(2, 2, 1, InitSpec::SeededRandom { scale: 1.0, seed: 3 });
        assert!(low.match_conditionals(&high).is_err());
        let mut full = policy(2, 2, 1, InitSpec::Uniform);
        full.match_conditionals(&low).unwrap();
    }
}
